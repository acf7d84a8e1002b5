//! The local data server. Serves session fingerprints as JSON or JSONP,
//! evaluates SpotEx rules against them and renders content pages.
//!
//! Fingerprints come either from devices posting their own scans (push
//! mode) or from the venue simulator (sim mode).

use std::future::Future;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use spotex_core::{RuleError, VenueError};
use thiserror::Error;

pub mod api;
pub mod clock;
pub mod config;
pub mod page;
pub mod session;
pub mod state;

pub use api::{router, ApiError};
pub use clock::{Clock, ManualClock, SystemClock};
pub use config::{Mode, ServerConfig};
pub use session::{SessionId, SESSION_HEADER};
pub use state::AppState;

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("{0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Rules { path: PathBuf, source: RuleError },
    #[error("{}: {source}", path.display())]
    Venue { path: PathBuf, source: VenueError },
}

/// Serves until `shutdown` resolves, expiring idle sessions meanwhile.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: Arc<AppState>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let sweeper = {
        let state = Arc::clone(&state);
        let period = Duration::from_millis(state.config().session_ttl_ms.max(1000));
        tokio::spawn(async move {
            let mut ticker = tokio::time::interval(period);
            loop {
                ticker.tick().await;
                let dropped = state.expire_idle_sessions();
                if dropped > 0 {
                    tracing::debug!(dropped, "expired idle sessions");
                }
            }
        })
    };
    let result = axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await;
    sweeper.abort();
    result
}
