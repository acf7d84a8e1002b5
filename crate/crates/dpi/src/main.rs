use std::io::Write;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;
use spotex_core::fingerprint::DEFAULT_SESSION_TTL_MS;
use spotex_core::{
    lint_ruleset, load_path, load_venue, parse_ruleset, Fingerprint, MinuteOfDay, RuleSet, Venue,
};
use spotex_dpi::config::DEFAULT_PORT;
use spotex_dpi::{AppState, Mode, ServerConfig, SystemClock};

#[derive(Parser)]
#[command(
    name = "spotex",
    version,
    about = "Proximity content server and rule tools"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP server.
    Serve {
        #[arg(long)]
        rules: PathBuf,
        #[arg(long)]
        venue: Option<PathBuf>,
        #[arg(long, env = "SPOTEX_PORT", default_value_t = DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value_t = IpAddr::V4(Ipv4Addr::LOCALHOST))]
        bind: IpAddr,
        /// sim or push; defaults to sim when a venue is given.
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_SESSION_TTL_MS)]
        session_ttl_ms: u64,
        #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
        tz_offset_minutes: i32,
        /// Browser shim served at /shim.js.
        #[arg(long)]
        shim: Option<PathBuf>,
    },
    /// Evaluate rules against a fingerprint file and print the result.
    Eval {
        #[arg(long)]
        rules: PathBuf,
        #[arg(long)]
        fingerprint: PathBuf,
        /// Local time HH:MM; defaults to the current time.
        #[arg(long)]
        now: Option<MinuteOfDay>,
        #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
        tz_offset_minutes: i32,
    },
    /// Report unreachable rules, orphan snippets and unknown selectors.
    Lint {
        #[arg(long)]
        rules: PathBuf,
        #[arg(long)]
        venue: Option<PathBuf>,
    },
    /// Walk a simulated device along a path and print what fires at each step.
    Walk {
        #[arg(long)]
        rules: PathBuf,
        #[arg(long)]
        venue: PathBuf,
        #[arg(long)]
        path: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
        tz_offset_minutes: i32,
    },
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn rules(path: &Path) -> Result<RuleSet> {
    parse_ruleset(&read(path)?).with_context(|| format!("in {}", path.display()))
}

fn venue(path: &Path) -> Result<Venue> {
    load_venue(&read(path)?).with_context(|| format!("in {}", path.display()))
}

fn now_ms() -> u64 {
    use spotex_dpi::Clock;
    SystemClock.now_ms()
}

#[tokio::main]
async fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let mut out = std::io::stdout().lock();
    match cli.command {
        Command::Serve {
            rules,
            venue,
            port,
            bind,
            mode,
            seed,
            session_ttl_ms,
            tz_offset_minutes,
            shim,
        } => {
            let mode = mode.unwrap_or(if venue.is_some() {
                Mode::Sim
            } else {
                Mode::Push
            });
            let config = ServerConfig {
                port,
                mode,
                rules_path: rules,
                venue_path: venue,
                session_ttl_ms,
                timezone_offset_minutes: tz_offset_minutes,
                seed,
                shim_path: shim,
            };
            let state = Arc::new(AppState::load(config, Arc::new(SystemClock))?);
            let addr = SocketAddr::new(bind, port);
            let listener = tokio::net::TcpListener::bind(addr)
                .await
                .with_context(|| format!("binding {addr}"))?;
            tracing::info!(%addr, %mode, "serving");
            spotex_dpi::serve(listener, state, async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        }
        Command::Eval {
            rules: rules_path,
            fingerprint,
            now,
            tz_offset_minutes,
        } => {
            let rs = rules(&rules_path)?;
            let fp = Fingerprint::from_json(&read(&fingerprint)?, 0)
                .with_context(|| format!("in {}", fingerprint.display()))?;
            let minute =
                now.unwrap_or_else(|| MinuteOfDay::from_epoch_ms(now_ms(), tz_offset_minutes));
            writeln!(
                out,
                "{}",
                serde_json::to_string(&rs.fire_rules(&fp, minute))?
            )?;
        }
        Command::Lint {
            rules: rules_path,
            venue: venue_path,
        } => {
            let rs = rules(&rules_path)?;
            let venue = venue_path.as_deref().map(venue).transpose()?;
            for diagnostic in lint_ruleset(&rs, venue.as_ref()) {
                writeln!(out, "{}", serde_json::to_string(&diagnostic)?)?;
            }
        }
        Command::Walk {
            rules: rules_path,
            venue: venue_path,
            path,
            seed,
            tz_offset_minutes,
        } => {
            let rs = rules(&rules_path)?;
            let venue = venue(&venue_path)?;
            let steps =
                load_path(&read(&path)?).with_context(|| format!("in {}", path.display()))?;
            let scans = venue.walk(&steps, seed)?;
            for ((_, t), fp) in steps.iter().zip(&scans) {
                let result = rs.fire_rules(fp, MinuteOfDay::from_epoch_ms(*t, tz_offset_minutes));
                writeln!(out, "{}", json!({ "t": t, "fired": result.fired_rule_ids }))?;
            }
        }
    }
    Ok(())
}
