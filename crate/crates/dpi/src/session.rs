use std::fmt;
use std::str::FromStr;

use spotex_core::{DevicePoint, Fingerprint};

pub const SESSION_HEADER: &str = "x-spotex-session";
pub const MIN_SESSION_LEN: usize = 16;
pub const MAX_SESSION_LEN: usize = 128;

/// An opaque session token of 16 to 128 URL-safe characters.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SessionId(String);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("session token must be {MIN_SESSION_LEN} to {MAX_SESSION_LEN} characters of [A-Za-z0-9_-]")]
pub struct InvalidSessionId;

impl FromStr for SessionId {
    type Err = InvalidSessionId;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let ok = (MIN_SESSION_LEN..=MAX_SESSION_LEN).contains(&s.len())
            && s.bytes()
                .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-');
        if ok {
            Ok(SessionId(s.to_string()))
        } else {
            Err(InvalidSessionId)
        }
    }
}

impl SessionId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Session {
    pub fingerprint: Fingerprint,
    pub sim_position: Option<DevicePoint>,
    pub last_scan_at: Option<u64>,
    pub last_seen: u64,
}
