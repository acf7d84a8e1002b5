//! Forward HTTP proxy that tags each request with the device's current
//! network fingerprint.
//!
//! Requests carrying an `X-Spotex-Session` token get an
//! `X-Network-Fingerprint` header holding the session's fingerprint as
//! fetched from the data server. Everything else passes through untouched.

pub mod forward;
pub mod header;

pub use forward::{serve, Proxy, ProxyConfig, ProxyError};
pub use header::{
    decode_fingerprint_header, encode_fingerprint_header, HeaderError, FINGERPRINT_HEADER,
    MAX_HEADER_BYTES, SESSION_HEADER,
};
