use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use spotex_core::{Fingerprint, FingerprintError, NetworkObservation};
use thiserror::Error;

/// Request header carrying the fingerprint upstream.
pub const FINGERPRINT_HEADER: &str = "X-Network-Fingerprint";
/// Request header identifying the device session.
pub const SESSION_HEADER: &str = "X-Spotex-Session";
/// Upper bound on the encoded header value.
pub const MAX_HEADER_BYTES: usize = 8 * 1024;

#[derive(Debug, Error)]
pub enum HeaderError {
    #[error("header is not valid base64: {0}")]
    Base64(#[from] base64::DecodeError),
    #[error("header does not decode to UTF-8 text")]
    Utf8(#[from] std::string::FromUtf8Error),
    #[error(transparent)]
    Fingerprint(#[from] FingerprintError),
}

/// Base64 (standard alphabet, padded) of the canonical fingerprint JSON.
///
/// When the full encoding exceeds [`MAX_HEADER_BYTES`] only the strongest
/// observations that fit are kept; equal RSSI goes by canonical order.
pub fn encode_fingerprint_header(fp: &Fingerprint) -> String {
    let full = STANDARD.encode(fp.to_canonical_json());
    if full.len() <= MAX_HEADER_BYTES {
        return full;
    }
    let mut by_strength: Vec<&NetworkObservation> = fp.iter().collect();
    // iteration is canonical and the sort is stable
    by_strength.sort_by_key(|o| std::cmp::Reverse(o.rssi()));
    let encode_top = |k: usize| {
        let top: Fingerprint = by_strength[..k].iter().map(|o| (*o).clone()).collect();
        STANDARD.encode(top.to_canonical_json())
    };
    // encoded length grows with k; find the largest k that fits
    let (mut lo, mut hi) = (0, by_strength.len());
    while lo < hi {
        let mid = (lo + hi).div_ceil(2);
        if encode_top(mid).len() <= MAX_HEADER_BYTES {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    encode_top(lo)
}

pub fn decode_fingerprint_header(value: &str) -> Result<Fingerprint, HeaderError> {
    let json = String::from_utf8(STANDARD.decode(value.trim())?)?;
    Ok(Fingerprint::from_json(&json, 0)?)
}
