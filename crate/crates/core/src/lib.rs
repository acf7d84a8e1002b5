//! Coordinate-free location services: content keyed to network proximity.
//!
//! - [`fingerprint`]: network observations and the per-device fingerprint.
//! - [`rules`]: the SpotEx rule language, its evaluator and page rendering.
//! - [`venue`]: a deterministic indoor radio model producing fingerprints.

pub mod clock;
pub mod fingerprint;
pub mod rules;
pub mod venue;

pub use clock::MinuteOfDay;
pub use fingerprint::{
    normalize_mac, Fingerprint, FingerprintError, MacAddr, NetworkId, NetworkKind,
    NetworkObservation, NetworkSelector,
};
pub use rules::{
    lint_ruleset, parse_ruleset, serialize_ruleset, CmpOp, Diagnostic, FiredResult, PageMode,
    Predicate, RenderError, Rule, RuleError, RuleSet, Severity, Snippet, ValidationError,
};
pub use venue::{
    load_path, load_venue, predict_rssi, AccessPointPlacement, DevicePoint, PathLossParams, Venue,
    VenueError,
};
