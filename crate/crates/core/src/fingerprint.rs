//! Network observations and fingerprints.
//!
//! A [`Fingerprint`] is the set of network nodes a device currently sees. It
//! is used as a lookup key for content, in place of coordinates.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// SSIDs are limited to 32 bytes; Bluetooth names share the limit.
pub const MAX_SSID_BYTES: usize = 32;
pub const MIN_RSSI_DBM: i32 = -120;
pub const MAX_RSSI_DBM: i32 = 0;
/// Default lifetime of an observation inside a session.
pub const DEFAULT_SESSION_TTL_MS: u64 = 30_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FingerprintError {
    #[error("malformed MAC address {0:?}")]
    MalformedMac(String),
    #[error("SSID is {0} bytes, limit is {MAX_SSID_BYTES}")]
    SsidTooLong(usize),
    #[error("RSSI {0} dBm outside [{MIN_RSSI_DBM}, {MAX_RSSI_DBM}]")]
    RssiOutOfRange(i64),
    #[error("invalid fingerprint JSON: {0}")]
    Json(String),
}

/// Rewrites a MAC address into the canonical `AA:BB:CC:DD:EE:FF` form.
///
/// Colon, dash and dot separators are stripped; what remains must be exactly
/// twelve hex digits.
pub fn normalize_mac(raw: &str) -> Result<String, FingerprintError> {
    MacAddr::from_str(raw).map(|mac| mac.to_string())
}

/// A hardware address. Orders the same way as its canonical text form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MacAddr([u8; 6]);

impl MacAddr {
    pub const fn new(octets: [u8; 6]) -> Self {
        MacAddr(octets)
    }

    pub fn octets(&self) -> [u8; 6] {
        self.0
    }
}

impl FromStr for MacAddr {
    type Err = FingerprintError;

    fn from_str(raw: &str) -> Result<Self, Self::Err> {
        let malformed = || FingerprintError::MalformedMac(raw.to_string());
        let mut nibbles = Vec::with_capacity(12);
        for c in raw.chars() {
            match c {
                ':' | '-' | '.' => continue,
                _ => nibbles.push(c.to_digit(16).ok_or_else(malformed)? as u8),
            }
        }
        if nibbles.len() != 12 {
            return Err(malformed());
        }
        let mut octets = [0u8; 6];
        for (octet, pair) in octets.iter_mut().zip(nibbles.chunks(2)) {
            *octet = (pair[0] << 4) | pair[1];
        }
        Ok(MacAddr(octets))
    }
}

impl fmt::Display for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c, d, e, g] = self.0;
        write!(f, "{a:02X}:{b:02X}:{c:02X}:{d:02X}:{e:02X}:{g:02X}")
    }
}

impl Serialize for MacAddr {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MacAddr {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetworkKind {
    Wifi,
    Bluetooth,
}

impl NetworkKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NetworkKind::Wifi => "wifi",
            NetworkKind::Bluetooth => "bluetooth",
        }
    }
}

/// Name plus hardware address of a network node.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NetworkId {
    ssid: String,
    mac: MacAddr,
}

impl NetworkId {
    pub fn new(ssid: impl Into<String>, mac: MacAddr) -> Result<Self, FingerprintError> {
        let ssid = ssid.into();
        if ssid.len() > MAX_SSID_BYTES {
            return Err(FingerprintError::SsidTooLong(ssid.len()));
        }
        Ok(NetworkId { ssid, mac })
    }

    /// Convenience constructor taking a MAC in any accepted notation.
    pub fn parse(ssid: impl Into<String>, mac: &str) -> Result<Self, FingerprintError> {
        NetworkId::new(ssid, mac.parse()?)
    }

    pub fn ssid(&self) -> &str {
        &self.ssid
    }

    pub fn mac(&self) -> MacAddr {
        self.mac
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NetworkObservation {
    id: NetworkId,
    kind: NetworkKind,
    rssi: i32,
    observed_at: u64,
}

impl NetworkObservation {
    pub fn new(
        id: NetworkId,
        kind: NetworkKind,
        rssi: i32,
        observed_at: u64,
    ) -> Result<Self, FingerprintError> {
        if !(MIN_RSSI_DBM..=MAX_RSSI_DBM).contains(&rssi) {
            return Err(FingerprintError::RssiOutOfRange(rssi.into()));
        }
        Ok(NetworkObservation {
            id,
            kind,
            rssi,
            observed_at,
        })
    }

    pub fn id(&self) -> &NetworkId {
        &self.id
    }

    pub fn ssid(&self) -> &str {
        &self.id.ssid
    }

    pub fn mac(&self) -> MacAddr {
        self.id.mac
    }

    pub fn kind(&self) -> NetworkKind {
        self.kind
    }

    /// Signal strength in dBm.
    pub fn rssi(&self) -> i32 {
        self.rssi
    }

    /// Milliseconds since the Unix epoch.
    pub fn observed_at(&self) -> u64 {
        self.observed_at
    }

    pub fn key(&self) -> (NetworkKind, MacAddr) {
        (self.kind, self.id.mac)
    }
}

/// Picks observations by name or by hardware address, regardless of kind.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NetworkSelector {
    Ssid(String),
    Mac(MacAddr),
}

impl NetworkSelector {
    /// SSID comparison is exact and case-sensitive. Hidden networks (empty
    /// SSID) are only reachable through a MAC selector.
    pub fn matches(&self, obs: &NetworkObservation) -> bool {
        match self {
            NetworkSelector::Ssid(ssid) => !obs.ssid().is_empty() && obs.ssid() == ssid,
            NetworkSelector::Mac(mac) => obs.mac() == *mac,
        }
    }
}

impl fmt::Display for NetworkSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NetworkSelector::Ssid(ssid) => write!(f, "ssid:{ssid:?}"),
            NetworkSelector::Mac(mac) => write!(f, "mac:\"{mac}\""),
        }
    }
}

/// The observations currently attributed to one device, at most one per
/// `(kind, mac)`. Iteration is sorted by that key.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Fingerprint {
    observations: BTreeMap<(NetworkKind, MacAddr), NetworkObservation>,
}

impl Fingerprint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &NetworkObservation> {
        self.observations.values()
    }

    pub fn get(&self, kind: NetworkKind, mac: MacAddr) -> Option<&NetworkObservation> {
        self.observations.get(&(kind, mac))
    }

    /// Returns the fingerprint with `obs` accumulated into it.
    pub fn merge_observation(mut self, obs: NetworkObservation) -> Self {
        self.merge(obs);
        self
    }

    /// In-place merge. Newer (or equally new) observations replace the stored
    /// one for the same key; strictly older ones are dropped. Returns whether
    /// `obs` was stored.
    pub fn merge(&mut self, obs: NetworkObservation) -> bool {
        match self.observations.get(&obs.key()) {
            Some(stored) if obs.observed_at < stored.observed_at => false,
            _ => {
                self.observations.insert(obs.key(), obs);
                true
            }
        }
    }

    /// Observations no older than `ttl_ms` at `now`. Observations stamped in
    /// the future count as fresh.
    pub fn prune_stale(&self, now: u64, ttl_ms: u64) -> Self {
        let mut fresh = self.clone();
        fresh.retain_fresh(now, ttl_ms);
        fresh
    }

    pub fn retain_fresh(&mut self, now: u64, ttl_ms: u64) {
        self.observations
            .retain(|_, obs| now.saturating_sub(obs.observed_at) <= ttl_ms);
    }

    pub fn is_visible(&self, sel: &NetworkSelector) -> bool {
        self.iter().any(|obs| sel.matches(obs))
    }

    /// Strongest RSSI among matching observations. Several access points may
    /// share one SSID.
    pub fn observed_rssi(&self, sel: &NetworkSelector) -> Option<i32> {
        self.iter()
            .filter(|obs| sel.matches(obs))
            .map(NetworkObservation::rssi)
            .max()
    }

    /// The observation with the highest RSSI; ties go to the first in
    /// canonical order.
    pub fn strongest(&self) -> Option<&NetworkObservation> {
        self.iter()
            .fold(None, |best: Option<&NetworkObservation>, obs| match best {
                Some(b) if b.rssi >= obs.rssi => Some(b),
                _ => Some(obs),
            })
    }

    /// Canonical wire encoding: a compact JSON array sorted by `(kind, MAC)`.
    pub fn to_canonical_json(&self) -> String {
        let wire: Vec<WireObservationOut<'_>> = self.iter().map(WireObservationOut::from).collect();
        serde_json::to_string(&wire).expect("fingerprint serialization is infallible")
    }

    /// Decodes a fingerprint array. Observations without `ts` are stamped
    /// with `default_ts`; `kind` defaults to Wi-Fi.
    pub fn from_json(json: &str, default_ts: u64) -> Result<Self, FingerprintError> {
        Ok(parse_observations(json, default_ts)?
            .into_iter()
            .fold(Fingerprint::new(), Fingerprint::merge_observation))
    }
}

impl FromIterator<NetworkObservation> for Fingerprint {
    fn from_iter<I: IntoIterator<Item = NetworkObservation>>(iter: I) -> Self {
        iter.into_iter()
            .fold(Fingerprint::new(), Fingerprint::merge_observation)
    }
}

/// Decodes and validates each element of a fingerprint array without merging.
pub fn parse_observations(
    json: &str,
    default_ts: u64,
) -> Result<Vec<NetworkObservation>, FingerprintError> {
    let wire: Vec<WireObservationIn> =
        serde_json::from_str(json).map_err(|e| FingerprintError::Json(e.to_string()))?;
    wire.into_iter()
        .map(|w| {
            let rssi =
                i32::try_from(w.rssi).map_err(|_| FingerprintError::RssiOutOfRange(w.rssi))?;
            NetworkObservation::new(
                NetworkId::parse(w.ssid, &w.mac)?,
                w.kind.unwrap_or(NetworkKind::Wifi),
                rssi,
                w.ts.unwrap_or(default_ts),
            )
        })
        .collect()
}

// Field order here is the wire order.
#[derive(Serialize)]
struct WireObservationOut<'a> {
    #[serde(rename = "SSID")]
    ssid: &'a str,
    #[serde(rename = "MAC")]
    mac: MacAddr,
    #[serde(rename = "RSSI")]
    rssi: i32,
    kind: NetworkKind,
    ts: u64,
}

impl<'a> From<&'a NetworkObservation> for WireObservationOut<'a> {
    fn from(obs: &'a NetworkObservation) -> Self {
        WireObservationOut {
            ssid: obs.ssid(),
            mac: obs.mac(),
            rssi: obs.rssi,
            kind: obs.kind,
            ts: obs.observed_at,
        }
    }
}

#[derive(Deserialize)]
struct WireObservationIn {
    #[serde(rename = "SSID", default)]
    ssid: String,
    #[serde(rename = "MAC")]
    mac: String,
    #[serde(rename = "RSSI")]
    rssi: i64,
    kind: Option<NetworkKind>,
    ts: Option<u64>,
}
