//! Indoor radio simulator.
//!
//! Received power follows a log-distance model with a fixed attenuation per
//! floor crossed:
//!
//! ```text
//! rssi = tx_ref - 10 * n * log10(max(d, 1 m)) - floor_attenuation * |floors crossed|
//! ```
//!
//! where `d` is the 3-D distance, the vertical part being
//! `floors crossed * floor_height`. Scans add seeded gaussian noise, round
//! to whole dBm and drop everything under the detection threshold.

use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::fingerprint::{
    Fingerprint, FingerprintError, MacAddr, NetworkId, NetworkKind, NetworkObservation,
    MAX_RSSI_DBM,
};

pub const MAX_FLOOR: u8 = 63;
pub const TX_REF_RANGE_DBM: std::ops::RangeInclusive<i32> = -60..=-20;
pub const EXPONENT_RANGE: std::ops::RangeInclusive<f64> = 1.5..=6.0;
pub const THRESHOLD_RANGE_DBM: std::ops::RangeInclusive<i32> = -120..=-40;
pub const DEFAULT_TX_REF_DBM: i32 = -40;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VenueError {
    #[error("invalid venue document: {0}")]
    Format(String),
    #[error("duplicate access point {mac} ({kind})")]
    DuplicateAp { mac: MacAddr, kind: &'static str },
    #[error("path timestamps must strictly increase (step {index})")]
    NonMonotonicPath { index: usize },
}

impl From<FingerprintError> for VenueError {
    fn from(e: FingerprintError) -> Self {
        VenueError::Format(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathLossParams {
    #[serde(default = "defaults::exponent_n")]
    pub exponent_n: f64,
    #[serde(default = "defaults::floor_attenuation_db")]
    pub floor_attenuation_db: f64,
    #[serde(default = "defaults::floor_height_m")]
    pub floor_height_m: f64,
    #[serde(default = "defaults::detection_threshold_dbm")]
    pub detection_threshold_dbm: i32,
    #[serde(default)]
    pub noise_sigma_db: f64,
}

mod defaults {
    pub fn exponent_n() -> f64 {
        3.0
    }
    pub fn floor_attenuation_db() -> f64 {
        15.0
    }
    pub fn floor_height_m() -> f64 {
        4.0
    }
    pub fn detection_threshold_dbm() -> i32 {
        -85
    }
    pub fn tx_ref_dbm() -> i32 {
        super::DEFAULT_TX_REF_DBM
    }
}

impl Default for PathLossParams {
    fn default() -> Self {
        PathLossParams {
            exponent_n: defaults::exponent_n(),
            floor_attenuation_db: defaults::floor_attenuation_db(),
            floor_height_m: defaults::floor_height_m(),
            detection_threshold_dbm: defaults::detection_threshold_dbm(),
            noise_sigma_db: 0.0,
        }
    }
}

impl PathLossParams {
    pub fn validate(&self) -> Result<(), VenueError> {
        let bad = |what: &str| Err(VenueError::Format(what.to_string()));
        if !EXPONENT_RANGE.contains(&self.exponent_n) {
            return bad("exponent_n must be within [1.5, 6.0]");
        }
        if !(self.floor_attenuation_db.is_finite() && self.floor_attenuation_db >= 0.0) {
            return bad("floor_attenuation_db must be a non-negative number");
        }
        if !(self.floor_height_m.is_finite() && self.floor_height_m > 0.0) {
            return bad("floor_height_m must be positive");
        }
        if !THRESHOLD_RANGE_DBM.contains(&self.detection_threshold_dbm) {
            return bad("detection_threshold_dbm must be within [-120, -40]");
        }
        if !(self.noise_sigma_db.is_finite() && self.noise_sigma_db >= 0.0) {
            return bad("noise_sigma_db must be a non-negative number");
        }
        Ok(())
    }
}

/// A position inside the venue, in meters, on a numbered floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DevicePoint {
    pub x: f64,
    pub y: f64,
    pub floor: u8,
}

impl DevicePoint {
    pub fn new(x: f64, y: f64, floor: u8) -> Result<Self, VenueError> {
        let p = DevicePoint { x, y, floor };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), VenueError> {
        if !(self.x.is_finite() && self.y.is_finite()) {
            return Err(VenueError::Format("coordinates must be finite".into()));
        }
        if self.floor > MAX_FLOOR {
            return Err(VenueError::Format(format!(
                "floor must be within [0, {MAX_FLOOR}]"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccessPointPlacement {
    id: NetworkId,
    kind: NetworkKind,
    position: DevicePoint,
    tx_ref_dbm: i32,
}

impl AccessPointPlacement {
    pub fn new(
        id: NetworkId,
        kind: NetworkKind,
        position: DevicePoint,
        tx_ref_dbm: i32,
    ) -> Result<Self, VenueError> {
        position.validate()?;
        if !TX_REF_RANGE_DBM.contains(&tx_ref_dbm) {
            return Err(VenueError::Format(format!(
                "tx_ref_dbm {tx_ref_dbm} outside [-60, -20]"
            )));
        }
        Ok(AccessPointPlacement {
            id,
            kind,
            position,
            tx_ref_dbm,
        })
    }

    pub fn id(&self) -> &NetworkId {
        &self.id
    }

    pub fn kind(&self) -> NetworkKind {
        self.kind
    }

    pub fn position(&self) -> DevicePoint {
        self.position
    }

    /// Received power at 1 m, dBm.
    pub fn tx_ref_dbm(&self) -> i32 {
        self.tx_ref_dbm
    }
}

/// Expected received power of `ap` at `p`, before noise and rounding.
pub fn predict_rssi(ap: &AccessPointPlacement, p: &DevicePoint, params: &PathLossParams) -> f64 {
    let floors_crossed = f64::from(ap.position.floor.abs_diff(p.floor));
    let dx = ap.position.x - p.x;
    let dy = ap.position.y - p.y;
    let dz = floors_crossed * params.floor_height_m;
    let distance = (dx * dx + dy * dy + dz * dz).sqrt().max(1.0);
    f64::from(ap.tx_ref_dbm)
        - 10.0 * params.exponent_n * distance.log10()
        - params.floor_attenuation_db * floors_crossed
}

#[derive(Debug, Clone, PartialEq)]
pub struct Venue {
    name: String,
    aps: Vec<AccessPointPlacement>,
    params: PathLossParams,
}

impl Venue {
    pub fn new(
        name: impl Into<String>,
        aps: Vec<AccessPointPlacement>,
        params: PathLossParams,
    ) -> Result<Self, VenueError> {
        params.validate()?;
        let mut seen = HashSet::new();
        for ap in &aps {
            if !seen.insert((ap.id.mac(), ap.kind)) {
                return Err(VenueError::DuplicateAp {
                    mac: ap.id.mac(),
                    kind: ap.kind.as_str(),
                });
            }
        }
        Ok(Venue {
            name: name.into(),
            aps,
            params,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn aps(&self) -> &[AccessPointPlacement] {
        &self.aps
    }

    pub fn params(&self) -> &PathLossParams {
        &self.params
    }

    /// Simulated scan at `p`. Each access point's noise comes from its own
    /// generator seeded by `(seed, venue name, mac, kind, now)`, so results
    /// do not depend on scan order.
    pub fn scan(&self, p: &DevicePoint, now: u64, seed: u64) -> Fingerprint {
        let mut fp = Fingerprint::new();
        for ap in &self.aps {
            let mut level = predict_rssi(ap, p, &self.params);
            if self.params.noise_sigma_db > 0.0 {
                let mut rng = self.noise_rng(ap, now, seed);
                let noise = Normal::new(0.0, self.params.noise_sigma_db)
                    .expect("sigma validated as finite and non-negative");
                level += noise.sample(&mut rng);
            }
            let rssi = level.round().min(f64::from(MAX_RSSI_DBM)) as i32;
            if rssi < self.params.detection_threshold_dbm {
                continue;
            }
            let obs = NetworkObservation::new(ap.id.clone(), ap.kind, rssi, now)
                .expect("threshold keeps rssi within range");
            fp.merge(obs);
        }
        fp
    }

    fn noise_rng(&self, ap: &AccessPointPlacement, now: u64, seed: u64) -> ChaCha8Rng {
        let mut hasher = Sha256::new();
        hasher.update(seed.to_le_bytes());
        hasher.update((self.name.len() as u64).to_le_bytes());
        hasher.update(self.name.as_bytes());
        hasher.update(ap.id.mac().octets());
        hasher.update([ap.kind as u8]);
        hasher.update(now.to_le_bytes());
        let digest: [u8; 32] = hasher.finalize().into();
        ChaCha8Rng::from_seed(digest)
    }

    /// Scans at every step of a path whose timestamps strictly increase.
    pub fn walk(
        &self,
        path: &[(DevicePoint, u64)],
        seed: u64,
    ) -> Result<Vec<Fingerprint>, VenueError> {
        if let Some(index) = path.windows(2).position(|w| w[1].1 <= w[0].1) {
            return Err(VenueError::NonMonotonicPath { index: index + 1 });
        }
        Ok(path.iter().map(|(p, t)| self.scan(p, *t, seed)).collect())
    }

    pub fn to_json(&self) -> String {
        let doc = VenueDoc {
            name: self.name.clone(),
            params: self.params,
            aps: self
                .aps
                .iter()
                .map(|ap| ApDoc {
                    ssid: ap.id.ssid().to_string(),
                    mac: ap.id.mac().to_string(),
                    kind: ap.kind,
                    x: ap.position.x,
                    y: ap.position.y,
                    floor: ap.position.floor,
                    tx_ref_dbm: ap.tx_ref_dbm,
                })
                .collect(),
        };
        serde_json::to_string(&doc).expect("venue serialization is infallible")
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VenueDoc {
    name: String,
    #[serde(default)]
    params: PathLossParams,
    aps: Vec<ApDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ApDoc {
    #[serde(default)]
    ssid: String,
    mac: String,
    #[serde(default = "wifi")]
    kind: NetworkKind,
    x: f64,
    y: f64,
    floor: u8,
    #[serde(default = "defaults::tx_ref_dbm")]
    tx_ref_dbm: i32,
}

fn wifi() -> NetworkKind {
    NetworkKind::Wifi
}

/// Parses and validates a venue document. MACs are normalized.
pub fn load_venue(document: &str) -> Result<Venue, VenueError> {
    let doc: VenueDoc =
        serde_json::from_str(document).map_err(|e| VenueError::Format(e.to_string()))?;
    let aps = doc
        .aps
        .into_iter()
        .map(|ap| {
            AccessPointPlacement::new(
                NetworkId::parse(ap.ssid, &ap.mac)?,
                ap.kind,
                DevicePoint::new(ap.x, ap.y, ap.floor)?,
                ap.tx_ref_dbm,
            )
        })
        .collect::<Result<Vec<_>, VenueError>>()?;
    Venue::new(doc.name, aps, doc.params)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PathStep {
    x: f64,
    y: f64,
    floor: u8,
    t: u64,
}

/// Parses a walk path: a JSON array of `{"x","y","floor","t"}`.
pub fn load_path(document: &str) -> Result<Vec<(DevicePoint, u64)>, VenueError> {
    let steps: Vec<PathStep> =
        serde_json::from_str(document).map_err(|e| VenueError::Format(e.to_string()))?;
    steps
        .into_iter()
        .map(|s| Ok((DevicePoint::new(s.x, s.y, s.floor)?, s.t)))
        .collect()
}
