use std::path::Path;
use std::sync::{Arc, RwLock};

use dashmap::DashMap;
use spotex_core::{
    load_venue, parse_ruleset, DevicePoint, Fingerprint, FiredResult, MinuteOfDay,
    NetworkObservation, PageMode, RuleSet, Venue,
};

use crate::api::ApiError;
use crate::clock::Clock;
use crate::config::{Mode, ServerConfig};
use crate::page;
use crate::session::{Session, SessionId};
use crate::ServerError;

/// The rule set being served together with the text it was parsed from.
#[derive(Debug)]
pub struct LiveRules {
    pub source: String,
    pub rules: RuleSet,
}

/// Shared server state. The live rules are swapped as one value; sessions
/// are locked individually.
pub struct AppState {
    config: ServerConfig,
    clock: Arc<dyn Clock>,
    venue: Option<Venue>,
    live: RwLock<Arc<LiveRules>>,
    put_lock: tokio::sync::Mutex<()>,
    sessions: DashMap<SessionId, Session>,
}

impl AppState {
    /// Reads the rules file and, when configured, the venue file.
    pub fn load(config: ServerConfig, clock: Arc<dyn Clock>) -> Result<Self, ServerError> {
        config.validate()?;
        let source = read(&config.rules_path)?;
        let venue = match &config.venue_path {
            Some(path) => Some(load_venue(&read(path)?).map_err(|e| ServerError::Venue {
                path: path.clone(),
                source: e,
            })?),
            None => None,
        };
        Self::new(config, source, venue, clock)
    }

    /// Builds state from already loaded inputs. Rule updates are still
    /// persisted to `config.rules_path`.
    pub fn new(
        config: ServerConfig,
        rules_source: String,
        venue: Option<Venue>,
        clock: Arc<dyn Clock>,
    ) -> Result<Self, ServerError> {
        config.validate_values()?;
        if config.mode == Mode::Sim && venue.is_none() {
            return Err(ServerError::Config("sim mode requires a venue".into()));
        }
        let rules = parse_ruleset(&rules_source).map_err(|e| ServerError::Rules {
            path: config.rules_path.clone(),
            source: e,
        })?;
        Ok(AppState {
            config,
            clock,
            venue,
            live: RwLock::new(Arc::new(LiveRules {
                source: rules_source,
                rules,
            })),
            put_lock: tokio::sync::Mutex::new(()),
            sessions: DashMap::new(),
        })
    }

    pub fn config(&self) -> &ServerConfig {
        &self.config
    }

    pub fn venue(&self) -> Option<&Venue> {
        self.venue.as_ref()
    }

    pub fn now_ms(&self) -> u64 {
        self.clock.now_ms()
    }

    pub fn session_count(&self) -> usize {
        self.sessions.len()
    }

    /// A consistent snapshot of the live rules.
    pub fn rules(&self) -> Arc<LiveRules> {
        Arc::clone(&self.live.read().unwrap_or_else(|e| e.into_inner()))
    }

    /// The session's current fingerprint, pruned by TTL. Unknown or absent
    /// sessions have an empty one.
    pub fn fingerprint(&self, id: Option<&SessionId>) -> Fingerprint {
        let Some(id) = id else {
            return Fingerprint::new();
        };
        let now = self.now_ms();
        let Some(mut session) = self.sessions.get_mut(id) else {
            return Fingerprint::new();
        };
        session.last_seen = now;
        if let (Some(venue), Some(position)) = (&self.venue, session.sim_position) {
            let due = session
                .last_scan_at
                .is_none_or(|at| now.saturating_sub(at) >= self.config.rescan_interval_ms());
            if self.config.mode == Mode::Sim && due {
                session.fingerprint = venue.scan(&position, now, self.config.seed);
                session.last_scan_at = Some(now);
            }
        }
        session
            .fingerprint
            .retain_fresh(now, self.config.session_ttl_ms);
        session.fingerprint.clone()
    }

    /// Merges pushed observations; returns how many took effect.
    pub fn push(
        &self,
        id: &SessionId,
        observations: Vec<NetworkObservation>,
    ) -> Result<usize, ApiError> {
        if self.config.mode != Mode::Push {
            return Err(ApiError::WrongMode(
                "observations are simulated in sim mode",
            ));
        }
        let now = self.now_ms();
        let mut session = self.sessions.entry(id.clone()).or_default();
        session.last_seen = now;
        let merged = observations
            .into_iter()
            .filter(|obs| session.fingerprint.merge(obs.clone()))
            .count();
        session
            .fingerprint
            .retain_fresh(now, self.config.session_ttl_ms);
        Ok(merged)
    }

    /// Moves the session's simulated device and replaces its fingerprint
    /// with a fresh scan.
    pub fn move_to(&self, id: &SessionId, point: DevicePoint) -> Result<Fingerprint, ApiError> {
        let venue = match (&self.venue, self.config.mode) {
            (Some(venue), Mode::Sim) => venue,
            _ => {
                return Err(ApiError::WrongMode(
                    "device positions are only simulated in sim mode",
                ))
            }
        };
        point
            .validate()
            .map_err(|e| ApiError::BadRequest(e.to_string()))?;
        let now = self.now_ms();
        let fp = venue.scan(&point, now, self.config.seed);
        let mut session = self.sessions.entry(id.clone()).or_default();
        session.last_seen = now;
        session.sim_position = Some(point);
        session.last_scan_at = Some(now);
        session.fingerprint = fp.clone();
        Ok(fp)
    }

    /// Local minute of day for the server clock.
    pub fn minute_now(&self) -> MinuteOfDay {
        MinuteOfDay::from_epoch_ms(self.now_ms(), self.config.timezone_offset_minutes)
    }

    pub fn evaluate(&self, id: Option<&SessionId>, now: Option<MinuteOfDay>) -> FiredResult {
        let live = self.rules();
        let fp = self.fingerprint(id);
        live.rules
            .fire_rules(&fp, now.unwrap_or_else(|| self.minute_now()))
    }

    /// A complete HTML document for the session.
    pub fn page(&self, id: Option<&SessionId>, mode: PageMode) -> String {
        let live = self.rules();
        let fp = self.fingerprint(id);
        let result = live.rules.fire_rules(&fp, self.minute_now());
        let content = live
            .rules
            .render_page(&result, mode)
            .expect("result comes from the same rule set");
        page::document(&content, mode, id)
    }

    /// Parses `source`, writes it to the rules file and makes it live.
    /// On any failure the current rules stay in place.
    pub async fn replace_rules(&self, source: String) -> Result<(usize, usize), ApiError> {
        let _guard = self.put_lock.lock().await;
        let rules = parse_ruleset(&source).map_err(ApiError::InvalidRules)?;
        persist(&self.config.rules_path, &source)
            .await
            .map_err(ApiError::Persist)?;
        let counts = (rules.rules().len(), rules.snippet_count());
        let next = Arc::new(LiveRules { source, rules });
        *self.live.write().unwrap_or_else(|e| e.into_inner()) = next;
        Ok(counts)
    }

    /// Drops sessions idle for longer than the configured limit.
    pub fn expire_idle_sessions(&self) -> usize {
        let now = self.now_ms();
        let idle = self.config.session_idle_ms();
        let before = self.sessions.len();
        self.sessions
            .retain(|_, s| now.saturating_sub(s.last_seen) <= idle);
        before - self.sessions.len()
    }
}

fn read(path: &Path) -> Result<String, ServerError> {
    std::fs::read_to_string(path).map_err(|e| ServerError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

// write-then-rename so readers of the file never see a partial ruleset
async fn persist(path: &Path, text: &str) -> std::io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    tokio::fs::write(&tmp, text).await?;
    tokio::fs::rename(&tmp, path).await
}
