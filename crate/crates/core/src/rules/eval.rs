use std::collections::HashSet;

use serde::Serialize;

use crate::clock::MinuteOfDay;
use crate::fingerprint::{Fingerprint, NetworkSelector};

use super::{Predicate, RuleSet, Snippet};

/// What a predicate can ask about the world.
pub trait Environment {
    /// Strongest RSSI among observations matching `sel`, if any.
    fn rssi(&self, sel: &NetworkSelector) -> Option<i32>;
}

impl Environment for Fingerprint {
    fn rssi(&self, sel: &NetworkSelector) -> Option<i32> {
        self.observed_rssi(sel)
    }
}

/// Whether `minute` falls in `[start, end)`, wrapping past midnight.
pub(crate) fn time_in(start: MinuteOfDay, end: MinuteOfDay, minute: MinuteOfDay) -> bool {
    if start <= end {
        start <= minute && minute < end
    } else {
        minute >= start || minute < end
    }
}

impl Predicate {
    pub fn eval(&self, fp: &Fingerprint, now: MinuteOfDay) -> bool {
        self.eval_in(fp, now)
    }

    pub fn eval_in<E: Environment + ?Sized>(&self, env: &E, now: MinuteOfDay) -> bool {
        match self {
            Predicate::Visible(sel) => env.rssi(sel).is_some(),
            // no signal compares false in every direction
            Predicate::Rssi {
                selector,
                op,
                threshold,
            } => env
                .rssi(selector)
                .is_some_and(|observed| op.apply(observed, *threshold)),
            Predicate::TimeIn { start, end } => time_in(*start, *end, now),
            Predicate::Not(p) => !p.eval_in(env, now),
            Predicate::And(p, q) => p.eval_in(env, now) && q.eval_in(env, now),
            Predicate::Or(p, q) => p.eval_in(env, now) || q.eval_in(env, now),
        }
    }
}

/// Rules that fired, by descending priority then declaration order, and the
/// distinct snippets they show in that order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct FiredResult {
    #[serde(rename = "fired")]
    pub fired_rule_ids: Vec<String>,
    pub snippets: Vec<Snippet>,
}

impl RuleSet {
    pub fn fire_rules(&self, fp: &Fingerprint, now: MinuteOfDay) -> FiredResult {
        self.fire_rules_in(fp, now)
    }

    pub fn fire_rules_in<E: Environment + ?Sized>(&self, env: &E, now: MinuteOfDay) -> FiredResult {
        let mut result = FiredResult::default();
        let mut shown = HashSet::new();
        for rule in self.priority_order() {
            if !rule.condition.eval_in(env, now) {
                continue;
            }
            result.fired_rule_ids.push(rule.id.clone());
            if shown.insert(rule.snippet_id.as_str()) {
                let snippet = self
                    .snippet(&rule.snippet_id)
                    .expect("rule sets are referentially complete");
                result.snippets.push(snippet.clone());
            }
        }
        result
    }
}
