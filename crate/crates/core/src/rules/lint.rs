use std::collections::BTreeSet;

use serde::Serialize;

use crate::clock::{MinuteOfDay, MINUTES_PER_DAY};
use crate::fingerprint::{NetworkSelector, MAX_RSSI_DBM, MIN_RSSI_DBM};
use crate::venue::Venue;

use super::eval::Environment;
use super::{Predicate, Rule, RuleSet};

/// Rules referencing more selectors than this are not checked for
/// reachability.
pub const MAX_LINT_SELECTORS: usize = 16;

// Upper bound on enumerated (selector state, minute) combinations per rule.
const MAX_LINT_STATES: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Info,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub rule_id: Option<String>,
    pub message: String,
}

impl Diagnostic {
    fn warning(rule_id: Option<&str>, message: String) -> Self {
        Diagnostic {
            severity: Severity::Warning,
            rule_id: rule_id.map(str::to_string),
            message,
        }
    }

    fn info(rule_id: Option<&str>, message: String) -> Self {
        Diagnostic {
            severity: Severity::Info,
            rule_id: rule_id.map(str::to_string),
            message,
        }
    }
}

/// Static checks: rules that can never fire, snippets nothing shows and,
/// given a venue, selectors that match none of its access points.
pub fn lint_ruleset(rs: &RuleSet, venue: Option<&Venue>) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for rule in rs.rules() {
        match is_satisfiable(&rule.condition) {
            Reachability::Reachable => {}
            Reachability::Unreachable => out.push(Diagnostic::warning(
                Some(&rule.id),
                "unreachable rule: condition can never be true".into(),
            )),
            Reachability::Overflow(reason) => out.push(Diagnostic::info(
                Some(&rule.id),
                format!("LintOverflow: {reason}; reachability not checked"),
            )),
        }
        if let Some(venue) = venue {
            for sel in rule.condition.selectors() {
                if !venue
                    .aps()
                    .iter()
                    .any(|ap| selector_matches_ap(sel, ap.id()))
                {
                    out.push(Diagnostic::warning(
                        Some(&rule.id),
                        format!("selector {sel} matches no venue AP"),
                    ));
                }
            }
        }
    }
    let shown: BTreeSet<&str> = rs
        .rules()
        .iter()
        .map(|r: &Rule| r.snippet_id.as_str())
        .collect();
    for snippet in rs.snippets() {
        if !shown.contains(snippet.id.as_str()) {
            out.push(Diagnostic::warning(
                None,
                format!("orphan snippet {:?} is never shown", snippet.id),
            ));
        }
    }
    out
}

fn selector_matches_ap(sel: &NetworkSelector, id: &crate::fingerprint::NetworkId) -> bool {
    match sel {
        NetworkSelector::Ssid(ssid) => !id.ssid().is_empty() && id.ssid() == ssid,
        NetworkSelector::Mac(mac) => id.mac() == *mac,
    }
}

#[derive(Debug, PartialEq, Eq)]
enum Reachability {
    Reachable,
    Unreachable,
    Overflow(String),
}

struct Assignment<'a> {
    selectors: &'a [&'a NetworkSelector],
    values: Vec<Option<i32>>,
}

impl Environment for Assignment<'_> {
    fn rssi(&self, sel: &NetworkSelector) -> Option<i32> {
        self.selectors
            .iter()
            .position(|s| *s == sel)
            .and_then(|i| self.values[i])
    }
}

/// Enumerates every selector treated independently: absent, or present at
/// an RSSI on each side of every threshold it is compared against, crossed
/// with every region between time-window boundaries. Anything satisfiable
/// in reality is satisfiable here, so "unreachable" has no false positives.
fn is_satisfiable(p: &Predicate) -> Reachability {
    let selectors = p.selectors();
    if selectors.len() > MAX_LINT_SELECTORS {
        return Reachability::Overflow(format!(
            "{} distinct selectors exceed the limit of {MAX_LINT_SELECTORS}",
            selectors.len()
        ));
    }
    let candidates: Vec<Vec<Option<i32>>> = selectors
        .iter()
        .map(|sel| {
            let mut values = BTreeSet::new();
            for t in thresholds(p, sel) {
                for v in [t - 1, t, t + 1] {
                    if (MIN_RSSI_DBM..=MAX_RSSI_DBM).contains(&v) {
                        values.insert(v);
                    }
                }
            }
            if values.is_empty() {
                // only presence matters
                values.insert(MAX_RSSI_DBM);
            }
            std::iter::once(None)
                .chain(values.into_iter().map(Some))
                .collect()
        })
        .collect();
    let minutes = candidate_minutes(p);
    let total = candidates
        .iter()
        .try_fold(minutes.len(), |acc, c| acc.checked_mul(c.len()))
        .filter(|&n| n <= MAX_LINT_STATES);
    if total.is_none() {
        return Reachability::Overflow("too many RSSI/time combinations".into());
    }

    let mut odometer = vec![0usize; selectors.len()];
    let mut env = Assignment {
        selectors: &selectors,
        values: vec![None; selectors.len()],
    };
    loop {
        for (slot, (&i, values)) in odometer.iter().zip(&candidates).enumerate() {
            env.values[slot] = values[i];
        }
        if minutes.iter().any(|&m| p.eval_in(&env, m)) {
            return Reachability::Reachable;
        }
        // advance the odometer; done once every digit has wrapped
        let mut digit = 0;
        loop {
            if digit == odometer.len() {
                return Reachability::Unreachable;
            }
            odometer[digit] += 1;
            if odometer[digit] < candidates[digit].len() {
                break;
            }
            odometer[digit] = 0;
            digit += 1;
        }
    }
}

fn thresholds(p: &Predicate, sel: &NetworkSelector) -> Vec<i32> {
    match p {
        Predicate::Rssi {
            selector,
            threshold,
            ..
        } if selector == sel => vec![*threshold],
        Predicate::Visible(_) | Predicate::Rssi { .. } | Predicate::TimeIn { .. } => vec![],
        Predicate::Not(q) => thresholds(q, sel),
        Predicate::And(l, r) | Predicate::Or(l, r) => {
            let mut out = thresholds(l, sel);
            out.extend(thresholds(r, sel));
            out
        }
    }
}

fn candidate_minutes(p: &Predicate) -> Vec<MinuteOfDay> {
    fn walk(p: &Predicate, out: &mut BTreeSet<u16>) {
        match p {
            Predicate::TimeIn { start, end } => {
                for b in [start.get(), end.get()] {
                    out.insert(b);
                    out.insert((b + MINUTES_PER_DAY - 1) % MINUTES_PER_DAY);
                }
            }
            Predicate::Visible(_) | Predicate::Rssi { .. } => {}
            Predicate::Not(q) => walk(q, out),
            Predicate::And(l, r) | Predicate::Or(l, r) => {
                walk(l, out);
                walk(r, out);
            }
        }
    }
    let mut minutes = BTreeSet::from([0, MINUTES_PER_DAY - 1]);
    walk(p, &mut minutes);
    minutes.into_iter().filter_map(MinuteOfDay::new).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rules::parse_ruleset;
    use crate::venue::load_venue;

    fn lint(src: &str) -> Vec<Diagnostic> {
        lint_ruleset(&parse_ruleset(src).unwrap(), None)
    }

    const HEAD: &str = "SNIPPET s TITLE \"\" HTML <<<x>>>\n";

    #[test]
    fn contradiction_is_unreachable() {
        let d = lint(&format!(
            "{HEAD}RULE r IF visible(ssid:\"x\") AND NOT visible(ssid:\"x\") THEN SHOW s"
        ));
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].severity, Severity::Warning);
        assert_eq!(d[0].rule_id.as_deref(), Some("r"));
        assert!(d[0].message.contains("unreachable"));
    }

    #[test]
    fn rssi_and_time_contradictions() {
        let rssi = lint(&format!(
            "{HEAD}RULE r IF rssi(ssid:\"x\") >= -50 AND rssi(ssid:\"x\") < -60 THEN SHOW s"
        ));
        assert!(rssi[0].message.contains("unreachable"));
        let tight = lint(&format!(
            "{HEAD}RULE r IF rssi(ssid:\"x\") > -51 AND rssi(ssid:\"x\") < -49 THEN SHOW s"
        ));
        assert!(tight.is_empty(), "-50 satisfies both: {tight:?}");
        let time = lint(&format!(
            "{HEAD}RULE r IF time(08:00, 09:00) AND time(10:00, 11:00) THEN SHOW s"
        ));
        assert!(time[0].message.contains("unreachable"));
        let empty_window = lint(&format!("{HEAD}RULE r IF time(08:00, 08:00) THEN SHOW s"));
        assert!(empty_window[0].message.contains("unreachable"));
        let wrap = lint(&format!(
            "{HEAD}RULE r IF time(22:00, 02:00) AND time(01:00, 03:00) THEN SHOW s"
        ));
        assert!(wrap.is_empty());
    }

    #[test]
    fn satisfiable_rules_are_quiet() {
        assert!(lint(&format!(
            "{HEAD}RULE r IF visible(ssid:\"a\") OR NOT visible(ssid:\"b\") THEN SHOW s"
        ))
        .is_empty());
    }

    #[test]
    fn orphan_snippet() {
        let d = lint("SNIPPET lonely TITLE \"\" HTML <<<x>>>");
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].rule_id, None);
        assert!(d[0].message.contains("orphan snippet \"lonely\""));
    }

    #[test]
    fn overflow_is_informational() {
        let cond: Vec<String> = (0..17).map(|i| format!("visible(ssid:\"n{i}\")")).collect();
        // keep the tree shallow: OR of pairs
        let src = format!("{HEAD}RULE r IF {} THEN SHOW s", cond.join(" OR "));
        let d = lint(&src);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].severity, Severity::Info);
        assert!(d[0].message.starts_with("LintOverflow"));
    }

    #[test]
    fn sixteen_selectors_are_checked() {
        let cond: Vec<String> = (0..16).map(|i| format!("visible(ssid:\"n{i}\")")).collect();
        let src = format!(
            "{HEAD}RULE r IF {} AND NOT visible(ssid:\"n0\") THEN SHOW s",
            cond.join(" AND ")
        );
        let d = lint(&src);
        assert!(d[0].message.contains("unreachable"), "{d:?}");
    }

    #[test]
    fn venue_selector_check() {
        let venue = load_venue(
            r#"{"name":"v","aps":[{"ssid":"Café","mac":"AA:BB:CC:DD:EE:FF","kind":"wifi","x":0,"y":0,"floor":0}]}"#,
        )
        .unwrap();
        let rs = parse_ruleset(&format!(
            "{HEAD}RULE r IF visible(ssid:\"Ghost\") OR visible(ssid:\"Café\") OR visible(mac:\"aa:bb:cc:dd:ee:ff\") THEN SHOW s"
        ))
        .unwrap();
        let d = lint_ruleset(&rs, Some(&venue));
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].message, "selector ssid:\"Ghost\" matches no venue AP");
        let json = serde_json::to_string(&d[0]).unwrap();
        assert_eq!(
            json,
            r#"{"severity":"warning","rule_id":"r","message":"selector ssid:\"Ghost\" matches no venue AP"}"#
        );
    }
}
