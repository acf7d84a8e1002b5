//! The SpotEx rule language.
//!
//! A rule set pairs content snippets with conditions over the current
//! fingerprint and the time of day:
//!
//! ```text
//! # coupons for the ground floor
//! SNIPPET cafe TITLE "Café" HTML <<<<p>10% off espresso</p>>>>
//! RULE cafe_rule PRIORITY 10 IF visible(ssid:"Café") AND rssi(ssid:"Café") >= -70 THEN SHOW cafe
//! RULE night IF time(22:00, 02:00) AND NOT visible(mac:"AA:BB:CC:DD:EE:FF") THEN SHOW cafe
//! ```
//!
//! Operator precedence is `NOT` > `AND` > `OR`; binary operators associate
//! to the left.

mod eval;
mod lexer;
mod lint;
mod parser;
mod render;
mod text;

use std::fmt;

use indexmap::IndexMap;
use serde::Serialize;
use thiserror::Error;

use crate::clock::MinuteOfDay;
use crate::fingerprint::{NetworkSelector, MAX_RSSI_DBM, MIN_RSSI_DBM};

pub use eval::{Environment, FiredResult};
pub use lint::{lint_ruleset, Diagnostic, Severity, MAX_LINT_SELECTORS};
pub use parser::parse_ruleset;
pub use render::{cond_tokens, PageMode, RenderError, HIDDEN_STYLE};
pub use text::serialize_ruleset;

/// Predicate trees deeper than this are rejected.
pub const MAX_PREDICATE_DEPTH: usize = 32;

pub(crate) const KEYWORDS: &[&str] = &[
    "SNIPPET", "TITLE", "HTML", "RULE", "PRIORITY", "IF", "THEN", "SHOW", "AND", "OR", "NOT",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Ge,
    Gt,
    Le,
    Lt,
}

impl CmpOp {
    pub fn apply(self, observed: i32, threshold: i32) -> bool {
        match self {
            CmpOp::Ge => observed >= threshold,
            CmpOp::Gt => observed > threshold,
            CmpOp::Le => observed <= threshold,
            CmpOp::Lt => observed < threshold,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Ge => ">=",
            CmpOp::Gt => ">",
            CmpOp::Le => "<=",
            CmpOp::Lt => "<",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Predicate {
    Visible(NetworkSelector),
    Rssi {
        selector: NetworkSelector,
        op: CmpOp,
        threshold: i32,
    },
    /// Half-open `[start, end)`, wrapping past midnight when `end < start`.
    /// Empty when `start == end`.
    TimeIn {
        start: MinuteOfDay,
        end: MinuteOfDay,
    },
    Not(Box<Predicate>),
    And(Box<Predicate>, Box<Predicate>),
    Or(Box<Predicate>, Box<Predicate>),
}

impl Predicate {
    pub fn visible(selector: NetworkSelector) -> Self {
        Predicate::Visible(selector)
    }

    pub fn negate(p: Predicate) -> Self {
        Predicate::Not(Box::new(p))
    }

    pub fn and(p: Predicate, q: Predicate) -> Self {
        Predicate::And(Box::new(p), Box::new(q))
    }

    pub fn or(p: Predicate, q: Predicate) -> Self {
        Predicate::Or(Box::new(p), Box::new(q))
    }

    /// Leaves count as depth 1.
    pub fn depth(&self) -> usize {
        match self {
            Predicate::Visible(_) | Predicate::Rssi { .. } | Predicate::TimeIn { .. } => 1,
            Predicate::Not(p) => 1 + p.depth(),
            Predicate::And(p, q) | Predicate::Or(p, q) => 1 + p.depth().max(q.depth()),
        }
    }

    /// Distinct selectors in first-occurrence order.
    pub fn selectors(&self) -> Vec<&NetworkSelector> {
        let mut out = Vec::new();
        self.collect_selectors(&mut out);
        out
    }

    fn collect_selectors<'a>(&'a self, out: &mut Vec<&'a NetworkSelector>) {
        match self {
            Predicate::Visible(sel) | Predicate::Rssi { selector: sel, .. } => {
                if !out.contains(&sel) {
                    out.push(sel);
                }
            }
            Predicate::TimeIn { .. } => {}
            Predicate::Not(p) => p.collect_selectors(out),
            Predicate::And(p, q) | Predicate::Or(p, q) => {
                p.collect_selectors(out);
                q.collect_selectors(out);
            }
        }
    }

    /// The selectors of a condition built only from `visible(..)` joined by
    /// `AND`, in order; `None` for anything richer.
    pub fn visible_conjuncts(&self) -> Option<Vec<&NetworkSelector>> {
        fn walk<'a>(p: &'a Predicate, out: &mut Vec<&'a NetworkSelector>) -> bool {
            match p {
                Predicate::Visible(sel) => {
                    if !out.contains(&sel) {
                        out.push(sel);
                    }
                    true
                }
                Predicate::And(l, r) => walk(l, out) && walk(r, out),
                _ => false,
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out).then_some(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Snippet {
    pub id: String,
    pub title: String,
    pub html: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub id: String,
    pub priority: i32,
    pub condition: Predicate,
    pub snippet_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("invalid identifier {0:?}")]
    InvalidIdentifier(String),
    #[error("{0:?} is a reserved word")]
    ReservedWord(String),
    #[error("duplicate snippet id {0:?}")]
    DuplicateSnippet(String),
    #[error("duplicate rule id {0:?}")]
    DuplicateRule(String),
    #[error("rule {rule:?} shows unknown snippet {snippet:?}")]
    UnknownSnippet { rule: String, snippet: String },
    #[error("rule {rule:?}: RSSI threshold {threshold} outside [{MIN_RSSI_DBM}, {MAX_RSSI_DBM}]")]
    ThresholdOutOfRange { rule: String, threshold: i64 },
    #[error("{line}:{column}: time {text:?} is not a valid HH:MM time of day")]
    TimeOutOfRange {
        line: usize,
        column: usize,
        text: String,
    },
    #[error(
        "{line}:{column}: RSSI threshold {threshold} outside [{MIN_RSSI_DBM}, {MAX_RSSI_DBM}]"
    )]
    ThresholdLiteralOutOfRange {
        line: usize,
        column: usize,
        threshold: i64,
    },
    #[error("{line}:{column}: invalid selector: {message}")]
    InvalidSelector {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("rule {rule:?}: condition depth exceeds {MAX_PREDICATE_DEPTH}")]
    DepthExceeded { rule: String },
    #[error("snippet {0:?}: HTML must not contain the heredoc terminator \">>>\"")]
    HtmlContainsTerminator(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuleError {
    #[error("{line}:{column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error(transparent)]
    Validation(#[from] ValidationError),
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn check_identifier(id: &str) -> Result<(), ValidationError> {
    if !is_identifier(id) {
        Err(ValidationError::InvalidIdentifier(id.to_string()))
    } else if KEYWORDS.contains(&id) {
        Err(ValidationError::ReservedWord(id.to_string()))
    } else {
        Ok(())
    }
}

/// A validated set of snippets and rules. Rules keep declaration order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RuleSet {
    snippets: IndexMap<String, Snippet>,
    rules: Vec<Rule>,
}

impl RuleSet {
    /// Checks identifiers, uniqueness, snippet references, threshold ranges
    /// and condition depth.
    pub fn new(snippets: Vec<Snippet>, rules: Vec<Rule>) -> Result<Self, ValidationError> {
        let mut by_id = IndexMap::with_capacity(snippets.len());
        for snippet in snippets {
            check_identifier(&snippet.id)?;
            if snippet.html.contains(">>>") {
                return Err(ValidationError::HtmlContainsTerminator(snippet.id));
            }
            if by_id.contains_key(&snippet.id) {
                return Err(ValidationError::DuplicateSnippet(snippet.id));
            }
            by_id.insert(snippet.id.clone(), snippet);
        }
        let mut seen = std::collections::HashSet::new();
        for rule in &rules {
            check_identifier(&rule.id)?;
            if !seen.insert(rule.id.as_str()) {
                return Err(ValidationError::DuplicateRule(rule.id.clone()));
            }
            if !by_id.contains_key(&rule.snippet_id) {
                return Err(ValidationError::UnknownSnippet {
                    rule: rule.id.clone(),
                    snippet: rule.snippet_id.clone(),
                });
            }
            if rule.condition.depth() > MAX_PREDICATE_DEPTH {
                return Err(ValidationError::DepthExceeded {
                    rule: rule.id.clone(),
                });
            }
            check_leaves(&rule.id, &rule.condition)?;
        }
        Ok(RuleSet {
            snippets: by_id,
            rules,
        })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn rule(&self, id: &str) -> Option<&Rule> {
        self.rules.iter().find(|r| r.id == id)
    }

    pub fn snippets(&self) -> impl Iterator<Item = &Snippet> {
        self.snippets.values()
    }

    pub fn snippet(&self, id: &str) -> Option<&Snippet> {
        self.snippets.get(id)
    }

    pub fn snippet_count(&self) -> usize {
        self.snippets.len()
    }

    /// Rules by descending priority, ties in declaration order.
    pub fn priority_order(&self) -> Vec<&Rule> {
        let mut ordered: Vec<&Rule> = self.rules.iter().collect();
        ordered.sort_by_key(|r| std::cmp::Reverse(r.priority));
        ordered
    }
}

fn check_leaves(rule: &str, p: &Predicate) -> Result<(), ValidationError> {
    match p {
        Predicate::Rssi { threshold, .. } => {
            if (MIN_RSSI_DBM..=MAX_RSSI_DBM).contains(threshold) {
                Ok(())
            } else {
                Err(ValidationError::ThresholdOutOfRange {
                    rule: rule.to_string(),
                    threshold: (*threshold).into(),
                })
            }
        }
        Predicate::Visible(_) | Predicate::TimeIn { .. } => Ok(()),
        Predicate::Not(q) => check_leaves(rule, q),
        Predicate::And(l, r) | Predicate::Or(l, r) => {
            check_leaves(rule, l)?;
            check_leaves(rule, r)
        }
    }
}

impl fmt::Display for RuleSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serialize_ruleset(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn snippet(id: &str) -> Snippet {
        Snippet {
            id: id.into(),
            title: "t".into(),
            html: "<p>x</p>".into(),
        }
    }

    fn rule(id: &str, snippet_id: &str, condition: Predicate) -> Rule {
        Rule {
            id: id.into(),
            priority: 0,
            condition,
            snippet_id: snippet_id.into(),
        }
    }

    fn vis(name: &str) -> Predicate {
        Predicate::visible(NetworkSelector::Ssid(name.into()))
    }

    #[test]
    fn referential_integrity() {
        let err = RuleSet::new(vec![snippet("s")], vec![rule("r", "missing", vis("X"))]);
        assert!(matches!(err, Err(ValidationError::UnknownSnippet { .. })));
        assert!(RuleSet::new(vec![snippet("s")], vec![rule("r", "s", vis("X"))]).is_ok());
    }

    #[test]
    fn duplicate_ids() {
        assert!(matches!(
            RuleSet::new(vec![snippet("s"), snippet("s")], vec![]),
            Err(ValidationError::DuplicateSnippet(_))
        ));
        assert!(matches!(
            RuleSet::new(
                vec![snippet("s")],
                vec![rule("r", "s", vis("a")), rule("r", "s", vis("b"))]
            ),
            Err(ValidationError::DuplicateRule(_))
        ));
    }

    #[test]
    fn identifiers() {
        assert!(is_identifier("_a1"));
        assert!(is_identifier("Cafe_rule"));
        assert!(!is_identifier("1a"));
        assert!(!is_identifier("Café_rule"));
        assert!(!is_identifier(""));
        assert!(matches!(
            RuleSet::new(vec![snippet("a-b")], vec![]),
            Err(ValidationError::InvalidIdentifier(_))
        ));
        assert!(matches!(
            RuleSet::new(vec![snippet("SHOW")], vec![]),
            Err(ValidationError::ReservedWord(_))
        ));
    }

    #[test]
    fn depth_limit() {
        let mut p = vis("x");
        for _ in 1..MAX_PREDICATE_DEPTH {
            p = Predicate::negate(p);
        }
        assert_eq!(p.depth(), MAX_PREDICATE_DEPTH);
        assert!(RuleSet::new(vec![snippet("s")], vec![rule("r", "s", p.clone())]).is_ok());
        let deeper = Predicate::negate(p);
        assert!(matches!(
            RuleSet::new(vec![snippet("s")], vec![rule("r", "s", deeper)]),
            Err(ValidationError::DepthExceeded { .. })
        ));
    }

    #[test]
    fn threshold_range() {
        let p = Predicate::Rssi {
            selector: NetworkSelector::Ssid("x".into()),
            op: CmpOp::Ge,
            threshold: 5,
        };
        assert!(matches!(
            RuleSet::new(vec![snippet("s")], vec![rule("r", "s", p)]),
            Err(ValidationError::ThresholdOutOfRange { .. })
        ));
    }

    #[test]
    fn priority_order_is_stable() {
        let mut rules = vec![
            rule("a", "s", vis("x")),
            rule("b", "s", vis("x")),
            rule("c", "s", vis("x")),
        ];
        rules[1].priority = 5;
        rules[2].priority = 5;
        let rs = RuleSet::new(vec![snippet("s")], rules).unwrap();
        let ids: Vec<&str> = rs.priority_order().iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["b", "c", "a"]);
    }

    #[test]
    fn visible_conjuncts() {
        let p = Predicate::and(vis("AP1"), vis("AP2"));
        let sels = p.visible_conjuncts().unwrap();
        assert_eq!(sels.len(), 2);
        assert!(Predicate::or(vis("a"), vis("b"))
            .visible_conjuncts()
            .is_none());
        assert!(Predicate::negate(vis("a")).visible_conjuncts().is_none());
    }
}
