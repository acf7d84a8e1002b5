use std::collections::HashSet;
use std::fmt::Write;
use std::str::FromStr;

use thiserror::Error;

use crate::fingerprint::NetworkSelector;

use super::{FiredResult, Rule, RuleSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PageMode {
    /// Only the fired content, decided on the server.
    Filtered,
    /// Every rule's block, with `cond` tokens for the browser shim and the
    /// non-fired ones hidden.
    Annotated,
}

impl FromStr for PageMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "filtered" => Ok(PageMode::Filtered),
            "annotated" => Ok(PageMode::Annotated),
            other => Err(format!("unknown page mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RenderError {
    #[error("fired rule {0:?} is not part of the rule set")]
    UnknownRule(String),
}

/// Inline style put on blocks whose rule did not fire.
pub const HIDDEN_STYLE: &str = "display:none";

impl RuleSet {
    /// Renders the content region for `result`, which must come from this
    /// rule set.
    ///
    /// Filtered output has one `<div id="{rule}">` per shown snippet, named
    /// after the first fired rule that showed it. Annotated output has a div
    /// for every rule in priority order.
    pub fn render_page(&self, result: &FiredResult, mode: PageMode) -> Result<String, RenderError> {
        let fired: Vec<&Rule> = result
            .fired_rule_ids
            .iter()
            .map(|id| {
                self.rule(id)
                    .ok_or_else(|| RenderError::UnknownRule(id.clone()))
            })
            .collect::<Result<_, _>>()?;
        let mut out = String::new();
        match mode {
            PageMode::Filtered => {
                for snippet in &result.snippets {
                    let Some(rule) = fired.iter().find(|r| r.snippet_id == snippet.id) else {
                        continue;
                    };
                    push_line(
                        &mut out,
                        format!("<div id=\"{}\">{}</div>", rule.id, snippet.html),
                    );
                }
            }
            PageMode::Annotated => {
                let fired_ids: HashSet<&str> = fired.iter().map(|r| r.id.as_str()).collect();
                for rule in self.priority_order() {
                    let html = self
                        .snippet(&rule.snippet_id)
                        .map(|s| s.html.as_str())
                        .unwrap_or_default();
                    let mut div = format!("<div id=\"{}\"", rule.id);
                    if let Some(tokens) = cond_tokens(rule) {
                        let _ = write!(div, " cond=\"{}\"", escape_attr(&tokens.join(" ")));
                    }
                    if !fired_ids.contains(rule.id.as_str()) {
                        let _ = write!(div, " style=\"{HIDDEN_STYLE}\"");
                    }
                    let _ = write!(div, ">{html}</div>");
                    push_line(&mut out, div);
                }
            }
        }
        Ok(out)
    }
}

fn push_line(out: &mut String, line: String) {
    if !out.is_empty() {
        out.push('\n');
    }
    out.push_str(&line);
}

/// `cond` tokens for a rule whose condition is a conjunction of
/// `visible(..)` checks. SSIDs appear as-is, MACs as `mac:AA:BB:..`. Returns
/// `None` when the condition is richer or an SSID cannot be written as a
/// single token; such rules stay server-decided.
pub fn cond_tokens(rule: &Rule) -> Option<Vec<String>> {
    rule.condition
        .visible_conjuncts()?
        .into_iter()
        .map(|sel| match sel {
            NetworkSelector::Mac(mac) => Some(format!("mac:{mac}")),
            NetworkSelector::Ssid(ssid) => {
                let tokenizable = !ssid.is_empty()
                    && !ssid.chars().any(char::is_whitespace)
                    && !ssid.starts_with("mac:");
                tokenizable.then(|| ssid.clone())
            }
        })
        .collect()
}

fn escape_attr(value: &str) -> String {
    let mut out = String::with_capacity(value.len());
    for c in value.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            c => out.push(c),
        }
    }
    out
}
