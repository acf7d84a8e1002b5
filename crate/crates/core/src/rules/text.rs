use std::fmt::Write;

use crate::fingerprint::NetworkSelector;

use super::{Predicate, RuleSet};

/// Writes a rule set back to DSL text: snippets first, then rules, one
/// statement per line. Comments and layout of the original are not kept.
pub fn serialize_ruleset(rs: &RuleSet) -> String {
    let mut out = String::new();
    for snippet in rs.snippets() {
        let _ = writeln!(
            out,
            "SNIPPET {} TITLE {} HTML <<<{}>>>",
            snippet.id,
            quote(&snippet.title),
            snippet.html
        );
    }
    if rs.snippet_count() > 0 && !rs.rules().is_empty() {
        out.push('\n');
    }
    for rule in rs.rules() {
        let _ = write!(out, "RULE {}", rule.id);
        if rule.priority != 0 {
            let _ = write!(out, " PRIORITY {}", rule.priority);
        }
        let _ = writeln!(
            out,
            " IF {} THEN SHOW {}",
            predicate_text(&rule.condition),
            rule.snippet_id
        );
    }
    out
}

pub(crate) fn predicate_text(p: &Predicate) -> String {
    let mut out = String::new();
    write_predicate(&mut out, p, Prec::Or);
    out
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Prec {
    Or,
    And,
    Not,
}

fn prec(p: &Predicate) -> Prec {
    match p {
        Predicate::Or(..) => Prec::Or,
        Predicate::And(..) => Prec::And,
        _ => Prec::Not,
    }
}

// Parenthesizes `p` when it binds looser than `min`.
fn write_predicate(out: &mut String, p: &Predicate, min: Prec) {
    let parens = prec(p) < min;
    if parens {
        out.push('(');
    }
    match p {
        Predicate::Visible(sel) => {
            out.push_str("visible(");
            write_selector(out, sel);
            out.push(')');
        }
        Predicate::Rssi {
            selector,
            op,
            threshold,
        } => {
            out.push_str("rssi(");
            write_selector(out, selector);
            let _ = write!(out, ") {} {threshold}", op.symbol());
        }
        Predicate::TimeIn { start, end } => {
            let _ = write!(out, "time({start}, {end})");
        }
        Predicate::Not(inner) => {
            out.push_str("NOT ");
            write_predicate(out, inner, Prec::Not);
        }
        // left-associative: the right operand needs parentheses at equal precedence
        Predicate::And(l, r) => {
            write_predicate(out, l, Prec::And);
            out.push_str(" AND ");
            write_predicate(out, r, Prec::Not);
        }
        Predicate::Or(l, r) => {
            write_predicate(out, l, Prec::Or);
            out.push_str(" OR ");
            write_predicate(out, r, Prec::And);
        }
    }
    if parens {
        out.push(')');
    }
}

fn write_selector(out: &mut String, sel: &NetworkSelector) {
    match sel {
        NetworkSelector::Ssid(ssid) => {
            out.push_str("ssid:");
            out.push_str(&quote(ssid));
        }
        NetworkSelector::Mac(mac) => {
            let _ = write!(out, "mac:\"{mac}\"");
        }
    }
}

pub(crate) fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if c.is_control() => {
                let _ = write!(out, "\\u{{{:x}}}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
    out
}
