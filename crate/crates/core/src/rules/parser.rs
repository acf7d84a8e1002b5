use crate::clock::MinuteOfDay;
use crate::fingerprint::{MacAddr, NetworkSelector, MAX_RSSI_DBM, MAX_SSID_BYTES, MIN_RSSI_DBM};

use super::lexer::{tokenize, Spanned, Tok};
use super::{
    CmpOp, Predicate, Rule, RuleError, RuleSet, Snippet, ValidationError, KEYWORDS,
    MAX_PREDICATE_DEPTH,
};

/// Parses and validates a rule set. Either the whole source is accepted or
/// an error is returned.
pub fn parse_ruleset(source: &str) -> Result<RuleSet, RuleError> {
    let tokens = tokenize(source)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        nesting: 0,
        current_rule: String::new(),
    };
    let mut snippets = Vec::new();
    let mut rules = Vec::new();
    loop {
        let next = parser.peek().clone();
        match &next.tok {
            Tok::Eof => break,
            Tok::Word(w) if w == "SNIPPET" => snippets.push(parser.snippet()?),
            Tok::Word(w) if w == "RULE" => rules.push(parser.rule()?),
            other => {
                return Err(parser.error_at(
                    &next,
                    format!("expected SNIPPET or RULE, found {}", other.describe()),
                ))
            }
        }
    }
    Ok(RuleSet::new(snippets, rules)?)
}

struct Parser {
    tokens: Vec<Spanned>,
    pos: usize,
    // parenthesis / NOT nesting, bounded so hostile input cannot exhaust the stack
    nesting: usize,
    current_rule: String,
}

impl Parser {
    fn peek(&self) -> &Spanned {
        &self.tokens[self.pos]
    }

    fn advance(&mut self) -> Spanned {
        let tok = self.tokens[self.pos].clone();
        if tok.tok != Tok::Eof {
            self.pos += 1;
        }
        tok
    }

    fn error_at(&self, at: &Spanned, message: impl Into<String>) -> RuleError {
        RuleError::Parse {
            line: at.line,
            column: at.column,
            message: message.into(),
        }
    }

    fn unexpected(&self, at: &Spanned, expected: &str) -> RuleError {
        self.error_at(
            at,
            format!("expected {expected}, found {}", at.tok.describe()),
        )
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Word(w) if w == kw)
    }

    fn keyword(&mut self, kw: &str) -> Result<(), RuleError> {
        let t = self.advance();
        match &t.tok {
            Tok::Word(w) if w == kw => Ok(()),
            _ => Err(self.unexpected(&t, kw)),
        }
    }

    fn expect(&mut self, tok: Tok) -> Result<Spanned, RuleError> {
        let t = self.advance();
        if t.tok == tok {
            Ok(t)
        } else {
            Err(self.unexpected(&t, &tok.describe()))
        }
    }

    fn identifier(&mut self, what: &str) -> Result<String, RuleError> {
        let t = self.advance();
        match &t.tok {
            Tok::Word(w) if KEYWORDS.contains(&w.as_str()) => {
                Err(self.error_at(&t, format!("{w:?} is a reserved word, expected {what}")))
            }
            Tok::Word(w) => Ok(w.clone()),
            _ => Err(self.unexpected(&t, what)),
        }
    }

    fn string(&mut self, what: &str) -> Result<(String, Spanned), RuleError> {
        let t = self.advance();
        match &t.tok {
            Tok::Str(s) => Ok((s.clone(), t.clone())),
            _ => Err(self.unexpected(&t, what)),
        }
    }

    // SNIPPET id TITLE "title" HTML <<<html>>>
    fn snippet(&mut self) -> Result<Snippet, RuleError> {
        self.keyword("SNIPPET")?;
        let id = self.identifier("snippet id")?;
        self.keyword("TITLE")?;
        let (title, _) = self.string("snippet title")?;
        self.keyword("HTML")?;
        let t = self.advance();
        let Tok::Heredoc(html) = t.tok else {
            return Err(self.unexpected(&t, "<<<HTML>>> block"));
        };
        Ok(Snippet { id, title, html })
    }

    // RULE id [PRIORITY n] IF expr THEN SHOW snippet
    fn rule(&mut self) -> Result<Rule, RuleError> {
        self.keyword("RULE")?;
        let id = self.identifier("rule id")?;
        self.current_rule = id.clone();
        let mut priority = 0;
        if self.is_keyword("PRIORITY") {
            self.advance();
            let t = self.advance();
            priority = match t.tok {
                Tok::Int(n) => i32::try_from(n)
                    .map_err(|_| self.error_at(&t, format!("priority {n} out of range")))?,
                _ => return Err(self.unexpected(&t, "priority integer")),
            };
        }
        self.keyword("IF")?;
        let condition = self.or_expr()?;
        self.keyword("THEN")?;
        self.keyword("SHOW")?;
        let snippet_id = self.identifier("snippet id")?;
        Ok(Rule {
            id,
            priority,
            condition,
            snippet_id,
        })
    }

    fn enter(&mut self) -> Result<(), RuleError> {
        self.nesting += 1;
        if self.nesting > 2 * MAX_PREDICATE_DEPTH {
            return Err(ValidationError::DepthExceeded {
                rule: self.current_rule.clone(),
            }
            .into());
        }
        Ok(())
    }

    // long AND/OR chains nest without recursion, so they are bounded here
    fn check_depth(&self, p: &Predicate) -> Result<(), RuleError> {
        if p.depth() > MAX_PREDICATE_DEPTH {
            return Err(ValidationError::DepthExceeded {
                rule: self.current_rule.clone(),
            }
            .into());
        }
        Ok(())
    }

    fn or_expr(&mut self) -> Result<Predicate, RuleError> {
        let mut lhs = self.and_expr()?;
        while self.is_keyword("OR") {
            self.advance();
            lhs = Predicate::or(lhs, self.and_expr()?);
            self.check_depth(&lhs)?;
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Predicate, RuleError> {
        let mut lhs = self.not_expr()?;
        while self.is_keyword("AND") {
            self.advance();
            lhs = Predicate::and(lhs, self.not_expr()?);
            self.check_depth(&lhs)?;
        }
        Ok(lhs)
    }

    fn not_expr(&mut self) -> Result<Predicate, RuleError> {
        if self.is_keyword("NOT") {
            self.advance();
            self.enter()?;
            let inner = self.not_expr()?;
            self.nesting -= 1;
            return Ok(Predicate::negate(inner));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Predicate, RuleError> {
        let t = self.advance();
        match &t.tok {
            Tok::LParen => {
                self.enter()?;
                let inner = self.or_expr()?;
                self.nesting -= 1;
                self.expect(Tok::RParen)?;
                Ok(inner)
            }
            Tok::Word(w) if w == "visible" => {
                self.expect(Tok::LParen)?;
                let selector = self.selector()?;
                self.expect(Tok::RParen)?;
                Ok(Predicate::Visible(selector))
            }
            Tok::Word(w) if w == "rssi" => {
                self.expect(Tok::LParen)?;
                let selector = self.selector()?;
                self.expect(Tok::RParen)?;
                let op_tok = self.advance();
                let op = match op_tok.tok {
                    Tok::Ge => CmpOp::Ge,
                    Tok::Gt => CmpOp::Gt,
                    Tok::Le => CmpOp::Le,
                    Tok::Lt => CmpOp::Lt,
                    _ => return Err(self.unexpected(&op_tok, "comparison operator")),
                };
                let n_tok = self.advance();
                let Tok::Int(n) = n_tok.tok else {
                    return Err(self.unexpected(&n_tok, "RSSI threshold in dBm"));
                };
                if !(i64::from(MIN_RSSI_DBM)..=i64::from(MAX_RSSI_DBM)).contains(&n) {
                    return Err(ValidationError::ThresholdLiteralOutOfRange {
                        line: n_tok.line,
                        column: n_tok.column,
                        threshold: n,
                    }
                    .into());
                }
                Ok(Predicate::Rssi {
                    selector,
                    op,
                    threshold: n as i32,
                })
            }
            Tok::Word(w) if w == "time" => {
                self.expect(Tok::LParen)?;
                let start = self.time_of_day()?;
                self.expect(Tok::Comma)?;
                let end = self.time_of_day()?;
                self.expect(Tok::RParen)?;
                Ok(Predicate::TimeIn { start, end })
            }
            _ => Err(self.unexpected(&t, "visible(..), rssi(..), time(..), NOT or '('")),
        }
    }

    fn time_of_day(&mut self) -> Result<MinuteOfDay, RuleError> {
        let t = self.advance();
        let Tok::Time(text) = &t.tok else {
            return Err(self.unexpected(&t, "HH:MM time"));
        };
        text.parse().map_err(|_| {
            ValidationError::TimeOutOfRange {
                line: t.line,
                column: t.column,
                text: text.clone(),
            }
            .into()
        })
    }

    // ssid:"name" | mac:"AA:BB:CC:DD:EE:FF"
    fn selector(&mut self) -> Result<NetworkSelector, RuleError> {
        let kind = self.advance();
        let Tok::Word(kind_name) = &kind.tok else {
            return Err(self.unexpected(&kind, "ssid: or mac: selector"));
        };
        if kind_name != "ssid" && kind_name != "mac" {
            return Err(self.unexpected(&kind, "ssid: or mac: selector"));
        }
        self.expect(Tok::Colon)?;
        let (value, at) = self.string("quoted selector value")?;
        let invalid = |message: String| -> RuleError {
            ValidationError::InvalidSelector {
                line: at.line,
                column: at.column,
                message,
            }
            .into()
        };
        if kind_name == "mac" {
            return value
                .parse::<MacAddr>()
                .map(NetworkSelector::Mac)
                .map_err(|e| invalid(e.to_string()));
        }
        if value.is_empty() {
            return Err(invalid(
                "empty SSID never matches; use a mac: selector".into(),
            ));
        }
        if value.len() > MAX_SSID_BYTES {
            return Err(invalid(format!("SSID longer than {MAX_SSID_BYTES} bytes")));
        }
        Ok(NetworkSelector::Ssid(value))
    }
}
