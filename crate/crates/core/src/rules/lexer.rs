use super::RuleError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Tok {
    Word(String),
    Str(String),
    Int(i64),
    /// Raw `digits:digits` text, validated by the parser.
    Time(String),
    Heredoc(String),
    LParen,
    RParen,
    Comma,
    Colon,
    Ge,
    Gt,
    Le,
    Lt,
    Eof,
}

impl Tok {
    pub(crate) fn describe(&self) -> String {
        match self {
            Tok::Word(w) => format!("{w:?}"),
            Tok::Str(_) => "string literal".into(),
            Tok::Int(i) => format!("integer {i}"),
            Tok::Time(t) => format!("time {t}"),
            Tok::Heredoc(_) => "HTML block".into(),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::Comma => "','".into(),
            Tok::Colon => "':'".into(),
            Tok::Ge => "'>='".into(),
            Tok::Gt => "'>'".into(),
            Tok::Le => "'<='".into(),
            Tok::Lt => "'<'".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Spanned {
    pub tok: Tok,
    pub line: usize,
    pub column: usize,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
    line: usize,
    column: usize,
}

pub(crate) fn tokenize(src: &str) -> Result<Vec<Spanned>, RuleError> {
    let mut lexer = Lexer {
        src,
        pos: 0,
        line: 1,
        column: 1,
    };
    let mut out = Vec::new();
    loop {
        let tok = lexer.next_token()?;
        let done = tok.tok == Tok::Eof;
        out.push(tok);
        if done {
            return Ok(out);
        }
    }
}

impl Lexer<'_> {
    fn rest(&self) -> &str {
        &self.src[self.pos..]
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn peek_second(&self) -> Option<char> {
        self.rest().chars().nth(1)
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn error(&self, line: usize, column: usize, message: impl Into<String>) -> RuleError {
        RuleError::Parse {
            line,
            column,
            message: message.into(),
        }
    }

    fn skip_trivia(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.bump();
            } else if c == '#' {
                while let Some(c) = self.peek() {
                    if c == '\n' {
                        break;
                    }
                    self.bump();
                }
            } else {
                break;
            }
        }
    }

    fn next_token(&mut self) -> Result<Spanned, RuleError> {
        self.skip_trivia();
        let (line, column) = (self.line, self.column);
        let spanned = |tok| Spanned { tok, line, column };
        let Some(c) = self.peek() else {
            return Ok(spanned(Tok::Eof));
        };
        let tok = match c {
            '(' | ')' | ',' | ':' => {
                self.bump();
                match c {
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    ',' => Tok::Comma,
                    _ => Tok::Colon,
                }
            }
            '<' if self.rest().starts_with("<<<") => self.heredoc(line, column)?,
            '<' | '>' => {
                self.bump();
                let eq = self.peek() == Some('=');
                if eq {
                    self.bump();
                }
                match (c, eq) {
                    ('<', true) => Tok::Le,
                    ('<', false) => Tok::Lt,
                    (_, true) => Tok::Ge,
                    (_, false) => Tok::Gt,
                }
            }
            '"' => self.string(line, column)?,
            '-' if self.peek_second().is_some_and(|d| d.is_ascii_digit()) => {
                self.bump();
                self.number(line, column, true)?
            }
            d if d.is_ascii_digit() => self.number(line, column, false)?,
            a if a.is_ascii_alphabetic() || a == '_' => {
                let start = self.pos;
                while self
                    .peek()
                    .is_some_and(|c| c.is_ascii_alphanumeric() || c == '_')
                {
                    self.bump();
                }
                Tok::Word(self.src[start..self.pos].to_string())
            }
            other => {
                return Err(self.error(line, column, format!("unexpected character {other:?}")))
            }
        };
        Ok(spanned(tok))
    }

    fn number(&mut self, line: usize, column: usize, negative: bool) -> Result<Tok, RuleError> {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.bump();
        }
        if !negative
            && self.peek() == Some(':')
            && self.peek_second().is_some_and(|c| c.is_ascii_digit())
        {
            self.bump();
            while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                self.bump();
            }
            return Ok(Tok::Time(self.src[start..self.pos].to_string()));
        }
        let digits = &self.src[start..self.pos];
        let magnitude: i64 = digits
            .parse()
            .map_err(|_| self.error(line, column, format!("integer {digits} is too large")))?;
        Ok(Tok::Int(if negative { -magnitude } else { magnitude }))
    }

    fn string(&mut self, line: usize, column: usize) -> Result<Tok, RuleError> {
        self.bump();
        let mut out = String::new();
        loop {
            let (l, c) = (self.line, self.column);
            match self.bump() {
                None | Some('\n') => return Err(self.error(line, column, "unterminated string")),
                Some('"') => return Ok(Tok::Str(out)),
                Some('\\') => match self.bump() {
                    Some('"') => out.push('"'),
                    Some('\\') => out.push('\\'),
                    Some('n') => out.push('\n'),
                    Some('r') => out.push('\r'),
                    Some('t') => out.push('\t'),
                    Some('u') => out.push(self.unicode_escape(l, c)?),
                    _ => return Err(self.error(l, c, "unknown escape sequence")),
                },
                Some(ch) => out.push(ch),
            }
        }
    }

    // \u{XXXX}
    fn unicode_escape(&mut self, line: usize, column: usize) -> Result<char, RuleError> {
        let bad = |lx: &Self| lx.error(line, column, "malformed \\u{...} escape");
        if self.bump() != Some('{') {
            return Err(bad(self));
        }
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_hexdigit()) {
            self.bump();
        }
        let hex = &self.src[start..self.pos];
        if hex.is_empty() || hex.len() > 6 || self.bump() != Some('}') {
            return Err(bad(self));
        }
        u32::from_str_radix(hex, 16)
            .ok()
            .and_then(char::from_u32)
            .ok_or_else(|| bad(self))
    }

    /// `<<< ... >>>`. The body ends at the first run of three or more `>`;
    /// the last three of the run close the block.
    fn heredoc(&mut self, line: usize, column: usize) -> Result<Tok, RuleError> {
        for _ in 0..3 {
            self.bump();
        }
        let body_start = self.pos;
        let Some(offset) = self.rest().find(">>>") else {
            return Err(self.error(line, column, "unterminated HTML block, expected '>>>'"));
        };
        let run = self.rest()[offset..]
            .bytes()
            .take_while(|&b| b == b'>')
            .count();
        let body_end = body_start + offset + run - 3;
        while self.pos < body_end + 3 {
            self.bump();
        }
        Ok(Tok::Heredoc(self.src[body_start..body_end].to_string()))
    }
}
