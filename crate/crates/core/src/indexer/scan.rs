//! Lexical pre-scan for `sorry` tokens in Lean source.
//!
//! Skips line comments, nested block comments, string literals (plain,
//! raw and interpolated), character literals and `«escaped»` identifiers.
//! Identifier boundaries follow Lean's `isIdFirst`/`isIdRest`, so `sorryAx`,
//! `mysorry`, `sorry'`, `sorry?` and `sorry₁` are all distinct names, and a
//! `sorry` reached through a dot (`Foo.sorry`) is a name component rather
//! than the placeholder term.

use serde::{Deserialize, Serialize};

use crate::model::{SourceLocation, Span};

pub const SORRY: &str = "sorry";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanHit {
    pub span: Span,
    pub token: String,
}

impl ScanHit {
    pub fn location(&self, path: &str) -> SourceLocation {
        SourceLocation::new(path, self.span)
    }
}

/// Greek, Coptic and letter-like symbol ranges Lean accepts in names.
pub fn is_letter_like(c: char) -> bool {
    let u = c as u32;
    (0x3b1..=0x3c9).contains(&u) && u != 0x3bb
        || (0x391..=0x3a9).contains(&u) && u != 0x3a0 && u != 0x3a3
        || (0x3ca..=0x3fb).contains(&u)
        || (0x1f00..=0x1ffe).contains(&u)
        || (0x2100..=0x214f).contains(&u)
        || (0x1d49c..=0x1d59f).contains(&u)
}

pub fn is_subscript_alnum(c: char) -> bool {
    let u = c as u32;
    (0x2080..=0x2089).contains(&u)
        || (0x2090..=0x209c).contains(&u)
        || (0x1d62..=0x1d6a).contains(&u)
        || u == 0x2c7c
}

pub fn is_id_first(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_' || is_letter_like(c)
}

pub fn is_id_rest(c: char) -> bool {
    c.is_ascii_alphanumeric()
        || matches!(c, '_' | '\'' | '!' | '?')
        || is_letter_like(c)
        || is_subscript_alnum(c)
}

/// Character cursor tracking 1-based lines and 0-based code-point columns.
struct Cursor<'a> {
    chars: Vec<char>,
    pos: usize,
    line: u32,
    column: u32,
    _src: std::marker::PhantomData<&'a str>,
}

impl<'a> Cursor<'a> {
    fn new(src: &'a str) -> Self {
        Cursor {
            chars: src.chars().collect(),
            pos: 0,
            line: 1,
            column: 0,
            _src: std::marker::PhantomData,
        }
    }

    fn peek(&self, ahead: usize) -> Option<char> {
        self.chars.get(self.pos + ahead).copied()
    }

    fn prev(&self) -> Option<char> {
        self.pos.checked_sub(1).map(|i| self.chars[i])
    }

    fn at(&self, s: &str) -> bool {
        s.chars().enumerate().all(|(i, c)| self.peek(i) == Some(c))
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek(0)?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.column = 0;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn bump_n(&mut self, n: usize) {
        for _ in 0..n {
            self.bump();
        }
    }

    fn line_comment(&mut self) {
        while let Some(c) = self.peek(0) {
            if c == '\n' {
                break;
            }
            self.bump();
        }
    }

    /// Consumes a `/- ... -/` comment, honoring nesting. Unterminated
    /// comments run to end of input.
    fn block_comment(&mut self) {
        self.bump_n(2);
        let mut depth = 1usize;
        while self.peek(0).is_some() {
            if self.at("/-") {
                depth += 1;
                self.bump_n(2);
            } else if self.at("-/") {
                depth -= 1;
                self.bump_n(2);
                if depth == 0 {
                    return;
                }
            } else {
                self.bump();
            }
        }
    }

    fn string(&mut self) {
        self.bump();
        while let Some(c) = self.bump() {
            match c {
                '\\' => {
                    self.bump();
                }
                '"' => return,
                _ => {}
            }
        }
    }

    /// Raw string `r#*"..."#*` if one starts here.
    fn try_raw_string(&mut self) -> bool {
        if self.peek(0) != Some('r') {
            return false;
        }
        let hashes = (1..).take_while(|&i| self.peek(i) == Some('#')).count();
        if self.peek(1 + hashes) != Some('"') {
            return false;
        }
        self.bump_n(2 + hashes);
        let closing: String = std::iter::once('"').chain(std::iter::repeat_n('#', hashes)).collect();
        while self.peek(0).is_some() {
            if self.at(&closing) {
                self.bump_n(closing.chars().count());
                return true;
            }
            self.bump();
        }
        true
    }

    /// Character literal `'c'` or `'\x'` if one starts here.
    fn try_char_literal(&mut self) -> bool {
        let len = match (self.peek(1), self.peek(2), self.peek(3)) {
            (Some('\\'), Some(_), Some('\'')) => 4,
            (Some('\\'), Some(_), _) => {
                // Longer escapes such as '\x41' or '\u{2200}'.
                match (4..12).find(|&i| self.peek(i) == Some('\'')) {
                    Some(end) => end + 1,
                    None => return false,
                }
            }
            (Some(c), Some('\''), _) if c != '\n' && c != '\'' => 3,
            _ => return false,
        };
        self.bump_n(len);
        true
    }

    fn escaped_ident(&mut self) {
        while let Some(c) = self.bump() {
            if c == '»' {
                return;
            }
        }
    }

    fn word(&mut self) -> String {
        let mut s = String::new();
        while let Some(c) = self.peek(0) {
            if !is_id_rest(c) {
                break;
            }
            s.push(c);
            self.bump();
        }
        s
    }
}

/// Positions of every standalone `sorry` token outside comments and literals.
pub fn scan_for_sorries(source: &str) -> Vec<ScanHit> {
    let mut cur = Cursor::new(source);
    let mut hits = Vec::new();
    while let Some(c) = cur.peek(0) {
        if cur.at("--") {
            cur.line_comment();
        } else if cur.at("/-") {
            cur.block_comment();
        } else if c == '"' {
            cur.string();
        } else if c == '«' {
            cur.escaped_ident();
        } else if c == '\'' {
            if !cur.try_char_literal() {
                cur.bump();
            }
        } else if cur.try_raw_string() {
        } else if is_id_first(c) {
            let after_dot = cur.prev() == Some('.');
            let (line, column) = (cur.line, cur.column);
            let word = cur.word();
            if word == SORRY && !after_dot {
                hits.push(ScanHit {
                    span: Span {
                        start_line: line,
                        start_column: column,
                        end_line: line,
                        end_column: column + SORRY.len() as u32,
                    },
                    token: word,
                });
            }
        } else if c.is_ascii_digit() {
            cur.word();
        } else {
            cur.bump();
        }
    }
    hits
}
