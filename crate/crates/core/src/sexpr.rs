//! Span-tracking S-expression reader shared by the `.probe` parser and the
//! solver-output parser. Atoms are raw token text; interpretation (numbers,
//! identifiers, strings) happens in the consumers.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub line: u32,
    pub column: u32,
}

impl Span {
    pub fn join(self, other: Span) -> Span {
        Span {
            start: self.start.min(other.start),
            end: self.end.max(other.end),
            line: self.line.min(other.line),
            column: if other.line < self.line { other.column } else { self.column },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SNode {
    /// Bare token, `text` exactly as written.
    Atom { text: String, span: Span },
    /// Double-quoted string, `text` already unescaped.
    Str { text: String, span: Span },
    List { items: Vec<SNode>, span: Span },
}

impl SNode {
    pub fn span(&self) -> Span {
        match self {
            SNode::Atom { span, .. } | SNode::Str { span, .. } | SNode::List { span, .. } => *span,
        }
    }

    pub fn atom(&self) -> Option<&str> {
        match self {
            SNode::Atom { text, .. } => Some(text),
            _ => None,
        }
    }

    pub fn string(&self) -> Option<&str> {
        match self {
            SNode::Str { text, .. } => Some(text),
            _ => None,
        }
    }

    pub fn items(&self) -> Option<&[SNode]> {
        match self {
            SNode::List { items, .. } => Some(items),
            _ => None,
        }
    }

    /// `Some(rest)` when the node is a list whose head atom equals `head`.
    pub fn tagged(&self, head: &str) -> Option<&[SNode]> {
        let items = self.items()?;
        if items.first()?.atom()? == head {
            Some(&items[1..])
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReadError {
    pub message: String,
    pub span: Span,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    line: u32,
    column: u32,
}

/// Reads every top-level form in `text`. Total: any input either parses or
/// returns a `ReadError` — no panics, no unbounded recursion on flat input.
pub fn read_all(text: &str) -> Result<Vec<SNode>, ReadError> {
    let mut reader = Reader { bytes: text.as_bytes(), pos: 0, line: 1, column: 1 };
    let mut forms = Vec::new();
    loop {
        reader.skip_trivia();
        if reader.pos >= reader.bytes.len() {
            return Ok(forms);
        }
        forms.push(reader.node()?);
    }
}

impl<'a> Reader<'a> {
    fn here(&self) -> Span {
        Span { start: self.pos, end: self.pos, line: self.line, column: self.column }
    }

    fn bump(&mut self) -> u8 {
        let b = self.bytes[self.pos];
        self.pos += 1;
        if b == b'\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        b
    }

    fn skip_trivia(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b' ' | b'\t' | b'\r' | b'\n' => {
                    self.bump();
                }
                b';' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.bump();
                    }
                }
                _ => return,
            }
        }
    }

    fn node(&mut self) -> Result<SNode, ReadError> {
        let start = self.here();
        match self.bytes[self.pos] {
            b'(' => {
                self.bump();
                let mut items = Vec::new();
                loop {
                    self.skip_trivia();
                    if self.pos >= self.bytes.len() {
                        return Err(ReadError {
                            message: "unclosed '('".into(),
                            span: start,
                        });
                    }
                    if self.bytes[self.pos] == b')' {
                        self.bump();
                        let span = Span { end: self.pos, ..start };
                        return Ok(SNode::List { items, span });
                    }
                    items.push(self.node()?);
                }
            }
            b')' => Err(ReadError { message: "unexpected ')'".into(), span: start }),
            b'"' => self.string(start),
            _ => {
                let token_start = self.pos;
                while self.pos < self.bytes.len()
                    && !matches!(self.bytes[self.pos], b'(' | b')' | b'"' | b';' | b' ' | b'\t' | b'\r' | b'\n')
                {
                    self.bump();
                }
                let text = std::str::from_utf8(&self.bytes[token_start..self.pos])
                    .map_err(|_| ReadError { message: "invalid UTF-8 in token".into(), span: start })?
                    .to_owned();
                let span = Span { end: self.pos, ..start };
                Ok(SNode::Atom { text, span })
            }
        }
    }

    fn string(&mut self, start: Span) -> Result<SNode, ReadError> {
        self.bump(); // opening quote
        let mut text = String::new();
        loop {
            if self.pos >= self.bytes.len() {
                return Err(ReadError { message: "unterminated string".into(), span: start });
            }
            match self.bump() {
                b'"' => {
                    let span = Span { end: self.pos, ..start };
                    return Ok(SNode::Str { text, span });
                }
                b'\\' => {
                    if self.pos >= self.bytes.len() {
                        return Err(ReadError { message: "unterminated escape".into(), span: start });
                    }
                    match self.bump() {
                        b'"' => text.push('"'),
                        b'\\' => text.push('\\'),
                        b'n' => text.push('\n'),
                        b't' => text.push('\t'),
                        other => {
                            return Err(ReadError {
                                message: format!("unknown escape '\\{}'", other as char),
                                span: start,
                            })
                        }
                    }
                }
                byte => {
                    // Re-walk multi-byte UTF-8 sequences intact.
                    if byte < 0x80 {
                        text.push(byte as char);
                    } else {
                        let seq_start = self.pos - 1;
                        let width = match byte {
                            0xC0..=0xDF => 2,
                            0xE0..=0xEF => 3,
                            _ => 4,
                        };
                        for _ in 1..width {
                            if self.pos < self.bytes.len() {
                                self.bump();
                            }
                        }
                        let chunk = std::str::from_utf8(&self.bytes[seq_start..self.pos])
                            .map_err(|_| ReadError {
                                message: "invalid UTF-8 in string".into(),
                                span: start,
                            })?;
                        text.push_str(chunk);
                    }
                }
            }
        }
    }
}

/// Escapes `text` for embedding in a double-quoted string literal.
pub fn escape_string(text: &str) -> String {
    let mut out = String::with_capacity(text.len() + 2);
    out.push('"');
    for ch in text.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            other => out.push(other),
        }
    }
    out.push('"');
    out
}
