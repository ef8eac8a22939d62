//! Minimal S-expression reader for SMT-LIB scripts.

use crate::EngineError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Sexp {
    Atom(String),
    List(Vec<Sexp>),
}

impl Sexp {
    pub fn atom(&self) -> Option<&str> {
        match self {
            Sexp::Atom(s) => Some(s),
            Sexp::List(_) => None,
        }
    }

    pub fn list(&self) -> Option<&[Sexp]> {
        match self {
            Sexp::Atom(_) => None,
            Sexp::List(items) => Some(items),
        }
    }
}

impl std::fmt::Display for Sexp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Sexp::Atom(s) => write!(f, "{s}"),
            Sexp::List(items) => {
                write!(f, "(")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, " ")?;
                    }
                    write!(f, "{item}")?;
                }
                write!(f, ")")
            }
        }
    }
}

/// Reads every top-level form in `input`. Comments run from `;` to end of line.
pub fn parse_all(input: &str) -> Result<Vec<Sexp>, EngineError> {
    let mut parser = Reader {
        bytes: input.as_bytes(),
        pos: 0,
    };
    let mut forms = Vec::new();
    loop {
        parser.skip_trivia();
        if parser.at_end() {
            return Ok(forms);
        }
        forms.push(parser.read_form()?);
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn at_end(&self) -> bool {
        self.pos >= self.bytes.len()
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn skip_trivia(&mut self) {
        while let Some(b) = self.peek() {
            match b {
                b' ' | b'\t' | b'\r' | b'\n' => self.pos += 1,
                b';' => {
                    while let Some(c) = self.peek() {
                        self.pos += 1;
                        if c == b'\n' {
                            break;
                        }
                    }
                }
                _ => return,
            }
        }
    }

    fn read_form(&mut self) -> Result<Sexp, EngineError> {
        self.skip_trivia();
        match self.peek() {
            None => Err(EngineError::Parse("unexpected end of input".into())),
            Some(b'(') => {
                self.pos += 1;
                let mut items = Vec::new();
                loop {
                    self.skip_trivia();
                    match self.peek() {
                        None => {
                            return Err(EngineError::Parse("unclosed '('".into()));
                        }
                        Some(b')') => {
                            self.pos += 1;
                            return Ok(Sexp::List(items));
                        }
                        Some(_) => items.push(self.read_form()?),
                    }
                }
            }
            Some(b')') => Err(EngineError::Parse(format!(
                "unmatched ')' at byte {}",
                self.pos
            ))),
            Some(b'"') => {
                let start = self.pos;
                self.pos += 1;
                let mut text = String::from("\"");
                loop {
                    match self.peek() {
                        None => {
                            return Err(EngineError::Parse(format!(
                                "unterminated string starting at byte {start}"
                            )));
                        }
                        Some(b'"') => {
                            self.pos += 1;
                            // SMT-LIB escapes a quote by doubling it.
                            if self.peek() == Some(b'"') {
                                text.push('"');
                                self.pos += 1;
                            } else {
                                text.push('"');
                                return Ok(Sexp::Atom(text));
                            }
                        }
                        Some(c) => {
                            text.push(c as char);
                            self.pos += 1;
                        }
                    }
                }
            }
            Some(_) => {
                let start = self.pos;
                while let Some(b) = self.peek() {
                    if matches!(b, b' ' | b'\t' | b'\r' | b'\n' | b'(' | b')' | b';') {
                        break;
                    }
                    self.pos += 1;
                }
                let text = std::str::from_utf8(&self.bytes[start..self.pos])
                    .map_err(|_| EngineError::Parse("non-UTF-8 atom".into()))?;
                Ok(Sexp::Atom(text.to_owned()))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_nested_forms_and_comments() {
        let forms = parse_all("; header\n(assert (<= x 3)) ; tail\n(check-sat)").unwrap();
        assert_eq!(forms.len(), 2);
        assert_eq!(forms[1], Sexp::Atom("check-sat".into()).wrap_single());
    }

    #[test]
    fn rejects_unbalanced_input() {
        assert!(parse_all("(assert (= x 1)").is_err());
        assert!(parse_all(")").is_err());
    }

    impl Sexp {
        fn wrap_single(self) -> Sexp {
            Sexp::List(vec![self])
        }
    }
}
