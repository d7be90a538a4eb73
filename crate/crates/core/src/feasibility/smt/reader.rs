//! S-expression reader for SMT-LIB text with line and column positions.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Sexp {
    Atom(String, Pos),
    /// Contents of a string literal.
    Str(String, Pos),
    List(Vec<Sexp>, Pos),
}

impl Sexp {
    pub fn pos(&self) -> Pos {
        match self {
            Sexp::Atom(_, p) | Sexp::Str(_, p) | Sexp::List(_, p) => *p,
        }
    }

    pub fn atom(&self) -> Option<&str> {
        match self {
            Sexp::Atom(a, _) => Some(a),
            _ => None,
        }
    }
}

impl std::fmt::Display for Sexp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Sexp::Atom(a, _) => f.write_str(a),
            Sexp::Str(s, _) => write!(f, "\"{}\"", s.replace('"', "\"\"")),
            Sexp::List(items, _) => {
                f.write_str("(")?;
                for (i, it) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" ")?;
                    }
                    write!(f, "{it}")?;
                }
                f.write_str(")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReadError {
    pub pos: Pos,
    pub message: String,
}

struct Reader {
    chars: Vec<char>,
    at: usize,
    line: usize,
    col: usize,
}

impl Reader {
    fn pos(&self) -> Pos {
        Pos { line: self.line, col: self.col }
    }

    fn bump(&mut self) -> Option<char> {
        let c = *self.chars.get(self.at)?;
        self.at += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.at).copied()
    }

    fn skip_blank(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.bump();
            } else if c == ';' {
                while let Some(c) = self.bump() {
                    if c == '\n' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn read(&mut self) -> Result<Option<Sexp>, ReadError> {
        self.skip_blank();
        let pos = self.pos();
        let Some(c) = self.peek() else { return Ok(None) };
        match c {
            '(' => {
                self.bump();
                let mut items = Vec::new();
                loop {
                    self.skip_blank();
                    match self.peek() {
                        None => return Err(ReadError { pos: self.pos(), message: "unexpected end of file".into() }),
                        Some(')') => {
                            self.bump();
                            return Ok(Some(Sexp::List(items, pos)));
                        }
                        Some(_) => items.push(self.read()?.expect("non-empty input")),
                    }
                }
            }
            ')' => {
                self.bump();
                Err(ReadError { pos, message: "unexpected character ')'".into() })
            }
            '"' => {
                self.bump();
                let mut s = String::new();
                loop {
                    match self.bump() {
                        None => return Err(ReadError { pos, message: "unexpected end of file in string".into() }),
                        Some('"') if self.peek() == Some('"') => {
                            self.bump();
                            s.push('"');
                        }
                        Some('"') => return Ok(Some(Sexp::Str(s, pos))),
                        Some(c) => s.push(c),
                    }
                }
            }
            '|' => {
                self.bump();
                let mut s = String::new();
                loop {
                    match self.bump() {
                        None => return Err(ReadError { pos, message: "unexpected end of file in quoted symbol".into() }),
                        Some('|') => return Ok(Some(Sexp::Atom(s, pos))),
                        Some(c) => s.push(c),
                    }
                }
            }
            _ => {
                let mut s = String::new();
                while let Some(c) = self.peek() {
                    if c.is_whitespace() || c == '(' || c == ')' || c == ';' || c == '"' {
                        break;
                    }
                    s.push(c);
                    self.bump();
                }
                Ok(Some(Sexp::Atom(s, pos)))
            }
        }
    }
}

/// Reads all top-level expressions. On a syntax error, the expressions
/// read so far come back together with the error.
pub fn read_all(text: &str) -> (Vec<Sexp>, Option<ReadError>) {
    let mut r = Reader { chars: text.chars().collect(), at: 0, line: 1, col: 1 };
    let mut out = Vec::new();
    loop {
        match r.read() {
            Ok(Some(s)) => out.push(s),
            Ok(None) => return (out, None),
            Err(e) => return (out, Some(e)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positions_and_comments() {
        let (items, err) = read_all("; header\n(assert (> x 1))\n  (check-sat)");
        assert!(err.is_none());
        assert_eq!(items.len(), 2);
        assert_eq!(items[0].pos(), Pos { line: 2, col: 1 });
        let Sexp::List(inner, _) = &items[0] else { panic!() };
        assert_eq!(inner[1].pos(), Pos { line: 2, col: 9 });
        assert_eq!(items[1].pos(), Pos { line: 3, col: 3 });
    }

    #[test]
    fn unbalanced_input_reports_error() {
        let (items, err) = read_all("(check-sat)\n(assert (> x 1)");
        assert_eq!(items.len(), 1);
        assert_eq!(err.unwrap().message, "unexpected end of file");
    }

    #[test]
    fn strings_and_quoted_symbols() {
        let (items, _) = read_all("(echo \"a \"\"b\"\"\") |odd name|");
        let Sexp::List(inner, _) = &items[0] else { panic!() };
        assert_eq!(inner[1], Sexp::Str("a \"b\"".into(), Pos { line: 1, col: 7 }));
        assert_eq!(items[1].atom(), Some("odd name"));
    }
}
