//! Term text syntax and the theory DSL.
//!
//! ```text
//! theory maltsev
//! op p/3
//! axiom p(x,y,y) = x
//! axiom p(y,y,x) = x   # comments start with '#'
//! ```

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::term::{Sym, Term, Var};
use crate::theory::{check_symbols, Identity, Signature, Theory};

struct Cursor<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
    col_offset: usize,
}

impl<'a> Cursor<'a> {
    fn new(src: &'a str, line: usize, col_offset: usize) -> Self {
        Cursor {
            src: src.as_bytes(),
            pos: 0,
            line,
            col_offset,
        }
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            column: self.col_offset + self.pos + 1,
            message: message.into(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.err(format!("expected `{}`", c as char)))
        }
    }

    fn ident(&mut self) -> Result<&'a str> {
        self.skip_ws();
        let start = self.pos;
        match self.src.get(self.pos) {
            Some(c) if c.is_ascii_alphabetic() => self.pos += 1,
            _ => return Err(self.err("expected an identifier")),
        }
        while self
            .src
            .get(self.pos)
            .is_some_and(|c| c.is_ascii_alphanumeric() || *c == b'_')
        {
            self.pos += 1;
        }
        Ok(std::str::from_utf8(&self.src[start..self.pos]).expect("ascii"))
    }

    fn term(&mut self) -> Result<Term> {
        let start = self.pos;
        let name = self.ident()?;
        if self.eat(b'(') {
            let mut children = Vec::new();
            if !self.eat(b')') {
                loop {
                    children.push(self.term()?);
                    if self.eat(b')') {
                        break;
                    }
                    self.expect(b',')?;
                }
            }
            Ok(Term::App(Sym::new(name), children))
        } else if name.as_bytes()[0].is_ascii_lowercase() {
            Ok(Term::Var(Var::new(name)))
        } else {
            self.pos = start;
            self.skip_ws();
            Err(self.err(format!(
                "variable `{name}` must start with a lowercase letter"
            )))
        }
    }

    fn at_end(&mut self) -> bool {
        self.peek().is_none()
    }
}

pub fn parse_term(s: &str) -> Result<Term> {
    let mut c = Cursor::new(s, 1, 0);
    let t = c.term()?;
    if !c.at_end() {
        return Err(c.err("trailing input"));
    }
    Ok(t)
}

/// `lhs = rhs`; `≈` is accepted as well.
pub fn parse_identity(s: &str) -> Result<Identity> {
    parse_identity_at(&s.replace('≈', "="), 1, 0)
}

fn parse_identity_at(s: &str, line: usize, col: usize) -> Result<Identity> {
    let mut c = Cursor::new(s, line, col);
    let lhs = c.term()?;
    c.expect(b'=')?;
    let rhs = c.term()?;
    if !c.at_end() {
        return Err(c.err("trailing input"));
    }
    Ok(Identity::new(lhs, rhs))
}

/// Parse the theory DSL. Operation declarations may appear anywhere in the file.
pub fn parse_theory(text: &str) -> Result<Theory> {
    let mut name: Option<String> = None;
    let mut sig = Signature::new();
    let mut axioms: Vec<(usize, usize, &str)> = Vec::new();

    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let content = raw.split('#').next().unwrap_or("");
        let trimmed = content.trim_start();
        if trimmed.trim().is_empty() {
            continue;
        }
        let indent = content.len() - trimmed.len();
        let (kw, rest) = trimmed
            .split_once(char::is_whitespace)
            .unwrap_or((trimmed.trim_end(), ""));
        let rest_col = indent + kw.len() + 1;
        let perr = |column: usize, message: String| Error::Parse {
            line,
            column,
            message,
        };
        match kw {
            "theory" => {
                let n = rest.trim();
                if n.is_empty() || n.contains(char::is_whitespace) {
                    return Err(perr(rest_col, "expected a single theory name".into()));
                }
                if name.replace(n.to_owned()).is_some() {
                    return Err(perr(indent + 1, "duplicate `theory` line".into()));
                }
            }
            "op" => {
                let decl = rest.trim();
                let (sym, arity) = decl
                    .split_once('/')
                    .ok_or_else(|| perr(rest_col, "expected `op <symbol>/<arity>`".into()))?;
                let sym = sym.trim();
                let valid = sym.as_bytes().first().is_some_and(u8::is_ascii_alphabetic)
                    && sym.bytes().all(|c| c.is_ascii_alphanumeric() || c == b'_');
                if !valid {
                    return Err(perr(rest_col, format!("invalid operation symbol `{sym}`")));
                }
                let arity: usize = arity
                    .trim()
                    .parse()
                    .map_err(|_| perr(rest_col, format!("invalid arity `{}`", arity.trim())))?;
                if !sig.insert(Sym::new(sym), arity) {
                    return Err(perr(rest_col, format!("symbol `{sym}` declared twice")));
                }
            }
            "axiom" => axioms.push((line, rest_col, rest)),
            other => return Err(perr(indent + 1, format!("unknown declaration `{other}`"))),
        }
    }

    let mut ids = Vec::with_capacity(axioms.len());
    for (line, col, src) in axioms {
        let e = parse_identity_at(&src.replace('≈', "="), line, col)?;
        check_symbols(&sig, &e.lhs, Some(line))?;
        check_symbols(&sig, &e.rhs, Some(line))?;
        ids.push(e);
    }
    Theory::new(name.unwrap_or_else(|| "unnamed".to_owned()), sig, ids)
}

pub fn render_theory(theory: &Theory) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "theory {}", theory.name);
    for (f, a) in theory.signature().iter() {
        let _ = writeln!(out, "op {f}/{a}");
    }
    for e in theory.identities() {
        let _ = writeln!(out, "axiom {e}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::theory::{presets, theory_equal};

    #[test]
    fn parses_maltsev_file() {
        let src = "# Maltsev term\ntheory maltsev\nop p/3\naxiom p(x,y,y) = x\naxiom p(y, y, x) = x  # second\n";
        let t = parse_theory(src).unwrap();
        assert_eq!(t.name, "maltsev");
        assert!(theory_equal(&t, &presets::maltsev()).unwrap());
    }

    #[test]
    fn empty_axiom_list() {
        let t = parse_theory("theory empty\nop f/2\n").unwrap();
        assert!(t.is_empty());
        assert_eq!(t.signature().len(), 1);
    }

    #[test]
    fn arity_mismatch_reports_line() {
        let err = parse_theory("theory t\nop p/3\naxiom p(x,y) = x\n").unwrap_err();
        match err {
            Error::ArityMismatch {
                line,
                expected,
                found,
                ..
            } => assert_eq!((line, expected, found), (3, 3, 2)),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn unknown_symbol_reports_line() {
        let err = parse_theory("theory t\nop p/3\n\naxiom q(x) = x\n").unwrap_err();
        assert!(
            matches!(err, Error::UnknownSymbol { line: Some(4), .. }),
            "{err}"
        );
    }

    #[test]
    fn parse_error_location() {
        let err = parse_theory("theory t\nop p/3\naxiom p(x,,y) = x\n").unwrap_err();
        match err {
            Error::Parse { line, column, .. } => {
                assert_eq!(line, 3);
                assert_eq!(column, 11);
            }
            e => panic!("unexpected {e}"),
        }
        assert!(parse_theory("theory t\nfoo bar\n").is_err());
        assert!(parse_term("X").is_err());
        assert!(parse_term("f(x").is_err());
        assert!(parse_term("f(x) y").is_err());
    }

    #[test]
    fn nullary_and_uppercase_symbols() {
        assert_eq!(parse_term("F(c(), x)").unwrap().to_string(), "F(c(),x)");
    }

    #[test]
    fn render_round_trip_presets() {
        for t in presets::all() {
            let back = parse_theory(&render_theory(&t)).unwrap();
            assert_eq!(back.name, t.name);
            assert!(theory_equal(&back, &t).unwrap());
        }
    }
}
