//! Recursive-descent parser for the concrete syntax.
//!
//! Precedence from tightest: `!`, unary temporal (`X G F`), `U` (right-assoc), `&`, `|`.

use thiserror::Error;

use super::Formula;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax(String),
    UnknownOperator(char),
    Interval(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} at byte {offset}")]
pub struct ParseError {
    pub offset: usize,
    pub kind: ParseErrorKind,
}

impl std::fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ParseErrorKind::Syntax(m) => write!(f, "syntax error: {m}"),
            ParseErrorKind::UnknownOperator(c) => write!(f, "unknown operator {c:?}"),
            ParseErrorKind::Interval(m) => write!(f, "malformed interval: {m}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    True,
    Not,
    And,
    Or,
    Next,
    Globally,
    Finally,
    Until,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Num(u64),
    End,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn tokens(src: &'a str) -> Result<Vec<(Tok, usize)>, ParseError> {
        let mut lx = Lexer { src: src.as_bytes(), pos: 0 };
        let mut out = Vec::new();
        loop {
            let (t, at) = lx.next_tok()?;
            let end = t == Tok::End;
            out.push((t, at));
            if end {
                return Ok(out);
            }
        }
    }

    fn next_tok(&mut self) -> Result<(Tok, usize), ParseError> {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let at = self.pos;
        let Some(&c) = self.src.get(self.pos) else {
            return Ok((Tok::End, at));
        };
        let single = match c {
            b'!' => Some(Tok::Not),
            b'&' => Some(Tok::And),
            b'|' => Some(Tok::Or),
            b'(' => Some(Tok::LParen),
            b')' => Some(Tok::RParen),
            b'[' => Some(Tok::LBracket),
            b']' => Some(Tok::RBracket),
            b',' => Some(Tok::Comma),
            _ => None,
        };
        if let Some(t) = single {
            self.pos += 1;
            return Ok((t, at));
        }
        if c.is_ascii_digit() {
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            let text = std::str::from_utf8(&self.src[at..self.pos]).unwrap();
            let n = text.parse::<u64>().map_err(|_| ParseError {
                offset: at,
                kind: ParseErrorKind::Interval(format!("number {text} out of range")),
            })?;
            return Ok((Tok::Num(n), at));
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            while self.pos < self.src.len()
                && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
            {
                self.pos += 1;
            }
            let word = std::str::from_utf8(&self.src[at..self.pos]).unwrap();
            let t = match word {
                "T" => Tok::True,
                "X" => Tok::Next,
                "G" => Tok::Globally,
                "F" => Tok::Finally,
                "U" => Tok::Until,
                _ => Tok::Ident(word.to_string()),
            };
            return Ok((t, at));
        }
        let ch = std::str::from_utf8(&self.src[at..]).ok().and_then(|s| s.chars().next()).unwrap_or('?');
        Err(ParseError { offset: at, kind: ParseErrorKind::UnknownOperator(ch) })
    }
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    i: usize,
}

/// Parses a formula from its concrete syntax.
pub fn parse(text: &str) -> Result<Formula, ParseError> {
    let mut p = Parser { toks: Lexer::tokens(text)?, i: 0 };
    let f = p.or()?;
    match p.peek() {
        Tok::End => Ok(f),
        t => Err(p.err(format!("unexpected {t:?} after formula"))),
    }
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.i].0
    }

    fn offset(&self) -> usize {
        self.toks[self.i].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.i].0.clone();
        if t != Tok::End {
            self.i += 1;
        }
        t
    }

    fn err(&self, msg: String) -> ParseError {
        ParseError { offset: self.offset(), kind: ParseErrorKind::Syntax(msg) }
    }

    fn expect(&mut self, t: Tok, what: &str) -> Result<(), ParseError> {
        if *self.peek() == t {
            self.bump();
            Ok(())
        } else {
            Err(self.err(format!("expected {what}")))
        }
    }

    fn or(&mut self) -> Result<Formula, ParseError> {
        let mut xs = vec![self.and()?];
        while *self.peek() == Tok::Or {
            self.bump();
            xs.push(self.and()?);
        }
        Ok(Formula::or(xs))
    }

    fn and(&mut self) -> Result<Formula, ParseError> {
        let mut xs = vec![self.until()?];
        while *self.peek() == Tok::And {
            self.bump();
            xs.push(self.until()?);
        }
        Ok(Formula::and(xs))
    }

    fn until(&mut self) -> Result<Formula, ParseError> {
        let left = self.unary()?;
        if *self.peek() != Tok::Until {
            return Ok(left);
        }
        self.bump();
        let bound = self.interval()?;
        let right = self.until()?;
        Ok(match bound {
            Some(n) => Formula::timed_until(left, right, n),
            None => Formula::until(left, right),
        })
    }

    /// Optional `[0,N]` suffix.
    fn interval(&mut self) -> Result<Option<u32>, ParseError> {
        if *self.peek() != Tok::LBracket {
            return Ok(None);
        }
        let start = self.offset();
        let bad = |offset: usize, m: &str| ParseError { offset, kind: ParseErrorKind::Interval(m.to_string()) };
        self.bump();
        match self.bump() {
            Tok::Num(0) => {}
            Tok::Num(_) => return Err(bad(start, "lower bound must be 0")),
            _ => return Err(bad(self.toks[self.i.saturating_sub(1)].1, "expected lower bound")),
        }
        if self.bump() != Tok::Comma {
            return Err(bad(self.toks[self.i - 1].1, "expected ','"));
        }
        let at = self.offset();
        let n = match self.bump() {
            Tok::Num(n) => u32::try_from(n).map_err(|_| bad(at, "upper bound too large"))?,
            _ => return Err(bad(at, "expected upper bound")),
        };
        if self.bump() != Tok::RBracket {
            return Err(bad(self.toks[self.i - 1].1, "expected ']'"));
        }
        Ok(Some(n))
    }

    fn unary(&mut self) -> Result<Formula, ParseError> {
        match self.peek() {
            Tok::Not => {
                self.bump();
                Ok(Formula::not(self.unary()?))
            }
            Tok::Next => {
                self.bump();
                Ok(Formula::next(self.unary()?))
            }
            Tok::Globally => {
                self.bump();
                Ok(Formula::globally(self.unary()?))
            }
            Tok::Finally => {
                self.bump();
                match self.interval()? {
                    Some(n) => Ok(Formula::timed_until(Formula::True, self.unary()?, n)),
                    None => Ok(Formula::finally(self.unary()?)),
                }
            }
            _ => self.primary(),
        }
    }

    fn primary(&mut self) -> Result<Formula, ParseError> {
        match self.bump() {
            Tok::True => Ok(Formula::True),
            Tok::Ident(name) => Ok(Formula::Atom(name)),
            Tok::LParen => {
                let f = self.or()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(f)
            }
            t => {
                self.i = self.i.saturating_sub(usize::from(t != Tok::End));
                Err(self.err(format!("expected a formula, found {t:?}")))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a(n: &str) -> Formula {
        Formula::atom(n)
    }

    #[test]
    fn finally_atom() {
        assert_eq!(parse("F p").unwrap(), Formula::finally(a("p")));
    }

    #[test]
    fn negated_until() {
        assert_eq!(parse("(!d) U k").unwrap(), Formula::until(Formula::not(a("d")), a("k")));
        assert_eq!(parse("!d U k").unwrap(), Formula::until(Formula::not(a("d")), a("k")));
    }

    #[test]
    fn globally_until() {
        assert_eq!(parse("G(p U r)").unwrap(), Formula::globally(Formula::until(a("p"), a("r"))));
    }

    #[test]
    fn precedence_and_assoc() {
        let f = parse("a | b & c U d U e").unwrap();
        let u = Formula::until(a("c"), Formula::until(a("d"), a("e")));
        assert_eq!(f, Formula::Or(vec![a("a"), Formula::And(vec![a("b"), u])]));
        assert_eq!(parse("a & b & c").unwrap(), Formula::And(vec![a("a"), a("b"), a("c")]));
        assert_eq!(
            parse("(a & b) & c").unwrap(),
            Formula::And(vec![Formula::And(vec![a("a"), a("b")]), a("c")])
        );
    }

    #[test]
    fn timed_forms() {
        assert_eq!(parse("T U[0,60] w").unwrap(), Formula::timed_until(Formula::True, a("w"), 60));
        assert_eq!(parse("F[0,5] w").unwrap(), Formula::timed_until(Formula::True, a("w"), 5));
    }

    #[test]
    fn errors_carry_offsets() {
        let e = parse("p & ").unwrap_err();
        assert_eq!(e.offset, 4);
        let e = parse("p U[1,4] q").unwrap_err();
        assert!(matches!(e.kind, ParseErrorKind::Interval(_)));
        assert_eq!(e.offset, 3);
        let e = parse("p # q").unwrap_err();
        assert_eq!(e, ParseError { offset: 2, kind: ParseErrorKind::UnknownOperator('#') });
        assert!(matches!(parse("p U[0,] q").unwrap_err().kind, ParseErrorKind::Interval(_)));
        assert!(parse("(p").is_err());
        assert!(parse("p q").is_err());
    }
}
