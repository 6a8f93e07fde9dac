//! Recursive-descent parser for field expressions.
//!
//! Grammar (see the project README for the EBNF):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' uint)?
//! atom   := number | coord | param | func '(' expr ')' | '(' expr ')'
//! ```
//!
//! Power binds tighter than unary minus (`-x1^2` is `-(x1^2)`), and its
//! exponent is a literal nonnegative integer, so chained `^` has nothing to
//! associate over and is rejected. Coordinates are `x1`, `x2`, ...;
//! any other identifier is a parameter name resolved at binding time.

use super::{Expr, FieldError};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    /// Coordinate `x<k>`, stored zero-based.
    Coord(usize),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

fn syntax(pos: usize, msg: impl Into<String>) -> FieldError {
    FieldError::Syntax {
        pos,
        msg: msg.into(),
    }
}

impl<'a> Lexer<'a> {
    fn tokens(src: &'a str) -> Result<Vec<(Tok, usize)>, FieldError> {
        let mut lx = Lexer {
            src: src.as_bytes(),
            pos: 0,
        };
        let mut out = Vec::new();
        loop {
            lx.skip_ws();
            let start = lx.pos;
            let Some(&c) = lx.src.get(lx.pos) else {
                return Ok(out);
            };
            let tok = match c {
                b'+' => {
                    lx.pos += 1;
                    Tok::Plus
                }
                b'-' => {
                    lx.pos += 1;
                    Tok::Minus
                }
                b'*' => {
                    lx.pos += 1;
                    Tok::Star
                }
                b'/' => {
                    lx.pos += 1;
                    Tok::Slash
                }
                b'^' => {
                    lx.pos += 1;
                    Tok::Caret
                }
                b'(' => {
                    lx.pos += 1;
                    Tok::LParen
                }
                b')' => {
                    lx.pos += 1;
                    Tok::RParen
                }
                b'0'..=b'9' | b'.' => lx.number()?,
                c if c.is_ascii_alphabetic() || c == b'_' => lx.ident()?,
                c => {
                    return Err(syntax(start, format!("unexpected character `{}`", c as char)));
                }
            };
            out.push((tok, start));
        }
    }

    fn skip_ws(&mut self) {
        while self
            .src
            .get(self.pos)
            .is_some_and(|c| c.is_ascii_whitespace())
        {
            self.pos += 1;
        }
    }

    fn number(&mut self) -> Result<Tok, FieldError> {
        let start = self.pos;
        while self.src.get(self.pos).is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            while self.src.get(self.pos).is_some_and(|c| c.is_ascii_digit()) {
                self.pos += 1;
            }
        }
        if matches!(self.src.get(self.pos), Some(b'e' | b'E')) {
            let mark = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if self.src.get(self.pos).is_some_and(|c| c.is_ascii_digit()) {
                while self.src.get(self.pos).is_some_and(|c| c.is_ascii_digit()) {
                    self.pos += 1;
                }
            } else {
                // `1e` followed by a non-digit: the `e` belongs to an
                // identifier, not this literal.
                self.pos = mark;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        text.parse::<f64>()
            .map(Tok::Num)
            .map_err(|_| syntax(start, format!("malformed number `{text}`")))
    }

    fn ident(&mut self) -> Result<Tok, FieldError> {
        let start = self.pos;
        while self
            .src
            .get(self.pos)
            .is_some_and(|c| c.is_ascii_alphanumeric() || *c == b'_')
        {
            self.pos += 1;
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        // `x` + digits is a coordinate; everything else is an identifier.
        if let Some(rest) = text.strip_prefix('x') {
            if !rest.is_empty() && rest.bytes().all(|c| c.is_ascii_digit()) {
                let k: usize = rest
                    .parse()
                    .map_err(|_| syntax(start, format!("coordinate index out of range `{text}`")))?;
                if k == 0 {
                    return Err(syntax(start, "coordinate indices start at x1"));
                }
                return Ok(Tok::Coord(k - 1));
            }
        }
        Ok(Tok::Ident(text.to_string()))
    }
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    idx: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.idx).map(|(t, _)| t)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.idx).map_or(self.end, |(_, p)| *p)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.idx).map(|(t, _)| t.clone());
        self.idx += 1;
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), FieldError> {
        let pos = self.pos();
        match self.bump() {
            Some(t) if t == want => Ok(()),
            _ => Err(syntax(pos, format!("expected {what}"))),
        }
    }

    fn expr(&mut self) -> Result<Expr, FieldError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.bump();
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(Tok::Minus) => {
                    self.bump();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, FieldError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.bump();
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Some(Tok::Slash) => {
                    self.bump();
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, FieldError> {
        if self.peek() == Some(&Tok::Minus) {
            self.bump();
            // Negating a literal is exact; folding keeps printed negative
            // constants structurally identical across a parse round trip.
            return Ok(match self.unary()? {
                Expr::Const(c) => Expr::Const(-c),
                e => Expr::Neg(Box::new(e)),
            });
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, FieldError> {
        let base = self.atom()?;
        if self.peek() != Some(&Tok::Caret) {
            return Ok(base);
        }
        self.bump();
        let pos = self.pos();
        match self.bump() {
            Some(Tok::Num(v)) if v.fract() == 0.0 && v >= 0.0 && v <= u32::MAX as f64 => {
                Ok(Expr::Pow(Box::new(base), v as u32))
            }
            _ => Err(syntax(pos, "expected a nonnegative integer exponent")),
        }
    }

    fn atom(&mut self) -> Result<Expr, FieldError> {
        let pos = self.pos();
        match self.bump() {
            Some(Tok::Num(v)) => Ok(Expr::Const(v)),
            Some(Tok::Coord(i)) => Ok(Expr::Var(i)),
            Some(Tok::Ident(name)) => {
                let func: Option<fn(Box<Expr>) -> Expr> = match name.as_str() {
                    "sin" => Some(Expr::Sin),
                    "cos" => Some(Expr::Cos),
                    "sqrt" => Some(Expr::Sqrt),
                    "abs" => Some(Expr::Abs),
                    "sign" => Some(Expr::Sign),
                    _ => None,
                };
                match func {
                    Some(ctor) => {
                        self.expect(Tok::LParen, &format!("`(` after function `{name}`"))?;
                        let arg = self.expr()?;
                        self.expect(Tok::RParen, "`)` closing function argument")?;
                        Ok(ctor(Box::new(arg)))
                    }
                    None => Ok(Expr::Param(name)),
                }
            }
            Some(Tok::LParen) => {
                let inner = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            _ => Err(syntax(pos, "expected a number, identifier, or `(`")),
        }
    }
}

/// Parses a single component expression. Coordinates and parameter names
/// are syntactic here; validity against a concrete dimension and parameter
/// set is checked when the expression is bound into a
/// [`super::VectorField`].
pub fn parse_expr(src: &str) -> Result<Expr, FieldError> {
    let toks = Lexer::tokens(src)?;
    let mut p = Parser {
        toks,
        idx: 0,
        end: src.len(),
    };
    let e = p.expr()?;
    if p.idx < p.toks.len() {
        return Err(syntax(p.pos(), "unexpected trailing input"));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pos_of(err: FieldError) -> usize {
        match err {
            FieldError::Syntax { pos, .. } => pos,
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn precedence_and_associativity() {
        // '^' over unary minus over '*' over '+'.
        assert_eq!(
            parse_expr("-x1^2").unwrap(),
            Expr::Neg(Box::new(Expr::Pow(Box::new(Expr::Var(0)), 2)))
        );
        assert_eq!(
            parse_expr("1 - 2 - 3").unwrap().to_string(),
            "1.0 - 2.0 - 3.0"
        );
        // Left association of subtraction: (1-2)-3 = -4.
        assert_eq!(
            parse_expr("1 - 2 - 3")
                .unwrap()
                .eval_real(&[], &Default::default()),
            -4.0
        );
        assert_eq!(
            parse_expr("2*x1 + 3*x2").unwrap(),
            Expr::Add(
                Box::new(Expr::Mul(
                    Box::new(Expr::Const(2.0)),
                    Box::new(Expr::Var(0))
                )),
                Box::new(Expr::Mul(
                    Box::new(Expr::Const(3.0)),
                    Box::new(Expr::Var(1))
                )),
            )
        );
        // a/b*c parses as (a/b)*c.
        assert_eq!(
            parse_expr("8/2*2").unwrap().eval_real(&[], &Default::default()),
            8.0
        );
    }

    #[test]
    fn exponent_must_be_integer_literal() {
        assert!(parse_expr("x1^2").is_ok());
        assert!(parse_expr("x1 ^ 12").is_ok());
        parse_expr("x1^-2").unwrap_err();
        parse_expr("x1^x2").unwrap_err();
        parse_expr("x1^2.5").unwrap_err();
        parse_expr("x1^(2)").unwrap_err();
        // Literal-only exponents leave chained '^' nothing to bind to.
        parse_expr("x1^2^3").unwrap_err();
    }

    #[test]
    fn error_positions_point_at_the_problem() {
        assert_eq!(pos_of(parse_expr("x1 + * x2").unwrap_err()), 5);
        assert_eq!(pos_of(parse_expr("x1 + (x2").unwrap_err()), 8);
        assert_eq!(pos_of(parse_expr("x1 ? x2").unwrap_err()), 3);
        assert_eq!(pos_of(parse_expr("x1 x2").unwrap_err()), 3);
        assert_eq!(pos_of(parse_expr("").unwrap_err()), 0);
        assert_eq!(pos_of(parse_expr("x0 + 1").unwrap_err()), 0);
    }

    #[test]
    fn functions_and_identifiers() {
        assert_eq!(
            parse_expr("sin(x1)").unwrap(),
            Expr::Sin(Box::new(Expr::Var(0)))
        );
        // Function names require parentheses.
        parse_expr("sin x1").unwrap_err();
        // Unknown names are parameters, including `x` without digits.
        assert_eq!(parse_expr("mu").unwrap(), Expr::Param("mu".to_string()));
        assert_eq!(parse_expr("x").unwrap(), Expr::Param("x".to_string()));
        assert_eq!(
            parse_expr("x12").unwrap(),
            Expr::Var(11),
            "multi-digit coordinate"
        );
        // Identifier with digits inside stays a parameter.
        assert_eq!(
            parse_expr("a1b").unwrap(),
            Expr::Param("a1b".to_string())
        );
    }

    #[test]
    fn numbers() {
        assert_eq!(parse_expr("2.5e-3").unwrap(), Expr::Const(2.5e-3));
        assert_eq!(parse_expr("1E4").unwrap(), Expr::Const(1e4));
        assert_eq!(parse_expr(".5").unwrap(), Expr::Const(0.5));
        assert_eq!(parse_expr("7").unwrap(), Expr::Const(7.0));
        // `2e` is the number 2 followed by the parameter `e`: trailing junk.
        parse_expr("2e").unwrap_err();
    }

    #[test]
    fn nested_unary_minus() {
        assert_eq!(
            parse_expr("x1 - -x2").unwrap().eval_real(&[1.0, 2.0], &Default::default()),
            3.0
        );
        assert_eq!(
            parse_expr("--x1").unwrap().eval_real(&[5.0], &Default::default()),
            5.0
        );
    }
}
