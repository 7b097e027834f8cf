//! Tiny expression language for coefficients and data in config files.
//!
//! Grammar (usual precedence, `^` right-associative and binding tighter than
//! unary minus):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?
//! primary := NUMBER | 'pi' | VAR | FUNC '(' expr [',' expr] ')' | '(' expr ')'
//! VAR     := 'x' | 'y' | 'e' | 't'
//! FUNC    := 'sin' | 'cos' | 'exp' | 'abs' | 'min' | 'max'
//! ```
//!
//! `x`, `y` are spatial coordinates, `e` is the state argument a coefficient
//! is evaluated at (temperature or potential), and `t` is time. Which
//! variables are admissible depends on the slot (a boundary flux may not
//! depend on `e`, say); callers enforce that via [`Expression::vars`].

use std::collections::BTreeSet;
use std::fmt;

use crate::error::{Result, SimError};

/// Variables the language knows about.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Var {
    X,
    Y,
    E,
    T,
}

impl Var {
    #[cfg(test)]
    fn name(self) -> &'static str {
        match self {
            Var::X => "x",
            Var::Y => "y",
            Var::E => "e",
            Var::T => "t",
        }
    }
}

/// Evaluation context: all variables are always present; unused ones are
/// simply ignored by the expression.
#[derive(Clone, Copy, Debug, Default)]
pub struct EvalCtx {
    pub x: f64,
    pub y: f64,
    pub e: f64,
    pub t: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Func1 {
    Sin,
    Cos,
    Exp,
    Abs,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Func2 {
    Min,
    Max,
}

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Num(f64),
    Var(Var),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Call1(Func1, Box<Node>),
    Call2(Func2, Box<Node>, Box<Node>),
}

/// A parsed expression. Keeps its source text so configs round-trip exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct Expression {
    src: String,
    ast: Node,
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.src)
    }
}

impl Expression {
    /// Parse `src`; errors carry the byte offset of the offending token.
    pub fn parse(src: &str) -> Result<Self> {
        let tokens = lex(src)?;
        let mut p = Parser { tokens, pos: 0, src };
        let ast = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(SimError::ParseError(format!(
                "unexpected trailing input at offset {} in '{}'",
                p.tokens[p.pos].1, src
            )));
        }
        Ok(Expression { src: src.to_string(), ast })
    }

    /// Source text the expression was parsed from.
    pub fn src(&self) -> &str {
        &self.src
    }

    /// Set of variables the expression actually references.
    pub fn vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        collect_vars(&self.ast, &mut out);
        out
    }

    /// Evaluate at the given context. Pure f64 arithmetic: division by zero
    /// and similar produce IEEE infinities/NaNs, which downstream bound
    /// audits reject.
    pub fn eval(&self, ctx: &EvalCtx) -> f64 {
        eval_node(&self.ast, ctx)
    }
}

fn collect_vars(n: &Node, out: &mut BTreeSet<Var>) {
    match n {
        Node::Num(_) => {}
        Node::Var(v) => {
            out.insert(*v);
        }
        Node::Neg(a) | Node::Call1(_, a) => collect_vars(a, out),
        Node::Add(a, b)
        | Node::Sub(a, b)
        | Node::Mul(a, b)
        | Node::Div(a, b)
        | Node::Pow(a, b)
        | Node::Call2(_, a, b) => {
            collect_vars(a, out);
            collect_vars(b, out);
        }
    }
}

fn eval_node(n: &Node, ctx: &EvalCtx) -> f64 {
    match n {
        Node::Num(v) => *v,
        Node::Var(Var::X) => ctx.x,
        Node::Var(Var::Y) => ctx.y,
        Node::Var(Var::E) => ctx.e,
        Node::Var(Var::T) => ctx.t,
        Node::Neg(a) => -eval_node(a, ctx),
        Node::Add(a, b) => eval_node(a, ctx) + eval_node(b, ctx),
        Node::Sub(a, b) => eval_node(a, ctx) - eval_node(b, ctx),
        Node::Mul(a, b) => eval_node(a, ctx) * eval_node(b, ctx),
        Node::Div(a, b) => eval_node(a, ctx) / eval_node(b, ctx),
        Node::Pow(a, b) => eval_node(a, ctx).powf(eval_node(b, ctx)),
        Node::Call1(f, a) => {
            let v = eval_node(a, ctx);
            match f {
                Func1::Sin => v.sin(),
                Func1::Cos => v.cos(),
                Func1::Exp => v.exp(),
                Func1::Abs => v.abs(),
            }
        }
        Node::Call2(f, a, b) => {
            let u = eval_node(a, ctx);
            let v = eval_node(b, ctx);
            match f {
                Func2::Min => u.min(v),
                Func2::Max => u.max(v),
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '+' => {
                out.push((Tok::Plus, i));
                i += 1;
            }
            '-' => {
                out.push((Tok::Minus, i));
                i += 1;
            }
            '*' => {
                out.push((Tok::Star, i));
                i += 1;
            }
            '/' => {
                out.push((Tok::Slash, i));
                i += 1;
            }
            '^' => {
                out.push((Tok::Caret, i));
                i += 1;
            }
            '(' => {
                out.push((Tok::LParen, i));
                i += 1;
            }
            ')' => {
                out.push((Tok::RParen, i));
                i += 1;
            }
            ',' => {
                out.push((Tok::Comma, i));
                i += 1;
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < bytes.len() && matches!(bytes[i] as char, '0'..='9' | '.') {
                    i += 1;
                }
                // Scientific notation: 1e-3, 2.5E+4. The exponent marker is
                // only consumed when followed by a digit or signed digit, so
                // '2*e' still lexes 'e' as the state variable.
                if i < bytes.len() && matches!(bytes[i] as char, 'e' | 'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && matches!(bytes[j] as char, '+' | '-') {
                        j += 1;
                    }
                    if j < bytes.len() && (bytes[j] as char).is_ascii_digit() {
                        i = j + 1;
                        while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text = &src[start..i];
                let v: f64 = text.parse().map_err(|_| {
                    SimError::ParseError(format!("bad number '{text}' at offset {start} in '{src}'"))
                })?;
                out.push((Tok::Num(v), start));
            }
            'a'..='z' | 'A'..='Z' | '_' => {
                let start = i;
                while i < bytes.len() && matches!(bytes[i] as char, 'a'..='z' | 'A'..='Z' | '0'..='9' | '_') {
                    i += 1;
                }
                out.push((Tok::Ident(src[start..i].to_string()), start));
            }
            _ => {
                return Err(SimError::ParseError(format!(
                    "unexpected character '{c}' at offset {i} in '{src}'"
                )))
            }
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<(Tok, usize)>,
    pos: usize,
    src: &'a str,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|(t, _)| t)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.tokens.get(self.pos).map(|(t, _)| t.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<()> {
        match self.bump() {
            Some(t) if t == want => Ok(()),
            other => Err(SimError::ParseError(format!(
                "expected {what} but found {other:?} in '{}'",
                self.src
            ))),
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = Node::Add(Box::new(lhs), Box::new(rhs));
                }
                Some(Tok::Minus) => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = Node::Sub(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.bump();
                    let rhs = self.unary()?;
                    lhs = Node::Mul(Box::new(lhs), Box::new(rhs));
                }
                Some(Tok::Slash) => {
                    self.bump();
                    let rhs = self.unary()?;
                    lhs = Node::Div(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if matches!(self.peek(), Some(Tok::Minus)) {
            self.bump();
            let inner = self.unary()?;
            return Ok(Node::Neg(Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.primary()?;
        if matches!(self.peek(), Some(Tok::Caret)) {
            self.bump();
            // Right-associative; exponent may carry its own unary minus.
            let exp = self.unary()?;
            return Ok(Node::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Node> {
        match self.bump() {
            Some(Tok::Num(v)) => Ok(Node::Num(v)),
            Some(Tok::LParen) => {
                let inner = self.expr()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(inner)
            }
            Some(Tok::Ident(name)) => match name.as_str() {
                "pi" => Ok(Node::Num(std::f64::consts::PI)),
                "x" => Ok(Node::Var(Var::X)),
                "y" => Ok(Node::Var(Var::Y)),
                "e" => Ok(Node::Var(Var::E)),
                "t" => Ok(Node::Var(Var::T)),
                "sin" | "cos" | "exp" | "abs" => {
                    self.expect(Tok::LParen, "'(' after function name")?;
                    let a = self.expr()?;
                    self.expect(Tok::RParen, "')'")?;
                    let f = match name.as_str() {
                        "sin" => Func1::Sin,
                        "cos" => Func1::Cos,
                        "exp" => Func1::Exp,
                        _ => Func1::Abs,
                    };
                    Ok(Node::Call1(f, Box::new(a)))
                }
                "min" | "max" => {
                    self.expect(Tok::LParen, "'(' after function name")?;
                    let a = self.expr()?;
                    self.expect(Tok::Comma, "',' between arguments")?;
                    let b = self.expr()?;
                    self.expect(Tok::RParen, "')'")?;
                    let f = if name == "min" { Func2::Min } else { Func2::Max };
                    Ok(Node::Call2(f, Box::new(a), Box::new(b)))
                }
                other => Err(SimError::ParseError(format!(
                    "unknown identifier '{other}' in '{}'",
                    self.src
                ))),
            },
            other => Err(SimError::ParseError(format!(
                "expected a value but found {other:?} in '{}'",
                self.src
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ev(src: &str, ctx: EvalCtx) -> f64 {
        Expression::parse(src).unwrap().eval(&ctx)
    }

    #[test]
    fn precedence_and_associativity() {
        let c = EvalCtx::default();
        assert_abs_diff_eq!(ev("2 + 3 * 4", c), 14.0);
        assert_abs_diff_eq!(ev("(2 + 3) * 4", c), 20.0);
        assert_abs_diff_eq!(ev("2 ^ 3 ^ 2", c), 512.0); // right-assoc
        assert_abs_diff_eq!(ev("-2 ^ 2", c), -4.0); // '^' binds tighter than unary '-'
        assert_abs_diff_eq!(ev("2 ^ -2", c), 0.25);
        assert_abs_diff_eq!(ev("10 - 2 - 3", c), 5.0); // left-assoc
        assert_abs_diff_eq!(ev("12 / 2 / 3", c), 2.0);
    }

    #[test]
    fn variables_functions_and_pi() {
        let ctx = EvalCtx { x: 0.5, y: 2.0, e: -1.0, t: 3.0 };
        assert_abs_diff_eq!(ev("x + y + e + t", ctx), 4.5);
        assert_abs_diff_eq!(ev("sin(pi / 2)", ctx), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(ev("cos(0)", ctx), 1.0);
        assert_abs_diff_eq!(ev("exp(0) + abs(e)", ctx), 2.0);
        assert_abs_diff_eq!(ev("min(x, y) + max(x, y)", ctx), 2.5);
        // 'e' next to digits still lexes as scientific notation.
        assert_abs_diff_eq!(ev("1e-3", ctx), 1e-3);
        assert_abs_diff_eq!(ev("2.5E+1", ctx), 25.0);
        // ... but 'e' as a bare identifier is the state variable.
        assert_abs_diff_eq!(ev("2 * e", ctx), -2.0);
    }

    #[test]
    fn reports_used_variables() {
        let ex = Expression::parse("1 + 0.5 * sin(e) * x").unwrap();
        let vars = ex.vars();
        assert!(vars.contains(&Var::X));
        assert!(vars.contains(&Var::E));
        assert!(!vars.contains(&Var::T));
        assert!(!vars.contains(&Var::Y));
        assert_eq!(Var::T.name(), "t");
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(Expression::parse("2 +").is_err());
        assert!(Expression::parse("foo(3)").is_err());
        assert!(Expression::parse("min(1)").is_err());
        assert!(Expression::parse("(1 + 2").is_err());
        assert!(Expression::parse("1 2").is_err());
        assert!(Expression::parse("1 $ 2").is_err());
    }

    #[test]
    fn source_round_trip() {
        let src = "1 + 0.1 * e^2";
        let ex = Expression::parse(src).unwrap();
        assert_eq!(ex.to_string(), src);
        assert_eq!(ex.src(), src);
    }
}
