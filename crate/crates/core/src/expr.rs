//! Small arithmetic expression language for coefficients and nonlinearities.
//!
//! Grammar (usual precedence, `^` binds tighter than unary minus on its left
//! operand and is right-associative; `+ - * /` are left-associative):
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' unary)?
//! atom  := number | 't' | 'x' | 'x1'..'xN' | 'pi' | func '(' expr ')' | '(' expr ')'
//! func  := abs | sin | cos | exp
//! ```
//!
//! Evaluation walks the tree exactly as parsed: the left operand of every
//! binary node is evaluated before the right one and no algebraic
//! re-association or constant folding is performed, so results are
//! bit-reproducible for a given expression string.

use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    T,
    X(usize),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Abs(Box<Node>),
    Sin(Box<Node>),
    Cos(Box<Node>),
    Exp(Box<Node>),
    // only produced by differentiation
    Ln(Box<Node>),
    Sign(Box<Node>),
}

/// A parsed expression in the variables `t` and `x1..xN`.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    source: String,
    root: Node,
    max_axis: Option<usize>,
}

impl Expr {
    pub fn parse(source: &str) -> Result<Self> {
        let tokens = tokenize(source)?;
        let mut parser = Parser { tokens, pos: 0 };
        let root = parser.expr()?;
        if parser.pos != parser.tokens.len() {
            return Err(Error::Expr(format!(
                "unexpected trailing input in '{source}' at token {}",
                parser.pos
            )));
        }
        let max_axis = max_axis(&root);
        Ok(Self {
            source: source.to_string(),
            root,
            max_axis,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Highest spatial axis referenced (`x1` is axis 0).
    pub fn max_axis(&self) -> Option<usize> {
        self.max_axis
    }

    pub fn uses_t(&self) -> bool {
        uses_t(&self.root)
    }

    pub fn eval<T: Real>(&self, t: T, x: &[T]) -> T {
        eval(&self.root, t, x)
    }

    /// Symbolic derivative with respect to `t`.
    pub fn derivative_t(&self) -> Expr {
        let root = diff(&self.root);
        Expr {
            source: format!("d/dt[{}]", self.source),
            max_axis: max_axis(&root),
            root,
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

fn eval<T: Real>(node: &Node, t: T, x: &[T]) -> T {
    match node {
        Node::Num(v) => T::lit(*v),
        Node::T => t,
        Node::X(a) => x.get(*a).copied().unwrap_or_else(T::zero),
        Node::Neg(a) => -eval(a, t, x),
        Node::Add(a, b) => {
            let l = eval(a, t, x);
            l + eval(b, t, x)
        }
        Node::Sub(a, b) => {
            let l = eval(a, t, x);
            l - eval(b, t, x)
        }
        Node::Mul(a, b) => {
            let l = eval(a, t, x);
            l * eval(b, t, x)
        }
        Node::Div(a, b) => {
            let l = eval(a, t, x);
            l / eval(b, t, x)
        }
        Node::Pow(a, b) => {
            let l = eval(a, t, x);
            l.powf(eval(b, t, x))
        }
        Node::Abs(a) => eval(a, t, x).abs(),
        Node::Sin(a) => eval(a, t, x).sin(),
        Node::Cos(a) => eval(a, t, x).cos(),
        Node::Exp(a) => eval(a, t, x).exp(),
        Node::Ln(a) => eval(a, t, x).ln(),
        Node::Sign(a) => {
            let v = eval(a, t, x);
            if v == T::zero() {
                T::zero()
            } else {
                v.signum()
            }
        }
    }
}

fn uses_t(node: &Node) -> bool {
    match node {
        Node::T => true,
        Node::Num(_) | Node::X(_) => false,
        Node::Neg(a)
        | Node::Abs(a)
        | Node::Sin(a)
        | Node::Cos(a)
        | Node::Exp(a)
        | Node::Ln(a)
        | Node::Sign(a) => uses_t(a),
        Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) | Node::Pow(a, b) => {
            uses_t(a) || uses_t(b)
        }
    }
}

fn max_axis(node: &Node) -> Option<usize> {
    match node {
        Node::X(a) => Some(*a),
        Node::Num(_) | Node::T => None,
        Node::Neg(a)
        | Node::Abs(a)
        | Node::Sin(a)
        | Node::Cos(a)
        | Node::Exp(a)
        | Node::Ln(a)
        | Node::Sign(a) => max_axis(a),
        Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) | Node::Pow(a, b) => {
            max_axis(a).max(max_axis(b))
        }
    }
}

fn is_zero(n: &Node) -> bool {
    matches!(n, Node::Num(v) if *v == 0.0)
}

fn is_one(n: &Node) -> bool {
    matches!(n, Node::Num(v) if *v == 1.0)
}

fn add(a: Node, b: Node) -> Node {
    if is_zero(&a) {
        b
    } else if is_zero(&b) {
        a
    } else {
        Node::Add(Box::new(a), Box::new(b))
    }
}

fn mul(a: Node, b: Node) -> Node {
    if is_zero(&a) || is_zero(&b) {
        Node::Num(0.0)
    } else if is_one(&a) {
        b
    } else if is_one(&b) {
        a
    } else {
        Node::Mul(Box::new(a), Box::new(b))
    }
}

fn diff(node: &Node) -> Node {
    use Node::*;
    match node {
        Num(_) | X(_) => Num(0.0),
        T => Num(1.0),
        Neg(a) => {
            let d = diff(a);
            if is_zero(&d) {
                d
            } else {
                Neg(Box::new(d))
            }
        }
        Add(a, b) => add(diff(a), diff(b)),
        Sub(a, b) => {
            let (da, db) = (diff(a), diff(b));
            if is_zero(&db) {
                da
            } else {
                Sub(Box::new(da), Box::new(db))
            }
        }
        Mul(a, b) => add(mul(diff(a), (**b).clone()), mul((**a).clone(), diff(b))),
        Div(a, b) => {
            let (da, db) = (diff(a), diff(b));
            if is_zero(&db) {
                if is_zero(&da) {
                    return Num(0.0);
                }
                return Div(Box::new(da), b.clone());
            }
            let num = Sub(
                Box::new(mul(da, (**b).clone())),
                Box::new(mul((**a).clone(), db)),
            );
            Div(Box::new(num), Box::new(Mul(b.clone(), b.clone())))
        }
        Pow(a, b) => {
            let da = diff(a);
            if !uses_t(b) {
                if is_zero(&da) {
                    return Num(0.0);
                }
                // b * a^(b-1) * a'
                let lowered = Pow(
                    a.clone(),
                    Box::new(Sub(b.clone(), Box::new(Num(1.0)))),
                );
                return mul(mul((**b).clone(), lowered), da);
            }
            // a^b * (b' ln a + b a'/a)
            let db = diff(b);
            let first = mul(db, Ln(a.clone()));
            let second = if is_zero(&da) {
                Num(0.0)
            } else {
                Div(Box::new(mul((**b).clone(), da)), a.clone())
            };
            mul(node.clone(), add(first, second))
        }
        Abs(a) => mul(Sign(a.clone()), diff(a)),
        Sin(a) => mul(Cos(a.clone()), diff(a)),
        Cos(a) => {
            let d = diff(a);
            if is_zero(&d) {
                d
            } else {
                Neg(Box::new(mul(Sin(a.clone()), d)))
            }
        }
        Exp(a) => mul(node.clone(), diff(a)),
        Ln(a) => {
            let d = diff(a);
            if is_zero(&d) {
                d
            } else {
                Div(Box::new(d), a.clone())
            }
        }
        Sign(_) => Num(0.0),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let v = text
                .parse::<f64>()
                .map_err(|_| Error::Expr(format!("bad number '{text}' in '{src}'")))?;
            out.push(Token::Num(v));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token::Ident(chars[start..i].iter().collect()));
        } else if "+-*/^".contains(c) {
            out.push(Token::Op(c));
            i += 1;
        } else if c == '(' {
            out.push(Token::LParen);
            i += 1;
        } else if c == ')' {
            out.push(Token::RParen);
            i += 1;
        } else {
            return Err(Error::Expr(format!(
                "unexpected character '{c}' at offset {i} in '{src}'"
            )));
        }
    }
    if out.is_empty() {
        return Err(Error::Expr("empty expression".into()));
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        while let Some(Token::Op(op @ ('+' | '-'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if op == '+' {
                Node::Add(Box::new(lhs), Box::new(rhs))
            } else {
                Node::Sub(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        while let Some(Token::Op(op @ ('*' | '/'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if op == '*' {
                Node::Mul(Box::new(lhs), Box::new(rhs))
            } else {
                Node::Div(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node> {
        if let Some(Token::Op('-')) = self.peek() {
            self.pos += 1;
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if let Some(Token::Op('^')) = self.peek() {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Node::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        match self.next() {
            Some(Token::Num(v)) => Ok(Node::Num(v)),
            Some(Token::LParen) => {
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Some(Token::Ident(name)) => self.ident(name),
            other => Err(Error::Expr(format!("unexpected token {other:?}"))),
        }
    }

    fn ident(&mut self, name: String) -> Result<Node> {
        match name.as_str() {
            "t" => return Ok(Node::T),
            "x" => return Ok(Node::X(0)),
            "pi" => return Ok(Node::Num(std::f64::consts::PI)),
            "abs" | "sin" | "cos" | "exp" => {
                if self.next() != Some(Token::LParen) {
                    return Err(Error::Expr(format!("'{name}' must be followed by '('")));
                }
                let arg = Box::new(self.expr()?);
                self.expect_rparen()?;
                return Ok(match name.as_str() {
                    "abs" => Node::Abs(arg),
                    "sin" => Node::Sin(arg),
                    "cos" => Node::Cos(arg),
                    _ => Node::Exp(arg),
                });
            }
            _ => {}
        }
        if let Some(idx) = name.strip_prefix('x') {
            if let Ok(k) = idx.parse::<usize>() {
                if k >= 1 {
                    return Ok(Node::X(k - 1));
                }
            }
        }
        Err(Error::Expr(format!("unknown identifier '{name}'")))
    }

    fn expect_rparen(&mut self) -> Result<()> {
        match self.next() {
            Some(Token::RParen) => Ok(()),
            other => Err(Error::Expr(format!("expected ')', found {other:?}"))),
        }
    }
}
