//! Infix expression language used by the config format for vector fields,
//! metric flows, switch updates and guard regions.
//!
//! Grammar (loosest to tightest): `||`, `&&`, `== !=`, `< <= > >=`, `+ -`,
//! `* / %`, unary `- !`, `^` (right associative). Comparisons and logical
//! operators yield `1` or `0`. Built-in functions: `sin cos tan exp ln log
//! sqrt abs sign floor min max pow if(cond, then, else)`.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Or,
    And,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Pow,
}

impl BinOp {
    fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Ne => 3,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 4,
            BinOp::Add | BinOp::Sub => 5,
            BinOp::Mul | BinOp::Div | BinOp::Rem => 6,
            BinOp::Pow => 8,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            BinOp::Or => "||",
            BinOp::And => "&&",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Rem => "%",
            BinOp::Pow => "^",
        }
    }

    pub fn is_relation(self) -> bool {
        matches!(
            self,
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge
        )
    }
}

const PREC_UNARY: u8 = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Ln,
    Sqrt,
    Abs,
    Sign,
    Floor,
    Min,
    Max,
    Pow,
    If,
}

impl Func {
    fn lookup(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "ln" | "log" => Func::Ln,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "sign" => Func::Sign,
            "floor" => Func::Floor,
            "min" => Func::Min,
            "max" => Func::Max,
            "pow" => Func::Pow,
            "if" => Func::If,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Sign => "sign",
            Func::Floor => "floor",
            Func::Min => "min",
            Func::Max => "max",
            Func::Pow => "pow",
            Func::If => "if",
        }
    }

    fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max | Func::Pow => 2,
            Func::If => 3,
            _ => 1,
        }
    }
}

/// Parsed, unresolved expression.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(String),
    Neg(Box<Expr>),
    Not(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let tokens = tokenize(src)?;
        let mut p = Parser { tokens, pos: 0 };
        let e = p.expr(0)?;
        if let Some(tok) = p.peek() {
            return Err(Error::Expression {
                offset: tok.offset,
                message: format!("unexpected trailing token `{}`", tok.kind),
            });
        }
        Ok(e)
    }

    pub fn num(x: f64) -> Expr {
        Expr::Num(x)
    }

    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_string())
    }

    pub fn bin(op: BinOp, a: Expr, b: Expr) -> Expr {
        Expr::Bin(op, Box::new(a), Box::new(b))
    }

    /// Names of all free variables, in first-occurrence order.
    pub fn variables(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut Vec<String>) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(v) => {
                if !out.contains(v) {
                    out.push(v.clone());
                }
            }
            Expr::Neg(e) | Expr::Not(e) => e.collect_vars(out),
            Expr::Bin(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.collect_vars(out)),
        }
    }

    /// Resolves names against `scope` into an evaluable tree.
    pub fn compile<T: Scalar>(&self, scope: &Scope) -> Result<Compiled<T>> {
        Ok(Compiled {
            root: self.lower(scope)?,
        })
    }

    fn lower<T: Scalar>(&self, scope: &Scope) -> Result<Node<T>> {
        Ok(match self {
            Expr::Num(x) => Node::Const(T::lit(*x)),
            Expr::Var(name) => match scope.get(name) {
                Some(Symbol::Slot(i)) => Node::Slot(i),
                Some(Symbol::Const(c)) => Node::Const(T::lit(c)),
                None => {
                    return Err(Error::Expression {
                        offset: 0,
                        message: format!("unknown identifier `{name}`"),
                    })
                }
            },
            Expr::Neg(e) => Node::Neg(Box::new(e.lower(scope)?)),
            Expr::Not(e) => Node::Not(Box::new(e.lower(scope)?)),
            Expr::Bin(op, a, b) => {
                Node::Bin(*op, Box::new(a.lower(scope)?), Box::new(b.lower(scope)?))
            }
            Expr::Call(f, args) => Node::Call(
                *f,
                args.iter()
                    .map(|a| a.lower(scope))
                    .collect::<Result<Vec<_>>>()?,
            ),
        })
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(x) => {
                if *x < 0.0 {
                    write!(f, "({x:?})")
                } else {
                    write!(f, "{x:?}")
                }
            }
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Not(e) => write!(f, "(!{e})"),
            Expr::Bin(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Symbol {
    /// Index into the evaluation environment slice.
    Slot(usize),
    Const(f64),
}

/// Name resolution table for [`Expr::compile`].
#[derive(Debug, Clone, Default)]
pub struct Scope {
    symbols: HashMap<String, Symbol>,
}

impl Scope {
    pub fn new() -> Self {
        let mut s = Scope::default();
        s.constant("pi", std::f64::consts::PI);
        s
    }

    pub fn slot(&mut self, name: &str, index: usize) -> &mut Self {
        self.symbols.insert(name.to_string(), Symbol::Slot(index));
        self
    }

    pub fn constant(&mut self, name: &str, value: f64) -> &mut Self {
        self.symbols.insert(name.to_string(), Symbol::Const(value));
        self
    }

    pub fn get(&self, name: &str) -> Option<Symbol> {
        self.symbols.get(name).copied()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.symbols.contains_key(name)
    }
}

#[derive(Debug, Clone)]
enum Node<T> {
    Const(T),
    Slot(usize),
    Neg(Box<Node<T>>),
    Not(Box<Node<T>>),
    Bin(BinOp, Box<Node<T>>, Box<Node<T>>),
    Call(Func, Vec<Node<T>>),
}

/// Expression with names resolved to environment slots.
#[derive(Debug, Clone)]
pub struct Compiled<T> {
    root: Node<T>,
}

fn truth<T: Scalar>(b: bool) -> T {
    if b {
        T::one()
    } else {
        T::zero()
    }
}

impl<T: Scalar> Node<T> {
    fn eval(&self, env: &[T]) -> T {
        match self {
            Node::Const(c) => *c,
            Node::Slot(i) => env[*i],
            Node::Neg(e) => -e.eval(env),
            Node::Not(e) => truth(e.eval(env) == T::zero()),
            Node::Bin(op, a, b) => {
                // short-circuit logic
                match op {
                    BinOp::And => {
                        return truth(a.eval(env) != T::zero() && b.eval(env) != T::zero())
                    }
                    BinOp::Or => {
                        return truth(a.eval(env) != T::zero() || b.eval(env) != T::zero())
                    }
                    _ => {}
                }
                let x = a.eval(env);
                let y = b.eval(env);
                match op {
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    BinOp::Mul => x * y,
                    BinOp::Div => x / y,
                    BinOp::Rem => x % y,
                    BinOp::Pow => pow(x, y),
                    BinOp::Eq => truth(x == y),
                    BinOp::Ne => truth(x != y),
                    BinOp::Lt => truth(x < y),
                    BinOp::Le => truth(x <= y),
                    BinOp::Gt => truth(x > y),
                    BinOp::Ge => truth(x >= y),
                    BinOp::And | BinOp::Or => unreachable!(),
                }
            }
            Node::Call(f, args) => match f {
                Func::If => {
                    if args[0].eval(env) != T::zero() {
                        args[1].eval(env)
                    } else {
                        args[2].eval(env)
                    }
                }
                Func::Min => args[0].eval(env).min(args[1].eval(env)),
                Func::Max => args[0].eval(env).max(args[1].eval(env)),
                Func::Pow => pow(args[0].eval(env), args[1].eval(env)),
                _ => {
                    let x = args[0].eval(env);
                    match f {
                        Func::Sin => x.sin(),
                        Func::Cos => x.cos(),
                        Func::Tan => x.tan(),
                        Func::Exp => x.exp(),
                        Func::Ln => x.ln(),
                        Func::Sqrt => x.sqrt(),
                        Func::Abs => x.abs(),
                        Func::Sign => {
                            if x > T::zero() {
                                T::one()
                            } else if x < T::zero() {
                                -T::one()
                            } else {
                                T::zero()
                            }
                        }
                        Func::Floor => x.floor(),
                        _ => unreachable!(),
                    }
                }
            },
        }
    }
}

fn pow<T: Scalar>(x: T, y: T) -> T {
    // integer exponents go through powi so negative bases stay real
    if y.fract() == T::zero() && y.abs() <= T::lit(64.0) {
        x.powi(y.to_i32().unwrap_or(0))
    } else {
        x.powf(y)
    }
}

impl<T: Scalar> Compiled<T> {
    #[inline]
    pub fn eval(&self, env: &[T]) -> T {
        self.root.eval(env)
    }
}

// ---------------------------------------------------------------------------
// Lexer / parser

#[derive(Debug, Clone, PartialEq)]
enum TokKind {
    Num(f64),
    Ident(String),
    Op(&'static str),
    LParen,
    RParen,
    Comma,
}

impl fmt::Display for TokKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokKind::Num(x) => write!(f, "{x}"),
            TokKind::Ident(s) => write!(f, "{s}"),
            TokKind::Op(s) => write!(f, "{s}"),
            TokKind::LParen => write!(f, "("),
            TokKind::RParen => write!(f, ")"),
            TokKind::Comma => write!(f, ","),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokKind,
    offset: usize,
}

const OPERATORS: [&str; 17] = [
    "||", "&&", "==", "!=", "<=", ">=", "<", ">", "+", "-", "*", "/", "%", "^", "!", "**", "=",
];

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || (c == '.' && i + 1 < bytes.len() && bytes[i + 1].is_ascii_digit())
        {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &src[start..i];
            let value: f64 = text.parse().map_err(|_| Error::Expression {
                offset: start,
                message: format!("bad number `{text}`"),
            })?;
            out.push(Token {
                kind: TokKind::Num(value),
                offset: start,
            });
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Token {
                kind: TokKind::Ident(src[start..i].to_string()),
                offset: start,
            });
            continue;
        }
        match c {
            '(' => {
                out.push(Token {
                    kind: TokKind::LParen,
                    offset: start,
                });
                i += 1;
                continue;
            }
            ')' => {
                out.push(Token {
                    kind: TokKind::RParen,
                    offset: start,
                });
                i += 1;
                continue;
            }
            ',' => {
                out.push(Token {
                    kind: TokKind::Comma,
                    offset: start,
                });
                i += 1;
                continue;
            }
            _ => {}
        }
        // longest operator match
        let rest = &src[i..];
        let op = OPERATORS
            .iter()
            .filter(|op| rest.starts_with(**op))
            .max_by_key(|op| op.len());
        match op {
            Some(op) => {
                let canonical: &'static str = match *op {
                    "**" => "^",
                    "=" => "==",
                    other => other,
                };
                out.push(Token {
                    kind: TokKind::Op(canonical),
                    offset: start,
                });
                i += op.len();
            }
            None => {
                return Err(Error::Expression {
                    offset: start,
                    message: format!("unexpected character `{c}`"),
                })
            }
        }
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

    fn end_offset(&self) -> usize {
        self.tokens.last().map(|t| t.offset + 1).unwrap_or(0)
    }

    fn next(&mut self) -> Result<Token> {
        let t = self.tokens.get(self.pos).cloned().ok_or(Error::Expression {
            offset: self.end_offset(),
            message: "unexpected end of expression".into(),
        })?;
        self.pos += 1;
        Ok(t)
    }

    fn expect(&mut self, kind: TokKind) -> Result<()> {
        let t = self.next()?;
        if t.kind == kind {
            Ok(())
        } else {
            Err(Error::Expression {
                offset: t.offset,
                message: format!("expected `{kind}`, found `{}`", t.kind),
            })
        }
    }

    fn peek_binop(&self) -> Option<BinOp> {
        match &self.peek()?.kind {
            TokKind::Op(op) => Some(match *op {
                "||" => BinOp::Or,
                "&&" => BinOp::And,
                "==" => BinOp::Eq,
                "!=" => BinOp::Ne,
                "<" => BinOp::Lt,
                "<=" => BinOp::Le,
                ">" => BinOp::Gt,
                ">=" => BinOp::Ge,
                "+" => BinOp::Add,
                "-" => BinOp::Sub,
                "*" => BinOp::Mul,
                "/" => BinOp::Div,
                "%" => BinOp::Rem,
                "^" => BinOp::Pow,
                _ => return None,
            }),
            _ => None,
        }
    }

    fn expr(&mut self, min_prec: u8) -> Result<Expr> {
        let mut lhs = self.prefix()?;
        while let Some(op) = self.peek_binop() {
            let prec = op.precedence();
            if prec < min_prec {
                break;
            }
            self.pos += 1;
            let next_min = if op == BinOp::Pow { prec } else { prec + 1 };
            let rhs = self.expr(next_min)?;
            lhs = Expr::bin(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn prefix(&mut self) -> Result<Expr> {
        let tok = self.next()?;
        match tok.kind {
            TokKind::Num(x) => Ok(Expr::Num(x)),
            TokKind::Op("-") => Ok(Expr::Neg(Box::new(self.expr(PREC_UNARY)?))),
            TokKind::Op("+") => self.expr(PREC_UNARY),
            TokKind::Op("!") => Ok(Expr::Not(Box::new(self.expr(PREC_UNARY)?))),
            TokKind::LParen => {
                let e = self.expr(0)?;
                self.expect(TokKind::RParen)?;
                Ok(e)
            }
            TokKind::Ident(name) => {
                if matches!(self.peek().map(|t| &t.kind), Some(TokKind::LParen)) {
                    let func = Func::lookup(&name).ok_or(Error::Expression {
                        offset: tok.offset,
                        message: format!("unknown function `{name}`"),
                    })?;
                    self.pos += 1;
                    let mut args = Vec::new();
                    if !matches!(self.peek().map(|t| &t.kind), Some(TokKind::RParen)) {
                        loop {
                            args.push(self.expr(0)?);
                            match self.next()?.kind {
                                TokKind::Comma => continue,
                                TokKind::RParen => break,
                                other => {
                                    return Err(Error::Expression {
                                        offset: tok.offset,
                                        message: format!("expected `,` or `)`, found `{other}`"),
                                    })
                                }
                            }
                        }
                    } else {
                        self.pos += 1;
                    }
                    if args.len() != func.arity() {
                        return Err(Error::Expression {
                            offset: tok.offset,
                            message: format!(
                                "`{name}` takes {} argument(s), got {}",
                                func.arity(),
                                args.len()
                            ),
                        });
                    }
                    Ok(Expr::Call(func, args))
                } else {
                    Ok(Expr::Var(name))
                }
            }
            other => Err(Error::Expression {
                offset: tok.offset,
                message: format!("unexpected token `{other}`"),
            }),
        }
    }
}
