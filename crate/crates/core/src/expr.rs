//! Arithmetic expressions for expression-defined dynamics.
//!
//! Grammar (EBNF), lowest precedence first:
//!
//! ```text
//! expr    = term { ("+" | "-") term } ;
//! term    = unary { ("*" | "/") unary } ;
//! unary   = "-" unary | power ;
//! power   = primary [ "^" unary ] ;          (* right-associative *)
//! primary = number
//!         | ident "(" expr { "," expr } ")"  (* min(a,b), max(a,b), abs(a) *)
//!         | ident
//!         | "(" expr ")" ;
//! number  = digits [ "." digits ] [ ("e" | "E") [ "+" | "-" ] digits ]
//!         | "." digits [ exponent ] ;
//! ```
//!
//! Variables are `t`, `x1..xn`, `u1..up` and `w1..wq`. When a dimension is 1
//! the bare alias (`x`, `u`, `w`) is also accepted. Unary minus binds looser
//! than `^`, so `-2^2` is `-4`.

use std::fmt;

use thiserror::Error;

/// Declared dimensions of the state, control and disturbance vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub state: usize,
    pub control: usize,
    pub noise: usize,
}

impl Dims {
    pub fn new(state: usize, control: usize, noise: usize) -> Self {
        Self {
            state,
            control,
            noise,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    Time,
    /// Zero-based state coordinate.
    State(usize),
    Control(usize),
    Noise(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Min,
    Max,
    Abs,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Min => "min",
            Func::Max => "max",
            Func::Abs => "abs",
        }
    }

    fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            Func::Abs => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Ast {
    Num(f64),
    Var(Var),
    Neg(Box<Ast>),
    Binary(BinOp, Box<Ast>, Box<Ast>),
    Call(Func, Vec<Ast>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown variable `{name}` at offset {offset}")]
    UnknownVariable { name: String, offset: usize },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Syntax { offset, .. } | ParseError::UnknownVariable { offset, .. } => {
                *offset
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("no binding for variable {0}")]
    MissingBinding(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("non-finite result")]
    NonFinite,
}

/// Values for the variables of an expression.
#[derive(Debug, Clone, Copy, Default)]
pub struct Bindings<'a> {
    pub t: Option<f64>,
    pub x: &'a [f64],
    pub u: &'a [f64],
    pub w: &'a [f64],
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn tokenize(src: &'a str) -> Result<Vec<(usize, Token)>, ParseError> {
        let mut lexer = Lexer { src, pos: 0 };
        let mut out = Vec::new();
        while let Some(tok) = lexer.next_token()? {
            out.push(tok);
        }
        Ok(out)
    }

    fn peek_byte(&self) -> Option<u8> {
        self.src.as_bytes().get(self.pos).copied()
    }

    fn next_token(&mut self) -> Result<Option<(usize, Token)>, ParseError> {
        while matches!(self.peek_byte(), Some(b) if b.is_ascii_whitespace()) {
            self.pos += 1;
        }
        let start = self.pos;
        let Some(b) = self.peek_byte() else {
            return Ok(None);
        };
        let tok = match b {
            b'0'..=b'9' | b'.' => self.number()?,
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                while matches!(self.peek_byte(), Some(c) if c.is_ascii_alphanumeric() || c == b'_')
                {
                    self.pos += 1;
                }
                Token::Ident(self.src[start..self.pos].to_string())
            }
            b'+' | b'-' | b'*' | b'/' | b'^' => {
                self.pos += 1;
                Token::Op(b as char)
            }
            b'(' => {
                self.pos += 1;
                Token::LParen
            }
            b')' => {
                self.pos += 1;
                Token::RParen
            }
            b',' => {
                self.pos += 1;
                Token::Comma
            }
            _ => {
                let ch = self.src[start..].chars().next().unwrap_or('?');
                return Err(ParseError::Syntax {
                    offset: start,
                    message: format!("unexpected character `{ch}`"),
                });
            }
        };
        Ok(Some((start, tok)))
    }

    fn digits(&mut self) -> usize {
        let start = self.pos;
        while matches!(self.peek_byte(), Some(b'0'..=b'9')) {
            self.pos += 1;
        }
        self.pos - start
    }

    fn number(&mut self) -> Result<Token, ParseError> {
        let start = self.pos;
        let mut mantissa = self.digits();
        if self.peek_byte() == Some(b'.') {
            self.pos += 1;
            mantissa += self.digits();
        }
        if mantissa == 0 {
            return Err(ParseError::Syntax {
                offset: start,
                message: "malformed number".into(),
            });
        }
        if matches!(self.peek_byte(), Some(b'e' | b'E')) {
            self.pos += 1;
            if matches!(self.peek_byte(), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if self.digits() == 0 {
                return Err(ParseError::Syntax {
                    offset: self.pos,
                    message: "missing exponent digits".into(),
                });
            }
        }
        let text = &self.src[start..self.pos];
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Token::Num(v)),
            _ => Err(ParseError::Syntax {
                offset: start,
                message: format!("number `{text}` is not a finite double"),
            }),
        }
    }
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    idx: usize,
    end: usize,
    dims: Dims,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.idx).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.tokens.get(self.idx).map_or(self.end, |(o, _)| *o)
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError::Syntax {
            offset: self.offset(),
            message: message.into(),
        })
    }

    fn bump(&mut self) -> Option<(usize, Token)> {
        let tok = self.tokens.get(self.idx).cloned();
        if tok.is_some() {
            self.idx += 1;
        }
        tok
    }

    fn expect(&mut self, want: Token, what: &str) -> Result<(), ParseError> {
        if self.peek() == Some(&want) {
            self.idx += 1;
            Ok(())
        } else {
            self.error(format!("expected {what}"))
        }
    }

    fn expr(&mut self) -> Result<Ast, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(Token::Op('+')) => BinOp::Add,
                Some(Token::Op('-')) => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.idx += 1;
            let rhs = self.term()?;
            lhs = Ast::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Ast, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(Token::Op('*')) => BinOp::Mul,
                Some(Token::Op('/')) => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.idx += 1;
            let rhs = self.unary()?;
            lhs = Ast::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Ast, ParseError> {
        if self.peek() == Some(&Token::Op('-')) {
            self.idx += 1;
            return Ok(Ast::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Ast, ParseError> {
        let base = self.primary()?;
        if self.peek() == Some(&Token::Op('^')) {
            self.idx += 1;
            let exponent = self.unary()?;
            return Ok(Ast::Binary(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Ast, ParseError> {
        let offset = self.offset();
        match self.bump() {
            Some((_, Token::Num(v))) => Ok(Ast::Num(v)),
            Some((_, Token::LParen)) => {
                let inner = self.expr()?;
                self.expect(Token::RParen, "`)`")?;
                Ok(inner)
            }
            Some((_, Token::Ident(name))) => {
                if self.peek() == Some(&Token::LParen) {
                    self.call(&name, offset)
                } else {
                    resolve_var(&name, self.dims)
                        .map(Ast::Var)
                        .ok_or(ParseError::UnknownVariable { name, offset })
                }
            }
            Some(_) => {
                self.idx -= 1;
                self.error("expected a number, variable or `(`")
            }
            None => self.error("unexpected end of input"),
        }
    }

    fn call(&mut self, name: &str, offset: usize) -> Result<Ast, ParseError> {
        let func = match name {
            "min" => Func::Min,
            "max" => Func::Max,
            "abs" => Func::Abs,
            _ => {
                return Err(ParseError::Syntax {
                    offset,
                    message: format!("unknown function `{name}`"),
                })
            }
        };
        self.idx += 1; // `(`
        let mut args = vec![self.expr()?];
        while self.peek() == Some(&Token::Comma) {
            self.idx += 1;
            args.push(self.expr()?);
        }
        if args.len() != func.arity() {
            return self.error(format!(
                "`{name}` takes {} argument(s), got {}",
                func.arity(),
                args.len()
            ));
        }
        self.expect(Token::RParen, "`)`")?;
        Ok(Ast::Call(func, args))
    }
}

fn resolve_var(name: &str, dims: Dims) -> Option<Var> {
    if name == "t" {
        return Some(Var::Time);
    }
    let (prefix, rest) = name.split_at(1);
    let (dim, make): (usize, fn(usize) -> Var) = match prefix {
        "x" => (dims.state, Var::State),
        "u" => (dims.control, Var::Control),
        "w" => (dims.noise, Var::Noise),
        _ => return None,
    };
    if rest.is_empty() {
        return (dim == 1).then(|| make(0));
    }
    if rest.starts_with('0') || !rest.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let k: usize = rest.parse().ok()?;
    (1..=dim).contains(&k).then(|| make(k - 1))
}

/// Parses `source` against the declared dimensions.
pub fn parse(source: &str, dims: Dims) -> Result<Ast, ParseError> {
    let tokens = Lexer::tokenize(source)?;
    let mut parser = Parser {
        tokens,
        idx: 0,
        end: source.len(),
        dims,
    };
    let ast = parser.expr()?;
    if parser.idx < parser.tokens.len() {
        return parser.error("unexpected trailing input");
    }
    Ok(ast)
}

impl Ast {
    pub fn eval(&self, env: &Bindings<'_>) -> Result<f64, EvalError> {
        let v = match self {
            Ast::Num(v) => *v,
            Ast::Var(var) => lookup(*var, env)?,
            Ast::Neg(inner) => -inner.eval(env)?,
            Ast::Binary(op, lhs, rhs) => {
                let a = lhs.eval(env)?;
                let b = rhs.eval(env)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(EvalError::DivisionByZero);
                        }
                        a / b
                    }
                    BinOp::Pow => {
                        if a == 0.0 && b < 0.0 {
                            return Err(EvalError::DivisionByZero);
                        }
                        a.powf(b)
                    }
                }
            }
            Ast::Call(func, args) => match func {
                Func::Min => args[0].eval(env)?.min(args[1].eval(env)?),
                Func::Max => args[0].eval(env)?.max(args[1].eval(env)?),
                Func::Abs => args[0].eval(env)?.abs(),
            },
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite)
        }
    }

    /// Visits every variable referenced by the expression.
    pub fn variables(&self, out: &mut Vec<Var>) {
        match self {
            Ast::Num(_) => {}
            Ast::Var(v) => out.push(*v),
            Ast::Neg(inner) => inner.variables(out),
            Ast::Binary(_, a, b) => {
                a.variables(out);
                b.variables(out);
            }
            Ast::Call(_, args) => args.iter().for_each(|a| a.variables(out)),
        }
    }
}

fn lookup(var: Var, env: &Bindings<'_>) -> Result<f64, EvalError> {
    let found = match var {
        Var::Time => env.t,
        Var::State(i) => env.x.get(i).copied(),
        Var::Control(i) => env.u.get(i).copied(),
        Var::Noise(i) => env.w.get(i).copied(),
    };
    found.ok_or_else(|| EvalError::MissingBinding(var.to_string()))
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::Time => write!(f, "t"),
            Var::State(i) => write!(f, "x{}", i + 1),
            Var::Control(i) => write!(f, "u{}", i + 1),
            Var::Noise(i) => write!(f, "w{}", i + 1),
        }
    }
}

/// Fully parenthesised rendering; reparses to an identical tree.
impl fmt::Display for Ast {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ast::Num(v) => write!(f, "{v}"),
            Ast::Var(v) => write!(f, "{v}"),
            Ast::Neg(inner) => write!(f, "(-{inner})"),
            Ast::Binary(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Ast::Call(func, args) => {
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
