//! Formula AST over named chart coordinates and parameters.
//!
//! Parsing, exact symbolic partial derivatives and evaluation, either by
//! name lookup in a [`Binding`] or through a slot-compiled form for hot loops.

mod compile;
mod diff;
mod eval;
mod parse;
mod print;

use std::collections::{BTreeMap, BTreeSet};

pub use compile::CompiledExpr;
pub use diff::{add, div, mul, neg, pow, sub};

/// Unary functions allowed in call position.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Ln,
    Sqrt,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }
}

/// Parsed formula. Immutable; cloning is a deep copy.
#[derive(Clone, Debug, PartialEq)]
pub enum Expression {
    Num(f64),
    /// Coordinate or parameter; the distinction lives in the binding.
    Var(String),
    Neg(Box<Expression>),
    Add(Box<Expression>, Box<Expression>),
    Sub(Box<Expression>, Box<Expression>),
    Mul(Box<Expression>, Box<Expression>),
    Div(Box<Expression>, Box<Expression>),
    Pow(Box<Expression>, Box<Expression>),
    Call(Func, Box<Expression>),
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ExprError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown function `{name}` at offset {offset}")]
    UnknownFunction { name: String, offset: usize },
    #[error("no value bound for `{0}`")]
    MissingBinding(String),
    #[error("domain error in `{expr}`: {reason}")]
    Domain { expr: String, reason: String },
}

impl ExprError {
    /// Stable error name, used verbatim by the command-line front end.
    pub fn name(&self) -> &'static str {
        match self {
            ExprError::Syntax { .. } => "SyntaxError",
            ExprError::UnknownFunction { .. } => "UnknownFunction",
            ExprError::MissingBinding(_) => "MissingBinding",
            ExprError::Domain { .. } => "DomainError",
        }
    }
}

/// Name to value map. Extra names are ignored by evaluation.
#[derive(Clone, Debug, Default, PartialEq, serde::Serialize)]
#[serde(transparent)]
pub struct Binding {
    values: BTreeMap<String, f64>,
}

impl Binding {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs<S: Into<String>>(pairs: impl IntoIterator<Item = (S, f64)>) -> Self {
        let mut b = Self::new();
        for (k, v) in pairs {
            b.values.insert(k.into(), v);
        }
        b
    }

    pub fn with(mut self, name: impl Into<String>, value: f64) -> Self {
        self.values.insert(name.into(), value);
        self
    }

    pub fn set(&mut self, name: impl Into<String>, value: f64) {
        self.values.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.values.contains_key(name)
    }

    /// Entries of `other` override entries of `self`.
    pub fn merged(&self, other: &Binding) -> Binding {
        let mut out = self.clone();
        for (k, v) in &other.values {
            out.values.insert(k.clone(), *v);
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.values.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Parse formula text. See [`Expression::parse`].
pub fn parse(text: &str) -> Result<Expression, ExprError> {
    Expression::parse(text)
}

/// Exact partial derivative of `e` with respect to `var`.
pub fn differentiate(e: &Expression, var: &str) -> Expression {
    e.differentiate(var)
}

pub fn evaluate(e: &Expression, b: &Binding) -> Result<f64, ExprError> {
    e.evaluate(b)
}

impl Expression {
    /// Grammar: `expr := term (('+'|'-') term)*`, `term := unary (('*'|'/') unary)*`,
    /// `unary := '-' unary | power`, `power := base ('^' unary)?`,
    /// `base := NUMBER | IDENT | IDENT '(' expr ')' | '(' expr ')'`.
    /// `^` is right associative and binds tighter than unary minus.
    pub fn parse(text: &str) -> Result<Expression, ExprError> {
        parse::Parser::new(text).parse_all()
    }

    pub fn num(v: f64) -> Expression {
        Expression::Num(v)
    }

    pub fn var(name: impl Into<String>) -> Expression {
        Expression::Var(name.into())
    }

    pub fn differentiate(&self, var: &str) -> Expression {
        diff::derivative(self, var)
    }

    pub fn evaluate(&self, b: &Binding) -> Result<f64, ExprError> {
        let v = eval::eval(self, b)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ExprError::Domain { expr: self.to_string(), reason: "non-finite result".into() })
        }
    }

    pub fn compile(&self, slots: &[&str]) -> Result<CompiledExpr, ExprError> {
        CompiledExpr::new(self, slots)
    }

    /// Every variable or parameter name occurring in the expression.
    pub fn free_names(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_names(&mut out);
        out
    }

    pub fn contains_name(&self, name: &str) -> bool {
        match self {
            Expression::Num(_) => false,
            Expression::Var(v) => v == name,
            Expression::Neg(a) | Expression::Call(_, a) => a.contains_name(name),
            Expression::Add(a, b)
            | Expression::Sub(a, b)
            | Expression::Mul(a, b)
            | Expression::Div(a, b)
            | Expression::Pow(a, b) => a.contains_name(name) || b.contains_name(name),
        }
    }

    fn collect_names(&self, out: &mut BTreeSet<String>) {
        match self {
            Expression::Num(_) => {}
            Expression::Var(v) => {
                out.insert(v.clone());
            }
            Expression::Neg(a) | Expression::Call(_, a) => a.collect_names(out),
            Expression::Add(a, b)
            | Expression::Sub(a, b)
            | Expression::Mul(a, b)
            | Expression::Div(a, b)
            | Expression::Pow(a, b) => {
                a.collect_names(out);
                b.collect_names(out);
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expression::Num(v) if *v == 0.0)
    }

    pub fn is_one(&self) -> bool {
        matches!(self, Expression::Num(v) if *v == 1.0)
    }

    pub fn as_num(&self) -> Option<f64> {
        match self {
            Expression::Num(v) => Some(*v),
            _ => None,
        }
    }
}

impl std::str::FromStr for Expression {
    type Err = ExprError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Expression::parse(s)
    }
}
