use std::sync::Arc;

use super::eval::{checked_call, checked_div, checked_pow};
use super::{ExprError, Expression, Func};

#[derive(Clone, Debug)]
enum Node {
    Num(f64),
    Slot(usize),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    // fallible nodes keep their source text for error reports
    Div(Box<Node>, Box<Node>, Arc<str>),
    Pow(Box<Node>, Box<Node>, Arc<str>),
    Call(Func, Box<Node>, Arc<str>),
}

/// Expression with names resolved to positions in a value slice.
#[derive(Clone, Debug)]
pub struct CompiledExpr {
    root: Node,
    source: Arc<str>,
}

impl CompiledExpr {
    /// Fails with `MissingBinding` when a free name has no slot.
    pub fn new(e: &Expression, slots: &[&str]) -> Result<Self, ExprError> {
        Ok(CompiledExpr { root: lower(e, slots)?, source: e.to_string().into() })
    }

    pub fn eval(&self, values: &[f64]) -> Result<f64, ExprError> {
        let v = run(&self.root, values)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ExprError::Domain { expr: self.source.to_string(), reason: "non-finite result".into() })
        }
    }

    pub fn source(&self) -> &str {
        &self.source
    }
}

fn lower(e: &Expression, slots: &[&str]) -> Result<Node, ExprError> {
    let b = |x: &Expression| lower(x, slots).map(Box::new);
    Ok(match e {
        Expression::Num(v) => Node::Num(*v),
        Expression::Var(name) => Node::Slot(
            slots.iter().position(|s| s == name).ok_or_else(|| ExprError::MissingBinding(name.clone()))?,
        ),
        Expression::Neg(a) => Node::Neg(b(a)?),
        Expression::Add(x, y) => Node::Add(b(x)?, b(y)?),
        Expression::Sub(x, y) => Node::Sub(b(x)?, b(y)?),
        Expression::Mul(x, y) => Node::Mul(b(x)?, b(y)?),
        Expression::Div(x, y) => Node::Div(b(x)?, b(y)?, e.to_string().into()),
        Expression::Pow(x, y) => Node::Pow(b(x)?, b(y)?, e.to_string().into()),
        Expression::Call(f, a) => Node::Call(*f, b(a)?, e.to_string().into()),
    })
}

fn domain(src: &Arc<str>, reason: &str) -> ExprError {
    ExprError::Domain { expr: src.to_string(), reason: reason.to_string() }
}

fn run(n: &Node, v: &[f64]) -> Result<f64, ExprError> {
    Ok(match n {
        Node::Num(x) => *x,
        Node::Slot(i) => v[*i],
        Node::Neg(a) => -run(a, v)?,
        Node::Add(a, b) => run(a, v)? + run(b, v)?,
        Node::Sub(a, b) => run(a, v)? - run(b, v)?,
        Node::Mul(a, b) => run(a, v)? * run(b, v)?,
        Node::Div(a, b, s) => checked_div(run(a, v)?, run(b, v)?).map_err(|r| domain(s, r))?,
        Node::Pow(a, b, s) => checked_pow(run(a, v)?, run(b, v)?).map_err(|r| domain(s, r))?,
        Node::Call(f, a, s) => checked_call(*f, run(a, v)?).map_err(|r| domain(s, r))?,
    })
}
