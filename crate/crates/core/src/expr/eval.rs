use super::{Binding, ExprError, Expression, Func};

/// Arithmetic shared by the tree walker and the compiled form.
pub(super) fn checked_div(a: f64, b: f64) -> Result<f64, &'static str> {
    if b == 0.0 {
        Err("division by zero")
    } else {
        Ok(a / b)
    }
}

pub(super) fn checked_pow(a: f64, b: f64) -> Result<f64, &'static str> {
    if b.fract() == 0.0 && b.abs() <= i32::MAX as f64 {
        let n = b as i32;
        if n < 0 && a == 0.0 {
            return Err("division by zero");
        }
        Ok(a.powi(n))
    } else if a > 0.0 {
        Ok(a.powf(b))
    } else {
        Err("non-integer power of a non-positive base")
    }
}

pub(super) fn checked_call(f: Func, a: f64) -> Result<f64, &'static str> {
    match f {
        Func::Sin => Ok(a.sin()),
        Func::Cos => Ok(a.cos()),
        Func::Exp => Ok(a.exp()),
        Func::Ln if a <= 0.0 => Err("logarithm of a non-positive value"),
        Func::Ln => Ok(a.ln()),
        Func::Sqrt if a < 0.0 => Err("square root of a negative value"),
        Func::Sqrt => Ok(a.sqrt()),
    }
}

fn domain(e: &Expression, reason: &str) -> ExprError {
    ExprError::Domain { expr: e.to_string(), reason: reason.to_string() }
}

pub(super) fn eval(e: &Expression, b: &Binding) -> Result<f64, ExprError> {
    Ok(match e {
        Expression::Num(v) => *v,
        Expression::Var(name) => b.get(name).ok_or_else(|| ExprError::MissingBinding(name.clone()))?,
        Expression::Neg(a) => -eval(a, b)?,
        Expression::Add(x, y) => eval(x, b)? + eval(y, b)?,
        Expression::Sub(x, y) => eval(x, b)? - eval(y, b)?,
        Expression::Mul(x, y) => eval(x, b)? * eval(y, b)?,
        Expression::Div(x, y) => checked_div(eval(x, b)?, eval(y, b)?).map_err(|r| domain(e, r))?,
        Expression::Pow(x, y) => checked_pow(eval(x, b)?, eval(y, b)?).map_err(|r| domain(e, r))?,
        Expression::Call(f, a) => checked_call(*f, eval(a, b)?).map_err(|r| domain(e, r))?,
    })
}
