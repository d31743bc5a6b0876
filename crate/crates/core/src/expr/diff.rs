//! Symbolic differentiation plus the few rewrites it relies on:
//! constant folding and the 0/1 identities. Nothing else is simplified.

use super::{Expression, Func};

fn folded(v: f64) -> Option<Expression> {
    v.is_finite().then_some(Expression::Num(v))
}

pub fn add(a: Expression, b: Expression) -> Expression {
    if let (Some(x), Some(y)) = (a.as_num(), b.as_num()) {
        if let Some(e) = folded(x + y) {
            return e;
        }
    }
    if a.is_zero() {
        return b;
    }
    if b.is_zero() {
        return a;
    }
    Expression::Add(Box::new(a), Box::new(b))
}

pub fn sub(a: Expression, b: Expression) -> Expression {
    if let (Some(x), Some(y)) = (a.as_num(), b.as_num()) {
        if let Some(e) = folded(x - y) {
            return e;
        }
    }
    if b.is_zero() {
        return a;
    }
    if a.is_zero() {
        return neg(b);
    }
    Expression::Sub(Box::new(a), Box::new(b))
}

pub fn mul(a: Expression, b: Expression) -> Expression {
    if let (Some(x), Some(y)) = (a.as_num(), b.as_num()) {
        if let Some(e) = folded(x * y) {
            return e;
        }
    }
    if a.is_zero() || b.is_zero() {
        return Expression::Num(0.0);
    }
    if a.is_one() {
        return b;
    }
    if b.is_one() {
        return a;
    }
    if a.as_num() == Some(-1.0) {
        return neg(b);
    }
    if b.as_num() == Some(-1.0) {
        return neg(a);
    }
    Expression::Mul(Box::new(a), Box::new(b))
}

pub fn div(a: Expression, b: Expression) -> Expression {
    if let (Some(x), Some(y)) = (a.as_num(), b.as_num()) {
        if y != 0.0 {
            if let Some(e) = folded(x / y) {
                return e;
            }
        }
    }
    if a.is_zero() {
        return Expression::Num(0.0);
    }
    if b.is_one() {
        return a;
    }
    Expression::Div(Box::new(a), Box::new(b))
}

pub fn pow(a: Expression, b: Expression) -> Expression {
    if b.is_zero() {
        return Expression::Num(1.0);
    }
    if b.is_one() {
        return a;
    }
    if let (Some(x), Some(y)) = (a.as_num(), b.as_num()) {
        if x > 0.0 || y.fract() == 0.0 {
            if let Some(e) = folded(x.powf(y)) {
                return e;
            }
        }
    }
    Expression::Pow(Box::new(a), Box::new(b))
}

pub fn neg(a: Expression) -> Expression {
    match a {
        Expression::Num(v) => Expression::Num(-v),
        Expression::Neg(inner) => *inner,
        other => Expression::Neg(Box::new(other)),
    }
}

fn call(f: Func, a: Expression) -> Expression {
    Expression::Call(f, Box::new(a))
}

pub(super) fn derivative(e: &Expression, v: &str) -> Expression {
    use Expression::*;
    if !e.contains_name(v) {
        return Num(0.0);
    }
    match e {
        Num(_) => Num(0.0),
        Var(name) => Num(if name == v { 1.0 } else { 0.0 }),
        Neg(a) => neg(derivative(a, v)),
        Add(a, b) => add(derivative(a, v), derivative(b, v)),
        Sub(a, b) => sub(derivative(a, v), derivative(b, v)),
        Mul(a, b) => add(
            mul(derivative(a, v), (**b).clone()),
            mul((**a).clone(), derivative(b, v)),
        ),
        Div(a, b) => {
            let num = sub(
                mul(derivative(a, v), (**b).clone()),
                mul((**a).clone(), derivative(b, v)),
            );
            div(num, pow((**b).clone(), Num(2.0)))
        }
        Pow(a, b) => {
            if !b.contains_name(v) {
                // d(u^c) = c u^(c-1) u'
                let reduced = match b.as_num() {
                    Some(c) => Num(c - 1.0),
                    None => sub((**b).clone(), Num(1.0)),
                };
                mul(mul((**b).clone(), pow((**a).clone(), reduced)), derivative(a, v))
            } else {
                // d(u^w) = u^w (w' ln u + w u'/u)
                let inner = add(
                    mul(derivative(b, v), call(Func::Ln, (**a).clone())),
                    div(mul((**b).clone(), derivative(a, v)), (**a).clone()),
                );
                mul(e.clone(), inner)
            }
        }
        Call(f, a) => {
            let da = derivative(a, v);
            let outer = match f {
                Func::Sin => call(Func::Cos, (**a).clone()),
                Func::Cos => neg(call(Func::Sin, (**a).clone())),
                Func::Exp => e.clone(),
                Func::Ln => return div(da, (**a).clone()),
                Func::Sqrt => return div(da, mul(Num(2.0), e.clone())),
            };
            mul(outer, da)
        }
    }
}
