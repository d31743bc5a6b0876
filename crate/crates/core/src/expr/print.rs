use std::fmt;

use super::Expression;

const ADD: u8 = 1;
const MUL: u8 = 2;
const UNARY: u8 = 3;
const POW: u8 = 4;
const ATOM: u8 = 5;

fn prec(e: &Expression) -> u8 {
    match e {
        Expression::Num(v) if *v < 0.0 || (*v == 0.0 && v.is_sign_negative()) => UNARY,
        Expression::Num(_) | Expression::Var(_) | Expression::Call(..) => ATOM,
        Expression::Neg(_) => UNARY,
        Expression::Add(..) | Expression::Sub(..) => ADD,
        Expression::Mul(..) | Expression::Div(..) => MUL,
        Expression::Pow(..) => POW,
    }
}

fn child(f: &mut fmt::Formatter<'_>, e: &Expression, min: u8) -> fmt::Result {
    if prec(e) < min {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

/// Operands of binary operators: negative quantities are always parenthesized.
fn operand(f: &mut fmt::Formatter<'_>, e: &Expression, min: u8) -> fmt::Result {
    if prec(e) == UNARY {
        write!(f, "({e})")
    } else {
        child(f, e, min)
    }
}

fn number(f: &mut fmt::Formatter<'_>, v: f64) -> fmt::Result {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        write!(f, "{}", v as i64)
    } else {
        write!(f, "{v:?}")
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expression::Num(v) => number(f, *v),
            Expression::Var(name) => f.write_str(name),
            Expression::Neg(a) => {
                f.write_str("-")?;
                if matches!(**a, Expression::Neg(_)) || prec(a) < UNARY {
                    write!(f, "({a})")
                } else {
                    write!(f, "{a}")
                }
            }
            Expression::Add(a, b) => {
                child(f, a, ADD)?;
                f.write_str(" + ")?;
                operand(f, b, MUL)
            }
            Expression::Sub(a, b) => {
                child(f, a, ADD)?;
                f.write_str(" - ")?;
                operand(f, b, MUL)
            }
            Expression::Mul(a, b) => {
                operand(f, a, MUL)?;
                f.write_str("*")?;
                operand(f, b, POW)
            }
            Expression::Div(a, b) => {
                operand(f, a, MUL)?;
                f.write_str("/")?;
                operand(f, b, POW)
            }
            Expression::Pow(a, b) => {
                child(f, a, ATOM)?;
                f.write_str("^")?;
                // exponent may be a unary or another power (right associative)
                child(f, b, UNARY)
            }
            Expression::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}
