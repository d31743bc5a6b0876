//! Darboux chart layout shared by every module.
//!
//! Coordinates are ordered q1..qn, p1..pn, then z (contact, cocontact, SHS),
//! then t (cosymplectic, cocontact).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{GeomError, Result};
use crate::expr::Binding;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Symplectic,
    Cosymplectic,
    Contact,
    Cocontact,
    Shs,
}

impl Kind {
    pub const ALL: [Kind; 5] = [Kind::Symplectic, Kind::Cosymplectic, Kind::Contact, Kind::Cocontact, Kind::Shs];

    pub fn name(self) -> &'static str {
        match self {
            Kind::Symplectic => "symplectic",
            Kind::Cosymplectic => "cosymplectic",
            Kind::Contact => "contact",
            Kind::Cocontact => "cocontact",
            Kind::Shs => "shs",
        }
    }

    pub fn has_z(self) -> bool {
        matches!(self, Kind::Contact | Kind::Cocontact | Kind::Shs)
    }

    pub fn has_t(self) -> bool {
        matches!(self, Kind::Cosymplectic | Kind::Cocontact)
    }

    /// Bracket is Poisson (E = 0) rather than Jacobi.
    pub fn is_poisson(self) -> bool {
        matches!(self, Kind::Symplectic | Kind::Cosymplectic)
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kind {
    type Err = GeomError;

    fn from_str(s: &str) -> Result<Self> {
        Kind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| GeomError::InvalidInput(format!("unknown geometry `{s}`")))
    }
}

/// Index bookkeeping for a kind with `n` degrees of freedom.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Chart {
    pub kind: Kind,
    pub n: usize,
}

impl Chart {
    pub fn new(kind: Kind, n: usize) -> Result<Self> {
        if n < 1 {
            return Err(GeomError::InvalidDimension(format!("n must be at least 1, got {n}")));
        }
        Ok(Chart { kind, n })
    }

    pub fn dim(&self) -> usize {
        2 * self.n + self.kind.has_z() as usize + self.kind.has_t() as usize
    }

    pub fn q(&self, i: usize) -> usize {
        i
    }

    pub fn p(&self, i: usize) -> usize {
        self.n + i
    }

    pub fn z(&self) -> Option<usize> {
        self.kind.has_z().then_some(2 * self.n)
    }

    pub fn t(&self) -> Option<usize> {
        self.kind.has_t().then_some(2 * self.n + self.kind.has_z() as usize)
    }

    /// Coordinate names in chart order; the time coordinate is `t`.
    pub fn names(&self) -> Vec<String> {
        let mut v: Vec<String> = (1..=self.n).map(|i| format!("q{i}")).collect();
        v.extend((1..=self.n).map(|i| format!("p{i}")));
        if self.kind.has_z() {
            v.push("z".into());
        }
        if self.kind.has_t() {
            v.push("t".into());
        }
        v
    }

    /// Reads the chart coordinates out of a binding.
    pub fn state(&self, b: &Binding) -> Result<Vec<f64>> {
        self.names()
            .iter()
            .map(|name| b.get(name).ok_or_else(|| GeomError::MissingCoordinate(name.clone())))
            .collect()
    }

    /// `params` plus the coordinates of `x`.
    pub fn bind(&self, x: &[f64], params: &Binding) -> Binding {
        let mut b = params.clone();
        for (name, v) in self.names().into_iter().zip(x) {
            b.set(name, *v);
        }
        b
    }

    pub fn is_coordinate(&self, name: &str) -> bool {
        self.names().iter().any(|c| c == name)
    }
}
