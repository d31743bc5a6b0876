//! JSON system specifications.

use std::collections::BTreeMap;
use std::path::Path;

use geomech_core::geometry::ShsCoefficients;
use geomech_core::{Binding, Chart, Expression, GeomError, Kind, LagrangianSystem, LinearGeometry, PhaseSystem};
use serde::Deserialize;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShsSpec {
    pub a: Vec<String>,
    pub b: Vec<String>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub geometry: String,
    pub n: usize,
    #[serde(default)]
    pub hamiltonian: Option<String>,
    #[serde(default)]
    pub lagrangian: Option<String>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub constraints: Option<Vec<String>>,
    #[serde(default)]
    pub shs: Option<ShsSpec>,
    /// Initial state for `simulate`, in chart order.
    #[serde(default)]
    pub initial: Option<Vec<f64>>,
}

/// A validated specification.
#[derive(Clone, Debug)]
pub struct System {
    pub kind: Kind,
    pub n: usize,
    pub chart: Chart,
    pub hamiltonian: Option<Expression>,
    pub lagrangian: Option<Expression>,
    pub params: Binding,
    pub constraints: Vec<Expression>,
    pub shs: Option<ShsCoefficients>,
    pub initial: Option<Vec<f64>>,
}

fn invalid(msg: impl Into<String>) -> GeomError {
    GeomError::InvalidInput(msg.into())
}

fn parse_all(list: &[String]) -> Result<Vec<Expression>, GeomError> {
    list.iter().map(|s| Expression::parse(s).map_err(GeomError::from)).collect()
}

impl SystemSpec {
    pub fn from_json(text: &str) -> Result<Self, GeomError> {
        serde_json::from_str(text).map_err(|e| invalid(format!("system spec: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, GeomError> {
        let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<System, GeomError> {
        let kind: Kind = self.geometry.parse()?;
        let chart = Chart::new(kind, self.n)?;
        let (hamiltonian, lagrangian) = match (&self.hamiltonian, &self.lagrangian) {
            (Some(h), None) => (Some(Expression::parse(h)?), None),
            (None, Some(l)) => (None, Some(Expression::parse(l)?)),
            _ => return Err(invalid("exactly one of `hamiltonian` and `lagrangian` must be given")),
        };
        // Lagrangian specs also reserve the velocity names
        let mut reserved = chart.names();
        if lagrangian.is_some() {
            reserved.extend((1..=self.n).map(|i| format!("qdot{i}")));
            reserved.extend(["z".to_string(), "t".to_string()]);
        }
        if let Some(clash) = self.params.keys().find(|k| reserved.contains(k)) {
            return Err(invalid(format!("parameter `{clash}` clashes with a coordinate name")));
        }
        let params = Binding::from_pairs(self.params.iter().map(|(k, v)| (k.clone(), *v)));
        let constraints = parse_all(self.constraints.as_deref().unwrap_or(&[]))?;
        let shs = match (&self.shs, kind) {
            (Some(s), Kind::Shs) => {
                if s.a.len() != self.n || s.b.len() != self.n {
                    return Err(invalid(format!("shs.a and shs.b need {} entries each", self.n)));
                }
                Some(ShsCoefficients::new(parse_all(&s.a)?, parse_all(&s.b)?)?)
            }
            (None, Kind::Shs) => return Err(invalid("geometry `shs` needs an `shs` block with a and b")),
            (Some(_), _) => return Err(invalid(format!("`shs` block given for geometry `{kind}`"))),
            (None, _) => None,
        };
        let mut known: Vec<String> = reserved;
        known.extend(self.params.keys().cloned());
        let exprs = hamiltonian.iter().chain(&lagrangian).chain(&constraints).chain(shs.iter().flat_map(|s| s.a.iter().chain(&s.b)));
        for e in exprs {
            if let Some(name) = e.free_names().into_iter().find(|v| !known.contains(v)) {
                return Err(invalid(format!("unknown name `{name}` in `{e}`")));
            }
        }
        if let Some(x) = &self.initial {
            if x.len() != chart.dim() {
                return Err(GeomError::DimensionMismatch { expected: chart.dim(), found: x.len() });
            }
        }
        Ok(System { kind, n: self.n, chart, hamiltonian, lagrangian, params, constraints, shs, initial: self.initial.clone() })
    }
}

impl System {
    pub fn phase_system(&self) -> Result<PhaseSystem, GeomError> {
        let h = self.hamiltonian.clone().ok_or_else(|| invalid("this command needs a `hamiltonian`"))?;
        match &self.shs {
            Some(c) => PhaseSystem::shs(self.n, h, self.params.clone(), c.clone()),
            None => PhaseSystem::new(self.kind, self.n, h, self.params.clone()),
        }
    }

    pub fn lagrangian_system(&self) -> Result<LagrangianSystem, GeomError> {
        let l = self.lagrangian.clone().ok_or_else(|| invalid("this command needs a `lagrangian`"))?;
        LagrangianSystem::new(self.n, l, self.params.clone())
    }

    pub fn manifold(&self) -> Result<geomech_core::ConstraintManifold, GeomError> {
        if self.constraints.is_empty() {
            return Err(invalid("this command needs `constraints`"));
        }
        let m = geomech_core::ConstraintManifold::new(self.kind, self.n, self.constraints.clone(), self.params.clone())?;
        Ok(match &self.shs {
            Some(c) => m.with_shs(c.clone()),
            None => m,
        })
    }

    pub fn geometry_at(&self, x: &[f64]) -> Result<LinearGeometry, GeomError> {
        self.check_point(x)?;
        let b = self.chart.bind(x, &self.params);
        match &self.shs {
            Some(c) => c.geometry_at(&b),
            None => LinearGeometry::standard(self.kind, self.n, &b),
        }
    }

    pub fn check_point(&self, x: &[f64]) -> Result<(), GeomError> {
        if x.len() != self.chart.dim() {
            return Err(GeomError::DimensionMismatch { expected: self.chart.dim(), found: x.len() });
        }
        Ok(())
    }
}
