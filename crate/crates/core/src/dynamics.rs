//! Vector fields, brackets and trajectories generated by a Hamiltonian.
//!
//! Every field is available twice: from the explicit coordinate formulas
//! (`field_at`, used by the integrators) and from `♯` applied to assembled
//! covectors (`field_via_sharp`). The two must agree.
//!
//! Sign conventions: contact-type structures use `X_H = ♯_Λ(dH) − H R`;
//! SHS uses `X_H = −grad H + (R(H) + f H) R`, so an SHS built from a contact
//! form reproduces the contact field with the opposite global sign.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::chart::{Chart, Kind};
use crate::error::{GeomError, Result};
use crate::expr::{add, mul, neg, sub, Binding, CompiledExpr, ExprError, Expression};
use crate::geometry::{LinearGeometry, ShsCoefficients, ShsCompatibility};
use crate::linalg::max_abs;

pub const DEFAULT_STEP: f64 = 1e-3;
pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_FD_STEP: f64 = 1e-5;
/// Largest residual accepted by the SHS Jacobi-compatibility test.
pub const COMPATIBILITY_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Gradient,
    Hamiltonian,
    Evolution,
}

impl FieldKind {
    pub const ALL: [FieldKind; 3] = [FieldKind::Gradient, FieldKind::Hamiltonian, FieldKind::Evolution];

    pub fn name(self) -> &'static str {
        match self {
            FieldKind::Gradient => "gradient",
            FieldKind::Hamiltonian => "hamiltonian",
            FieldKind::Evolution => "evolution",
        }
    }
}

impl fmt::Display for FieldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FieldKind {
    type Err = GeomError;

    fn from_str(s: &str) -> Result<Self> {
        FieldKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| GeomError::InvalidInput(format!("unknown field kind '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LiftTest {
    GradientImage,
    ModifiedForm,
    LegendrianLift,
}

impl LiftTest {
    pub fn name(self) -> &'static str {
        match self {
            LiftTest::GradientImage => "gradient_image",
            LiftTest::ModifiedForm => "modified_form",
            LiftTest::LegendrianLift => "legendrian_lift",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Stepper {
    /// Classical fourth-order Runge–Kutta on a uniform grid.
    Rk4 { step: f64 },
    /// Dormand–Prince 5(4) with per-component error control.
    Rk45 { initial_step: f64, atol: f64, rtol: f64 },
}

impl Stepper {
    pub fn rk4(step: f64) -> Self {
        Stepper::Rk4 { step }
    }

    pub fn adaptive() -> Self {
        Stepper::Rk45 { initial_step: DEFAULT_STEP, atol: DEFAULT_TOL, rtol: DEFAULT_TOL }
    }
}

impl Default for Stepper {
    fn default() -> Self {
        Stepper::rk4(DEFAULT_STEP)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum OneForm {
    Theta,
    Eta,
}

/// SHS coefficients with their conformal factor and compatibility report.
#[derive(Clone, Debug)]
pub struct ShsData {
    pub coefficients: ShsCoefficients,
    pub factor: Expression,
    pub compatibility: ShsCompatibility,
}

#[derive(Clone, Debug)]
struct Compiled {
    params: Vec<f64>,
    h: CompiledExpr,
    dh: Vec<CompiledExpr>,
    a: Vec<CompiledExpr>,
    b: Vec<CompiledExpr>,
    f: Option<CompiledExpr>,
    // nonzero entries ∂_j λ_k
    dlambda: Vec<(usize, usize, CompiledExpr)>,
}

/// A Hamiltonian on the Darboux chart of one of the five geometries.
#[derive(Clone, Debug)]
pub struct PhaseSystem {
    chart: Chart,
    hamiltonian: Expression,
    params: Binding,
    partials: Vec<Expression>,
    shs: Option<ShsData>,
    compiled: Compiled,
}

impl PhaseSystem {
    /// System on a Darboux chart. SHS systems need coefficients; see [`PhaseSystem::shs`].
    pub fn new(kind: Kind, n: usize, hamiltonian: Expression, params: Binding) -> Result<Self> {
        if kind == Kind::Shs {
            return Err(GeomError::InvalidInput("SHS systems need λ coefficients".into()));
        }
        Self::build(Chart::new(kind, n)?, hamiltonian, params, None)
    }

    pub fn shs(n: usize, hamiltonian: Expression, params: Binding, coefficients: ShsCoefficients) -> Result<Self> {
        if coefficients.n() != n {
            return Err(GeomError::DimensionMismatch { expected: n, found: coefficients.n() });
        }
        Self::build(Chart::new(Kind::Shs, n)?, hamiltonian, params, Some(coefficients))
    }

    fn build(chart: Chart, hamiltonian: Expression, params: Binding, coefficients: Option<ShsCoefficients>) -> Result<Self> {
        let names = chart.names();
        if let Some((clash, _)) = params.iter().find(|(k, _)| chart.is_coordinate(k)) {
            return Err(GeomError::InvalidInput(format!("parameter '{clash}' shadows a coordinate")));
        }
        let mut slots: Vec<&str> = names.iter().map(String::as_str).collect();
        slots.extend(params.iter().map(|(k, _)| k));
        let partials: Vec<Expression> = names.iter().map(|v| hamiltonian.differentiate(v)).collect();
        let compile_all = |es: &[Expression]| es.iter().map(|e| e.compile(&slots)).collect::<std::result::Result<Vec<_>, _>>();
        let mut compiled = Compiled {
            params: params.iter().map(|(_, v)| v).collect(),
            h: hamiltonian.compile(&slots)?,
            dh: compile_all(&partials)?,
            a: vec![],
            b: vec![],
            f: None,
            dlambda: vec![],
        };
        let shs = match coefficients {
            None => None,
            Some(coefficients) => {
                compiled.a = compile_all(&coefficients.a)?;
                compiled.b = compile_all(&coefficients.b)?;
                let factor = coefficients.conformal_factor();
                compiled.f = Some(factor.compile(&slots)?);
                for (k, c) in coefficients.lambda_components().iter().enumerate() {
                    for (j, v) in names.iter().enumerate() {
                        let e = c.differentiate(v);
                        if !e.is_zero() {
                            compiled.dlambda.push((j, k, e.compile(&slots)?));
                        }
                    }
                }
                let compatibility = coefficients.compatibility(&params, &coefficients.sample_points(8))?;
                Some(ShsData { coefficients, factor, compatibility })
            }
        };
        Ok(PhaseSystem { chart, hamiltonian, params, partials, shs, compiled })
    }

    pub fn kind(&self) -> Kind {
        self.chart.kind
    }

    pub fn n(&self) -> usize {
        self.chart.n
    }

    pub fn chart(&self) -> Chart {
        self.chart
    }

    pub fn dim(&self) -> usize {
        self.chart.dim()
    }

    pub fn hamiltonian(&self) -> &Expression {
        &self.hamiltonian
    }

    pub fn params(&self) -> &Binding {
        &self.params
    }

    /// `∂H/∂x` for each chart coordinate, in chart order.
    pub fn partials(&self) -> &[Expression] {
        &self.partials
    }

    pub fn shs_data(&self) -> Option<&ShsData> {
        self.shs.as_ref()
    }

    /// Chart coordinates of `x` together with the parameters.
    pub fn bind(&self, x: &[f64]) -> Binding {
        self.chart.bind(x, &self.params)
    }

    fn slots(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(GeomError::DimensionMismatch { expected: self.dim(), found: x.len() });
        }
        let mut v = x.to_vec();
        v.extend_from_slice(&self.compiled.params);
        Ok(v)
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(self.compiled.h.eval(&self.slots(x)?)?)
    }

    pub fn differential(&self, x: &[f64]) -> Result<DVector<f64>> {
        let v = self.slots(x)?;
        let dh = self.compiled.dh.iter().map(|e| e.eval(&v)).collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(DVector::from_vec(dh))
    }

    /// Conformal factor `f` of an SHS at `x`; zero for the other kinds.
    pub fn conformal_factor_at(&self, x: &[f64]) -> Result<f64> {
        match &self.compiled.f {
            Some(f) => Ok(f.eval(&self.slots(x)?)?),
            None => Ok(0.0),
        }
    }

    /// The linear structure on `T_x M`.
    pub fn geometry_at(&self, x: &[f64]) -> Result<LinearGeometry> {
        if self.kind() != Kind::Shs {
            let v = self.slots(x)?;
            return LinearGeometry::standard(self.kind(), self.n(), &self.chart.bind(&v[..self.dim()], &Binding::new()));
        }
        let v = self.slots(x)?;
        let eval = |es: &[CompiledExpr]| es.iter().map(|e| e.eval(&v)).collect::<std::result::Result<Vec<_>, _>>();
        let a = eval(&self.compiled.a)?;
        let b = eval(&self.compiled.b)?;
        let d = self.dim();
        let mut jac = DMatrix::zeros(d, d);
        for (j, k, e) in &self.compiled.dlambda {
            jac[(*j, *k)] = e.eval(&v)?;
        }
        LinearGeometry::shs(self.n(), &a, &b, &jac - jac.transpose())
    }

    fn require_compatible(&self) -> Result<()> {
        if let Some(data) = &self.shs {
            let residual = data.compatibility.residual();
            if residual > COMPATIBILITY_TOL {
                return Err(GeomError::JacobiIncompatible { residual });
            }
        }
        Ok(())
    }

    /// Checks that `field` is defined for this system.
    pub fn supports(&self, field: FieldKind) -> Result<()> {
        match (field, self.kind()) {
            (FieldKind::Evolution, Kind::Cosymplectic | Kind::Contact) => Ok(()),
            (FieldKind::Evolution, kind) => {
                Err(GeomError::UnsupportedCombination(format!("no evolution field on {kind} systems")))
            }
            (FieldKind::Hamiltonian, Kind::Shs) => self.require_compatible(),
            _ => Ok(()),
        }
    }

    /// Field value at `x` from the coordinate formulas.
    pub fn field_at(&self, field: FieldKind, x: &[f64]) -> Result<DVector<f64>> {
        self.supports(field)?;
        self.field_unchecked(field, x)
    }

    fn field_unchecked(&self, field: FieldKind, x: &[f64]) -> Result<DVector<f64>> {
        let v = self.slots(x)?;
        let c = &self.compiled;
        let dh = c.dh.iter().map(|e| e.eval(&v)).collect::<std::result::Result<Vec<_>, _>>()?;
        let chart = self.chart;
        let n = chart.n;
        let mut out = DVector::zeros(chart.dim());
        let (hq, hp) = (|i: usize| dh[chart.q(i)], |i: usize| dh[chart.p(i)]);
        let hz = chart.z().map_or(0.0, |z| dh[z]);
        let ht = chart.t().map_or(0.0, |t| dh[t]);
        match chart.kind {
            Kind::Symplectic | Kind::Cosymplectic => {
                for i in 0..n {
                    out[chart.q(i)] = hp(i);
                    out[chart.p(i)] = -hq(i);
                }
                if let Some(t) = chart.t() {
                    out[t] = match field {
                        FieldKind::Gradient => ht,
                        FieldKind::Hamiltonian => 0.0,
                        FieldKind::Evolution => 1.0,
                    };
                }
            }
            Kind::Contact | Kind::Cocontact => {
                let mut zdot = 0.0;
                for i in 0..n {
                    let p = x[chart.p(i)];
                    out[chart.q(i)] = hp(i);
                    out[chart.p(i)] = -(hq(i) + p * hz);
                    zdot += p * hp(i);
                }
                let z = chart.z().unwrap();
                out[z] = zdot
                    + match field {
                        FieldKind::Gradient => hz,
                        FieldKind::Hamiltonian => -c.h.eval(&v)?,
                        FieldKind::Evolution => 0.0,
                    };
                if let Some(t) = chart.t() {
                    out[t] = if field == FieldKind::Gradient { ht } else { 1.0 };
                }
            }
            Kind::Shs => {
                let a = c.a.iter().map(|e| e.eval(&v)).collect::<std::result::Result<Vec<_>, _>>()?;
                let b = c.b.iter().map(|e| e.eval(&v)).collect::<std::result::Result<Vec<_>, _>>()?;
                let z = chart.z().unwrap();
                if field == FieldKind::Gradient {
                    out[z] = hz;
                    for i in 0..n {
                        out[chart.q(i)] = hp(i) - b[i] * hz;
                        out[chart.p(i)] = -hq(i) + a[i] * hz;
                        out[z] += b[i] * hq(i) - a[i] * hp(i);
                    }
                } else {
                    let f = c.f.as_ref().expect("SHS system has a factor").eval(&v)?;
                    out[z] = f * c.h.eval(&v)?;
                    for i in 0..n {
                        out[chart.q(i)] = -hp(i) + b[i] * hz;
                        out[chart.p(i)] = hq(i) - a[i] * hz;
                        out[z] += a[i] * hp(i) - b[i] * hq(i);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Field value at `x` from the musical isomorphism of the structure at `x`.
    pub fn field_via_sharp(&self, field: FieldKind, x: &[f64]) -> Result<DVector<f64>> {
        self.supports(field)?;
        let g = self.geometry_at(x)?;
        let dh = self.differential(x)?;
        let grad = g.sharp(&dh);
        if field == FieldKind::Gradient {
            return Ok(grad);
        }
        let h = self.value(x)?;
        Ok(match self.kind() {
            Kind::Symplectic => grad,
            Kind::Cosymplectic => {
                let r = g.reeb_t().unwrap();
                let x_h = &grad - &r * dh.dot(&r);
                if field == FieldKind::Evolution {
                    x_h + r
                } else {
                    x_h
                }
            }
            Kind::Contact => {
                let r = g.reeb_z().unwrap();
                let x_h = g.jacobi_pair().sharp(&dh) - &r * h;
                if field == FieldKind::Evolution {
                    x_h + r * h
                } else {
                    x_h
                }
            }
            Kind::Cocontact => {
                let (rz, rt) = (g.reeb_z().unwrap(), g.reeb_t().unwrap());
                &grad - &rz * (dh.dot(&rz) + h) + &rt * (1.0 - dh.dot(&rt))
            }
            Kind::Shs => {
                let r = g.reeb_z().unwrap();
                let f = self.conformal_factor_at(x)?;
                -grad + &r * (dh.dot(&r) + f * h)
            }
        })
    }

    /// `♭X = s dH + Σ c_k α_k`: the sign `s` and the coefficient expressions.
    fn flat_decomposition(&self, field: FieldKind) -> (f64, Vec<(Expression, OneForm)>) {
        let chart = self.chart;
        let d = |c: Option<usize>| c.map(|i| self.partials[i].clone()).unwrap_or(Expression::num(0.0));
        let (hz, ht) = (d(chart.z()), d(chart.t()));
        let h = self.hamiltonian.clone();
        match (self.kind(), field) {
            (_, FieldKind::Gradient) | (Kind::Symplectic, _) => (1.0, vec![]),
            (Kind::Cosymplectic, FieldKind::Hamiltonian) => (1.0, vec![(neg(ht), OneForm::Theta)]),
            (Kind::Cosymplectic, _) => (1.0, vec![(sub(Expression::num(1.0), ht), OneForm::Theta)]),
            (Kind::Contact, FieldKind::Hamiltonian) => (1.0, vec![(neg(add(hz, h)), OneForm::Eta)]),
            (Kind::Contact, _) => (1.0, vec![(neg(hz), OneForm::Eta)]),
            (Kind::Cocontact, _) => (
                1.0,
                vec![(neg(add(hz, h)), OneForm::Eta), (sub(Expression::num(1.0), ht), OneForm::Theta)],
            ),
            (Kind::Shs, _) => {
                let f = self.shs.as_ref().expect("SHS system has a factor").factor.clone();
                (-1.0, vec![(add(hz, mul(f, h)), OneForm::Eta)])
            }
        }
    }

    /// The covector `♭X` predicted by the definition of the field.
    pub fn defining_covector(&self, field: FieldKind, x: &[f64]) -> Result<DVector<f64>> {
        self.supports(field)?;
        let g = self.geometry_at(x)?;
        let b = self.bind(x);
        let (s, terms) = self.flat_decomposition(field);
        let mut out = self.differential(x)? * s;
        for (c, form) in &terms {
            out += one_form(&g, *form) * c.evaluate(&b)?;
        }
        Ok(out)
    }

    /// Jacobi (or Poisson) bracket `Λ(df, dg) + f E(g) − g E(f)` at a point,
    /// assembled from the structure's `(Λ, E)`.
    pub fn bracket(&self, f: &Expression, g: &Expression, at: &Binding) -> Result<f64> {
        if self.kind() == Kind::Shs && self.require_compatible().is_err() {
            return Err(GeomError::UnsupportedCombination("SHS bracket needs a Jacobi-compatible λ".into()));
        }
        let b = self.params.merged(at);
        let x = self.chart.state(&b)?;
        let pair = self.geometry_at(&x)?.jacobi_pair();
        let names = self.chart.names();
        let grad = |e: &Expression| -> Result<DVector<f64>> {
            let v = names.iter().map(|v| e.differentiate(v).evaluate(&b)).collect::<std::result::Result<Vec<_>, _>>()?;
            Ok(DVector::from_vec(v))
        };
        Ok(pair.bracket(f.evaluate(&b)?, &grad(f)?, g.evaluate(&b)?, &grad(g)?))
    }

    /// The bracket as a symbolic expression, from the coordinate formula of each kind.
    pub fn bracket_expression(&self, f: &Expression, g: &Expression) -> Result<Expression> {
        if self.kind() == Kind::Shs && self.require_compatible().is_err() {
            return Err(GeomError::UnsupportedCombination("SHS bracket needs a Jacobi-compatible λ".into()));
        }
        let chart = self.chart;
        let names = chart.names();
        let df: Vec<Expression> = names.iter().map(|v| f.differentiate(v)).collect();
        let dg: Vec<Expression> = names.iter().map(|v| g.differentiate(v)).collect();
        let cross = |i: usize, j: usize| sub(mul(df[i].clone(), dg[j].clone()), mul(df[j].clone(), dg[i].clone()));
        let mut out = Expression::num(0.0);
        for i in 0..chart.n {
            let (q, p) = (chart.q(i), chart.p(i));
            match chart.kind {
                Kind::Symplectic | Kind::Cosymplectic => out = add(out, cross(q, p)),
                Kind::Contact | Kind::Cocontact => {
                    let z = chart.z().unwrap();
                    let pv = Expression::var(names[p].clone());
                    out = add(out, add(cross(p, q), mul(pv, cross(p, z))));
                }
                Kind::Shs => {
                    let z = chart.z().unwrap();
                    let c = self.shs.as_ref().unwrap();
                    let term = sub(mul(c.coefficients.a[i].clone(), cross(p, z)), mul(c.coefficients.b[i].clone(), cross(q, z)));
                    out = add(out, add(cross(q, p), term));
                }
            }
        }
        match chart.kind {
            Kind::Contact | Kind::Cocontact => {
                let z = chart.z().unwrap();
                out = add(out, sub(mul(g.clone(), df[z].clone()), mul(f.clone(), dg[z].clone())));
            }
            Kind::Shs => {
                let z = chart.z().unwrap();
                let factor = self.shs.as_ref().unwrap().factor.clone();
                let e = sub(mul(f.clone(), dg[z].clone()), mul(g.clone(), df[z].clone()));
                out = add(out, mul(factor, e));
            }
            _ => {}
        }
        Ok(out)
    }

    /// Integrates `field` from `x0` over `[t0, t1]`.
    pub fn integrate(&self, field: FieldKind, x0: &[f64], t0: f64, t1: f64, stepper: Stepper) -> Result<Trajectory> {
        self.supports(field)?;
        if x0.len() != self.dim() {
            return Err(GeomError::DimensionMismatch { expected: self.dim(), found: x0.len() });
        }
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(GeomError::InvalidInput("initial state is not finite".into()));
        }
        if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
            return Err(GeomError::InvalidInput(format!("empty time span [{t0}, {t1}]")));
        }
        let rhs = |x: &DVector<f64>| self.field_unchecked(field, x.as_slice());
        let (times, states, adaptive) = match stepper {
            Stepper::Rk4 { step } => {
                if !(step > 0.0) {
                    return Err(GeomError::InvalidInput(format!("step must be positive, got {step}")));
                }
                let (t, s) = rk4(&rhs, DVector::from_column_slice(x0), t0, t1, step)?;
                (t, s, false)
            }
            Stepper::Rk45 { initial_step, atol, rtol } => {
                if !(initial_step > 0.0 && atol > 0.0 && rtol > 0.0) {
                    return Err(GeomError::InvalidInput("RK45 step and tolerances must be positive".into()));
                }
                let (t, s) = dopri(&rhs, DVector::from_column_slice(x0), t0, t1, initial_step, atol, rtol)?;
                (t, s, true)
            }
        };
        let mut energy = Vec::with_capacity(states.len());
        let mut energy_rate = Vec::with_capacity(states.len());
        for s in &states {
            energy.push(self.value(s)?);
            energy_rate.push(self.differential(s)?.dot(&rhs(&DVector::from_column_slice(s))?));
        }
        Ok(Trajectory {
            kind: self.kind(),
            n: self.n(),
            field,
            hamiltonian: self.hamiltonian.to_string(),
            adaptive,
            times,
            states,
            energy,
            energy_rate,
        })
    }

    /// `dH/dt` along a trajectory of this system, and its residual against
    /// the kind's conservation or dissipation law.
    pub fn energy_rates(&self, traj: &Trajectory) -> Result<EnergyRates> {
        if traj.kind != self.kind() || traj.n != self.n() || traj.hamiltonian != self.hamiltonian.to_string() {
            return Err(GeomError::MismatchedSystem(format!(
                "trajectory of {} H = {} (n = {}) vs system {} H = {} (n = {})",
                traj.kind,
                traj.hamiltonian,
                traj.n,
                self.kind(),
                self.hamiltonian,
                self.n()
            )));
        }
        let field = traj.field;
        let chart = self.chart;
        let law = match (self.kind(), field) {
            (Kind::Symplectic, _) => "dH/dt = 0",
            (_, FieldKind::Gradient) => "dH/dt = R(H)^2 summed over Reeb fields",
            (Kind::Cosymplectic, FieldKind::Hamiltonian) => "dH/dt = 0",
            (Kind::Cosymplectic, _) => "dH/dt = dH/dt_coord",
            (Kind::Contact, FieldKind::Hamiltonian) => "dH/dt = -H dH/dz",
            (Kind::Contact, _) => "dH/dt = 0",
            (Kind::Cocontact, _) => "dH/dt = -H dH/dz + dH/dt_coord",
            (Kind::Shs, _) => "dH/dt = f H dH/dz",
        };
        let mut rate = Vec::with_capacity(traj.len());
        let mut expected = Vec::with_capacity(traj.len());
        let mut entropy = (self.kind() == Kind::Contact && field == FieldKind::Evolution).then(Vec::new);
        for x in &traj.states {
            let dh = self.differential(x)?;
            let h = self.value(x)?;
            let xdot = self.field_unchecked(field, x)?;
            let hz = chart.z().map_or(0.0, |z| dh[z]);
            let ht = chart.t().map_or(0.0, |t| dh[t]);
            rate.push(dh.dot(&xdot));
            expected.push(match (self.kind(), field) {
                (Kind::Symplectic, _) => 0.0,
                (_, FieldKind::Gradient) => hz * hz + ht * ht,
                (Kind::Cosymplectic, FieldKind::Hamiltonian) => 0.0,
                (Kind::Cosymplectic, _) => ht,
                (Kind::Contact, FieldKind::Hamiltonian) => -h * hz,
                (Kind::Contact, _) => 0.0,
                (Kind::Cocontact, _) => -h * hz + ht,
                (Kind::Shs, _) => self.conformal_factor_at(x)? * h * hz,
            });
            if let Some(e) = entropy.as_mut() {
                let pq: f64 = (0..chart.n).map(|i| x[chart.p(i)] * xdot[chart.q(i)]).sum();
                e.push(xdot[chart.z().unwrap()] - pq);
            }
        }
        let residual: Vec<f64> = rate.iter().zip(&expected).map(|(a, b)| (a - b).abs()).collect();
        let max_residual = residual.iter().copied().fold(0.0, f64::max);
        let max_entropy_residual = entropy.as_ref().map(|e| e.iter().fold(0.0_f64, |m, v| m.max(v.abs())));
        Ok(EnergyRates {
            law: law.into(),
            rate,
            expected,
            residual,
            max_residual,
            entropy_residual: entropy,
            max_entropy_residual,
        })
    }

    /// Residual of one of the tangent-lift identities at `x`.
    ///
    /// `gradient_image`: asymmetry of the Jacobian of `G = ♭X`, exact (from
    /// second derivatives of H) when `♭X = dH`. `modified_form`: largest entry
    /// of the pullback of `Ω_H` by the section `X`. `legendrian_lift`: largest
    /// component of the pulled-back lift forms.
    pub fn lift_residual(&self, field: FieldKind, test: LiftTest, x: &[f64], fd_step: f64) -> Result<f64> {
        self.supports(field)?;
        if !(fd_step > 0.0) {
            return Err(GeomError::InvalidInput(format!("fd_step must be positive, got {fd_step}")));
        }
        match test {
            LiftTest::GradientImage => self.gradient_image_residual(field, x, fd_step),
            LiftTest::ModifiedForm => Ok(max_abs(&self.modified_form_pullback(field, x, fd_step)?)),
            LiftTest::LegendrianLift => {
                if field != FieldKind::Hamiltonian || !matches!(self.kind(), Kind::Contact | Kind::Cocontact) {
                    return Err(GeomError::UnsupportedCombination(format!(
                        "Legendrian lift is defined for Hamiltonian fields of contact-type systems, not {field} on {}",
                        self.kind()
                    )));
                }
                let dh = self.differential(x)?;
                let chart = self.chart;
                let s = dh[chart.z().unwrap()];
                let e = chart.t().map_or(0.0, |t| dh[t]);
                let (eta, theta) = self.lift_pullback(field, x, s, e, fd_step)?;
                Ok(eta.amax().max(theta.map_or(0.0, |t| t.amax())))
            }
        }
    }

    fn gradient_image_residual(&self, field: FieldKind, x: &[f64], h: f64) -> Result<f64> {
        let d = self.dim();
        if self.flat_decomposition(field).1.is_empty() {
            let b = self.bind(x);
            let names = self.chart.names();
            let mut hess = DMatrix::zeros(d, d);
            for (i, di) in self.partials.iter().enumerate() {
                for (j, v) in names.iter().enumerate() {
                    hess[(i, j)] = di.differentiate(v).evaluate(&b)?;
                }
            }
            return Ok(max_abs(&(&hess - hess.transpose())));
        }
        let jac = fd_jacobian(|y| Ok(self.geometry_at(y)?.flat(&self.field_unchecked(field, y)?)), x, h)?;
        Ok(max_abs(&(&jac - jac.transpose())))
    }

    /// `X*Ω_H` as a `d × d` matrix, with `Ω_H = Ω_0 + β^v` and `β = d(♭X)`
    /// from the closed form of each field.
    pub fn modified_form_pullback(&self, field: FieldKind, x: &[f64], h: f64) -> Result<DMatrix<f64>> {
        self.supports(field)?;
        let d = self.dim();
        let xv = self.field_unchecked(field, x)?;
        let flat_at = |y: &[f64]| -> Result<DMatrix<f64>> { Ok(self.geometry_at(y)?.flat_matrix().clone()) };
        let jac = fd_jacobian(|y| self.field_unchecked(field, y), x, h)?;
        let f = flat_at(x)?;
        // A_ik = Σ_j ∂_k F_ij X^j
        let mut a = DMatrix::zeros(d, d);
        for k in 0..d {
            let (plus, minus) = shifted(x, k, h);
            let dk = (flat_at(&plus)? - flat_at(&minus)?) / (2.0 * h);
            a.set_column(k, &(dk * &xv));
        }
        let pullback = &a - a.transpose() + &f * &jac - jac.transpose() * f.transpose();
        Ok(pullback + self.correction_form(field, x)?)
    }

    /// `β = d(Σ c_k α_k)` for the one-form part of `♭X`.
    fn correction_form(&self, field: FieldKind, x: &[f64]) -> Result<DMatrix<f64>> {
        let d = self.dim();
        let g = self.geometry_at(x)?;
        let b = self.bind(x);
        let names = self.chart.names();
        let mut beta = DMatrix::zeros(d, d);
        for (c, form) in self.flat_decomposition(field).1 {
            let alpha = one_form(&g, form);
            let dc = DVector::from_vec(names.iter().map(|v| c.differentiate(v).evaluate(&b)).collect::<std::result::Result<Vec<_>, _>>()?);
            beta += &dc * alpha.transpose() - &alpha * dc.transpose();
            let dalpha = match (form, g.shs_data()) {
                (OneForm::Theta, _) => DMatrix::zeros(d, d),
                (OneForm::Eta, Some(shs)) => shs.dlambda.clone(),
                (OneForm::Eta, None) => g.two_form().clone(),
            };
            beta += dalpha * c.evaluate(&b)?;
        }
        Ok(beta)
    }

    /// Pullbacks of the lift forms by `X × s × e` at `x`: the covector
    /// `L_X η + s η + L_X θ + e θ` and, on cocontact systems, `d(θ(X))`.
    pub fn lift_pullback(&self, field: FieldKind, x: &[f64], s: f64, e: f64, h: f64) -> Result<(DVector<f64>, Option<DVector<f64>>)> {
        self.supports(field)?;
        let g = self.geometry_at(x)?;
        let xv = self.field_unchecked(field, x)?;
        let jac = fd_jacobian(|y| self.field_unchecked(field, y), x, h)?;
        let lie = |form: OneForm| -> Result<DVector<f64>> {
            // (L_X α)_i = Σ_j ∂_i X^j α_j + X^j ∂_j α_i
            let dalpha = fd_jacobian(|y| Ok(one_form(&self.geometry_at(y)?, form)), x, h)?;
            Ok(jac.transpose() * one_form(&g, form) + dalpha * &xv)
        };
        let eta = g.eta().ok_or_else(|| GeomError::UnsupportedCombination("no contact form on this chart".into()))?;
        let mut pulled = lie(OneForm::Eta)? + eta * s;
        let theta_part = match g.theta() {
            Some(theta) => {
                pulled += lie(OneForm::Theta)? + theta * e;
                let grad = fd_jacobian(|y| Ok(DVector::from_element(1, theta.dot(&self.field_unchecked(field, y)?))), x, h)?;
                Some(grad.row(0).transpose())
            }
            None => None,
        };
        Ok((pulled, theta_part))
    }
}

fn one_form(g: &LinearGeometry, form: OneForm) -> DVector<f64> {
    match form {
        OneForm::Theta => g.theta().expect("chart has θ").clone(),
        OneForm::Eta => g.eta().expect("chart has η").clone(),
    }
}

fn shifted(x: &[f64], k: usize, h: f64) -> (Vec<f64>, Vec<f64>) {
    let mut plus = x.to_vec();
    let mut minus = x.to_vec();
    plus[k] += h;
    minus[k] -= h;
    (plus, minus)
}

/// Central-difference Jacobian `J_ik = ∂_k F_i`.
fn fd_jacobian<F>(f: F, x: &[f64], h: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<DVector<f64>>,
{
    let mut cols = Vec::with_capacity(x.len());
    for k in 0..x.len() {
        let (plus, minus) = shifted(x, k, h);
        cols.push((f(&plus)? - f(&minus)?) / (2.0 * h));
    }
    Ok(DMatrix::from_columns(&cols))
}

/// Maps evaluation failures during stepping to `NonFiniteState`.
fn guarded(r: Result<DVector<f64>>, t: f64) -> Result<DVector<f64>> {
    match r {
        Ok(v) if v.iter().all(|c| c.is_finite()) => Ok(v),
        Ok(_) | Err(GeomError::Expr(ExprError::Domain { .. })) => Err(GeomError::NonFiniteState { t }),
        Err(e) => Err(e),
    }
}

type Samples = (Vec<f64>, Vec<Vec<f64>>);

fn rk4<F>(rhs: &F, x0: DVector<f64>, t0: f64, t1: f64, step: f64) -> Result<Samples>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let span = t1 - t0;
    let steps = ((span / step) - 1e-9).ceil().max(1.0) as usize;
    let h = span / steps as f64;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut x = x0;
    times.push(t0);
    states.push(x.as_slice().to_vec());
    for k in 0..steps {
        let t = t0 + k as f64 * h;
        let k1 = guarded(rhs(&x), t)?;
        let k2 = guarded(rhs(&(&x + &k1 * (h / 2.0))), t)?;
        let k3 = guarded(rhs(&(&x + &k2 * (h / 2.0))), t)?;
        let k4 = guarded(rhs(&(&x + &k3 * h)), t)?;
        let next = &x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(GeomError::NonFiniteState { t });
        }
        x = next;
        times.push(if k + 1 == steps { t1 } else { t0 + (k + 1) as f64 * h });
        states.push(x.as_slice().to_vec());
    }
    Ok((times, states))
}

// Dormand–Prince 5(4) tableau; the nodes are not needed for autonomous fields
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const DP_B4: [f64; 7] =
    [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];

fn dopri<F>(rhs: &F, x0: DVector<f64>, t0: f64, t1: f64, h0: f64, atol: f64, rtol: f64) -> Result<Samples>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let span = t1 - t0;
    let min_step = 1e-14 * span.max(1.0);
    let mut times = vec![t0];
    let mut states = vec![x0.as_slice().to_vec()];
    let mut x = x0;
    let mut t = t0;
    let mut h = h0.min(span);
    while t < t1 {
        let last = t + h >= t1;
        if last {
            h = t1 - t;
        }
        let mut k: Vec<DVector<f64>> = Vec::with_capacity(7);
        for s in 0..7 {
            let mut y = x.clone();
            for (j, kj) in k.iter().enumerate() {
                if DP_A[s][j] != 0.0 {
                    y += kj * (h * DP_A[s][j]);
                }
            }
            k.push(guarded(rhs(&y), t)?);
        }
        let mut x5 = x.clone();
        let mut err = DVector::zeros(x.len());
        for s in 0..7 {
            x5 += &k[s] * (h * DP_B5[s]);
            err += &k[s] * (h * (DP_B5[s] - DP_B4[s]));
        }
        let norm = (err
            .iter()
            .zip(x.iter().zip(x5.iter()))
            .map(|(e, (a, b))| (e / (atol + rtol * a.abs().max(b.abs()))).powi(2))
            .sum::<f64>()
            / x.len() as f64)
            .sqrt();
        if !norm.is_finite() {
            return Err(GeomError::NonFiniteState { t });
        }
        if norm <= 1.0 {
            t = if last { t1 } else { t + h };
            x = x5;
            times.push(t);
            states.push(x.as_slice().to_vec());
        }
        let factor = if norm == 0.0 { 5.0 } else { (0.9 * norm.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
        if h < min_step {
            return Err(GeomError::NonFiniteState { t });
        }
    }
    Ok((times, states))
}

/// Integral curve samples with per-sample `H` and `dH/dt`.
#[derive(Clone, Debug, Serialize)]
pub struct Trajectory {
    pub kind: Kind,
    pub n: usize,
    pub field: FieldKind,
    pub hamiltonian: String,
    pub adaptive: bool,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub energy: Vec<f64>,
    pub energy_rate: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Column names for tabular output; the time coordinate is `tau`.
    pub fn columns(&self) -> Vec<String> {
        let chart = Chart::new(self.kind, self.n).expect("trajectory chart");
        let mut cols = vec!["t".to_string()];
        cols.extend(chart.names().into_iter().map(|c| if c == "t" { "tau".to_string() } else { c }));
        cols.push("H".into());
        cols.push("dHdt".into());
        cols
    }

    /// One row per sample, matching [`Trajectory::columns`].
    pub fn rows(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.len()).map(move |k| {
            let mut row = Vec::with_capacity(self.states[k].len() + 3);
            row.push(self.times[k]);
            row.extend_from_slice(&self.states[k]);
            row.push(self.energy[k]);
            row.push(self.energy_rate[k]);
            row
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EnergyRates {
    pub law: String,
    pub rate: Vec<f64>,
    pub expected: Vec<f64>,
    pub residual: Vec<f64>,
    pub max_residual: f64,
    /// `dz/dt − p_i dq^i/dt` for contact evolution fields.
    pub entropy_residual: Option<Vec<f64>>,
    pub max_entropy_residual: Option<f64>,
}

#[cfg(test)]
mod tests;
