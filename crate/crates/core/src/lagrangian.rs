//! Lagrangian mechanics on `TQ` (optionally `× ℝ` for time or action):
//! regularity, the Legendre map, Euler–Lagrange and Herglotz residuals on
//! discrete paths, and the Herglotz action functional.
//!
//! Coordinates are `q1..qn`, velocities `qdot1..qdotn`, the action `z` and
//! the time `t`. A Lagrangian may use `z` or `t` but not both.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{GeomError, Result};
use crate::expr::{Binding, CompiledExpr, Expression};
use crate::linalg::{self, RANK_RTOL};

/// Node perturbation for the finite-difference action gradient.
pub const ACTION_FD_STEP: f64 = 1e-6;

/// The extra coordinate a Lagrangian depends on, if any.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Extension {
    None,
    Time,
    Action,
}

#[derive(Clone, Debug)]
struct Compiled {
    params: Vec<f64>,
    l: CompiledExpr,
    dq: Vec<CompiledExpr>,
    dv: Vec<CompiledExpr>,
    dz: CompiledExpr,
    w: Vec<Vec<CompiledExpr>>,
}

#[derive(Clone, Debug)]
pub struct LagrangianSystem {
    n: usize,
    lagrangian: Expression,
    params: Binding,
    extension: Extension,
    /// `∂L/∂q^i`
    pub dq: Vec<Expression>,
    /// `∂L/∂q̇^i`
    pub dv: Vec<Expression>,
    pub dz: Expression,
    pub dt: Expression,
    /// `W_ij = ∂²L/∂q̇^i∂q̇^j`
    pub hessian: Vec<Vec<Expression>>,
    compiled: Compiled,
}

pub fn q_name(i: usize) -> String {
    format!("q{}", i + 1)
}

pub fn v_name(i: usize) -> String {
    format!("qdot{}", i + 1)
}

/// Momenta and energy at a state.
#[derive(Clone, Debug, Serialize)]
pub struct LegendreReport {
    /// `p̂_i = ∂L/∂q̇^i`
    pub momenta: Vec<f64>,
    /// `E_L = q̇^i ∂L/∂q̇^i − L`
    pub energy: f64,
    /// `λ_L = S*(dL)` in the basis `dq^1..dq^n, dq̇^1..dq̇^n[, dz | dt]`.
    pub lambda_l: Vec<f64>,
    /// `max |λ_L − 𝔽L* λ_Q|`
    pub pullback_residual: f64,
    pub hessian_det: f64,
}

/// Fixed-endpoint path on a uniform time grid.
#[derive(Clone, Debug, Serialize)]
pub struct PathGrid {
    times: Vec<f64>,
    nodes: Vec<Vec<f64>>,
    initial_action: f64,
}

impl PathGrid {
    /// Path with `count` nodes on `[a, b]` sampled from `f`.
    pub fn from_fn<F: Fn(f64) -> Vec<f64>>(a: f64, b: f64, count: usize, initial_action: f64, f: F) -> Result<Self> {
        if count < 2 || !(b > a) {
            return Err(GeomError::InvalidInput(format!("need at least two nodes on a nonempty interval, got {count} on [{a}, {b}]")));
        }
        let h = (b - a) / (count - 1) as f64;
        let times: Vec<f64> = (0..count).map(|k| if k + 1 == count { b } else { a + k as f64 * h }).collect();
        let nodes = times.iter().map(|&t| f(t)).collect();
        Self::new(times, nodes, initial_action)
    }

    /// Checks uniform spacing, at least three interior nodes and a common dimension.
    pub fn new(times: Vec<f64>, nodes: Vec<Vec<f64>>, initial_action: f64) -> Result<Self> {
        if times.len() != nodes.len() {
            return Err(GeomError::DimensionMismatch { expected: times.len(), found: nodes.len() });
        }
        if times.len() < 5 {
            return Err(GeomError::InvalidInput(format!("a path needs at least 3 interior nodes, got {}", times.len().saturating_sub(2))));
        }
        let n = nodes[0].len();
        if n == 0 || nodes.iter().any(|q| q.len() != n) {
            return Err(GeomError::InvalidInput("path nodes must share a positive dimension".into()));
        }
        if nodes.iter().flatten().chain(&times).any(|v| !v.is_finite()) || !initial_action.is_finite() {
            return Err(GeomError::InvalidInput("path contains non-finite values".into()));
        }
        let h = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
        if !(h > 0.0) || times.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h.max(1.0)) {
            return Err(GeomError::InvalidInput("path times must be increasing and uniformly spaced".into()));
        }
        Ok(PathGrid { times, nodes, initial_action })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.nodes[0].len()
    }

    pub fn step(&self) -> f64 {
        (self.times[self.len() - 1] - self.times[0]) / (self.len() - 1) as f64
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn nodes(&self) -> &[Vec<f64>] {
        &self.nodes
    }

    pub fn initial_action(&self) -> f64 {
        self.initial_action
    }

    pub fn with_initial_action(&self, c: f64) -> Self {
        PathGrid { initial_action: c, ..self.clone() }
    }

    /// Copy with interior node `k`, component `i` shifted by `delta`.
    pub fn perturbed(&self, k: usize, i: usize, delta: f64) -> Result<Self> {
        if k == 0 || k + 1 >= self.len() {
            return Err(GeomError::InvalidInput(format!("node {k} is not interior")));
        }
        let mut out = self.clone();
        out.nodes[k][i] += delta;
        Ok(out)
    }
}

/// Discrete Euler–Lagrange or Herglotz operator along a path.
#[derive(Clone, Debug, Serialize)]
pub struct ResidualReport {
    /// Times of the interior nodes.
    pub times: Vec<f64>,
    /// One row per interior node.
    pub residual: Vec<Vec<f64>>,
    pub max_residual: f64,
    /// Action `z` at every node.
    pub z: Vec<f64>,
}

impl LagrangianSystem {
    pub fn new(n: usize, lagrangian: Expression, params: Binding) -> Result<Self> {
        if n == 0 {
            return Err(GeomError::InvalidDimension("a configuration space needs n >= 1".into()));
        }
        let mut names: Vec<String> = (0..n).map(q_name).collect();
        names.extend((0..n).map(v_name));
        names.push("z".into());
        names.push("t".into());
        if let Some((clash, _)) = params.iter().find(|(k, _)| names.iter().any(|c| c == k)) {
            return Err(GeomError::InvalidInput(format!("parameter '{clash}' shadows a coordinate")));
        }
        let free = lagrangian.free_names();
        let extension = match (free.contains("z") && !params.contains("z"), free.contains("t") && !params.contains("t")) {
            (true, true) => return Err(GeomError::InvalidInput("a Lagrangian may depend on z or t, not both".into())),
            (true, false) => Extension::Action,
            (false, true) => Extension::Time,
            (false, false) => Extension::None,
        };
        let mut slots: Vec<&str> = names.iter().map(String::as_str).collect();
        slots.extend(params.iter().map(|(k, _)| k));
        let dq: Vec<Expression> = (0..n).map(|i| lagrangian.differentiate(&q_name(i))).collect();
        let dv: Vec<Expression> = (0..n).map(|i| lagrangian.differentiate(&v_name(i))).collect();
        let hessian: Vec<Vec<Expression>> = dv.iter().map(|d| (0..n).map(|j| d.differentiate(&v_name(j))).collect()).collect();
        let dz = lagrangian.differentiate("z");
        let dt = lagrangian.differentiate("t");
        let compile_all = |es: &[Expression]| es.iter().map(|e| e.compile(&slots)).collect::<std::result::Result<Vec<_>, _>>();
        let compiled = Compiled {
            params: params.iter().map(|(_, v)| v).collect(),
            l: lagrangian.compile(&slots)?,
            dq: compile_all(&dq)?,
            dv: compile_all(&dv)?,
            dz: dz.compile(&slots)?,
            w: hessian.iter().map(|row| compile_all(row)).collect::<std::result::Result<Vec<_>, _>>()?,
        };
        Ok(LagrangianSystem { n, lagrangian, params, extension, dq, dv, dz, dt, hessian, compiled })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn lagrangian(&self) -> &Expression {
        &self.lagrangian
    }

    pub fn params(&self) -> &Binding {
        &self.params
    }

    pub fn extension(&self) -> Extension {
        self.extension
    }

    /// Names of the phase coordinates `(q, q̇[, z | t])`.
    pub fn coordinates(&self) -> Vec<String> {
        let mut v: Vec<String> = (0..self.n).map(q_name).collect();
        v.extend((0..self.n).map(v_name));
        match self.extension {
            Extension::Action => v.push("z".into()),
            Extension::Time => v.push("t".into()),
            Extension::None => {}
        }
        v
    }

    fn slots(&self, q: &[f64], v: &[f64], z: f64, t: f64) -> Vec<f64> {
        let mut s = Vec::with_capacity(2 * self.n + 2 + self.compiled.params.len());
        s.extend_from_slice(q);
        s.extend_from_slice(v);
        s.push(z);
        s.push(t);
        s.extend_from_slice(&self.compiled.params);
        s
    }

    fn hessian_at(&self, s: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.n;
        let mut w = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                w[(i, j)] = self.compiled.w[i][j].eval(s)?;
            }
        }
        Ok(w)
    }

    fn require_regular(&self, s: &[f64]) -> Result<DMatrix<f64>> {
        let w = self.hessian_at(s)?;
        let sv = linalg::singular_values(&w);
        let top = sv.first().copied().unwrap_or(0.0);
        let bottom = sv.last().copied().unwrap_or(0.0);
        if bottom <= RANK_RTOL * top.max(1.0) {
            return Err(GeomError::SingularLagrangian { det: w.determinant() });
        }
        Ok(w)
    }

    fn state_slots(&self, at: &Binding) -> Result<Vec<f64>> {
        let b = self.params.merged(at);
        let get = |name: &str| b.get(name).ok_or_else(|| GeomError::MissingCoordinate(name.to_string()));
        let q = (0..self.n).map(|i| get(&q_name(i))).collect::<Result<Vec<_>>>()?;
        let v = (0..self.n).map(|i| get(&v_name(i))).collect::<Result<Vec<_>>>()?;
        let z = if self.extension == Extension::Action { get("z")? } else { b.get("z").unwrap_or(0.0) };
        let t = if self.extension == Extension::Time { get("t")? } else { b.get("t").unwrap_or(0.0) };
        Ok(self.slots(&q, &v, z, t))
    }

    /// Legendre map `p̂_i = ∂L/∂q̇^i` and energy at a state.
    pub fn legendre(&self, at: &Binding) -> Result<LegendreReport> {
        let s = self.state_slots(at)?;
        let w = self.require_regular(&s)?;
        let n = self.n;
        let c = &self.compiled;
        let momenta = c.dv.iter().map(|e| e.eval(&s)).collect::<std::result::Result<Vec<_>, _>>()?;
        let energy = (0..n).map(|i| s[n + i] * momenta[i]).sum::<f64>() - c.l.eval(&s)?;
        // λ_L = S*(dL): S* sends dq̇^i to dq^i and kills the rest
        let coords = self.coordinates();
        let b = self.params.merged(at);
        let dl = coords.iter().map(|x| self.lagrangian.differentiate(x).evaluate(&b)).collect::<std::result::Result<Vec<_>, _>>()?;
        let mut lambda_l = vec![0.0; coords.len()];
        lambda_l[..n].copy_from_slice(&dl[n..2 * n]);
        // 𝔽L* λ_Q = p̂_i dq^i
        let pullback_residual = (0..n).map(|i| (lambda_l[i] - momenta[i]).abs()).fold(0.0, f64::max);
        Ok(LegendreReport { momenta, energy, lambda_l, pullback_residual, hessian_det: w.determinant() })
    }

    /// `H ∘ 𝔽L − E_L` at a state, for a Hamiltonian in `q, p[, z | t]`.
    pub fn legendre_consistency(&self, at: &Binding, hamiltonian: &Expression) -> Result<f64> {
        let report = self.legendre(at)?;
        let mut b = self.params.merged(at);
        for (i, p) in report.momenta.iter().enumerate() {
            b.set(format!("p{}", i + 1), *p);
        }
        Ok(hamiltonian.evaluate(&b)? - report.energy)
    }

    /// `λ_L` components in the coordinate basis, as expressions.
    fn lambda_components(&self) -> Vec<Expression> {
        let d = self.coordinates().len();
        let mut comps = vec![Expression::num(0.0); d];
        comps[..self.n].clone_from_slice(&self.dv);
        comps
    }

    /// `dλ_L` at a state, with `M_jk = ∂_j λ_k − ∂_k λ_j`.
    fn dlambda_at(&self, b: &Binding) -> Result<DMatrix<f64>> {
        let coords = self.coordinates();
        let comps = self.lambda_components();
        let d = coords.len();
        let mut jac = DMatrix::zeros(d, d);
        for (k, c) in comps.iter().enumerate() {
            for (j, x) in coords.iter().enumerate() {
                jac[(j, k)] = c.differentiate(x).evaluate(b)?;
            }
        }
        Ok(&jac - jac.transpose())
    }

    /// `𝓡 = ∂_s − W^{ij} ∂²L/∂q̇^j∂s ∂/∂q̇^i` for the extra coordinate `s`.
    pub fn reeb(&self, at: &Binding) -> Result<DVector<f64>> {
        let var = match self.extension {
            Extension::Action => "z",
            Extension::Time => "t",
            Extension::None => return Err(GeomError::UnsupportedCombination("no Reeb field without z or t".into())),
        };
        let s = self.state_slots(at)?;
        let w = self.require_regular(&s)?;
        let b = self.params.merged(at);
        let n = self.n;
        let mixed = DVector::from_vec(self.dv.iter().map(|d| d.differentiate(var).evaluate(&b)).collect::<std::result::Result<Vec<_>, _>>()?);
        let corr = w.lu().solve(&mixed).ok_or(GeomError::SingularLagrangian { det: 0.0 })?;
        let mut r = DVector::zeros(2 * n + 1);
        r[2 * n] = 1.0;
        for i in 0..n {
            r[n + i] = -corr[i];
        }
        Ok(r)
    }

    /// Flat matrix of the structure on `TQ × ℝ`: `(Ω_L = −dλ_L, dt)` for
    /// time-dependent and `η_L = dz − ∂L/∂q̇^i dq^i` for action-dependent
    /// Lagrangians; `Ω_L` alone otherwise.
    pub fn flat_matrix(&self, at: &Binding) -> Result<DMatrix<f64>> {
        let b = self.params.merged(at);
        let dl = self.dlambda_at(&b)?;
        match self.extension {
            Extension::None => Ok(-dl.transpose()),
            Extension::Time => {
                let mut f = -dl.transpose();
                let t = 2 * self.n;
                f[(t, t)] += 1.0;
                Ok(f)
            }
            Extension::Action => {
                let eta = self.eta(&b)?;
                // dη_L = −dλ_L
                Ok(-dl.transpose() + &eta * eta.transpose())
            }
        }
    }

    fn eta(&self, b: &Binding) -> Result<DVector<f64>> {
        let mut eta = DVector::zeros(2 * self.n + 1);
        eta[2 * self.n] = 1.0;
        for i in 0..self.n {
            eta[i] = -self.dv[i].evaluate(b)?;
        }
        Ok(eta)
    }

    /// `|♭(𝓡) − α|` with `α = dt` (time) or `η_L` (action).
    pub fn reeb_residual(&self, at: &Binding) -> Result<f64> {
        let r = self.reeb(at)?;
        let b = self.params.merged(at);
        let target = match self.extension {
            Extension::Action => self.eta(&b)?,
            _ => {
                let mut dt = DVector::zeros(2 * self.n + 1);
                dt[2 * self.n] = 1.0;
                dt
            }
        };
        Ok((self.flat_matrix(at)? * r - target).amax())
    }

    /// Determinant of the flat matrix; nonzero iff `η_L ∧ (dη_L)^n ≠ 0`
    /// (action), `dt ∧ Ω_L^n ≠ 0` (time) or `Ω_L^n ≠ 0`.
    pub fn volume_condition(&self, at: &Binding) -> Result<f64> {
        Ok(self.flat_matrix(at)?.determinant())
    }

    /// Solves `ż = L(q(t), q̇(t), z, t)` along the path by RK4, with `q`
    /// interpolated linearly between nodes.
    pub fn action_series(&self, path: &PathGrid) -> Result<Vec<f64>> {
        self.check_path(path)?;
        let h = path.step();
        let mut z = Vec::with_capacity(path.len());
        z.push(path.initial_action);
        let mut q = vec![0.0; self.n];
        for k in 0..path.len() - 1 {
            let (t0, q0, q1) = (path.times[k], &path.nodes[k], &path.nodes[k + 1]);
            let v: Vec<f64> = q0.iter().zip(q1).map(|(a, b)| (b - a) / h).collect();
            let mut rhs = |tau: f64, zv: f64| -> Result<f64> {
                for i in 0..self.n {
                    q[i] = q0[i] + tau * v[i];
                }
                Ok(self.compiled.l.eval(&self.slots(&q, &v, zv, t0 + tau))?)
            };
            let zk = z[k];
            let k1 = rhs(0.0, zk)?;
            let k2 = rhs(h / 2.0, zk + h / 2.0 * k1)?;
            let k3 = rhs(h / 2.0, zk + h / 2.0 * k2)?;
            let k4 = rhs(h, zk + h * k3)?;
            z.push(zk + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
        }
        Ok(z)
    }

    /// Herglotz action `𝒜 = z(b)`.
    pub fn herglotz_action(&self, path: &PathGrid) -> Result<f64> {
        Ok(*self.action_series(path)?.last().expect("nonempty path"))
    }

    /// Forward-difference gradient `∂𝒜/∂q_k^i` at the interior nodes.
    pub fn action_gradient(&self, path: &PathGrid) -> Result<Vec<Vec<f64>>> {
        let base = self.herglotz_action(path)?;
        (1..path.len() - 1)
            .map(|k| {
                (0..self.n)
                    .map(|i| Ok((self.herglotz_action(&path.perturbed(k, i, ACTION_FD_STEP)?)? - base) / ACTION_FD_STEP))
                    .collect()
            })
            .collect()
    }

    /// Discrete Euler–Lagrange operator `d/dt(∂L/∂q̇) − ∂L/∂q` at interior nodes.
    pub fn euler_lagrange_residual(&self, path: &PathGrid) -> Result<ResidualReport> {
        self.residual(path, false)
    }

    /// Discrete Herglotz operator `d/dt(∂L/∂q̇) − ∂L/∂q − ∂L/∂q̇ ∂L/∂z`.
    pub fn herglotz_residual(&self, path: &PathGrid) -> Result<ResidualReport> {
        self.residual(path, true)
    }

    fn check_path(&self, path: &PathGrid) -> Result<()> {
        if path.dim() != self.n {
            return Err(GeomError::DimensionMismatch { expected: self.n, found: path.dim() });
        }
        Ok(())
    }

    // Momenta at half nodes from the chord velocity; ∂L/∂q, ∂L/∂z at nodes
    // from the central velocity. z is evaluated from the action series.
    fn residual(&self, path: &PathGrid, herglotz: bool) -> Result<ResidualReport> {
        let z = self.action_series(path)?;
        let n = self.n;
        let h = path.step();
        let c = &self.compiled;
        let half = |k: usize| -> Result<Vec<f64>> {
            let (a, b) = (&path.nodes[k], &path.nodes[k + 1]);
            let q: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x + y) / 2.0).collect();
            let v: Vec<f64> = a.iter().zip(b).map(|(x, y)| (y - x) / h).collect();
            let s = self.slots(&q, &v, (z[k] + z[k + 1]) / 2.0, (path.times[k] + path.times[k + 1]) / 2.0);
            self.require_regular(&s)?;
            Ok(c.dv.iter().map(|e| e.eval(&s)).collect::<std::result::Result<Vec<_>, _>>()?)
        };
        let mut prev = half(0)?;
        let mut rows = Vec::with_capacity(path.len() - 2);
        let mut max: f64 = 0.0;
        for k in 1..path.len() - 1 {
            let next = half(k)?;
            let q = &path.nodes[k];
            let v: Vec<f64> = path.nodes[k - 1].iter().zip(&path.nodes[k + 1]).map(|(a, b)| (b - a) / (2.0 * h)).collect();
            let s = self.slots(q, &v, z[k], path.times[k]);
            self.require_regular(&s)?;
            let lz = if herglotz { c.dz.eval(&s)? } else { 0.0 };
            let mut row = Vec::with_capacity(n);
            for i in 0..n {
                let mut r = (next[i] - prev[i]) / h - c.dq[i].eval(&s)?;
                if herglotz {
                    r -= c.dv[i].eval(&s)? * lz;
                }
                max = max.max(r.abs());
                row.push(r);
            }
            rows.push(row);
            prev = next;
        }
        Ok(ResidualReport { times: path.times[1..path.len() - 1].to_vec(), residual: rows, max_residual: max, z })
    }
}
