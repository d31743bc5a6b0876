//! Subcommand implementations.

use std::path::Path;

use geomech_core::dynamics::{EnergyRates, Trajectory};
use geomech_core::lagrangian::{ResidualReport, ACTION_FD_STEP};
use geomech_core::verify::{self, CheckResult};
use geomech_core::{ClassificationReport, GeomError, LagrangianSystem, PathGrid, Stepper, Subspace};
use rayon::prelude::*;
use serde::Serialize;

use crate::output::{csv_bytes, emit_bytes, emit_json, io_error, parse_vector, CheckLine, RunReport};
use crate::spec::{System, SystemSpec};
use crate::{ClassifyArgs, CliError, Format, HerglotzArgs, ReduceArgs, SimulateArgs, VerifyArgs};

pub fn configure_threads(threads: Option<usize>) -> Result<(), CliError> {
    let Some(n) = threads else { return Ok(()) };
    if n == 0 {
        return Err(CliError::usage("--threads", "must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Io(e.to_string()))
}

fn load(path: &Path) -> Result<System, CliError> {
    Ok(SystemSpec::load(path)?.validate()?)
}

fn point(system: &System, text: &str) -> Result<Vec<f64>, CliError> {
    let x = parse_vector("--point", text)?;
    if x.len() != system.chart.dim() {
        return Err(CliError::usage(
            "--point",
            format!("expected {} coordinates ({}), got {}", system.chart.dim(), system.chart.names().join(","), x.len()),
        ));
    }
    Ok(x)
}

#[derive(Serialize)]
struct SimulationSummary {
    columns: Vec<String>,
    samples: usize,
    initial_state: Vec<f64>,
    final_time: f64,
    final_state: Vec<f64>,
    initial_energy: f64,
    final_energy: f64,
    energy_law: String,
    max_law_residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_entropy_residual: Option<f64>,
}

#[derive(Serialize)]
struct SimulationResults<'a> {
    columns: Vec<String>,
    trajectory: &'a Trajectory,
    energy_law: String,
    max_law_residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_entropy_residual: Option<f64>,
}

fn law_checks(rates: &EnergyRates) -> Vec<CheckLine> {
    let mut checks = vec![CheckLine::at_most("energy_law", rates.max_residual, 1e-7)];
    if let Some(e) = rates.max_entropy_residual {
        checks.push(CheckLine::at_most("entropy_law", e, 1e-7));
    }
    checks
}

pub fn simulate(args: &SimulateArgs, echo: &[String]) -> Result<(), CliError> {
    let system = load(&args.spec)?;
    let sys = system.phase_system()?;
    let x0 = match (&args.x0, &system.initial) {
        (Some(text), _) => {
            let x = parse_vector("--x0", text)?;
            if x.len() != sys.dim() {
                return Err(CliError::usage("--x0", format!("expected {} coordinates, got {}", sys.dim(), x.len())));
            }
            x
        }
        (None, Some(x)) => x.clone(),
        // unit displacement in q1
        (None, None) => (0..sys.dim()).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect(),
    };
    let stepper = if args.adaptive {
        Stepper::Rk45 { initial_step: args.step, atol: args.atol, rtol: args.rtol }
    } else {
        Stepper::Rk4 { step: args.step }
    };
    let traj = sys.integrate(args.field, &x0, args.t0, args.t1, stepper)?;
    let rates = sys.energy_rates(&traj)?;
    let checks = law_checks(&rates);
    match args.format {
        Format::Json => {
            let results = SimulationResults {
                columns: traj.columns(),
                trajectory: &traj,
                energy_law: rates.law.clone(),
                max_law_residual: rates.max_residual,
                max_entropy_residual: rates.max_entropy_residual,
            };
            emit_json(&RunReport::new(echo, results, checks), args.out.as_deref())
        }
        Format::Csv => {
            let bytes = csv_bytes(&traj.columns(), traj.rows())?;
            emit_bytes(&bytes, args.out.as_deref())?;
            if args.out.is_none() {
                return Ok(());
            }
            let summary = SimulationSummary {
                columns: traj.columns(),
                samples: traj.len(),
                initial_state: x0,
                final_time: *traj.times.last().expect("nonempty trajectory"),
                final_state: traj.final_state().to_vec(),
                initial_energy: traj.energy[0],
                final_energy: *traj.energy.last().expect("nonempty trajectory"),
                energy_law: rates.law.clone(),
                max_law_residual: rates.max_residual,
                max_entropy_residual: rates.max_entropy_residual,
            };
            emit_json(&RunReport::new(echo, summary, checks), None)
        }
    }
}

#[derive(Serialize)]
struct Classification {
    point: Vec<f64>,
    coordinates: Vec<String>,
    source: &'static str,
    report: ClassificationReport,
}

pub fn classify(args: &ClassifyArgs, echo: &[String]) -> Result<(), CliError> {
    let system = load(&args.spec)?;
    let x = point(&system, &args.point)?;
    let (delta, source) = match &args.subspace {
        Some(text) => {
            let d = system.chart.dim();
            let mut vectors = Vec::new();
            for part in text.split(';').filter(|s| !s.trim().is_empty()) {
                let v = parse_vector("--subspace", part)?;
                if v.len() != d {
                    return Err(CliError::usage("--subspace", format!("vectors need {d} components, got {}", v.len())));
                }
                vectors.push(nalgebra::DVector::from_vec(v));
            }
            (Subspace::from_vectors(d, &vectors)?, "subspace")
        }
        None if !system.constraints.is_empty() => (system.manifold()?.tangent_space_at(&x)?, "constraint tangent space"),
        None => return Err(CliError::usage("--subspace", "required when the spec has no constraints")),
    };
    let g = match system.constraints.is_empty() {
        true => system.geometry_at(&x)?,
        false => system.manifold()?.geometry_at(&x)?,
    };
    let report = g.classify(&delta)?;
    let checks = vec![CheckLine::at_most("lagrangian_predicates_agree", f64::from(u8::from(report.lagrangian != report.lagrangian_by_forms)), 0.0)];
    let results = Classification { point: x, coordinates: system.chart.names(), source, report };
    emit_json(&RunReport::new(echo, results, checks), args.out.as_deref())
}

pub fn reduce(args: &ReduceArgs, echo: &[String]) -> Result<(), CliError> {
    let system = load(&args.spec)?;
    let x = point(&system, &args.point)?;
    let report = system.manifold()?.reduce_at(&x)?;
    let checks = report.checks.iter().map(|c| CheckLine { name: c.name.clone(), passed: c.passed, residual: c.residual, tolerance: c.tolerance }).collect();
    emit_json(&RunReport::new(echo, report, checks), args.out.as_deref())
}

fn read_path(path: &Path, n: usize, initial_action: f64) -> Result<PathGrid, CliError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| io_error(path, e))?;
    let header: Vec<String> = reader.headers().map_err(|e| io_error(path, e))?.iter().map(|s| s.trim().to_string()).collect();
    let mut expected = vec!["t".to_string()];
    expected.extend((1..=n).map(|i| format!("q{i}")));
    if header != expected {
        return Err(GeomError::InvalidInput(format!("path columns must be {}, found {}", expected.join(","), header.join(","))).into());
    }
    let mut times = Vec::new();
    let mut nodes = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| io_error(path, e))?;
        let values = record
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| GeomError::InvalidInput(format!("path row {}: {e}", line + 2)))?;
        times.push(values[0]);
        nodes.push(values[1..].to_vec());
    }
    Ok(PathGrid::new(times, nodes, initial_action)?)
}

/// Forward-difference action gradient, one perturbed path per task.
pub fn action_gradient(sys: &LagrangianSystem, path: &PathGrid) -> Result<Vec<Vec<f64>>, GeomError> {
    let base = sys.herglotz_action(path)?;
    let n = path.dim();
    let flat: Vec<f64> = (n..(path.len() - 1) * n)
        .into_par_iter()
        .map(|j| Ok((sys.herglotz_action(&path.perturbed(j / n, j % n, ACTION_FD_STEP)?)? - base) / ACTION_FD_STEP))
        .collect::<Result<_, GeomError>>()?;
    Ok(flat.chunks(n).map(<[f64]>::to_vec).collect())
}

#[derive(Serialize)]
struct HerglotzResults {
    nodes: usize,
    step: f64,
    action: f64,
    herglotz: ResidualReport,
    euler_lagrange_max_residual: f64,
    action_gradient: Vec<Vec<f64>>,
    max_action_gradient: f64,
}

pub fn herglotz(args: &HerglotzArgs, echo: &[String]) -> Result<(), CliError> {
    let system = load(&args.spec)?;
    let sys = system.lagrangian_system()?;
    let path = read_path(&args.path, system.n, args.initial_action)?;
    let herglotz = sys.herglotz_residual(&path)?;
    let el = sys.euler_lagrange_residual(&path)?;
    let gradient = action_gradient(&sys, &path)?;
    let max_gradient = gradient.iter().flatten().fold(0.0_f64, |m, g| m.max(g.abs()));
    let checks = vec![CheckLine::at_most("herglotz_residual", herglotz.max_residual, args.tol)];
    let results = HerglotzResults {
        nodes: path.len(),
        step: path.step(),
        action: sys.herglotz_action(&path)?,
        herglotz,
        euler_lagrange_max_residual: el.max_residual,
        action_gradient: gradient,
        max_action_gradient: max_gradient,
    };
    emit_json(&RunReport::new(echo, results, checks), args.out.as_deref())
}

#[derive(Serialize)]
struct VerifyResults {
    suite: String,
    seed: u64,
    passed: usize,
    failed: usize,
    checks: Vec<CheckResult>,
}

/// `GEOMECH_SEED` when set, otherwise the flag value.
fn effective_seed(flag: u64) -> Result<u64, CliError> {
    match std::env::var("GEOMECH_SEED") {
        Ok(v) => v.trim().parse().map_err(|_| CliError::usage("GEOMECH_SEED", format!("`{v}` is not an unsigned integer"))),
        Err(_) => Ok(flag),
    }
}

pub fn verify(args: &VerifyArgs, echo: &[String]) -> Result<(), CliError> {
    let seed = effective_seed(args.seed)?;
    let checks = verify::checks(&args.suite).map_err(|e| CliError::usage("--suite", e.to_string()))?;
    let mut results: Vec<CheckResult> = checks.par_iter().map(|c| c.run(seed)).collect();
    results.sort_by(|a, b| a.check_id.cmp(&b.check_id));
    let failed: Vec<String> = results.iter().filter(|r| !r.passed()).map(|r| r.check_id.clone()).collect();
    let lines = results.iter().map(|r| CheckLine { name: r.check_id.clone(), passed: r.passed(), residual: r.residual, tolerance: r.tolerance }).collect();
    let summary = VerifyResults { suite: args.suite.clone(), seed, passed: results.len() - failed.len(), failed: failed.len(), checks: results };
    emit_json(&RunReport::new(echo, summary, lines), args.out.as_deref())?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::ChecksFailed(failed))
    }
}
