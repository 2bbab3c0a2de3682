//! Command implementations behind the CLI: run a simulation, run the
//! reference oracles, validate a config. All artifacts land in the caller's
//! output directory; nothing is written until the config has validated.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{build, AppConfig, ProblemSpec};
use crate::energy::{self, EnergyInstance};
use crate::engine::{self, TraceWriter};
use crate::error::Error;
use crate::numeric;
use crate::oracle;
use crate::schedules::{certify_schedule_with, CertReport, CertifyOptions};
use crate::Result;

/// Reference solution as stored in `oracle.json`; `point` is the grid-oracle
/// solution that downstream error reports compare against.
#[derive(Debug, Serialize, Deserialize)]
pub struct OracleOutput {
    pub version: u32,
    pub point: Vec<f64>,
    pub objective: f64,
    pub centralized_point: Vec<f64>,
    pub centralized_objective: f64,
    pub centralized_rounds: u64,
    pub agreement_inf_norm: f64,
    /// Constraint values of every agent at `point` (all should be <= ~0).
    pub constraint_slacks: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy: Option<EnergyOracleOutput>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EnergyOracleOutput {
    pub kkt: serde_json::Value,
    pub multipliers: serde_json::Value,
    pub max_kkt_residual: f64,
    pub verify_prop2: bool,
    pub balance_residual: f64,
}

/// `pushsum run`: execute the configured simulation and write `metrics.csv`,
/// `final.json`, and (when an oracle file is supplied) `relative_error.csv`.
pub fn cmd_run(
    config_path: &Path,
    out_dir: &Path,
    oracle_path: Option<&Path>,
    seed_override: Option<u64>,
) -> Result<()> {
    let cfg = AppConfig::from_path(config_path)?;
    let built = build(&cfg, seed_override)?;
    let dim = built.dim;
    let error_coords = cfg.error_coordinates(dim);
    let run_spec = cfg.run.clone();
    let run_config = built.into_run_config(&run_spec);

    // Load the oracle point before running so a bad path fails fast.
    let oracle_point: Option<Vec<f64>> = match oracle_path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| {
                Error::Config(format!("cannot read oracle file {}: {e}", p.display()))
            })?;
            let parsed: OracleOutput = serde_json::from_str(&text)?;
            if parsed.point.len() != dim {
                return Err(Error::Config(format!(
                    "oracle point has dimension {}, run has {dim}",
                    parsed.point.len()
                )));
            }
            Some(parsed.point)
        }
        None => None,
    };

    fs::create_dir_all(out_dir)?;

    let metrics = if run_spec.trace_agents {
        let trace_file = fs::File::create(out_dir.join("trace.csv"))?;
        let mut tracer = TraceWriter::new(std::io::BufWriter::new(trace_file));
        engine::run_observed(run_config, |state| {
            tracer.record(state).map_err(Error::from)
        })?
    } else {
        engine::run(run_config)?
    };

    let metrics_file = fs::File::create(out_dir.join("metrics.csv"))?;
    engine::write_metrics_csv(
        &metrics,
        std::io::BufWriter::new(metrics_file),
        run_spec.record_walltime,
    )?;

    let z_bar = metrics
        .final_z
        .iter()
        .fold(vec![0.0; dim], |mut acc, z| {
            numeric::axpy(&mut acc, 1.0 / metrics.final_z.len() as f64, z);
            acc
        });
    let final_json = json!({
        "version": 1,
        "rounds_executed": metrics.rounds_executed,
        "stopped_early": metrics.stopped_early,
        "z_bar": z_bar,
        "x_bar": metrics.final_x_bar(),
        "agents_z": metrics.final_z,
        "agents_y": metrics.final_y,
        "disagreement": metrics.disagreement.last(),
        "mean_penalty": metrics.mean_penalty.last(),
        "objective": metrics.objective.last(),
        "total_walltime_ms": metrics.total_walltime_ms,
    });
    fs::write(
        out_dir.join("final.json"),
        serde_json::to_string_pretty(&final_json)?,
    )?;

    if let Some(reference) = oracle_point {
        let file = fs::File::create(out_dir.join("relative_error.csv"))?;
        let mut out = std::io::BufWriter::new(file);
        write!(out, "round")?;
        for &k in &error_coords {
            write!(out, ",error_{k}")?;
        }
        out.write_all(b"\n")?;
        for (i, round) in metrics.rounds.iter().enumerate() {
            write!(out, "{round}")?;
            for &k in &error_coords {
                let denom = reference[k].abs().max(f64::MIN_POSITIVE);
                let err = (metrics.x_bar[i][k] - reference[k]).abs() / denom;
                write!(out, ",{err}")?;
            }
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

/// `pushsum oracle`: solve the configured instance with both reference
/// solvers and write `oracle.json`, including the optimality report for the
/// dispatch family.
pub fn cmd_oracle(config_path: &Path, out_dir: &Path, seed_override: Option<u64>) -> Result<()> {
    let cfg = AppConfig::from_path(config_path)?;
    let built = build(&cfg, seed_override)?;
    let spec = cfg.oracle.clone();

    let centralized =
        oracle::centralized_penalized_solve(&built.problems, &built.params, spec.rounds)?;

    let (point, energy_out) = match &built.instance {
        Some(instance) => {
            let sol = oracle::brute_force_energy(instance, spec.grid, spec.refine)?;
            let mut z = sol.p.clone();
            z.extend_from_slice(&sol.v);
            let report = energy_report(instance, &sol.p, &sol.v)?;
            (z, Some(report))
        }
        None => {
            let bounds = spec.bounds.clone().ok_or_else(|| {
                Error::Config(
                    "this problem family needs an explicit oracle.box in the config".to_string(),
                )
            })?;
            let z = oracle::brute_force_solve(&built.problems, &bounds, spec.grid, spec.refine)?;
            (z, None)
        }
    };

    let objective: f64 = built.problems.iter().map(|p| p.base().objective(&point)).sum();
    let centralized_objective: f64 = built
        .problems
        .iter()
        .map(|p| p.base().objective(&centralized))
        .sum();
    let agreement = point
        .iter()
        .zip(&centralized)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    let slacks: Vec<Vec<f64>> = built
        .problems
        .iter()
        .map(|p| p.base().constraints().iter().map(|c| c.value(&point)).collect())
        .collect();

    let output = OracleOutput {
        version: 1,
        point,
        objective,
        centralized_point: centralized,
        centralized_objective,
        centralized_rounds: spec.rounds,
        agreement_inf_norm: agreement,
        constraint_slacks: slacks,
        energy: energy_out,
    };

    fs::create_dir_all(out_dir)?;
    fs::write(
        out_dir.join("oracle.json"),
        serde_json::to_string_pretty(&output)?,
    )?;
    Ok(())
}

fn energy_report(instance: &EnergyInstance, p: &[f64], v: &[f64]) -> Result<EnergyOracleOutput> {
    let multipliers = energy::estimate_multipliers(instance, p, v);
    let kkt = energy::kkt_residuals(instance, p, v, &multipliers)?;
    Ok(EnergyOracleOutput {
        max_kkt_residual: kkt.max_residual(),
        kkt: serde_json::to_value(&kkt)?,
        multipliers: serde_json::to_value(&multipliers)?,
        verify_prop2: energy::verify_prop2(instance, p, v, 1e-4),
        balance_residual: instance.balance(p, v).abs(),
    })
}

/// Validation report emitted by `pushsum check`.
#[derive(Debug, Serialize)]
pub struct CheckReport {
    pub version: u32,
    pub graph: GraphCheck,
    pub schedule: CertReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy: Option<EnergyCheck>,
    pub pass: bool,
}

#[derive(Debug, Serialize)]
pub struct GraphCheck {
    pub claimed_b: Option<usize>,
    pub verified_b: Option<usize>,
    pub horizon: u64,
    pub pass: bool,
}

#[derive(Debug, Serialize)]
pub struct EnergyCheck {
    pub assumption4: bool,
    pub slater_point: Option<energy::SlaterPoint>,
    pub pass: bool,
}

/// `pushsum check`: run every validator the config touches.
pub fn cmd_check(config_path: &Path, seed_override: Option<u64>) -> Result<CheckReport> {
    let cfg = AppConfig::from_path(config_path)?;
    let seed = seed_override.unwrap_or(cfg.seed);
    let check = cfg.check.clone();

    let schedule = crate::config::build_schedule(&cfg.schedule, seed)?;
    let graph = match schedule.claimed_b() {
        Some(b) => {
            let ok = schedule.verify_b(b, check.b_horizon)?;
            GraphCheck {
                claimed_b: Some(b),
                verified_b: ok.then_some(b),
                horizon: check.b_horizon,
                pass: ok,
            }
        }
        None => {
            let found = schedule.find_b(check.b_search_cap, check.b_horizon)?;
            GraphCheck {
                claimed_b: None,
                verified_b: found,
                horizon: check.b_horizon,
                pass: found.is_some(),
            }
        }
    };

    let params = crate::config::build_params(&cfg.params)?;
    let cert = certify_schedule_with(&params, check.cert_horizon, &CertifyOptions::default());

    let energy_check = match &cfg.problem {
        ProblemSpec::Energy {
            generators,
            demands,
        } => {
            let assumption4 = energy::check_assumption4(generators, demands);
            let slater = energy::find_slater_point(generators, demands).ok();
            let pass = assumption4 && slater.is_some();
            Some(EnergyCheck {
                assumption4,
                slater_point: slater,
                pass,
            })
        }
        _ => None,
    };

    let pass = graph.pass && cert.pass && energy_check.as_ref().map_or(true, |e| e.pass);
    Ok(CheckReport {
        version: 1,
        graph,
        schedule: cert,
        energy: energy_check,
        pass,
    })
}
