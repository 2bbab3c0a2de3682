//! JSON run configuration.
//!
//! Configs are versioned and fail closed: unknown fields are rejected so a
//! typo in an experiment file surfaces as a parse error instead of a silently
//! ignored knob.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::energy::{self, DemandParams, EnergyInstance, GeneratorParams};
use crate::engine::RunConfig;
use crate::error::Error;
use crate::netgraph::{DiGraph, GraphSchedule, Selector};
use crate::numeric;
use crate::penalty::{ConstraintFn, LocalProblem, PenalizedProblem};
use crate::schedules::ParamSchedule;
use crate::Result;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppConfig {
    pub version: u32,
    /// Base seed; selector and x0 streams derive from it unless they carry
    /// their own.
    #[serde(default)]
    pub seed: u64,
    pub problem: ProblemSpec,
    pub schedule: GraphScheduleSpec,
    pub params: ParamSpec,
    pub run: RunSpec,
    #[serde(default)]
    pub oracle: OracleSpec,
    #[serde(default)]
    pub check: CheckSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    /// The dispatch family: one agent per generator, then one per demand.
    Energy {
        generators: Vec<GeneratorParams>,
        demands: Vec<DemandParams>,
    },
    /// Unconstrained `F_i(z) = ||z - target_i||^2`.
    QuadraticConsensus { targets: Vec<Vec<f64>> },
    /// `min z^2 s.t. z >= 1` shared by all agents: each carries
    /// `F_i = z^2 / n` and the constraint `1 - z <= 0`.
    ConstrainedToy { agents: usize },
    /// Zero objectives: pure push-sum averaging of the initial vectors.
    Averaging { agents: usize, dim: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphScheduleSpec {
    pub nodes: usize,
    /// One edge list per graph; `[from, to]` pairs, self-loops implied.
    pub graphs: Vec<Vec<(usize, usize)>>,
    pub selector: Selector,
    #[serde(default)]
    pub claimed_b: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ParamSpec {
    PowerLaw {
        b: f64,
    },
    /// `a_t = a0 (t+1)^{-a_exp}`, `r_t = max(1, r0 + r_coef (t+1)^{r_exp})`.
    Poly {
        a0: f64,
        a_exp: f64,
        r0: f64,
        r_coef: f64,
        r_exp: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub max_rounds: u64,
    #[serde(default = "default_record_every")]
    pub record_every: u64,
    #[serde(default)]
    pub stop_tolerance: Option<f64>,
    #[serde(default)]
    pub x0: X0Spec,
    /// Use the pre-mixing `w_i(t)` in the optimization step (diagnostic
    /// variant; breaks the average-dynamics identity).
    #[serde(default)]
    pub literal_update: bool,
    /// Write measured wall time into metrics.csv instead of the
    /// deterministic 0 placeholder.
    #[serde(default)]
    pub record_walltime: bool,
    /// Also emit a per-agent trace CSV.
    #[serde(default)]
    pub trace_agents: bool,
}

fn default_record_every() -> u64 {
    1
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum X0Spec {
    #[default]
    Zero,
    RandomBox {
        low: f64,
        high: f64,
        #[serde(default)]
        seed: Option<u64>,
    },
    Explicit {
        vectors: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSpec {
    pub rounds: u64,
    pub grid: usize,
    pub refine: usize,
    /// Per-coordinate search box for the grid oracle; required for problem
    /// families that do not imply one.
    #[serde(rename = "box")]
    pub bounds: Option<Vec<(f64, f64)>>,
}

impl Default for OracleSpec {
    fn default() -> Self {
        OracleSpec {
            rounds: 200_000,
            grid: 33,
            refine: 7,
            bounds: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckSpec {
    /// Probe horizon for the connectivity check.
    pub b_horizon: u64,
    /// Horizon for the numeric schedule certification.
    pub cert_horizon: u64,
    /// Largest B tried when the config does not claim one.
    pub b_search_cap: usize,
}

impl Default for CheckSpec {
    fn default() -> Self {
        CheckSpec {
            b_horizon: 200,
            cert_horizon: 1_000_000,
            b_search_cap: 16,
        }
    }
}

impl AppConfig {
    pub fn from_str(text: &str) -> Result<Self> {
        let cfg: AppConfig = serde_json::from_str(text)?;
        if cfg.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                cfg.version
            )));
        }
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::from_str(&text)
    }

    /// Number of agents the problem spec implies.
    pub fn agent_count(&self) -> usize {
        match &self.problem {
            ProblemSpec::Energy {
                generators,
                demands,
            } => generators.len() + demands.len(),
            ProblemSpec::QuadraticConsensus { targets } => targets.len(),
            ProblemSpec::ConstrainedToy { agents } => *agents,
            ProblemSpec::Averaging { agents, .. } => *agents,
        }
    }

    /// Indices of the coordinates reported in relative-error output: the
    /// power coordinates for the dispatch family, every coordinate otherwise.
    pub fn error_coordinates(&self, dim: usize) -> Vec<usize> {
        match &self.problem {
            ProblemSpec::Energy {
                generators,
                demands,
            } => (0..generators.len() + demands.len()).collect(),
            _ => (0..dim).collect(),
        }
    }
}

/// Everything a run or an oracle invocation needs, built from a validated
/// config.
pub struct Built {
    pub problems: Vec<PenalizedProblem>,
    pub schedule: GraphSchedule,
    pub params: ParamSchedule,
    pub x0: Vec<Vec<f64>>,
    pub instance: Option<EnergyInstance>,
    pub dim: usize,
}

pub fn build(cfg: &AppConfig, seed_override: Option<u64>) -> Result<Built> {
    let seed = seed_override.unwrap_or(cfg.seed);
    let (problems, instance) = build_problems(&cfg.problem)?;
    let dim = problems
        .first()
        .map(|p| p.dim())
        .ok_or_else(|| Error::Config("problem spec yields no agents".to_string()))?;
    let schedule = build_schedule(&cfg.schedule, seed)?;
    if schedule.n() != problems.len() {
        return Err(Error::Config(format!(
            "schedule has {} nodes but the problem has {} agents",
            schedule.n(),
            problems.len()
        )));
    }
    let params = build_params(&cfg.params)?;
    let x0 = build_x0(&cfg.run.x0, problems.len(), dim, seed)?;
    Ok(Built {
        problems,
        schedule,
        params,
        x0,
        instance,
        dim,
    })
}

impl Built {
    pub fn into_run_config(self, run: &RunSpec) -> RunConfig {
        let mut rc = RunConfig::new(self.problems, self.schedule, self.params);
        rc.x0 = self.x0;
        rc.max_rounds = run.max_rounds;
        rc.record_every = run.record_every;
        rc.stop_tolerance = run.stop_tolerance;
        rc.literal_update = run.literal_update;
        rc
    }
}

pub fn build_problems(
    spec: &ProblemSpec,
) -> Result<(Vec<PenalizedProblem>, Option<EnergyInstance>)> {
    match spec {
        ProblemSpec::Energy {
            generators,
            demands,
        } => {
            let instance = EnergyInstance::new(generators.clone(), demands.clone())?;
            let problems = energy::build_distributed_problem(&instance);
            Ok((problems, Some(instance)))
        }
        ProblemSpec::QuadraticConsensus { targets } => {
            if targets.is_empty() {
                return Err(Error::Config("targets must be nonempty".to_string()));
            }
            let dim = targets[0].len();
            if dim == 0 || targets.iter().any(|t| t.len() != dim) {
                return Err(Error::Config(
                    "targets must share a positive dimension".to_string(),
                ));
            }
            let problems = targets
                .iter()
                .map(|t| {
                    let c1 = t.clone();
                    let c2 = t.clone();
                    PenalizedProblem::new(LocalProblem::new(
                        dim,
                        move |z: &[f64]| {
                            z.iter()
                                .zip(&c1)
                                .map(|(zi, ci)| (zi - ci) * (zi - ci))
                                .sum()
                        },
                        move |z: &[f64]| {
                            z.iter().zip(&c2).map(|(zi, ci)| 2.0 * (zi - ci)).collect()
                        },
                    ))
                })
                .collect();
            Ok((problems, None))
        }
        ProblemSpec::ConstrainedToy { agents } => {
            if *agents == 0 {
                return Err(Error::Config("toy needs at least one agent".to_string()));
            }
            let scale = 1.0 / *agents as f64;
            let problems = (0..*agents)
                .map(|_| {
                    PenalizedProblem::new(
                        LocalProblem::new(
                            1,
                            move |z: &[f64]| scale * z[0] * z[0],
                            move |z: &[f64]| vec![2.0 * scale * z[0]],
                        )
                        .with_constraint(ConstraintFn::new(
                            |z: &[f64]| 1.0 - z[0],
                            |_z: &[f64]| vec![-1.0],
                            1.0,
                            1.0,
                        )),
                    )
                })
                .collect();
            Ok((problems, None))
        }
        ProblemSpec::Averaging { agents, dim } => {
            if *agents == 0 || *dim == 0 {
                return Err(Error::Config(
                    "averaging needs positive agent count and dimension".to_string(),
                ));
            }
            let d = *dim;
            let problems = (0..*agents)
                .map(|_| {
                    PenalizedProblem::new(LocalProblem::new(
                        d,
                        |_z: &[f64]| 0.0,
                        move |_z: &[f64]| vec![0.0; d],
                    ))
                })
                .collect();
            Ok((problems, None))
        }
    }
}

pub fn build_schedule(spec: &GraphScheduleSpec, seed: u64) -> Result<GraphSchedule> {
    let graphs: Result<Vec<DiGraph>> = spec
        .graphs
        .iter()
        .map(|edges| DiGraph::new(spec.nodes, edges))
        .collect();
    Ok(GraphSchedule::new(graphs?, spec.selector.clone(), spec.claimed_b)?.with_seed(seed))
}

pub fn build_params(spec: &ParamSpec) -> Result<ParamSchedule> {
    match spec {
        ParamSpec::PowerLaw { b } => ParamSchedule::power_law(*b),
        ParamSpec::Poly {
            a0,
            a_exp,
            r0,
            r_coef,
            r_exp,
        } => ParamSchedule::poly(*a0, *a_exp, *r0, *r_coef, *r_exp),
    }
}

pub fn build_x0(spec: &X0Spec, n: usize, dim: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    match spec {
        X0Spec::Zero => Ok(vec![vec![0.0; dim]; n]),
        X0Spec::RandomBox { low, high, seed: s } => {
            if !(low < high) {
                return Err(Error::Config(format!(
                    "random_box needs low < high, got [{low}, {high}]"
                )));
            }
            let mut rng = numeric::seeded_rng(s.unwrap_or(seed));
            Ok((0..n)
                .map(|_| (0..dim).map(|_| rng.gen_range(*low..*high)).collect())
                .collect())
        }
        X0Spec::Explicit { vectors } => {
            if vectors.len() != n {
                return Err(Error::Config(format!(
                    "explicit x0 has {} vectors for {n} agents",
                    vectors.len()
                )));
            }
            if let Some(bad) = vectors.iter().find(|v| v.len() != dim) {
                return Err(Error::Config(format!(
                    "explicit x0 vector of length {} does not match dimension {dim}",
                    bad.len()
                )));
            }
            Ok(vectors.clone())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_config_json() -> String {
        r#"{
            "version": 1,
            "seed": 7,
            "problem": {"type": "constrained_toy", "agents": 4},
            "schedule": {
                "nodes": 4,
                "graphs": [[[0,1],[1,2],[1,3]], [[3,1],[3,0],[2,3]]],
                "selector": {"type": "alternate"},
                "claimed_b": 2
            },
            "params": {"type": "poly", "a0": 0.5, "a_exp": 0.6, "r0": 1.0, "r_coef": 0.1, "r_exp": 0.75},
            "run": {"max_rounds": 1000, "record_every": 100}
        }"#
        .to_string()
    }

    #[test]
    fn parses_and_builds_toy_config() {
        let cfg = AppConfig::from_str(&toy_config_json()).unwrap();
        assert_eq!(cfg.agent_count(), 4);
        let built = build(&cfg, None).unwrap();
        assert_eq!(built.problems.len(), 4);
        assert_eq!(built.dim, 1);
        assert_eq!(built.schedule.n(), 4);
        assert!(built.instance.is_none());
    }

    #[test]
    fn rejects_unknown_fields() {
        let bad = toy_config_json().replace("\"seed\": 7", "\"seed\": 7, \"typo_field\": 1");
        let err = AppConfig::from_str(&bad).unwrap_err();
        assert!(err.to_string().contains("typo_field"));
    }

    #[test]
    fn rejects_wrong_version() {
        let bad = toy_config_json().replace("\"version\": 1", "\"version\": 99");
        assert!(AppConfig::from_str(&bad).is_err());
    }

    #[test]
    fn rejects_node_mismatch() {
        let bad = toy_config_json().replace("\"agents\": 4", "\"agents\": 3");
        let cfg = AppConfig::from_str(&bad).unwrap();
        assert!(build(&cfg, None).is_err());
    }

    #[test]
    fn config_round_trips_through_serde() {
        let cfg = AppConfig::from_str(&toy_config_json()).unwrap();
        let json = serde_json::to_string(&cfg).unwrap();
        let again = AppConfig::from_str(&json).unwrap();
        assert_eq!(again.agent_count(), 4);
        assert_eq!(serde_json::to_string(&again).unwrap(), json);
    }

    #[test]
    fn x0_random_box_is_seeded() {
        let spec = X0Spec::RandomBox {
            low: -10.0,
            high: 10.0,
            seed: Some(3),
        };
        let a = build_x0(&spec, 4, 2, 0).unwrap();
        let b = build_x0(&spec, 4, 2, 99).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().flatten().all(|v| (-10.0..10.0).contains(v)));
    }

    #[test]
    fn x0_explicit_validates_shape() {
        let spec = X0Spec::Explicit {
            vectors: vec![vec![1.0], vec![2.0]],
        };
        assert!(build_x0(&spec, 2, 1, 0).is_ok());
        assert!(build_x0(&spec, 3, 1, 0).is_err());
        assert!(build_x0(&spec, 2, 2, 0).is_err());
    }
}
