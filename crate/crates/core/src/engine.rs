//! Lockstep execution of the penalty-based push-sum iteration.
//!
//! Each round, every agent `i` updates
//!
//! ```text
//! w_i(t+1) = sum_{j in N_in(i,t)} x_j(t) / d_j(t)
//! y_i(t+1) = sum_{j in N_in(i,t)} y_j(t) / d_j(t)
//! z_i(t+1) = w_i(t+1) / y_i(t+1)
//! x_i(t+1) = w_i(t+1) - a_t * [f_i(z_i(t+1)) + r_t * psi_i(z_i(t+1))]
//! ```
//!
//! All mixing reads come from the pre-round snapshot, so in-round ordering
//! cannot leak. Column-stochastic mixing conserves `sum_i y_i = n` and makes
//! the running average obey
//! `x_bar(t+1) = x_bar(t) - (a_t/n) sum_i [f_i + r_t psi_i](z_i(t+1))`.
//!
//! The optimization step uses `w_i(t+1)`; the `literal_update` config flag
//! switches to the `w_i(t)` variant for comparison, which breaks the average
//! dynamics identity above and exists only as a diagnostic.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::Error;
use crate::netgraph::GraphSchedule;
use crate::numeric;
use crate::penalty::PenalizedProblem;
use crate::schedules::ParamSchedule;
use crate::Result;

/// Per-agent state quadruple. `y` stays positive on any schedule with
/// self-loops, and `z = w / y` after every mixing update.
#[derive(Debug, Clone)]
pub struct AgentState {
    pub x: Vec<f64>,
    pub w: Vec<f64>,
    pub y: f64,
    pub z: Vec<f64>,
}

/// Everything a run needs. `problems[i]` belongs to the agent at node `i` of
/// the schedule's graphs.
pub struct RunConfig {
    pub problems: Vec<PenalizedProblem>,
    pub schedule: GraphSchedule,
    pub params: ParamSchedule,
    /// Initial `x_i(0)`; zero vectors when empty.
    pub x0: Vec<Vec<f64>>,
    pub max_rounds: u64,
    pub record_every: u64,
    /// When set, stop once disagreement and mean penalty both fall below it.
    pub stop_tolerance: Option<f64>,
    /// Use `w_i(t)` instead of `w_i(t+1)` in the optimization step.
    pub literal_update: bool,
}

impl RunConfig {
    pub fn new(
        problems: Vec<PenalizedProblem>,
        schedule: GraphSchedule,
        params: ParamSchedule,
    ) -> Self {
        RunConfig {
            problems,
            schedule,
            params,
            x0: Vec::new(),
            max_rounds: 1000,
            record_every: 1,
            stop_tolerance: None,
            literal_update: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.problems.is_empty() {
            return Err(Error::InvalidInstance("no agents configured".to_string()));
        }
        if self.problems.len() != self.schedule.n() {
            return Err(Error::InvalidInstance(format!(
                "{} problems for a schedule on {} nodes",
                self.problems.len(),
                self.schedule.n()
            )));
        }
        let d = self.problems[0].dim();
        if self.problems.iter().any(|p| p.dim() != d) {
            return Err(Error::InvalidInstance(
                "all agents must share the decision dimension".to_string(),
            ));
        }
        if !self.x0.is_empty() {
            if self.x0.len() != self.problems.len() {
                return Err(Error::InvalidInstance(format!(
                    "{} initial vectors for {} agents",
                    self.x0.len(),
                    self.problems.len()
                )));
            }
            if let Some(bad) = self.x0.iter().find(|v| v.len() != d) {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: bad.len(),
                });
            }
        }
        if self.record_every == 0 {
            return Err(Error::InvalidInstance(
                "record_every must be at least 1".to_string(),
            ));
        }
        Ok(())
    }
}

/// Live engine state; owned by one coordinator, stepped round by round.
pub struct EngineState {
    problems: Vec<PenalizedProblem>,
    schedule: GraphSchedule,
    params: ParamSchedule,
    agents: Vec<AgentState>,
    round: u64,
    literal_update: bool,
    /// Penalized gradients evaluated in the most recent step, in agent order.
    last_gradients: Vec<Vec<f64>>,
    /// `x_bar` snapshot taken before the most recent step.
    prev_x_bar: Vec<f64>,
}

/// Initialize: `y_i = 1`, `x_i = w_i = z_i = x0_i`.
pub fn init_run(cfg: RunConfig) -> Result<EngineState> {
    cfg.validate()?;
    let d = cfg.problems[0].dim();
    let n = cfg.problems.len();
    let x0 = if cfg.x0.is_empty() {
        vec![vec![0.0; d]; n]
    } else {
        cfg.x0.clone()
    };
    let agents = x0
        .into_iter()
        .map(|x| AgentState {
            w: x.clone(),
            z: x.clone(),
            y: 1.0,
            x,
        })
        .collect();
    Ok(EngineState {
        problems: cfg.problems,
        schedule: cfg.schedule,
        params: cfg.params,
        agents,
        round: 0,
        literal_update: cfg.literal_update,
        last_gradients: Vec::new(),
        prev_x_bar: vec![0.0; d],
    })
}

impl EngineState {
    pub fn agents(&self) -> &[AgentState] {
        &self.agents
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn dim(&self) -> usize {
        self.problems[0].dim()
    }

    pub fn n(&self) -> usize {
        self.agents.len()
    }

    pub fn params(&self) -> &ParamSchedule {
        &self.params
    }

    /// Per-agent penalized gradients from the most recent step.
    pub fn last_gradients(&self) -> &[Vec<f64>] {
        &self.last_gradients
    }

    /// `x_bar` as it stood before the most recent step.
    pub fn prev_x_bar(&self) -> &[f64] {
        &self.prev_x_bar
    }

    pub fn x_bar(&self) -> Vec<f64> {
        let xs: Vec<Vec<f64>> = self.agents.iter().map(|a| a.x.clone()).collect();
        numeric::mean_vector(&xs)
    }

    pub fn z_bar(&self) -> Vec<f64> {
        let zs: Vec<Vec<f64>> = self.agents.iter().map(|a| a.z.clone()).collect();
        numeric::mean_vector(&zs)
    }

    /// `(sum_i y_i, sum_i x_i)`: conserved quantities of the mixing stage.
    pub fn mass_invariants(&self) -> (f64, Vec<f64>) {
        let sum_y = self.agents.iter().map(|a| a.y).sum();
        let mut sum_x = vec![0.0; self.dim()];
        for a in &self.agents {
            numeric::axpy(&mut sum_x, 1.0, &a.x);
        }
        (sum_y, sum_x)
    }

    /// `max_i ||z_i - z_bar||`.
    pub fn disagreement(&self) -> f64 {
        let zb = self.z_bar();
        self.agents
            .iter()
            .map(|a| numeric::dist(&a.z, &zb))
            .fold(0.0, f64::max)
    }

    /// `(1/n) sum_i ||z_i - x_bar_prev||`: the quantity that drives the
    /// consensus analysis, observable as a diagnostic.
    pub fn consensus_residual(&self) -> f64 {
        let n = self.agents.len() as f64;
        self.agents
            .iter()
            .map(|a| numeric::dist(&a.z, &self.prev_x_bar))
            .sum::<f64>()
            / n
    }

    /// `Psi(x_bar) / n`.
    pub fn mean_penalty(&self) -> Result<f64> {
        let xb = self.x_bar();
        let mut total = 0.0;
        for p in &self.problems {
            total += p.penalty_value(&xb)?;
        }
        Ok(total / self.agents.len() as f64)
    }

    /// `F(x_bar) = sum_i F_i(x_bar)`.
    pub fn objective(&self) -> f64 {
        let xb = self.x_bar();
        self.problems.iter().map(|p| p.base().objective(&xb)).sum()
    }

    /// Advance one round. Mixing weights come from the graph live at the
    /// engine's current round; gradient work fans out to worker threads but
    /// is reduced in fixed agent order, so sequential and parallel runs agree
    /// bit for bit.
    pub fn step(&mut self) -> Result<()> {
        let t = self.round;
        let n = self.agents.len();
        let graph = self.schedule.graph_at(t).clone();
        let a_t = self.params.a(t);
        let r_t = self.params.r(t);

        self.prev_x_bar = self.x_bar();

        let inv_deg: Vec<f64> = (0..n).map(|j| 1.0 / graph.out_degree(j) as f64).collect();

        // 4a + 4b: weighted sums over the pre-round snapshot.
        let mut new_w = vec![vec![0.0; self.dim()]; n];
        let mut new_y = vec![0.0; n];
        for i in 0..n {
            for &j in graph.in_neighbors(i) {
                numeric::axpy(&mut new_w[i], inv_deg[j], &self.agents[j].x);
                new_y[i] += self.agents[j].y * inv_deg[j];
            }
        }

        // 4c: the push-sum ratio.
        let new_z: Vec<Vec<f64>> = new_w
            .iter()
            .zip(&new_y)
            .map(|(w, &y)| w.iter().map(|v| v / y).collect())
            .collect();

        // 4d: penalized gradient step from the freshly mixed state.
        let grads: Vec<Result<Vec<f64>>> = if n >= 8 {
            self.problems
                .par_iter()
                .zip(new_z.par_iter())
                .map(|(p, z)| p.penalized_gradient(z, r_t))
                .collect()
        } else {
            self.problems
                .iter()
                .zip(new_z.iter())
                .map(|(p, z)| p.penalized_gradient(z, r_t))
                .collect()
        };

        let mut gradients = Vec::with_capacity(n);
        for (i, g) in grads.into_iter().enumerate() {
            let g = g?;
            if !numeric::all_finite(&g) {
                return Err(Error::NonFiniteGradient { agent: i, round: t });
            }
            gradients.push(g);
        }

        for i in 0..n {
            let base = if self.literal_update {
                &self.agents[i].w
            } else {
                &new_w[i]
            };
            let mut x = base.clone();
            numeric::axpy(&mut x, -a_t, &gradients[i]);
            self.agents[i].x = x;
        }
        for i in 0..n {
            self.agents[i].w = std::mem::take(&mut new_w[i]);
            self.agents[i].y = new_y[i];
            self.agents[i].z = new_z[i].clone();
        }
        self.last_gradients = gradients;
        self.round = t + 1;
        Ok(())
    }
}

/// Time series recorded over a run, one entry per recorded round.
#[derive(Debug, Clone, Default)]
pub struct RunMetrics {
    pub rounds: Vec<u64>,
    pub disagreement: Vec<f64>,
    pub mean_penalty: Vec<f64>,
    pub objective: Vec<f64>,
    pub consensus_residual: Vec<f64>,
    pub x_bar: Vec<Vec<f64>>,
    pub walltime_ms: Vec<f64>,
    /// Final per-agent `z_i`.
    pub final_z: Vec<Vec<f64>>,
    pub final_y: Vec<f64>,
    pub rounds_executed: u64,
    pub stopped_early: bool,
    pub total_walltime_ms: f64,
}

impl RunMetrics {
    pub fn final_x_bar(&self) -> Option<&[f64]> {
        self.x_bar.last().map(|v| v.as_slice())
    }
}

/// Execute a configured run to completion.
///
/// Warns (does not fail) when the schedule carries no verified connectivity
/// claim. Deterministic: identical configs produce bit-identical metrics in
/// sequential and parallel mode alike.
pub fn run(cfg: RunConfig) -> Result<RunMetrics> {
    run_observed(cfg, |_| Ok(()))
}

/// [`run`] with an observer invoked at every recorded round, e.g. to stream
/// a per-agent trace.
pub fn run_observed(
    cfg: RunConfig,
    mut observe: impl FnMut(&EngineState) -> Result<()>,
) -> Result<RunMetrics> {
    match cfg.schedule.claimed_b() {
        Some(b) => {
            let horizon = (4 * b as u64).max(64).min(cfg.max_rounds.max(64));
            if !cfg.schedule.verify_b(b, horizon)? {
                return Err(Error::Graph(format!(
                    "schedule claims B = {b} but a window within horizon {horizon} \
                     has a disconnected union"
                )));
            }
        }
        None => log::warn!(
            "graph schedule carries no B-strong-connectivity claim; \
             consensus is not guaranteed"
        ),
    }

    let max_rounds = cfg.max_rounds;
    let record_every = cfg.record_every;
    let stop_tolerance = cfg.stop_tolerance;
    let mut engine = init_run(cfg)?;
    let mut metrics = RunMetrics::default();
    let start = Instant::now();

    for t in 0..max_rounds {
        engine.step()?;
        let round = t + 1;
        if round % record_every == 0 || round == max_rounds {
            let disagreement = engine.disagreement();
            let mean_penalty = engine.mean_penalty()?;
            metrics.rounds.push(round);
            metrics.disagreement.push(disagreement);
            metrics.mean_penalty.push(mean_penalty);
            metrics.objective.push(engine.objective());
            metrics.consensus_residual.push(engine.consensus_residual());
            metrics.x_bar.push(engine.x_bar());
            metrics.walltime_ms.push(start.elapsed().as_secs_f64() * 1e3);
            observe(&engine)?;
            if let Some(tol) = stop_tolerance {
                if disagreement < tol && mean_penalty < tol {
                    metrics.stopped_early = true;
                    metrics.rounds_executed = round;
                    break;
                }
            }
        }
    }
    if metrics.rounds_executed == 0 {
        metrics.rounds_executed = max_rounds;
    }
    metrics.final_z = engine.agents().iter().map(|a| a.z.clone()).collect();
    metrics.final_y = engine.agents().iter().map(|a| a.y).collect();
    metrics.total_walltime_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(metrics)
}

/// Write the metrics stream as CSV with columns
/// `round,disagreement,mean_penalty,objective,walltime_ms,x_bar_0..`.
///
/// `.` decimal separator, LF line endings, header row. Unless
/// `record_walltime` is set the walltime column is written as 0 so that
/// reruns of the same config produce byte-identical files.
pub fn write_metrics_csv(
    metrics: &RunMetrics,
    mut out: impl Write,
    record_walltime: bool,
) -> std::io::Result<()> {
    let d = metrics.x_bar.first().map_or(0, |v| v.len());
    write!(out, "round,disagreement,mean_penalty,objective,walltime_ms")?;
    for k in 0..d {
        write!(out, ",x_bar_{k}")?;
    }
    out.write_all(b"\n")?;
    for i in 0..metrics.rounds.len() {
        let wt = if record_walltime {
            metrics.walltime_ms[i]
        } else {
            0.0
        };
        write!(
            out,
            "{},{},{},{},{}",
            metrics.rounds[i],
            metrics.disagreement[i],
            metrics.mean_penalty[i],
            metrics.objective[i],
            wt
        )?;
        for v in &metrics.x_bar[i] {
            write!(out, ",{v}")?;
        }
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Per-agent trace CSV: `round,agent,y,z_0..`, intended for debugging runs.
pub struct TraceWriter<W: Write> {
    out: W,
    header_written: bool,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(out: W) -> Self {
        TraceWriter {
            out,
            header_written: false,
        }
    }

    pub fn record(&mut self, engine: &EngineState) -> std::io::Result<()> {
        if !self.header_written {
            write!(self.out, "round,agent,y")?;
            for k in 0..engine.dim() {
                write!(self.out, ",z_{k}")?;
            }
            self.out.write_all(b"\n")?;
            self.header_written = true;
        }
        for (i, a) in engine.agents().iter().enumerate() {
            write!(self.out, "{},{},{}", engine.round(), i, a.y)?;
            for v in &a.z {
                write!(self.out, ",{v}")?;
            }
            self.out.write_all(b"\n")?;
        }
        Ok(())
    }
}
