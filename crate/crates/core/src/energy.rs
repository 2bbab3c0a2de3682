//! Economic dispatch / demand response instance family.
//!
//! Generators carry a strongly convex quadratic fuel cost with linear
//! extensions outside the capacity box; demands carry a concave saturating
//! utility. The joint decision vector is `z = (p, v)` where `v_i` is the
//! transmission-loss auxiliary of generator `i`; the non-convex loss equality
//! `v_i = l_i p_i^2` is relaxed to the convex inequality `v_i >= l_i p_i^2`,
//! and [`verify_prop2`] checks that a solution of the relaxation is feasible
//! for the original problem (loss tight, balance exact).
//!
//! Constraints are distributed by ownership: each generator gets its own box,
//! both directions of the power balance, and its loss inequality; each demand
//! gets only its box. Every constraint uses clamped/tangent extensions so its
//! gradient is globally bounded and Lipschitz.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::penalty::{ConstraintFn, LocalProblem, PenalizedProblem};
use crate::Result;

/// Quadratic cost coefficients and capacity box of one generator.
/// `l` is the transmission-loss coefficient, `0 <= l < a`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub l: f64,
    pub p_min: f64,
    pub p_max: f64,
}

/// Utility coefficients and demand box of one responsive demand.
/// The utility is `omega p - alpha p^2` up to the saturation point
/// `omega / (2 K alpha)` and grows linearly with slope `omega (1 - 1/K)`
/// beyond it; `K > 1` keeps that slope positive.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandParams {
    pub omega: f64,
    pub alpha: f64,
    pub k: f64,
    pub p_min: f64,
    pub p_max: f64,
}

impl GeneratorParams {
    fn validate(&self, idx: usize) -> Result<()> {
        let fail = |what: &str| {
            Err(Error::InvalidInstance(format!(
                "generator {idx}: {what} (a={}, b={}, c={}, l={}, p_min={}, p_max={})",
                self.a, self.b, self.c, self.l, self.p_min, self.p_max
            )))
        };
        if !(self.a > 0.0) || !(self.b > 0.0) || !(self.c > 0.0) {
            return fail("fitting coefficients a, b, c must be positive");
        }
        if !(self.l >= 0.0 && self.l < self.a) {
            return fail("loss coefficient must satisfy 0 <= l < a");
        }
        if !(self.p_min < self.p_max) {
            return fail("capacity bounds must satisfy p_min < p_max");
        }
        Ok(())
    }
}

impl DemandParams {
    fn validate(&self, idx: usize) -> Result<()> {
        let fail = |what: &str| {
            Err(Error::InvalidInstance(format!(
                "demand {idx}: {what} (omega={}, alpha={}, k={}, p_min={}, p_max={})",
                self.omega, self.alpha, self.k, self.p_min, self.p_max
            )))
        };
        if !(self.omega > 0.0) || !(self.alpha > 0.0) {
            return fail("utility coefficients omega, alpha must be positive");
        }
        if !(self.k > 1.0) {
            return fail("saturation constant K must exceed 1 so the saturated slope stays positive");
        }
        if !(self.p_min < self.p_max) {
            return fail("demand bounds must satisfy p_min < p_max");
        }
        Ok(())
    }

    /// Demand level where the utility switches to its saturated linear piece.
    pub fn saturation_point(&self) -> f64 {
        self.omega / (2.0 * self.k * self.alpha)
    }
}

/// Generator cost and its derivative.
///
/// Inside the capacity box the cost is `a p^2 + b p + c`; outside it
/// continues linearly with the boundary slope, additive constants chosen so
/// the value is continuous at the seams. The derivative is therefore globally
/// bounded and Lipschitz.
pub fn cost_value_and_grad(g: &GeneratorParams, p: f64) -> (f64, f64) {
    if p < g.p_min {
        let slope = 2.0 * g.a * g.p_min + g.b;
        (slope * p + g.c - g.a * g.p_min * g.p_min, slope)
    } else if p > g.p_max {
        let slope = 2.0 * g.a * g.p_max + g.b;
        (slope * p + g.c - g.a * g.p_max * g.p_max, slope)
    } else {
        (g.a * p * p + g.b * p + g.c, 2.0 * g.a * p + g.b)
    }
}

/// Demand utility and its derivative.
///
/// `U(0) = 0`, increasing, concave; past the saturation point the slope is
/// the constant `omega (1 - 1/K)` and the value continues linearly from the
/// seam.
pub fn utility_value_and_grad(d: &DemandParams, p: f64) -> (f64, f64) {
    let seam = d.saturation_point();
    if p <= seam {
        (d.omega * p - d.alpha * p * p, d.omega - 2.0 * d.alpha * p)
    } else {
        let slope = d.omega * (1.0 - 1.0 / d.k);
        let at_seam = d.omega * seam - d.alpha * seam * seam;
        (at_seam + slope * (p - seam), slope)
    }
}

/// A strictly feasible point of the relaxed problem.
#[derive(Debug, Clone, Serialize)]
pub struct SlaterPoint {
    pub p: Vec<f64>,
    pub v: Vec<f64>,
}

/// A validated dispatch instance. Construction checks the per-node parameter
/// invariants, the aggregate capacity condition, and the existence of a
/// strictly feasible point.
#[derive(Debug, Clone)]
pub struct EnergyInstance {
    generators: Vec<GeneratorParams>,
    demands: Vec<DemandParams>,
    slater: SlaterPoint,
}

impl EnergyInstance {
    pub fn new(generators: Vec<GeneratorParams>, demands: Vec<DemandParams>) -> Result<Self> {
        if generators.is_empty() || demands.is_empty() {
            return Err(Error::InvalidInstance(
                "need at least one generator and one demand".to_string(),
            ));
        }
        for (i, g) in generators.iter().enumerate() {
            g.validate(i)?;
        }
        for (j, d) in demands.iter().enumerate() {
            d.validate(j)?;
        }
        if !check_assumption4(&generators, &demands) {
            let lhs: f64 = demands.iter().map(|d| d.p_max).sum();
            let rhs: f64 = generators
                .iter()
                .map(|g| g.p_min - g.l * g.p_min * g.p_min)
                .sum();
            return Err(Error::InvalidInstance(format!(
                "aggregate capacity check failed: total demand ceiling {lhs} is below \
                 the minimum net generation {rhs}"
            )));
        }
        let slater = find_slater_point(&generators, &demands)?;
        Ok(EnergyInstance {
            generators,
            demands,
            slater,
        })
    }

    pub fn generators(&self) -> &[GeneratorParams] {
        &self.generators
    }

    pub fn demands(&self) -> &[DemandParams] {
        &self.demands
    }

    pub fn slater_point(&self) -> &SlaterPoint {
        &self.slater
    }

    pub fn n_gen(&self) -> usize {
        self.generators.len()
    }

    pub fn n_dem(&self) -> usize {
        self.demands.len()
    }

    /// Number of power nodes `N = N_g + N_d`.
    pub fn n_nodes(&self) -> usize {
        self.n_gen() + self.n_dem()
    }

    /// Decision dimension `N + N_g` of `z = (p, v)`.
    pub fn dim(&self) -> usize {
        self.n_nodes() + self.n_gen()
    }

    /// Net supply minus demand at `(p, v)`.
    pub fn balance(&self, p: &[f64], v: &[f64]) -> f64 {
        let supply: f64 = (0..self.n_gen()).map(|i| p[i] - v[i]).sum();
        let demand: f64 = (self.n_gen()..self.n_nodes()).map(|j| p[j]).sum();
        supply - demand
    }

    /// Total objective `sum C_i(p_i) - sum U_j(p_j)`.
    pub fn objective(&self, p: &[f64]) -> f64 {
        let cost: f64 = self
            .generators
            .iter()
            .enumerate()
            .map(|(i, g)| cost_value_and_grad(g, p[i]).0)
            .sum();
        let utility: f64 = self
            .demands
            .iter()
            .enumerate()
            .map(|(j, d)| utility_value_and_grad(d, p[self.n_gen() + j]).0)
            .sum();
        cost - utility
    }

    /// Split a full decision vector into `(p, v)`.
    pub fn split_z<'a>(&self, z: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        z.split_at(self.n_nodes())
    }
}

/// Aggregate capacity condition: total demand ceiling must cover the minimum
/// net generation `sum_i (p_i^min - l_i (p_i^min)^2)`.
pub fn check_assumption4(generators: &[GeneratorParams], demands: &[DemandParams]) -> bool {
    let demand_ceiling: f64 = demands.iter().map(|d| d.p_max).sum();
    let min_net_gen: f64 = generators
        .iter()
        .map(|g| g.p_min - g.l * g.p_min * g.p_min)
        .sum();
    demand_ceiling >= min_net_gen
}

/// Search for a strictly feasible point: generator powers on an interior grid
/// level, loss auxiliaries with strict slack, demand powers scaled by
/// bisection until the balance closes exactly.
pub fn find_slater_point(
    generators: &[GeneratorParams],
    demands: &[DemandParams],
) -> Result<SlaterPoint> {
    for (i, g) in generators.iter().enumerate() {
        if !(g.p_min < g.p_max) {
            return Err(Error::SlaterNotFound(format!(
                "generator {i} has no strict box interior (p_min = {}, p_max = {})",
                g.p_min, g.p_max
            )));
        }
    }
    for (j, d) in demands.iter().enumerate() {
        if !(d.p_min < d.p_max) {
            return Err(Error::SlaterNotFound(format!(
                "demand {j} has no strict box interior (p_min = {}, p_max = {})",
                d.p_min, d.p_max
            )));
        }
    }

    // Strictly interior demand range, with a small relative margin.
    let margin = 1e-3;
    let dem_at = |s: f64| -> Vec<f64> {
        demands
            .iter()
            .map(|d| {
                let lo = d.p_min + margin * (d.p_max - d.p_min);
                let hi = d.p_max - margin * (d.p_max - d.p_min);
                lo + s * (hi - lo)
            })
            .collect()
    };
    let total_dem = |s: f64| dem_at(s).iter().sum::<f64>();

    for gen_level in [0.5, 0.3, 0.7, 0.2, 0.8, 0.1, 0.9, 0.05, 0.95] {
        for slack in [0.05, 0.01, 0.001] {
            let p_gen: Vec<f64> = generators
                .iter()
                .map(|g| g.p_min + gen_level * (g.p_max - g.p_min))
                .collect();
            let v: Vec<f64> = generators
                .iter()
                .zip(&p_gen)
                .map(|(g, &p)| g.l * p * p + slack)
                .collect();
            let net_supply: f64 = p_gen.iter().zip(&v).map(|(p, vi)| p - vi).sum();

            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            if total_dem(lo) > net_supply || total_dem(hi) < net_supply {
                continue;
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if total_dem(mid) < net_supply {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let s = 0.5 * (lo + hi);
            let mut p = p_gen;
            p.extend(dem_at(s));

            // Close the balance exactly by nudging the first demand, then
            // re-verify every strict inequality on the result.
            let n_g = generators.len();
            let supply: f64 = (0..n_g).map(|i| p[i] - v[i]).sum();
            let others: f64 = p[n_g + 1..].iter().sum();
            p[n_g] = supply - others;

            let strict = generators.iter().enumerate().all(|(i, g)| {
                p[i] > g.p_min && p[i] < g.p_max && v[i] > g.l * p[i] * p[i]
            }) && demands
                .iter()
                .enumerate()
                .all(|(j, d)| p[n_g + j] > d.p_min && p[n_g + j] < d.p_max);
            let balanced = {
                let sup: f64 = (0..n_g).map(|i| p[i] - v[i]).sum();
                let dem: f64 = p[n_g..].iter().sum();
                (sup - dem).abs() <= 1e-9 * (1.0 + sup.abs())
            };
            if strict && balanced {
                return Ok(SlaterPoint { p, v });
            }
        }
    }
    Err(Error::SlaterNotFound(
        "no strictly feasible point found: demand boxes cannot absorb any interior \
         net generation level"
            .to_string(),
    ))
}

/// Derivative of the loss constraint's power term, with the tangent-line
/// clamp outside the capacity box.
fn loss_slope(g: &GeneratorParams, p: f64) -> f64 {
    2.0 * g.l * p.clamp(g.p_min, g.p_max)
}

/// Loss constraint `c5(z) = h(p_i) - v_i` where `h` is `l p^2` inside the box
/// and its tangent lines outside, making `c5` convex with bounded gradient.
fn loss_value(g: &GeneratorParams, p: f64) -> f64 {
    if p < g.p_min {
        2.0 * g.l * g.p_min * p - g.l * g.p_min * g.p_min
    } else if p > g.p_max {
        2.0 * g.l * g.p_max * p - g.l * g.p_max * g.p_max
    } else {
        g.l * p * p
    }
}

/// Build one penalized local problem per agent, generators first. The shared
/// decision vector is `z = (p_0..p_{N-1}, v_0..v_{N_g-1})`.
pub fn build_distributed_problem(e: &EnergyInstance) -> Vec<PenalizedProblem> {
    let n_g = e.n_gen();
    let n = e.n_nodes();
    let dim = e.dim();
    let mut problems = Vec::with_capacity(n);

    // ||grad|| of the balance constraint: +-1 on every p and v coordinate.
    let balance_grad_norm = (dim as f64).sqrt();
    let balance_grad = |sign: f64| {
        move |_z: &[f64]| {
            let mut grad = vec![0.0; dim];
            for (idx, g) in grad.iter_mut().enumerate() {
                // +1 on generator p and -1 on v (net supply), -1 on demand p.
                *g = if idx < n_g {
                    sign
                } else {
                    -sign
                };
            }
            grad
        }
    };

    for (i, gp) in e.generators().iter().enumerate() {
        let g = *gp;
        let e2 = e.clone();
        let e3 = e.clone();
        let objective = LocalProblem::new(
            dim,
            move |z: &[f64]| cost_value_and_grad(&g, z[i]).0,
            move |z: &[f64]| {
                let mut grad = vec![0.0; dim];
                grad[i] = cost_value_and_grad(&g, z[i]).1;
                grad
            },
        );
        let box_hi = ConstraintFn::new(
            move |z: &[f64]| z[i] - g.p_max,
            move |_z: &[f64]| {
                let mut grad = vec![0.0; dim];
                grad[i] = 1.0;
                grad
            },
            1.0,
            1.0,
        );
        let box_lo = ConstraintFn::new(
            move |z: &[f64]| g.p_min - z[i],
            move |_z: &[f64]| {
                let mut grad = vec![0.0; dim];
                grad[i] = -1.0;
                grad
            },
            1.0,
            1.0,
        );
        let balance_pos = ConstraintFn::new(
            move |z: &[f64]| {
                let (p, v) = e2.split_z(z);
                e2.balance(p, v)
            },
            balance_grad(1.0),
            balance_grad_norm,
            1.0,
        );
        let balance_neg = ConstraintFn::new(
            move |z: &[f64]| {
                let (p, v) = e3.split_z(z);
                -e3.balance(p, v)
            },
            balance_grad(-1.0),
            balance_grad_norm,
            1.0,
        );
        let max_slope = 2.0 * g.l * g.p_min.abs().max(g.p_max.abs());
        let loss = ConstraintFn::new(
            move |z: &[f64]| loss_value(&g, z[i]) - z[n + i],
            move |z: &[f64]| {
                let mut grad = vec![0.0; dim];
                grad[i] = loss_slope(&g, z[i]);
                grad[n + i] = -1.0;
                grad
            },
            (max_slope * max_slope + 1.0).sqrt(),
            (2.0 * g.l).max(1.0),
        );
        problems.push(PenalizedProblem::new(
            objective
                .with_constraint(box_hi)
                .with_constraint(box_lo)
                .with_constraint(balance_pos)
                .with_constraint(balance_neg)
                .with_constraint(loss),
        ));
    }

    for (j, dp) in e.demands().iter().enumerate() {
        let d = *dp;
        let coord = n_g + j;
        let objective = LocalProblem::new(
            dim,
            move |z: &[f64]| -utility_value_and_grad(&d, z[coord]).0,
            move |z: &[f64]| {
                let mut grad = vec![0.0; dim];
                grad[coord] = -utility_value_and_grad(&d, z[coord]).1;
                grad
            },
        );
        let box_hi = ConstraintFn::new(
            move |z: &[f64]| z[coord] - d.p_max,
            move |_z: &[f64]| {
                let mut grad = vec![0.0; dim];
                grad[coord] = 1.0;
                grad
            },
            1.0,
            1.0,
        );
        let box_lo = ConstraintFn::new(
            move |z: &[f64]| d.p_min - z[coord],
            move |_z: &[f64]| {
                let mut grad = vec![0.0; dim];
                grad[coord] = -1.0;
                grad
            },
            1.0,
            1.0,
        );
        problems.push(PenalizedProblem::new(
            objective.with_constraint(box_hi).with_constraint(box_lo),
        ));
    }

    problems
}

/// Lagrange multipliers of the relaxed problem: `lambda` for the balance
/// equality, `mu_i` for the loss inequalities, `gamma_k` / `theta_k` for the
/// lower / upper box constraints of node `k`.
#[derive(Debug, Clone, Serialize)]
pub struct Multipliers {
    pub lambda: f64,
    pub mu: Vec<f64>,
    pub gamma: Vec<f64>,
    pub theta: Vec<f64>,
}

/// Residuals of the first-order optimality system at a candidate primal-dual
/// pair; all fields are nonnegative, zero at an exact optimum.
#[derive(Debug, Clone, Serialize)]
pub struct KktResiduals {
    /// Stationarity in `p_i` (generators) and `p_j` (demands), per node.
    pub stationarity_p: Vec<f64>,
    /// Stationarity in `v_i`, per generator: `|mu_i - lambda|`.
    pub stationarity_v: Vec<f64>,
    /// Max violation of balance, boxes, and loss inequalities.
    pub primal_feas: f64,
    /// Max `|multiplier * constraint|` over box and loss constraints.
    pub comp_slack: f64,
    /// Max negative part of `(mu, gamma, theta)`.
    pub dual_feas: f64,
}

impl KktResiduals {
    pub fn max_residual(&self) -> f64 {
        self.stationarity_p
            .iter()
            .chain(self.stationarity_v.iter())
            .fold(
                self.primal_feas.max(self.comp_slack).max(self.dual_feas),
                |m, &x| m.max(x),
            )
    }
}

/// Evaluate the optimality residuals.
///
/// The balance multiplier convention prices demand: stationarity reads
/// `C' - lambda + 2 mu l p - gamma + theta = 0` at generators,
/// `-U' + lambda - gamma + theta = 0` at demands, and `mu_i = lambda` from
/// the `v` derivative, so `lambda` comes out as the positive system marginal
/// price at an optimum.
pub fn kkt_residuals(
    e: &EnergyInstance,
    p: &[f64],
    v: &[f64],
    m: &Multipliers,
) -> Result<KktResiduals> {
    let n_g = e.n_gen();
    let n = e.n_nodes();
    if p.len() != n || v.len() != n_g || m.mu.len() != n_g || m.gamma.len() != n || m.theta.len() != n
    {
        return Err(Error::DimensionMismatch {
            expected: n + n_g,
            got: p.len() + v.len(),
        });
    }

    let mut stationarity_p = Vec::with_capacity(n);
    for (i, g) in e.generators().iter().enumerate() {
        let dc = cost_value_and_grad(g, p[i]).1;
        stationarity_p
            .push((dc - m.lambda + 2.0 * m.mu[i] * g.l * p[i] - m.gamma[i] + m.theta[i]).abs());
    }
    for (j, d) in e.demands().iter().enumerate() {
        let k = n_g + j;
        let du = utility_value_and_grad(d, p[k]).1;
        stationarity_p.push((-du + m.lambda - m.gamma[k] + m.theta[k]).abs());
    }

    let stationarity_v: Vec<f64> = (0..n_g).map(|i| (m.mu[i] - m.lambda).abs()).collect();

    let mut primal = e.balance(p, v).abs();
    let mut slack = 0.0f64;
    let mut dual = 0.0f64;
    for (k, (lo, hi)) in box_bounds(e).into_iter().enumerate() {
        primal = primal.max(lo - p[k]).max(p[k] - hi);
        slack = slack
            .max((m.gamma[k] * (lo - p[k])).abs())
            .max((m.theta[k] * (p[k] - hi)).abs());
        dual = dual.max(-m.gamma[k]).max(-m.theta[k]);
    }
    for (i, g) in e.generators().iter().enumerate() {
        let c = g.l * p[i] * p[i] - v[i];
        primal = primal.max(c);
        slack = slack.max((m.mu[i] * c).abs());
        dual = dual.max(-m.mu[i]);
    }

    Ok(KktResiduals {
        stationarity_p,
        stationarity_v,
        primal_feas: primal.max(0.0),
        comp_slack: slack,
        dual_feas: dual.max(0.0),
    })
}

fn box_bounds(e: &EnergyInstance) -> Vec<(f64, f64)> {
    e.generators()
        .iter()
        .map(|g| (g.p_min, g.p_max))
        .chain(e.demands().iter().map(|d| (d.p_min, d.p_max)))
        .collect()
}

/// Estimate multipliers at a candidate optimum of the relaxed problem.
///
/// `lambda` is recovered from stationarity at nodes strictly inside their
/// boxes (generators imply `lambda = C' / (1 - 2 l p)`, demands
/// `lambda = U'`), `mu_i = lambda`, and box multipliers absorb the
/// stationarity residual at active bounds, clamped to the dual cone.
pub fn estimate_multipliers(e: &EnergyInstance, p: &[f64], _v: &[f64]) -> Multipliers {
    let n_g = e.n_gen();
    let n = e.n_nodes();
    let bounds = box_bounds(e);
    let active_tol = |k: usize| 1e-6 * (bounds[k].1 - bounds[k].0).abs().max(1.0);
    let at_lower = |k: usize| p[k] - bounds[k].0 <= active_tol(k);
    let at_upper = |k: usize| bounds[k].1 - p[k] <= active_tol(k);

    let mut implied = Vec::new();
    for (i, g) in e.generators().iter().enumerate() {
        if !at_lower(i) && !at_upper(i) {
            let denom = 1.0 - 2.0 * g.l * p[i];
            if denom.abs() > 1e-9 {
                implied.push(cost_value_and_grad(g, p[i]).1 / denom);
            }
        }
    }
    for (j, d) in e.demands().iter().enumerate() {
        let k = n_g + j;
        if !at_lower(k) && !at_upper(k) {
            implied.push(utility_value_and_grad(d, p[k]).1);
        }
    }
    let lambda = if implied.is_empty() {
        0.0
    } else {
        implied.iter().sum::<f64>() / implied.len() as f64
    };

    let mu = vec![lambda; n_g];
    let mut gamma = vec![0.0; n];
    let mut theta = vec![0.0; n];
    for k in 0..n {
        // Stationarity excess s_k with gamma = theta = 0; a positive excess
        // at a lower bound belongs to gamma, a negative one at an upper bound
        // to theta.
        let s = if k < n_g {
            let g = &e.generators()[k];
            cost_value_and_grad(g, p[k]).1 - lambda + 2.0 * mu[k] * g.l * p[k]
        } else {
            -utility_value_and_grad(&e.demands()[k - n_g], p[k]).1 + lambda
        };
        if at_lower(k) {
            gamma[k] = s.max(0.0);
        } else if at_upper(k) {
            theta[k] = (-s).max(0.0);
        }
    }
    Multipliers {
        lambda,
        mu,
        gamma,
        theta,
    }
}

/// Check that a solution of the relaxed problem solves the original one:
/// every loss inequality is tight and the balance holds, both to `tol`.
pub fn verify_prop2(e: &EnergyInstance, p: &[f64], v: &[f64], tol: f64) -> bool {
    let tight = e
        .generators()
        .iter()
        .enumerate()
        .all(|(i, g)| (v[i] - g.l * p[i] * p[i]).abs() <= tol);
    tight && e.balance(p, v).abs() <= tol
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{self, SampleBox};
    use crate::penalty::validate;
    use approx::assert_abs_diff_eq;

    pub(crate) fn demo_generators() -> Vec<GeneratorParams> {
        vec![
            GeneratorParams {
                a: 0.04,
                b: 1.0,
                c: 20.0,
                l: 8.0e-4,
                p_min: 30.0,
                p_max: 160.0,
            },
            GeneratorParams {
                a: 0.03,
                b: 0.8,
                c: 16.0,
                l: 6.0e-4,
                p_min: 40.0,
                p_max: 200.0,
            },
        ]
    }

    pub(crate) fn demo_demands() -> Vec<DemandParams> {
        vec![
            DemandParams {
                omega: 18.0,
                alpha: 0.06,
                k: 1.25,
                p_min: 20.0,
                p_max: 110.0,
            },
            DemandParams {
                omega: 16.0,
                alpha: 0.05,
                k: 1.25,
                p_min: 20.0,
                p_max: 100.0,
            },
        ]
    }

    fn demo_instance() -> EnergyInstance {
        EnergyInstance::new(demo_generators(), demo_demands()).unwrap()
    }

    #[test]
    fn cost_interior_arithmetic() {
        let g = GeneratorParams {
            a: 1.0,
            b: 2.0,
            c: 3.0,
            l: 0.0,
            p_min: 0.0,
            p_max: 10.0,
        };
        let (v, d) = cost_value_and_grad(&g, 2.0);
        assert_eq!(v, 11.0);
        assert_eq!(d, 6.0);
    }

    #[test]
    fn cost_seam_gradient_agrees_from_both_sides() {
        let g = demo_generators()[0];
        let eps = 1e-9;
        let (_, d_in) = cost_value_and_grad(&g, g.p_min + eps);
        let (_, d_out) = cost_value_and_grad(&g, g.p_min - eps);
        assert_abs_diff_eq!(d_in, 2.0 * g.a * g.p_min + g.b, epsilon = 1e-6);
        assert_abs_diff_eq!(d_out, 2.0 * g.a * g.p_min + g.b, epsilon = 1e-12);
        // Value continuity at both seams.
        let (v_in, _) = cost_value_and_grad(&g, g.p_min);
        let (v_out, _) = cost_value_and_grad(&g, g.p_min - 1e-12);
        assert_abs_diff_eq!(v_in, v_out, epsilon = 1e-8);
        let (w_in, _) = cost_value_and_grad(&g, g.p_max);
        let (w_out, _) = cost_value_and_grad(&g, g.p_max + 1e-12);
        assert_abs_diff_eq!(w_in, w_out, epsilon = 1e-8);
    }

    #[test]
    fn cost_gradient_matches_finite_differences_everywhere() {
        let g = demo_generators()[1];
        let mut points = vec![0.0, 35.0, 120.0, 230.0, -50.0];
        for seam in [g.p_min, g.p_max] {
            points.push(seam - 1e-3);
            points.push(seam + 1e-3);
        }
        for p in points {
            let fd = (cost_value_and_grad(&g, p + 1e-6).0 - cost_value_and_grad(&g, p - 1e-6).0)
                / 2e-6;
            assert_abs_diff_eq!(cost_value_and_grad(&g, p).1, fd, epsilon = 1e-5);
        }
    }

    #[test]
    fn utility_at_zero_and_seam() {
        let d = demo_demands()[0];
        let (v0, g0) = utility_value_and_grad(&d, 0.0);
        assert_eq!(v0, 0.0);
        assert_eq!(g0, d.omega);
        let seam = d.saturation_point();
        let saturated = d.omega * (1.0 - 1.0 / d.k);
        let (_, g_lo) = utility_value_and_grad(&d, seam - 1e-12);
        let (_, g_hi) = utility_value_and_grad(&d, seam + 1e-12);
        assert_abs_diff_eq!(g_lo, saturated, epsilon = 1e-9);
        assert_abs_diff_eq!(g_hi, saturated, epsilon = 1e-12);
        let (v_lo, _) = utility_value_and_grad(&d, seam - 1e-12);
        let (v_hi, _) = utility_value_and_grad(&d, seam + 1e-12);
        assert_abs_diff_eq!(v_lo, v_hi, epsilon = 1e-8);
    }

    #[test]
    fn utility_gradient_positive_and_concave() {
        let d = demo_demands()[1];
        let mut prev = f64::INFINITY;
        for k in 0..200 {
            let p = -10.0 + k as f64;
            let (_, grad) = utility_value_and_grad(&d, p);
            if p >= 0.0 && p <= d.p_max + 50.0 {
                assert!(grad > 0.0, "gradient {grad} at {p}");
            }
            assert!(grad <= prev + 1e-12, "gradient must be nonincreasing");
            prev = grad;
        }
        // Negated utility has nonnegative second differences.
        for k in 0..100 {
            let p = k as f64;
            let f = |x: f64| -utility_value_and_grad(&d, x).0;
            assert!(f(p + 1.0) + f(p - 1.0) - 2.0 * f(p) >= -1e-9);
        }
    }

    #[test]
    fn assumption4_boundary_cases() {
        // All l = 0 and demand ceiling equal to generator floor: equality holds.
        let gens = vec![GeneratorParams {
            a: 1.0,
            b: 1.0,
            c: 1.0,
            l: 0.0,
            p_min: 50.0,
            p_max: 100.0,
        }];
        let dems = vec![DemandParams {
            omega: 5.0,
            alpha: 0.1,
            k: 2.0,
            p_min: 0.0,
            p_max: 50.0,
        }];
        assert!(check_assumption4(&gens, &dems));
        let mut low = dems.clone();
        low[0].p_max = 49.0;
        assert!(!check_assumption4(&gens, &low));
        assert!(check_assumption4(&demo_generators(), &demo_demands()));
    }

    #[test]
    fn instance_construction_rejects_violations() {
        let mut gens = demo_generators();
        gens[0].l = gens[0].a + 0.1;
        let err = EnergyInstance::new(gens, demo_demands()).unwrap_err();
        assert!(err.to_string().contains("generator 0"));

        let mut dems = demo_demands();
        dems[1].k = 0.9;
        let err = EnergyInstance::new(demo_generators(), dems).unwrap_err();
        assert!(err.to_string().contains("demand 1"));

        let mut dems = demo_demands();
        dems[0].p_max = 25.0;
        dems[1].p_max = 25.0;
        let err = EnergyInstance::new(demo_generators(), dems).unwrap_err();
        assert!(err.to_string().contains("aggregate capacity"));
    }

    #[test]
    fn slater_point_of_demo_instance() {
        let e = demo_instance();
        let s = e.slater_point();
        for (i, g) in e.generators().iter().enumerate() {
            assert!(s.p[i] > g.p_min && s.p[i] < g.p_max);
            assert!(s.v[i] > g.l * s.p[i] * s.p[i]);
        }
        for (j, d) in e.demands().iter().enumerate() {
            let p = s.p[e.n_gen() + j];
            assert!(p > d.p_min && p < d.p_max);
        }
        assert!(e.balance(&s.p, &s.v).abs() <= 1e-9 * 100.0);
    }

    #[test]
    fn slater_fails_without_interior() {
        let gens = demo_generators();
        let mut dems = demo_demands();
        dems[0].p_min = dems[0].p_max;
        let err = find_slater_point(&gens, &dems).unwrap_err();
        assert!(err.to_string().contains("no strict box interior"));
    }

    #[test]
    fn distributed_problem_shape() {
        let e = demo_instance();
        let problems = build_distributed_problem(&e);
        assert_eq!(problems.len(), 4);
        for p in &problems {
            assert_eq!(p.dim(), 6);
        }
        assert_eq!(problems[0].base().constraints().len(), 5);
        assert_eq!(problems[3].base().constraints().len(), 2);
    }

    #[test]
    fn penalty_vanishes_at_slater_point() {
        let e = demo_instance();
        let problems = build_distributed_problem(&e);
        let mut z = e.slater_point().p.clone();
        z.extend_from_slice(&e.slater_point().v);
        for (i, p) in problems.iter().enumerate() {
            assert_eq!(p.penalty_value(&z).unwrap(), 0.0, "agent {i}");
            assert_eq!(p.penalty_grad(&z).unwrap(), vec![0.0; 6], "agent {i}");
        }
    }

    #[test]
    fn constraint_gradients_bounded_and_lipschitz() {
        let e = demo_instance();
        let problems = build_distributed_problem(&e);
        let sample_box = SampleBox::centered(6, 500.0);
        for (i, p) in problems.iter().enumerate() {
            validate::check_constraint_gradient_bounds(p.base(), &sample_box, 300, 17 + i as u64)
                .unwrap();
            validate::check_constraint_lipschitz(p.base(), &sample_box, 300, 41 + i as u64)
                .unwrap();
            validate::check_objective_gradient(
                p.base(),
                &sample_box,
                60,
                7 + i as u64,
                1e-4,
            )
            .unwrap();
        }
    }

    #[test]
    fn constraints_midpoint_convex_sampled() {
        let e = demo_instance();
        let problems = build_distributed_problem(&e);
        let sample_box = SampleBox::centered(6, 400.0);
        let mut rng = numeric::seeded_rng(5);
        for p in &problems {
            for _ in 0..200 {
                let z1 = sample_box.sample(&mut rng);
                let z2 = sample_box.sample(&mut rng);
                let mid: Vec<f64> = z1.iter().zip(&z2).map(|(a, b)| 0.5 * (a + b)).collect();
                for c in p.base().constraints() {
                    assert!(c.value(&mid) <= 0.5 * (c.value(&z1) + c.value(&z2)) + 1e-9);
                }
            }
        }
    }

    #[test]
    fn objective_convex_on_sampled_lines() {
        let e = demo_instance();
        let problems = build_distributed_problem(&e);
        let total = |z: &[f64]| -> f64 {
            problems.iter().map(|p| p.base().objective(z)).sum()
        };
        let sample_box = SampleBox::centered(6, 300.0);
        let mut rng = numeric::seeded_rng(23);
        for _ in 0..100 {
            let z = sample_box.sample(&mut rng);
            let dir = sample_box.sample(&mut rng);
            let f = |s: f64| {
                let pt: Vec<f64> = z.iter().zip(&dir).map(|(a, b)| a + s * b * 0.01).collect();
                total(&pt)
            };
            assert!(f(1.0) + f(-1.0) - 2.0 * f(0.0) >= -1e-7);
        }
    }

    #[test]
    fn kkt_unbalanced_interior_point_flags_primal() {
        let e = demo_instance();
        let p = vec![100.0, 100.0, 50.0, 50.0];
        let v = vec![10.0, 10.0];
        let m = Multipliers {
            lambda: 0.0,
            mu: vec![0.0; 2],
            gamma: vec![0.0; 4],
            theta: vec![0.0; 4],
        };
        let res = kkt_residuals(&e, &p, &v, &m).unwrap();
        assert!(res.primal_feas > 0.0);
        assert_eq!(res.comp_slack, 0.0);
        assert_eq!(res.dual_feas, 0.0);
    }

    #[test]
    fn kkt_slack_with_positive_mu_flags_complementarity() {
        let e = demo_instance();
        let p = vec![100.0, 100.0, 50.0, 50.0];
        // v strictly above the loss: mu > 0 violates complementary slackness.
        let v = vec![e.generators()[0].l * 1e4 + 1.0, e.generators()[1].l * 1e4 + 1.0];
        let m = Multipliers {
            lambda: 1.0,
            mu: vec![1.0; 2],
            gamma: vec![0.0; 4],
            theta: vec![0.0; 4],
        };
        let res = kkt_residuals(&e, &p, &v, &m).unwrap();
        assert!(res.comp_slack >= 0.9);
    }

    #[test]
    fn kkt_dual_feasibility_flags_negative_multipliers() {
        let e = demo_instance();
        let p = vec![100.0, 100.0, 50.0, 50.0];
        let v = vec![8.0, 6.0];
        let m = Multipliers {
            lambda: 0.0,
            mu: vec![-0.5, 0.0],
            gamma: vec![0.0; 4],
            theta: vec![0.0; 4],
        };
        let res = kkt_residuals(&e, &p, &v, &m).unwrap();
        assert_abs_diff_eq!(res.dual_feas, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn verify_prop2_detects_slack_loss() {
        let e = demo_instance();
        let p = vec![100.0, 100.0, 95.0, 91.6];
        let exact: Vec<f64> = (0..2)
            .map(|i| e.generators()[i].l * p[i] * p[i])
            .collect();
        // Balance the demand side exactly for the tight-loss case.
        let supply: f64 = (0..2).map(|i| p[i] - exact[i]).sum();
        let mut p_bal = p.clone();
        p_bal[3] = supply - p_bal[2];
        assert!(verify_prop2(&e, &p_bal, &exact, 1e-9));
        let slack: Vec<f64> = exact.iter().map(|v| v + 1.0).collect();
        assert!(!verify_prop2(&e, &p_bal, &slack, 1e-4));
    }

    #[test]
    fn verify_prop2_zero_loss_reduces_to_v_zero() {
        let mut gens = demo_generators();
        for g in &mut gens {
            g.l = 0.0;
        }
        let e = EnergyInstance::new(gens, demo_demands()).unwrap();
        let p = vec![100.0, 100.0, 100.0, 100.0];
        assert!(verify_prop2(&e, &p, &[0.0, 0.0], 1e-9));
        assert!(!verify_prop2(&e, &p, &[0.5, 0.0], 1e-4));
    }
}
