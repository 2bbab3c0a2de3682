//! Independent centralized reference solvers.
//!
//! Two routes validate the distributed runs: a full-gradient penalized
//! descent that follows the same parameter schedule with complete
//! information, and a multi-resolution grid search with a heavy fixed
//! penalty. They share no iteration machinery with the engine, so agreement
//! between all three is a meaningful check.

use crate::energy::EnergyInstance;
use crate::error::Error;
use crate::numeric;
use crate::penalty::PenalizedProblem;
use crate::schedules::ParamSchedule;
use crate::Result;

/// Full-gradient penalized descent from the zero vector:
/// `z(t+1) = z(t) - a_t sum_i [f_i(z) + r_t psi_i(z)]`.
///
/// This is the complete-information limit of the distributed iteration and
/// is implemented independently of it.
pub fn centralized_penalized_solve(
    problems: &[PenalizedProblem],
    params: &ParamSchedule,
    rounds: u64,
) -> Result<Vec<f64>> {
    if problems.is_empty() {
        return Err(Error::Oracle("no problems supplied".to_string()));
    }
    let dim = problems[0].dim();
    if problems.iter().any(|p| p.dim() != dim) {
        return Err(Error::Oracle("problems must share the dimension".to_string()));
    }
    let mut z = vec![0.0; dim];
    for t in 0..rounds {
        let r_t = params.r(t);
        let a_t = params.a(t);
        let mut total = vec![0.0; dim];
        for p in problems {
            let g = p.penalized_gradient(&z, r_t)?;
            numeric::axpy(&mut total, 1.0, &g);
        }
        if !numeric::all_finite(&total) {
            return Err(Error::Oracle(format!(
                "non-finite full gradient at round {t}"
            )));
        }
        numeric::axpy(&mut z, -a_t, &total);
    }
    Ok(z)
}

/// Penalty weight the grid oracle applies to constraint violations.
const GRID_PENALTY: f64 = 1e6;

/// Multi-resolution minimization of an arbitrary scoring function over a box.
/// Each refinement level shrinks the box tenfold around the incumbent
/// (clamped to the original box) and re-grids. Ties resolve to the first
/// point in row-major order, so results are deterministic.
pub fn grid_search(
    score: impl Fn(&[f64]) -> f64,
    sample_box: &[(f64, f64)],
    grid: usize,
    refine: usize,
) -> Result<Vec<f64>> {
    let dim = sample_box.len();
    if dim == 0 || grid < 2 {
        return Err(Error::Oracle(
            "grid search needs a nonempty box and at least two points per axis".to_string(),
        ));
    }
    if (grid as f64).powi(dim as i32) > 1e8 {
        return Err(Error::Oracle(format!(
            "grid of {grid}^{dim} points exceeds the budget"
        )));
    }
    let mut lo: Vec<f64> = sample_box.iter().map(|b| b.0).collect();
    let mut hi: Vec<f64> = sample_box.iter().map(|b| b.1).collect();
    if lo.iter().zip(&hi).any(|(l, h)| l > h) {
        return Err(Error::Oracle("grid box has inverted bounds".to_string()));
    }

    let mut best = lo.clone();
    let mut best_score = f64::INFINITY;
    let mut point = vec![0.0; dim];
    for _level in 0..=refine {
        let mut idx = vec![0usize; dim];
        loop {
            for k in 0..dim {
                let frac = idx[k] as f64 / (grid - 1) as f64;
                point[k] = lo[k] + frac * (hi[k] - lo[k]);
            }
            let s = score(&point);
            if s < best_score {
                best_score = s;
                best.copy_from_slice(&point);
            }
            // Row-major odometer increment.
            let mut k = 0;
            loop {
                idx[k] += 1;
                if idx[k] < grid {
                    break;
                }
                idx[k] = 0;
                k += 1;
                if k == dim {
                    break;
                }
            }
            if k == dim {
                break;
            }
        }
        // Zoom tenfold around the incumbent, staying inside the original box.
        for k in 0..dim {
            let width = (hi[k] - lo[k]) / 10.0;
            let center = best[k];
            lo[k] = (center - 0.5 * width).max(sample_box[k].0);
            hi[k] = (center + 0.5 * width).min(sample_box[k].1);
        }
    }
    if !best_score.is_finite() {
        return Err(Error::Oracle("grid search found no finite score".to_string()));
    }
    Ok(best)
}

/// Grid minimization of `sum_i F_i + R sum_i Psi_i` with the heavy fixed
/// penalty `R = 1e6`. Fails when the best point still violates a constraint
/// by more than the final grid resolution allows.
pub fn brute_force_solve(
    problems: &[PenalizedProblem],
    sample_box: &[(f64, f64)],
    grid: usize,
    refine: usize,
) -> Result<Vec<f64>> {
    if problems.is_empty() {
        return Err(Error::Oracle("no problems supplied".to_string()));
    }
    let dim = problems[0].dim();
    if sample_box.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: sample_box.len(),
        });
    }
    let score = |z: &[f64]| -> f64 {
        let mut s = 0.0;
        for p in problems {
            s += p.base().objective(z);
            s += GRID_PENALTY * p.penalty_value(z).unwrap_or(f64::INFINITY);
        }
        s
    };
    let best = grid_search(score, sample_box, grid, refine)?;

    let resolution = sample_box
        .iter()
        .map(|(l, h)| (h - l) / (grid - 1) as f64 / 10f64.powi(refine as i32))
        .fold(0.0f64, f64::max);
    let worst = problems
        .iter()
        .map(|p| p.max_violation(&best).unwrap_or(f64::INFINITY))
        .fold(f64::NEG_INFINITY, f64::max);
    // Even on a feasible box the incumbent sits slightly outside where the
    // objective pull balances the penalty, at depth ~ gradient scale / R.
    let feasibility_tol = (100.0 / GRID_PENALTY).max(10.0 * resolution);
    if worst > feasibility_tol {
        return Err(Error::Oracle(format!(
            "box contains no feasible point: best candidate still violates a constraint \
             by {worst:.3e}"
        )));
    }
    Ok(best)
}

/// Energy solution found by the grid oracle: full `(p, v)` with the losses
/// tight and the balance closed by construction.
#[derive(Debug, Clone)]
pub struct EnergySolution {
    pub p: Vec<f64>,
    pub v: Vec<f64>,
    pub objective: f64,
}

/// Grid oracle specialized to the dispatch family.
///
/// At an optimum of the relaxation the losses are tight and the balance is an
/// equality, so `v_i = l_i p_i^2` is substituted and the last demand is
/// eliminated through the balance, leaving `N - 1` free coordinates. Box
/// violations of the eliminated demand are charged quadratically so the
/// refinement is steered back into the feasible region.
pub fn brute_force_energy(e: &EnergyInstance, grid: usize, refine: usize) -> Result<EnergySolution> {
    let n_g = e.n_gen();
    let n_d = e.n_dem();
    let free_dem = n_d - 1;
    let last = e.demands()[n_d - 1];

    let mut sample_box: Vec<(f64, f64)> = e
        .generators()
        .iter()
        .map(|g| (g.p_min, g.p_max))
        .collect();
    sample_box.extend(e.demands()[..free_dem].iter().map(|d| (d.p_min, d.p_max)));

    let gens = e.generators().to_vec();
    let instance = e.clone();
    let assemble = move |u: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let mut p = Vec::with_capacity(n_g + n_d);
        let mut v = Vec::with_capacity(n_g);
        for (i, g) in gens.iter().enumerate() {
            p.push(u[i]);
            v.push(g.l * u[i] * u[i]);
        }
        let net_supply: f64 = (0..n_g).map(|i| p[i] - v[i]).sum();
        let mut other = 0.0;
        for j in 0..free_dem {
            p.push(u[n_g + j]);
            other += u[n_g + j];
        }
        p.push(net_supply - other);
        (p, v)
    };
    let assemble2 = assemble.clone();

    let score = move |u: &[f64]| -> f64 {
        let (p, _v) = assemble(u);
        let p_last = p[n_g + n_d - 1];
        let mut s = instance.objective(&p);
        let below = (last.p_min - p_last).max(0.0);
        let above = (p_last - last.p_max).max(0.0);
        s += GRID_PENALTY * (below * below + above * above);
        s
    };

    let best = grid_search(score, &sample_box, grid, refine)?;
    let (p, v) = assemble2(&best);
    let p_last = p[n_g + n_d - 1];
    let resolution = sample_box
        .iter()
        .map(|(l, h)| (h - l) / (grid - 1) as f64 / 10f64.powi(refine as i32))
        .fold(0.0f64, f64::max);
    if p_last < last.p_min - 10.0 * resolution || p_last > last.p_max + 10.0 * resolution {
        return Err(Error::Oracle(format!(
            "eliminated demand lands outside its box at {p_last}"
        )));
    }
    let objective = e.objective(&p);
    Ok(EnergySolution { p, v, objective })
}

/// One probe of the penalty path: the minimizer and optimal value of
/// `F + r Psi` at a fixed `r`.
#[derive(Debug, Clone)]
pub struct PathPoint {
    pub r: f64,
    pub minimizer: Vec<f64>,
    pub optimal_value: f64,
}

/// Solve `min F + r Psi` for each `r` by descent with diminishing steps,
/// warm-starting each stage from the previous minimizer.
///
/// `r_values` must be increasing and at least 1. As `r` grows the minimizers
/// approach the constrained solution and the optimal values approach the
/// constrained optimum from below.
pub fn penalty_path_probe(
    problems: &[PenalizedProblem],
    r_values: &[f64],
) -> Result<Vec<PathPoint>> {
    if problems.is_empty() || r_values.is_empty() {
        return Err(Error::Oracle("empty probe input".to_string()));
    }
    if r_values.windows(2).any(|w| w[1] <= w[0]) || r_values[0] < 1.0 {
        return Err(Error::Oracle(
            "r_values must be increasing and at least 1".to_string(),
        ));
    }
    let dim = problems[0].dim();
    let mut z = vec![0.0; dim];
    let mut out = Vec::with_capacity(r_values.len());
    for &r in r_values {
        // Conservative step scale: the penalty curvature grows with r.
        let lipschitz_guess = 2.0
            + r * problems
                .iter()
                .map(|p| p.penalty_grad_bound().powi(2))
                .sum::<f64>()
                .max(1.0);
        let a0 = 1.0 / lipschitz_guess;
        let mut grad_norm = f64::INFINITY;
        for k in 0..400_000u64 {
            let a_k = a0 / (1.0 + k as f64 / 1e4).sqrt();
            let mut total = vec![0.0; dim];
            for p in problems {
                numeric::axpy(&mut total, 1.0, &p.penalized_gradient(&z, r)?);
            }
            grad_norm = numeric::norm(&total);
            if !grad_norm.is_finite() || numeric::norm(&z) > 1e9 {
                return Err(Error::Oracle(format!(
                    "penalty path descent diverged at r = {r}, step {k}"
                )));
            }
            if grad_norm <= 1e-10 * (1.0 + r) {
                break;
            }
            numeric::axpy(&mut z, -a_k, &total);
        }
        log::debug!("path probe r = {r}: final gradient norm {grad_norm:.3e}");
        let mut value = 0.0;
        for p in problems {
            value += p.base().objective(&z) + r * p.penalty_value(&z)?;
        }
        out.push(PathPoint {
            r,
            minimizer: z.clone(),
            optimal_value: value,
        });
    }
    Ok(out)
}
