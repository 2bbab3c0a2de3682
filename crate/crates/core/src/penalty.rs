//! Local objectives, constraints, and the smooth penalty transform.
//!
//! Each agent owns a differentiable convex objective and a list of convex
//! inequality constraints `c(z) <= 0`. Constraint violations are charged
//! through the scalar hinge
//!
//! ```text
//! g(u) = ln((e^u + e^-u) / 2)   for u > 0,      g(u) = 0  for u <= 0,
//! ```
//!
//! whose derivative `tanh(u)` is bounded by 1, so the penalty gradient
//! inherits the boundedness and Lipschitz continuity of the constraint
//! gradients. The engine and the centralized oracle both consume the
//! penalized gradient `f(z) + r * psi(z)` exposed here.

use crate::error::Error;
use crate::numeric::{self, SampleBox};
use crate::Result;

type ValueFn = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GradFn = Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Smooth penalty hinge.
///
/// Evaluates `ln(cosh(u))` on the violated side and 0 otherwise. For large
/// `u` the closed form overflows around `u ~ 710`, so the algebraically equal
/// form `u - ln 2 + ln(1 + e^{-2u})` is used instead.
pub fn penalty_g(u: f64) -> Result<f64> {
    if !u.is_finite() {
        return Err(Error::NonFiniteInput {
            context: "penalty_g",
            value: u,
        });
    }
    if u <= 0.0 {
        Ok(0.0)
    } else if u <= 30.0 {
        Ok(u.cosh().ln())
    } else {
        Ok(u - std::f64::consts::LN_2 + (-2.0 * u).exp().ln_1p())
    }
}

/// Derivative of [`penalty_g`]: `tanh(u)` for `u > 0`, zero otherwise.
pub fn penalty_g_prime(u: f64) -> Result<f64> {
    if !u.is_finite() {
        return Err(Error::NonFiniteInput {
            context: "penalty_g_prime",
            value: u,
        });
    }
    if u <= 0.0 {
        Ok(0.0)
    } else {
        Ok(u.tanh())
    }
}

/// One inequality constraint `c(z) <= 0` with its gradient oracle and the
/// bounds the instance builder declares for it (sup-norm of the gradient and
/// a Lipschitz constant of the gradient). The bounds are declared, not
/// derived; sampling checks verify them on a test box.
pub struct ConstraintFn {
    value: ValueFn,
    grad: GradFn,
    grad_bound: f64,
    lipschitz_bound: f64,
}

impl ConstraintFn {
    pub fn new(
        value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        grad_bound: f64,
        lipschitz_bound: f64,
    ) -> Self {
        assert!(
            grad_bound > 0.0 && grad_bound.is_finite(),
            "grad_bound must be a positive real"
        );
        assert!(
            lipschitz_bound > 0.0 && lipschitz_bound.is_finite(),
            "lipschitz_bound must be a positive real"
        );
        ConstraintFn {
            value: Box::new(value),
            grad: Box::new(grad),
            grad_bound,
            lipschitz_bound,
        }
    }

    pub fn value(&self, z: &[f64]) -> f64 {
        (self.value)(z)
    }

    pub fn grad(&self, z: &[f64]) -> Vec<f64> {
        (self.grad)(z)
    }

    pub fn grad_bound(&self) -> f64 {
        self.grad_bound
    }

    pub fn lipschitz_bound(&self) -> f64 {
        self.lipschitz_bound
    }
}

/// One agent's share of the global problem: objective `F_i` with gradient
/// `f_i`, plus the local constraint family (possibly several constraints).
pub struct LocalProblem {
    objective_value: ValueFn,
    objective_grad: GradFn,
    constraints: Vec<ConstraintFn>,
    dim: usize,
}

impl LocalProblem {
    pub fn new(
        dim: usize,
        objective_value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        objective_grad: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        assert!(dim > 0, "dim must be positive");
        LocalProblem {
            objective_value: Box::new(objective_value),
            objective_grad: Box::new(objective_grad),
            constraints: Vec::new(),
            dim,
        }
    }

    pub fn with_constraint(mut self, c: ConstraintFn) -> Self {
        self.constraints.push(c);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn constraints(&self) -> &[ConstraintFn] {
        &self.constraints
    }

    pub fn objective(&self, z: &[f64]) -> f64 {
        (self.objective_value)(z)
    }

    pub fn objective_grad(&self, z: &[f64]) -> Vec<f64> {
        (self.objective_grad)(z)
    }

    fn check_dim(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: z.len(),
            });
        }
        Ok(())
    }
}

/// A [`LocalProblem`] together with its penalty terms
/// `Psi_i(z) = sum_k g(c_k(z))` and gradient `psi_i`.
pub struct PenalizedProblem {
    base: LocalProblem,
}

impl PenalizedProblem {
    pub fn new(base: LocalProblem) -> Self {
        PenalizedProblem { base }
    }

    pub fn base(&self) -> &LocalProblem {
        &self.base
    }

    pub fn dim(&self) -> usize {
        self.base.dim
    }

    /// `Psi_i(z) >= 0`, zero exactly when every local constraint holds.
    pub fn penalty_value(&self, z: &[f64]) -> Result<f64> {
        self.base.check_dim(z)?;
        let mut total = 0.0;
        for c in &self.base.constraints {
            total += penalty_g(c.value(z))?;
        }
        Ok(total)
    }

    /// `psi_i(z) = sum_k g'(c_k(z)) * grad c_k(z)`.
    ///
    /// Since `|g'| < 1`, the norm never exceeds the sum of the declared
    /// constraint gradient bounds.
    pub fn penalty_grad(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.base.check_dim(z)?;
        let mut out = vec![0.0; self.base.dim];
        for c in &self.base.constraints {
            let s = penalty_g_prime(c.value(z))?;
            if s != 0.0 {
                numeric::axpy(&mut out, s, &c.grad(z));
            }
        }
        Ok(out)
    }

    /// The engine's per-round gradient `f_i(z) + r * psi_i(z)`.
    ///
    /// Rejects `r < 1`: penalty parameters below 1 violate the parameter
    /// sequence contract.
    pub fn penalized_gradient(&self, z: &[f64], r: f64) -> Result<Vec<f64>> {
        if !(r >= 1.0) {
            return Err(Error::PenaltyParameterTooSmall { r });
        }
        self.base.check_dim(z)?;
        let mut out = self.base.objective_grad(z);
        if out.len() != self.base.dim {
            return Err(Error::DimensionMismatch {
                expected: self.base.dim,
                got: out.len(),
            });
        }
        let psi = self.penalty_grad(z)?;
        numeric::axpy(&mut out, r, &psi);
        Ok(out)
    }

    /// Sum of declared constraint gradient bounds; an a priori bound on
    /// `||psi_i||`.
    pub fn penalty_grad_bound(&self) -> f64 {
        self.base.constraints.iter().map(|c| c.grad_bound).sum()
    }

    /// Largest constraint value at `z` (`<= 0` means feasible for this agent).
    pub fn max_violation(&self, z: &[f64]) -> Result<f64> {
        self.base.check_dim(z)?;
        Ok(self
            .base
            .constraints
            .iter()
            .map(|c| c.value(z))
            .fold(f64::NEG_INFINITY, f64::max)
            .max(f64::NEG_INFINITY))
    }
}

/// Sampling-based checks for the declared properties of a [`LocalProblem`].
///
/// These are spot checks over a finite box: the underlying assumptions are
/// global statements that code can only verify by sampling.
pub mod validate {
    use super::*;

    /// Check that `objective_grad` matches central finite differences of
    /// `objective_value` to `rel_tol` at `samples` random points.
    pub fn check_objective_gradient(
        p: &LocalProblem,
        sample_box: &SampleBox,
        samples: usize,
        seed: u64,
        rel_tol: f64,
    ) -> Result<()> {
        let mut rng = numeric::seeded_rng(seed);
        for _ in 0..samples {
            let z = sample_box.sample(&mut rng);
            let analytic = p.objective_grad(&z);
            let fd = numeric::central_difference_gradient(|x| p.objective(x), &z, 1e-5);
            let err = numeric::dist(&analytic, &fd);
            let scale = numeric::norm(&analytic).max(1.0);
            if err > rel_tol * scale {
                return Err(Error::InvalidInstance(format!(
                    "objective gradient disagrees with finite differences at {z:?}: \
                     err {err:.3e} > {rel_tol:.1e} * {scale:.3e}"
                )));
            }
        }
        Ok(())
    }

    /// Check `||grad c(z)|| <= grad_bound` for every constraint over random
    /// points of the box.
    pub fn check_constraint_gradient_bounds(
        p: &LocalProblem,
        sample_box: &SampleBox,
        samples: usize,
        seed: u64,
    ) -> Result<()> {
        let mut rng = numeric::seeded_rng(seed);
        for _ in 0..samples {
            let z = sample_box.sample(&mut rng);
            for (k, c) in p.constraints().iter().enumerate() {
                let n = numeric::norm(&c.grad(&z));
                if n > c.grad_bound() * (1.0 + 1e-12) {
                    return Err(Error::InvalidInstance(format!(
                        "constraint {k}: sampled gradient norm {n} exceeds declared bound {}",
                        c.grad_bound()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Check `||grad c(z1) - grad c(z2)|| <= L * ||z1 - z2||` on sampled pairs.
    pub fn check_constraint_lipschitz(
        p: &LocalProblem,
        sample_box: &SampleBox,
        samples: usize,
        seed: u64,
    ) -> Result<()> {
        let mut rng = numeric::seeded_rng(seed);
        for _ in 0..samples {
            let z1 = sample_box.sample(&mut rng);
            let z2 = sample_box.sample(&mut rng);
            let step = numeric::dist(&z1, &z2);
            if step == 0.0 {
                continue;
            }
            for (k, c) in p.constraints().iter().enumerate() {
                let diff = numeric::dist(&c.grad(&z1), &c.grad(&z2));
                if diff > c.lipschitz_bound() * step * (1.0 + 1e-9) {
                    return Err(Error::InvalidInstance(format!(
                        "constraint {k}: gradient variation {diff} exceeds L*step = {}",
                        c.lipschitz_bound() * step
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn toy_two_constraint_problem() -> PenalizedProblem {
        // F(z) = z0^2 + z1^2 with two copies of the affine constraint
        // c(z) = 2 z0 + 1 (so c = 1 at the origin).
        let base = LocalProblem::new(
            2,
            |z: &[f64]| z[0] * z[0] + z[1] * z[1],
            |z: &[f64]| vec![2.0 * z[0], 2.0 * z[1]],
        )
        .with_constraint(ConstraintFn::new(
            |z: &[f64]| 2.0 * z[0] + 1.0,
            |_z: &[f64]| vec![2.0, 0.0],
            2.0,
            1.0,
        ))
        .with_constraint(ConstraintFn::new(
            |z: &[f64]| 2.0 * z[0] + 1.0,
            |_z: &[f64]| vec![2.0, 0.0],
            2.0,
            1.0,
        ));
        PenalizedProblem::new(base)
    }

    #[test]
    fn g_at_zero_and_negative() {
        assert_eq!(penalty_g(0.0).unwrap(), 0.0);
        assert_eq!(penalty_g(-5.0).unwrap(), 0.0);
    }

    #[test]
    fn g_at_one_matches_log_cosh() {
        // ln((e + 1/e)/2) evaluated in extended precision.
        assert_abs_diff_eq!(penalty_g(1.0).unwrap(), 0.433_780_830_483_027_1, epsilon = 1e-12);
    }

    #[test]
    fn g_large_argument_uses_asymptote() {
        // For large u, g(u) = u - ln 2 exactly to double precision.
        assert_abs_diff_eq!(
            penalty_g(1000.0).unwrap(),
            1000.0 - std::f64::consts::LN_2,
            epsilon = 1e-9
        );
        // No overflow far beyond the cosh limit.
        assert!(penalty_g(1e12).unwrap().is_finite());
    }

    #[test]
    fn g_rejects_non_finite() {
        assert!(penalty_g(f64::NAN).is_err());
        assert!(penalty_g(f64::INFINITY).is_err());
        assert!(penalty_g_prime(f64::NAN).is_err());
    }

    #[test]
    fn g_prime_values() {
        assert_eq!(penalty_g_prime(0.0).unwrap(), 0.0);
        assert_eq!(penalty_g_prime(-3.0).unwrap(), 0.0);
        assert_abs_diff_eq!(
            penalty_g_prime(1.0).unwrap(),
            0.761_594_155_955_764_9,
            epsilon = 1e-12
        );
    }

    #[test]
    fn g_prime_matches_finite_difference() {
        let u = 0.5;
        let h = 1e-6;
        let fd = (penalty_g(u + h).unwrap() - penalty_g(u - h).unwrap()) / (2.0 * h);
        assert_abs_diff_eq!(penalty_g_prime(u).unwrap(), fd, epsilon = 1e-6);
    }

    #[test]
    fn seam_continuity_of_g_and_g_prime() {
        let eps = 1e-9;
        assert!(penalty_g(eps).unwrap() < 1e-15);
        assert!(penalty_g_prime(eps).unwrap() < 1e-8);
    }

    #[test]
    fn penalty_value_feasible_and_violated() {
        let p = toy_two_constraint_problem();
        // Strictly feasible: 2 z0 + 1 < 0.
        assert_eq!(p.penalty_value(&[-2.0, 3.0]).unwrap(), 0.0);
        // Both constraints read c = 1 at the origin.
        let expected = 2.0 * penalty_g(1.0).unwrap();
        assert_abs_diff_eq!(p.penalty_value(&[0.0, 0.0]).unwrap(), expected, epsilon = 1e-14);
    }

    #[test]
    fn penalty_value_dimension_mismatch() {
        let p = toy_two_constraint_problem();
        assert!(matches!(
            p.penalty_value(&[0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn penalty_grad_zero_when_feasible() {
        let p = toy_two_constraint_problem();
        assert_eq!(p.penalty_grad(&[-2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn penalty_grad_chain_rule() {
        // Single constraint with c = 1, grad c = (2, 0) at the test point.
        let base = LocalProblem::new(2, |_z: &[f64]| 0.0, |_z: &[f64]| vec![0.0, 0.0])
            .with_constraint(ConstraintFn::new(
                |z: &[f64]| 2.0 * z[0] + 1.0,
                |_z: &[f64]| vec![2.0, 0.0],
                2.0,
                1.0,
            ));
        let p = PenalizedProblem::new(base);
        let g = p.penalty_grad(&[0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(g[0], 2.0 * (1.0f64).tanh(), epsilon = 1e-14);
        assert_eq!(g[1], 0.0);
    }

    #[test]
    fn penalty_grad_matches_finite_difference() {
        let p = toy_two_constraint_problem();
        let mut rng = numeric::seeded_rng(11);
        let sample_box = SampleBox::centered(2, 3.0);
        for _ in 0..100 {
            let z = sample_box.sample(&mut rng);
            let analytic = p.penalty_grad(&z).unwrap();
            let fd = numeric::central_difference_gradient(
                |x| p.penalty_value(x).unwrap(),
                &z,
                1e-6,
            );
            let err = numeric::dist(&analytic, &fd);
            assert!(
                err <= 1e-5 * numeric::norm(&analytic).max(1.0),
                "fd mismatch at {z:?}: {err}"
            );
        }
    }

    #[test]
    fn penalized_gradient_reduces_to_objective_when_feasible() {
        let p = toy_two_constraint_problem();
        let z = [-2.0, 3.0];
        let g = p.penalized_gradient(&z, 7.5).unwrap();
        assert_eq!(g, p.base().objective_grad(&z));
    }

    #[test]
    fn penalized_gradient_affine_in_r() {
        let p = toy_two_constraint_problem();
        let z = [0.3, -0.4];
        let r = 2.5;
        let g1 = p.penalized_gradient(&z, r).unwrap();
        let g2 = p.penalized_gradient(&z, 2.0 * r).unwrap();
        let psi = p.penalty_grad(&z).unwrap();
        for k in 0..2 {
            assert_abs_diff_eq!(g2[k] - g1[k], r * psi[k], epsilon = 1e-12);
        }
    }

    #[test]
    fn penalized_gradient_rejects_small_r() {
        let p = toy_two_constraint_problem();
        assert!(matches!(
            p.penalized_gradient(&[0.0, 0.0], 0.5),
            Err(Error::PenaltyParameterTooSmall { .. })
        ));
    }

    #[test]
    fn psi_norm_bounded_by_declared_bounds() {
        let p = toy_two_constraint_problem();
        let bound = p.penalty_grad_bound();
        let mut rng = numeric::seeded_rng(3);
        let sample_box = SampleBox::centered(2, 50.0);
        for _ in 0..200 {
            let z = sample_box.sample(&mut rng);
            assert!(numeric::norm(&p.penalty_grad(&z).unwrap()) <= bound + 1e-12);
        }
    }

    #[test]
    fn validators_accept_consistent_problem() {
        let p = toy_two_constraint_problem();
        let b = SampleBox::centered(2, 4.0);
        validate::check_objective_gradient(p.base(), &b, 50, 1, 1e-5).unwrap();
        validate::check_constraint_gradient_bounds(p.base(), &b, 200, 2).unwrap();
        validate::check_constraint_lipschitz(p.base(), &b, 200, 3).unwrap();
    }

    #[test]
    fn validator_rejects_wrong_gradient() {
        let base = LocalProblem::new(1, |z: &[f64]| z[0] * z[0], |_z: &[f64]| vec![1.0]);
        let b = SampleBox::centered(1, 2.0);
        assert!(validate::check_objective_gradient(&base, &b, 20, 1, 1e-5).is_err());
    }

    proptest! {
        // Convexity and monotonicity of g via its derivative, plus the
        // 1-Lipschitz property of g'.
        #[test]
        fn g_convex_nondecreasing(u in -50.0f64..50.0, v in -50.0f64..50.0, lambda in 0.0f64..1.0) {
            let (lo, hi) = if u <= v { (u, v) } else { (v, u) };
            let gl = penalty_g_prime(lo).unwrap();
            let gh = penalty_g_prime(hi).unwrap();
            prop_assert!(gl <= gh + 1e-15);
            prop_assert!(gh.abs() <= 1.0);
            prop_assert!((gh - gl).abs() <= (hi - lo) + 1e-12);
            let mid = lambda * lo + (1.0 - lambda) * hi;
            let lhs = penalty_g(mid).unwrap();
            let rhs = lambda * penalty_g(lo).unwrap() + (1.0 - lambda) * penalty_g(hi).unwrap();
            prop_assert!(lhs <= rhs + 1e-12);
        }

        // Psi vanishes exactly on the feasible set.
        #[test]
        fn penalty_value_zero_iff_feasible(z0 in -3.0f64..3.0, z1 in -3.0f64..3.0) {
            let p = toy_two_constraint_problem();
            let z = [z0, z1];
            let val = p.penalty_value(&z).unwrap();
            let feasible = p.max_violation(&z).unwrap() <= 0.0;
            prop_assert!(val >= 0.0);
            prop_assert_eq!(val == 0.0, feasible);
        }
    }
}
