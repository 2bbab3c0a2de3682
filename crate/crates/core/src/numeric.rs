//! Small dense-vector helpers and finite-difference utilities shared by the
//! solvers, the validators, and the test suites.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Euclidean norm.
pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Max-norm.
pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Euclidean distance between two equally sized vectors.
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// `out += s * v`
pub fn axpy(out: &mut [f64], s: f64, v: &[f64]) {
    debug_assert_eq!(out.len(), v.len());
    for (o, x) in out.iter_mut().zip(v) {
        *o += s * x;
    }
}

/// Elementwise mean of a family of vectors.
pub fn mean_vector(vs: &[Vec<f64>]) -> Vec<f64> {
    assert!(!vs.is_empty());
    let d = vs[0].len();
    let mut out = vec![0.0; d];
    for v in vs {
        axpy(&mut out, 1.0, v);
    }
    let n = vs.len() as f64;
    for o in &mut out {
        *o /= n;
    }
    out
}

pub fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Central-difference gradient of `f` at `z` with step `h`.
pub fn central_difference_gradient<F: Fn(&[f64]) -> f64>(f: F, z: &[f64], h: f64) -> Vec<f64> {
    let mut grad = vec![0.0; z.len()];
    let mut probe = z.to_vec();
    for k in 0..z.len() {
        let orig = probe[k];
        probe[k] = orig + h;
        let fp = f(&probe);
        probe[k] = orig - h;
        let fm = f(&probe);
        probe[k] = orig;
        grad[k] = (fp - fm) / (2.0 * h);
    }
    grad
}

/// Axis-aligned box used to sample test points for gradient and bound checks.
#[derive(Debug, Clone)]
pub struct SampleBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl SampleBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        assert_eq!(lo.len(), hi.len());
        assert!(lo.iter().zip(&hi).all(|(l, h)| l <= h));
        SampleBox { lo, hi }
    }

    /// Cube `[-half, half]^dim`.
    pub fn centered(dim: usize, half: f64) -> Self {
        SampleBox {
            lo: vec![-half; dim],
            hi: vec![half; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(&l, &h)| if l == h { l } else { rng.gen_range(l..h) })
            .collect()
    }
}

/// Deterministic RNG for sampling-based checks.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fd_gradient_of_quadratic() {
        let f = |z: &[f64]| z[0] * z[0] + 3.0 * z[1];
        let g = central_difference_gradient(f, &[2.0, -1.0], 1e-6);
        assert!((g[0] - 4.0).abs() < 1e-8);
        assert!((g[1] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn sample_stays_in_box() {
        let b = SampleBox::new(vec![-1.0, 0.0], vec![1.0, 2.0]);
        let mut rng = seeded_rng(7);
        for _ in 0..100 {
            let p = b.sample(&mut rng);
            assert!(p[0] >= -1.0 && p[0] <= 1.0);
            assert!(p[1] >= 0.0 && p[1] <= 2.0);
        }
    }
}
