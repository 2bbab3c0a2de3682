//! Step-size and penalty-parameter sequences and their certification.
//!
//! A run needs a nonincreasing step size `a_t` with divergent partial sums
//! and a penalty parameter `r_t >= 1` growing to infinity slowly enough that
//! `sum a_t^2 r_t^3 < inf` and `r_{t+1} - r_t = o(a_t)`. Those are statements
//! about infinite series, so the certifier combines finite-horizon numeric
//! heuristics with exact analytic verdicts for the built-in power-law family
//! `a_t = (t+1)^{-(0.5+b)}, r_t = max(1, (t+1)^{0.25 b})`.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::Error;
use crate::Result;

type SeqFn = Arc<dyn Fn(u64) -> f64 + Send + Sync>;

/// Which family a schedule belongs to. Analytic certification is only
/// available for `PowerLaw`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ScheduleFamily {
    PowerLaw { b: f64 },
    Custom,
}

/// The pair of sequences `(a_t, r_t)` driving a run.
#[derive(Clone)]
pub struct ParamSchedule {
    a: SeqFn,
    r: SeqFn,
    family: ScheduleFamily,
}

impl fmt::Debug for ParamSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ParamSchedule")
            .field("family", &self.family)
            .finish()
    }
}

impl ParamSchedule {
    /// Power-law schedule `a_t = (t+1)^{-(0.5+b)}, r_t = max(1, (t+1)^{0.25 b})`.
    ///
    /// The index shift by one makes the sequences defined at `t = 0`, and the
    /// clamp keeps `r_0 >= 1`. Only `0 < b < 0.4` is accepted: at `b >= 0.4`
    /// the increments `r_{t+1} - r_t` stop being `o(a_t)`, and at `b <= 0`
    /// the penalty parameter no longer grows without bound.
    pub fn power_law(b: f64) -> Result<Self> {
        if !b.is_finite() {
            return Err(Error::ScheduleRejected {
                reason: format!("power-law exponent b = {b} is not finite"),
            });
        }
        if b <= 0.0 {
            return Err(Error::ScheduleRejected {
                reason: format!(
                    "power-law b = {b} rejected: r_t = (t+1)^{{0.25b}} must grow to infinity, \
                     which requires b > 0"
                ),
            });
        }
        if b >= 0.4 {
            return Err(Error::ScheduleRejected {
                reason: format!(
                    "power-law b = {b} rejected: r_{{t+1}} - r_t = o(a_t) requires b < 0.4 \
                     (increment exponent 0.25b - 1 must stay below -(0.5 + b))"
                ),
            });
        }
        let a_exp = 0.5 + b;
        let r_exp = 0.25 * b;
        Ok(ParamSchedule {
            a: Arc::new(move |t| ((t + 1) as f64).powf(-a_exp)),
            r: Arc::new(move |t| ((t + 1) as f64).powf(r_exp).max(1.0)),
            family: ScheduleFamily::PowerLaw { b },
        })
    }

    /// Arbitrary user-supplied sequences. The caller is responsible for their
    /// soundness; [`certify_schedule`] provides numeric spot checks.
    pub fn custom(
        a: impl Fn(u64) -> f64 + Send + Sync + 'static,
        r: impl Fn(u64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        ParamSchedule {
            a: Arc::new(a),
            r: Arc::new(r),
            family: ScheduleFamily::Custom,
        }
    }

    /// Polynomial custom family `a_t = a0 (t+1)^{-a_exp}`,
    /// `r_t = max(1, r0 + r_coef (t+1)^{r_exp})`, expressible in run configs.
    pub fn poly(a0: f64, a_exp: f64, r0: f64, r_coef: f64, r_exp: f64) -> Result<Self> {
        if !(a0 >= 0.0) || !(a_exp >= 0.0) {
            return Err(Error::ScheduleRejected {
                reason: "poly schedule needs a0 >= 0 and a_exp >= 0 so a_t is nonincreasing"
                    .to_string(),
            });
        }
        if !(r_coef >= 0.0) || !(r_exp >= 0.0) {
            return Err(Error::ScheduleRejected {
                reason: "poly schedule needs r_coef >= 0 and r_exp >= 0 so r_t is nondecreasing"
                    .to_string(),
            });
        }
        Ok(ParamSchedule {
            a: Arc::new(move |t| a0 * ((t + 1) as f64).powf(-a_exp)),
            r: Arc::new(move |t| (r0 + r_coef * ((t + 1) as f64).powf(r_exp)).max(1.0)),
            family: ScheduleFamily::Custom,
        })
    }

    pub fn a(&self, t: u64) -> f64 {
        (self.a)(t)
    }

    pub fn r(&self, t: u64) -> f64 {
        (self.r)(t)
    }

    pub fn family(&self) -> ScheduleFamily {
        self.family
    }
}

/// Tolerances for the numeric certification heuristics.
#[derive(Debug, Clone, Serialize)]
pub struct CertifyOptions {
    /// Upper bound on the last-decade max of `(r_{t+1} - r_t) / a_t`.
    pub ratio_tol: f64,
    /// Floor the last-decade partial sum of `a_t` must exceed for the
    /// divergence heuristic.
    pub divergence_floor: f64,
    /// Upper bound on `t * a_t^2 r_t^3` at the horizon for the summability
    /// heuristic.
    pub summability_tol: f64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions {
            ratio_tol: 0.05,
            divergence_floor: 0.01,
            summability_tol: 0.5,
        }
    }
}

/// Certification verdicts for a schedule over a finite horizon.
///
/// The four numeric verdicts are heuristics; `analytic` carries the exact
/// verdict for the power-law family and is authoritative when present.
#[derive(Debug, Clone, Serialize)]
pub struct CertReport {
    pub horizon: u64,
    /// (i) `a_t` nonincreasing over the horizon.
    pub monotone_nonincreasing_a: bool,
    /// (ii) partial sums of `a_t` still growing at the horizon.
    pub divergent_a: bool,
    /// (iii) tail of `a_t^2 r_t^3` summable.
    pub summable_a2r3: bool,
    /// (iv) `(r_{t+1} - r_t)/a_t -> 0`.
    pub ratio_vanishes: bool,
    /// `r_t >= 1` everywhere on the horizon.
    pub r_at_least_one: bool,
    /// Last-decade max of the `o(a_t)` ratio.
    pub max_ratio_last_decade: f64,
    /// Last-decade partial sum of `a_t`.
    pub last_decade_sum_a: f64,
    /// `t * a_t^2 r_t^3` at the horizon.
    pub weighted_tail_term: f64,
    /// Exact power-law verdict, when the family permits one.
    pub analytic: Option<AnalyticVerdict>,
    /// Overall verdict: analytic when available, else the conjunction of the
    /// numeric verdicts.
    pub pass: bool,
}

/// Exact verdict for `a_t = (t+1)^{-(0.5+b)}, r_t = max(1, (t+1)^{0.25 b})`.
#[derive(Debug, Clone, Serialize)]
pub struct AnalyticVerdict {
    pub b: f64,
    /// `sum a_t` diverges iff `0.5 + b <= 1`.
    pub divergent_a: bool,
    /// `sum a_t^2 r_t^3` converges iff `2(0.5+b) - 0.75b > 1`, i.e. `1.25 b > 0`.
    pub summable_a2r3: bool,
    /// `r_{t+1} - r_t = o(a_t)` iff `0.25b - 1 < -(0.5 + b)`, i.e. `b < 0.4`.
    pub ratio_vanishes: bool,
    pub pass: bool,
}

impl AnalyticVerdict {
    fn for_power_law(b: f64) -> Self {
        let divergent_a = 0.5 + b <= 1.0;
        let summable_a2r3 = 1.25 * b > 0.0;
        let ratio_vanishes = b < 0.4;
        AnalyticVerdict {
            b,
            divergent_a,
            summable_a2r3,
            ratio_vanishes,
            pass: divergent_a && summable_a2r3 && ratio_vanishes && b > 0.0,
        }
    }
}

/// Certify a schedule over `horizon` rounds (at least 1000).
pub fn certify_schedule(s: &ParamSchedule, horizon: u64) -> CertReport {
    certify_schedule_with(s, horizon, &CertifyOptions::default())
}

pub fn certify_schedule_with(
    s: &ParamSchedule,
    horizon: u64,
    opts: &CertifyOptions,
) -> CertReport {
    assert!(horizon >= 1000, "certification horizon must be >= 1000");
    let decade_start = horizon / 10;

    let mut monotone = true;
    let mut r_ok = true;
    let mut last_decade_sum_a = 0.0;
    let mut max_ratio = 0.0f64;
    let mut prev_a = s.a(0);
    let mut prev_r = s.r(0);
    if prev_r < 1.0 {
        r_ok = false;
    }

    for t in 1..=horizon {
        let at = s.a(t);
        let rt = s.r(t);
        if at > prev_a * (1.0 + 1e-12) {
            monotone = false;
        }
        if rt < 1.0 {
            r_ok = false;
        }
        if t >= decade_start {
            last_decade_sum_a += prev_a;
            let dr = rt - prev_r;
            let ratio = if dr == 0.0 {
                0.0
            } else if prev_a == 0.0 {
                f64::INFINITY
            } else {
                dr / prev_a
            };
            max_ratio = max_ratio.max(ratio);
        }
        prev_a = at;
        prev_r = rt;
    }

    // Summability heuristic: for a convergent sum the weighted increment
    // t * a_t^2 r_t^3 must decay; sample it at the decade boundary and the
    // horizon.
    let term_at = |t: u64| {
        let a = s.a(t);
        let r = s.r(t);
        (t as f64) * a * a * r * r * r
    };
    let w_start = term_at(decade_start.max(1));
    let w_end = term_at(horizon);
    let summable = w_end < opts.summability_tol && w_end <= w_start * (1.0 + 1e-9);

    let divergent = last_decade_sum_a >= opts.divergence_floor;
    let ratio_vanishes = max_ratio < opts.ratio_tol;

    let analytic = match s.family {
        ScheduleFamily::PowerLaw { b } => Some(AnalyticVerdict::for_power_law(b)),
        ScheduleFamily::Custom => None,
    };

    let numeric_pass = monotone && divergent && summable && ratio_vanishes && r_ok;
    let pass = match &analytic {
        Some(v) => v.pass,
        None => numeric_pass,
    };

    CertReport {
        horizon,
        monotone_nonincreasing_a: monotone,
        divergent_a: divergent,
        summable_a2r3: summable,
        ratio_vanishes,
        r_at_least_one: r_ok,
        max_ratio_last_decade: max_ratio,
        last_decade_sum_a,
        weighted_tail_term: w_end,
        analytic,
        pass,
    }
}

impl CertReport {
    /// Human-readable list of the clauses that failed.
    pub fn failed_clauses(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if !self.monotone_nonincreasing_a {
            out.push("(i) a_t must be nonincreasing");
        }
        if !self.divergent_a {
            out.push("(ii) sum of a_t must diverge");
        }
        if !self.summable_a2r3 {
            out.push("(iii) sum of a_t^2 r_t^3 must converge");
        }
        if !self.ratio_vanishes {
            out.push("(iv) r_{t+1} - r_t must be o(a_t)");
        }
        if !self.r_at_least_one {
            out.push("r_t must stay >= 1");
        }
        out
    }
}
