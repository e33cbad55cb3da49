//! Closed-form moments of the inverse stable subordinator `E_t`.
//!
//! `E[E_t^p] = Γ(p+1)/Γ(αp+1) t^{αp}` for real p ≥ 0, and the exponential
//! moments are the series
//! `E[exp(ξ E_t^r)] = Σ_k ξ^k/k! Γ(rk+1)/Γ(αrk+1) t^{αrk}`, finite for
//! `r < 1/(1-α)` and infinite for `r > 1/(1-α)`. With r = 1 the series is
//! the Mittag-Leffler function `E_α(ξ t^α)`.
//!
//! Series terms are formed in double-double precision from a Stirling ln Γ
//! and summed in double-double, so cancellation for negative arguments costs
//! nothing until it exceeds about 16 digits; beyond that the evaluation
//! fails with [`Error::SeriesDomain`] rather than returning a wrong value.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::special::{gamma_ratio, ln_gamma_dd, Dd};

/// `Γ(p+1)/Γ(αp+1) · t^{αp}`.
pub fn moment_oracle(alpha: f64, p: f64, t: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("alpha must lie in (0,1), got {alpha}")));
    }
    if !(p >= 0.0 && p.is_finite()) {
        return Err(Error::domain(format!("moment order must be nonnegative, got {p}")));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::domain(format!("time must be nonnegative, got {t}")));
    }
    if p == 0.0 {
        return Ok(1.0);
    }
    Ok(gamma_ratio(p + 1.0, alpha * p + 1.0) * t.powf(alpha * p))
}

/// Bound on `E|E_t - E_s|^p`: the same gamma ratio times `|t-s|^{pα}`.
pub fn increment_moment_oracle(alpha: f64, p: f64, s: f64, t: f64) -> Result<f64> {
    moment_oracle(alpha, p, (t - s).abs())
}

/// Controls for the extended-precision series.
#[derive(Clone, Copy, Debug)]
pub struct SeriesOptions {
    /// Stop once three consecutive terms are below `rel_tol · |partial sum|`.
    pub rel_tol: f64,
    pub max_terms: usize,
    /// Largest |z| accepted by [`mittag_leffler`].
    pub max_abs_z: f64,
    /// Largest estimated relative error accepted after cancellation.
    pub max_rel_error: f64,
}

impl Default for SeriesOptions {
    fn default() -> Self {
        Self { rel_tol: 1e-20, max_terms: 100_000, max_abs_z: 50.0, max_rel_error: 1e-12 }
    }
}

// double-double terms carry ~1e-30 relative error including the ln Γ step
const TERM_REL_ERROR: f64 = 1e-29;

struct SeriesSum {
    sum: Dd,
    terms: usize,
    last: f64,
    prev: f64,
}

/// Sums `sign(k) · exp(log_mag(k))` from k = 0 in double-double.
fn sum_series(
    argument: f64,
    opts: &SeriesOptions,
    stop_at: Option<usize>,
    mut log_mag: impl FnMut(usize) -> Dd,
    sign: impl Fn(usize) -> f64,
) -> Result<SeriesSum> {
    let mut sum = Dd::ZERO;
    let mut abs_sum = 0.0f64;
    let mut small_run = 0;
    let (mut last, mut prev) = (0.0, 0.0);
    let mut k = 0;
    loop {
        if let Some(kmax) = stop_at {
            if k > kmax {
                break;
            }
        } else if k > opts.max_terms {
            return Err(Error::SeriesDomain {
                argument,
                reason: format!("no convergence within {} terms", opts.max_terms),
            });
        }
        let lm = log_mag(k);
        if lm.hi > 709.0 {
            return Err(Error::SeriesDomain { argument, reason: "series terms overflow f64".into() });
        }
        let term = lm.exp() * sign(k);
        sum = sum + term;
        let mag = term.hi.abs();
        abs_sum += mag;
        prev = last;
        last = term.hi;
        k += 1;
        if mag < opts.rel_tol * sum.hi.abs() {
            small_run += 1;
            if small_run >= 3 {
                break;
            }
        } else {
            small_run = 0;
        }
    }
    let value = sum.to_f64();
    if !value.is_finite() {
        return Err(Error::SeriesDomain { argument, reason: "sum overflows f64".into() });
    }
    let est = if value == 0.0 { f64::INFINITY } else { TERM_REL_ERROR * abs_sum / value.abs() };
    if est > opts.max_rel_error {
        return Err(Error::SeriesDomain {
            argument,
            reason: format!("cancellation leaves estimated relative error {est:e}"),
        });
    }
    Ok(SeriesSum { sum, terms: k, last, prev })
}

/// Mittag-Leffler function `E_α(z) = Σ z^k / Γ(αk+1)` with default options.
pub fn mittag_leffler(alpha: f64, z: f64) -> Result<f64> {
    mittag_leffler_with(alpha, z, &SeriesOptions::default())
}

pub fn mittag_leffler_with(alpha: f64, z: f64, opts: &SeriesOptions) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::domain(format!("alpha must lie in (0,1], got {alpha}")));
    }
    if !z.is_finite() || z.abs() > opts.max_abs_z {
        return Err(Error::SeriesDomain {
            argument: z,
            reason: format!("|z| exceeds the series domain {}", opts.max_abs_z),
        });
    }
    if z == 0.0 {
        return Ok(1.0);
    }
    let ln_z = Dd::new(z.abs()).ln();
    let negative = z < 0.0;
    let s = sum_series(
        z,
        opts,
        None,
        |k| {
            if k == 0 {
                return Dd::ZERO;
            }
            ln_z * (k as f64) - ln_gamma_dd(Dd::product(alpha, k as f64) + 1.0)
        },
        |k| if negative && k % 2 == 1 { -1.0 } else { 1.0 },
    )?;
    Ok(s.sum.to_f64())
}

/// Partial sum of the exponential-moment series with its diagnostics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExpMomentSum {
    pub value: f64,
    /// Number of terms actually added (k = 0..terms-1).
    pub terms: usize,
    /// Ratio of the last two terms.
    pub last_term_ratio: f64,
    /// Last term relative to the partial sum.
    pub last_term_rel: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum ExpMoment {
    Finite(ExpMomentSum),
    /// `r > 1/(1-α)`: the moment is infinite.
    Divergent,
    /// `r = 1/(1-α)`: not settled by the finiteness criterion.
    Indeterminate,
}

impl ExpMoment {
    pub fn value(&self) -> Option<f64> {
        match self {
            ExpMoment::Finite(s) => Some(s.value),
            _ => None,
        }
    }
}

/// `E[exp(ξ E_t^r)]` as the partial sum up to `k_max`, or a divergence flag.
///
/// Summation may end before `k_max` once terms fall below double-double
/// resolution; `terms` reports how many were used.
pub fn exp_moment_power(alpha: f64, xi: f64, r: f64, t: f64, k_max: usize) -> Result<ExpMoment> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("alpha must lie in (0,1), got {alpha}")));
    }
    for (name, v) in [("xi", xi), ("r", r), ("t", t)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::domain(format!("{name} must be positive, got {v}")));
        }
    }
    let threshold = 1.0 / (1.0 - alpha);
    if r > threshold {
        return Ok(ExpMoment::Divergent);
    }
    if r == threshold {
        return Ok(ExpMoment::Indeterminate);
    }
    let ln_xi = Dd::new(xi).ln();
    let ln_t = Dd::new(t).ln();
    let alpha_r = Dd::product(alpha, r);
    let opts = SeriesOptions { rel_tol: 1e-30, ..SeriesOptions::default() };
    let argument = xi * t.powf(alpha * r);
    let s = sum_series(
        argument,
        &opts,
        Some(k_max),
        |k| {
            if k == 0 {
                return Dd::ZERO;
            }
            let kf = k as f64;
            let rk = Dd::product(r, kf);
            let ark = alpha_r * kf;
            ln_xi * kf - ln_gamma_dd(Dd::new(kf) + 1.0) + ln_gamma_dd(rk + 1.0) - ln_gamma_dd(ark + 1.0)
                + ark * ln_t
        },
        |_| 1.0,
    )?;
    let value = s.sum.to_f64();
    Ok(ExpMoment::Finite(ExpMomentSum {
        value,
        terms: s.terms,
        last_term_ratio: if s.prev != 0.0 { s.last / s.prev } else { f64::NAN },
        last_term_rel: s.last / value,
    }))
}
