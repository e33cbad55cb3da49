//! Coupled multi-level strong errors, empirical order fits, and Monte Carlo
//! validators for the moment formulas and bounds.
//!
//! A coupled family is driven by one realization at the reference step:
//! stable increments, Gaussian increments and jump batches. A level with
//! step `M·δ_ref` subsamples the clock values, sums each window of `M`
//! Gaussian increments and concatenates the `M` jump batches, so all levels
//! see the same `(D, B∘E, N)`.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::models::CoefficientModel;
use crate::noise::NoisePanel;
use crate::par::{map_chunks, Moments, CHUNK};
use crate::rng::{derive, Label};
use crate::schemes::{st_path, SchemePath, ThetaConfig};
use crate::subordinator::{
    generate_path_with, mittag_leffler, moment_oracle, sample_clock_values, StableSpec, SubordinatorPath,
    DEFAULT_STEP_CAP,
};

/// Step sizes of a strong-error experiment: measured levels from coarse to
/// fine, and the reference step that stands in for the exact solution.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelLadder {
    reference: f64,
    levels: Vec<f64>,
    strides: Vec<usize>,
}

impl LevelLadder {
    pub fn new(reference: f64, levels: Vec<f64>) -> Result<Self> {
        if !(reference > 0.0 && reference < 1.0) {
            return Err(Error::domain(format!("reference step must lie in (0,1), got {reference}")));
        }
        if levels.len() < 3 {
            return Err(Error::domain("a ladder needs at least three levels"));
        }
        let mut strides = Vec::with_capacity(levels.len());
        for &d in &levels {
            let ratio = (d / reference).round();
            let m = ratio as usize;
            if !(d < 1.0) || m < 2 || !m.is_power_of_two() || ratio * reference != d {
                return Err(Error::domain(format!(
                    "level {d} is not a power-of-two multiple (>= 2) of the reference {reference}"
                )));
            }
            if let Some(&prev) = strides.last() {
                if m >= prev {
                    return Err(Error::domain("levels must be listed from coarse to fine"));
                }
            }
            strides.push(m);
        }
        Ok(Self { reference, levels, strides })
    }

    /// Levels `2^-coarsest, ..., 2^-finest` with reference `2^-reference`.
    pub fn powers_of_two(coarsest: u32, finest: u32, reference: u32) -> Result<Self> {
        if !(coarsest <= finest && finest < reference && reference < 1000) {
            return Err(Error::domain(format!(
                "need coarsest <= finest < reference exponents, got {coarsest}, {finest}, {reference}"
            )));
        }
        let levels = (coarsest..=finest).map(|k| 2f64.powi(-(k as i32))).collect();
        Self::new(2f64.powi(-(reference as i32)), levels)
    }

    pub fn reference(&self) -> f64 {
        self.reference
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// Level step over reference step, per level.
    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    /// Every step of the ladder must lie below δ* of the model.
    pub fn validate_for<M: CoefficientModel + ?Sized>(&self, model: &M, theta: f64) -> Result<()> {
        for &d in self.levels.iter().chain([self.reference].iter()) {
            ThetaConfig::new(theta, d)?.validate_for(model)?;
        }
        Ok(())
    }
}

impl Default for LevelLadder {
    fn default() -> Self {
        Self::powers_of_two(4, 8, 10).expect("default ladder is valid")
    }
}

/// One level of a coupled family.
#[derive(Clone, Debug)]
pub struct CoupledLevel {
    pub delta: f64,
    pub stride: usize,
    pub clock: SubordinatorPath,
    pub noise: NoisePanel,
    pub path: SchemePath,
}

/// Levels from coarse to fine; the last entry is the reference level.
#[derive(Clone, Debug)]
pub struct CoupledFamily {
    /// Clock values of the shared driver, extended to a multiple of the
    /// coarsest stride.
    pub driver_clock: Vec<f64>,
    /// Reference-step noise of the shared driver over the extended clock.
    pub driver_noise: NoisePanel,
    pub levels: Vec<CoupledLevel>,
}

impl CoupledFamily {
    pub fn reference(&self) -> &CoupledLevel {
        self.levels.last().expect("family has a reference level")
    }
}

fn aggregate(
    spec: &StableSpec,
    values: &[f64],
    fine: &NoisePanel,
    stride: usize,
    delta: f64,
) -> Result<(SubordinatorPath, NoisePanel)> {
    let t = spec.horizon();
    let mut sub: Vec<f64> = Vec::with_capacity(values.len() / stride + 1);
    for &d in values.iter().step_by(stride) {
        sub.push(d);
        if d > t {
            break;
        }
    }
    let clock = SubordinatorPath::from_values(spec.with_delta(delta)?, sub)?;
    let n = clock.n_steps();
    let mut gauss = Vec::with_capacity(n);
    let mut jumps = Vec::with_capacity(n);
    for k in 0..n {
        let window = k * stride..(k + 1) * stride;
        gauss.push(fine.gauss()[window.clone()].iter().fold(0.0, |s, &g| s + g));
        jumps.push(fine.jumps()[window].concat());
    }
    Ok((clock, NoisePanel::new(delta, gauss, jumps)?))
}

/// Simulates every level of `ladder` on one shared driver for replication
/// `path_index`.
pub fn coupled_simulation<M: CoefficientModel + ?Sized>(
    model: &M,
    alpha: f64,
    horizon: f64,
    ladder: &LevelLadder,
    scheme: &ThetaConfig,
    master_seed: u64,
    path_index: u64,
) -> Result<CoupledFamily> {
    let spec = StableSpec::new(alpha, ladder.reference(), horizon)?;
    let coarsest = ladder.strides()[0];
    let values = sample_clock_values(
        &spec,
        &mut derive(master_seed, path_index, Label::Stable),
        DEFAULT_STEP_CAP,
        coarsest,
    )?;
    let fine = NoisePanel::generate(values.len() - 1, ladder.reference(), model.jump_measure(), master_seed, path_index)?;
    let mut levels = Vec::with_capacity(ladder.levels().len() + 1);
    let steps = ladder.levels().iter().zip(ladder.strides()).map(|(&d, &m)| (d, m));
    for (delta, stride) in steps.chain([(ladder.reference(), 1)]) {
        let (clock, noise) = aggregate(&spec, &values, &fine, stride, delta)?;
        let cfg = scheme.with_delta(delta)?;
        let path = st_path(model, &clock, &noise, &cfg)?;
        levels.push(CoupledLevel { delta, stride, clock, noise, path });
    }
    Ok(CoupledFamily { driver_clock: values, driver_noise: fine, levels })
}

/// How the pathwise sup of `|X̃^coarse_t - X̃^ref_t|` over `[0, T]` is taken.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorFunctional {
    /// Over all reference grid times. Both paths are left-constant with
    /// jumps only at reference grid times, so this is the sup over `[0, T]`.
    Union,
    /// Over the coarse grid times only.
    CoarseGrid,
}

/// Pathwise sup distance between a level and the reference level.
pub fn path_error(level: &CoupledLevel, reference: &CoupledLevel, functional: ErrorFunctional) -> f64 {
    let coarse = &level.path.st_values;
    let fine = &reference.path.st_values;
    match functional {
        ErrorFunctional::Union => fine
            .iter()
            .enumerate()
            .fold(0.0, |m: f64, (j, &xf)| m.max((coarse[j / level.stride] - xf).abs())),
        ErrorFunctional::CoarseGrid => coarse
            .iter()
            .enumerate()
            .fold(0.0, |m: f64, (k, &xc)| m.max((xc - fine[k * level.stride]).abs())),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StrongErrorConfig {
    pub alpha: f64,
    pub horizon: f64,
    pub theta: f64,
    pub n_paths: usize,
    pub master_seed: u64,
    pub ladder: LevelLadder,
    pub functional: ErrorFunctional,
    /// Largest tolerated fraction of failed paths.
    pub max_failure_rate: f64,
    pub solver_tol: f64,
    pub solver_max_iter: usize,
}

impl StrongErrorConfig {
    pub fn new(alpha: f64, horizon: f64, theta: f64, n_paths: usize, master_seed: u64) -> Self {
        Self {
            alpha,
            horizon,
            theta,
            n_paths,
            master_seed,
            ladder: LevelLadder::default(),
            functional: ErrorFunctional::Union,
            max_failure_rate: 1e-3,
            solver_tol: 1e-12,
            solver_max_iter: 100,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LevelError {
    pub delta: f64,
    pub error: f64,
    pub std_error: f64,
    pub n_paths: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OrderFit {
    pub slope: f64,
    pub intercept: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub r2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StrongErrorReport {
    pub reference_delta: f64,
    pub levels: Vec<LevelError>,
    /// `None` when every error vanishes.
    pub fit: Option<OrderFit>,
    pub degenerate: bool,
    pub predicted_order: f64,
    pub binding_exponent: String,
    pub failed_paths: usize,
    pub warnings: Vec<String>,
}

impl StrongErrorReport {
    pub fn fitted_order(&self) -> Option<f64> {
        self.fit.map(|f| f.slope)
    }

    /// `|fitted - predicted| <= tolerance`; `None` for degenerate runs.
    pub fn within(&self, tolerance: f64) -> Option<bool> {
        self.fit.map(|f| (f.slope - self.predicted_order).abs() <= tolerance)
    }

    /// CSV with columns `delta,error,std_error,n_paths`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("delta,error,std_error,n_paths\n");
        for l in &self.levels {
            out.push_str(&format!("{:?},{:?},{:?},{}\n", l.delta, l.error, l.std_error, l.n_paths));
        }
        out
    }
}

/// Monte Carlo estimate of `E[sup_t |X̃^δ_t - X̃^ref_t|]` per ladder level
/// and the fitted order.
///
/// Paths whose implicit solve fails are excluded and counted; the run aborts
/// when more than `max_failure_rate` of them fail.
pub fn strong_error<M: CoefficientModel + ?Sized>(model: &M, cfg: &StrongErrorConfig) -> Result<StrongErrorReport> {
    if cfg.n_paths == 0 {
        return Err(Error::domain("n_paths must be at least 1"));
    }
    let scheme = ThetaConfig::new(cfg.theta, cfg.ladder.reference())?.with_solver(cfg.solver_tol, cfg.solver_max_iter)?;
    cfg.ladder.validate_for(model, cfg.theta)?;
    let mut warnings = Vec::new();
    if !(cfg.alpha > 0.5 && cfg.alpha < 1.0) {
        warnings.push(format!("alpha = {} is outside (1/2, 1), where the order result is stated", cfg.alpha));
    }
    if !(0.5..=1.0).contains(&cfg.theta) {
        warnings.push(format!("theta = {} is outside [1/2, 1], where the order result is stated", cfg.theta));
    }
    let n_levels = cfg.ladder.levels().len();
    let chunks = map_chunks(cfg.n_paths, CHUNK, |range| -> Result<(Vec<Moments>, usize)> {
        let mut acc = vec![Moments::default(); n_levels];
        let mut failed = 0;
        for i in range {
            match coupled_simulation(model, cfg.alpha, cfg.horizon, &cfg.ladder, &scheme, cfg.master_seed, i as u64) {
                Ok(family) => {
                    let reference = family.reference();
                    for (k, level) in family.levels[..n_levels].iter().enumerate() {
                        acc[k].push(path_error(level, reference, cfg.functional));
                    }
                }
                Err(Error::Solver { .. }) => failed += 1,
                Err(e) => return Err(e),
            }
        }
        Ok((acc, failed))
    });
    let mut acc = vec![Moments::default(); n_levels];
    let mut failed = 0;
    for chunk in chunks {
        let (a, f) = chunk?;
        for (total, part) in acc.iter_mut().zip(&a) {
            total.merge(part);
        }
        failed += f;
    }
    if failed as f64 > cfg.max_failure_rate * cfg.n_paths as f64 {
        return Err(Error::TooManyFailures { failed, total: cfg.n_paths });
    }
    if failed > 0 {
        warnings.push(format!("{failed} of {} paths failed in the implicit solve and were excluded", cfg.n_paths));
    }
    let levels: Vec<LevelError> = cfg
        .ladder
        .levels()
        .iter()
        .zip(&acc)
        .map(|(&delta, m)| LevelError { delta, error: m.mean(), std_error: m.std_error(), n_paths: m.n })
        .collect();
    let degenerate = levels.iter().any(|l| !(l.error > 0.0));
    let fit = if degenerate {
        None
    } else {
        let points: Vec<(f64, f64, f64)> = levels.iter().map(|l| (l.delta, l.error, l.std_error)).collect();
        Some(fit_order(&points)?)
    };
    let (predicted_order, binding) = model.constants().predicted_order(cfg.alpha);
    Ok(StrongErrorReport {
        reference_delta: cfg.ladder.reference(),
        levels,
        fit,
        degenerate,
        predicted_order,
        binding_exponent: binding.to_string(),
        failed_paths: failed,
        warnings,
    })
}

/// Weighted least squares of `ln error` on `ln δ` with weights
/// `(error/std_error)²` (unit weights if some standard error is zero),
/// with a 95% Student-t interval for the slope.
pub fn fit_order(points: &[(f64, f64, f64)]) -> Result<OrderFit> {
    if points.len() < 3 {
        return Err(Error::domain("an order fit needs at least three points"));
    }
    if let Some(p) = points.iter().find(|p| !(p.0 > 0.0 && p.1 > 0.0 && p.1.is_finite())) {
        return Err(Error::domain(format!("order fit needs positive errors and steps, got {p:?}")));
    }
    let unit = points.iter().any(|p| !(p.2 > 0.0 && p.2.is_finite()));
    let data: Vec<(f64, f64, f64)> = points
        .iter()
        .map(|&(d, e, se)| (d.ln(), e.ln(), if unit { 1.0 } else { (e / se).powi(2) }))
        .collect();
    let sw: f64 = data.iter().map(|p| p.2).sum();
    let xm = data.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let ym = data.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxx: f64 = data.iter().map(|p| p.2 * (p.0 - xm).powi(2)).sum();
    let sxy: f64 = data.iter().map(|p| p.2 * (p.0 - xm) * (p.1 - ym)).sum();
    let syy: f64 = data.iter().map(|p| p.2 * (p.1 - ym).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::domain("order fit needs at least two distinct steps"));
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let rss: f64 = data.iter().map(|p| p.2 * (p.1 - intercept - slope * p.0).powi(2)).sum();
    let df = (data.len() - 2) as f64;
    let se = (rss / df / sxx).sqrt();
    let q = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::domain(e.to_string()))?.inverse_cdf(0.975);
    let r2 = if syy > 0.0 { 1.0 - rss / syy } else { 1.0 };
    Ok(OrderFit { slope, intercept, ci_low: slope - q * se, ci_high: slope + q * se, r2 })
}

/// Monte Carlo moment of `Ẽ_t` against the closed form.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MomentCheck {
    pub p: f64,
    pub oracle: f64,
    pub estimate: f64,
    pub std_error: f64,
    /// Largest downward bias of `E[Ẽ_t^p]` allowed by `Ẽ ∈ [E - δ, E]`.
    pub bias: f64,
    pub z_score: f64,
    pub pass: bool,
}

impl MomentCheck {
    fn judge(p: f64, oracle: f64, estimate: f64, std_error: f64, bias: f64) -> Self {
        let z_score = if std_error > 0.0 { (estimate - oracle) / std_error } else if estimate == oracle { 0.0 } else { f64::INFINITY.copysign(estimate - oracle) };
        let pass = estimate >= oracle - bias - 3.0 * std_error && estimate <= oracle + 3.0 * std_error;
        Self { p, oracle, estimate, std_error, bias, z_score, pass }
    }

    /// The same check against `scale · oracle`.
    pub fn rescaled(&self, scale: f64) -> Self {
        Self::judge(self.p, scale * self.oracle, self.estimate, self.std_error, self.bias)
    }
}

/// `p δ E[E_t^{p-1}]` for p ≥ 1 and `δ^p` for p < 1.
pub fn sandwich_bias(alpha: f64, p: f64, t: f64, delta: f64) -> Result<f64> {
    if p == 0.0 {
        Ok(0.0)
    } else if p >= 1.0 {
        Ok(p * delta * moment_oracle(alpha, p - 1.0, t)?)
    } else {
        Ok(delta.powf(p))
    }
}

/// Moments of `Ẽ_t` over `n_paths` replications.
pub fn validate_inverse_moments(
    alpha: f64,
    t: f64,
    p_list: &[f64],
    n_paths: usize,
    delta: f64,
    seed: u64,
) -> Result<Vec<MomentCheck>> {
    let spec = StableSpec::new(alpha, delta, t)?;
    for &p in p_list {
        moment_oracle(alpha, p, t)?;
    }
    let np = p_list.len();
    let chunks = map_chunks(n_paths, CHUNK, |range| -> Result<Vec<Moments>> {
        let mut acc = vec![Moments::default(); np];
        for i in range {
            let path = generate_path_with(spec, &mut derive(seed, i as u64, Label::Stable), DEFAULT_STEP_CAP)?;
            let e = path.inverse_at(t)?;
            for (m, &p) in acc.iter_mut().zip(p_list) {
                m.push(if p == 0.0 { 1.0 } else { e.powf(p) });
            }
        }
        Ok(acc)
    });
    let mut acc = vec![Moments::default(); np];
    for chunk in chunks {
        for (total, part) in acc.iter_mut().zip(&chunk?) {
            total.merge(part);
        }
    }
    p_list
        .iter()
        .zip(&acc)
        .map(|(&p, m)| {
            Ok(MomentCheck::judge(p, moment_oracle(alpha, p, t)?, m.mean(), m.std_error(), sandwich_bias(alpha, p, t, delta)?))
        })
        .collect()
}

/// Per-replication ST path on a fresh clock of step `delta` and horizon `t`.
fn single_path<M: CoefficientModel + ?Sized>(
    model: &M,
    spec: StableSpec,
    scheme: &ThetaConfig,
    seed: u64,
    index: u64,
) -> Result<SchemePath> {
    let clock = generate_path_with(spec, &mut derive(seed, index, Label::Stable), DEFAULT_STEP_CAP)?;
    let noise = NoisePanel::generate(clock.n_steps(), spec.delta(), model.jump_measure(), seed, index)?;
    st_path(model, &clock, &noise, scheme)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundCheck {
    /// Monte Carlo `E|X̃_t|^{2h}`.
    pub estimate: f64,
    pub std_error: f64,
    /// `(2hK₁ + λK₀) t^α`
    pub series_argument: f64,
    /// `2^{h-1} E_α((2hK₁ + λK₀) t^α) (1 + |x₀|^{2h})`
    pub bound: f64,
    pub pass: bool,
}

impl BoundCheck {
    /// The same check against `scale · bound`.
    pub fn rescaled(&self, scale: f64) -> Self {
        let bound = scale * self.bound;
        Self { bound, pass: self.estimate <= bound + 3.0 * self.std_error, ..*self }
    }
}

/// One-sided check of the `2h`-th moment of the solution at time `t`
/// against its Mittag-Leffler bound, with the ST path at step `delta` as
/// the proxy for the solution.
pub fn validate_solution_moment_bound<M: CoefficientModel + ?Sized>(
    model: &M,
    alpha: f64,
    t: f64,
    n_paths: usize,
    scheme: &ThetaConfig,
    seed: u64,
) -> Result<BoundCheck> {
    scheme.validate_for(model)?;
    let c = model.constants();
    let lambda = model.jump_measure().lambda;
    let series_argument = (2.0 * c.h * c.k1 + lambda * c.k0) * t.powf(alpha);
    let ml = mittag_leffler(alpha, series_argument)?;
    let bound = 2f64.powf(c.h - 1.0) * ml * (1.0 + model.x0().abs().powf(2.0 * c.h));
    let spec = StableSpec::new(alpha, scheme.delta, t)?;
    let chunks = map_chunks(n_paths, CHUNK, |range| -> Result<Moments> {
        let mut m = Moments::default();
        for i in range {
            let path = single_path(model, spec, scheme, seed, i as u64)?;
            m.push(path.final_value().abs().powf(2.0 * c.h));
        }
        Ok(m)
    });
    let mut m = Moments::default();
    for chunk in chunks {
        m.merge(&chunk?);
    }
    let (estimate, std_error) = (m.mean(), m.std_error());
    Ok(BoundCheck { estimate, std_error, series_argument, bound, pass: estimate <= bound + 3.0 * std_error })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IncrementReport {
    pub start: f64,
    /// `(|t-s|, E|X̃_t - X̃_s|, std_error)`
    pub points: Vec<(f64, f64, f64)>,
    pub fit: OrderFit,
    pub band: (f64, f64),
    pub pass: bool,
}

/// Log-log slope of `E|X̃_{s+h} - X̃_s|` against `h`, judged against
/// `[α/2 - 0.15, α + 0.15]`.
pub fn validate_increment_scaling<M: CoefficientModel + ?Sized>(
    model: &M,
    alpha: f64,
    start: f64,
    gaps: &[f64],
    n_paths: usize,
    scheme: &ThetaConfig,
    seed: u64,
) -> Result<IncrementReport> {
    scheme.validate_for(model)?;
    if gaps.iter().any(|&h| !(h > 0.0)) || !(start >= 0.0) {
        return Err(Error::domain("increment gaps must be positive and the start nonnegative"));
    }
    let horizon = start + gaps.iter().cloned().fold(0.0, f64::max);
    let spec = StableSpec::new(alpha, scheme.delta, horizon)?;
    let chunks = map_chunks(n_paths, CHUNK, |range| -> Result<Vec<Moments>> {
        let mut acc = vec![Moments::default(); gaps.len()];
        for i in range {
            let path = single_path(model, spec, scheme, seed, i as u64)?;
            let xs = crate::schemes::interpolate(&path, start)?;
            for (m, &h) in acc.iter_mut().zip(gaps) {
                m.push((crate::schemes::interpolate(&path, start + h)? - xs).abs());
            }
        }
        Ok(acc)
    });
    let mut acc = vec![Moments::default(); gaps.len()];
    for chunk in chunks {
        for (total, part) in acc.iter_mut().zip(&chunk?) {
            total.merge(part);
        }
    }
    let points: Vec<(f64, f64, f64)> = gaps.iter().zip(&acc).map(|(&h, m)| (h, m.mean(), m.std_error())).collect();
    let fit = fit_order(&points)?;
    let band = (alpha / 2.0 - 0.15, alpha + 0.15);
    let pass = fit.slope >= band.0 && fit.slope <= band.1;
    Ok(IncrementReport { start, points, fit, band, pass })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StabilityPoint {
    pub delta: f64,
    /// `max_n E|X̃_{τ_{n∧N}}|²`
    pub max_second_moment: f64,
    pub argmax: usize,
}

/// Largest second moment over grid indices, with each path frozen at its
/// last grid value `X̃_{τ_N}` beyond its own N.
pub fn stability_second_moment<M: CoefficientModel + ?Sized>(
    model: &M,
    alpha: f64,
    horizon: f64,
    n_paths: usize,
    scheme: &ThetaConfig,
    seed: u64,
) -> Result<StabilityPoint> {
    scheme.validate_for(model)?;
    if n_paths == 0 {
        return Err(Error::domain("n_paths must be at least 1"));
    }
    let spec = StableSpec::new(alpha, scheme.delta, horizon)?;
    // running: sums over live paths per index; frozen[n]: final squares of paths with N = n
    let chunks = map_chunks(n_paths, CHUNK, |range| -> Result<(Vec<f64>, Vec<f64>)> {
        let mut running: Vec<f64> = Vec::new();
        let mut frozen: Vec<f64> = Vec::new();
        for i in range {
            let path = single_path(model, spec, scheme, seed, i as u64)?;
            let v = &path.st_values;
            if running.len() < v.len() {
                running.resize(v.len(), 0.0);
                frozen.resize(v.len(), 0.0);
            }
            for (r, &x) in running.iter_mut().zip(v) {
                *r += x * x;
            }
            frozen[v.len() - 1] += v[v.len() - 1].powi(2);
        }
        Ok((running, frozen))
    });
    let mut running: Vec<f64> = Vec::new();
    let mut frozen: Vec<f64> = Vec::new();
    for chunk in chunks {
        let (r, f) = chunk?;
        if running.len() < r.len() {
            running.resize(r.len(), 0.0);
            frozen.resize(r.len(), 0.0);
        }
        for (a, b) in running.iter_mut().zip(&r) {
            *a += b;
        }
        for (a, b) in frozen.iter_mut().zip(&f) {
            *a += b;
        }
    }
    let mut carried = 0.0;
    let (mut best, mut argmax) = (f64::NEG_INFINITY, 0);
    for n in 0..running.len() {
        let m = (running[n] + carried) / n_paths as f64;
        if m > best {
            best = m;
            argmax = n;
        }
        carried += frozen[n];
    }
    Ok(StabilityPoint { delta: scheme.delta, max_second_moment: best, argmax })
}
