//! Stochastic theta (ST) and forward-backward Euler-Maruyama (FBEM) paths
//! on the random grid `τ_n = D_{nδ}`.
//!
//! One ST step solves
//! `x - θδF(τ_{n+1}, x) = X_n + (1-θ)F(τ_n, X_n)δ + G(τ_n, X_n)ΔB_n + Σ_z H(τ_n, X_n, z)`.
//! The compensated-measure term and the compensator cancel, so the raw mark
//! sum is added once; [`step_terms`] exposes both pieces for inspection.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::models::CoefficientModel;
use crate::noise::{compensator_weight, NoisePanel};
use crate::subordinator::SubordinatorPath;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ThetaConfig {
    pub theta: f64,
    pub delta: f64,
    pub solver_tol: f64,
    pub solver_max_iter: usize,
}

impl ThetaConfig {
    pub fn new(theta: f64, delta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&theta) {
            return Err(Error::domain(format!("theta must lie in [0,1], got {theta}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::domain(format!("delta must lie in (0,1), got {delta}")));
        }
        Ok(Self { theta, delta, solver_tol: 1e-12, solver_max_iter: 100 })
    }

    pub fn with_solver(mut self, tol: f64, max_iter: usize) -> Result<Self> {
        if !(tol > 0.0) || max_iter == 0 {
            return Err(Error::domain("solver tolerance and iteration limit must be positive"));
        }
        self.solver_tol = tol;
        self.solver_max_iter = max_iter;
        Ok(self)
    }

    /// Checks `δ < δ*` against the model's declared constants.
    pub fn validate_for<M: CoefficientModel + ?Sized>(&self, model: &M) -> Result<()> {
        if self.theta == 0.0 {
            return Ok(());
        }
        let star = model.constants().delta_star(self.theta);
        if !(self.delta < star) {
            return Err(Error::domain(format!(
                "delta {} is not below delta* = {star} for theta {}",
                self.delta, self.theta
            )));
        }
        Ok(())
    }

    pub fn with_delta(&self, delta: f64) -> Result<Self> {
        let mut c = Self::new(self.theta, delta)?;
        c.solver_tol = self.solver_tol;
        c.solver_max_iter = self.solver_max_iter;
        Ok(c)
    }
}

/// Root of the implicit step with the number of Newton iterations used.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Solve {
    pub x: f64,
    pub iterations: usize,
}

/// `(|b|² + 2K₁θδ) / (1 - 2K₁θδ)`, the a-priori bound on the squared root.
pub fn solve_bound(k1: f64, b: f64, theta: f64, delta: f64) -> f64 {
    let q = 2.0 * k1 * theta * delta;
    (b * b + q) / (1.0 - q)
}

/// Solves `x - θδF(t_next, x) = b` by damped Newton from the explicit
/// predictor, with fixed-point steps where the Jacobian vanishes.
///
/// Convergence means a residual within `tol`, or within the rounding floor
/// of the residual evaluation when that is larger. A failure reports step 0;
/// [`st_path`] rewrites it with the actual step index.
pub fn implicit_solve<M: CoefficientModel + ?Sized>(
    model: &M,
    t_next: f64,
    b: f64,
    theta: f64,
    delta: f64,
    tol: f64,
    max_iter: usize,
) -> Result<Solve> {
    if theta == 0.0 {
        return Ok(Solve { x: b, iterations: 0 });
    }
    if !b.is_finite() {
        return Err(Error::Solver { step: 0, iterations: 0, residual: f64::NAN });
    }
    let w = theta * delta;
    let residual = |x: f64| -> (f64, f64) {
        let f = model.drift(t_next, x);
        let r = x - w * f - b;
        (r, 8.0 * f64::EPSILON * (x.abs() + (w * f).abs() + b.abs()))
    };
    let mut x = b + w * model.drift(t_next, b);
    if !x.is_finite() {
        x = b;
    }
    let (mut r, mut floor) = residual(x);
    for it in 0..=max_iter {
        if r.abs() <= tol.max(floor) {
            return Ok(Solve { x, iterations: it });
        }
        if it == max_iter {
            break;
        }
        let slope = match model.drift_dx(t_next, x) {
            Some(d) => d,
            None => {
                let h = 1e-6 * (1.0 + x.abs());
                (model.drift(t_next, x + h) - model.drift(t_next, x - h)) / (2.0 * h)
            }
        };
        let jac = 1.0 - w * slope;
        if !(jac.is_finite() && jac.abs() > f64::EPSILON) {
            x = b + w * model.drift(t_next, x);
            (r, floor) = residual(x);
            continue;
        }
        let step = r / jac;
        let mut damp = 1.0;
        loop {
            let cand = x - damp * step;
            let (rc, fc) = residual(cand);
            if rc.abs() < r.abs() || damp < 1e-12 {
                x = cand;
                r = rc;
                floor = fc;
                break;
            }
            damp *= 0.5;
        }
        if !x.is_finite() {
            break;
        }
    }
    Err(Error::Solver { step: 0, iterations: max_iter, residual: r.abs() })
}

/// ST trajectory on the grid of one subordinator path.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SchemePath {
    pub horizon: f64,
    pub grid: Vec<f64>,
    pub st_values: Vec<f64>,
    pub fbem_values: Option<Vec<f64>>,
    /// Newton iterations per step.
    pub iterations: Vec<u32>,
    /// Largest `|x|² - bound` over all implicit solves.
    pub max_bound_excess: f64,
}

impl SchemePath {
    pub fn final_value(&self) -> f64 {
        *self.st_values.last().expect("path has x0")
    }
}

fn jump_sum<M: CoefficientModel + ?Sized>(model: &M, t: f64, x: f64, batch: &[f64]) -> f64 {
    batch.iter().fold(0.0, |s, &z| s + model.jump(t, x, z))
}

fn check_shapes(sub: &SubordinatorPath, noise: &NoisePanel, cfg: &ThetaConfig) -> Result<()> {
    if noise.n_steps() != sub.n_steps() {
        return Err(Error::domain(format!(
            "noise panel has {} steps but the path has {}",
            noise.n_steps(),
            sub.n_steps()
        )));
    }
    if noise.delta() != sub.delta() || cfg.delta != sub.delta() {
        return Err(Error::domain("path, noise panel and scheme use different step sizes"));
    }
    Ok(())
}

/// Integrates the ST scheme over the grid of `sub`.
pub fn st_path<M: CoefficientModel + ?Sized>(
    model: &M,
    sub: &SubordinatorPath,
    noise: &NoisePanel,
    cfg: &ThetaConfig,
) -> Result<SchemePath> {
    check_shapes(sub, noise, cfg)?;
    let grid = sub.grid();
    let (theta, delta) = (cfg.theta, cfg.delta);
    let k1 = model.constants().k1;
    let n = sub.n_steps();
    let mut values = Vec::with_capacity(n + 1);
    let mut iterations = Vec::with_capacity(n);
    let mut excess = f64::NEG_INFINITY;
    let mut x = model.x0();
    values.push(x);
    for (step, (&db, batch)) in noise.gauss().iter().zip(noise.jumps()).enumerate() {
        let t = grid[step];
        let b = x + (1.0 - theta) * model.drift(t, x) * delta + model.diffusion(t, x) * db + jump_sum(model, t, x, batch);
        let solved = implicit_solve(model, grid[step + 1], b, theta, delta, cfg.solver_tol, cfg.solver_max_iter)
            .map_err(|e| match e {
                Error::Solver { iterations, residual, .. } => Error::Solver { step, iterations, residual },
                other => other,
            })?;
        if theta > 0.0 {
            excess = excess.max(solved.x * solved.x - solve_bound(k1, b, theta, delta));
        }
        x = solved.x;
        if !x.is_finite() {
            return Err(Error::Solver { step, iterations: solved.iterations, residual: f64::INFINITY });
        }
        values.push(x);
        iterations.push(solved.iterations as u32);
    }
    Ok(SchemePath {
        horizon: sub.horizon(),
        grid: grid.to_vec(),
        st_values: values,
        fbem_values: None,
        iterations,
        max_bound_excess: excess,
    })
}

/// FBEM trajectory: explicit updates with coefficients evaluated at the ST
/// iterates of `st`.
pub fn fbem_path<M: CoefficientModel + ?Sized>(
    model: &M,
    sub: &SubordinatorPath,
    noise: &NoisePanel,
    cfg: &ThetaConfig,
    st: &SchemePath,
) -> Result<Vec<f64>> {
    check_shapes(sub, noise, cfg)?;
    if st.st_values.len() != sub.n_steps() + 1 {
        return Err(Error::domain("ST path does not belong to this subordinator path"));
    }
    let grid = sub.grid();
    let delta = cfg.delta;
    let mut out = Vec::with_capacity(st.st_values.len());
    let mut y = model.x0();
    out.push(y);
    for (step, (&db, batch)) in noise.gauss().iter().zip(noise.jumps()).enumerate() {
        let (t, x) = (grid[step], st.st_values[step]);
        y = y + model.drift(t, x) * delta + model.diffusion(t, x) * db + jump_sum(model, t, x, batch);
        out.push(y);
    }
    Ok(out)
}

/// ST path with its FBEM companion attached.
pub fn st_and_fbem_path<M: CoefficientModel + ?Sized>(
    model: &M,
    sub: &SubordinatorPath,
    noise: &NoisePanel,
    cfg: &ThetaConfig,
) -> Result<SchemePath> {
    let mut st = st_path(model, sub, noise, cfg)?;
    st.fbem_values = Some(fbem_path(model, sub, noise, cfg, &st)?);
    Ok(st)
}

/// `X̃_{τ_{n_t}}` with `n_t = max{n : τ_n ≤ t}`.
pub fn interpolate(path: &SchemePath, t: f64) -> Result<f64> {
    if !(0.0..=path.horizon).contains(&t) {
        return Err(Error::domain(format!("time {t} outside [0, {}]", path.horizon)));
    }
    let n = path.grid.partition_point(|&tau| tau <= t) - 1;
    Ok(path.st_values[n])
}

/// The explicit part of one ST step split into its terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepTerms {
    /// `(1-θ)F(t, x)δ`
    pub drift: f64,
    /// `G(t, x)ΔB`
    pub diffusion: f64,
    /// `Σ_z H(t, x, z) - λδ ∫H dν`
    pub compensated_jumps: f64,
    /// `λδ ∫H dν`
    pub compensator: f64,
}

impl StepTerms {
    /// The right-hand side `b` assembled from the decomposed terms.
    pub fn rhs(&self, x: f64) -> f64 {
        x + self.drift + self.diffusion + self.compensated_jumps + self.compensator
    }
}

pub fn step_terms<M: CoefficientModel + ?Sized>(
    model: &M,
    t: f64,
    x: f64,
    db: f64,
    batch: &[f64],
    theta: f64,
    delta: f64,
) -> StepTerms {
    let compensator = compensator_weight(model.jump_measure(), delta) * model.compensator_integral(t, x);
    StepTerms {
        drift: (1.0 - theta) * model.drift(t, x) * delta,
        diffusion: model.diffusion(t, x) * db,
        compensated_jumps: jump_sum(model, t, x, batch) - compensator,
        compensator,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{builtin_cubic, builtin_linear, builtin_zero};
    use crate::noise::JumpMeasureSpec;
    use crate::rng::{derive, Label};
    use crate::subordinator::{generate_path_with, StableSpec, DEFAULT_STEP_CAP};
    use proptest::prelude::*;
    use rand::Rng;

    fn nu() -> JumpMeasureSpec {
        JumpMeasureSpec::uniform(1.0, 0.5, 1.0).unwrap()
    }

    fn driven(alpha: f64, delta: f64, seed: u64) -> (SubordinatorPath, NoisePanel) {
        let spec = StableSpec::new(alpha, delta, 1.0).unwrap();
        let sub = generate_path_with(spec, &mut derive(seed, 0, Label::Stable), DEFAULT_STEP_CAP).unwrap();
        let noise = NoisePanel::generate(sub.n_steps(), delta, &nu(), seed, 0).unwrap();
        (sub, noise)
    }

    /// Regular grid `τ_n = nδ/2` with the overshoot just past 1.
    fn regular_path(n: usize, delta: f64) -> SubordinatorPath {
        let spec = StableSpec::new(0.5, delta, 1.0).unwrap();
        let step = 1.0 / (n as f64 + 0.5);
        let values = (0..=n + 1).map(|i| i as f64 * step).collect();
        SubordinatorPath::from_values(spec, values).unwrap()
    }

    #[test]
    fn explicit_theta_returns_b() {
        let m = builtin_cubic(0.5, 0.1, 0.1, nu(), 1.0).unwrap();
        let s = implicit_solve(&m, 0.3, 1.7, 0.0, 0.1, 1e-12, 100).unwrap();
        assert_eq!(s, Solve { x: 1.7, iterations: 0 });
    }

    #[test]
    fn linear_closed_form() {
        let m = builtin_linear(-1.0, 0.0, 0.0, JumpMeasureSpec::none(), 1.0).unwrap();
        let s = implicit_solve(&m, 0.5, 1.0, 1.0, 0.1, 1e-12, 100).unwrap();
        assert!((s.x - 1.0 / 1.1).abs() <= 1e-12);
        for &(a, theta, delta, b) in &[(-3.0, 0.5, 0.2, -2.5), (0.4, 1.0, 0.5, 7.0), (-0.1, 0.7, 0.01, 1e-3)] {
            let m = builtin_linear(a, 0.0, 0.0, JumpMeasureSpec::none(), 1.0).unwrap();
            let s = implicit_solve(&m, 0.0, b, theta, delta, 1e-12, 100).unwrap();
            let want = b / (1.0 - theta * a * delta);
            assert!((s.x - want).abs() <= 1e-12 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn cubic_root_at_zero() {
        let m = builtin_cubic(0.0, 0.0, 0.0, JumpMeasureSpec::none(), 1.0).unwrap();
        let s = implicit_solve(&m, 0.0, 0.0, 1.0, 0.1, 1e-12, 100).unwrap();
        assert_eq!(s.x, 0.0);
        // x + 0.1 x³ is increasing, so the scan finds a single sign change
        let g = |x: f64| x + 0.1 * x * x * x;
        let xs: Vec<f64> = (-1000..=1000).map(|i| i as f64 * 0.01 + 0.005).collect();
        let changes = xs.windows(2).filter(|w| g(w[0]).signum() != g(w[1]).signum()).count();
        assert_eq!(changes, 1);
    }

    struct NoDerivative(crate::models::ParametricModel);

    impl CoefficientModel for NoDerivative {
        fn drift(&self, t: f64, x: f64) -> f64 {
            self.0.drift(t, x)
        }
        fn diffusion(&self, t: f64, x: f64) -> f64 {
            self.0.diffusion(t, x)
        }
        fn jump(&self, t: f64, x: f64, z: f64) -> f64 {
            self.0.jump(t, x, z)
        }
        fn jump_measure(&self) -> &JumpMeasureSpec {
            self.0.jump_measure()
        }
        fn constants(&self) -> &crate::models::ModelConstants {
            self.0.constants()
        }
        fn lipschitz_radius(&self, r: f64) -> f64 {
            self.0.lipschitz_radius(r)
        }
        fn x0(&self) -> f64 {
            self.0.x0()
        }
    }

    #[test]
    fn finite_difference_jacobian_agrees() {
        let m = builtin_cubic(1.0, 0.0, 0.0, JumpMeasureSpec::none(), 1.0).unwrap();
        let fd = NoDerivative(m.clone());
        for &b in &[-30.0, -2.0, 0.3, 5.0, 100.0] {
            let a = implicit_solve(&m, 0.2, b, 1.0, 0.25, 1e-12, 100).unwrap();
            let c = implicit_solve(&fd, 0.2, b, 1.0, 0.25, 1e-12, 100).unwrap();
            assert!((a.x - c.x).abs() <= 1e-12 * (1.0 + a.x.abs()), "b={b}: {} vs {}", a.x, c.x);
            let r = a.x + 0.25 * (a.x.powi(3) - a.x) - b;
            assert!(r.abs() <= 1e-12_f64.max(64.0 * f64::EPSILON * b.abs()));
        }
    }

    #[test]
    fn deterministic_implicit_euler() {
        let m = builtin_linear(-1.0, 0.5, 0.2, nu(), 1.0).unwrap();
        let sub = regular_path(10, 0.1);
        let noise = NoisePanel::zero(10, 0.1);
        let cfg = ThetaConfig::new(1.0, 0.1).unwrap();
        let p = st_and_fbem_path(&m, &sub, &noise, &cfg).unwrap();
        assert!((p.final_value() - 0.385_543_289_429_531_44).abs() < 1e-12);
        // FBEM recursion against the geometric ST sequence
        let fb = p.fbem_values.as_ref().unwrap();
        let mut y = 1.0;
        for n in 0..10 {
            let xt = (1.0f64 / 1.1).powi(n);
            assert!((p.st_values[n as usize] - xt).abs() < 1e-12);
            assert!((fb[n as usize] - y).abs() < 1e-12);
            y -= 0.1 * xt;
        }
        assert!((fb[10] - y).abs() < 1e-12);
    }

    #[test]
    fn zero_model_is_constant() {
        let m = builtin_zero(2.5).unwrap();
        for seed in 0..5 {
            let (sub, noise) = driven(0.8, 0.01, seed);
            let cfg = ThetaConfig::new(0.5, 0.01).unwrap();
            let p = st_and_fbem_path(&m, &sub, &noise, &cfg).unwrap();
            assert!(p.st_values.iter().all(|&x| x == 2.5));
            assert!(p.fbem_values.unwrap().iter().all(|&x| x == 2.5));
        }
    }

    fn euler(m: &dyn CoefficientModel, sub: &SubordinatorPath, noise: &NoisePanel, delta: f64) -> Vec<f64> {
        let grid = sub.grid();
        let mut x = m.x0();
        let mut out = vec![x];
        for n in 0..noise.n_steps() {
            let t = grid[n];
            let mut s = 0.0;
            for &z in &noise.jumps()[n] {
                s += m.jump(t, x, z);
            }
            x = x + m.drift(t, x) * delta + m.diffusion(t, x) * noise.gauss()[n] + s;
            out.push(x);
        }
        out
    }

    #[test]
    fn explicit_theta_is_euler_maruyama() {
        let mut rng = derive(99, 0, Label::Auxiliary);
        for case in 0..100u64 {
            let m = if case % 2 == 0 {
                builtin_linear(rng.random_range(-2.0..1.0), rng.random_range(0.0..1.0), rng.random_range(-1.0..1.0), nu(), 1.0)
            } else {
                builtin_cubic(rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(-1.0..1.0), nu(), 0.5)
            }
            .unwrap();
            let (sub, noise) = driven(0.7, 0.02, case);
            let cfg = ThetaConfig::new(0.0, 0.02).unwrap();
            let p = st_and_fbem_path(&m, &sub, &noise, &cfg).unwrap();
            let want = euler(&m, &sub, &noise, 0.02);
            assert_eq!(p.st_values, want);
            assert_eq!(p.fbem_values.unwrap(), want);
            assert!(p.iterations.iter().all(|&i| i == 0));
        }
    }

    #[test]
    fn a_priori_bound_on_every_solve() {
        let models = [
            builtin_linear(-1.0, 0.5, 0.2, nu(), 1.0).unwrap(),
            builtin_cubic(0.5, 0.3, 0.2, nu(), 2.0).unwrap(),
            builtin_linear(0.3, 0.5, 0.2, nu(), 1.0).unwrap(),
        ];
        for m in &models {
            for &theta in &[0.5, 1.0] {
                for seed in 0..20 {
                    let (sub, noise) = driven(0.8, 0.01, seed);
                    let cfg = ThetaConfig::new(theta, 0.01).unwrap();
                    cfg.validate_for(m).unwrap();
                    let p = st_path(m, &sub, &noise, &cfg).unwrap();
                    assert!(p.max_bound_excess <= 10.0 * cfg.solver_tol, "{}", p.max_bound_excess);
                }
            }
        }
    }

    #[test]
    fn raw_sum_equals_decomposed_terms() {
        let m = builtin_cubic(0.2, 0.3, 0.7, JumpMeasureSpec::two_point(2.0, 1.0, 1.5, 0.4).unwrap(), 1.0).unwrap();
        let batch = [0.4, -0.4, 0.4];
        let terms = step_terms(&m, 0.3, 1.2, 0.05, &batch, 0.5, 0.1);
        let raw = 1.2 + 0.5 * m.drift(0.3, 1.2) * 0.1 + m.diffusion(0.3, 1.2) * 0.05 + jump_sum(&m, 0.3, 1.2, &batch);
        assert!((terms.rhs(1.2) - raw).abs() < 1e-14);
        assert_eq!(terms.compensated_jumps + terms.compensator, jump_sum(&m, 0.3, 1.2, &batch));
    }

    #[test]
    fn delta_star_is_enforced() {
        let m = builtin_cubic(4.0, 0.0, 0.0, JumpMeasureSpec::none(), 1.0).unwrap();
        // K1 = 4 gives delta* = 1/8 at theta = 1
        assert!(ThetaConfig::new(1.0, 0.125).unwrap().validate_for(&m).is_err());
        assert!(ThetaConfig::new(1.0, 0.12).unwrap().validate_for(&m).is_ok());
        assert!(ThetaConfig::new(0.0, 0.9).unwrap().validate_for(&m).is_ok());
        assert!(ThetaConfig::new(1.5, 0.1).is_err());
        assert!(ThetaConfig::new(0.5, 1.0).is_err());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let m = builtin_zero(1.0).unwrap();
        let (sub, _) = driven(0.8, 0.01, 1);
        let cfg = ThetaConfig::new(1.0, 0.01).unwrap();
        assert!(st_path(&m, &sub, &NoisePanel::zero(sub.n_steps() + 1, 0.01), &cfg).is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        let m = builtin_linear(-1.0, 0.5, 0.2, nu(), 1.0).unwrap();
        let cfg = ThetaConfig::new(1.0, 0.01).unwrap();
        let (s1, n1) = driven(0.8, 0.01, 3);
        let (s2, n2) = driven(0.8, 0.01, 3);
        assert_eq!(st_path(&m, &s1, &n1, &cfg).unwrap(), st_path(&m, &s2, &n2, &cfg).unwrap());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn interpolation_is_left_constant(seed in 0u64..1000, u in 0.0f64..=1.0) {
            let m = builtin_linear(-1.0, 0.5, 0.2, nu(), 1.0).unwrap();
            let (sub, noise) = driven(0.6, 0.05, seed);
            let p = st_path(&m, &sub, &noise, &ThetaConfig::new(1.0, 0.05).unwrap()).unwrap();
            let got = interpolate(&p, u).unwrap();
            let mut idx = 0;
            for (i, &tau) in p.grid.iter().enumerate() {
                if tau <= u {
                    idx = i;
                }
            }
            prop_assert_eq!(got, p.st_values[idx]);
            for (i, &tau) in p.grid.iter().enumerate() {
                prop_assert_eq!(interpolate(&p, tau).unwrap(), p.st_values[i]);
            }
            prop_assert!(interpolate(&p, 1.0 + 1e-9).is_err());
        }
    }
}
