//! Coefficient triples `(F, G, H)` with their declared structural constants,
//! the linear and cubic built-ins, time modulation, and a sampling auditor
//! that checks the declared constants against the coefficients.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::JumpMeasureSpec;

/// Positive constants that would otherwise be zero are floored here.
pub const CONSTANT_FLOOR: f64 = 1e-12;

/// Declared constants of a model.
///
/// `growth` is C(h) in `|F| ∨ |G| ≤ C(h)(1 + |x|^h)`; `k0` bounds
/// `∫|H|² dν ≤ K0(1+|x|²)`; `k1` is the monotonicity constant
/// `⟨x,F⟩ + (2h-1)/2 |G|² ≤ K1(1+|x|²)`; `k2..k4` with `eta_*` are the
/// time-Hölder constants and exponents of F, G and ∫|H| dν; `k5` is the
/// one-sided Lipschitz constant in `⟨x-y, F(x)-F(y)⟩ ≤ K5|x-y|²`.
/// A non-finite constant means no global bound exists.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConstants {
    pub h: f64,
    pub growth: f64,
    pub k0: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub k5: f64,
    pub eta_f: f64,
    pub eta_g: f64,
    pub eta_h: f64,
}

impl ModelConstants {
    /// `min{η_F, η_G, η_H, α/2}` and the name of the binding term.
    pub fn predicted_order(&self, alpha: f64) -> (f64, &'static str) {
        let candidates = [
            (self.eta_f, "eta_f"),
            (self.eta_g, "eta_g"),
            (self.eta_h, "eta_h"),
            (alpha / 2.0, "alpha/2"),
        ];
        candidates
            .into_iter()
            .fold((f64::INFINITY, ""), |best, c| if c.0 < best.0 { c } else { best })
    }

    /// Largest step with a unique implicit solve and uniform moment bound:
    /// `min{1, 1/(2K1θ), 1/(K5θ)}`, or 1 for the explicit scheme.
    pub fn delta_star(&self, theta: f64) -> f64 {
        if theta == 0.0 {
            return 1.0;
        }
        1f64.min(1.0 / (2.0 * self.k1 * theta)).min(1.0 / (self.k5 * theta))
    }
}

/// Coefficients of `dX = F dE + G dB_E + ∫ H N(dE, dz)` for scalar X.
///
/// Implementations must be reentrant; Monte Carlo workers share one model.
pub trait CoefficientModel: Send + Sync {
    fn drift(&self, t: f64, x: f64) -> f64;
    fn diffusion(&self, t: f64, x: f64) -> f64;
    fn jump(&self, t: f64, x: f64, z: f64) -> f64;

    /// ∂F/∂x when available in closed form.
    fn drift_dx(&self, _t: f64, _x: f64) -> Option<f64> {
        None
    }

    fn jump_measure(&self) -> &JumpMeasureSpec;

    /// `∫_{|z|<c} H(t, x, z) ν(dz)`; quadrature unless overridden.
    fn compensator_integral(&self, t: f64, x: f64) -> f64 {
        self.jump_measure().integrate(|z| self.jump(t, x, z))
    }

    /// `∫|H(t, x, z) - H(t, y, z)| ν(dz)`
    fn jump_state_distance(&self, t: f64, x: f64, y: f64) -> f64 {
        self.jump_measure().integrate(|z| (self.jump(t, x, z) - self.jump(t, y, z)).abs())
    }

    /// `∫|H(s, x, z) - H(t, x, z)| ν(dz)`
    fn jump_time_distance(&self, s: f64, t: f64, x: f64) -> f64 {
        self.jump_measure().integrate(|z| (self.jump(s, x, z) - self.jump(t, x, z)).abs())
    }

    /// `∫|H(t, x, z)|² ν(dz)`
    fn jump_square_integral(&self, t: f64, x: f64) -> f64 {
        self.jump_measure().integrate(|z| self.jump(t, x, z).powi(2))
    }

    fn constants(&self) -> &ModelConstants;

    /// Local Lipschitz constant C(R) on the ball of radius R.
    fn lipschitz_radius(&self, radius: f64) -> f64;

    fn x0(&self) -> f64;
}

/// Hölder time envelope multiplying one coefficient.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Envelope {
    Identity,
    /// `φ(t) = 1 + scale · t^eta`; Hölder with exponent eta and constant scale.
    Power { scale: f64, eta: f64 },
    /// `φ(t) = 1 + amplitude · Σ_{k<32} 2^{-kη} sin(2π 2^k t)`, Hölder with
    /// exponent eta at every t rather than only at the origin.
    Weierstrass { amplitude: f64, eta: f64 },
}

const WEIERSTRASS_TERMS: i32 = 32;

fn weierstrass(t: f64, eta: f64) -> f64 {
    let mut s = 0.0;
    for k in 0..WEIERSTRASS_TERMS {
        // t · 2^k is exact, so the phase keeps full precision
        let phase = (t * 2f64.powi(k)).fract();
        s += 2f64.powf(-eta * k as f64) * (std::f64::consts::TAU * phase).sin();
    }
    s
}

fn weierstrass_sup(eta: f64) -> f64 {
    (0..WEIERSTRASS_TERMS).map(|k| 2f64.powf(-eta * k as f64)).sum()
}

/// Hölder constant of the 32-term sum: low frequencies by their Lipschitz
/// bound, high frequencies by their sup.
fn weierstrass_holder(eta: f64) -> f64 {
    let q = 2f64.powf(1.0 - eta);
    std::f64::consts::TAU * q / (q - 1.0) + 2.0 / (1.0 - 2f64.powf(-eta))
}

impl Envelope {
    pub fn power(scale: f64, eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::domain(format!("envelope exponent must lie in (0,1], got {eta}")));
        }
        if !(scale >= 0.0 && scale.is_finite()) {
            return Err(Error::domain(format!("envelope scale must be finite and >= 0, got {scale}")));
        }
        Ok(Envelope::Power { scale, eta })
    }

    pub fn weierstrass(amplitude: f64, eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta < 1.0) {
            return Err(Error::domain(format!("rough envelope exponent must lie in (0,1), got {eta}")));
        }
        if !(amplitude >= 0.0 && amplitude.is_finite()) {
            return Err(Error::domain(format!("envelope amplitude must be finite and >= 0, got {amplitude}")));
        }
        Ok(Envelope::Weierstrass { amplitude, eta })
    }

    fn validated(self) -> Result<Self> {
        match self {
            Envelope::Identity => Ok(self),
            Envelope::Power { scale, eta } => Envelope::power(scale, eta),
            Envelope::Weierstrass { amplitude, eta } => Envelope::weierstrass(amplitude, eta),
        }
    }

    pub fn is_identity(&self) -> bool {
        match *self {
            Envelope::Identity => true,
            Envelope::Power { scale, .. } => scale == 0.0,
            Envelope::Weierstrass { amplitude, .. } => amplitude == 0.0,
        }
    }

    #[inline]
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Envelope::Identity => 1.0,
            Envelope::Power { scale, eta } => 1.0 + scale * t.max(0.0).powf(eta),
            Envelope::Weierstrass { amplitude, eta } => 1.0 + amplitude * weierstrass(t, eta),
        }
    }

    /// Hölder exponent (1 for time-constant envelopes).
    pub fn eta(&self) -> f64 {
        match *self {
            Envelope::Power { eta, scale } if scale > 0.0 => eta,
            Envelope::Weierstrass { eta, amplitude } if amplitude > 0.0 => eta,
            _ => 1.0,
        }
    }

    /// Hölder constant on [0, T].
    pub fn holder_constant(&self) -> f64 {
        match *self {
            Envelope::Identity => 0.0,
            // |s^η - t^η| ≤ |s-t|^η for η ≤ 1
            Envelope::Power { scale, .. } => scale,
            Envelope::Weierstrass { amplitude, eta } => amplitude * weierstrass_holder(eta),
        }
    }

    /// `sup |φ|` over [0, T].
    pub fn sup_abs(&self, horizon: f64) -> f64 {
        let (lo, hi) = self.bounds(horizon);
        lo.abs().max(hi.abs())
    }

    /// Bounds (inf, sup) over [0, T].
    pub fn bounds(&self, horizon: f64) -> (f64, f64) {
        match *self {
            Envelope::Weierstrass { amplitude, eta } => {
                let s = amplitude * weierstrass_sup(eta);
                (1.0 - s, 1.0 + s)
            }
            _ => (self.value(0.0), self.value(horizon)),
        }
    }
}

/// Envelopes for (F, G, H).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelopes {
    pub drift: Envelope,
    pub diffusion: Envelope,
    pub jump: Envelope,
}

impl Default for Envelopes {
    fn default() -> Self {
        Self { drift: Envelope::Identity, diffusion: Envelope::Identity, jump: Envelope::Identity }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Family {
    /// F = a x, G = σ x, H = γ x z.
    Linear { a: f64, sigma: f64, gamma: f64 },
    /// F = -x³ + μ x, G = σ x, H = γ x z.
    Cubic { mu: f64, sigma: f64, gamma: f64 },
}

/// Built-in model: a family, its jump measure, time envelopes and the
/// constants derived analytically for horizon T.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParametricModel {
    family: Family,
    jump: JumpMeasureSpec,
    envelopes: Envelopes,
    x0: f64,
    horizon: f64,
    constants: ModelConstants,
}

fn floor(x: f64) -> f64 {
    if x.is_nan() {
        x
    } else {
        x.max(CONSTANT_FLOOR)
    }
}

impl ParametricModel {
    fn build(family: Family, jump: JumpMeasureSpec, envelopes: Envelopes, x0: f64, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::domain(format!("model horizon must be positive, got {horizon}")));
        }
        if !x0.is_finite() {
            return Err(Error::domain("initial state must be finite"));
        }
        if let Family::Cubic { mu, .. } = family {
            if !(mu >= 0.0) {
                return Err(Error::domain(format!("cubic model needs mu >= 0, got {mu}")));
            }
        }
        let mut m = Self { family, jump, envelopes, x0, horizon, constants: ModelConstants {
            h: 1.0, growth: 0.0, k0: 0.0, k1: 0.0, k2: 0.0, k3: 0.0, k4: 0.0, k5: 0.0,
            eta_f: 1.0, eta_g: 1.0, eta_h: 1.0,
        } };
        m.constants = m.derive_constants();
        Ok(m)
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn envelopes(&self) -> &Envelopes {
        &self.envelopes
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Same model with constants re-derived for another horizon.
    pub fn with_horizon(&self, horizon: f64) -> Result<Self> {
        Self::build(self.family, self.jump, self.envelopes, self.x0, horizon)
    }

    /// Same coefficients with another jump measure.
    pub fn with_jump(&self, jump: JumpMeasureSpec) -> Result<Self> {
        Self::build(self.family, jump, self.envelopes, self.x0, self.horizon)
    }

    fn derive_constants(&self) -> ModelConstants {
        let (fmin, fmax) = self.envelopes.drift.bounds(self.horizon);
        let fabs = self.envelopes.drift.sup_abs(self.horizon);
        let gmax = self.envelopes.diffusion.sup_abs(self.horizon);
        let hmax = self.envelopes.jump.sup_abs(self.horizon);
        let hf = self.envelopes.drift.holder_constant();
        let hg = self.envelopes.diffusion.holder_constant();
        let hh = self.envelopes.jump.holder_constant();
        let m1 = self.jump.abs_moment();
        let m2 = self.jump.second_moment();
        let etas = (self.envelopes.drift.eta(), self.envelopes.diffusion.eta(), self.envelopes.jump.eta());
        match self.family {
            Family::Linear { a, sigma, gamma } => {
                let h = 1.0;
                // a x² scaled by the envelope extreme that makes it largest
                let drift_part = if a >= 0.0 { fmax * a } else { fmin * a };
                ModelConstants {
                    h,
                    growth: floor((fabs * a.abs()).max(gmax * sigma.abs())),
                    k0: floor(hmax * hmax * gamma * gamma * m2),
                    k1: floor(drift_part + (2.0 * h - 1.0) / 2.0 * gmax * gmax * sigma * sigma),
                    k2: floor(hf * a.abs()),
                    k3: floor(hg * sigma.abs()),
                    k4: floor(hh * gamma.abs() * m1),
                    k5: floor(drift_part),
                    eta_f: etas.0,
                    eta_g: etas.1,
                    eta_h: etas.2,
                }
            }
            Family::Cubic { mu, sigma, gamma } => {
                let h = 3.0;
                // a sign change of φ turns -x³ into an unbounded push outwards
                let unbounded = fmin < 0.0;
                ModelConstants {
                    h,
                    growth: floor((fabs * (1.0 + mu)).max(gmax * sigma.abs())),
                    k0: floor(hmax * hmax * gamma * gamma * m2),
                    k1: if unbounded {
                        f64::INFINITY
                    } else {
                        floor(fmax * mu + (2.0 * h - 1.0) / 2.0 * gmax * gmax * sigma * sigma)
                    },
                    // |φ(s)-φ(t)| |x³| has no (1+|x|) bound
                    k2: if hf > 0.0 { f64::INFINITY } else { CONSTANT_FLOOR },
                    k3: floor(hg * sigma.abs()),
                    k4: floor(hh * gamma.abs() * m1),
                    k5: if unbounded { f64::INFINITY } else { floor(fmax * mu) },
                    eta_f: etas.0,
                    eta_g: etas.1,
                    eta_h: etas.2,
                }
            }
        }
    }
}

impl CoefficientModel for ParametricModel {
    #[inline]
    fn drift(&self, t: f64, x: f64) -> f64 {
        let phi = self.envelopes.drift.value(t);
        match self.family {
            Family::Linear { a, .. } => phi * a * x,
            Family::Cubic { mu, .. } => phi * (-x * x * x + mu * x),
        }
    }

    #[inline]
    fn diffusion(&self, t: f64, x: f64) -> f64 {
        let phi = self.envelopes.diffusion.value(t);
        match self.family {
            Family::Linear { sigma, .. } | Family::Cubic { sigma, .. } => phi * sigma * x,
        }
    }

    #[inline]
    fn jump(&self, t: f64, x: f64, z: f64) -> f64 {
        let phi = self.envelopes.jump.value(t);
        match self.family {
            Family::Linear { gamma, .. } | Family::Cubic { gamma, .. } => phi * gamma * x * z,
        }
    }

    fn drift_dx(&self, t: f64, x: f64) -> Option<f64> {
        let phi = self.envelopes.drift.value(t);
        Some(match self.family {
            Family::Linear { a, .. } => phi * a,
            Family::Cubic { mu, .. } => phi * (-3.0 * x * x + mu),
        })
    }

    fn jump_measure(&self) -> &JumpMeasureSpec {
        &self.jump
    }

    fn compensator_integral(&self, t: f64, x: f64) -> f64 {
        self.jump(t, x, 1.0) * self.jump.first_moment()
    }

    fn jump_state_distance(&self, t: f64, x: f64, y: f64) -> f64 {
        (self.jump(t, x, 1.0) - self.jump(t, y, 1.0)).abs() * self.jump.abs_moment()
    }

    fn jump_time_distance(&self, s: f64, t: f64, x: f64) -> f64 {
        (self.jump(s, x, 1.0) - self.jump(t, x, 1.0)).abs() * self.jump.abs_moment()
    }

    fn jump_square_integral(&self, t: f64, x: f64) -> f64 {
        self.jump(t, x, 1.0).powi(2) * self.jump.second_moment()
    }

    fn constants(&self) -> &ModelConstants {
        &self.constants
    }

    fn lipschitz_radius(&self, radius: f64) -> f64 {
        let fmax = self.envelopes.drift.sup_abs(self.horizon);
        let gmax = self.envelopes.diffusion.sup_abs(self.horizon);
        let hmax = self.envelopes.jump.sup_abs(self.horizon);
        let m1 = self.jump.abs_moment();
        match self.family {
            Family::Linear { a, sigma, gamma } => fmax * a.abs() + gmax * sigma.abs() + hmax * gamma.abs() * m1,
            Family::Cubic { mu, sigma, gamma } => {
                fmax * (3.0 * radius * radius + mu) + gmax * sigma.abs() + hmax * gamma.abs() * m1
            }
        }
    }

    fn x0(&self) -> f64 {
        self.x0
    }
}

/// Linear model `F = a x, G = σ x, H = γ x z` on horizon 1.
pub fn builtin_linear(a: f64, sigma: f64, gamma: f64, jump: JumpMeasureSpec, x0: f64) -> Result<ParametricModel> {
    ParametricModel::build(Family::Linear { a, sigma, gamma }, jump, Envelopes::default(), x0, 1.0)
}

/// Cubic-drift model `F = -x³ + μx, G = σ x, H = γ x z` on horizon 1 (h = 3).
pub fn builtin_cubic(mu: f64, sigma: f64, gamma: f64, jump: JumpMeasureSpec, x0: f64) -> Result<ParametricModel> {
    ParametricModel::build(Family::Cubic { mu, sigma, gamma }, jump, Envelopes::default(), x0, 1.0)
}

/// `F = G = H = 0`.
pub fn builtin_zero(x0: f64) -> Result<ParametricModel> {
    builtin_linear(0.0, 0.0, 0.0, JumpMeasureSpec::none(), x0)
}

/// Multiplies each coefficient by its time envelope and re-derives the
/// constants and exponents. A component may carry only one non-trivial
/// envelope.
pub fn time_modulated(base: &ParametricModel, envelopes: Envelopes) -> Result<ParametricModel> {
    let pick = |old: Envelope, new: Envelope, which: &str| -> Result<Envelope> {
        old.validated()?;
        new.validated()?;
        match (old.is_identity(), new.is_identity()) {
            (_, true) => Ok(old),
            (true, false) => Ok(new),
            (false, false) => Err(Error::domain(format!("{which} coefficient is already modulated"))),
        }
    };
    let combined = Envelopes {
        drift: pick(base.envelopes.drift, envelopes.drift, "drift")?,
        diffusion: pick(base.envelopes.diffusion, envelopes.diffusion, "diffusion")?,
        jump: pick(base.envelopes.jump, envelopes.jump, "jump")?,
    };
    ParametricModel::build(base.family, base.jump, combined, base.x0, base.horizon)
}

/// Sampling settings of [`audit`].
#[derive(Clone, Copy, Debug, Serialize)]
pub struct AuditConfig {
    pub radius: f64,
    pub n_samples: usize,
    pub horizon: f64,
    /// Tolerated absolute excess of a ratio over its constant.
    pub slack: f64,
}

impl AuditConfig {
    pub fn new(radius: f64, n_samples: usize, horizon: f64) -> Self {
        Self { radius, n_samples, horizon, slack: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditEntry {
    pub condition: &'static str,
    pub constant: &'static str,
    pub declared: f64,
    pub worst_ratio: f64,
    /// `None` for informational entries that do not count towards the verdict.
    pub pass: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditReport {
    pub radius: f64,
    pub n_samples: usize,
    pub slack: f64,
    pub entries: Vec<AuditEntry>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.pass != Some(false))
    }

    pub fn entry(&self, condition: &str) -> Option<&AuditEntry> {
        self.entries.iter().find(|e| e.condition == condition)
    }
}

// ratios are recomputed from rounded coefficient values
const ROUNDING_ALLOWANCE: f64 = 1e-9;

/// Samples `(s, t, x, y)` in `[0,T]² × [-R,R]²` and records, per structural
/// condition, the worst observed ratio against its declared constant.
pub fn audit<M: CoefficientModel + ?Sized, R: Rng + ?Sized>(model: &M, cfg: &AuditConfig, rng: &mut R) -> AuditReport {
    let c = model.constants();
    let r = cfg.radius;
    let lip = model.lipschitz_radius(r);
    let mut worst = [0.0f64; 9];
    for _ in 0..cfg.n_samples {
        let s = rng.random::<f64>() * cfg.horizon;
        let t = rng.random::<f64>() * cfg.horizon;
        let x = (2.0 * rng.random::<f64>() - 1.0) * r;
        let y = (2.0 * rng.random::<f64>() - 1.0) * r;
        let (fx, fy) = (model.drift(t, x), model.drift(t, y));
        let (gx, gy) = (model.diffusion(t, x), model.diffusion(t, y));
        let dxy = (x - y).abs();
        if dxy > 0.0 {
            let hdiff = model.jump_state_distance(t, x, y);
            worst[0] = worst[0].max(((fx - fy).abs() + (gx - gy).abs() + hdiff) / dxy);
            let inner = (x - y) * (fx - fy);
            worst[7] = worst[7].max(inner / (dxy * dxy));
            worst[8] = worst[8].max(inner / dxy);
        }
        worst[1] = worst[1].max(fx.abs().max(gx.abs()) / (1.0 + x.abs().powf(c.h)));
        let h2 = model.jump_square_integral(t, x);
        worst[2] = worst[2].max(h2 / (1.0 + x * x));
        worst[3] = worst[3].max((x * fx + (2.0 * c.h - 1.0) / 2.0 * gx * gx) / (1.0 + x * x));
        let dst = (s - t).abs();
        if dst > 0.0 {
            let lin = 1.0 + x.abs();
            let fs = model.drift(s, x);
            let gs = model.diffusion(s, x);
            let hst = model.jump_time_distance(s, t, x);
            worst[4] = worst[4].max((fs - fx).abs() / (lin * dst.powf(c.eta_f)));
            worst[5] = worst[5].max((gs - gx).abs() / (lin * dst.powf(c.eta_g)));
            worst[6] = worst[6].max(hst / (lin * dst.powf(c.eta_h)));
        }
    }
    let judged = |ratio: f64, declared: f64| -> Option<bool> {
        Some(declared.is_finite() && ratio <= declared * (1.0 + ROUNDING_ALLOWANCE) + cfg.slack)
    };
    let mk = |condition, constant, declared: f64, worst_ratio: f64| AuditEntry {
        condition,
        constant,
        declared,
        worst_ratio,
        pass: judged(worst_ratio, declared),
    };
    let mut entries = vec![
        mk("local_lipschitz", "C(R)", lip, worst[0]),
        mk("polynomial_growth", "C(h)", c.growth, worst[1]),
        mk("jump_square_integrability", "K0", c.k0, worst[2]),
        mk("monotone", "K1", c.k1, worst[3]),
        mk("time_regularity_drift", "K2", c.k2, worst[4]),
        mk("time_regularity_diffusion", "K3", c.k3, worst[5]),
        mk("time_regularity_jump", "K4", c.k4, worst[6]),
        mk("one_sided_lipschitz", "K5", c.k5, worst[7]),
    ];
    entries.push(AuditEntry {
        condition: "one_sided_lipschitz_unsquared",
        constant: "K5",
        declared: c.k5,
        worst_ratio: worst[8],
        pass: None,
    });
    AuditReport { radius: r, n_samples: cfg.n_samples, slack: cfg.slack, entries }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive, Label};

    fn nu() -> JumpMeasureSpec {
        JumpMeasureSpec::uniform(1.0, 0.5, 1.0).unwrap()
    }

    fn linear() -> ParametricModel {
        builtin_linear(-1.0, 0.5, 0.2, nu(), 1.0).unwrap()
    }

    #[test]
    fn normalization_of_builtins() {
        let cubic = builtin_cubic(0.5, 0.3, 0.2, nu(), 1.0).unwrap();
        let modulated = time_modulated(&linear(), Envelopes {
            drift: Envelope::power(1.0, 0.25).unwrap(),
            diffusion: Envelope::power(2.0, 0.5).unwrap(),
            jump: Envelope::power(0.5, 0.2).unwrap(),
        })
        .unwrap();
        let models: [&dyn CoefficientModel; 3] = [&linear(), &cubic, &modulated];
        for m in models {
            for i in 0..100 {
                let t = i as f64 / 99.0;
                assert_eq!(m.drift(t, 0.0), 0.0);
                assert_eq!(m.diffusion(t, 0.0), 0.0);
                assert_eq!(m.jump(t, 0.0, 0.0), 0.0);
                assert_eq!(m.jump(t, 0.0, 0.3), 0.0);
            }
        }
    }

    #[test]
    fn linear_evaluation_and_constants() {
        let m = linear();
        assert_eq!(m.drift(0.3, 2.0), -2.0);
        let c = m.constants();
        assert_eq!((c.h, c.eta_f, c.eta_g, c.eta_h), (1.0, 1.0, 1.0, 1.0));
        assert!((m.lipschitz_radius(10.0) - (1.0 + 0.5 + 0.2 * 0.25)).abs() < 1e-15);
        assert_eq!(c.predicted_order(0.8), (0.4, "alpha/2"));
        assert!((c.k0 - 0.04 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn compensator_matches_quadrature() {
        let m = linear();
        assert_eq!(m.compensator_integral(0.1, 1.0), 0.0);
        let q = m.jump_measure().integrate(|z| m.jump(0.1, 1.0, z));
        assert!(q.abs() < 1e-15);
        let two_point = builtin_cubic(0.0, 0.1, 0.7, JumpMeasureSpec::two_point(2.0, 1.0, 1.5, 0.4).unwrap(), 1.0).unwrap();
        for &x in &[-2.0, 0.5, 3.0] {
            let closed = two_point.compensator_integral(0.2, x);
            let quad = two_point.jump_measure().integrate(|z| two_point.jump(0.2, x, z));
            assert!((closed - quad).abs() <= 1e-6 * quad.abs().max(1e-12));
        }
    }

    #[test]
    fn closed_form_jump_functionals_match_quadrature() {
        let two_point = JumpMeasureSpec::two_point(2.0, 1.0, 1.5, 0.4).unwrap();
        let base = builtin_cubic(0.3, 0.1, 0.7, two_point, 1.0).unwrap();
        let rough = time_modulated(&linear(), Envelopes { jump: Envelope::weierstrass(3.0, 0.2).unwrap(), ..Envelopes::default() }).unwrap();
        for m in [&base, &rough] {
            let nu = m.jump_measure();
            for &(s, t, x, y) in &[(0.1, 0.7, 1.5, -0.3), (0.9, 0.2, -4.0, 2.0), (0.5, 0.5, 0.0, 1.0)] {
                let q1 = nu.integrate(|z| (m.jump(t, x, z) - m.jump(t, y, z)).abs());
                let q2 = nu.integrate(|z| (m.jump(s, x, z) - m.jump(t, x, z)).abs());
                let q3 = nu.integrate(|z| m.jump(t, x, z).powi(2));
                let rel = |a: f64, b: f64| (a - b).abs() <= 1e-6 * b.abs().max(1e-12);
                assert!(rel(m.jump_state_distance(t, x, y), q1));
                assert!(rel(m.jump_time_distance(s, t, x), q2));
                assert!(rel(m.jump_square_integral(t, x), q3));
            }
        }
    }

    #[test]
    fn cubic_values_and_one_sided_bound() {
        let m = builtin_cubic(0.0, 0.5, 0.2, nu(), 1.0).unwrap();
        assert_eq!(m.drift(0.0, 2.0), -8.0);
        assert_eq!(m.drift(0.5, 0.0), 0.0);
        let mu = 0.7;
        let m = builtin_cubic(mu, 0.5, 0.2, nu(), 1.0).unwrap();
        let mut rng = derive(5, 0, Label::Auxiliary);
        for _ in 0..10_000 {
            let x = (2.0 * rng.random::<f64>() - 1.0) * 10.0;
            let y = (2.0 * rng.random::<f64>() - 1.0) * 10.0;
            let lhs = (x - y) * (m.drift(0.0, x) - m.drift(0.0, y));
            assert!(lhs <= mu * (x - y).powi(2) * (1.0 + 1e-12) + 1e-12);
        }
        assert_eq!(m.constants().h, 3.0);
        assert_eq!(m.constants().k5, mu);
    }

    #[test]
    fn audit_passes_linear_builtin() {
        let cfg = AuditConfig::new(10.0, 10_000, 1.0);
        for seed in 0..10 {
            let rep = audit(&linear(), &cfg, &mut derive(seed, 0, Label::Auxiliary));
            assert!(rep.passed(), "{rep:#?}");
            for name in ["time_regularity_drift", "time_regularity_diffusion", "time_regularity_jump"] {
                assert_eq!(rep.entry(name).unwrap().worst_ratio, 0.0);
            }
        }
        let cubic = builtin_cubic(0.5, 0.3, 0.2, nu(), 1.0).unwrap();
        for seed in 0..10 {
            let rep = audit(&cubic, &cfg, &mut derive(seed, 1, Label::Auxiliary));
            assert!(rep.passed(), "{rep:#?}");
        }
    }

    struct Drifting {
        jump: JumpMeasureSpec,
        constants: ModelConstants,
    }

    impl CoefficientModel for Drifting {
        fn drift(&self, t: f64, x: f64) -> f64 {
            -(1.0 + t) * x
        }
        fn diffusion(&self, _t: f64, x: f64) -> f64 {
            0.1 * x
        }
        fn jump(&self, _t: f64, _x: f64, _z: f64) -> f64 {
            0.0
        }
        fn jump_measure(&self) -> &JumpMeasureSpec {
            &self.jump
        }
        fn constants(&self) -> &ModelConstants {
            &self.constants
        }
        fn lipschitz_radius(&self, _r: f64) -> f64 {
            2.1
        }
        fn x0(&self) -> f64 {
            1.0
        }
    }

    #[test]
    fn audit_catches_undeclared_time_dependence() {
        let mut constants = *linear().constants();
        constants.k2 = 0.0;
        let m = Drifting { jump: JumpMeasureSpec::none(), constants };
        let rep = audit(&m, &AuditConfig::new(10.0, 10_000, 1.0), &mut derive(1, 0, Label::Auxiliary));
        assert_eq!(rep.entry("time_regularity_drift").unwrap().pass, Some(false));
        assert!(!rep.passed());
    }

    #[test]
    fn modulation() {
        let base = linear();
        let same = time_modulated(&base, Envelopes::default()).unwrap();
        assert_eq!(same, base);
        let m = time_modulated(&base, Envelopes { drift: Envelope::power(1.0, 0.25).unwrap(), ..Envelopes::default() }).unwrap();
        assert_eq!(m.constants().eta_f, 0.25);
        assert_eq!(m.constants().predicted_order(0.8), (0.25, "eta_f"));
        assert!((m.drift(0.0625, 2.0) - (-2.0 * 1.5)).abs() < 1e-15);
        assert!(Envelope::power(1.0, 1.5).is_err());
        assert!(Envelope::power(1.0, 0.0).is_err());
        assert!(time_modulated(&m, Envelopes { drift: Envelope::power(1.0, 0.5).unwrap(), ..Envelopes::default() }).is_err());
        let rep = audit(&m, &AuditConfig::new(10.0, 10_000, 1.0), &mut derive(2, 0, Label::Auxiliary));
        assert!(rep.passed(), "{rep:#?}");
        let k2 = rep.entry("time_regularity_drift").unwrap();
        assert!(k2.worst_ratio > 0.5 * k2.declared);
        let hm = time_modulated(&base, Envelopes { jump: Envelope::power(1.0, 0.2).unwrap(), ..Envelopes::default() }).unwrap();
        assert_eq!(hm.constants().predicted_order(0.8), (0.2, "eta_h"));
    }

    #[test]
    fn rough_envelope_holder_constant() {
        let env = Envelope::weierstrass(1.0, 0.2).unwrap();
        let (lo, hi) = env.bounds(1.0);
        let c = env.holder_constant();
        let mut rng = derive(8, 0, Label::Auxiliary);
        let mut worst: f64 = 0.0;
        for i in 0..200_000 {
            let s = rng.random::<f64>();
            // gaps from 1 down to 1e-12 on a log scale
            let h = 10f64.powf(-12.0 * (i % 97) as f64 / 96.0) * rng.random::<f64>();
            let t = (s + h).min(1.0);
            let v = env.value(s);
            assert!(lo <= v && v <= hi);
            if t > s {
                worst = worst.max((env.value(t) - v).abs() / (t - s).powf(0.2));
            }
        }
        assert!(worst <= c, "{worst} > {c}");
        // rough everywhere: the ratio stays bounded away from zero at small gaps
        assert!(worst > 0.05 * c);
        let m = time_modulated(&linear(), Envelopes { jump: Envelope::weierstrass(3.0, 0.2).unwrap(), ..Envelopes::default() }).unwrap();
        assert_eq!(m.constants().predicted_order(0.8), (0.2, "eta_h"));
        for seed in 0..10 {
            let rep = audit(&m, &AuditConfig::new(10.0, 10_000, 1.0), &mut derive(seed, 3, Label::Auxiliary));
            assert!(rep.passed(), "{rep:#?}");
        }
        assert!(Envelope::weierstrass(1.0, 1.0).is_err());
    }

    #[test]
    fn delta_star_values() {
        let c = ModelConstants { h: 1.0, growth: 1.0, k0: 1.0, k1: 2.0, k2: 1.0, k3: 1.0, k4: 1.0, k5: 4.0, eta_f: 1.0, eta_g: 1.0, eta_h: 1.0 };
        assert_eq!(c.delta_star(0.0), 1.0);
        assert_eq!(c.delta_star(1.0), 0.25);
        assert_eq!(c.delta_star(0.5), 0.5);
    }
}
