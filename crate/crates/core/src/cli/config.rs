//! Flat `key = value` experiment configuration.

use std::path::Path;

use crate::convergence::{ErrorFunctional, LevelLadder, StrongErrorConfig};
use crate::error::{Error, Result};
use crate::models::{builtin_cubic, builtin_linear, time_modulated, Envelope, Envelopes, ParametricModel};
use crate::noise::{JumpMeasureSpec, MarkFamily};
use crate::schemes::ThetaConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelName {
    Linear,
    Cubic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnvelopeKind {
    None,
    Power,
    Weierstrass,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvelopeConfig {
    pub kind: EnvelopeKind,
    pub scale: f64,
    pub eta: f64,
}

impl EnvelopeConfig {
    fn none() -> Self {
        Self { kind: EnvelopeKind::None, scale: 1.0, eta: 1.0 }
    }

    fn build(&self) -> Result<Envelope> {
        match self.kind {
            EnvelopeKind::None => Ok(Envelope::Identity),
            EnvelopeKind::Power => Envelope::power(self.scale, self.eta),
            EnvelopeKind::Weierstrass => Envelope::weierstrass(self.scale, self.eta),
        }
    }
}

/// Every knob of every command; unused keys are ignored by a command but
/// still range-checked and echoed.
#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub alpha: f64,
    pub horizon: f64,
    pub delta: f64,
    pub theta: f64,
    pub model: ModelName,
    pub a: f64,
    pub mu: f64,
    pub sigma: f64,
    pub gamma: f64,
    pub x0: f64,
    pub lambda: f64,
    pub c: f64,
    pub mass: f64,
    pub family: String,
    pub point: f64,
    pub envelope_f: EnvelopeConfig,
    pub envelope_g: EnvelopeConfig,
    pub envelope_h: EnvelopeConfig,
    pub n_paths: usize,
    pub seed: u64,
    pub ladder_coarse: u32,
    pub ladder_fine: u32,
    pub ladder_reference: u32,
    pub functional: ErrorFunctional,
    pub max_failure_rate: f64,
    pub tolerance: f64,
    pub moments: Vec<f64>,
    pub oracle_scale: f64,
    pub bound_scale: f64,
    pub solver_tol: f64,
    pub solver_max_iter: usize,
    pub audit_radius: f64,
    pub audit_samples: usize,
    pub audit_slack: f64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            alpha: 0.8,
            horizon: 1.0,
            delta: 0.01,
            theta: 1.0,
            model: ModelName::Linear,
            a: -1.0,
            mu: 0.5,
            sigma: 0.5,
            gamma: 0.2,
            x0: 1.0,
            lambda: 1.0,
            c: 0.5,
            mass: 1.0,
            family: "uniform".into(),
            point: 0.25,
            envelope_f: EnvelopeConfig::none(),
            envelope_g: EnvelopeConfig::none(),
            envelope_h: EnvelopeConfig::none(),
            n_paths: 1000,
            seed: 1,
            ladder_coarse: 4,
            ladder_fine: 8,
            ladder_reference: 10,
            functional: ErrorFunctional::Union,
            max_failure_rate: 1e-3,
            tolerance: 0.15,
            moments: vec![0.0, 1.0, 2.0],
            oracle_scale: 1.0,
            bound_scale: 1.0,
            solver_tol: 1e-12,
            solver_max_iter: 100,
            audit_radius: 10.0,
            audit_samples: 10_000,
            audit_slack: 0.0,
        }
    }
}

const KEYS: &[&str] = &[
    "alpha", "T", "delta", "theta", "model", "a", "mu", "sigma", "gamma", "x0", "lambda", "c", "mass", "family",
    "point", "envelope_f", "scale_f", "eta_f", "envelope_g", "scale_g", "eta_g", "envelope_h", "scale_h", "eta_h",
    "n_paths", "seed", "ladder_coarse", "ladder_fine", "ladder_reference", "functional", "max_failure_rate",
    "tolerance", "moments", "oracle_scale", "bound_scale", "solver_tol", "solver_max_iter", "audit_radius",
    "audit_samples", "audit_slack",
];

fn bad(key: &str, reason: impl Into<String>) -> Error {
    Error::Config { key: key.to_string(), reason: reason.into() }
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| bad(key, format!("cannot parse `{value}`")))
}

fn envelope_kind(key: &str, value: &str) -> Result<EnvelopeKind> {
    match value {
        "none" => Ok(EnvelopeKind::None),
        "power" => Ok(EnvelopeKind::Power),
        "weierstrass" => Ok(EnvelopeKind::Weierstrass),
        _ => Err(bad(key, format!("unknown envelope `{value}` (none, power, weierstrass)"))),
    }
}

impl Config {
    /// Applies one `key=value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "alpha" => self.alpha = num(key, value)?,
            "T" => self.horizon = num(key, value)?,
            "delta" => self.delta = num(key, value)?,
            "theta" => self.theta = num(key, value)?,
            "model" => {
                self.model = match value {
                    "linear" => ModelName::Linear,
                    "cubic" => ModelName::Cubic,
                    _ => return Err(bad(key, format!("unknown model `{value}` (linear, cubic)"))),
                }
            }
            "a" => self.a = num(key, value)?,
            "mu" => self.mu = num(key, value)?,
            "sigma" => self.sigma = num(key, value)?,
            "gamma" => self.gamma = num(key, value)?,
            "x0" => self.x0 = num(key, value)?,
            "lambda" => self.lambda = num(key, value)?,
            "c" => self.c = num(key, value)?,
            "mass" => self.mass = num(key, value)?,
            "family" => {
                if value != "uniform" && value != "two_point" {
                    return Err(bad(key, format!("unknown mark family `{value}` (uniform, two_point)")));
                }
                self.family = value.to_string();
            }
            "point" => self.point = num(key, value)?,
            "envelope_f" => self.envelope_f.kind = envelope_kind(key, value)?,
            "scale_f" => self.envelope_f.scale = num(key, value)?,
            "eta_f" => self.envelope_f.eta = num(key, value)?,
            "envelope_g" => self.envelope_g.kind = envelope_kind(key, value)?,
            "scale_g" => self.envelope_g.scale = num(key, value)?,
            "eta_g" => self.envelope_g.eta = num(key, value)?,
            "envelope_h" => self.envelope_h.kind = envelope_kind(key, value)?,
            "scale_h" => self.envelope_h.scale = num(key, value)?,
            "eta_h" => self.envelope_h.eta = num(key, value)?,
            "n_paths" => self.n_paths = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "ladder_coarse" => self.ladder_coarse = num(key, value)?,
            "ladder_fine" => self.ladder_fine = num(key, value)?,
            "ladder_reference" => self.ladder_reference = num(key, value)?,
            "functional" => {
                self.functional = match value {
                    "union" => ErrorFunctional::Union,
                    "coarse_grid" => ErrorFunctional::CoarseGrid,
                    _ => return Err(bad(key, format!("unknown functional `{value}` (union, coarse_grid)"))),
                }
            }
            "max_failure_rate" => self.max_failure_rate = num(key, value)?,
            "tolerance" => self.tolerance = num(key, value)?,
            "moments" => {
                self.moments = value
                    .split(',')
                    .map(|p| num::<f64>(key, p.trim()))
                    .collect::<Result<Vec<_>>>()?;
            }
            "oracle_scale" => self.oracle_scale = num(key, value)?,
            "bound_scale" => self.bound_scale = num(key, value)?,
            "solver_tol" => self.solver_tol = num(key, value)?,
            "solver_max_iter" => self.solver_max_iter = num(key, value)?,
            "audit_radius" => self.audit_radius = num(key, value)?,
            "audit_samples" => self.audit_samples = num(key, value)?,
            "audit_slack" => self.audit_slack = num(key, value)?,
            _ => return Err(bad(key, "unknown key")),
        }
        Ok(())
    }

    /// Parses `--set` style `key=value`.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair.split_once('=').ok_or_else(|| bad(pair.trim(), "expected key=value"))?;
        self.set(k.trim(), v)
    }

    /// Applies a config file over the current values. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| bad(line, format!("line {} is not key=value", lineno + 1)))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        self.apply_text(&text)
    }

    fn get(&self, key: &str) -> String {
        let f = |x: f64| format!("{x:?}");
        let env = |e: &EnvelopeConfig| match e.kind {
            EnvelopeKind::None => "none",
            EnvelopeKind::Power => "power",
            EnvelopeKind::Weierstrass => "weierstrass",
        };
        match key {
            "alpha" => f(self.alpha),
            "T" => f(self.horizon),
            "delta" => f(self.delta),
            "theta" => f(self.theta),
            "model" => match self.model {
                ModelName::Linear => "linear".into(),
                ModelName::Cubic => "cubic".into(),
            },
            "a" => f(self.a),
            "mu" => f(self.mu),
            "sigma" => f(self.sigma),
            "gamma" => f(self.gamma),
            "x0" => f(self.x0),
            "lambda" => f(self.lambda),
            "c" => f(self.c),
            "mass" => f(self.mass),
            "family" => self.family.clone(),
            "point" => f(self.point),
            "envelope_f" => env(&self.envelope_f).into(),
            "scale_f" => f(self.envelope_f.scale),
            "eta_f" => f(self.envelope_f.eta),
            "envelope_g" => env(&self.envelope_g).into(),
            "scale_g" => f(self.envelope_g.scale),
            "eta_g" => f(self.envelope_g.eta),
            "envelope_h" => env(&self.envelope_h).into(),
            "scale_h" => f(self.envelope_h.scale),
            "eta_h" => f(self.envelope_h.eta),
            "n_paths" => self.n_paths.to_string(),
            "seed" => self.seed.to_string(),
            "ladder_coarse" => self.ladder_coarse.to_string(),
            "ladder_fine" => self.ladder_fine.to_string(),
            "ladder_reference" => self.ladder_reference.to_string(),
            "functional" => match self.functional {
                ErrorFunctional::Union => "union".into(),
                ErrorFunctional::CoarseGrid => "coarse_grid".into(),
            },
            "max_failure_rate" => f(self.max_failure_rate),
            "tolerance" => f(self.tolerance),
            "moments" => self.moments.iter().map(|&p| f(p)).collect::<Vec<_>>().join(","),
            "oracle_scale" => f(self.oracle_scale),
            "bound_scale" => f(self.bound_scale),
            "solver_tol" => f(self.solver_tol),
            "solver_max_iter" => self.solver_max_iter.to_string(),
            "audit_radius" => f(self.audit_radius),
            "audit_samples" => self.audit_samples.to_string(),
            "audit_slack" => f(self.audit_slack),
            _ => unreachable!("unknown key {key}"),
        }
    }

    /// Every key with its effective value, in a fixed order.
    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        KEYS.iter().map(|&k| (k, self.get(k))).collect()
    }

    /// The effective configuration as a config file; parsing it back
    /// reproduces `self`.
    pub fn to_text(&self) -> String {
        self.pairs().into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// Range checks that do not need a model.
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, key: &str, reason: &str| if ok { Ok(()) } else { Err(bad(key, reason)) };
        check(self.alpha > 0.0 && self.alpha < 1.0, "alpha", "must lie in (0,1)")?;
        check(self.horizon > 0.0 && self.horizon.is_finite(), "T", "must be positive")?;
        check(self.delta > 0.0 && self.delta < 1.0, "delta", "must lie in (0,1)")?;
        check((0.0..=1.0).contains(&self.theta), "theta", "must lie in [0,1]")?;
        check(self.n_paths >= 1, "n_paths", "must be at least 1")?;
        check(self.x0.is_finite(), "x0", "must be finite")?;
        check(self.mu >= 0.0, "mu", "must be >= 0")?;
        check(self.lambda >= 0.0 && self.lambda.is_finite(), "lambda", "must be finite and >= 0")?;
        check(self.c > 0.0 && self.c.is_finite(), "c", "must be positive")?;
        check(self.mass >= 0.0 && self.mass.is_finite(), "mass", "must be finite and >= 0")?;
        check(
            self.ladder_coarse <= self.ladder_fine && self.ladder_fine < self.ladder_reference && self.ladder_fine - self.ladder_coarse >= 2,
            "ladder_fine",
            "need ladder_coarse + 2 <= ladder_fine < ladder_reference",
        )?;
        check(self.ladder_reference <= 30, "ladder_reference", "must be at most 30")?;
        check(self.ladder_coarse >= 1, "ladder_coarse", "must be at least 1")?;
        check((0.0..1.0).contains(&self.max_failure_rate), "max_failure_rate", "must lie in [0,1)")?;
        check(self.tolerance >= 0.0, "tolerance", "must be >= 0")?;
        check(self.moments.iter().all(|&p| p >= 0.0 && p.is_finite()), "moments", "entries must be finite and >= 0")?;
        check(self.oracle_scale > 0.0, "oracle_scale", "must be positive")?;
        check(self.bound_scale > 0.0, "bound_scale", "must be positive")?;
        check(self.solver_tol > 0.0, "solver_tol", "must be positive")?;
        check(self.solver_max_iter >= 1, "solver_max_iter", "must be at least 1")?;
        check(self.audit_radius > 0.0, "audit_radius", "must be positive")?;
        check(self.audit_samples >= 1, "audit_samples", "must be at least 1")?;
        check(self.audit_slack >= 0.0, "audit_slack", "must be >= 0")?;
        self.jump_measure()?;
        self.model()?;
        Ok(())
    }

    pub fn jump_measure(&self) -> Result<JumpMeasureSpec> {
        let family = match self.family.as_str() {
            "uniform" => MarkFamily::Uniform,
            _ => MarkFamily::TwoPoint { point: self.point },
        };
        JumpMeasureSpec::new(self.lambda, self.c, self.mass, family).map_err(|e| bad("family", e.to_string()))
    }

    /// The configured model on horizon T.
    pub fn model(&self) -> Result<ParametricModel> {
        let jump = self.jump_measure()?;
        let base = match self.model {
            ModelName::Linear => builtin_linear(self.a, self.sigma, self.gamma, jump, self.x0),
            ModelName::Cubic => builtin_cubic(self.mu, self.sigma, self.gamma, jump, self.x0),
        }
        .and_then(|m| m.with_horizon(self.horizon))
        .map_err(|e| bad("model", e.to_string()))?;
        let envelopes = Envelopes {
            drift: self.envelope_f.build().map_err(|e| bad("eta_f", e.to_string()))?,
            diffusion: self.envelope_g.build().map_err(|e| bad("eta_g", e.to_string()))?,
            jump: self.envelope_h.build().map_err(|e| bad("eta_h", e.to_string()))?,
        };
        time_modulated(&base, envelopes).map_err(|e| bad("model", e.to_string()))
    }

    pub fn scheme(&self) -> Result<ThetaConfig> {
        let cfg = ThetaConfig::new(self.theta, self.delta)?.with_solver(self.solver_tol, self.solver_max_iter)?;
        cfg.validate_for(&self.model()?).map_err(|e| bad("delta", e.to_string()))?;
        Ok(cfg)
    }

    pub fn ladder(&self) -> Result<LevelLadder> {
        LevelLadder::powers_of_two(self.ladder_coarse, self.ladder_fine, self.ladder_reference)
            .map_err(|e| bad("ladder_fine", e.to_string()))
    }

    pub fn strong_error_config(&self) -> Result<StrongErrorConfig> {
        let mut cfg = StrongErrorConfig::new(self.alpha, self.horizon, self.theta, self.n_paths, self.seed);
        cfg.ladder = self.ladder()?;
        cfg.functional = self.functional;
        cfg.max_failure_rate = self.max_failure_rate;
        cfg.solver_tol = self.solver_tol;
        cfg.solver_max_iter = self.solver_max_iter;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::CoefficientModel;

    #[test]
    fn round_trip_through_text() {
        let mut c = Config::default();
        c.set_pair("envelope_h=weierstrass").unwrap();
        c.set_pair("eta_h = 0.2").unwrap();
        c.set_pair("moments=0,0.5,3").unwrap();
        c.set_pair("T=2.5").unwrap();
        c.set_pair("delta=0.1").unwrap();
        let mut back = Config::default();
        back.apply_text(&c.to_text()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_text(), c.to_text());
        assert_eq!(c.to_text().lines().count(), KEYS.len());
    }

    #[test]
    fn errors_name_the_key() {
        let mut c = Config::default();
        let e = c.apply_text("alpha = 0.5\nbogus = 1\n").unwrap_err();
        assert!(matches!(&e, Error::Config { key, .. } if key == "bogus"), "{e}");
        let e = c.set_pair("n_paths=ten").unwrap_err();
        assert!(matches!(&e, Error::Config { key, .. } if key == "n_paths"));
        c.set_pair("alpha=1.5").unwrap();
        assert!(matches!(c.validate().unwrap_err(), Error::Config { key, .. } if key == "alpha"));
        assert!(c.apply_text("just words").is_err());
    }

    #[test]
    fn default_is_valid_and_matches_linear_builtin() {
        let c = Config::default();
        c.validate().unwrap();
        let m = c.model().unwrap();
        assert_eq!(m.constants().predicted_order(c.alpha).0, 0.4);
        c.scheme().unwrap();
    }

    #[test]
    fn delta_star_is_checked() {
        let mut c = Config::default();
        c.apply_text("model=cubic\nmu=10\ndelta=0.2").unwrap();
        assert!(matches!(c.scheme().unwrap_err(), Error::Config { key, .. } if key == "delta"));
    }
}
