use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Open01};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stability index, operational step and physical horizon of a simulation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StableSpec {
    alpha: f64,
    delta: f64,
    horizon: f64,
}

impl StableSpec {
    pub fn new(alpha: f64, delta: f64, horizon: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::domain(format!("alpha must lie in (0,1), got {alpha}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::domain(format!("delta must lie in (0,1), got {delta}")));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::domain(format!("horizon must be positive, got {horizon}")));
        }
        Ok(Self { alpha, delta, horizon })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn with_delta(&self, delta: f64) -> Result<Self> {
        Self::new(self.alpha, delta, self.horizon)
    }
}

/// Law of `D_δ` for the subordinator with Laplace exponent ξ^α.
///
/// Uses Kanter's representation of the standard positive stable variate,
/// `S = sin(αθ) / sin(θ)^{1/α} · (sin((1-α)θ) / W)^{(1-α)/α}` with θ uniform
/// on (0, π) and W unit exponential, so that `E[exp(-ξ S)] = exp(-ξ^α)`;
/// the increment over an operational step δ is `δ^{1/α} S`.
#[derive(Clone, Copy, Debug)]
pub struct StableSampler {
    alpha: f64,
    scale: f64,
}

impl StableSampler {
    pub fn new(alpha: f64, delta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::domain(format!("alpha must lie in (0,1), got {alpha}")));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::domain(format!("delta must be positive, got {delta}")));
        }
        Ok(Self { alpha, scale: delta.powf(1.0 / alpha) })
    }

    fn log_standard<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let a = self.alpha;
        let u: f64 = Open01.sample(rng);
        let v: f64 = Open01.sample(rng);
        let theta = PI * u;
        let w = -v.ln();
        (a * theta).sin().ln() - theta.sin().ln() / a
            + (1.0 - a) / a * (((1.0 - a) * theta).sin().ln() - w.ln())
    }
}

impl Distribution<f64> for StableSampler {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let x = self.scale * self.log_standard(rng).exp();
            // over/underflow has probability far below 1e-80; redraw if it happens
            if x > 0.0 && x.is_finite() {
                return x;
            }
        }
    }
}

/// One draw of `D_δ`; strictly positive and finite.
pub fn sample_stable_increment<R: Rng + ?Sized>(alpha: f64, delta: f64, rng: &mut R) -> Result<f64> {
    Ok(StableSampler::new(alpha, delta)?.sample(rng))
}
