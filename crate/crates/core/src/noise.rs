//! Driving noise on the operational grid.
//!
//! Because `E_{τ_n} = nδ`, the Brownian increment of `B∘E` between grid
//! points is `B_{(n+1)δ} - B_{nδ} ~ N(0, δ)`, and the Poisson random measure
//! over one step has `Poisson(λ m_ν δ)` atoms with marks drawn from `ν/m_ν`.

use rand::Rng;
use rand_distr::{Distribution, Open01, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Label};

/// Named finite mark measures on `{|z| < c}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum MarkFamily {
    /// Mass spread uniformly on (-c, c).
    Uniform,
    /// Half the mass at each of ±point, with 0 < point < c.
    TwoPoint { point: f64 },
}

/// Jump rate λ and the finite measure ν on `{|z| < c}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpMeasureSpec {
    pub lambda: f64,
    pub c: f64,
    pub total_mass: f64,
    pub family: MarkFamily,
}

// nodes for midpoint quadrature over the uniform family; even so no cell straddles 0
const QUAD_NODES: usize = 2048;

impl JumpMeasureSpec {
    pub fn new(lambda: f64, c: f64, total_mass: f64, family: MarkFamily) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::domain(format!("jump rate must be finite and >= 0, got {lambda}")));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::domain(format!("mark radius must be positive, got {c}")));
        }
        if !(total_mass >= 0.0 && total_mass.is_finite()) {
            return Err(Error::domain(format!("mark mass must be finite and >= 0, got {total_mass}")));
        }
        if let MarkFamily::TwoPoint { point } = family {
            if !(point > 0.0 && point < c) {
                return Err(Error::domain(format!("two-point mark {point} must lie in (0, {c})")));
            }
        }
        Ok(Self { lambda, c, total_mass, family })
    }

    /// Uniform mass on (-c, c).
    pub fn uniform(lambda: f64, c: f64, total_mass: f64) -> Result<Self> {
        Self::new(lambda, c, total_mass, MarkFamily::Uniform)
    }

    pub fn two_point(lambda: f64, c: f64, total_mass: f64, point: f64) -> Result<Self> {
        Self::new(lambda, c, total_mass, MarkFamily::TwoPoint { point })
    }

    /// No jump activity at all.
    pub fn none() -> Self {
        Self { lambda: 0.0, c: 1.0, total_mass: 0.0, family: MarkFamily::Uniform }
    }

    /// One mark from `ν / m_ν`; always strictly inside (-c, c).
    pub fn sample_mark<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.family {
            MarkFamily::Uniform => {
                let u: f64 = Open01.sample(rng);
                let z = self.c * (2.0 * u - 1.0);
                z.clamp(-self.c * (1.0 - f64::EPSILON), self.c * (1.0 - f64::EPSILON))
            }
            MarkFamily::TwoPoint { point } => {
                if rng.random::<bool>() {
                    point
                } else {
                    -point
                }
            }
        }
    }

    /// `∫ g dν`, exact for the two-point family and by midpoint quadrature
    /// with 2048 nodes for the uniform one.
    pub fn integrate(&self, g: impl Fn(f64) -> f64) -> f64 {
        if self.total_mass == 0.0 {
            return 0.0;
        }
        match self.family {
            MarkFamily::Uniform => {
                let h = 2.0 * self.c / QUAD_NODES as f64;
                let s: f64 = (0..QUAD_NODES).map(|i| g(-self.c + (i as f64 + 0.5) * h)).sum();
                self.total_mass * s / QUAD_NODES as f64
            }
            MarkFamily::TwoPoint { point } => 0.5 * self.total_mass * (g(point) + g(-point)),
        }
    }

    /// `∫ z dν`.
    pub fn first_moment(&self) -> f64 {
        // both families are symmetric
        0.0
    }

    /// `∫ |z| dν`.
    pub fn abs_moment(&self) -> f64 {
        match self.family {
            MarkFamily::Uniform => self.total_mass * self.c / 2.0,
            MarkFamily::TwoPoint { point } => self.total_mass * point,
        }
    }

    /// `∫ z² dν`.
    pub fn second_moment(&self) -> f64 {
        match self.family {
            MarkFamily::Uniform => self.total_mass * self.c * self.c / 3.0,
            MarkFamily::TwoPoint { point } => self.total_mass * point * point,
        }
    }
}

/// N i.i.d. `N(0, δ)` variates.
pub fn gaussian_increments<R: Rng + ?Sized>(n_steps: usize, delta: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::domain(format!("delta must be positive, got {delta}")));
    }
    let sd = delta.sqrt();
    Ok((0..n_steps)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            sd * z
        })
        .collect())
}

/// Marks of the Poisson random measure over one operational window of length δ.
pub fn jump_batch<R: Rng + ?Sized>(spec: &JumpMeasureSpec, delta: f64, rng: &mut R) -> Vec<f64> {
    let mean = spec.lambda * spec.total_mass * delta;
    if !(mean > 0.0) {
        return Vec::new();
    }
    let count: f64 = Poisson::new(mean).expect("positive finite mean").sample(rng);
    (0..count as usize).map(|_| spec.sample_mark(rng)).collect()
}

/// Operational weight `λδ` of the compensator integral in one step.
pub fn compensator_weight(spec: &JumpMeasureSpec, delta: f64) -> f64 {
    spec.lambda * delta
}

/// Gaussian increments and jump batches for the N steps of one path.
#[derive(Clone, Debug, PartialEq)]
pub struct NoisePanel {
    delta: f64,
    gauss: Vec<f64>,
    jumps: Vec<Vec<f64>>,
}

impl NoisePanel {
    pub fn new(delta: f64, gauss: Vec<f64>, jumps: Vec<Vec<f64>>) -> Result<Self> {
        if gauss.len() != jumps.len() {
            return Err(Error::domain(format!(
                "noise panel has {} Gaussian increments but {} jump batches",
                gauss.len(),
                jumps.len()
            )));
        }
        Ok(Self { delta, gauss, jumps })
    }

    /// A panel without noise (`ΔB = 0`, no marks).
    pub fn zero(n_steps: usize, delta: f64) -> Self {
        Self { delta, gauss: vec![0.0; n_steps], jumps: vec![Vec::new(); n_steps] }
    }

    /// Draws the panel from the Gaussian and jump sub-streams of
    /// replication `path_index` under `master_seed`.
    pub fn generate(
        n_steps: usize,
        delta: f64,
        spec: &JumpMeasureSpec,
        master_seed: u64,
        path_index: u64,
    ) -> Result<Self> {
        let mut g = rng::derive(master_seed, path_index, Label::Gaussian);
        let mut j = rng::derive(master_seed, path_index, Label::Jumps);
        let gauss = gaussian_increments(n_steps, delta, &mut g)?;
        let jumps = (0..n_steps).map(|_| jump_batch(spec, delta, &mut j)).collect();
        Ok(Self { delta, gauss, jumps })
    }

    pub fn n_steps(&self) -> usize {
        self.gauss.len()
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn gauss(&self) -> &[f64] {
        &self.gauss
    }

    pub fn jumps(&self) -> &[Vec<f64>] {
        &self.jumps
    }
}
