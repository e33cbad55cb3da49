use rand::Rng;
use rand_distr::Distribution;

use super::stable::{StableSampler, StableSpec};
use crate::error::{Error, Result};
use crate::rng::{self, Label};

/// Default cap on the number of operational steps of one path.
pub const DEFAULT_STEP_CAP: usize = 1_000_000_000;

/// Sampled values `D_0 = 0, D_δ, ..., D_{(N+1)δ}` with `D_{Nδ} ≤ T < D_{(N+1)δ}`.
///
/// The random time grid of the schemes is `τ_n = D_{nδ}`, n = 0..=N. The
/// step approximation of the inverse subordinator is a query on the stored
/// values: `Ẽ_t = nδ` for `t ∈ [D_{nδ}, D_{(n+1)δ})`.
#[derive(Clone, Debug, PartialEq)]
pub struct SubordinatorPath {
    spec: StableSpec,
    values: Vec<f64>,
}

impl SubordinatorPath {
    /// Wraps stored values, checking the path invariants.
    pub fn from_values(spec: StableSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 || values[0] != 0.0 {
            return Err(Error::domain("a path needs D_0 = 0 and at least one increment"));
        }
        if values.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::domain("path values must be strictly increasing"));
        }
        let n = values.len() - 2;
        let t = spec.horizon();
        if !(values[n] <= t && t < values[n + 1]) {
            return Err(Error::domain("path must end with exactly one point beyond the horizon"));
        }
        Ok(Self { spec, values })
    }

    pub fn spec(&self) -> &StableSpec {
        &self.spec
    }

    pub fn delta(&self) -> f64 {
        self.spec.delta()
    }

    pub fn horizon(&self) -> f64 {
        self.spec.horizon()
    }

    /// N, the index of the last grid point inside the horizon.
    pub fn n_steps(&self) -> usize {
        self.values.len() - 2
    }

    /// All stored values including the overshoot point.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Grid times `τ_0..=τ_N` (overshoot excluded).
    pub fn grid(&self) -> &[f64] {
        &self.values[..self.values.len() - 1]
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(0.0..=self.horizon()).contains(&t) {
            return Err(Error::domain(format!(
                "time {t} outside [0, {}]",
                self.horizon()
            )));
        }
        Ok(())
    }

    /// `min{n : D_{nδ} > t} - 1`, equivalently `max{n : τ_n ≤ t}`.
    pub fn inverse_index_at(&self, t: f64) -> Result<usize> {
        self.check_time(t)?;
        Ok(self.values.partition_point(|&d| d <= t) - 1)
    }

    /// `Ẽ_t`.
    pub fn inverse_at(&self, t: f64) -> Result<f64> {
        Ok(self.inverse_index_at(t)? as f64 * self.delta())
    }
}

/// Accumulates stable increments from `rng` until the path passes the
/// horizon at an index that is a multiple of `stride`.
///
/// With `stride = 1` this is the plain path; coupled experiments use a
/// power-of-two stride so that every coarser subsample also has its
/// overshoot point.
pub fn sample_clock_values<R: Rng + ?Sized>(
    spec: &StableSpec,
    rng: &mut R,
    cap: usize,
    stride: usize,
) -> Result<Vec<f64>> {
    let stride = stride.max(1);
    let sampler = StableSampler::new(spec.alpha(), spec.delta())?;
    let t = spec.horizon();
    let mut values = Vec::with_capacity(((t.powf(spec.alpha()) / spec.delta()) as usize).saturating_mul(2).min(1 << 24) + 2);
    values.push(0.0);
    let mut d = 0.0;
    loop {
        let i = values.len() - 1;
        if d > t && i % stride == 0 {
            return Ok(values);
        }
        if i > cap {
            return Err(Error::StepCap { cap });
        }
        d += sampler.sample(rng);
        values.push(d);
    }
}

/// Path driven by an explicit stream, with a step cap.
pub fn generate_path_with<R: Rng + ?Sized>(spec: StableSpec, rng: &mut R, cap: usize) -> Result<SubordinatorPath> {
    let values = sample_clock_values(&spec, rng, cap, 1)?;
    SubordinatorPath::from_values(spec, values)
}

/// Path for `seed`: the stable sub-stream of replication 0.
pub fn generate_path(spec: StableSpec, seed: u64) -> Result<SubordinatorPath> {
    generate_path_with(spec, &mut rng::derive(seed, 0, Label::Stable), DEFAULT_STEP_CAP)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec() -> StableSpec {
        StableSpec::new(0.6, 0.05, 2.0).unwrap()
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_path(spec(), 5).unwrap();
        let b = generate_path(spec(), 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate_path(spec(), 6).unwrap());
    }

    #[test]
    fn cap_becomes_error() {
        let err = generate_path_with(spec(), &mut rng::derive(1, 0, Label::Stable), 2);
        assert!(matches!(err, Err(Error::StepCap { cap: 2 })));
    }

    #[test]
    fn first_plateau_and_grid_points() {
        let p = generate_path(spec(), 9).unwrap();
        let d = p.values();
        assert_eq!(p.inverse_at(0.0).unwrap(), 0.0);
        assert_eq!(p.inverse_at(d[1] * 0.5).unwrap(), 0.0);
        for n in 0..=p.n_steps() {
            assert_eq!(p.inverse_at(d[n]).unwrap(), n as f64 * p.delta());
        }
        assert!(p.inverse_at(-1e-9).is_err());
        assert!(p.inverse_at(2.0 + 1e-9).is_err());
        assert_eq!(p.inverse_index_at(2.0).unwrap(), p.n_steps());
    }

    #[test]
    fn from_values_rejects_broken_paths() {
        let s = StableSpec::new(0.5, 0.1, 1.0).unwrap();
        assert!(SubordinatorPath::from_values(s, vec![0.0, 0.5, 1.5]).is_ok());
        assert!(SubordinatorPath::from_values(s, vec![0.1, 0.5, 1.5]).is_err());
        assert!(SubordinatorPath::from_values(s, vec![0.0, 0.5, 0.5, 1.5]).is_err());
        assert!(SubordinatorPath::from_values(s, vec![0.0, 1.2, 1.5]).is_err());
        assert!(SubordinatorPath::from_values(s, vec![0.0, 0.5, 0.9]).is_err());
    }

    #[test]
    fn stride_extends_to_a_multiple() {
        let s = spec();
        let v = sample_clock_values(&s, &mut rng::derive(3, 0, Label::Stable), DEFAULT_STEP_CAP, 16).unwrap();
        assert_eq!((v.len() - 1) % 16, 0);
        assert!(*v.last().unwrap() > s.horizon());
        let plain = generate_path(s, 3).unwrap();
        assert_eq!(&v[..plain.values().len()], plain.values());
    }

    proptest! {
        #[test]
        fn inverse_matches_linear_scan(seed in 0u64..10_000, frac in 0.0f64..=1.0) {
            let p = generate_path(spec(), seed).unwrap();
            let t = frac * p.horizon();
            let mut scan = 0;
            for (n, &d) in p.values().iter().enumerate() {
                if d > t { break; }
                scan = n;
            }
            prop_assert_eq!(p.inverse_index_at(t).unwrap(), scan);
            prop_assert_eq!(p.inverse_at(t).unwrap(), scan as f64 * p.delta());
        }

        #[test]
        fn path_invariants(seed in 0u64..10_000, alpha in 0.2f64..0.95) {
            let s = StableSpec::new(alpha, 0.02, 1.0).unwrap();
            let p = generate_path(s, seed).unwrap();
            let v = p.values();
            prop_assert_eq!(v[0], 0.0);
            prop_assert!(v.windows(2).all(|w| w[1] > w[0]));
            prop_assert!(v[p.n_steps()] <= 1.0 && v[p.n_steps() + 1] > 1.0);
        }
    }
}
