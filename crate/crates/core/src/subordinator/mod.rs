//! One-sided α-stable subordinators, the step approximation of their
//! inverse, and closed-form moments of the inverse.

mod moments;
mod path;
mod stable;

pub use moments::{
    exp_moment_power, increment_moment_oracle, mittag_leffler, mittag_leffler_with, moment_oracle,
    ExpMoment, ExpMomentSum, SeriesOptions,
};
pub use path::{generate_path, generate_path_with, sample_clock_values, SubordinatorPath, DEFAULT_STEP_CAP};
pub use stable::{sample_stable_increment, StableSampler, StableSpec};
