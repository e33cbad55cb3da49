//! Chunked map over replication indices.
//!
//! Work is split into fixed-size chunks of indices. Chunk results are
//! returned in index order and callers reduce them sequentially, so every
//! accumulated statistic is independent of the number of worker threads.
//! With the `parallel` feature the chunks run on the rayon pool; without it
//! they run in a plain loop.

use std::ops::Range;

/// Replications per chunk used by the experiment drivers.
pub const CHUNK: usize = 64;

fn chunk_ranges(n: usize, chunk: usize) -> impl Iterator<Item = Range<usize>> {
    let chunk = chunk.max(1);
    (0..n.div_ceil(chunk)).map(move |c| c * chunk..((c + 1) * chunk).min(n))
}

pub fn map_chunks_sequential<T, F>(n: usize, chunk: usize, f: F) -> Vec<T>
where
    F: Fn(Range<usize>) -> T,
{
    chunk_ranges(n, chunk).map(f).collect()
}

#[cfg(feature = "parallel")]
pub fn map_chunks_parallel<T, F>(n: usize, chunk: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(Range<usize>) -> T + Sync + Send,
{
    use rayon::prelude::*;
    let ranges: Vec<Range<usize>> = chunk_ranges(n, chunk).collect();
    ranges.into_par_iter().map(f).collect()
}

/// Maps `f` over consecutive index chunks of `0..n`, results in chunk order.
pub fn map_chunks<T, F>(n: usize, chunk: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(Range<usize>) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        map_chunks_parallel(n, chunk, f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_chunks_sequential(n, chunk, f)
    }
}

/// Runs `f` with at most `workers` threads (0 means all processors).
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        if workers == 0 {
            return f();
        }
        match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = workers;
        f()
    }
}

/// Running sums for a Monte Carlo mean and its standard error.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Moments {
    pub n: usize,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn merge(&mut self, other: &Moments) {
        self.n += other.n;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            return f64::NAN;
        }
        self.sum / self.n as f64
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        let mean = self.sum / n;
        ((self.sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
    }

    pub fn std_error(&self) -> f64 {
        if self.n == 0 {
            return f64::NAN;
        }
        (self.variance() / self.n as f64).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunks_cover_range_in_order() {
        let got = map_chunks(1000, 64, |r| r);
        let flat: Vec<usize> = got.into_iter().flatten().collect();
        assert_eq!(flat, (0..1000).collect::<Vec<_>>());
        assert!(map_chunks(0, 64, |r| r).is_empty());
    }

    #[test]
    fn result_independent_of_workers() {
        let run = || {
            let parts = map_chunks(10_000, CHUNK, |r| {
                let mut m = Moments::default();
                for i in r {
                    m.push((i as f64).sqrt().sin());
                }
                m
            });
            let mut total = Moments::default();
            for p in &parts {
                total.merge(p);
            }
            total
        };
        let one = with_workers(1, run);
        let many = with_workers(4, run);
        assert_eq!(one, many);
        assert_eq!(one, map_chunks_sequential(10_000, CHUNK, |r| {
            let mut m = Moments::default();
            for i in r {
                m.push((i as f64).sqrt().sin());
            }
            m
        }).iter().fold(Moments::default(), |mut a, b| { a.merge(b); a }));
    }

    #[test]
    fn moments_basic() {
        let mut m = Moments::default();
        for x in [1.0, 2.0, 3.0, 4.0] {
            m.push(x);
        }
        assert_eq!(m.mean(), 2.5);
        assert!((m.variance() - 5.0 / 3.0).abs() < 1e-15);
    }
}
