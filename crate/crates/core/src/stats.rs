//! Streaming moments and deterministic parallel sample reduction.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Welford accumulator for numerically stable streaming mean and variance.
#[derive(Debug, Clone, Copy, Default)]
pub struct Welford {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn new() -> Self {
        Welford::default()
    }

    pub fn push(&mut self, value: f64) {
        self.count += 1;
        let delta = value - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (value - self.mean);
    }

    /// Chan et al. pairwise merge; exact for disjoint sample sets.
    pub fn merge(&mut self, other: &Welford) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let total = self.count + other.count;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count as f64 / total as f64;
        self.m2 += other.m2 + delta * delta * (self.count as f64 * other.count as f64) / total as f64;
        self.count = total;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero below two samples.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    /// Standard error of the mean, `sample std / √count`.
    pub fn stderr(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

/// Samples per reduction chunk. Chunk boundaries (and the order chunks are
/// merged in) are fixed by the sample index alone, so the reduction result is
/// bitwise independent of the worker count.
pub const REDUCTION_CHUNK: u64 = 32;

/// Evaluate `sample_fn` for `samples` indexed samples in parallel and reduce
/// each output slot into a [`Welford`] accumulator with a fixed chunk
/// topology. `sample_fn(index)` must return `width` values.
pub fn parallel_welford<F>(samples: u64, width: usize, sample_fn: F) -> Result<Vec<Welford>>
where
    F: Fn(u64) -> Result<Vec<f64>> + Sync,
{
    let chunks = samples.div_ceil(REDUCTION_CHUNK);
    let partials: Result<Vec<Vec<Welford>>> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let lo = chunk * REDUCTION_CHUNK;
            let hi = (lo + REDUCTION_CHUNK).min(samples);
            let mut acc = vec![Welford::new(); width];
            for index in lo..hi {
                let values = sample_fn(index)?;
                debug_assert_eq!(values.len(), width);
                for (slot, value) in acc.iter_mut().zip(values) {
                    slot.push(value);
                }
            }
            Ok(acc)
        })
        .collect();
    let partials = partials?;
    let mut merged = vec![Welford::new(); width];
    for part in &partials {
        for (slot, other) in merged.iter_mut().zip(part) {
            slot.merge(other);
        }
    }
    Ok(merged)
}

/// Split `samples` into `batches` contiguous index ranges for batch-mean
/// error estimates. Every batch gets at least one sample.
pub fn batch_ranges(samples: u64, batches: u64) -> Result<Vec<(u64, u64)>> {
    if samples < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: samples });
    }
    let batches = batches.clamp(2, samples);
    let base = samples / batches;
    let extra = samples % batches;
    let mut ranges = Vec::with_capacity(batches as usize);
    let mut lo = 0;
    for b in 0..batches {
        let len = base + u64::from(b < extra);
        ranges.push((lo, lo + len));
        lo += len;
    }
    Ok(ranges)
}
