//! Chunked Monte Carlo reductions.
//!
//! Sample indices are split into fixed-size chunks; chunk `c` draws from
//! `rng.substream(c)`. Chunk results are merged pairwise in index order, so
//! an estimate depends only on `(seed, n)` and never on the worker count.

use std::ops::Range;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::Result;
use crate::rng::RngStream;

pub const CHUNK: usize = 4096;

/// Running mean and centred second moment (Welford / Chan).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Moments {
    #[inline]
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(a: Moments, b: Moments) -> Moments {
        if a.count == 0 {
            return b;
        }
        if b.count == 0 {
            return a;
        }
        let n = a.count + b.count;
        let d = b.mean - a.mean;
        let mean = a.mean + d * (b.count as f64 / n as f64);
        let m2 = a.m2 + b.m2 + d * d * (a.count as f64 * b.count as f64 / n as f64);
        Moments { count: n, mean, m2 }
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).max(0.0)
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

/// Runs `f` over every chunk of `0..n` in parallel and returns the chunk
/// results in index order.
pub fn map_chunks<T, F>(n: usize, rng: RngStream, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng, Range<usize>) -> Result<T> + Sync,
{
    let n_chunks = n.div_ceil(CHUNK);
    (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut gen = rng.substream(c as u64).generator();
            let lo = c * CHUNK;
            f(&mut gen, lo..(lo + CHUNK).min(n))
        })
        .collect()
}

/// Fixed-order pairwise reduction.
pub fn pairwise<T: Clone>(items: &[T], identity: T, merge: &impl Fn(T, T) -> T) -> T {
    match items.len() {
        0 => identity,
        1 => items[0].clone(),
        len => {
            let (l, r) = items.split_at(len / 2);
            merge(pairwise(l, identity.clone(), merge), pairwise(r, identity, merge))
        }
    }
}

pub fn reduce_moments(parts: &[Moments]) -> Moments {
    pairwise(parts, Moments::default(), &Moments::merge)
}

pub fn reduce_moment_vecs(parts: &[Vec<Moments>], dim: usize) -> Vec<Moments> {
    pairwise(parts, vec![Moments::default(); dim], &|a: Vec<Moments>, b: Vec<Moments>| {
        a.into_iter().zip(b).map(|(x, y)| Moments::merge(x, y)).collect()
    })
}

/// Estimate with its Monte Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Estimate {
    pub estimate: f64,
    pub std_error: f64,
}

impl From<Moments> for Estimate {
    fn from(m: Moments) -> Self {
        Estimate {
            estimate: m.mean,
            std_error: m.std_error(),
        }
    }
}
