//! Seeded randomness.
//!
//! Every consumer draws from ChaCha8 (`rand_chacha::ChaCha8Rng`) keyed by the
//! run seed through `SeedableRng::seed_from_u64`, with a dedicated stream id
//! per consumer. ChaCha streams are independent, so reordering pipeline
//! stages never perturbs another stage's draws. Gaussian variates come from
//! `rand_distr::StandardNormal` (ziggurat), which is pure integer/float
//! arithmetic and platform stable.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::{Error, Matrix, Result};

/// Pipeline consumers with their own random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Init,
    Batching,
    Synthesis,
    Generator,
    Split,
    Folds,
    Louvain,
    Augment,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Init => 1,
            Stream::Batching => 2,
            Stream::Synthesis => 3,
            Stream::Generator => 4,
            Stream::Split => 5,
            Stream::Folds => 6,
            Stream::Louvain => 7,
            Stream::Augment => 8,
        }
    }
}

/// Generator for `stream` under `seed`. `index` separates repeated uses of
/// one stream (per run, per epoch, per module).
pub fn stream_rng(seed: u64, stream: Stream, index: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((stream.id() << 32) | u64::from(index));
    rng
}

#[inline]
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Uniform draw from `[lo, hi)`; returns `lo` when the interval is empty.
#[inline]
pub fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return lo;
    }
    lo + (hi - lo) * rng.random::<f64>()
}

/// Fisher-Yates shuffle driven by `rng`.
pub fn shuffle<T, R: Rng + ?Sized>(rng: &mut R, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    for x in m.as_mut_slice() {
        *x = standard_normal(rng);
    }
    m
}

/// `rows x cols` i.i.d. standard normal entries, bit-identical for a given seed.
pub fn seeded_gaussian(rng_seed: u64, rows: usize, cols: usize) -> Result<Matrix> {
    if rows == 0 || cols == 0 {
        return Err(Error::invalid("seeded_gaussian needs nonzero dimensions"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    Ok(gaussian_matrix(&mut rng, rows, cols))
}
