//! Dense linear algebra, seeded randomness, Adam and a finite-difference
//! gradient oracle. Everything is 64-bit.

mod adam;
mod gradcheck;
mod matrix;
pub mod rng;

pub use adam::{adam_step, adam_step_in_place, AdamConfig, AdamState};
pub use gradcheck::finite_difference_gradient;
pub use matrix::Matrix;
pub use rng::{seeded_gaussian, Stream};

/// Dot product of two equal-length slices, accumulated left to right.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

/// Arithmetic mean; `0.0` for an empty slice.
pub fn mean(a: &[f64]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.iter().sum::<f64>() / a.len() as f64
}

/// Sample standard deviation (n - 1 denominator); `0.0` below two values.
pub fn sample_sd(a: &[f64]) -> f64 {
    if a.len() < 2 {
        return 0.0;
    }
    let m = mean(a);
    let ss: f64 = a.iter().map(|x| (x - m) * (x - m)).sum();
    libm::sqrt(ss / (a.len() - 1) as f64)
}
