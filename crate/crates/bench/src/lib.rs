//! Shared fixtures for the benchmarks.

use num_complex::Complex64;

use dyadica::dyadic::LatticeWindow;
use dyadica::seq::CoeffField;
use dyadica::wavelets::FunctionSample;

/// `e^{-a x^2} (1 + x/2)` sampled on `[-3, 3]` with spacing `h`.
pub fn bump_1d(h: f64, a: f64) -> FunctionSample {
    let count = (6.0 / h) as usize + 1;
    FunctionSample::from_fn(1, vec![-3.0], h, vec![count], move |x| {
        vec![Complex64::new((-a * x[0] * x[0]).exp() * (1.0 + 0.5 * x[0]), 0.0)]
    })
    .expect("valid grid")
}

/// Gaussian on `[-2, 2]^2`, tilted along the last axis.
pub fn bump_2d(h: f64, a: f64) -> FunctionSample {
    let count = (4.0 / h) as usize + 1;
    FunctionSample::from_fn(1, vec![-2.0, -2.0], h, vec![count, count], move |x| {
        vec![Complex64::new((-a * (x[0] * x[0] + x[1] * x[1])).exp() * (1.0 + 0.5 * x[1]), 0.0)]
    })
    .expect("valid grid")
}

pub fn random_field(window: &LatticeWindow, m: usize, seed: u64) -> CoeffField {
    CoeffField::random(window.clone(), m, 3, seed)
}
