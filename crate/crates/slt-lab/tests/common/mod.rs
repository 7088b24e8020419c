//! Helpers shared by the integration suites.
//!
//! Each suite compiles this module independently and uses a different
//! subset of it.
#![allow(dead_code)]

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use slt_lab::net::{Architecture, Network};

/// Random target with the given widths: weights kept with probability
/// `density` and drawn from U[-1, 1], biases dense U[-1, 1], linear
/// output.
pub fn random_sparse_target(widths: &[usize], density: f64, seed: u64) -> Network {
    let arch = Architecture::new(widths.to_vec(), true).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Network::zeros(arch);
    for w in &mut net.weights {
        w.mapv_inplace(|_| {
            if rng.random::<f64>() < density {
                rng.random_range(-1.0..1.0)
            } else {
                0.0
            }
        });
    }
    for b in &mut net.biases {
        b.mapv_inplace(|_| rng.random_range(-1.0..1.0));
    }
    net
}

/// Uniform batch on [-1, 1]^dim.
pub fn uniform_inputs(dim: usize, count: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((dim, count), |_| rng.random_range(-1.0..1.0))
}

/// Median of a slice (mean of the middle pair for even lengths).
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}
