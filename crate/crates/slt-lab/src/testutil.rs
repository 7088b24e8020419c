//! Seeded random fixtures shared by the unit tests.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::net::{Architecture, Mask, Network, ParamTensors};

/// Uniform draws in [-1, 1].
fn unit(rng: &mut ChaCha8Rng) -> f64 {
    rng.random::<f64>() * 2.0 - 1.0
}

/// Network with i.i.d. U[-1, 1] parameters.
pub fn random_network(arch: &Architecture, seed: u64) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Network::zeros(arch.clone());
    for w in &mut net.weights {
        w.mapv_inplace(|_| unit(&mut rng));
    }
    for b in &mut net.biases {
        b.mapv_inplace(|_| unit(&mut rng));
    }
    net
}

/// `rows x cols` batch with i.i.d. U[-1, 1] entries.
pub fn random_batch(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((rows, cols), |_| unit(&mut rng))
}

/// `len` vector with i.i.d. U[-1, 1] entries.
pub fn random_vector(len: usize, seed: u64) -> Array1<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array1::from_shape_fn(len, |_| unit(&mut rng))
}

/// Mask whose entries are i.i.d. fair coin flips.
pub fn random_mask(arch: &Architecture, seed: u64) -> Mask {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mask = Mask::zeros(arch);
    for m in &mut mask.weight_masks {
        m.mapv_inplace(|_| if rng.random::<bool>() { 1.0 } else { 0.0 });
    }
    for m in &mut mask.bias_masks {
        m.mapv_inplace(|_| if rng.random::<bool>() { 1.0 } else { 0.0 });
    }
    mask
}

/// Score tensors with i.i.d. U[-1, 1] entries.
pub fn random_scores(arch: &Architecture, seed: u64) -> ParamTensors {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = ParamTensors::zeros(arch);
    for w in &mut t.weights {
        w.mapv_inplace(|_| unit(&mut rng));
    }
    for b in &mut t.biases {
        b.mapv_inplace(|_| unit(&mut rng));
    }
    t
}

/// Absolute-plus-relative closeness assertion with a readable message.
pub fn assert_close(actual: f64, expected: f64, abs_tol: f64, rel_tol: f64) {
    let diff = (actual - expected).abs();
    let bound = abs_tol + rel_tol * expected.abs();
    assert!(
        diff <= bound,
        "actual {actual} vs expected {expected}: |diff| {diff} > {bound}"
    );
}
