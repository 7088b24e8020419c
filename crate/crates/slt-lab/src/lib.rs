//! Strong-lottery-ticket laboratory.
//!
//! A dense ReLU network drawn at random contains sparse subnetworks —
//! strong lottery tickets — that approximate useful functions with no
//! weight training at all, provided the initialization puts usable mass
//! on the biases. This crate is a desk-scale laboratory around that idea:
//!
//! - [`net`] / [`grad`] / [`opt`]: a small f64 MLP core with masked
//!   forward, manual backprop (true gradients and straight-through popup
//!   score gradients), and SGD with momentum and cosine annealing.
//! - [`init`]: nonzero-bias initializations (uniform, normal, mirrored
//!   "looks-linear" orthogonal) whose bias scales are running products of
//!   the weight scales.
//! - [`scaling`]: the layerwise scaling transform, closed-form and
//!   bracketed output-scale fits, and the per-layer distribution of a
//!   fitted scale.
//! - [`pruner`]: the edge-popup search with popup scores on weights and
//!   biases, geometric sparsity annealing, and optional per-epoch output
//!   rescaling.
//! - [`construct`]: the constructive existence pipeline — build a
//!   double-depth random mother network and extract a ticket that
//!   approximates a given target by solving one subset-sum instance per
//!   target parameter.
//! - [`analysis`]: analytic and Monte-Carlo verifiers (univariate
//!   factorization, the two nonrepresentability counterexamples, output
//!   second-moment predictions).
//! - [`data`] / [`experiment`]: the two synthetic benchmarks, the sweep
//!   harness, and the CLI plumbing behind the `slt-lab` binary.

pub mod analysis;
pub mod construct;
pub mod data;
pub mod error;
pub mod experiment;
pub mod grad;
pub mod init;
pub mod loss;
pub mod net;
pub mod numeric;
pub mod opt;
pub mod pruner;
pub mod scaling;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
pub use net::{Architecture, ForwardTrace, Mask, Network, ParamTensors, SavedNetwork};
