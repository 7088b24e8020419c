//! Dense ReLU multilayer perceptron: architecture, parameters, binary
//! masks, and the masked forward pass.
//!
//! Conventions:
//! - A network of depth `L` has widths `[n_0, n_1, ..., n_L]`; layer `l`
//!   (1-indexed in math, 0-indexed in code) owns a weight matrix of shape
//!   `n_l x n_{l-1}` and a bias vector of length `n_l`.
//! - Batches are column-major in the logical sense: a batch of `B` samples
//!   is an `n_0 x B` matrix whose columns are samples, so one layer is a
//!   single matrix-matrix product `W x + b`.
//! - Hidden layers apply `relu(z) = max(z, 0)`; the final layer applies
//!   relu too unless `output_linear` is set (regression / logits).
//! - All arithmetic is `f64`.
//!
//! Shape misuse panics with a descriptive message; configuration problems
//! return [`Error`].

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Version tag written into serialized networks. The reader rejects
/// anything else.
pub const NETWORK_FORMAT_VERSION: u32 = 1;

/// Layer sizes plus the final-activation switch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    /// Widths `[n_0, n_1, ..., n_L]`; `n_0` is the input dimension.
    pub widths: Vec<usize>,
    /// When true the final layer skips relu (regression values or
    /// classification logits).
    pub output_linear: bool,
}

impl Architecture {
    /// Validates widths: at least an input and one layer, all widths >= 1.
    pub fn new(widths: Vec<usize>, output_linear: bool) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::config(format!(
                "architecture needs at least [n_0, n_1], got {} widths",
                widths.len()
            )));
        }
        if let Some(w) = widths.iter().find(|&&w| w == 0) {
            return Err(Error::config(format!("zero width {w} in architecture")));
        }
        Ok(Architecture {
            widths,
            output_linear,
        })
    }

    /// Number of parameterized layers `L`.
    pub fn depth(&self) -> usize {
        self.widths.len() - 1
    }

    /// Input dimension `n_0`.
    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    /// Output dimension `n_L`.
    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    /// `(rows, cols)` of the weight matrix of 0-indexed layer `l`.
    pub fn weight_shape(&self, l: usize) -> (usize, usize) {
        (self.widths[l + 1], self.widths[l])
    }

    /// Parameters (weights + biases) of 0-indexed layer `l`.
    pub fn layer_params(&self, l: usize) -> usize {
        let (r, c) = self.weight_shape(l);
        r * c + r
    }

    /// Total weight count across layers.
    pub fn num_weights(&self) -> usize {
        (0..self.depth())
            .map(|l| {
                let (r, c) = self.weight_shape(l);
                r * c
            })
            .sum()
    }

    /// Total bias count across layers.
    pub fn num_biases(&self) -> usize {
        self.widths[1..].iter().sum()
    }

    /// Total parameter count (weights + biases).
    pub fn num_params(&self) -> usize {
        self.num_weights() + self.num_biases()
    }
}

/// A bundle of per-layer tensors shaped exactly like a network's
/// parameters: one `n_l x n_{l-1}` matrix and one `n_l` vector per layer.
/// Reused for gradients, popup scores, and optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensors {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl ParamTensors {
    /// All-zero tensors for the given architecture.
    pub fn zeros(arch: &Architecture) -> Self {
        let weights = (0..arch.depth())
            .map(|l| Array2::zeros(arch.weight_shape(l)))
            .collect();
        let biases = (0..arch.depth())
            .map(|l| Array1::zeros(arch.widths[l + 1]))
            .collect();
        ParamTensors { weights, biases }
    }

    /// Constant-filled tensors for the given architecture.
    pub fn constant(arch: &Architecture, value: f64) -> Self {
        let mut t = Self::zeros(arch);
        for w in &mut t.weights {
            w.fill(value);
        }
        for b in &mut t.biases {
            b.fill(value);
        }
        t
    }

    /// Number of layers.
    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    /// True when every entry is finite.
    pub fn all_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

/// Dense ReLU MLP: an [`Architecture`] plus per-layer weights and biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub arch: Architecture,
    /// `weights[l]` has shape `n_{l+1} x n_l` (0-indexed layers).
    pub weights: Vec<Array2<f64>>,
    /// `biases[l]` has length `n_{l+1}`.
    pub biases: Vec<Array1<f64>>,
}

impl Network {
    /// All-zero network.
    pub fn zeros(arch: Architecture) -> Self {
        let t = ParamTensors::zeros(&arch);
        Network {
            arch,
            weights: t.weights,
            biases: t.biases,
        }
    }

    /// Builds a network from explicit parameters, checking shapes.
    pub fn from_params(
        arch: Architecture,
        weights: Vec<Array2<f64>>,
        biases: Vec<Array1<f64>>,
    ) -> Result<Self> {
        let net = Network {
            arch,
            weights,
            biases,
        };
        net.validate()?;
        Ok(net)
    }

    /// Checks shape consistency and finiteness of every parameter.
    pub fn validate(&self) -> Result<()> {
        let l = self.arch.depth();
        if self.weights.len() != l || self.biases.len() != l {
            return Err(Error::config(format!(
                "expected {l} weight/bias layers, got {}/{}",
                self.weights.len(),
                self.biases.len()
            )));
        }
        for i in 0..l {
            let want = self.arch.weight_shape(i);
            let got = self.weights[i].dim();
            if got != want {
                return Err(Error::config(format!(
                    "layer {i} weight shape {got:?}, expected {want:?}"
                )));
            }
            if self.biases[i].len() != want.0 {
                return Err(Error::config(format!(
                    "layer {i} bias length {}, expected {}",
                    self.biases[i].len(),
                    want.0
                )));
            }
        }
        let finite = self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::config("non-finite parameter entry".to_string()));
        }
        Ok(())
    }

    pub fn depth(&self) -> usize {
        self.arch.depth()
    }

    pub fn num_params(&self) -> usize {
        self.arch.num_params()
    }

    /// Runs the (optionally masked) forward pass on a `n_0 x B` batch and
    /// records every pre-activation and activation.
    ///
    /// Masked parameters are elementwise products `W * M_w`, `b * M_b`, so
    /// a masked parameter contributes exactly zero.
    ///
    /// Panics on shape mismatch between the batch, the mask, and the
    /// network.
    pub fn forward(&self, mask: Option<&Mask>, batch: &Array2<f64>) -> ForwardTrace {
        assert_eq!(
            batch.nrows(),
            self.arch.input_dim(),
            "batch rows {} must equal input dim {}",
            batch.nrows(),
            self.arch.input_dim()
        );
        assert!(batch.ncols() >= 1, "batch must contain at least one sample");
        if let Some(m) = mask {
            m.assert_shapes(&self.arch);
        }
        let depth = self.depth();
        let mut preactivations = Vec::with_capacity(depth);
        let mut activations = Vec::with_capacity(depth);
        let mut x = batch.clone();
        for l in 0..depth {
            let h = match mask {
                Some(m) => {
                    let wm = &self.weights[l] * &m.weight_masks[l];
                    let bm = &self.biases[l] * &m.bias_masks[l];
                    let mut h = wm.dot(&x);
                    h += &bm.view().insert_axis(Axis(1));
                    h
                }
                None => {
                    let mut h = self.weights[l].dot(&x);
                    h += &self.biases[l].view().insert_axis(Axis(1));
                    h
                }
            };
            let apply_relu = l + 1 < depth || !self.arch.output_linear;
            x = if apply_relu {
                h.mapv(|v| v.max(0.0))
            } else {
                h.clone()
            };
            preactivations.push(h);
            activations.push(x.clone());
        }
        ForwardTrace {
            input: batch.clone(),
            preactivations,
            activations,
        }
    }

    /// Forward pass returning only the output activations `n_L x B`.
    pub fn output(&self, mask: Option<&Mask>, batch: &Array2<f64>) -> Array2<f64> {
        self.forward(mask, batch)
            .activations
            .pop_last_expect("network has at least one layer")
    }

    /// Returns a copy whose masked parameters are overwritten with zero.
    /// `forward(None)` on the result equals `forward(Some(mask))` on the
    /// original, exactly.
    pub fn materialize_mask(&self, mask: &Mask) -> Network {
        mask.assert_shapes(&self.arch);
        let weights = self
            .weights
            .iter()
            .zip(&mask.weight_masks)
            .map(|(w, m)| w * m)
            .collect();
        let biases = self
            .biases
            .iter()
            .zip(&mask.bias_masks)
            .map(|(b, m)| b * m)
            .collect();
        Network {
            arch: self.arch.clone(),
            weights,
            biases,
        }
    }
}

/// Small helper so `output` can consume the trace without an unwrap chain.
trait PopLast<T> {
    fn pop_last_expect(self, msg: &str) -> T;
}

impl<T> PopLast<T> for Vec<T> {
    fn pop_last_expect(mut self, msg: &str) -> T {
        self.pop().expect(msg)
    }
}

/// Binary retain/prune indicator aligned 1:1 with a network's parameters.
/// Entries are stored as `f64` in {0.0, 1.0} so masking is a plain
/// elementwise product.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    pub weight_masks: Vec<Array2<f64>>,
    pub bias_masks: Vec<Array1<f64>>,
}

impl Mask {
    /// All-retained mask.
    pub fn ones(arch: &Architecture) -> Self {
        let t = ParamTensors::constant(arch, 1.0);
        Mask {
            weight_masks: t.weights,
            bias_masks: t.biases,
        }
    }

    /// All-pruned mask.
    pub fn zeros(arch: &Architecture) -> Self {
        let t = ParamTensors::zeros(arch);
        Mask {
            weight_masks: t.weights,
            bias_masks: t.biases,
        }
    }

    /// Validates that every entry is exactly 0 or 1.
    pub fn validate_binary(&self) -> Result<()> {
        let ok = self
            .weight_masks
            .iter()
            .all(|m| m.iter().all(|&v| v == 0.0 || v == 1.0))
            && self
                .bias_masks
                .iter()
                .all(|m| m.iter().all(|&v| v == 0.0 || v == 1.0));
        if ok {
            Ok(())
        } else {
            Err(Error::config("mask entries must be 0 or 1".to_string()))
        }
    }

    fn assert_shapes(&self, arch: &Architecture) {
        assert_eq!(
            self.weight_masks.len(),
            arch.depth(),
            "mask has {} layers, network has {}",
            self.weight_masks.len(),
            arch.depth()
        );
        for l in 0..arch.depth() {
            assert_eq!(
                self.weight_masks[l].dim(),
                arch.weight_shape(l),
                "mask layer {l} weight shape mismatch"
            );
            assert_eq!(
                self.bias_masks[l].len(),
                arch.widths[l + 1],
                "mask layer {l} bias length mismatch"
            );
        }
    }

    /// Number of retained weights.
    pub fn retained_weights(&self) -> usize {
        self.weight_masks
            .iter()
            .map(|m| m.iter().filter(|&&v| v != 0.0).count())
            .sum()
    }

    /// Number of retained biases.
    pub fn retained_biases(&self) -> usize {
        self.bias_masks
            .iter()
            .map(|m| m.iter().filter(|&&v| v != 0.0).count())
            .sum()
    }

    /// Retained parameters / total parameters (weights and biases pooled).
    pub fn param_sparsity(&self, arch: &Architecture) -> f64 {
        (self.retained_weights() + self.retained_biases()) as f64 / arch.num_params() as f64
    }

    /// Retained weights / total weights (the weight-only convention used
    /// when comparing against reported sparsities that ignore biases).
    pub fn weight_sparsity(&self, arch: &Architecture) -> f64 {
        self.retained_weights() as f64 / arch.num_weights() as f64
    }
}

/// Everything the forward pass computed for one batch: per-layer
/// pre-activations `h` and activations `x`, plus the input batch (kept so
/// the backward pass can form input-side products).
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub input: Array2<f64>,
    /// `preactivations[l] = W x + b` before the nonlinearity, `n_{l+1} x B`.
    pub preactivations: Vec<Array2<f64>>,
    /// `activations[l]` after the nonlinearity (identity on a linear
    /// output layer), same shape as `preactivations[l]`.
    pub activations: Vec<Array2<f64>>,
}

impl ForwardTrace {
    /// Network output `n_L x B`.
    pub fn output(&self) -> &Array2<f64> {
        self.activations.last().expect("trace has at least one layer")
    }

    /// Batch size.
    pub fn batch_size(&self) -> usize {
        self.input.ncols()
    }

    /// Activation feeding layer `l`: the input for `l = 0`, otherwise the
    /// previous layer's activations.
    pub fn input_of(&self, l: usize) -> &Array2<f64> {
        if l == 0 {
            &self.input
        } else {
            &self.activations[l - 1]
        }
    }
}

// --- serialization -------------------------------------------------------

/// On-disk JSON form: versioned, row-major weights, optional mask and
/// scores aligned with the network, optional free-form provenance.
#[derive(Debug, Serialize, Deserialize)]
struct NetworkJson {
    version: u32,
    widths: Vec<usize>,
    output_linear: bool,
    /// `weights[l][i][j]` = row `i`, column `j` of layer `l`.
    weights: Vec<Vec<Vec<f64>>>,
    biases: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mask: Option<MaskJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    scores: Option<ScoresJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    provenance: Option<serde_json::Value>,
}

#[derive(Debug, Serialize, Deserialize)]
struct MaskJson {
    weights: Vec<Vec<Vec<f64>>>,
    biases: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ScoresJson {
    weights: Vec<Vec<Vec<f64>>>,
    biases: Vec<Vec<f64>>,
}

/// A network plus the optional companions that travel with it on disk.
#[derive(Debug, Clone)]
pub struct SavedNetwork {
    pub net: Network,
    pub mask: Option<Mask>,
    pub scores: Option<ParamTensors>,
    /// Free-form provenance blob (resolved config, master seed, ...).
    pub provenance: Option<serde_json::Value>,
}

impl SavedNetwork {
    pub fn new(net: Network) -> Self {
        SavedNetwork {
            net,
            mask: None,
            scores: None,
            provenance: None,
        }
    }

    pub fn with_mask(mut self, mask: Mask) -> Self {
        self.mask = Some(mask);
        self
    }

    pub fn with_scores(mut self, scores: ParamTensors) -> Self {
        self.scores = Some(scores);
        self
    }

    pub fn with_provenance(mut self, provenance: serde_json::Value) -> Self {
        self.provenance = Some(provenance);
        self
    }

    /// Serializes to the versioned JSON document.
    pub fn to_json(&self) -> Result<String> {
        let mat = |ws: &[Array2<f64>]| -> Vec<Vec<Vec<f64>>> {
            ws.iter()
                .map(|w| w.rows().into_iter().map(|r| r.to_vec()).collect())
                .collect()
        };
        let vecs = |bs: &[Array1<f64>]| -> Vec<Vec<f64>> { bs.iter().map(|b| b.to_vec()).collect() };
        let doc = NetworkJson {
            version: NETWORK_FORMAT_VERSION,
            widths: self.net.arch.widths.clone(),
            output_linear: self.net.arch.output_linear,
            weights: mat(&self.net.weights),
            biases: vecs(&self.net.biases),
            mask: self.mask.as_ref().map(|m| MaskJson {
                weights: mat(&m.weight_masks),
                biases: vecs(&m.bias_masks),
            }),
            scores: self.scores.as_ref().map(|s| ScoresJson {
                weights: mat(&s.weights),
                biases: vecs(&s.biases),
            }),
            provenance: self.provenance.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    /// Parses the versioned JSON document, rejecting unknown versions and
    /// inconsistent shapes.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: NetworkJson = serde_json::from_str(text)?;
        if doc.version != NETWORK_FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(doc.version, NETWORK_FORMAT_VERSION));
        }
        let arch = Architecture::new(doc.widths, doc.output_linear)?;
        let to_mats = |rows: &[Vec<Vec<f64>>]| -> Result<Vec<Array2<f64>>> {
            rows.iter()
                .enumerate()
                .map(|(l, m)| {
                    let (r, c) = arch.weight_shape(l);
                    if m.len() != r || m.iter().any(|row| row.len() != c) {
                        return Err(Error::config(format!(
                            "layer {l} matrix does not match widths ({r}x{c})"
                        )));
                    }
                    let flat: Vec<f64> = m.iter().flatten().copied().collect();
                    Array2::from_shape_vec((r, c), flat)
                        .map_err(|e| Error::config(e.to_string()))
                })
                .collect()
        };
        let to_vecs = |vs: &[Vec<f64>]| -> Result<Vec<Array1<f64>>> {
            vs.iter()
                .enumerate()
                .map(|(l, v)| {
                    if v.len() != arch.widths[l + 1] {
                        return Err(Error::config(format!(
                            "layer {l} vector length {} does not match width {}",
                            v.len(),
                            arch.widths[l + 1]
                        )));
                    }
                    Ok(Array1::from_vec(v.clone()))
                })
                .collect()
        };
        let weights = to_mats(&doc.weights)?;
        let biases = to_vecs(&doc.biases)?;
        let mask = match &doc.mask {
            Some(m) => {
                let mask = Mask {
                    weight_masks: to_mats(&m.weights)?,
                    bias_masks: to_vecs(&m.biases)?,
                };
                mask.validate_binary()?;
                Some(mask)
            }
            None => None,
        };
        let scores = match &doc.scores {
            Some(s) => Some(ParamTensors {
                weights: to_mats(&s.weights)?,
                biases: to_vecs(&s.biases)?,
            }),
            None => None,
        };
        Ok(SavedNetwork {
            net: Network::from_params(arch, weights, biases)?,
            mask,
            scores,
            provenance: doc.provenance,
        })
    }

    /// Writes the JSON document to a file.
    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    /// Reads the JSON document from a file.
    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    fn arch(widths: &[usize], output_linear: bool) -> Architecture {
        Architecture::new(widths.to_vec(), output_linear).unwrap()
    }

    #[test]
    fn architecture_rejects_degenerate_widths() {
        assert!(Architecture::new(vec![3], false).is_err());
        assert!(Architecture::new(vec![3, 0, 2], false).is_err());
        assert!(Architecture::new(vec![3, 4, 2], true).is_ok());
    }

    #[test]
    fn single_layer_hand_case() {
        // W = [[2]], b = [1], x = 3 -> h = 7, relu(7) = 7.
        let a = arch(&[1, 1], false);
        let mut net = Network::zeros(a);
        net.weights[0][[0, 0]] = 2.0;
        net.biases[0][0] = 1.0;
        let batch = arr2(&[[3.0]]);
        let trace = net.forward(None, &batch);
        assert_eq!(trace.preactivations[0][[0, 0]], 7.0);
        assert_eq!(trace.output()[[0, 0]], 7.0);
    }

    #[test]
    fn masking_zeroes_the_bias() {
        let a = arch(&[1, 1], false);
        let mut net = Network::zeros(a.clone());
        net.weights[0][[0, 0]] = 2.0;
        net.biases[0][0] = 1.0;
        let mut mask = Mask::ones(&a);
        mask.bias_masks[0][0] = 0.0;
        let out = net.output(Some(&mask), &arr2(&[[3.0]]));
        assert_eq!(out[[0, 0]], 6.0);
    }

    #[test]
    fn full_mask_equals_no_mask() {
        // The two code paths must agree to the bit on random nets.
        let a = arch(&[3, 5, 4, 2, 2], true);
        for seed in 0..100u64 {
            let net = crate::testutil::random_network(&a, seed);
            let batch = crate::testutil::random_batch(a.input_dim(), 7, seed ^ 0xabcd);
            let full = Mask::ones(&a);
            let with = net.output(Some(&full), &batch);
            let without = net.output(None, &batch);
            assert_eq!(with, without);
        }
    }

    #[test]
    fn masked_forward_equals_materialized_zeros() {
        let a = arch(&[4, 6, 3], false);
        for seed in 0..20u64 {
            let net = crate::testutil::random_network(&a, seed);
            let mask = crate::testutil::random_mask(&a, seed ^ 0x55);
            let batch = crate::testutil::random_batch(4, 5, seed ^ 0x77);
            let masked = net.output(Some(&mask), &batch);
            let materialized = net.materialize_mask(&mask).output(None, &batch);
            assert_eq!(masked, materialized);
        }
    }

    #[test]
    fn relu_positive_homogeneity_on_single_layer() {
        let a = arch(&[2, 3], false);
        for seed in 0..20u64 {
            let net = crate::testutil::random_network(&a, seed);
            let batch = crate::testutil::random_batch(2, 4, seed ^ 0x1234);
            let c = 3.5;
            let mut scaled = net.clone();
            for w in &mut scaled.weights {
                w.mapv_inplace(|v| c * v);
            }
            for b in &mut scaled.biases {
                b.mapv_inplace(|v| c * v);
            }
            let base = net.output(None, &batch);
            let scaled_out = scaled.output(None, &batch);
            for (y, ys) in base.iter().zip(scaled_out.iter()) {
                assert!((c * y - ys).abs() <= 1e-12 * ys.abs().max(1.0));
            }
        }
    }

    #[test]
    fn output_linear_passes_negative_values() {
        let a = arch(&[1, 1], true);
        let mut net = Network::zeros(a);
        net.weights[0][[0, 0]] = -2.0;
        let out = net.output(None, &arr2(&[[3.0]]));
        assert_eq!(out[[0, 0]], -6.0);
    }

    #[test]
    #[should_panic(expected = "batch rows")]
    fn forward_panics_on_wrong_input_dim() {
        let a = arch(&[2, 3], false);
        let net = Network::zeros(a);
        net.forward(None, &arr2(&[[1.0], [2.0], [3.0]]));
    }

    #[test]
    fn sparsity_counts_both_pools() {
        let a = arch(&[2, 2], false); // 4 weights + 2 biases
        let mut mask = Mask::zeros(&a);
        mask.weight_masks[0][[0, 0]] = 1.0;
        mask.weight_masks[0][[1, 1]] = 1.0;
        mask.bias_masks[0][0] = 1.0;
        assert_eq!(mask.retained_weights(), 2);
        assert_eq!(mask.retained_biases(), 1);
        assert!((mask.param_sparsity(&a) - 0.5).abs() < 1e-15);
        assert!((mask.weight_sparsity(&a) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn json_round_trip_preserves_everything() {
        let a = arch(&[2, 3, 1], true);
        let net = crate::testutil::random_network(&a, 9);
        let mask = crate::testutil::random_mask(&a, 10);
        let scores = crate::testutil::random_scores(&a, 11);
        let saved = SavedNetwork::new(net.clone())
            .with_mask(mask.clone())
            .with_scores(scores.clone())
            .with_provenance(serde_json::json!({"seed": 11}));
        let text = saved.to_json().unwrap();
        let back = SavedNetwork::from_json(&text).unwrap();
        assert_eq!(back.net, net);
        assert_eq!(back.mask.unwrap(), mask);
        assert_eq!(back.scores.unwrap(), scores);
        assert_eq!(back.provenance.unwrap()["seed"], 11);
    }

    #[test]
    fn json_reader_rejects_unknown_versions() {
        let a = arch(&[1, 1], false);
        let saved = SavedNetwork::new(Network::zeros(a));
        let text = saved.to_json().unwrap().replace("\"version\": 1", "\"version\": 99");
        match SavedNetwork::from_json(&text) {
            Err(Error::UnsupportedVersion(99, _)) => {}
            other => panic!("expected version rejection, got {other:?}"),
        }
    }
}
