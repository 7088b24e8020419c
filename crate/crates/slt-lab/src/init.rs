//! Nonzero-bias initialization schemes.
//!
//! All three schemes share one structural rule: the bias scale of layer
//! `l` is the running product of the weight scales up to `l`,
//! `sigma_b,l = prod_{m<=l} sigma_w,m`. That keeps bias magnitudes
//! commensurate with the signal that reaches layer `l`, which is what
//! makes biases useful (and prunable) at initialization. Schemes:
//!
//! - `uniform`: weights i.i.d. `U[-sigma_w,l, sigma_w,l]`, biases i.i.d.
//!   `U[-sigma_b,l, sigma_b,l]`.
//! - `normal`: weights i.i.d. `N(0, sigma_w,l^2)`, biases i.i.d.
//!   `N(0, sigma_b,l^2)`.
//! - `looks_linear`: mirrored orthogonal blocks. Layer 1 stacks
//!   `[W0; -W0]` to create a (+,-) pair representation of the input;
//!   hidden layers use the block form `[[W0, -W0], [-W0, W0]]` with
//!   mirrored biases `[b0; -b0]`, so at initialization the network
//!   computes an exactly linear (indeed orthogonal) map via
//!   `relu(z) - relu(-z) = z`. `W0` is drawn orthogonal (rows or columns,
//!   whichever is the smaller dimension) and rescaled so every entry has
//!   marginal variance `2/n_l`.
//!
//! The default weight scale is `sigma_w,l = sqrt(2/n_l)` (the fan-out He
//! scale), for which the forward second moment stays near the input norm.
//!
//! Sampling draws its randomness from a per-layer counter-based stream
//! (`ChaCha8`, one stream per layer and parameter kind), so a layer's
//! draws do not depend on the other layers and the raw unit draws are
//! independent of the scale values: two specs that differ only in
//! `sigma_w` produce networks whose parameters differ exactly by the
//! scale ratios.

use ndarray::{s, Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{Architecture, Network};

/// Initialization scheme tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Uniform,
    Normal,
    LooksLinear,
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Scheme::Uniform => "uniform",
            Scheme::Normal => "normal",
            Scheme::LooksLinear => "looks_linear",
        };
        f.write_str(name)
    }
}

/// Everything needed to draw a network: scheme, per-layer weight scales,
/// the zero-bias ablation switch, and the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitSpec {
    pub scheme: Scheme,
    /// Per-layer weight scales `sigma_w,l`, one per parameterized layer.
    pub sigma_w: Vec<f64>,
    /// When set, biases are exactly zero (ablation baseline).
    pub zero_bias: bool,
    pub seed: u64,
}

impl InitSpec {
    /// Spec with the default He-style scales `sigma_w,l = sqrt(2/n_l)`.
    pub fn he(arch: &Architecture, scheme: Scheme, seed: u64) -> Self {
        let sigma_w = (1..arch.widths.len())
            .map(|l| (2.0 / arch.widths[l] as f64).sqrt())
            .collect();
        InitSpec {
            scheme,
            sigma_w,
            zero_bias: false,
            seed,
        }
    }

    /// Bias scales as running products: `sigma_b,l = prod_{m<=l} sigma_w,m`.
    /// Recomputed on demand, never stored.
    pub fn sigma_b(&self) -> Vec<f64> {
        self.sigma_w
            .iter()
            .scan(1.0, |acc, &s| {
                *acc *= s;
                Some(*acc)
            })
            .collect()
    }

    /// Validates the spec against an architecture.
    pub fn validate(&self, arch: &Architecture) -> Result<()> {
        if self.sigma_w.len() != arch.depth() {
            return Err(Error::config(format!(
                "sigma_w has {} entries for a depth-{} network",
                self.sigma_w.len(),
                arch.depth()
            )));
        }
        if let Some(&s) = self.sigma_w.iter().find(|&&s| !(s > 0.0)) {
            return Err(Error::config(format!("sigma_w entries must be > 0, got {s}")));
        }
        if self.scheme == Scheme::LooksLinear {
            for (l, &w) in arch.widths.iter().enumerate().skip(1) {
                let is_output = l == arch.widths.len() - 1;
                if !is_output && w % 2 != 0 {
                    return Err(Error::config(format!(
                        "looks_linear needs even hidden widths, layer {l} has width {w}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Parameter kinds get separate RNG streams so adding or removing bias
/// draws never perturbs weight draws.
enum StreamKind {
    Weights = 0,
    Biases = 1,
}

fn layer_rng(seed: u64, layer: usize, kind: StreamKind) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * layer as u64 + kind as u64);
    rng
}

fn unit_uniform(rng: &mut ChaCha8Rng) -> f64 {
    rng.random::<f64>() * 2.0 - 1.0
}

/// Dispatches on the scheme.
pub fn initialize(arch: &Architecture, spec: &InitSpec) -> Result<Network> {
    match spec.scheme {
        Scheme::Uniform => init_uniform(arch, spec),
        Scheme::Normal => init_normal(arch, spec),
        Scheme::LooksLinear => init_looks_linear(arch, spec),
    }
}

/// Weights i.i.d. `U[-sigma_w,l, sigma_w,l]`, biases i.i.d.
/// `U[-sigma_b,l, sigma_b,l]` (zero when `zero_bias`).
pub fn init_uniform(arch: &Architecture, spec: &InitSpec) -> Result<Network> {
    spec.validate(arch)?;
    if spec.scheme != Scheme::Uniform {
        return Err(Error::config(format!("init_uniform called with scheme {}", spec.scheme)));
    }
    let sigma_b = spec.sigma_b();
    let mut net = Network::zeros(arch.clone());
    for l in 0..arch.depth() {
        let mut wrng = layer_rng(spec.seed, l, StreamKind::Weights);
        net.weights[l].mapv_inplace(|_| spec.sigma_w[l] * unit_uniform(&mut wrng));
        if !spec.zero_bias {
            let mut brng = layer_rng(spec.seed, l, StreamKind::Biases);
            net.biases[l].mapv_inplace(|_| sigma_b[l] * unit_uniform(&mut brng));
        }
    }
    Ok(net)
}

/// Weights i.i.d. `N(0, sigma_w,l^2)`, biases i.i.d. `N(0, sigma_b,l^2)`.
pub fn init_normal(arch: &Architecture, spec: &InitSpec) -> Result<Network> {
    spec.validate(arch)?;
    if spec.scheme != Scheme::Normal {
        return Err(Error::config(format!("init_normal called with scheme {}", spec.scheme)));
    }
    let sigma_b = spec.sigma_b();
    let mut net = Network::zeros(arch.clone());
    for l in 0..arch.depth() {
        let mut wrng = layer_rng(spec.seed, l, StreamKind::Weights);
        net.weights[l].mapv_inplace(|_| spec.sigma_w[l] * wrng.sample::<f64, _>(StandardNormal));
        if !spec.zero_bias {
            let mut brng = layer_rng(spec.seed, l, StreamKind::Biases);
            net.biases[l].mapv_inplace(|_| sigma_b[l] * brng.sample::<f64, _>(StandardNormal));
        }
    }
    Ok(net)
}

/// Mirrored orthogonal initialization (see module docs for the layout).
///
/// Hidden widths must be even. An even output layer uses the full block
/// form with mirrored bias; an odd output layer uses the row form
/// `[W0, -W0]` with an unmirrored Gaussian bias (an odd width cannot
/// carry the pair structure).
pub fn init_looks_linear(arch: &Architecture, spec: &InitSpec) -> Result<Network> {
    spec.validate(arch)?;
    if spec.scheme != Scheme::LooksLinear {
        return Err(Error::config(format!(
            "init_looks_linear called with scheme {}",
            spec.scheme
        )));
    }
    let sigma_b = spec.sigma_b();
    let depth = arch.depth();
    let mut net = Network::zeros(arch.clone());
    for l in 0..depth {
        let n_out = arch.widths[l + 1];
        let n_in = arch.widths[l];
        let entry_var = 2.0 / n_out as f64;
        let mut wrng = layer_rng(spec.seed, l, StreamKind::Weights);
        let mut brng = layer_rng(spec.seed, l, StreamKind::Biases);
        if l == 0 {
            // Stacked form [W0; -W0]: n_0 inputs enter the mirrored pair
            // representation. Requires even n_1 (validated above unless the
            // network is a single odd output layer, which the row form
            // below would also reject — guard explicitly).
            if n_out % 2 != 0 {
                return Err(Error::config(format!(
                    "looks_linear first layer needs an even width, got {n_out}"
                )));
            }
            let w0 = sample_orthogonal(n_out / 2, n_in, entry_var, &mut wrng);
            net.weights[l].slice_mut(s![..n_out / 2, ..]).assign(&w0);
            net.weights[l].slice_mut(s![n_out / 2.., ..]).assign(&(-&w0));
            if !spec.zero_bias {
                let b0: Array1<f64> = Array1::from_shape_fn(n_out / 2, |_| {
                    sigma_b[l] * brng.sample::<f64, _>(StandardNormal)
                });
                net.biases[l].slice_mut(s![..n_out / 2]).assign(&b0);
                net.biases[l].slice_mut(s![n_out / 2..]).assign(&(-&b0));
            }
        } else if n_out % 2 == 0 {
            // Block form [[W0, -W0], [-W0, W0]] with mirrored bias.
            let w0 = sample_orthogonal(n_out / 2, n_in / 2, entry_var, &mut wrng);
            let (half_r, half_c) = (n_out / 2, n_in / 2);
            net.weights[l].slice_mut(s![..half_r, ..half_c]).assign(&w0);
            net.weights[l].slice_mut(s![..half_r, half_c..]).assign(&(-&w0));
            net.weights[l].slice_mut(s![half_r.., ..half_c]).assign(&(-&w0));
            net.weights[l].slice_mut(s![half_r.., half_c..]).assign(&w0);
            if !spec.zero_bias {
                let b0: Array1<f64> = Array1::from_shape_fn(half_r, |_| {
                    sigma_b[l] * brng.sample::<f64, _>(StandardNormal)
                });
                net.biases[l].slice_mut(s![..half_r]).assign(&b0);
                net.biases[l].slice_mut(s![half_r..]).assign(&(-&b0));
            }
        } else {
            // Odd output: row form [W0, -W0] collapses the pair
            // representation; relu(z) - relu(-z) = z keeps the map linear.
            let w0 = sample_orthogonal(n_out, n_in / 2, entry_var, &mut wrng);
            net.weights[l].slice_mut(s![.., ..n_in / 2]).assign(&w0);
            net.weights[l].slice_mut(s![.., n_in / 2..]).assign(&(-&w0));
            if !spec.zero_bias {
                net.biases[l].mapv_inplace(|_| sigma_b[l] * brng.sample::<f64, _>(StandardNormal));
            }
        }
    }
    Ok(net)
}

/// Draws an `m x n` matrix with orthogonal rows (when `m <= n`) or
/// columns (when `m > n`), uniformly over the orthogonal family, rescaled
/// so each entry has marginal variance `entry_var`.
///
/// Implementation: QR of a standard Gaussian matrix via modified
/// Gram-Schmidt with a re-orthogonalization pass. Normalizing every
/// pivot by its positive norm pins the triangular factor's diagonal to
/// +1 — the convention under which Q is uniform over the orthogonal
/// family — followed by a global rescale. The row case factors the
/// transpose.
pub fn sample_orthogonal(m: usize, n: usize, entry_var: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    assert!(m > 0 && n > 0, "orthogonal sample needs positive dimensions");
    assert!(entry_var > 0.0, "entry variance must be positive");
    // Orthonormalize the columns of a tall Gaussian matrix (rows >= cols).
    let (rows, cols, transpose) = if m <= n { (n, m, true) } else { (m, n, false) };
    let mut a = Array2::from_shape_fn((rows, cols), |_| rng.sample::<f64, _>(StandardNormal));
    for j in 0..cols {
        // Two orthogonalization passes keep the loss of orthogonality at
        // the 1e-14 level even for ill-conditioned Gaussian draws.
        for _pass in 0..2 {
            for i in 0..j {
                let qi = a.column(i).to_owned();
                let r = qi.dot(&a.column(j));
                let mut col = a.column_mut(j);
                col.zip_mut_with(&qi, |c, &q| *c -= r * q);
            }
        }
        let norm = a.column(j).dot(&a.column(j)).sqrt();
        assert!(
            norm > 1e-100,
            "rank-deficient Gaussian draw (matched columns); resample with another seed"
        );
        // Normalizing by the positive norm fixes the triangular factor's
        // diagonal signs to +1, which is exactly the convention that makes
        // Q uniform over the orthogonal family (Householder-style QR would
        // need an explicit diagonal sign correction here).
        a.column_mut(j).mapv_inplace(|v| v / norm);
    }
    // Columns are orthonormal: each of the `rows * cols` entries has mean
    // square 1/rows. Rescale to the requested marginal variance.
    let scale = (entry_var * rows as f64).sqrt();
    a.mapv_inplace(|v| v * scale);
    if transpose {
        a.t().to_owned()
    } else {
        a
    }
}
