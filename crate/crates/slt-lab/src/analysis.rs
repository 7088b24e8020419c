//! Analytic verifiers for the representational facts the rest of the
//! laboratory leans on:
//!
//! * every univariate zero-bias relu network collapses to a pair of
//!   effective coefficients, `f(x) = w_plus phi(x) + w_minus phi(-x)` —
//!   so such networks can only realize two-sided rays through the origin;
//! * consequently the best zero-bias fit to the constant 1/2 on [-1, 1]
//!   keeps squared error 1/8 (while a single biased neuron fits it
//!   exactly), and the best fit to e^x keeps a strictly positive error
//!   with closed-form minimizers;
//! * the forward second moment `E ||f(x0)||^2` of a freshly initialized
//!   network has an exact layerwise recursion, with a separate form for
//!   the orthogonal pair-structured scheme, verified here by Monte Carlo.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::init::{initialize, InitSpec, Scheme};
use crate::net::{Architecture, Network};
use crate::numeric::{adaptive_simpson, derive_seed, golden_section_min, mean, standard_error};

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

/// The two effective coefficient vectors of a univariate zero-bias relu
/// network: `f(x) = w_plus * phi(x) + w_minus * phi(-x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Factorization {
    pub w_plus: Array1<f64>,
    pub w_minus: Array1<f64>,
}

impl Factorization {
    /// Evaluates the factored form at a scalar input.
    pub fn evaluate(&self, x: f64) -> Array1<f64> {
        &self.w_plus * relu(x) + &self.w_minus * relu(-x)
    }
}

/// Factors a univariate zero-bias network into `(w_plus, w_minus)`.
///
/// Two independent routes are computed and cross-checked: evaluation
/// (`w_plus = f(1)`, `w_minus = f(-1)`, valid by positive homogeneity)
/// and the layerwise clipping recursion (first layer splits into its
/// positive and negative parts; hidden layers propagate each part through
/// `phi(W ·)`; a linear output layer multiplies without clipping).
///
/// Networks with any nonzero bias or more than one input are rejected.
pub fn factorize_univariate(net: &Network) -> Result<Factorization> {
    if net.arch.input_dim() != 1 {
        return Err(Error::config(format!(
            "factorization requires a univariate network, got {} inputs",
            net.arch.input_dim()
        )));
    }
    if net.biases.iter().any(|b| b.iter().any(|&v| v != 0.0)) {
        return Err(Error::config(
            "factorization requires exactly zero biases",
        ));
    }
    let by_eval = factorize_by_evaluation(net);
    let by_clip = factorize_by_clipping(net);
    let disagreement = by_eval
        .w_plus
        .iter()
        .zip(by_clip.w_plus.iter())
        .chain(by_eval.w_minus.iter().zip(by_clip.w_minus.iter()))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(
        disagreement <= 1e-9,
        "factorization routes disagree by {disagreement:.3e}"
    );
    Ok(by_eval)
}

/// Evaluation route: by positive homogeneity of the zero-bias network,
/// `f(x) = f(1) phi(x) + f(-1) phi(-x)`.
fn factorize_by_evaluation(net: &Network) -> Factorization {
    let probe = |x: f64| -> Array1<f64> {
        let batch = Array2::from_elem((1, 1), x);
        net.output(None, &batch).column(0).to_owned()
    };
    Factorization {
        w_plus: probe(1.0),
        w_minus: probe(-1.0),
    }
}

/// Clipping route: the first layer's column splits into `phi(W)` and
/// `phi(-W)`; each hidden layer maps both parts through `phi(W ·)`
/// (the parts stay entrywise nonnegative, and for a fixed input sign
/// only one part is active); the final layer clips only when it carries
/// the activation.
fn factorize_by_clipping(net: &Network) -> Factorization {
    let depth = net.depth();
    let mut plus: Array1<f64> = net.weights[0].column(0).to_owned();
    let mut minus = plus.mapv(|v| -v);
    for l in 0..depth {
        if l > 0 {
            plus = net.weights[l].dot(&plus);
            minus = net.weights[l].dot(&minus);
        }
        let clip = l + 1 < depth || !net.arch.output_linear;
        if clip {
            plus.mapv_inplace(relu);
            minus.mapv_inplace(relu);
        }
    }
    Factorization {
        w_plus: plus,
        w_minus: minus,
    }
}

/// Mean squared error of the two-coefficient form against a target over
/// `[-1, 1]` (Lebesgue integral, not dataset average), by adaptive
/// quadrature split at the kink.
pub fn clipped_pair_loss(target: impl Fn(f64) -> f64, w_plus: f64, w_minus: f64) -> f64 {
    let integrand = |x: f64| {
        let f = w_plus * relu(x) + w_minus * relu(-x);
        let d = target(x) - f;
        d * d
    };
    adaptive_simpson(&integrand, -1.0, 0.0, 5e-10) + adaptive_simpson(&integrand, 0.0, 1.0, 5e-10)
}

/// Closed-form best zero-bias fit to a target, with an independent
/// numeric cross-check (coordinate-wise golden-section over the
/// quadrature loss — the objective separates across the two
/// coefficients).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CounterexampleReport {
    /// Closed-form minimizer and minimum.
    pub w_plus: f64,
    pub w_minus: f64,
    pub min_loss: f64,
    /// Independent numeric minimizer and its quadrature loss.
    pub numeric_w_plus: f64,
    pub numeric_w_minus: f64,
    pub numeric_loss: f64,
    /// Largest absolute disagreement between the two routes.
    pub max_disagreement: f64,
}

fn cross_check(
    target: impl Fn(f64) -> f64 + Copy,
    w_plus: f64,
    w_minus: f64,
    min_loss: f64,
) -> CounterexampleReport {
    // The loss separates: the w_plus piece lives on [0, 1], the w_minus
    // piece on [-1, 0], so each coordinate is a 1-d minimization.
    let (numeric_w_plus, _) =
        golden_section_min(&|w| clipped_pair_loss(target, w, 0.0), -8.0, 8.0, 1e-9);
    let (numeric_w_minus, _) =
        golden_section_min(&|w| clipped_pair_loss(target, 0.0, w), -8.0, 8.0, 1e-9);
    let numeric_loss = clipped_pair_loss(target, numeric_w_plus, numeric_w_minus);
    let max_disagreement = (numeric_w_plus - w_plus)
        .abs()
        .max((numeric_w_minus - w_minus).abs())
        .max((numeric_loss - min_loss).abs());
    CounterexampleReport {
        w_plus,
        w_minus,
        min_loss,
        numeric_w_plus,
        numeric_w_minus,
        numeric_loss,
        max_disagreement,
    }
}

/// Best zero-bias approximation of the constant 1/2 on `[-1, 1]`.
///
/// Each side minimizes `g(w) = int_0^1 (1/2 - w t)^2 dt
/// = 1/4 - w/2 + w^2/3`, so `w* = 3/4` and `g(w*) = 1/16` per side:
/// the total squared error is exactly 1/8, bounded away from zero —
/// while one biased neuron, `phi(0 x + 1/2)`, represents the constant
/// with zero error.
pub fn counterexample_const() -> CounterexampleReport {
    cross_check(|_| 0.5, 0.75, 0.75, 0.125)
}

/// Best zero-bias approximation of `e^x` on `[-1, 1]`.
///
/// On the right half, `w_plus = 3 int_0^1 t e^t dt = 3`; on the left,
/// `w_minus = 3 int_0^1 u e^(-u) du = 3 (1 - 2/e)`. Substituting back
/// into `int_-1^1 e^(2x) dx - (w_plus^2 + w_minus^2)/3` gives
/// `e^2/2 + 12/e - 12.5/e^2 - 6 ~ 0.41739`, again strictly positive.
pub fn counterexample_exp() -> CounterexampleReport {
    let e = std::f64::consts::E;
    let w_minus = -3.0 * (2.0 / e - 1.0);
    let min_loss = 0.5 * e * e + 12.0 / e - 12.5 / (e * e) - 6.0;
    cross_check(f64::exp, 3.0, w_minus, min_loss)
}

/// Which second-moment recursion to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentFormula {
    /// Independent symmetric entries: each relu layer maps the running
    /// moment `m` to `(n_l / 2)(sigma_w,l^2 m + sigma_b,l^2)`; a linear
    /// output layer drops the halving.
    General,
    /// Scaled-orthogonal pair-structured layers: the signal norm passes
    /// through unchanged and each layer adds `sigma_b,l^2 n_l / 2`; a
    /// linear output layer doubles the signal and adds
    /// `sigma_b,L^2 n_L`.
    Orthogonal,
}

/// Exact expected squared output norm `E ||f(x0)||^2` at initialization.
///
/// `sigma_w` and `sigma_b` hold one scale per layer (pass zeros for
/// zero-bias networks); `x0_norm_sq` is the squared input norm. The
/// weight scales are ignored by [`MomentFormula::Orthogonal`], whose
/// layers are pinned to entry variance `2/n_l`.
pub fn predict_signal_moment(
    arch: &Architecture,
    sigma_w: &[f64],
    sigma_b: &[f64],
    x0_norm_sq: f64,
    formula: MomentFormula,
) -> f64 {
    let depth = arch.depth();
    assert_eq!(sigma_w.len(), depth, "one weight scale per layer");
    assert_eq!(sigma_b.len(), depth, "one bias scale per layer");
    let mut m = x0_norm_sq;
    for l in 0..depth {
        let n = arch.widths[l + 1] as f64;
        let linear_output = l + 1 == depth && arch.output_linear;
        match formula {
            MomentFormula::General => {
                let halving = if linear_output { 1.0 } else { 0.5 };
                m = n * halving * (sigma_w[l] * sigma_w[l] * m + sigma_b[l] * sigma_b[l]);
            }
            MomentFormula::Orthogonal => {
                if linear_output {
                    m = 2.0 * m + sigma_b[l] * sigma_b[l] * n;
                } else {
                    m += sigma_b[l] * sigma_b[l] * n / 2.0;
                }
            }
        }
    }
    m
}

/// Monte-Carlo check of [`predict_signal_moment`] for one scheme.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SignalMomentReport {
    pub predicted: f64,
    pub empirical_mean: f64,
    pub standard_error: f64,
    pub trials: usize,
    /// `|empirical - predicted| / predicted` (absolute deviation when the
    /// prediction is zero).
    pub relative_deviation: f64,
    /// Deviation in units of the estimator's standard error.
    pub sigma_deviation: f64,
    pub formula: MomentFormula,
    /// Which output-layer convention the prediction used.
    pub output_linear: bool,
}

/// Samples `trials` fresh networks from the spec (per-trial seeds derived
/// by counter, so results are order-independent), averages `||f(x0)||^2`,
/// and compares against the matching closed form — the orthogonal
/// recursion for the pair-structured scheme, the general one otherwise.
pub fn verify_signal_moment(
    arch: &Architecture,
    spec: &InitSpec,
    x0: &Array1<f64>,
    trials: usize,
) -> Result<SignalMomentReport> {
    if trials < 1_000 {
        return Err(Error::config(format!(
            "moment verification needs at least 1000 trials, got {trials}"
        )));
    }
    if x0.len() != arch.input_dim() {
        return Err(Error::config(format!(
            "probe input has {} entries, network takes {}",
            x0.len(),
            arch.input_dim()
        )));
    }
    spec.validate(arch)?;
    let formula = match spec.scheme {
        Scheme::LooksLinear => MomentFormula::Orthogonal,
        _ => MomentFormula::General,
    };
    // The closed form is stated for the distributions' standard
    // deviations; the uniform scheme's scales are interval half-widths,
    // whose standard deviation is scale / sqrt(3).
    let to_sd = match spec.scheme {
        Scheme::Uniform => 1.0 / 3.0f64.sqrt(),
        Scheme::Normal | Scheme::LooksLinear => 1.0,
    };
    let sigma_w: Vec<f64> = spec.sigma_w.iter().map(|s| s * to_sd).collect();
    let sigma_b = if spec.zero_bias {
        vec![0.0; arch.depth()]
    } else {
        spec.sigma_b().iter().map(|s| s * to_sd).collect()
    };
    let predicted = predict_signal_moment(arch, &sigma_w, &sigma_b, x0.dot(x0), formula);

    let batch = x0
        .view()
        .insert_axis(ndarray::Axis(1))
        .to_owned();
    let mut norms = Vec::with_capacity(trials);
    for t in 0..trials {
        let trial_spec = InitSpec {
            seed: derive_seed(spec.seed, &[t as u64]),
            ..spec.clone()
        };
        let net = initialize(arch, &trial_spec)?;
        let y = net.output(None, &batch);
        norms.push(y.iter().map(|v| v * v).sum());
    }
    let empirical_mean = mean(&norms);
    let se = standard_error(&norms);
    let abs_dev = (empirical_mean - predicted).abs();
    let relative_deviation = if predicted == 0.0 {
        abs_dev
    } else {
        abs_dev / predicted.abs()
    };
    let sigma_deviation = if se == 0.0 {
        if abs_dev == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        abs_dev / se
    };
    Ok(SignalMomentReport {
        predicted,
        empirical_mean,
        standard_error: se,
        trials,
        relative_deviation,
        sigma_deviation,
        formula,
        output_linear: arch.output_linear,
    })
}
