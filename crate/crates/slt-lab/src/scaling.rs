//! Layerwise scaling transform and output-scale fitting.
//!
//! The transform: multiplying layer `l`'s weights by `sigma_l > 0` and its
//! biases by the running product `prod_{m<=l} sigma_m` multiplies the
//! whole network's output by exactly `prod_l sigma_l` — relu and the
//! identity are positively homogeneous, so the per-layer factor rides
//! along the forward pass and the bias products keep biases in step with
//! the scaled signal.
//!
//! Output-scale fitting: after pruning, the surviving subnetwork's output
//! is typically well-shaped but wrongly sized; a single scalar `lambda`
//! multiplying the output recovers most of the loss. For the squared
//! error there is a closed form
//! `lambda = sum(y * x) / sum(x * x)`; for other losses a bracketed
//! golden-section search does the job. A fitted `lambda` is folded back
//! into the parameters via [`distribute_lambda`], which spreads it evenly
//! across layers (`lambda^(1/L)` per weight layer, `lambda^(l/L)` on the
//! biases of layer `l`).

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{Mask, Network};
use crate::numeric::golden_section_min;

/// Positive per-layer weight multipliers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleVector {
    pub sigma: Vec<f64>,
}

impl ScaleVector {
    pub fn new(sigma: Vec<f64>) -> Result<Self> {
        if let Some(&s) = sigma.iter().find(|&&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::NonPositiveScale(s));
        }
        Ok(ScaleVector { sigma })
    }

    /// Product of all multipliers — the factor applied to the output.
    pub fn product(&self) -> f64 {
        self.sigma.iter().product()
    }
}

/// Clamp range for fitted output scales; values at the clamp are flagged.
pub const LAMBDA_MIN: f64 = 1e-6;
pub const LAMBDA_MAX: f64 = 1e6;

/// Applies the layerwise transform: `w^(l) <- sigma_l w^(l)`,
/// `b^(l) <- (prod_{m<=l} sigma_m) b^(l)`. The returned network computes
/// `prod_l sigma_l` times the original function (relu/identity
/// activations, positive scales).
pub fn apply_scaling(net: &Network, s: &ScaleVector) -> Result<Network> {
    if s.sigma.len() != net.depth() {
        return Err(Error::config(format!(
            "scale vector has {} entries for a depth-{} network",
            s.sigma.len(),
            net.depth()
        )));
    }
    if let Some(&v) = s.sigma.iter().find(|&&v| !(v > 0.0)) {
        return Err(Error::NonPositiveScale(v));
    }
    let mut out = net.clone();
    let mut running = 1.0;
    for l in 0..net.depth() {
        running *= s.sigma[l];
        out.weights[l].mapv_inplace(|w| w * s.sigma[l]);
        let factor = running;
        out.biases[l].mapv_inplace(|b| b * factor);
    }
    Ok(out)
}

/// Outcome of a scale fit: the scale plus how the fit ended.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaFit {
    pub lambda: f64,
    pub flag: FitFlag,
}

/// How a scale fit terminated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitFlag {
    /// Interior minimum found.
    Converged,
    /// Predictions were identically zero: no scale is defined; `lambda`
    /// is 1 and callers should skip the rescale.
    ZeroPredictions,
    /// Objective kept decreasing to a bracket edge even after expansion;
    /// `lambda` is the edge value.
    BracketEdge,
    /// The fitted value hit the [`LAMBDA_MIN`, `LAMBDA_MAX`] clamp.
    Clamped,
}

impl LambdaFit {
    /// True when the rescale should actually be applied.
    pub fn usable(&self) -> bool {
        self.flag != FitFlag::ZeroPredictions
    }
}

/// Closed-form minimizer of `sum((y - lambda x)^2)`:
/// `lambda = sum(y x) / sum(x x)`.
///
/// All-zero predictions have no defined scale: returns `lambda = 1`
/// flagged [`FitFlag::ZeroPredictions`] so callers skip the rescale.
pub fn fit_lambda_mse(predictions: &Array2<f64>, targets: &Array2<f64>) -> LambdaFit {
    assert_eq!(
        predictions.dim(),
        targets.dim(),
        "prediction shape {:?} vs target shape {:?}",
        predictions.dim(),
        targets.dim()
    );
    let denom: f64 = predictions.iter().map(|x| x * x).sum();
    if denom == 0.0 {
        return LambdaFit {
            lambda: 1.0,
            flag: FitFlag::ZeroPredictions,
        };
    }
    let numer: f64 = predictions
        .iter()
        .zip(targets.iter())
        .map(|(x, y)| x * y)
        .sum();
    let lambda = numer / denom;
    clamp_fit(lambda, FitFlag::Converged)
}

fn clamp_fit(lambda: f64, flag: FitFlag) -> LambdaFit {
    if lambda > LAMBDA_MAX {
        LambdaFit {
            lambda: LAMBDA_MAX,
            flag: FitFlag::Clamped,
        }
    } else if lambda < LAMBDA_MIN {
        LambdaFit {
            lambda: LAMBDA_MIN,
            flag: FitFlag::Clamped,
        }
    } else {
        LambdaFit { lambda, flag }
    }
}

/// One-dimensional minimization of an arbitrary scalar loss over the
/// scale, golden-section on `[lambda0/64, 64 lambda0]` with bracket
/// expansion, to absolute tolerance 1e-6 in the scale.
///
/// A loss that keeps decreasing toward an edge after expansion returns
/// the edge flagged [`FitFlag::BracketEdge`]. Non-finite loss values
/// anywhere on the probed bracket are an error.
pub fn fit_lambda_generic(loss: impl Fn(f64) -> f64, lambda0: f64) -> Result<LambdaFit> {
    if !(lambda0 > 0.0) || !lambda0.is_finite() {
        return Err(Error::FitFailed(format!(
            "initial scale must be positive and finite, got {lambda0}"
        )));
    }
    let check = |l: f64, v: f64| -> Result<f64> {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::FitFailed(format!("loss not finite at lambda = {l}: {v}")))
        }
    };
    let tol = 1e-6;
    let mut lo = (lambda0 / 64.0).max(LAMBDA_MIN);
    let mut hi = (lambda0 * 64.0).min(LAMBDA_MAX);
    // Expand the bracket while the minimum sits on an edge (up to the
    // global clamp range).
    for _ in 0..8 {
        let (x, _) = golden_section_min(&|l| loss(l), lo, hi, tol);
        check(lo, loss(lo))?;
        check(hi, loss(hi))?;
        check(x, loss(x))?;
        let at_lo = (x - lo).abs() <= 2.0 * tol;
        let at_hi = (hi - x).abs() <= 2.0 * tol;
        if at_lo && lo > LAMBDA_MIN {
            lo = (lo / 64.0).max(LAMBDA_MIN);
            continue;
        }
        if at_hi && hi < LAMBDA_MAX {
            hi = (hi * 64.0).min(LAMBDA_MAX);
            continue;
        }
        if at_lo || at_hi {
            return Ok(LambdaFit {
                lambda: if at_lo { lo } else { hi },
                flag: FitFlag::BracketEdge,
            });
        }
        return Ok(clamp_fit(x, FitFlag::Converged));
    }
    Ok(LambdaFit {
        lambda: if loss(lo) <= loss(hi) { lo } else { hi },
        flag: FitFlag::BracketEdge,
    })
}

/// Folds an output scale into the parameters, spread evenly across
/// layers: every weight is multiplied by `lambda^(1/L)` and the biases of
/// layer `l` by `lambda^(l/L)`. Equivalent to [`apply_scaling`] with all
/// multipliers equal, so the output is scaled by exactly `lambda`.
pub fn distribute_lambda(net: &Network, lambda: f64) -> Result<Network> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::NonPositiveScale(lambda));
    }
    let depth = net.depth();
    let per_layer = lambda.powf(1.0 / depth as f64);
    apply_scaling(net, &ScaleVector::new(vec![per_layer; depth])?)
}

/// In-place variant of [`distribute_lambda`] used by the pruning loop.
pub fn distribute_lambda_in_place(net: &mut Network, lambda: f64) -> Result<()> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::NonPositiveScale(lambda));
    }
    let depth = net.depth();
    let per_layer = lambda.powf(1.0 / depth as f64);
    let mut running = 1.0;
    for l in 0..depth {
        running *= per_layer;
        net.weights[l].mapv_inplace(|w| w * per_layer);
        let factor = running;
        net.biases[l].mapv_inplace(|b| b * factor);
    }
    Ok(())
}

/// Forward-comparison helper used by tests and verification reports:
/// max relative deviation of `scaled(x)` from `factor * base(x)` over the
/// columns of `batch`.
pub fn max_relative_scaling_error(
    base: &Network,
    scaled: &Network,
    mask: Option<&Mask>,
    factor: f64,
    batch: &Array2<f64>,
) -> f64 {
    let y0 = base.output(mask, batch);
    let y1 = scaled.output(mask, batch);
    y0.iter()
        .zip(y1.iter())
        .map(|(a, b)| {
            let expect = factor * a;
            (b - expect).abs() / expect.abs().max(1e-12)
        })
        .fold(0.0, f64::max)
}
