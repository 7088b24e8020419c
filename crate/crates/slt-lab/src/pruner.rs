//! Strong-ticket search by score optimization ("edge-popup", extended):
//! popup scores on biases as well as weights, geometric sparsity
//! annealing, and an optional per-epoch output rescale.
//!
//! The network's weights and biases are frozen. Every parameter carries a
//! trainable score; each layer keeps the `ceil(sparsity * params)`
//! highest-scoring parameters (weights and biases compete in one pool)
//! and the rest are masked. The forward pass uses the masked network,
//! and the straight-through estimator sends the loss gradient to all
//! scores — including currently masked ones — so pruned parameters can
//! pop back in.
//!
//! Sparsity follows a geometric annealing schedule `rho^(i/e_a)` down to
//! the target `rho`; the levels before the target each last
//! `epochs_per_level` epochs, and the run then holds the target sparsity
//! for `epochs_at_target` epochs so the scores can settle after the last
//! cut. With rescaling enabled, each epoch ends by fitting a single
//! output scale on a fixed subsample of the training set and folding it
//! into the frozen parameters; the per-epoch factor and the cumulative
//! product are both logged since parameters are overwritten each time.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::grad::backward_scores;
use crate::loss::{accuracy, cross_entropy_value, mse, mse_value, softmax_cross_entropy};
use crate::net::{Mask, Network, ParamTensors};
use crate::numeric::derive_seed;
use crate::opt::{sgd_step, SgdConfig, SgdState};
use crate::scaling::{
    distribute_lambda_in_place, fit_lambda_generic, fit_lambda_mse, FitFlag, LambdaFit,
};

/// Every score starts at the same constant.
pub const SCORE_INIT: f64 = 0.5;

/// The per-epoch output scale is fitted on at most this many training
/// samples (a fixed, seeded subsample) to keep the fit pass cheap.
pub const RESCALE_FIT_CAP: usize = 4096;

fn default_score_init() -> f64 {
    SCORE_INIT
}

/// Configuration of one pruning run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PruneConfig {
    /// Target fraction of parameters kept per layer, in (0, 1].
    pub target_sparsity: f64,
    /// Number of annealing levels (the sparsity exponent denominator).
    pub annealing_levels: usize,
    /// Epochs spent at each annealing level before the target is reached.
    pub epochs_per_level: usize,
    /// Epochs spent at the final level, holding the target sparsity.
    pub epochs_at_target: usize,
    /// Optimizer for the scores.
    pub sgd: SgdConfig,
    /// Fit and fold in an output scale at the end of every epoch.
    pub rescale: bool,
    #[serde(default = "default_score_init")]
    pub score_init: f64,
    pub seed: u64,
}

impl PruneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.target_sparsity > 0.0 && self.target_sparsity <= 1.0) {
            return Err(Error::config(format!(
                "target sparsity must lie in (0, 1], got {}",
                self.target_sparsity
            )));
        }
        if self.annealing_levels == 0 {
            return Err(Error::config("annealing_levels must be at least 1"));
        }
        if self.epochs_per_level == 0 {
            return Err(Error::config("epochs_per_level must be at least 1"));
        }
        if self.epochs_at_target == 0 {
            return Err(Error::config("epochs_at_target must be at least 1"));
        }
        if !self.score_init.is_finite() {
            return Err(Error::config(format!(
                "score_init must be finite, got {}",
                self.score_init
            )));
        }
        self.sgd.validate()
    }

    /// Total number of epochs a run of this configuration takes: the
    /// levels before the target each last `epochs_per_level`, and the
    /// final level `epochs_at_target`.
    pub fn total_epochs(&self) -> usize {
        (self.annealing_levels - 1) * self.epochs_per_level + self.epochs_at_target
    }

    /// Total number of optimizer steps a run of this configuration takes
    /// on `n` training samples — the natural horizon for a cosine
    /// schedule.
    pub fn total_steps(&self, n: usize) -> usize {
        let batch = self.sgd.batch_size.max(1);
        self.total_epochs() * n.div_ceil(batch)
    }
}

/// A frozen network together with its popup scores. The mask is always
/// derived from the scores, never stored as independent state.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredNetwork {
    /// Parameters are frozen: only the output rescale ever touches them.
    pub net: Network,
    pub scores: ParamTensors,
}

impl ScoredNetwork {
    pub fn new(net: Network, score_init: f64) -> Self {
        let scores = ParamTensors::constant(&net.arch, score_init);
        ScoredNetwork { net, scores }
    }

    /// The mask the current scores induce at the given sparsity.
    pub fn mask(&self, sparsity: f64) -> Mask {
        get_mask(&self.scores, sparsity)
    }
}

/// Per-layer top-k selection over the combined weight-and-bias pool.
///
/// Layer `l` keeps the `ceil(sparsity * (weights + biases in l))`
/// parameters with the largest scores. Ties are broken by parameter
/// index — row-major weight entries first, then biases — with the lower
/// index winning, so masks are fully deterministic.
pub fn get_mask(scores: &ParamTensors, sparsity: f64) -> Mask {
    assert!(
        sparsity > 0.0 && sparsity <= 1.0,
        "sparsity must lie in (0, 1], got {sparsity}"
    );
    let mut weight_masks = Vec::with_capacity(scores.weights.len());
    let mut bias_masks = Vec::with_capacity(scores.biases.len());
    for (w, b) in scores.weights.iter().zip(scores.biases.iter()) {
        let nw = w.len();
        let n = nw + b.len();
        let k = ((sparsity * n as f64).ceil() as usize).clamp(1, n);
        let mut wm = Array2::zeros(w.dim());
        let mut bm = ndarray::Array1::zeros(b.len());
        if k == n {
            wm.fill(1.0);
            bm.fill(1.0);
        } else {
            // (score, flat index); iteration order of `iter` is logical
            // row-major order, which defines the tie-break index.
            let mut entries: Vec<(f64, usize)> = Vec::with_capacity(n);
            entries.extend(w.iter().enumerate().map(|(i, &s)| (s, i)));
            entries.extend(b.iter().enumerate().map(|(i, &s)| (s, nw + i)));
            entries.select_nth_unstable_by(k - 1, |a, b| {
                b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
            });
            let cols = w.ncols();
            for &(_, idx) in &entries[..k] {
                if idx < nw {
                    wm[[idx / cols, idx % cols]] = 1.0;
                } else {
                    bm[idx - nw] = 1.0;
                }
            }
        }
        weight_masks.push(wm);
        bias_masks.push(bm);
    }
    Mask {
        weight_masks,
        bias_masks,
    }
}

/// Geometric annealing schedule `[rho^(1/e_a), ..., rho^(e_a/e_a)]`; the
/// last element is set to `rho` exactly (no floating-point drift).
pub fn anneal_schedule(rho: f64, levels: usize) -> Vec<f64> {
    assert!(
        rho > 0.0 && rho <= 1.0,
        "target sparsity must lie in (0, 1], got {rho}"
    );
    assert!(levels >= 1, "need at least one annealing level");
    let mut schedule: Vec<f64> = (1..=levels)
        .map(|i| rho.powf(i as f64 / levels as f64))
        .collect();
    *schedule.last_mut().unwrap() = rho;
    schedule
}

/// One row of the per-epoch training log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    /// Annealing level, 1-based.
    pub level: usize,
    /// Epoch within the level, 1-based.
    pub epoch: usize,
    /// Sparsity in force during this epoch.
    pub sparsity: f64,
    /// Sample-weighted mean minibatch training loss.
    pub train_loss: f64,
    /// Held-out metric at epoch end (MSE for regression, accuracy for
    /// classification); absent when no eval set was supplied.
    pub eval_metric: Option<f64>,
    /// Output scale applied this epoch (1 when rescaling is off or the
    /// fit was unusable).
    pub lambda_tilde: f64,
    /// Running product of every applied scale.
    pub lambda_cum: f64,
    /// How the scale fit terminated, for the rescaled runs.
    pub rescale_flag: Option<FitFlag>,
    /// Fit-set loss just before the scale was folded in.
    pub fit_loss_before: Option<f64>,
    /// Fit-set loss at the fitted scale (equals `fit_loss_before` when
    /// the scale was not applied).
    pub fit_loss_after: Option<f64>,
}

/// Everything a pruning run produces.
#[derive(Debug, Clone)]
pub struct PruneOutcome {
    /// The frozen network, including any folded-in rescales.
    pub scored: ScoredNetwork,
    /// Final mask at the target sparsity.
    pub mask: Mask,
    /// Scale fitted in the very last epoch (parameters are overwritten
    /// each epoch, so this is the factor still "unfolded" conceptually).
    pub lambda_last: f64,
    /// Product of all applied per-epoch scales.
    pub lambda_cum: f64,
    pub log: Vec<EpochRecord>,
}

/// Held-out quality of a (masked) network on a dataset: mean squared
/// error for regression, accuracy for classification.
pub fn evaluate(net: &Network, mask: Option<&Mask>, ds: &Dataset) -> f64 {
    let out = net.output(mask, &ds.inputs);
    match ds.labels() {
        Some(labels) => accuracy(&out, labels),
        None => mse_value(&out, &ds.targets_matrix()),
    }
}

struct FitSet {
    x: Array2<f64>,
    y: Array2<f64>,
    labels: Option<Vec<usize>>,
}

impl FitSet {
    fn loss(&self, logits: &Array2<f64>) -> f64 {
        match &self.labels {
            Some(labels) => cross_entropy_value(logits, labels),
            None => mse_value(logits, &self.y),
        }
    }
}

/// The strong-ticket search. Scores are trained by SGD with a
/// straight-through gradient while weights and biases stay frozen;
/// sparsity anneals geometrically to the target; with `cfg.rescale`, an
/// output scale is fitted and folded into the parameters after every
/// epoch. Returns the final mask, the last and cumulative scales, the
/// final scores, and the per-epoch log.
///
/// A non-finite training loss aborts with a diagnostic dump of the run
/// state.
pub fn edge_popup(
    f0: &Network,
    train: &Dataset,
    eval: Option<&Dataset>,
    cfg: &PruneConfig,
) -> Result<PruneOutcome> {
    cfg.validate()?;
    let arch = &f0.arch;
    if arch.input_dim() != train.input_dim() {
        return Err(Error::config(format!(
            "network expects {} inputs, dataset has {}",
            arch.input_dim(),
            train.input_dim()
        )));
    }
    if arch.output_dim() != train.target_dim() {
        return Err(Error::config(format!(
            "network has {} outputs, dataset needs {}",
            arch.output_dim(),
            train.target_dim()
        )));
    }
    let classification = train.is_classification();
    if classification && !arch.output_linear {
        return Err(Error::config(
            "classification needs linear outputs (logits); this architecture \
             applies the activation to the last layer",
        ));
    }

    let n = train.len();
    let batch = cfg.sgd.batch_size.min(n).max(1);
    let schedule = anneal_schedule(cfg.target_sparsity, cfg.annealing_levels);

    let mut scored = ScoredNetwork::new(f0.clone(), cfg.score_init);
    let mut state = SgdState::new(arch);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[1]));

    // Fixed subsample on which every epoch's output scale is fitted.
    let fit_set = {
        let mut idx: Vec<usize> = (0..n).collect();
        if n > RESCALE_FIT_CAP {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[2]));
            idx.shuffle(&mut rng);
            idx.truncate(RESCALE_FIT_CAP);
            idx.sort_unstable();
        }
        let (x, y) = train.gather(&idx);
        let labels = train
            .labels()
            .map(|all| idx.iter().map(|&i| all[i]).collect());
        FitSet { x, y, labels }
    };

    let mut lambda_cum = 1.0;
    let mut lambda_last = 1.0;
    let mut log = Vec::with_capacity(cfg.annealing_levels * cfg.epochs_per_level);
    let mut step = 0usize;
    let mut indices: Vec<usize> = (0..n).collect();
    let all_labels = train.labels();

    for (li, &sparsity) in schedule.iter().enumerate() {
        let level = li + 1;
        for epoch in 1..=cfg.epochs_per_level {
            indices.shuffle(&mut shuffle_rng);
            let mut loss_sum = 0.0;
            for chunk in indices.chunks(batch) {
                let (x, y) = train.gather(chunk);
                let mask = scored.mask(sparsity);
                let trace = scored.net.forward(Some(&mask), &x);
                let (loss, dloss) = match all_labels {
                    Some(labels) => {
                        let batch_labels: Vec<usize> =
                            chunk.iter().map(|&i| labels[i]).collect();
                        softmax_cross_entropy(trace.output(), &batch_labels)
                    }
                    None => mse(trace.output(), &y),
                };
                if !loss.is_finite() {
                    return Err(diverged(&scored, level, epoch, step, loss, lambda_cum));
                }
                let grads = backward_scores(&scored.net, &mask, &trace, &dloss);
                sgd_step(
                    &mut scored.scores.weights,
                    &mut scored.scores.biases,
                    &grads,
                    &mut state,
                    &cfg.sgd,
                    step,
                );
                step += 1;
                loss_sum += loss * chunk.len() as f64;
            }
            let train_loss = loss_sum / n as f64;

            // Output rescale: fit one scalar on the fixed subsample and
            // fold it into the frozen parameters. Applied only when it
            // does not increase the fit-set loss (the whole point of the
            // step is loss reduction; a numeric search that lost to the
            // identity is treated as "no rescale").
            let mut lambda_tilde = 1.0;
            let mut rescale_flag = None;
            let mut fit_loss_before = None;
            let mut fit_loss_after = None;
            if cfg.rescale {
                let mask = scored.mask(sparsity);
                let preds = scored.net.output(Some(&mask), &fit_set.x);
                let before = fit_set.loss(&preds);
                if !before.is_finite() {
                    return Err(diverged(&scored, level, epoch, step, before, lambda_cum));
                }
                let fit = fit_scale(&preds, &fit_set)?;
                let after_candidate = fit_set.loss(&preds.mapv(|p| fit.lambda * p));
                let apply = fit.usable() && after_candidate <= before;
                if apply {
                    distribute_lambda_in_place(&mut scored.net, fit.lambda)?;
                    lambda_tilde = fit.lambda;
                    lambda_cum *= fit.lambda;
                    lambda_last = fit.lambda;
                }
                rescale_flag = Some(fit.flag);
                fit_loss_before = Some(before);
                fit_loss_after = Some(if apply { after_candidate } else { before });
            }

            let eval_metric =
                eval.map(|ds| evaluate(&scored.net, Some(&scored.mask(sparsity)), ds));
            log.push(EpochRecord {
                level,
                epoch,
                sparsity,
                train_loss,
                eval_metric,
                lambda_tilde,
                lambda_cum,
                rescale_flag,
                fit_loss_before,
                fit_loss_after,
            });
        }
    }

    let mask = scored.mask(cfg.target_sparsity);
    Ok(PruneOutcome {
        scored,
        mask,
        lambda_last,
        lambda_cum,
        log,
    })
}

fn fit_scale(preds: &Array2<f64>, fit_set: &FitSet) -> Result<LambdaFit> {
    match &fit_set.labels {
        Some(labels) => {
            fit_lambda_generic(|l| cross_entropy_value(&preds.mapv(|p| l * p), labels), 1.0)
        }
        None => Ok(fit_lambda_mse(preds, &fit_set.y)),
    }
}

fn diverged(
    scored: &ScoredNetwork,
    level: usize,
    epoch: usize,
    step: usize,
    loss: f64,
    lambda_cum: f64,
) -> Error {
    let max_abs = |it: &mut dyn Iterator<Item = f64>| it.fold(0.0f64, |m, v| m.max(v.abs()));
    let max_w = max_abs(&mut scored.net.weights.iter().flat_map(|w| w.iter().copied()));
    let max_b = max_abs(&mut scored.net.biases.iter().flat_map(|b| b.iter().copied()));
    let max_s = max_abs(&mut scored.scores.weights.iter().flat_map(|w| w.iter().copied()));
    Error::Diverged {
        level,
        epoch,
        step,
        loss,
        dump: format!(
            "max|w| = {max_w:.3e}, max|b| = {max_b:.3e}, max|score| = {max_s:.3e}, \
             cumulative lambda = {lambda_cum:.3e}"
        ),
    }
}
