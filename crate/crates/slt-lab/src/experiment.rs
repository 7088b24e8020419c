//! Experiment plumbing behind the command-line driver: structured
//! configuration with defaults, the baseline SGD trainer that produces
//! desk-scale target networks, magnitude pruning, sparsity sweeps with
//! per-run and aggregate CSV reporting, and metric evaluation.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{gen_onion, gen_shifted_relu, sidecar_path, split, Dataset};
use crate::error::{Error, Result};
use crate::grad::backward_train;
use crate::init::{InitSpec, Scheme};
use crate::loss::{accuracy, mse, mse_value, softmax_cross_entropy};
use crate::net::{Architecture, Mask, Network};
use crate::numeric::derive_seed;
use crate::opt::{sgd_step, LrSchedule, SgdConfig, SgdState};
use crate::pruner::{edge_popup, evaluate, EpochRecord, PruneConfig, SCORE_INIT};

/// What a config file drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Train,
    Prune,
    Construct,
    Verify,
}

/// Dataset section of the config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetConfig {
    ShiftedRelu {
        #[serde(default = "default_n")]
        n: usize,
        #[serde(default = "default_shift")]
        shift: f64,
        #[serde(default = "default_noise_sd")]
        noise_sd: f64,
    },
    Onion {
        #[serde(default = "default_n")]
        n: usize,
        #[serde(default = "default_flip_prob")]
        flip_prob: f64,
    },
}

fn default_n() -> usize {
    10_000
}
fn default_shift() -> f64 {
    0.5
}
fn default_noise_sd() -> f64 {
    0.01
}
fn default_flip_prob() -> f64 {
    0.01
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig::ShiftedRelu {
            n: default_n(),
            shift: default_shift(),
            noise_sd: default_noise_sd(),
        }
    }
}

impl DatasetConfig {
    pub fn generate(&self, seed: u64) -> Result<Dataset> {
        match *self {
            DatasetConfig::ShiftedRelu { n, shift, noise_sd } => {
                gen_shifted_relu(n, shift, noise_sd, seed)
            }
            DatasetConfig::Onion { n, flip_prob } => gen_onion(n, flip_prob, seed),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            DatasetConfig::ShiftedRelu { .. } => 1,
            DatasetConfig::Onion { .. } => 2,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            DatasetConfig::ShiftedRelu { .. } => 1,
            DatasetConfig::Onion { .. } => crate::data::ONION_CLASSES,
        }
    }
}

/// Architecture section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub widths: Vec<usize>,
    #[serde(default = "default_true")]
    pub output_linear: bool,
}

fn default_true() -> bool {
    true
}

impl Default for ArchConfig {
    /// The benchmark scale: depth 5, width 100.
    fn default() -> Self {
        ArchConfig {
            widths: vec![1, 100, 100, 100, 100, 1],
            output_linear: true,
        }
    }
}

impl ArchConfig {
    pub fn to_arch(&self) -> Result<Architecture> {
        Architecture::new(self.widths.clone(), self.output_linear)
    }
}

/// Initialization section; omitted scales mean the variance-preserving
/// defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitConfig {
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_w: Option<Vec<f64>>,
    #[serde(default)]
    pub zero_bias: bool,
}

fn default_scheme() -> Scheme {
    Scheme::Uniform
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig {
            scheme: default_scheme(),
            sigma_w: None,
            zero_bias: false,
        }
    }
}

impl InitConfig {
    pub fn to_spec(&self, arch: &Architecture, seed: u64) -> InitSpec {
        let mut spec = match &self.sigma_w {
            Some(s) => InitSpec {
                scheme: self.scheme,
                sigma_w: s.clone(),
                zero_bias: self.zero_bias,
                seed,
            },
            None => InitSpec::he(arch, self.scheme, seed),
        };
        spec.zero_bias = self.zero_bias;
        spec
    }
}

/// Pruning section: annealing shape plus optimizer hyperparameters
/// (defaults are the benchmark settings).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneSection {
    /// `None` resolves per dataset and sparsity (see
    /// [`default_annealing_levels`]).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annealing_levels: Option<usize>,
    #[serde(default = "default_epochs_per_level")]
    pub epochs_per_level: usize,
    #[serde(default = "default_true")]
    pub rescale: bool,
    #[serde(default = "default_score_init")]
    pub score_init: f64,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_true")]
    pub cosine: bool,
}

fn default_epochs_per_level() -> usize {
    10
}
fn default_score_init() -> f64 {
    SCORE_INIT
}
fn default_lr() -> f64 {
    0.1
}
fn default_momentum() -> f64 {
    0.9
}
fn default_weight_decay() -> f64 {
    5e-4
}
fn default_batch_size() -> usize {
    32
}

impl Default for PruneSection {
    fn default() -> Self {
        PruneSection {
            annealing_levels: None,
            epochs_per_level: default_epochs_per_level(),
            rescale: true,
            score_init: default_score_init(),
            learning_rate: default_lr(),
            momentum: default_momentum(),
            weight_decay: default_weight_decay(),
            batch_size: default_batch_size(),
            cosine: true,
        }
    }
}

/// Annealing-level defaults: the regression benchmark uses 5 levels;
/// the classification benchmark uses the longer 20-level schedule at the
/// mid-range sparsities (0.01, 0.05) and 10 elsewhere.
pub fn default_annealing_levels(dataset: &DatasetConfig, sparsity: f64) -> usize {
    match dataset {
        DatasetConfig::ShiftedRelu { .. } => 5,
        DatasetConfig::Onion { .. } => {
            if (0.005..=0.05).contains(&sparsity) {
                20
            } else {
                10
            }
        }
    }
}

impl PruneSection {
    /// Materializes a full pruning config for one sweep cell.
    pub fn to_prune_config(
        &self,
        dataset: &DatasetConfig,
        sparsity: f64,
        train_size: usize,
        seed: u64,
    ) -> PruneConfig {
        let levels = self
            .annealing_levels
            .unwrap_or_else(|| default_annealing_levels(dataset, sparsity));
        let steps_per_epoch = train_size.div_ceil(self.batch_size);
        let total_steps = levels * self.epochs_per_level * steps_per_epoch;
        let schedule = if self.cosine {
            LrSchedule::Cosine { total_steps }
        } else {
            LrSchedule::Constant
        };
        PruneConfig {
            target_sparsity: sparsity,
            annealing_levels: levels,
            epochs_per_level: self.epochs_per_level,
            sgd: SgdConfig {
                learning_rate: self.learning_rate,
                momentum: self.momentum,
                weight_decay: self.weight_decay,
                schedule,
                batch_size: self.batch_size,
            },
            rescale: self.rescale,
            score_init: self.score_init,
            seed,
        }
    }
}

/// Baseline-training section (`mode = "train"`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSection {
    #[serde(default = "default_train_epochs")]
    pub epochs: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    /// Dense fitting works best without decay pulling the exact fit away.
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_true")]
    pub cosine: bool,
    /// One-shot global magnitude pruning to this weight density after
    /// training, followed by fine-tuning. `None` keeps the net dense.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<f64>,
    #[serde(default = "default_fine_tune_epochs")]
    pub fine_tune_epochs: usize,
}

fn default_train_epochs() -> usize {
    50
}
fn default_fine_tune_epochs() -> usize {
    10
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            epochs: default_train_epochs(),
            learning_rate: default_lr(),
            momentum: default_momentum(),
            weight_decay: 0.0,
            batch_size: default_batch_size(),
            cosine: true,
            density: None,
            fine_tune_epochs: default_fine_tune_epochs(),
        }
    }
}

/// Construction section (`mode = "construct"`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstructSection {
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// `None` uses the calibrated default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    /// Path of a saved network to approximate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<PathBuf>,
}

fn default_epsilon() -> f64 {
    0.05
}
fn default_delta() -> f64 {
    0.1
}

impl Default for ConstructSection {
    fn default() -> Self {
        ConstructSection {
            epsilon: default_epsilon(),
            delta: default_delta(),
            c: None,
            target: None,
        }
    }
}

/// The full experiment configuration, loadable from TOML. Every omitted
/// field has a default; `resolved_toml` captures them all.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default = "default_sparsities")]
    pub sparsities: Vec<f64>,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub architecture: ArchConfig,
    #[serde(default)]
    pub init: InitConfig,
    #[serde(default)]
    pub prune: PruneSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub construct: ConstructSection,
}

fn default_repetitions() -> usize {
    5
}

/// The benchmark sweep grid.
fn default_sparsities() -> Vec<f64> {
    vec![0.002, 0.01, 0.05, 0.1, 0.2]
}

fn default_test_fraction() -> f64 {
    0.2
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn new(mode: Mode) -> Self {
        ExperimentConfig {
            mode,
            seed: 0,
            repetitions: default_repetitions(),
            sparsities: default_sparsities(),
            test_fraction: default_test_fraction(),
            out_dir: default_out_dir(),
            dataset: DatasetConfig::default(),
            architecture: ArchConfig::default(),
            init: InitConfig::default(),
            prune: PruneSection::default(),
            train: TrainSection::default(),
            construct: ConstructSection::default(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let cfg: ExperimentConfig = toml::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions < 1 {
            return Err(Error::config("repetitions must be at least 1"));
        }
        if let Some(&s) = self
            .sparsities
            .iter()
            .find(|&&s| !(s > 0.0 && s <= 1.0) || !s.is_finite())
        {
            return Err(Error::config(format!(
                "sweep sparsities must lie in (0, 1], got {s}"
            )));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::config(format!(
                "test_fraction must lie in (0, 1), got {}",
                self.test_fraction
            )));
        }
        let arch = self.architecture.to_arch()?;
        if matches!(self.mode, Mode::Train | Mode::Prune) {
            if arch.input_dim() != self.dataset.input_dim() {
                return Err(Error::config(format!(
                    "architecture takes {} inputs but the dataset has {}",
                    arch.input_dim(),
                    self.dataset.input_dim()
                )));
            }
            if arch.output_dim() != self.dataset.output_dim() {
                return Err(Error::config(format!(
                    "architecture emits {} outputs but the dataset needs {}",
                    arch.output_dim(),
                    self.dataset.output_dim()
                )));
            }
        }
        Ok(())
    }

    /// The configuration with all defaults materialized, as TOML — the
    /// content of `config.resolved`.
    pub fn resolved_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    /// Generates the train/test pair this config describes. The
    /// generator and split seeds derive from the master seed only, so
    /// every sweep cell sees the same data.
    pub fn build_dataset(&self) -> Result<(Dataset, Dataset)> {
        let ds = self.dataset.generate(derive_seed(self.seed, &[0xDA7A]))?;
        split(&ds, self.test_fraction, derive_seed(self.seed, &[0x591]))
    }

    /// Provenance blob embedded in JSON artifacts and CSV sidecars.
    pub fn provenance(&self) -> serde_json::Value {
        serde_json::json!({
            "master_seed": self.seed,
            "config": self,
        })
    }
}

/// Seconds since the Unix epoch; the trailing CSV column.
pub fn unix_timestamp() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Writes via a temporary sibling plus rename, so concurrently running
/// cells never observe a half-written file.
pub fn atomic_write(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// One epoch of the baseline trainer's log.
#[derive(Debug, Clone, Serialize)]
pub struct TrainLogRow {
    pub phase: &'static str,
    pub epoch: usize,
    pub train_loss: f64,
    pub test_metric: Option<f64>,
}

fn epoch_pass(
    net: &mut Network,
    mask: Option<&Mask>,
    train: &Dataset,
    sgd: &SgdConfig,
    state: &mut SgdState,
    order: &mut Vec<usize>,
    rng: &mut ChaCha8Rng,
    step: &mut usize,
) -> f64 {
    order.shuffle(rng);
    let mut loss_sum = 0.0;
    let mut seen = 0usize;
    for chunk in order.chunks(sgd.batch_size) {
        let (x, y) = train.gather(chunk);
        let trace = net.forward(mask, &x);
        let (loss, grad) = match train.labels() {
            Some(labels) => {
                let batch_labels: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
                softmax_cross_entropy(trace.output(), &batch_labels)
            }
            None => mse(trace.output(), &y),
        };
        let grads = backward_train(net, mask, &trace, &grad);
        sgd_step(&mut net.weights, &mut net.biases, &grads, state, sgd, *step);
        *step += 1;
        loss_sum += loss * chunk.len() as f64;
        seen += chunk.len();
    }
    loss_sum / seen.max(1) as f64
}

fn check_finite(loss: f64, net: &Network, epoch: usize, step: usize) -> Result<()> {
    if loss.is_finite() && net.weights.iter().all(|w| w.iter().all(|v| v.is_finite())) {
        return Ok(());
    }
    let max_w = net
        .weights
        .iter()
        .flat_map(|w| w.iter())
        .fold(0.0f64, |m, &v| m.max(v.abs()));
    let max_b = net
        .biases
        .iter()
        .flat_map(|b| b.iter())
        .fold(0.0f64, |m, &v| m.max(v.abs()));
    Err(Error::Diverged {
        level: 0,
        epoch,
        step,
        loss,
        dump: format!("max|w| = {max_w:.3e}, max|b| = {max_b:.3e}"),
    })
}

/// Mask keeping the `ceil(density * num_weights)` largest-magnitude
/// weights globally (ties to the lower flat index) and every bias.
pub fn magnitude_mask(net: &Network, density: f64) -> Mask {
    assert!(
        density > 0.0 && density <= 1.0,
        "density must lie in (0, 1], got {density}"
    );
    let arch = &net.arch;
    let total = arch.num_weights();
    let k = ((density * total as f64).ceil() as usize).clamp(1, total);
    let mut entries: Vec<(f64, usize)> = Vec::with_capacity(total);
    let mut flat = 0usize;
    for w in &net.weights {
        for &v in w.iter() {
            entries.push((v.abs(), flat));
            flat += 1;
        }
    }
    let mut mask = Mask::ones(arch);
    if k < total {
        entries.select_nth_unstable_by(k - 1, |a, b| {
            b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
        });
        let keep: std::collections::HashSet<usize> =
            entries[..k].iter().map(|&(_, i)| i).collect();
        let mut flat = 0usize;
        for wm in &mut mask.weight_masks {
            wm.mapv_inplace(|_| 0.0);
            for v in wm.iter_mut() {
                if keep.contains(&flat) {
                    *v = 1.0;
                }
                flat += 1;
            }
        }
    }
    mask
}

/// SGD-trains a dense network on the configured dataset; optionally
/// magnitude-prunes it to `train.density` and fine-tunes the survivors.
/// Returns the final network (pruned entries materialized as zeros) and
/// the per-epoch log. Divergence aborts with a diagnostic dump.
pub fn train_baseline(cfg: &ExperimentConfig) -> Result<(Network, Vec<TrainLogRow>)> {
    cfg.validate()?;
    let (train, test) = cfg.build_dataset()?;
    let arch = cfg.architecture.to_arch()?;
    if train.is_classification() && !arch.output_linear {
        return Err(Error::config(
            "classification training needs linear outputs (logits)",
        ));
    }
    let init = cfg.init.to_spec(&arch, derive_seed(cfg.seed, &[0x171]));
    let mut net = crate::init::initialize(&arch, &init)?;

    let t = &cfg.train;
    let steps_per_epoch = train.len().div_ceil(t.batch_size);
    let schedule = |epochs: usize| {
        if t.cosine {
            LrSchedule::Cosine {
                total_steps: epochs * steps_per_epoch,
            }
        } else {
            LrSchedule::Constant
        }
    };
    let sgd = SgdConfig {
        learning_rate: t.learning_rate,
        momentum: t.momentum,
        weight_decay: t.weight_decay,
        schedule: schedule(t.epochs),
        batch_size: t.batch_size,
    };
    sgd.validate()?;

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[0x172]));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut state = SgdState::new(&arch);
    let mut step = 0usize;
    let mut log = Vec::new();
    for epoch in 0..t.epochs {
        let loss = epoch_pass(
            &mut net, None, &train, &sgd, &mut state, &mut order, &mut rng, &mut step,
        );
        check_finite(loss, &net, epoch, step)?;
        log.push(TrainLogRow {
            phase: "train",
            epoch,
            train_loss: loss,
            test_metric: Some(evaluate(&net, None, &test)),
        });
    }

    if let Some(density) = t.density {
        let mask = magnitude_mask(&net, density);
        let fine_sgd = SgdConfig {
            schedule: schedule(t.fine_tune_epochs),
            ..sgd
        };
        let mut state = SgdState::new(&arch);
        let mut step = 0usize;
        for epoch in 0..t.fine_tune_epochs {
            let loss = epoch_pass(
                &mut net,
                Some(&mask),
                &train,
                &fine_sgd,
                &mut state,
                &mut order,
                &mut rng,
                &mut step,
            );
            check_finite(loss, &net, epoch, step)?;
            log.push(TrainLogRow {
                phase: "fine_tune",
                epoch,
                train_loss: loss,
                test_metric: Some(evaluate(&net, Some(&mask), &test)),
            });
        }
        net = net.materialize_mask(&mask);
    }
    Ok((net, log))
}

/// Test-set quality of `lambda * f(x)` under the optional mask: mean
/// squared error for regression, argmax accuracy for classification
/// (invariant under any positive `lambda`).
pub fn evaluate_metric(net: &Network, mask: Option<&Mask>, lambda: f64, ds: &Dataset) -> f64 {
    let out = net.output(mask, &ds.inputs) * lambda;
    match ds.labels() {
        Some(labels) => accuracy(&out, labels),
        None => mse_value(&out, &ds.targets_matrix()),
    }
}

/// Outcome of one successful sweep cell.
#[derive(Debug, Clone)]
pub struct RunSuccess {
    pub train_loss: f64,
    pub test_metric: f64,
    pub lambda_cum: f64,
    pub levels: usize,
    pub epochs_per_level: usize,
    pub log: Vec<EpochRecord>,
}

/// One sweep cell, success or failure.
#[derive(Debug)]
pub struct RunResult {
    pub sparsity: f64,
    pub repetition: usize,
    pub seed: u64,
    pub outcome: std::result::Result<RunSuccess, String>,
}

/// Per-sparsity aggregate over the successful repetitions.
#[derive(Debug, Clone, Serialize)]
pub struct Aggregate {
    pub sparsity: f64,
    pub mean: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub n_ok: usize,
    pub n_failed: usize,
}

/// A finished sweep: rows sorted by (sparsity, repetition), aggregates
/// by sparsity.
#[derive(Debug)]
pub struct SweepResults {
    pub runs: Vec<RunResult>,
    pub aggregates: Vec<Aggregate>,
}

/// Runs one (sparsity, repetition) cell: draw the net, search the
/// ticket, evaluate on the test set.
pub fn run_cell(
    cfg: &ExperimentConfig,
    train: &Dataset,
    test: &Dataset,
    sparsity: f64,
    repetition: usize,
) -> RunResult {
    let seed = derive_seed(cfg.seed, &[sparsity.to_bits(), repetition as u64]);
    let outcome = (|| -> Result<RunSuccess> {
        let arch = cfg.architecture.to_arch()?;
        let init = cfg.init.to_spec(&arch, derive_seed(seed, &[1]));
        let f0 = crate::init::initialize(&arch, &init)?;
        let prune_cfg =
            cfg.prune
                .to_prune_config(&cfg.dataset, sparsity, train.len(), derive_seed(seed, &[2]));
        let outcome = edge_popup(&f0, train, Some(test), &prune_cfg)?;
        let test_metric = evaluate(&outcome.scored.net, Some(&outcome.mask), test);
        let train_loss = outcome.log.last().map(|r| r.train_loss).unwrap_or(f64::NAN);
        Ok(RunSuccess {
            train_loss,
            test_metric,
            lambda_cum: outcome.lambda_cum,
            levels: prune_cfg.annealing_levels,
            epochs_per_level: prune_cfg.epochs_per_level,
            log: outcome.log,
        })
    })();
    RunResult {
        sparsity,
        repetition,
        seed,
        outcome: outcome.map_err(|e| e.to_string()),
    }
}

fn aggregate_runs(runs: &[RunResult]) -> Vec<Aggregate> {
    let mut sparsities: Vec<f64> = runs.iter().map(|r| r.sparsity).collect();
    sparsities.sort_by(f64::total_cmp);
    sparsities.dedup();
    sparsities
        .into_iter()
        .map(|s| {
            let metrics: Vec<f64> = runs
                .iter()
                .filter(|r| r.sparsity == s)
                .filter_map(|r| r.outcome.as_ref().ok())
                .map(|ok| ok.test_metric)
                .collect();
            let n_failed = runs
                .iter()
                .filter(|r| r.sparsity == s && r.outcome.is_err())
                .count();
            if metrics.is_empty() {
                Aggregate {
                    sparsity: s,
                    mean: None,
                    min: None,
                    max: None,
                    n_ok: 0,
                    n_failed,
                }
            } else {
                Aggregate {
                    sparsity: s,
                    mean: Some(metrics.iter().sum::<f64>() / metrics.len() as f64),
                    min: Some(metrics.iter().copied().fold(f64::INFINITY, f64::min)),
                    max: Some(metrics.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
                    n_ok: metrics.len(),
                    n_failed,
                }
            }
        })
        .collect()
}

/// Full sweep: every sparsity times every repetition, run as independent
/// tasks on up to `jobs` threads. Failed cells become failed rows; the
/// sweep continues. Rows come back sorted by (sparsity, repetition).
pub fn run_sweep(cfg: &ExperimentConfig, jobs: usize) -> Result<SweepResults> {
    cfg.validate()?;
    let (train, test) = cfg.build_dataset()?;
    let cells: Vec<(f64, usize)> = cfg
        .sparsities
        .iter()
        .flat_map(|&s| (0..cfg.repetitions).map(move |r| (s, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::config(format!("thread pool: {e}")))?;
    let mut runs: Vec<RunResult> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(s, r)| run_cell(cfg, &train, &test, s, r))
            .collect()
    });
    runs.sort_by(|a, b| {
        a.sparsity
            .total_cmp(&b.sparsity)
            .then(a.repetition.cmp(&b.repetition))
    });
    let aggregates = aggregate_runs(&runs);
    Ok(SweepResults { runs, aggregates })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Renders the sweep as CSV: one `run` row per cell, one `aggregate` row
/// per sparsity, timestamp in the final column.
pub fn sweep_csv(results: &SweepResults, timestamp: u64) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "kind",
        "sparsity",
        "repetition",
        "seed",
        "status",
        "levels",
        "epochs_per_level",
        "train_loss",
        "test_metric",
        "metric_mean",
        "metric_min",
        "metric_max",
        "n_ok",
        "n_failed",
        "lambda_cum",
        "error",
        "timestamp",
    ])?;
    let ts = timestamp.to_string();
    for run in &results.runs {
        let mut rec = vec![
            "run".to_string(),
            run.sparsity.to_string(),
            run.repetition.to_string(),
            run.seed.to_string(),
        ];
        match &run.outcome {
            Ok(ok) => rec.extend([
                "ok".to_string(),
                ok.levels.to_string(),
                ok.epochs_per_level.to_string(),
                ok.train_loss.to_string(),
                ok.test_metric.to_string(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                ok.lambda_cum.to_string(),
                String::new(),
                ts.clone(),
            ]),
            Err(msg) => rec.extend([
                "failed".to_string(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                msg.clone(),
                ts.clone(),
            ]),
        }
        w.write_record(&rec)?;
    }
    for agg in &results.aggregates {
        w.write_record(&[
            "aggregate".to_string(),
            agg.sparsity.to_string(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            fmt_opt(agg.mean),
            fmt_opt(agg.min),
            fmt_opt(agg.max),
            agg.n_ok.to_string(),
            agg.n_failed.to_string(),
            String::new(),
            String::new(),
            ts.clone(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::config(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::config(e.to_string()))
}

/// Writes `results.csv` (atomically) with a JSON sidecar embedding the
/// resolved config and master seed, plus `config.resolved`.
pub fn write_sweep_outputs(
    out_dir: &Path,
    cfg: &ExperimentConfig,
    results: &SweepResults,
) -> Result<PathBuf> {
    fs::create_dir_all(out_dir)?;
    atomic_write(
        &out_dir.join("config.resolved"),
        cfg.resolved_toml()?.as_bytes(),
    )?;
    let csv_path = out_dir.join("results.csv");
    atomic_write(&csv_path, sweep_csv(results, unix_timestamp())?.as_bytes())?;
    let sidecar = serde_json::to_string_pretty(&serde_json::json!({
        "artifact": "sweep_results",
        "provenance": cfg.provenance(),
    }))?;
    atomic_write(&sidecar_path(&csv_path), sidecar.as_bytes())?;
    Ok(csv_path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::SavedNetwork;

    fn tiny_prune_config() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(Mode::Prune);
        cfg.seed = 5;
        cfg.repetitions = 2;
        cfg.sparsities = vec![0.1, 0.3];
        cfg.dataset = DatasetConfig::ShiftedRelu {
            n: 300,
            shift: 0.5,
            noise_sd: 0.0,
        };
        cfg.architecture = ArchConfig {
            widths: vec![1, 8, 1],
            output_linear: true,
        };
        cfg.prune.annealing_levels = Some(2);
        cfg.prune.epochs_per_level = 2;
        cfg
    }

    #[test]
    fn toml_defaults_resolve() {
        let cfg: ExperimentConfig = toml::from_str(
            r#"
            mode = "prune"
            [dataset]
            kind = "onion"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.repetitions, 5);
        assert_eq!(cfg.sparsities, vec![0.002, 0.01, 0.05, 0.1, 0.2]);
        assert_eq!(cfg.test_fraction, 0.2);
        assert!(matches!(
            cfg.dataset,
            DatasetConfig::Onion {
                n: 10_000,
                flip_prob
            } if flip_prob == 0.01
        ));
        assert_eq!(cfg.prune.batch_size, 32);
        assert_eq!(cfg.prune.learning_rate, 0.1);
        // The resolved form parses back to the same config.
        let resolved = cfg.resolved_toml().unwrap();
        let back: ExperimentConfig = toml::from_str(&resolved).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn validation_rejects_bad_configs() {
        let mut cfg = tiny_prune_config();
        cfg.sparsities = vec![0.0];
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_prune_config();
        cfg.repetitions = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_prune_config();
        cfg.architecture.widths = vec![2, 8, 1]; // dataset is 1-d
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn annealing_level_defaults_follow_the_benchmarks() {
        let shifted = DatasetConfig::ShiftedRelu {
            n: 1,
            shift: 0.5,
            noise_sd: 0.0,
        };
        let onion = DatasetConfig::Onion {
            n: 1,
            flip_prob: 0.0,
        };
        assert_eq!(default_annealing_levels(&shifted, 0.01), 5);
        assert_eq!(default_annealing_levels(&shifted, 0.2), 5);
        assert_eq!(default_annealing_levels(&onion, 0.01), 20);
        assert_eq!(default_annealing_levels(&onion, 0.05), 20);
        assert_eq!(default_annealing_levels(&onion, 0.002), 10);
        assert_eq!(default_annealing_levels(&onion, 0.1), 10);
    }

    #[test]
    fn baseline_fits_the_representable_target() {
        // Noiseless shifted ReLU is exactly one ReLU unit; a depth-2
        // width-16 net must reach train MSE <= 1e-4 within 50 epochs.
        let mut cfg = ExperimentConfig::new(Mode::Train);
        cfg.seed = 3;
        cfg.dataset = DatasetConfig::ShiftedRelu {
            n: 10_000,
            shift: 0.5,
            noise_sd: 0.0,
        };
        cfg.architecture = ArchConfig {
            widths: vec![1, 16, 1],
            output_linear: true,
        };
        let (net, log) = train_baseline(&cfg).unwrap();
        let final_loss = log.last().unwrap().train_loss;
        assert!(final_loss <= 1e-4, "final train MSE {final_loss}");
        assert_eq!(log.len(), 50);
        assert!(net.weights.iter().all(|w| w.iter().all(|v| v.is_finite())));
    }

    #[test]
    fn baseline_is_seed_deterministic() {
        let mut cfg = ExperimentConfig::new(Mode::Train);
        cfg.seed = 11;
        cfg.dataset = DatasetConfig::ShiftedRelu {
            n: 500,
            shift: 0.5,
            noise_sd: 0.01,
        };
        cfg.architecture = ArchConfig {
            widths: vec![1, 8, 1],
            output_linear: true,
        };
        cfg.train.epochs = 3;
        let (a, _) = train_baseline(&cfg).unwrap();
        let (b, _) = train_baseline(&cfg).unwrap();
        let ja = SavedNetwork::new(a).to_json().unwrap();
        let jb = SavedNetwork::new(b).to_json().unwrap();
        assert_eq!(ja, jb);
    }

    #[test]
    fn magnitude_mask_retains_exactly_the_requested_count() {
        let mut cfg = ExperimentConfig::new(Mode::Train);
        cfg.architecture = ArchConfig {
            widths: vec![1, 6, 1],
            output_linear: true,
        };
        let arch = cfg.architecture.to_arch().unwrap();
        let init = cfg.init.to_spec(&arch, 9);
        let net = crate::init::initialize(&arch, &init).unwrap();
        let total = arch.num_weights();
        for density in [0.1, 0.25, 0.5, 1.0] {
            let mask = magnitude_mask(&net, density);
            let expect = ((density * total as f64).ceil() as usize).clamp(1, total);
            assert_eq!(mask.retained_weights(), expect, "density {density}");
            assert_eq!(mask.retained_biases(), arch.num_biases());
        }
        // The survivors are the largest magnitudes.
        let mask = magnitude_mask(&net, 0.25);
        let mut all: Vec<f64> = net.weights.iter().flat_map(|w| w.iter().map(|v| v.abs())).collect();
        all.sort_by(f64::total_cmp);
        let k = ((0.25 * total as f64).ceil() as usize).clamp(1, total);
        let threshold = all[total - k];
        for (w, m) in net.weights.iter().zip(&mask.weight_masks) {
            for (&v, &kept) in w.iter().zip(m.iter()) {
                if v.abs() > threshold {
                    assert_eq!(kept, 1.0, "large weight {v} dropped");
                }
                if v.abs() < threshold {
                    assert_eq!(kept, 0.0, "small weight {v} kept");
                }
            }
        }
    }

    #[test]
    fn pruned_baseline_keeps_the_density_and_zeroes_the_rest() {
        let mut cfg = ExperimentConfig::new(Mode::Train);
        cfg.seed = 4;
        cfg.dataset = DatasetConfig::ShiftedRelu {
            n: 600,
            shift: 0.5,
            noise_sd: 0.0,
        };
        cfg.architecture = ArchConfig {
            widths: vec![1, 12, 1],
            output_linear: true,
        };
        cfg.train.epochs = 5;
        cfg.train.density = Some(0.5);
        cfg.train.fine_tune_epochs = 2;
        let (net, log) = train_baseline(&cfg).unwrap();
        let arch = &net.arch;
        let nonzero: usize = net
            .weights
            .iter()
            .map(|w| w.iter().filter(|&&v| v != 0.0).count())
            .sum();
        let expect = ((0.5 * arch.num_weights() as f64).ceil() as usize).min(arch.num_weights());
        assert!(nonzero <= expect, "{nonzero} nonzero weights after pruning to {expect}");
        assert!(log.iter().any(|r| r.phase == "fine_tune"));
    }

    #[test]
    fn metric_evaluation_matches_the_contract() {
        // Perfect regression predictor: MSE 0.
        let ds = gen_shifted_relu(200, 0.5, 0.0, 1).unwrap();
        let mut net = Network::zeros(Architecture::new(vec![1, 1, 1], true).unwrap());
        net.weights[0][[0, 0]] = 1.0;
        net.biases[0][0] = 0.5;
        net.weights[1][[0, 0]] = 1.0;
        let metric = evaluate_metric(&net, None, 1.0, &ds);
        assert!(metric < 1e-24, "perfect predictor MSE {metric}");

        // Constant classifier: accuracy equals the modal class share.
        let onion = gen_onion(2000, 0.0, 2).unwrap();
        let labels = onion.labels().unwrap();
        let mut histogram = [0usize; 4];
        for &l in labels {
            histogram[l] += 1;
        }
        let modal = histogram.iter().enumerate().max_by_key(|&(_, n)| n).unwrap();
        let mut logits = Network::zeros(Architecture::new(vec![2, 4], true).unwrap());
        logits.biases[0][modal.0] = 1.0;
        let acc = evaluate_metric(&logits, None, 1.0, &onion);
        let expect = *modal.1 as f64 / labels.len() as f64;
        assert!((acc - expect).abs() < 1e-12);

        // Positive scaling never changes the argmax.
        let acc2 = evaluate_metric(&logits, None, 2.0, &onion);
        assert_eq!(acc, acc2);
    }

    #[test]
    fn sweeps_emit_runs_and_aggregates() {
        let cfg = tiny_prune_config();
        let results = run_sweep(&cfg, 1).unwrap();
        assert_eq!(results.runs.len(), 4);
        assert_eq!(results.aggregates.len(), 2);
        assert!(results.runs.iter().all(|r| r.outcome.is_ok()));
        for agg in &results.aggregates {
            let metrics: Vec<f64> = results
                .runs
                .iter()
                .filter(|r| r.sparsity == agg.sparsity)
                .map(|r| r.outcome.as_ref().unwrap().test_metric)
                .collect();
            let mean = metrics.iter().sum::<f64>() / metrics.len() as f64;
            assert_eq!(agg.n_ok, 2);
            assert_eq!(agg.n_failed, 0);
            assert!((agg.mean.unwrap() - mean).abs() < 1e-15);
            assert_eq!(
                agg.min.unwrap(),
                metrics.iter().copied().fold(f64::INFINITY, f64::min)
            );
            assert_eq!(
                agg.max.unwrap(),
                metrics.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            );
        }
    }

    #[test]
    fn sweep_csv_is_deterministic_up_to_the_timestamp() {
        let cfg = tiny_prune_config();
        let a = sweep_csv(&run_sweep(&cfg, 2).unwrap(), 111).unwrap();
        let b = sweep_csv(&run_sweep(&cfg, 1).unwrap(), 222).unwrap();
        let strip = |text: &str| -> Vec<String> {
            text.lines()
                .map(|line| {
                    let mut cells: Vec<&str> = line.split(',').collect();
                    cells.pop();
                    cells.join(",")
                })
                .collect()
        };
        assert_ne!(a, b, "timestamps should differ");
        assert_eq!(strip(&a), strip(&b), "content differs beyond the timestamp");
        // Run rows before aggregates, sorted by (sparsity, repetition).
        let lines: Vec<&str> = a.lines().collect();
        assert_eq!(lines.len(), 1 + 4 + 2);
        assert!(lines[1].starts_with("run,0.1,0"));
        assert!(lines[2].starts_with("run,0.1,1"));
        assert!(lines[3].starts_with("run,0.3,0"));
        assert!(lines[5].starts_with("aggregate,0.1"));
    }

    #[test]
    fn failed_cells_become_failed_rows_and_the_sweep_continues() {
        // A ReLU-output architecture cannot emit logits; every cell fails
        // at run time, and the sweep still reports them all.
        let mut cfg = ExperimentConfig::new(Mode::Prune);
        cfg.seed = 8;
        cfg.repetitions = 2;
        cfg.sparsities = vec![0.2];
        cfg.dataset = DatasetConfig::Onion { n: 200, flip_prob: 0.0 };
        cfg.architecture = ArchConfig {
            widths: vec![2, 6, 4],
            output_linear: false,
        };
        cfg.prune.annealing_levels = Some(1);
        cfg.prune.epochs_per_level = 1;
        let results = run_sweep(&cfg, 1).unwrap();
        assert_eq!(results.runs.len(), 2);
        assert!(results.runs.iter().all(|r| r.outcome.is_err()));
        let agg = &results.aggregates[0];
        assert_eq!((agg.n_ok, agg.n_failed), (0, 2));
        assert!(agg.mean.is_none());
        let csv = sweep_csv(&results, 1).unwrap();
        let failed_rows = csv
            .lines()
            .filter(|l| l.starts_with("run,") && l.contains(",failed,"))
            .count();
        assert_eq!(failed_rows, 2);
    }

    #[test]
    fn sweep_outputs_land_atomically_with_provenance() {
        let cfg = tiny_prune_config();
        let results = run_sweep(&cfg, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let csv_path = write_sweep_outputs(dir.path(), &cfg, &results).unwrap();
        assert!(csv_path.exists());
        assert!(dir.path().join("config.resolved").exists());
        let resolved = fs::read_to_string(dir.path().join("config.resolved")).unwrap();
        let back: ExperimentConfig = toml::from_str(&resolved).unwrap();
        assert_eq!(back, cfg);
        let sidecar: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(sidecar_path(&csv_path)).unwrap()).unwrap();
        assert_eq!(sidecar["provenance"]["master_seed"], 5);
        assert_eq!(sidecar["provenance"]["config"]["mode"], "prune");
        // No stray temporaries.
        let leftovers: Vec<_> = fs::read_dir(dir.path())
            .unwrap()
            .filter_map(|e| e.ok())
            .filter(|e| e.file_name().to_string_lossy().contains(".tmp"))
            .collect();
        assert!(leftovers.is_empty());
    }
}
