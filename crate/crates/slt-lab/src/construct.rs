//! Constructive strong-ticket prover: given a target network of depth L,
//! build a randomly initialized network of depth 2L ("mother") that, with
//! controllable probability, contains a sparse subnetwork approximating
//! the target to a requested sup-norm accuracy — and actually find that
//! subnetwork by solving one small subset-sum instance per target
//! parameter.
//!
//! The construction replaces each target layer by a pair of layers:
//! an intermediary layer of in-degree-1 relu units realizing candidate
//! copies of `phi(x_j)`, `phi(-x_j)` (one per source neuron `j`, via the
//! identity `x = phi(x) - phi(-x)`) and `phi(1)` (a bias carrier), and a
//! collect layer whose surviving edges pick, per target parameter, a
//! subset of candidates whose first-weight x second-weight products sum
//! to the parameter within a per-layer budget `eps_l`.
//!
//! All arithmetic happens in a normalized view in which every mother
//! parameter is `U[-1, 1]`: dividing layer weights by their scale and
//! biases by the running scale product leaves the network function
//! unchanged up to one global output factor, which is reported as
//! `lambda`. Targets whose parameters exceed 1 in magnitude are first
//! scaled down layerwise the same way, with the inverse folded into
//! `lambda` and the accuracy budget tightened by the same factor.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::init::{initialize, InitSpec, Scheme};
use crate::net::{Architecture, Mask, Network};
use crate::numeric::derive_seed;
use crate::scaling::{apply_scaling, ScaleVector};

/// Default width multiplier for the mother network, calibrated so that
/// (a) the construction's failure rate stays below the requested delta
/// and (b) tickets stay well below 1% of the mother's parameters (see
/// the calibration test).
pub const DEFAULT_C: f64 = 96.0;

/// Per-layer width cap for the mother network.
pub const DEFAULT_WIDTH_CAP: usize = 1 << 22;

/// Number of random probe inputs used to estimate activation sup-norms
/// and to measure achieved errors.
pub const SUP_NORM_PROBES: usize = 10_000;

/// A target network annotated with the connectivity facts the
/// construction needs: per-neuron in-degrees (nonzero incoming weights
/// plus nonzero bias), their per-layer maxima, and the largest parameter
/// magnitude.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetNetwork {
    pub net: Network,
    /// `in_degrees[l][i]` = nonzero weights into neuron `i` of layer `l`
    /// plus one if its bias is nonzero.
    pub in_degrees: Vec<Vec<usize>>,
    /// Per-layer maximum in-degree.
    pub k_max: Vec<usize>,
    /// Largest parameter magnitude over all layers.
    pub theta_max: f64,
}

impl TargetNetwork {
    pub fn new(net: Network) -> Self {
        let mut in_degrees = Vec::with_capacity(net.depth());
        let mut k_max = Vec::with_capacity(net.depth());
        let mut theta_max = 0.0f64;
        for l in 0..net.depth() {
            let w = &net.weights[l];
            let b = &net.biases[l];
            let mut deg = Vec::with_capacity(w.nrows());
            for i in 0..w.nrows() {
                let nz = w.row(i).iter().filter(|&&v| v != 0.0).count()
                    + usize::from(b[i] != 0.0);
                deg.push(nz);
            }
            theta_max = theta_max
                .max(w.iter().fold(0.0f64, |m, &v| m.max(v.abs())))
                .max(b.iter().fold(0.0f64, |m, &v| m.max(v.abs())));
            k_max.push(deg.iter().copied().max().unwrap_or(0));
            in_degrees.push(deg);
        }
        TargetNetwork {
            net,
            in_degrees,
            k_max,
            theta_max,
        }
    }

    /// Target depth L.
    pub fn depth(&self) -> usize {
        self.net.depth()
    }
}

/// Per-layer approximation budgets and the activation statistics they
/// were derived from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonBudget {
    /// Overall sup-norm budget the layers must jointly respect.
    pub epsilon: f64,
    /// Per-layer parameter tolerance `eps_l`.
    pub eps_l: Vec<f64>,
    /// Bound used for `sup ||x^(l-1)||_1` per layer (exact `n_0` for the
    /// first layer, inflated sampled maxima deeper).
    pub sup_norms: Vec<f64>,
    /// Per-layer `max |w_ij|`.
    pub w_inf: Vec<f64>,
}

/// Uniform probe inputs over `[-1, 1]^dim`; for `dim <= 10` all `2^dim`
/// box vertices are appended (the exact extremes of `||x||_1`).
pub fn sup_norm_probes(dim: usize, count: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vertices = if dim <= 10 { 1usize << dim } else { 0 };
    let mut probes = Array2::zeros((dim, count + vertices));
    for i in 0..count {
        for j in 0..dim {
            probes[[j, i]] = rng.random::<f64>() * 2.0 - 1.0;
        }
    }
    for v in 0..vertices {
        for j in 0..dim {
            probes[[j, count + v]] = if (v >> j) & 1 == 1 { 1.0 } else { -1.0 };
        }
    }
    probes
}

/// Derives the per-layer parameter tolerances:
///
/// `eps_l = eps / (L sqrt(m_l) (1 + S_l) prod_{k>l} (||W^(k)||_inf + eps/L))`,
/// clamped to at most `eps / L`, with `m_l = n_l k_{l,max}` and `S_l` a
/// bound on `sup ||x^(l-1)||_1`: exactly `n_0` for the first layer, and
/// the sampled maximum over `probes` inflated by 10% (optionally floored
/// at the width bound `n_{l-1}`) deeper. Perturbing every supported
/// parameter of layer `l` by at most `eps_l` then moves the network
/// output by at most `eps` in sup norm over the input box.
pub fn epsilon_budget(
    target: &TargetNetwork,
    eps: f64,
    probes: &Array2<f64>,
    analytic_floor: bool,
) -> Result<EpsilonBudget> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::config(format!(
            "approximation budget must lie in (0, 1), got {eps}"
        )));
    }
    if probes.nrows() != target.net.arch.input_dim() {
        return Err(Error::config(format!(
            "probes have {} rows, target takes {} inputs",
            probes.nrows(),
            target.net.arch.input_dim()
        )));
    }
    let depth = target.depth();
    let trace = target.net.forward(None, probes);
    let mut sup_norms = Vec::with_capacity(depth);
    for l in 0..depth {
        let s = if l == 0 {
            // The first layer sees the raw input box: sup ||x||_1 = n_0
            // exactly, attained at the vertices.
            target.net.arch.input_dim() as f64
        } else {
            let x = trace.input_of(l);
            let sampled = (0..x.ncols())
                .map(|c| x.column(c).iter().map(|v| v.abs()).sum::<f64>())
                .fold(0.0, f64::max);
            let inflated = 1.1 * sampled;
            if analytic_floor {
                inflated.max(target.net.arch.widths[l] as f64)
            } else {
                inflated
            }
        };
        sup_norms.push(s);
    }
    let w_inf: Vec<f64> = target
        .net
        .weights
        .iter()
        .map(|w| w.iter().fold(0.0f64, |m, &v| m.max(v.abs())))
        .collect();

    let big_l = depth as f64;
    let mut eps_l = Vec::with_capacity(depth);
    for l in 0..depth {
        let n_l = target.net.arch.widths[l + 1] as f64;
        let m_l = n_l * target.k_max[l].max(1) as f64;
        let tail: f64 = (l + 1..depth).map(|k| w_inf[k] + eps / big_l).product();
        let value = (eps / (big_l * m_l.sqrt() * (1.0 + sup_norms[l]) * tail)).min(eps / big_l);
        if value < 1e-12 {
            return Err(Error::EpsilonUnderflow { layer: l, value });
        }
        eps_l.push(value);
    }
    Ok(EpsilonBudget {
        epsilon: eps,
        eps_l,
        sup_norms,
        w_inf,
    })
}

/// How to build a mother network.
#[derive(Debug, Clone)]
pub struct MotherSpec {
    /// Allowed failure probability of the whole construction.
    pub delta: f64,
    /// Width multiplier.
    pub c: f64,
    pub scheme: Scheme,
    /// One weight scale per mother layer (2L entries); `None` means all
    /// ones, i.e. the normalized view itself.
    pub sigma_w: Option<Vec<f64>>,
    pub seed: u64,
    pub width_cap: usize,
}

impl MotherSpec {
    pub fn new(delta: f64, c: f64, seed: u64) -> Self {
        MotherSpec {
            delta,
            c,
            scheme: Scheme::Uniform,
            sigma_w: None,
            seed,
            width_cap: DEFAULT_WIDTH_CAP,
        }
    }
}

/// A randomly initialized depth-2L network sized to contain tickets for
/// one target, plus the bookkeeping needed to read it in normalized
/// coordinates.
#[derive(Debug, Clone)]
pub struct MotherNetwork {
    pub net: Network,
    /// One scale per mother layer.
    pub sigma_w: Vec<f64>,
    /// `prod sigma_w^-1`: the factor that turns masked mother outputs
    /// into normalized-view outputs.
    pub lambda: f64,
    pub delta: f64,
    pub c: f64,
    /// Per-target-layer failure budgets `delta_l`.
    pub delta_l: Vec<f64>,
    /// Widths of the target the mother was sized for.
    pub target_widths: Vec<usize>,
}

/// Sizes and initializes the mother: intermediary widths
/// `ceil(C n_{l-1} ln(1/min(eps_l, delta_l)))` with
/// `delta_l = delta / (L k_{l-1,max} n_l)` (the input "layer" counts as
/// in-degree 1), collect widths equal to the target's, initialized by
/// the requested scheme.
pub fn build_mother(
    target: &TargetNetwork,
    budget: &EpsilonBudget,
    spec: &MotherSpec,
) -> Result<MotherNetwork> {
    if !(spec.delta > 0.0 && spec.delta < 1.0) {
        return Err(Error::config(format!(
            "failure probability must lie in (0, 1), got {}",
            spec.delta
        )));
    }
    if !(spec.c > 0.0) {
        return Err(Error::config(format!(
            "width multiplier must be positive, got {}",
            spec.c
        )));
    }
    let depth = target.depth();
    if budget.eps_l.len() != depth {
        return Err(Error::config(
            "budget and target disagree on the layer count",
        ));
    }
    let widths = &target.net.arch.widths;
    let big_l = depth as f64;
    let mut mother_widths = Vec::with_capacity(2 * depth + 1);
    mother_widths.push(widths[0]);
    let mut delta_l = Vec::with_capacity(depth);
    for l in 0..depth {
        // In-degree of the "layer" feeding layer 0 is defined as 1.
        let k_prev = if l == 0 { 1 } else { target.k_max[l - 1].max(1) };
        let d_l = spec.delta / (big_l * k_prev as f64 * widths[l + 1] as f64);
        delta_l.push(d_l);
        let m = budget.eps_l[l].min(d_l);
        let intermediary =
            (spec.c * widths[l] as f64 * (1.0 / m).ln()).ceil() as usize;
        let intermediary = intermediary.max(1);
        if intermediary > spec.width_cap {
            return Err(Error::WidthCap {
                layer: 2 * l + 1,
                width: intermediary,
                cap: spec.width_cap,
            });
        }
        mother_widths.push(intermediary);
        mother_widths.push(widths[l + 1]);
    }
    let arch = Architecture::new(mother_widths, target.net.arch.output_linear)?;
    let sigma_w = match &spec.sigma_w {
        Some(s) => {
            if s.len() != 2 * depth {
                return Err(Error::config(format!(
                    "mother needs {} weight scales, got {}",
                    2 * depth,
                    s.len()
                )));
            }
            s.clone()
        }
        None => vec![1.0; 2 * depth],
    };
    let init = InitSpec {
        scheme: spec.scheme,
        sigma_w: sigma_w.clone(),
        zero_bias: false,
        seed: spec.seed,
    };
    let net = initialize(&arch, &init)?;
    let lambda = sigma_w.iter().map(|s| 1.0 / s).product();
    Ok(MotherNetwork {
        net,
        sigma_w,
        lambda,
        delta: spec.delta,
        c: spec.c,
        delta_l,
        target_widths: widths.clone(),
    })
}

/// A solved subset-sum instance.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetSolution {
    /// Indices into the pool, ascending.
    pub indices: Vec<usize>,
    /// Achieved `|theta - sum|`.
    pub residual: f64,
}

fn subset_sum_residual(pool: &[f64], included: &[bool], theta: f64) -> f64 {
    let sum: f64 = pool
        .iter()
        .zip(included)
        .filter(|(_, &inc)| inc)
        .map(|(&v, _)| v)
        .sum();
    theta - sum
}

fn greedy_descent(pool: &[f64], theta: f64, included: &mut [bool]) -> f64 {
    let mut r = subset_sum_residual(pool, included, theta);
    for _ in 0..pool.len() * 64 {
        let mut best: Option<(usize, f64)> = None;
        for (idx, &t) in pool.iter().enumerate() {
            let candidate = if included[idx] { r + t } else { r - t };
            if candidate.abs() < r.abs()
                && best.map_or(true, |(_, b)| candidate.abs() < b.abs())
            {
                best = Some((idx, candidate));
            }
        }
        match best {
            Some((idx, new_r)) => {
                included[idx] = !included[idx];
                r = new_r;
            }
            None => break,
        }
    }
    r
}

fn collect_indices(included: &[bool]) -> Vec<usize> {
    included
        .iter()
        .enumerate()
        .filter(|(_, &inc)| inc)
        .map(|(i, _)| i)
        .collect()
}

/// Greedy residual descent — repeatedly toggle the element that most
/// reduces `|theta - sum|` — from the empty subset, then from up to
/// `restarts` sparse random subsets (a handful of expected members each:
/// dense starting sets converge to bloated solutions that ruin the
/// ticket's sparsity). Returns the first solution within `tol`, or
/// `None`.
pub fn solve_subset_sum_greedy(
    pool: &[f64],
    theta: f64,
    tol: f64,
    restarts: usize,
    seed: u64,
) -> Option<SubsetSolution> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p_include = (8.0 / pool.len() as f64).min(0.5);
    for attempt in 0..=restarts {
        let mut included = vec![false; pool.len()];
        if attempt > 0 {
            for slot in included.iter_mut() {
                *slot = rng.random::<f64>() < p_include;
            }
        }
        let r = greedy_descent(pool, theta, &mut included);
        if r.abs() <= tol {
            return Some(SubsetSolution {
                indices: collect_indices(&included),
                residual: r.abs(),
            });
        }
    }
    None
}

/// Exact optimum by meet-in-the-middle enumeration; the pool may hold at
/// most 24 elements. Always returns the best achievable subset, whatever
/// its residual.
pub fn solve_subset_sum_exact(pool: &[f64], theta: f64) -> SubsetSolution {
    assert!(
        pool.len() <= 24,
        "exact enumeration is limited to 24 elements, got {}",
        pool.len()
    );
    let half = pool.len() / 2;
    let (left, right) = pool.split_at(half);
    let enumerate = |items: &[f64]| -> Vec<(f64, u32)> {
        let mut sums = Vec::with_capacity(1 << items.len());
        for mask in 0u32..(1 << items.len()) {
            let mut s = 0.0;
            for (i, &v) in items.iter().enumerate() {
                if (mask >> i) & 1 == 1 {
                    s += v;
                }
            }
            sums.push((s, mask));
        }
        sums
    };
    let left_sums = enumerate(left);
    let mut right_sums = enumerate(right);
    right_sums.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best = (f64::INFINITY, 0u32, 0u32);
    for &(ls, lm) in &left_sums {
        let want = theta - ls;
        let pos = right_sums.partition_point(|&(s, _)| s < want);
        for idx in [pos.wrapping_sub(1), pos] {
            if let Some(&(rs, rm)) = right_sums.get(idx) {
                let residual = (theta - ls - rs).abs();
                if residual < best.0 {
                    best = (residual, lm, rm);
                }
            }
        }
    }
    let mut indices = Vec::new();
    for i in 0..left.len() {
        if (best.1 >> i) & 1 == 1 {
            indices.push(i);
        }
    }
    for i in 0..right.len() {
        if (best.2 >> i) & 1 == 1 {
            indices.push(half + i);
        }
    }
    SubsetSolution {
        indices,
        residual: best.0,
    }
}

/// Drops members whose removal keeps the residual within tolerance.
/// The descent minimizes the residual; sparsity wants the smallest
/// feasible subset, which is not the same thing.
fn prune_solution(pool: &[f64], theta: f64, tol: f64, solution: &mut SubsetSolution) {
    let mut sum: f64 = solution.indices.iter().map(|&i| pool[i]).sum();
    loop {
        let mut removed = false;
        let mut k = 0;
        while k < solution.indices.len() {
            let t = pool[solution.indices[k]];
            if (theta - (sum - t)).abs() <= tol {
                sum -= t;
                solution.indices.remove(k);
                removed = true;
            } else {
                k += 1;
            }
        }
        if !removed {
            break;
        }
    }
    solution.residual = (theta - sum).abs();
}

/// Full solver: greedy descent with up to 64 randomized restarts, then —
/// for pools of at most 24 elements — an exact meet-in-the-middle pass.
/// Solutions are pruned to drop unneeded members. An empty pool solves
/// only targets already within tolerance (empty subset).
pub fn solve_subset_sum(pool: &[f64], theta: f64, tol: f64, seed: u64) -> Option<SubsetSolution> {
    if theta.abs() <= tol {
        return Some(SubsetSolution {
            indices: Vec::new(),
            residual: theta.abs(),
        });
    }
    if pool.is_empty() {
        return None;
    }
    let mut solution = solve_subset_sum_greedy(pool, theta, tol, 64, seed);
    if solution.is_none() && pool.len() <= 24 {
        let exact = solve_subset_sum_exact(pool, theta);
        if exact.residual <= tol {
            solution = Some(exact);
        }
    }
    let mut solution = solution?;
    prune_solution(pool, theta, tol, &mut solution);
    Some(solution)
}

/// Which target parameter a plan entry approximates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    /// `w_ij`, carried by `phi(x_j)` candidates.
    WeightPlus,
    /// `-w_ij`, carried by `phi(-x_j)` candidates.
    WeightMinus,
    /// `b_i`, carried by `phi(1)` candidates.
    Bias,
}

/// One subset-sum instance of the construction: the parameter, its
/// candidate pool (mother intermediary indices), the chosen subset and
/// the achieved residual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamPlan {
    /// Target layer, 0-based.
    pub layer: usize,
    /// Output neuron `i`.
    pub row: usize,
    /// Source neuron `j`; `None` for bias entries.
    pub col: Option<usize>,
    pub kind: ParamKind,
    /// The value to hit, in the normalized view.
    pub target_value: f64,
    pub tolerance: f64,
    /// Candidate intermediary neurons (indices into mother layer 2l+1's
    /// width).
    pub pool: Vec<usize>,
    /// Selected subset of `pool`.
    pub chosen: Vec<usize>,
    pub residual: f64,
    pub solved: bool,
}

/// Everything the extraction decided, serializable as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstructionPlan {
    pub params: Vec<ParamPlan>,
    pub failed: usize,
    /// Normalized-view budget the plan was solved against.
    pub epsilon: f64,
}

impl ConstructionPlan {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Role of one intermediary neuron, fixed by round-robin slot assignment.
enum SlotRole {
    /// Connects to source neuron `j` of the previous collect layer; the
    /// sign of its surviving weight decides the `phi(x_j)` vs
    /// `phi(-x_j)` pool.
    Source(usize),
    /// Bias carrier: keeps only its (positive) bias, `phi(1)`-style.
    BiasCarrier,
}

fn slot_role(v: usize, n_prev: usize) -> SlotRole {
    let p = v % (2 * n_prev + 1);
    if p < 2 * n_prev {
        SlotRole::Source(p / 2)
    } else {
        SlotRole::BiasCarrier
    }
}

/// Prunes the mother down to a ticket approximating the target.
///
/// Intermediary neurons keep exactly one incoming parameter (the weight
/// to their assigned source, or their bias for positive-bias carriers);
/// collect-layer edges survive exactly where a subset-sum solution chose
/// them; everything else — including all collect-layer biases — is
/// masked. Targets must be in the normalized view (all parameters in
/// `[-1, 1]`). Unsolved parameters are recorded in the plan; the caller
/// decides whether they are fatal.
pub fn extract_ticket(
    mother: &MotherNetwork,
    target: &TargetNetwork,
    budget: &EpsilonBudget,
    plan_seed: u64,
) -> (Mask, ConstructionPlan) {
    assert_eq!(
        mother.target_widths, target.net.arch.widths,
        "mother was sized for a different target"
    );
    assert_eq!(budget.eps_l.len(), target.depth(), "budget layer count");
    let depth = target.depth();
    let mut mask = Mask::zeros(&mother.net.arch);
    let mut params = Vec::new();

    // Running products of the mother scales, for normalized biases.
    let mut sigma_prod = Vec::with_capacity(2 * depth);
    let mut acc = 1.0;
    for &s in &mother.sigma_w {
        acc *= s;
        sigma_prod.push(acc);
    }

    for t in 0..depth {
        let n_prev = target.net.arch.widths[t];
        let n_out = target.net.arch.widths[t + 1];
        let inter_width = mother.net.arch.widths[2 * t + 1];
        let w1 = &mother.net.weights[2 * t];
        let b1 = &mother.net.biases[2 * t];
        let s1 = mother.sigma_w[2 * t];
        let sb1 = sigma_prod[2 * t];
        let w2 = &mother.net.weights[2 * t + 1];
        let s2 = mother.sigma_w[2 * t + 1];
        let eps_l = budget.eps_l[t];

        // Pools: per source, the candidates whose normalized surviving
        // weight is >= 0 (representing phi(x_j)) or < 0 (phi(-x_j));
        // plus the positive-bias carriers.
        let mut pool_plus: Vec<Vec<usize>> = vec![Vec::new(); n_prev];
        let mut pool_minus: Vec<Vec<usize>> = vec![Vec::new(); n_prev];
        let mut pool_bias: Vec<usize> = Vec::new();
        for v in 0..inter_width {
            match slot_role(v, n_prev) {
                SlotRole::Source(j) => {
                    if w1[[v, j]] / s1 >= 0.0 {
                        pool_plus[j].push(v);
                    } else {
                        pool_minus[j].push(v);
                    }
                }
                SlotRole::BiasCarrier => {
                    if b1[v] / sb1 > 0.0 {
                        pool_bias.push(v);
                    }
                }
            }
        }

        // The normalized-view product carried by candidate v toward
        // collect neuron i: (surviving first parameter) x (second edge).
        let first_factor = |v: usize| -> f64 {
            match slot_role(v, n_prev) {
                SlotRole::Source(j) => (w1[[v, j]] / s1).abs(),
                SlotRole::BiasCarrier => b1[v] / sb1,
            }
        };

        let mut retain = vec![false; inter_width];
        for i in 0..n_out {
            let mut solve = |pool: &[usize],
                             theta: f64,
                             tol: f64,
                             kind: ParamKind,
                             col: Option<usize>,
                             retain: &mut [bool],
                             mask2: &mut Array2<f64>| {
                let products: Vec<f64> = pool
                    .iter()
                    .map(|&v| first_factor(v) * w2[[i, v]] / s2)
                    .collect();
                let seed = derive_seed(
                    plan_seed,
                    &[
                        t as u64,
                        i as u64,
                        col.map_or(u64::MAX, |j| j as u64),
                        kind as u64,
                    ],
                );
                let solution = solve_subset_sum(&products, theta, tol, seed);
                let (chosen, residual, solved) = match solution {
                    Some(s) => (
                        s.indices.iter().map(|&k| pool[k]).collect::<Vec<_>>(),
                        s.residual,
                        true,
                    ),
                    None => (Vec::new(), theta.abs(), false),
                };
                for &v in &chosen {
                    retain[v] = true;
                    mask2[[i, v]] = 1.0;
                }
                params.push(ParamPlan {
                    layer: t,
                    row: i,
                    col,
                    kind,
                    target_value: theta,
                    tolerance: tol,
                    pool: pool.to_vec(),
                    chosen,
                    residual,
                    solved,
                });
            };

            for j in 0..n_prev {
                let w_ij = target.net.weights[t][[i, j]];
                solve(
                    &pool_plus[j],
                    w_ij,
                    eps_l / 2.0,
                    ParamKind::WeightPlus,
                    Some(j),
                    &mut retain,
                    &mut mask.weight_masks[2 * t + 1],
                );
                solve(
                    &pool_minus[j],
                    -w_ij,
                    eps_l / 2.0,
                    ParamKind::WeightMinus,
                    Some(j),
                    &mut retain,
                    &mut mask.weight_masks[2 * t + 1],
                );
            }
            let b_i = target.net.biases[t][i];
            solve(
                &pool_bias,
                b_i,
                eps_l,
                ParamKind::Bias,
                None,
                &mut retain,
                &mut mask.weight_masks[2 * t + 1],
            );
        }

        // Retained intermediaries keep their single incoming parameter.
        for v in 0..inter_width {
            if !retain[v] {
                continue;
            }
            match slot_role(v, n_prev) {
                SlotRole::Source(j) => mask.weight_masks[2 * t][[v, j]] = 1.0,
                SlotRole::BiasCarrier => mask.bias_masks[2 * t][v] = 1.0,
            }
        }
    }

    let failed = params.iter().filter(|p| !p.solved).count();
    let plan = ConstructionPlan {
        params,
        failed,
        epsilon: budget.epsilon,
    };
    (mask, plan)
}

/// Pipeline options for [`construct_ticket`].
#[derive(Debug, Clone)]
pub struct ConstructOptions {
    /// Requested sup-norm accuracy of the ticket.
    pub epsilon: f64,
    /// Allowed failure probability.
    pub delta: f64,
    pub c: f64,
    pub scheme: Scheme,
    /// Mother weight scales (2L); `None` = all ones.
    pub sigma_w: Option<Vec<f64>>,
    pub seed: u64,
    pub width_cap: usize,
    /// Floor sampled activation sup-norms at the width bound.
    pub analytic_floor: bool,
    /// Probe count for sup-norm estimation.
    pub probes: usize,
}

impl ConstructOptions {
    pub fn new(epsilon: f64, delta: f64, seed: u64) -> Self {
        ConstructOptions {
            epsilon,
            delta,
            c: DEFAULT_C,
            scheme: Scheme::Uniform,
            sigma_w: None,
            seed,
            width_cap: DEFAULT_WIDTH_CAP,
            analytic_floor: false,
            probes: SUP_NORM_PROBES,
        }
    }
}

/// A finished construction.
#[derive(Debug, Clone)]
pub struct Construction {
    pub mother: MotherNetwork,
    pub mask: Mask,
    pub plan: ConstructionPlan,
    /// Total output scale: the masked mother times `lambda` approximates
    /// the original (un-normalized) target.
    pub lambda: f64,
    /// Layerwise factors that brought the target's parameters into
    /// `[-1, 1]` (all ones when it already was).
    pub tau: Vec<f64>,
    pub budget: EpsilonBudget,
}

/// Scales the target layerwise so every parameter lies in `[-1, 1]`:
/// `tau_l = max(1, ||W^(l)||_inf, ||b^(l)||_inf / prod_{m<l} tau_m)`,
/// weights divided by `tau_l`, biases by the running product. Returns
/// the scaled network and the factors; the original function is
/// `prod(tau)` times the scaled one.
pub fn normalize_target(net: &Network) -> Result<(Network, Vec<f64>)> {
    let mut tau = Vec::with_capacity(net.depth());
    let mut running = 1.0;
    for l in 0..net.depth() {
        let w_inf = net.weights[l].iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        let b_inf = net.biases[l].iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        let t = 1.0f64.max(w_inf).max(b_inf / running);
        tau.push(t);
        running *= t;
    }
    let inverse = ScaleVector::new(tau.iter().map(|t| 1.0 / t).collect())?;
    let scaled = apply_scaling(net, &inverse)?;
    Ok((scaled, tau))
}

/// End-to-end construction: normalize the target, derive the budget (at
/// accuracy `epsilon / prod(tau)` so the guarantee survives un-scaling),
/// size and initialize the mother, and extract the ticket. Unsolved
/// parameters abort with a report naming the first few.
pub fn construct_ticket(target_net: &Network, opts: &ConstructOptions) -> Result<Construction> {
    let (normalized, tau) = normalize_target(target_net)?;
    let tau_product: f64 = tau.iter().product();
    let target = TargetNetwork::new(normalized);
    let probes = sup_norm_probes(
        target.net.arch.input_dim(),
        opts.probes,
        derive_seed(opts.seed, &[0xB0]),
    );
    let budget = epsilon_budget(
        &target,
        opts.epsilon / tau_product,
        &probes,
        opts.analytic_floor,
    )?;
    let mother_spec = MotherSpec {
        delta: opts.delta,
        c: opts.c,
        scheme: opts.scheme,
        sigma_w: opts.sigma_w.clone(),
        seed: derive_seed(opts.seed, &[0xB1]),
        width_cap: opts.width_cap,
    };
    let mother = build_mother(&target, &budget, &mother_spec)?;
    let (mask, plan) = extract_ticket(&mother, &target, &budget, derive_seed(opts.seed, &[0xB2]));
    if plan.failed > 0 {
        let examples: Vec<String> = plan
            .params
            .iter()
            .filter(|p| !p.solved)
            .take(5)
            .map(|p| {
                let name = match (p.kind, p.col) {
                    (ParamKind::Bias, _) => format!("b[{}]", p.row),
                    (ParamKind::WeightPlus, Some(j)) => format!("w[{},{}]", p.row, j),
                    (ParamKind::WeightMinus, Some(j)) => format!("-w[{},{}]", p.row, j),
                    _ => "?".to_string(),
                };
                format!("layer {}: {} = {:.4}", p.layer, name, p.target_value)
            })
            .collect();
        return Err(Error::ConstructionFailed {
            failed: plan.failed,
            total: plan.params.len(),
            examples: examples.join(", "),
        });
    }
    let lambda = mother.lambda * tau_product;
    Ok(Construction {
        mother,
        mask,
        plan,
        lambda,
        tau,
        budget,
    })
}

/// Measured quality of a construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstructionReport {
    /// Max over probe inputs of `||f(x) - lambda f_eps(x)||_2`.
    pub sup_error: f64,
    /// Requested accuracy.
    pub epsilon: f64,
    /// Retained / total parameters of the mother.
    pub param_sparsity: f64,
    /// Retained / total weights (bias-blind convention).
    pub weight_sparsity: f64,
    pub lambda: f64,
    pub mother_params: usize,
    pub ticket_params: usize,
}

/// Evaluates a construction against the original target on the given
/// probe inputs.
pub fn construction_report(
    construction: &Construction,
    target_net: &Network,
    probes: &Array2<f64>,
) -> ConstructionReport {
    let f = target_net.output(None, probes);
    let f_eps = construction
        .mother
        .net
        .output(Some(&construction.mask), probes);
    let mut sup_error = 0.0f64;
    for c in 0..probes.ncols() {
        let d: f64 = f
            .column(c)
            .iter()
            .zip(f_eps.column(c).iter())
            .map(|(a, b)| {
                let diff = a - construction.lambda * b;
                diff * diff
            })
            .sum();
        sup_error = sup_error.max(d.sqrt());
    }
    let arch = &construction.mother.net.arch;
    let retained =
        construction.mask.retained_weights() + construction.mask.retained_biases();
    ConstructionReport {
        sup_error,
        epsilon: construction.budget.epsilon,
        param_sparsity: construction.mask.param_sparsity(arch),
        weight_sparsity: construction.mask.weight_sparsity(arch),
        lambda: construction.lambda,
        mother_params: arch.num_params(),
        ticket_params: retained,
    }
}
