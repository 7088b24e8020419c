//! Command-line driver: dataset generation, baseline training, sparsity
//! sweeps, constructive ticket extraction, built-in verification checks,
//! and sweep reporting.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use ndarray::Array1;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use slt_lab::analysis::{
    counterexample_const, counterexample_exp, factorize_univariate, verify_signal_moment,
};
use slt_lab::construct::{
    construct_ticket, construction_report, epsilon_budget, sup_norm_probes, ConstructOptions,
    TargetNetwork, DEFAULT_C,
};
use slt_lab::experiment::{
    atomic_write, run_sweep, train_baseline, write_sweep_outputs, Aggregate, ExperimentConfig,
    Mode,
};
use slt_lab::init::{initialize, InitSpec, Scheme};
use slt_lab::net::{Architecture, Network, SavedNetwork};
use slt_lab::numeric::derive_seed;
use slt_lab::scaling::{apply_scaling, distribute_lambda_in_place, ScaleVector};

/// Strong-lottery-ticket laboratory.
#[derive(Parser)]
#[command(name = "slt-lab", version, about)]
struct Cli {
    /// Experiment configuration (TOML); defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override the sparsity sweep list (comma separated).
    #[arg(long, global = true, value_name = "LIST", value_delimiter = ',')]
    sparsity: Option<Vec<f64>>,
    /// Override the master seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Concurrent sweep cells.
    #[arg(long, global = true, value_name = "N", default_value_t = 1)]
    jobs: usize,
    /// Output directory (overrides the config).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Disable the per-epoch scale fit during pruning.
    #[arg(long, global = true)]
    no_rescale: bool,
    /// Initialize all biases to zero.
    #[arg(long, global = true)]
    zero_bias: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the configured dataset and write it as CSV plus sidecar.
    Dataset,
    /// SGD-train a dense baseline network (optionally magnitude-pruned).
    Train,
    /// Run the sparsity sweep and write per-run and aggregate results.
    Prune,
    /// Build a lottery ticket that approximates a saved target network.
    Construct,
    /// Run the built-in correctness checks and report pass/fail.
    Verify,
    /// Summarize a sweep's results.csv.
    Report,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Dataset => cmd_dataset(&cli),
        Command::Train => cmd_train(&cli),
        Command::Prune => cmd_prune(&cli),
        Command::Construct => cmd_construct(&cli),
        Command::Verify => cmd_verify(&cli),
        Command::Report => cmd_report(&cli),
    }
}

/// Loads the config (or defaults), forces `mode` when given, and applies
/// the flag overrides.
fn effective_config(cli: &Cli, mode: Option<Mode>) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)
            .with_context(|| format!("loading config {}", path.display()))?,
        None => ExperimentConfig::new(mode.unwrap_or(Mode::Train)),
    };
    if let Some(mode) = mode {
        cfg.mode = mode;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(sparsity) = &cli.sparsity {
        cfg.sparsities = sparsity.clone();
    }
    if cli.no_rescale {
        cfg.prune.rescale = false;
    }
    if cli.zero_bias {
        cfg.init.zero_bias = true;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn write_resolved(cfg: &ExperimentConfig) -> anyhow::Result<()> {
    atomic_write(
        &cfg.out_dir.join("config.resolved"),
        cfg.resolved_toml()?.as_bytes(),
    )?;
    Ok(())
}

fn cmd_dataset(cli: &Cli) -> anyhow::Result<ExitCode> {
    let cfg = effective_config(cli, None)?;
    let ds = cfg.dataset.generate(derive_seed(cfg.seed, &[0xDA7A]))?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    write_resolved(&cfg)?;
    let path = cfg.out_dir.join("dataset.csv");
    ds.save_csv(&path)?;
    println!(
        "wrote {} samples ({} inputs -> {}) to {}",
        ds.len(),
        ds.input_dim(),
        if ds.is_classification() {
            "labels".to_string()
        } else {
            format!("{} targets", ds.target_dim())
        },
        path.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_train(cli: &Cli) -> anyhow::Result<ExitCode> {
    let cfg = effective_config(cli, Some(Mode::Train))?;
    let (net, log) = train_baseline(&cfg)?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    write_resolved(&cfg)?;

    let path = cfg.out_dir.join("network.json");
    SavedNetwork::new(net)
        .with_provenance(cfg.provenance())
        .save(&path)?;

    let mut csv = String::from("phase,epoch,train_loss,test_metric\n");
    for row in &log {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            row.phase,
            row.epoch,
            row.train_loss,
            row.test_metric.map(|m| m.to_string()).unwrap_or_default()
        ));
    }
    atomic_write(&cfg.out_dir.join("train_log.csv"), csv.as_bytes())?;

    if let Some(last) = log.last() {
        println!(
            "trained {} epochs: final train loss {:.6e}, test metric {:.6e}",
            log.len(),
            last.train_loss,
            last.test_metric.unwrap_or(f64::NAN)
        );
    }
    println!("saved {}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn print_aggregates(aggregates: &[Aggregate]) {
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "-".into());
    println!(
        "{:<10} {:>12} {:>12} {:>12} {:>4} {:>7}",
        "sparsity", "mean", "min", "max", "ok", "failed"
    );
    for agg in aggregates {
        println!(
            "{:<10} {:>12} {:>12} {:>12} {:>4} {:>7}",
            agg.sparsity,
            fmt(agg.mean),
            fmt(agg.min),
            fmt(agg.max),
            agg.n_ok,
            agg.n_failed
        );
    }
}

fn cmd_prune(cli: &Cli) -> anyhow::Result<ExitCode> {
    let cfg = effective_config(cli, Some(Mode::Prune))?;
    let results = run_sweep(&cfg, cli.jobs)?;
    let csv_path = write_sweep_outputs(&cfg.out_dir, &cfg, &results)?;
    print_aggregates(&results.aggregates);
    println!("wrote {}", csv_path.display());
    let failed = results
        .runs
        .iter()
        .filter(|r| r.outcome.is_err())
        .count();
    if failed > 0 {
        eprintln!("{failed} of {} runs failed (see results.csv)", results.runs.len());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_construct(cli: &Cli) -> anyhow::Result<ExitCode> {
    let cfg = effective_config(cli, Some(Mode::Construct))?;
    cfg.validate()?;
    let target_path = cfg.construct.target.clone().ok_or_else(|| {
        anyhow::anyhow!("construct.target must point at a saved network (run `slt-lab train` first)")
    })?;
    let saved = SavedNetwork::load(&target_path)
        .with_context(|| format!("loading target network {}", target_path.display()))?;
    let target = match &saved.mask {
        Some(mask) => saved.net.materialize_mask(mask),
        None => saved.net.clone(),
    };

    let mut options = ConstructOptions::new(
        cfg.construct.epsilon,
        cfg.construct.delta,
        derive_seed(cfg.seed, &[0xC0]),
    );
    options.c = cfg.construct.c.unwrap_or(DEFAULT_C);
    options.scheme = cfg.init.scheme;
    options.sigma_w = cfg.init.sigma_w.clone();

    let built = construct_ticket(&target, &options)?;
    let probes = sup_norm_probes(
        target.arch.input_dim(),
        2048,
        derive_seed(cfg.seed, &[0xC1]),
    );
    let report = construction_report(&built, &target, &probes);

    std::fs::create_dir_all(&cfg.out_dir)?;
    write_resolved(&cfg)?;
    let mother_path = cfg.out_dir.join("mother.json");
    SavedNetwork::new(built.mother.net.clone())
        .with_mask(built.mask.clone())
        .with_provenance(serde_json::json!({
            "master_seed": cfg.seed,
            "config": cfg,
            "target": target_path,
            "lambda": built.lambda,
            "tau": built.tau,
            "sigma_w": built.mother.sigma_w,
        }))
        .save(&mother_path)?;
    atomic_write(
        &cfg.out_dir.join("plan.json"),
        serde_json::to_string_pretty(&serde_json::json!({
            "provenance": cfg.provenance(),
            "plan": built.plan,
        }))?
        .as_bytes(),
    )?;
    atomic_write(
        &cfg.out_dir.join("report.json"),
        serde_json::to_string_pretty(&serde_json::json!({
            "provenance": cfg.provenance(),
            "report": report,
            "budget": built.budget,
        }))?
        .as_bytes(),
    )?;

    println!(
        "mother widths {:?} ({} params)",
        built.mother.net.arch.widths, report.mother_params
    );
    println!(
        "ticket keeps {} params (sparsity {:.3e}), lambda {:.6e}",
        report.ticket_params, report.param_sparsity, report.lambda
    );
    println!(
        "sup error {:.6e} within budget {:.6e}",
        report.sup_error, report.epsilon
    );
    println!("saved {}", mother_path.display());
    Ok(ExitCode::SUCCESS)
}

struct Check {
    name: &'static str,
    passed: bool,
    details: serde_json::Value,
}

fn counterexample_check(
    name: &'static str,
    report: slt_lab::analysis::CounterexampleReport,
) -> Check {
    Check {
        name,
        passed: report.max_disagreement <= 1e-6 && report.min_loss > 0.0,
        details: serde_json::json!(report),
    }
}

/// Factored univariate nets must agree with direct evaluation on a grid.
fn factorization_check(seed: u64) -> anyhow::Result<Check> {
    let arch = Architecture::new(vec![1, 8, 8, 1], true)?;
    let mut max_err = 0.0f64;
    let nets = 50;
    for k in 0..nets {
        let mut spec = InitSpec::he(&arch, Scheme::Uniform, derive_seed(seed, &[1, k]));
        spec.zero_bias = true;
        let net = initialize(&arch, &spec)?;
        let fact = factorize_univariate(&net)?;
        for i in 0..=100 {
            let x = -2.0 + 0.04 * i as f64;
            let batch = ndarray::Array2::from_elem((1, 1), x);
            let direct = net.output(None, &batch);
            let err = (fact.evaluate(x)[0] - direct[[0, 0]]).abs();
            max_err = max_err.max(err);
        }
    }
    Ok(Check {
        name: "factorization",
        passed: max_err <= 1e-9,
        details: serde_json::json!({ "nets": nets, "max_error": max_err }),
    })
}

/// Rescaled networks must equal the scalar multiple of the original, and
/// distributing a scalar into the weights must reproduce it.
fn scaling_identity_check(seed: u64) -> anyhow::Result<Check> {
    let arch = Architecture::new(vec![3, 6, 6, 2], true)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[2]));
    let mut max_rel = 0.0f64;
    let nets = 50;
    for k in 0..nets {
        let spec = InitSpec::he(&arch, Scheme::Uniform, derive_seed(seed, &[2, k]));
        let net = initialize(&arch, &spec)?;
        let factors: Vec<f64> = (0..arch.depth())
            .map(|_| rng.random_range(0.25..4.0))
            .collect();
        let scale = ScaleVector::new(factors)?;
        let lambda = scale.product();
        let scaled = apply_scaling(&net, &scale)?;

        let mut distributed = net.clone();
        distribute_lambda_in_place(&mut distributed, lambda)?;

        let x = ndarray::Array2::from_shape_fn((3, 16), |_| rng.random_range(-1.0..1.0));
        let base = net.output(None, &x);
        for out in [scaled.output(None, &x), distributed.output(None, &x)] {
            for (a, b) in out.iter().zip(base.iter()) {
                let rel = (a - lambda * b).abs() / (1.0 + (lambda * b).abs());
                max_rel = max_rel.max(rel);
            }
        }
    }
    Ok(Check {
        name: "scaling-identity",
        passed: max_rel <= 1e-9,
        details: serde_json::json!({ "nets": nets, "max_relative_error": max_rel }),
    })
}

/// Monte-Carlo second moments must match the closed-form prediction to
/// within four standard errors.
fn signal_moment_check(
    name: &'static str,
    scheme: Scheme,
    seed: u64,
) -> anyhow::Result<Check> {
    let arch = Architecture::new(vec![10, 64, 64, 64, 5], true)?;
    let spec = InitSpec::he(&arch, scheme, seed);
    let x0 = Array1::from_elem(10, 1.0 / (10.0f64).sqrt());
    let report = verify_signal_moment(&arch, &spec, &x0, 20_000)?;
    Ok(Check {
        name,
        passed: report.sigma_deviation.abs() <= 4.0,
        details: serde_json::json!(report),
    })
}

/// Perturbing every parameter to the edge of its budget must keep the
/// output within the requested tolerance.
fn perturbation_budget_check(seed: u64) -> anyhow::Result<Check> {
    let arch = Architecture::new(vec![2, 8, 8, 1], true)?;
    let eps = 0.2;
    let mut max_sup = 0.0f64;
    let trials = 10;
    for k in 0..trials {
        let trial_seed = derive_seed(seed, &[3, k]);
        let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
        let mut net = Network::zeros(arch.clone());
        for w in &mut net.weights {
            w.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        }
        for b in &mut net.biases {
            b.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        }
        let target = TargetNetwork::new(net.clone());
        let probes = sup_norm_probes(2, 2000, derive_seed(trial_seed, &[1]));
        let budget = epsilon_budget(&target, eps, &probes, true)?;

        let mut bumped = net.clone();
        for (l, (w, b)) in bumped.weights.iter_mut().zip(bumped.biases.iter_mut()).enumerate() {
            let e = budget.eps_l[l];
            w.mapv_inplace(|v| v + if rng.random::<bool>() { e } else { -e });
            b.mapv_inplace(|v| v + if rng.random::<bool>() { e } else { -e });
        }
        let eval = sup_norm_probes(2, 2000, derive_seed(trial_seed, &[2]));
        let diff = net.output(None, &eval) - bumped.output(None, &eval);
        let sup = diff
            .map_axis(ndarray::Axis(0), |col| col.dot(&col).sqrt())
            .into_iter()
            .fold(0.0f64, f64::max);
        max_sup = max_sup.max(sup);
    }
    Ok(Check {
        name: "perturbation-budget",
        passed: max_sup <= eps,
        details: serde_json::json!({ "trials": trials, "epsilon": eps, "max_sup_error": max_sup }),
    })
}

/// End-to-end ticket construction on a small random sparse target.
fn construction_check(seed: u64) -> anyhow::Result<Check> {
    let arch = Architecture::new(vec![4, 6, 2], true)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[4]));
    let mut net = Network::zeros(arch);
    for w in &mut net.weights {
        w.mapv_inplace(|_| {
            if rng.random::<f64>() < 0.5 {
                rng.random_range(-1.0..1.0)
            } else {
                0.0
            }
        });
    }
    for b in &mut net.biases {
        b.mapv_inplace(|_| rng.random_range(-1.0..1.0));
    }
    let eps = 0.1;
    let options = ConstructOptions::new(eps, 0.1, derive_seed(seed, &[5]));
    let built = construct_ticket(&net, &options)?;
    let probes = sup_norm_probes(4, 2048, derive_seed(seed, &[6]));
    let report = construction_report(&built, &net, &probes);
    Ok(Check {
        name: "construction",
        passed: report.sup_error <= eps && report.param_sparsity < 1e-2,
        details: serde_json::json!(report),
    })
}

fn cmd_verify(cli: &Cli) -> anyhow::Result<ExitCode> {
    let cfg = effective_config(cli, Some(Mode::Verify))?;
    cfg.validate()?;
    let seed = cfg.seed;
    let checks = vec![
        counterexample_check("counterexample-const", counterexample_const()),
        counterexample_check("counterexample-exp", counterexample_exp()),
        factorization_check(seed)?,
        scaling_identity_check(seed)?,
        signal_moment_check("signal-moment-uniform", Scheme::Uniform, derive_seed(seed, &[10]))?,
        signal_moment_check("signal-moment-normal", Scheme::Normal, derive_seed(seed, &[11]))?,
        signal_moment_check(
            "signal-moment-looks-linear",
            Scheme::LooksLinear,
            derive_seed(seed, &[12]),
        )?,
        perturbation_budget_check(seed)?,
        construction_check(seed)?,
    ];

    let dir = cfg.out_dir.join("verify");
    std::fs::create_dir_all(&dir)?;
    write_resolved(&cfg)?;
    for check in &checks {
        atomic_write(
            &dir.join(format!("{}.json", check.name)),
            serde_json::to_string_pretty(&serde_json::json!({
                "name": check.name,
                "passed": check.passed,
                "details": check.details,
            }))?
            .as_bytes(),
        )?;
    }
    let all_passed = checks.iter().all(|c| c.passed);
    atomic_write(
        &dir.join("summary.json"),
        serde_json::to_string_pretty(&serde_json::json!({
            "master_seed": cfg.seed,
            "all_passed": all_passed,
            "checks": checks
                .iter()
                .map(|c| serde_json::json!({ "name": c.name, "passed": c.passed }))
                .collect::<Vec<_>>(),
        }))?
        .as_bytes(),
    )?;

    for check in &checks {
        println!(
            "{:<28} {}",
            check.name,
            if check.passed { "pass" } else { "FAIL" }
        );
    }
    println!(
        "{} of {} checks passed; reports in {}",
        checks.iter().filter(|c| c.passed).count(),
        checks.len(),
        dir.display()
    );
    Ok(if all_passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn cmd_report(cli: &Cli) -> anyhow::Result<ExitCode> {
    let cfg = effective_config(cli, None)?;
    let path = cfg.out_dir.join("results.csv");
    let mut reader = csv::Reader::from_path(&path)
        .with_context(|| format!("reading {}", path.display()))?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| -> anyhow::Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| anyhow::anyhow!("column {name} missing from {}", path.display()))
    };
    let (kind_col, sparsity_col) = (col("kind")?, col("sparsity")?);
    let (mean_col, min_col, max_col) = (col("metric_mean")?, col("metric_min")?, col("metric_max")?);
    let (ok_col, failed_col) = (col("n_ok")?, col("n_failed")?);

    let mut runs = 0usize;
    let mut aggregates = Vec::new();
    for record in reader.records() {
        let record = record?;
        match &record[kind_col] {
            "run" => runs += 1,
            "aggregate" => {
                let opt = |i: usize| record[i].parse::<f64>().ok();
                aggregates.push(Aggregate {
                    sparsity: record[sparsity_col].parse()?,
                    mean: opt(mean_col),
                    min: opt(min_col),
                    max: opt(max_col),
                    n_ok: record[ok_col].parse()?,
                    n_failed: record[failed_col].parse()?,
                });
            }
            other => anyhow::bail!("unexpected row kind {other:?} in {}", path.display()),
        }
    }
    println!("{} runs across {} sparsities", runs, aggregates.len());
    print_aggregates(&aggregates);
    Ok(ExitCode::SUCCESS)
}
