mod config;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use gmc_core::data::{
    assemble, load_csv, read_matrix_csv, synth_instance, write_matrix_csv, write_snapshot,
    write_table, RawTable,
};
use gmc_core::eval::{
    ablation_run, cross_validate, reports, summarize_ablation, EvalConfig, GraphVariant, Method,
    ResultRow,
};
use gmc_core::gradcheck::run_gradcheck;
use gmc_core::srgcnn::{load_checkpoint, predict, save_checkpoint, train, Checkpoint, TrainTrace};
use gmc_core::{GmcError, Tensor};
use serde::Serialize;

use crate::config::RunConfig;

#[derive(Parser)]
#[command(
    name = "gmc",
    version,
    about = "Geometric matrix completion: impute features and classify subjects on a population graph"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Replace the model section with the small desk-scale preset.
    #[arg(long)]
    desk: bool,
}

#[derive(Args, Clone, Default)]
struct ModelFlags {
    /// Input table (CSV).
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, value_parser = parse_variant)]
    graph: Option<GraphVariant>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    age_threshold: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a planted low-rank cohort with labels and metadata.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        true_rank: Option<usize>,
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        observed_frac: Option<f64>,
        #[arg(long)]
        label_signal: Option<f64>,
    },
    /// Fit the recurrent model on every labelled row.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelFlags,
    },
    /// Stratified cross-validation of the configured methods.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelFlags,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long)]
        repeats: Option<usize>,
        /// Comma-separated method names.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<Method>>,
    },
    /// Feature-completeness sweep; resumes from an existing results table.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelFlags,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        fractions: Option<Vec<f64>>,
        #[arg(long)]
        repeats: Option<usize>,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<Method>>,
    },
    /// Complete a table with a trained checkpoint.
    Impute {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelFlags,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Finite-difference check of every gradient; exits nonzero on failure.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trials: Option<usize>,
        /// Test hook: corrupt the analytic gradient of this case.
        #[arg(long)]
        corrupt: Option<String>,
    },
}

fn parse_variant(s: &str) -> std::result::Result<GraphVariant, String> {
    match s {
        "similarity" => Ok(GraphVariant::Similarity),
        "knn" => Ok(GraphVariant::Knn),
        other => Err(format!(
            "unknown graph `{other}` (expected similarity or knn)"
        )),
    }
}

fn resolve(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if common.desk {
        cfg.train = gmc_core::srgcnn::TrainConfig::desk();
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn apply_model(cfg: &mut RunConfig, flags: &ModelFlags) {
    if let Some(d) = &flags.data {
        cfg.data = Some(d.clone());
    }
    if let Some(v) = flags.graph {
        cfg.graph.variant = v;
    }
    if let Some(k) = flags.k {
        cfg.graph.k = k;
    }
    if let Some(t) = flags.age_threshold {
        cfg.graph.age_threshold = t;
    }
    if let Some(e) = flags.epochs {
        cfg.train.epochs = e;
    }
    if let Some(r) = flags.rank {
        cfg.train.rank = r;
    }
    if let Some(lr) = flags.learning_rate {
        cfg.train.learning_rate = lr;
    }
}

/// The run seed drives every seeded component.
fn finish(mut cfg: RunConfig) -> RunConfig {
    cfg.synth.seed = cfg.seed;
    cfg.train.seed = cfg.seed;
    cfg.logreg.seed = cfg.seed;
    cfg.gradcheck.seed = cfg.seed;
    cfg.gradcheck.execution = cfg.execution;
    cfg
}

fn prepare_out(out: &Path, cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join("config.json"), cfg.to_json()?)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

fn write_tensor(path: &Path, header: &[String], t: &Tensor) -> Result<()> {
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write_matrix_csv(std::io::BufWriter::new(file), header, t)?;
    Ok(())
}

fn load_table(cfg: &RunConfig) -> Result<RawTable> {
    let path = cfg.data_path()?;
    load_csv(path, &cfg.schema).with_context(|| format!("loading {}", path.display()))
}

/// Ground-truth features aligned with the table's feature columns.
fn load_truth(cfg: &RunConfig, raw: &RawTable) -> Result<Option<Tensor>> {
    let Some(path) = &cfg.truth else {
        return Ok(None);
    };
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let (header, values) = read_matrix_csv(file)?;
    let mut cols = Vec::with_capacity(raw.feature_count());
    for name in &raw.feature_names {
        match header.iter().position(|h| h == name) {
            Some(c) => cols.push(c),
            None => bail!("truth file {} has no column `{name}`", path.display()),
        }
    }
    if values.rows() != raw.row_count() {
        bail!(
            "truth file has {} rows, table has {}",
            values.rows(),
            raw.row_count()
        );
    }
    Ok(Some(values.select_cols(&cols)))
}

fn eval_config(cfg: &RunConfig, folds: usize, methods: Vec<Method>) -> EvalConfig {
    EvalConfig {
        folds,
        graph: cfg.graph,
        train: cfg.train.clone(),
        logreg: cfg.logreg,
        methods,
        execution: cfg.execution,
    }
}

/// Labelled rows train; the rest are transductive.
fn split_rows(raw: &RawTable) -> (Vec<usize>, Vec<usize>) {
    (0..raw.row_count()).partition(|&r| raw.labels[r].is_some())
}

fn cmd_synth(cfg: &RunConfig, out: &Path) -> Result<()> {
    let inst = synth_instance(&cfg.synth)?;
    let file = fs::File::create(out.join("data.csv"))?;
    write_table(std::io::BufWriter::new(file), &inst.raw, &cfg.schema)?;
    write_snapshot(out, &inst.dataset)?;

    let truth = &inst.truth;
    let n = truth.features.cols();
    let mut header = inst.raw.feature_names.clone();
    header.push("probability".into());
    header.push("label".into());
    let table = Tensor::from_fn(truth.features.rows(), n + 2, |i, j| match j {
        j if j < n => truth.features.get(i, j),
        j if j == n => truth.probabilities[i],
        _ => truth.labels[i] as f64,
    });
    write_tensor(&out.join("truth.csv"), &header, &table)?;
    log::info!(
        "synth: {} x {} table, feature density {:.4}",
        inst.raw.row_count(),
        n,
        inst.raw.mask_density()
    );
    Ok(())
}

fn write_trace(path: &Path, trace: &TrainTrace) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for e in &trace.epochs {
        w.serialize(e)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary {
    epochs_run: usize,
    stop: gmc_core::srgcnn::StopReason,
    initial_loss: f64,
    final_loss: f64,
    parameters: usize,
    train_rows: usize,
    transductive_rows: usize,
}

fn cmd_train(cfg: &RunConfig, out: &Path) -> Result<()> {
    let raw = load_table(cfg)?;
    let (train_rows, rest) = split_rows(&raw);
    let ds = assemble(&raw, &train_rows, &rest, cfg.seed)?;
    let graph = cfg.graph.build(&raw)?;
    let fit = match train(&ds, &graph, &cfg.train) {
        Ok(fit) => fit,
        Err(GmcError::Diverged {
            epoch,
            detail,
            losses,
        }) => {
            let mut w = csv::Writer::from_path(out.join("trace.csv"))?;
            w.write_record(["epoch", "total"])?;
            for (e, l) in losses.iter().enumerate() {
                w.write_record([e.to_string(), l.to_string()])?;
            }
            w.flush()?;
            bail!(GmcError::Diverged {
                epoch,
                detail,
                losses
            });
        }
        Err(e) => return Err(e.into()),
    };
    save_checkpoint(
        out.join("checkpoint.json"),
        &Checkpoint::new(cfg.train.clone(), fit.params.clone()),
    )?;
    write_trace(&out.join("trace.csv"), &fit.trace)?;
    let summary = TrainSummary {
        epochs_run: fit.trace.epochs.len(),
        stop: fit.trace.stop,
        initial_loss: fit.trace.initial_loss(),
        final_loss: fit.trace.final_loss(),
        parameters: fit.params.parameter_count(),
        train_rows: train_rows.len(),
        transductive_rows: rest.len(),
    };
    write_json(&out.join("train_summary.json"), &summary)?;
    log::info!(
        "train: {} epochs ({:?}), loss {:.6} -> {:.6}",
        summary.epochs_run,
        summary.stop,
        summary.initial_loss,
        summary.final_loss
    );
    Ok(())
}

fn cmd_impute(cfg: &RunConfig, out: &Path) -> Result<()> {
    let raw = load_table(cfg)?;
    let path = cfg
        .checkpoint
        .as_deref()
        .context("no checkpoint: pass --checkpoint or set `checkpoint` in the config")?;
    let ckpt = load_checkpoint(path).with_context(|| format!("loading {}", path.display()))?;
    let (train_rows, rest) = split_rows(&raw);
    let ds = assemble(&raw, &train_rows, &rest, cfg.seed)?;
    let graph = cfg.graph.build(&raw)?;
    let pred = predict(&ckpt.params, &ckpt.config, &ds, &graph)?;
    let features = ds.denormalize(&pred.imputed)?;

    let mut header: Vec<String> = ds
        .feature_index
        .iter()
        .map(|&j| raw.feature_names[j].clone())
        .collect();
    header.push(format!("{}_probability", raw.label_name));
    let n = features.cols();
    let table = Tensor::from_fn(ds.rows(), n + 1, |i, j| {
        if j < n {
            features.get(i, j)
        } else {
            pred.label_probs.get(i, 0)
        }
    });
    write_tensor(&out.join("imputed.csv"), &header, &table)
}

fn write_results(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let tmp = path.with_extension("csv.tmp");
    let mut w = csv::Writer::from_path(&tmp)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    drop(w);
    fs::rename(&tmp, path)?;
    Ok(())
}

fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize()
        .collect::<std::result::Result<Vec<ResultRow>, _>>()
        .with_context(|| format!("reading {}", path.display()))
}

#[derive(Serialize)]
struct SeedMean {
    method: Method,
    seed: u64,
    auc: f64,
    accuracy: f64,
}

fn seed_means(rows: &[ResultRow]) -> Vec<SeedMean> {
    let mut groups: BTreeMap<(Method, u64), Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.method, r.seed)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((method, seed), rs)| {
            let k = rs.len() as f64;
            SeedMean {
                method,
                seed,
                auc: rs.iter().map(|r| r.auc).sum::<f64>() / k,
                accuracy: rs.iter().map(|r| r.accuracy).sum::<f64>() / k,
            }
        })
        .collect()
}

#[derive(Serialize)]
struct EvaluateSummary {
    folds: usize,
    seeds: Vec<u64>,
    methods: Vec<gmc_core::eval::MetricsReport>,
    per_seed: Vec<SeedMean>,
}

fn cmd_evaluate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let raw = load_table(cfg)?;
    let truth = load_truth(cfg, &raw)?;
    let sec = &cfg.evaluate;
    let ecfg = eval_config(cfg, sec.folds, sec.methods.clone());
    let seeds: Vec<u64> = (0..sec.repeats as u64).map(|i| cfg.seed + i).collect();
    let mut rows = Vec::new();
    for &seed in &seeds {
        rows.extend(cross_validate(&raw, truth.as_ref(), &ecfg, seed)?);
    }
    write_results(&out.join("results.csv"), &rows)?;
    let summary = EvaluateSummary {
        folds: sec.folds,
        seeds,
        methods: reports(&rows),
        per_seed: seed_means(&rows),
    };
    for m in &summary.methods {
        log::info!(
            "{}: AUC {:.4} +- {:.4}, accuracy {:.4}",
            m.method,
            m.auc.mean,
            m.auc.std,
            m.accuracy.mean
        );
    }
    write_json(&out.join("summary.json"), &summary)
}

fn cmd_ablate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let raw = load_table(cfg)?;
    let truth = load_truth(cfg, &raw)?;
    let sec = &cfg.ablate;
    let ecfg = eval_config(cfg, sec.folds, sec.methods.clone());
    let seeds: Vec<u64> = (0..sec.repeats as u64).map(|i| cfg.seed + i).collect();

    let results = out.join("results.csv");
    let mut completed = if results.exists() {
        read_results(&results)?
    } else {
        Vec::new()
    };
    let planned: BTreeSet<(Method, u64, u64, usize)> = sec
        .fractions
        .iter()
        .flat_map(|f| {
            seeds.iter().flat_map(move |&s| {
                (0..sec.folds).flat_map(move |fold| {
                    sec.methods.iter().map(move |&m| (m, f.to_bits(), s, fold))
                })
            })
        })
        .collect();
    completed.retain(|r| planned.contains(&(r.method, r.fraction.to_bits(), r.seed, r.fold)));
    let reused = completed.len();

    let mut rows: Vec<ResultRow> = Vec::with_capacity(planned.len());
    for &seed in &seeds {
        let done: Vec<ResultRow> = completed
            .iter()
            .filter(|r| r.seed == seed)
            .cloned()
            .collect();
        rows.extend(ablation_run(
            &raw,
            truth.as_ref(),
            &ecfg,
            &sec.fractions,
            &[seed],
            &done,
        )?);
        // Checkpoint progress: finished seeds plus anything reused for later ones.
        let mut snapshot = rows.clone();
        snapshot.extend(completed.iter().filter(|r| r.seed > seed).cloned());
        write_results(&results, &snapshot)?;
    }
    log::info!(
        "ablate: {} cells, {reused} reused, {} computed",
        rows.len(),
        rows.len() - reused
    );
    write_json(&out.join("summary.json"), &summarize_ablation(&rows))
}

fn cmd_gradcheck(cfg: &RunConfig, out: &Path) -> Result<bool> {
    let report = run_gradcheck(&cfg.gradcheck)?;
    for case in &report.cases {
        println!(
            "{:<16} {:<4} max rel err {:.3e} (tol {:.0e})",
            case.name,
            if case.passed { "ok" } else { "FAIL" },
            case.max_rel_err(),
            case.tolerance
        );
        for b in &case.blocks {
            println!("    {:<12} {:.3e}", b.name, b.max_rel_err);
        }
    }
    write_json(&out.join("gradcheck.json"), &report)?;
    Ok(report.passed)
}

fn configure_workers() -> Result<()> {
    let Ok(v) = std::env::var("GMC_WORKERS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .with_context(|| format!("GMC_WORKERS must be a positive integer, got `{v}`"))?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring the worker pool")?;
    #[cfg(not(feature = "parallel"))]
    log::warn!("GMC_WORKERS={n} ignored: built without the parallel feature");
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    configure_workers()?;
    match cli.command {
        Command::Synth {
            common,
            m,
            n,
            true_rank,
            noise,
            observed_frac,
            label_signal,
        } => {
            let mut cfg = resolve(&common)?;
            let s = &mut cfg.synth;
            s.m = m.unwrap_or(s.m);
            s.n = n.unwrap_or(s.n);
            s.rank = true_rank.unwrap_or(s.rank);
            s.noise = noise.unwrap_or(s.noise);
            s.observed_frac = observed_frac.unwrap_or(s.observed_frac);
            s.label_signal = label_signal.unwrap_or(s.label_signal);
            let cfg = finish(cfg);
            prepare_out(&common.out, &cfg)?;
            cmd_synth(&cfg, &common.out)?;
        }
        Command::Train { common, model } => {
            let mut cfg = resolve(&common)?;
            apply_model(&mut cfg, &model);
            let cfg = finish(cfg);
            prepare_out(&common.out, &cfg)?;
            cmd_train(&cfg, &common.out)?;
        }
        Command::Evaluate {
            common,
            model,
            truth,
            folds,
            repeats,
            methods,
        } => {
            let mut cfg = resolve(&common)?;
            apply_model(&mut cfg, &model);
            cfg.truth = truth.or(cfg.truth);
            let e = &mut cfg.evaluate;
            e.folds = folds.unwrap_or(e.folds);
            e.repeats = repeats.unwrap_or(e.repeats);
            e.methods = methods.unwrap_or(std::mem::take(&mut e.methods));
            let cfg = finish(cfg);
            prepare_out(&common.out, &cfg)?;
            cmd_evaluate(&cfg, &common.out)?;
        }
        Command::Ablate {
            common,
            model,
            truth,
            fractions,
            repeats,
            folds,
            methods,
        } => {
            let mut cfg = resolve(&common)?;
            apply_model(&mut cfg, &model);
            cfg.truth = truth.or(cfg.truth);
            let a = &mut cfg.ablate;
            a.fractions = fractions.unwrap_or(std::mem::take(&mut a.fractions));
            a.repeats = repeats.unwrap_or(a.repeats);
            a.folds = folds.unwrap_or(a.folds);
            a.methods = methods.unwrap_or(std::mem::take(&mut a.methods));
            let cfg = finish(cfg);
            prepare_out(&common.out, &cfg)?;
            cmd_ablate(&cfg, &common.out)?;
        }
        Command::Impute {
            common,
            model,
            checkpoint,
        } => {
            let mut cfg = resolve(&common)?;
            apply_model(&mut cfg, &model);
            cfg.checkpoint = checkpoint.or(cfg.checkpoint);
            let cfg = finish(cfg);
            prepare_out(&common.out, &cfg)?;
            cmd_impute(&cfg, &common.out)?;
        }
        Command::Gradcheck {
            common,
            trials,
            corrupt,
        } => {
            let mut cfg = resolve(&common)?;
            cfg.gradcheck.trials = trials.unwrap_or(cfg.gradcheck.trials);
            cfg.gradcheck.corrupt = corrupt.or(cfg.gradcheck.corrupt);
            let cfg = finish(cfg);
            prepare_out(&common.out, &cfg)?;
            return cmd_gradcheck(&cfg, &common.out);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: gradient check failed");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
