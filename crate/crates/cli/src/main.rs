//! `mlnt`: command-line front end for noise-tolerant training experiments.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 runtime error.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mlnt::data::{
    load_checkpoint, load_dataset, save_checkpoint, save_dataset, save_label_report, Checkpoint, DatasetFormat, Role,
    SplitTag,
};
use mlnt::eval::{accuracy, evaluate};
use mlnt::harness::{
    inject_noise, load_splits, parse_config, pretrain, run_experiment, run_sweep, seed_dir, ExperimentConfig,
    SweepAxis, SweepConfig,
};
use mlnt::noise::{build_feature_index, cifar10_class_map, NoiseKind, NoiseSpec};
use mlnt::rng::{RngStreams, Stream};

#[derive(Parser)]
#[command(
    name = "mlnt",
    version,
    about = "Noise-tolerant training via meta-learning on synthetic label noise"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the feature network on the noisy set and export its logits.
    PretrainFeatures(PretrainArgs),
    /// Corrupt the labels of a dataset file.
    InjectNoise(InjectArgs),
    /// Run the full experiment described by a config file.
    Train(TrainArgs),
    /// Accuracy and confusion counts of a checkpoint on a dataset file.
    Evaluate(EvaluateArgs),
    /// Run one experiment per value of a hyper-parameter.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config (TOML).
    #[arg(short, long)]
    config: PathBuf,
    /// Replaces `output_dir` from the config.
    #[arg(short, long)]
    output_dir: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = parse_config(&self.config)?;
        if let Some(dir) = &self.output_dir {
            cfg.output_dir = dir.clone();
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct PretrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Master seed; defaults to the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Symmetric,
    Asymmetric,
}

#[derive(Args)]
struct InjectArgs {
    /// Clean dataset CSV (`id,label,f0,...`).
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    classes: usize,
    #[arg(long, value_enum, default_value = "symmetric")]
    kind: KindArg,
    #[arg(long)]
    ratio: f64,
    /// Flip pairs for asymmetric noise, e.g. `9:1,2:0`, or `cifar10`.
    #[arg(long)]
    pairs: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Noisy dataset CSV.
    #[arg(long)]
    output: PathBuf,
    /// Per-sample report (`sample_id,original_label,noisy_label`).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Replaces the number of replicate seeds.
    #[arg(long)]
    replicates: Option<u32>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset CSV; the class count comes from the checkpoint.
    #[arg(long)]
    dataset: PathBuf,
    /// Print JSON instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Axis to sweep (m, rho_fraction, tau); replaces the config's [sweep].
    #[arg(long, requires = "values")]
    axis: Option<String>,
    #[arg(long, value_delimiter = ',', requires = "axis")]
    values: Option<Vec<f64>>,
}

/// Maps an error chain to an exit code.
fn exit_code(err: &anyhow::Error) -> u8 {
    let config = err.chain().any(|e| {
        e.downcast_ref::<mlnt::Error>().is_some_and(mlnt::Error::is_config) || e.downcast_ref::<UsageError>().is_some()
    });
    if config {
        1
    } else {
        2
    }
}

#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn parse_pairs(text: &str) -> Result<NoiseKind> {
    if text == "cifar10" {
        return Ok(NoiseKind::Asymmetric(cifar10_class_map()));
    }
    let mut map = std::collections::BTreeMap::new();
    for pair in text.split(',').filter(|s| !s.is_empty()) {
        let (a, b) = pair
            .split_once(':')
            .ok_or_else(|| UsageError(format!("flip pair `{pair}` is not `source:target`")))?;
        let parse = |s: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| UsageError(format!("`{s}` in flip pair `{pair}` is not a class index")))
        };
        map.insert(parse(a)?, parse(b)?);
    }
    Ok(NoiseKind::Asymmetric(map))
}

fn pretrain_features(args: &PretrainArgs) -> Result<()> {
    let cfg = args.config.load()?;
    let seed = args.seed.unwrap_or(cfg.seed);
    let splits = load_splits(&cfg)?;
    let streams = RngStreams::new(seed);
    let spec = cfg.model.mlp_spec(splits.train.dim(), splits.train.classes())?;
    let noisy = inject_noise(&cfg, &splits.train, streams)?;
    let params = pretrain(&cfg, &spec, &noisy, streams)?;
    let index = build_feature_index(&noisy, &spec, &params)?;

    let dir = seed_dir(&cfg.output_dir, seed);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let ckpt = Checkpoint {
        val_accuracy: accuracy(&spec, &params, &splits.val)?,
        spec,
        params,
        epoch: cfg.pretrain_epochs.saturating_sub(1),
        role: Role::Student,
    };
    save_checkpoint(&ckpt, &dir.join("pretrain.ckpt"))?;
    save_label_report(&noisy, &dir.join("noise_report.csv"))?;

    let feats = index.features();
    let mut text = String::from("id");
    for j in 0..feats.cols() {
        write!(text, ",f{j}").unwrap();
    }
    text.push('\n');
    for (id, row) in index.sample_ids().iter().zip(feats.iter_rows()) {
        write!(text, "{id}").unwrap();
        for v in row {
            write!(text, ",{v:?}").unwrap();
        }
        text.push('\n');
    }
    let path = dir.join("features.csv");
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    println!(
        "pretrained on {} noisy samples (val accuracy {:.4}); wrote {}",
        noisy.len(),
        ckpt.val_accuracy,
        dir.display()
    );
    Ok(())
}

fn inject(args: &InjectArgs) -> Result<()> {
    let kind = match (args.kind, &args.pairs) {
        (KindArg::Symmetric, None) => NoiseKind::Symmetric,
        (KindArg::Asymmetric, Some(p)) => parse_pairs(p)?,
        (KindArg::Symmetric, Some(_)) => {
            return Err(UsageError("--pairs only applies to --kind asymmetric".into()).into())
        }
        (KindArg::Asymmetric, None) => return Err(UsageError("--kind asymmetric needs --pairs".into()).into()),
    };
    let spec = NoiseSpec {
        kind,
        ratio: args.ratio,
    };
    spec.validate(args.classes)?;
    let data = load_dataset(&args.input, DatasetFormat::Csv, args.classes, SplitTag::Train)?;
    let mut rng = RngStreams::new(args.seed).stream(Stream::NoiseInjection, 0);
    let labels = spec.apply(data.labels(), args.classes, &mut rng)?;
    let noisy = data.with_noisy_labels(labels)?;
    save_dataset(&noisy, &args.output)?;
    if let Some(report) = &args.report {
        save_label_report(&noisy, report)?;
    }
    let changed = noisy
        .clean_labels()
        .map_or(0, |c| c.iter().zip(noisy.labels()).filter(|(a, b)| a != b).count());
    println!("{changed} of {} labels changed", noisy.len());
    Ok(())
}

fn train(args: &TrainArgs) -> Result<()> {
    let mut cfg = args.config.load()?;
    if let Some(r) = args.replicates {
        cfg.replicates = r;
    }
    let summary = run_experiment(&cfg)?;
    let m = &summary.mean;
    println!("seeds: {}", summary.seeds.len());
    println!(
        "cross-entropy baseline: test {:.4} (final), {:.4} (best val)",
        m.baseline_test_final, m.baseline_test_best
    );
    for (i, t) in m.test_teacher.iter().enumerate() {
        println!(
            "iteration {}: teacher {:.4}, student {:.4}, best {:.4} (val {:.4})",
            i + 1,
            t,
            m.test_student[i],
            m.test_best[i],
            m.best_val[i]
        );
    }
    println!("summary: {}", cfg.output_dir.join("summary.json").display());
    Ok(())
}

fn evaluate_cmd(args: &EvaluateArgs) -> Result<()> {
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let data = load_dataset(
        &args.dataset,
        DatasetFormat::Csv,
        ckpt.spec.num_classes(),
        SplitTag::Test,
    )?;
    let eval = evaluate(&ckpt, &data)?;
    if args.json {
        println!("{}", serde_json::to_string(&eval)?);
    } else {
        println!("accuracy: {:.6} ({} samples)", eval.accuracy, eval.n);
        println!("confusion (rows: true, cols: predicted):");
        for row in &eval.confusion {
            let cells: Vec<String> = row.iter().map(u64::to_string).collect();
            println!("  {}", cells.join(" "));
        }
    }
    Ok(())
}

fn sweep(args: &SweepArgs) -> Result<()> {
    let mut cfg = args.config.load()?;
    if let (Some(axis), Some(values)) = (&args.axis, &args.values) {
        let s = SweepConfig {
            axis: SweepAxis::parse(axis)?,
            values: values.clone(),
        };
        s.validate()?;
        cfg.sweep = Some(s);
    }
    let points = run_sweep(&cfg)?;
    let axis = cfg.sweep.as_ref().map_or("?", |s| s.axis.name());
    for p in &points {
        let last = p.summary.mean.test_teacher.last().copied().unwrap_or(f64::NAN);
        println!(
            "{axis} = {:?}: final-iteration teacher test accuracy {last:.4}",
            p.value
        );
    }
    println!("aggregate: {}", cfg.output_dir.join("sweep.csv").display());
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::PretrainFeatures(a) => pretrain_features(a),
        Command::InjectNoise(a) => inject(a),
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Sweep(a) => sweep(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
