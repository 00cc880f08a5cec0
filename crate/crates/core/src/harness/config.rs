//! Experiment configuration: a strict TOML schema with desk-scale defaults.
//!
//! A minimal file needs only a data source and a seed:
//!
//! ```toml
//! seed = 7
//! [benchmark]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{Generator, SyntheticBenchmarkSpec};
use crate::error::{Error, Result};
use crate::noise::{NoiseKind, NoiseSpec};
use crate::tensor::{Activation, MlpSpec};
use crate::train::{EtaSchedule, GammaSchedule, HyperOverride, IterationPlan, LambdaSchedule, MetaGradMode, MlntHyper};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetFiles {
    pub train: PathBuf,
    /// Held out from `train` when absent.
    pub val: Option<PathBuf>,
    pub test: PathBuf,
    pub classes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum DataSource {
    Benchmark(SyntheticBenchmarkSpec),
    Files(DatasetFiles),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl ModelConfig {
    pub fn mlp_spec(&self, input_dim: usize, classes: usize) -> Result<MlpSpec> {
        let mut sizes = Vec::with_capacity(self.hidden.len() + 2);
        sizes.push(input_dim);
        sizes.extend_from_slice(&self.hidden);
        sizes.push(classes);
        MlpSpec::new(sizes, self.activation)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    M,
    RhoFraction,
    Tau,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::M => "m",
            SweepAxis::RhoFraction => "rho_fraction",
            SweepAxis::Tau => "tau",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "m" | "M" => Ok(SweepAxis::M),
            "rho_fraction" | "rho" => Ok(SweepAxis::RhoFraction),
            "tau" => Ok(SweepAxis::Tau),
            other => Err(Error::Config(format!(
                "unknown sweep axis `{other}` (expected m, rho_fraction or tau)"
            ))),
        }
    }

    /// Base hyper-parameters with this axis set to `value`, applied to every iteration.
    pub fn apply(self, base: &MlntHyper, value: f64) -> MlntHyper {
        let mut h = base.clone();
        match self {
            SweepAxis::M => h.m = value as usize,
            SweepAxis::RhoFraction => h.rho_fraction = value,
            SweepAxis::Tau => h.tau = value,
        }
        h
    }

    fn check(self, value: f64) -> Result<()> {
        let ok = match self {
            SweepAxis::M => value >= 0.0 && value.fract() == 0.0 && value <= 1e6,
            SweepAxis::RhoFraction | SweepAxis::Tau => (0.0..=1.0).contains(&value),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Range(format!(
                "sweep value {value} is not valid for {}",
                self.name()
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Config("sweep needs at least one value".into()));
        }
        self.values.iter().try_for_each(|&v| self.axis.check(v))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub source: DataSource,
    pub noise: NoiseSpec,
    pub model: ModelConfig,
    pub hyper: MlntHyper,
    pub plan: IterationPlan,
    /// First master seed; replicate `i` uses `seed + i`.
    pub seed: u64,
    pub replicates: u32,
    pub pretrain_epochs: u32,
    pub output_dir: PathBuf,
    pub sweep: Option<SweepConfig>,
}

impl ExperimentConfig {
    /// Defaults around a data source.
    pub fn new(source: DataSource, seed: u64, output_dir: PathBuf) -> Self {
        Self {
            source,
            noise: NoiseSpec {
                kind: NoiseKind::Symmetric,
                ratio: DEFAULT_NOISE_RATIO,
            },
            model: ModelConfig {
                hidden: DEFAULT_HIDDEN.to_vec(),
                activation: Activation::Relu,
            },
            hyper: MlntHyper::default(),
            plan: IterationPlan::default(),
            seed,
            replicates: DEFAULT_REPLICATES,
            pretrain_epochs: DEFAULT_PRETRAIN_EPOCHS,
            output_dir,
            sweep: None,
        }
    }

    pub fn replicate_seeds(&self) -> Vec<u64> {
        (0..self.replicates as u64).map(|i| self.seed.wrapping_add(i)).collect()
    }

    pub fn classes(&self) -> usize {
        match &self.source {
            DataSource::Benchmark(b) => b.classes,
            DataSource::Files(f) => f.classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let DataSource::Benchmark(b) = &self.source {
            b.validate()?;
        }
        if self.classes() < 2 {
            return Err(Error::Range("classes must be at least 2".into()));
        }
        self.noise.validate(self.classes())?;
        self.hyper.validate()?;
        self.plan.validate()?;
        for it in 1..=self.plan.num_iterations {
            self.plan.hyper_for(&self.hyper, it).validate()?;
        }
        if self.replicates == 0 {
            return Err(Error::Range("replicates must be >= 1".into()));
        }
        if self.model.hidden.contains(&0) {
            return Err(Error::Range("hidden layer widths must be positive".into()));
        }
        if let Some(s) = &self.sweep {
            s.validate()?;
        }
        Ok(())
    }
}

pub const DEFAULT_NOISE_RATIO: f64 = 0.5;
pub const DEFAULT_HIDDEN: [usize; 1] = [64];
pub const DEFAULT_REPLICATES: u32 = 5;
pub const DEFAULT_PRETRAIN_EPOCHS: u32 = 10;

/// The desk benchmark: four Gaussian clusters in a 16-dimensional space.
pub fn desk_benchmark(seed: u64) -> SyntheticBenchmarkSpec {
    SyntheticBenchmarkSpec {
        generator: Generator::GaussianBlobs,
        n_train: 4000,
        n_test: 2000,
        dim: 16,
        classes: 4,
        separation: 3.0,
        seed,
    }
}

// Raw file schema. Everything except the seed and the data source is optional.

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: u64,
    replicates: Option<u32>,
    output_dir: Option<PathBuf>,
    pretrain_epochs: Option<u32>,
    benchmark: Option<RawBenchmark>,
    dataset: Option<RawDataset>,
    noise: Option<RawNoise>,
    model: Option<RawModel>,
    hyper: Option<RawHyper>,
    iterations: Option<RawIterations>,
    sweep: Option<RawSweep>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBenchmark {
    generator: Option<Generator>,
    n_train: Option<usize>,
    n_test: Option<usize>,
    dim: Option<usize>,
    classes: Option<usize>,
    separation: Option<f64>,
    seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDataset {
    train: PathBuf,
    val: Option<PathBuf>,
    test: PathBuf,
    classes: usize,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
enum RawNoiseKind {
    Symmetric,
    Asymmetric,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNoise {
    kind: Option<RawNoiseKind>,
    ratio: Option<f64>,
    /// `[[source, target], ...]` for asymmetric noise.
    pairs: Option<Vec<[usize; 2]>>,
    /// `"cifar10"` selects the standard five-pair flip map.
    preset: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    hidden: Option<Vec<usize>>,
    activation: Option<Activation>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHyper {
    alpha: Option<f64>,
    beta: Option<f64>,
    eta_max: Option<f64>,
    eta_warmup_epochs: Option<f64>,
    gamma_warmup: Option<f64>,
    gamma_after: Option<f64>,
    gamma_warmup_epochs: Option<u32>,
    m: Option<i64>,
    rho_fraction: Option<f64>,
    tau: Option<f64>,
    lambda_max: Option<f64>,
    neighbors: Option<i64>,
    batch_size: Option<i64>,
    epochs: Option<u32>,
    lr_decay_epoch: Option<u32>,
    momentum: Option<f64>,
    weight_decay: Option<f64>,
    meta_mode: Option<MetaGradMode>,
    fd_eps: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIterations {
    count: Option<u32>,
    #[serde(default, rename = "override")]
    overrides: Vec<HyperOverride>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    axis: SweepAxis,
    values: Vec<f64>,
}

fn count(key: &str, v: i64) -> Result<usize> {
    usize::try_from(v).map_err(|_| Error::Range(format!("hyper.{key} = {v} must be >= 0")))
}

fn build_hyper(raw: RawHyper) -> Result<MlntHyper> {
    let d = MlntHyper::default();
    // Without an explicit decay epoch, a changed epoch count keeps decay at 2/3.
    let epochs = raw.epochs.unwrap_or(d.epochs);
    let lr_decay_epoch = raw.lr_decay_epoch.unwrap_or(if raw.epochs.is_some() {
        epochs * 2 / 3
    } else {
        d.lr_decay_epoch
    });
    Ok(MlntHyper {
        alpha: raw.alpha.unwrap_or(d.alpha),
        beta: raw.beta.unwrap_or(d.beta),
        eta: EtaSchedule {
            max: raw.eta_max.unwrap_or(d.eta.max),
            warmup_epochs: raw.eta_warmup_epochs.unwrap_or(d.eta.warmup_epochs),
        },
        gamma: GammaSchedule {
            warmup: raw.gamma_warmup.unwrap_or(d.gamma.warmup),
            after: raw.gamma_after.unwrap_or(d.gamma.after),
            warmup_epochs: raw.gamma_warmup_epochs.unwrap_or(d.gamma.warmup_epochs),
        },
        m: raw.m.map(|v| count("m", v)).transpose()?.unwrap_or(d.m),
        rho_fraction: raw.rho_fraction.unwrap_or(d.rho_fraction),
        tau: raw.tau.unwrap_or(d.tau),
        lambda: LambdaSchedule {
            max: raw.lambda_max.unwrap_or(d.lambda.max),
        },
        neighbors: raw
            .neighbors
            .map(|v| count("neighbors", v))
            .transpose()?
            .unwrap_or(d.neighbors),
        batch_size: raw
            .batch_size
            .map(|v| count("batch_size", v))
            .transpose()?
            .unwrap_or(d.batch_size),
        epochs,
        lr_decay_epoch,
        momentum: raw.momentum.unwrap_or(d.momentum),
        weight_decay: raw.weight_decay.unwrap_or(d.weight_decay),
        meta_mode: raw.meta_mode.unwrap_or(d.meta_mode),
        fd_eps: raw.fd_eps.unwrap_or(d.fd_eps),
    })
}

fn build_noise(raw: Option<RawNoise>) -> Result<NoiseSpec> {
    let Some(raw) = raw else {
        return Ok(NoiseSpec {
            kind: NoiseKind::Symmetric,
            ratio: DEFAULT_NOISE_RATIO,
        });
    };
    let ratio = raw.ratio.unwrap_or(DEFAULT_NOISE_RATIO);
    let kind = match raw.kind.unwrap_or(RawNoiseKind::Symmetric) {
        RawNoiseKind::Symmetric => {
            if raw.pairs.is_some() || raw.preset.is_some() {
                return Err(Error::Config(
                    "noise.pairs and noise.preset only apply to asymmetric noise".into(),
                ));
            }
            NoiseKind::Symmetric
        }
        RawNoiseKind::Asymmetric => match (raw.pairs, raw.preset.as_deref()) {
            (Some(p), None) => NoiseKind::Asymmetric(p.into_iter().map(|[a, b]| (a, b)).collect()),
            (None, Some("cifar10")) => NoiseKind::Asymmetric(crate::noise::cifar10_class_map()),
            (None, Some(other)) => return Err(Error::Config(format!("noise.preset: unknown preset `{other}`"))),
            _ => {
                return Err(Error::Config(
                    "asymmetric noise needs exactly one of noise.pairs or noise.preset".into(),
                ))
            }
        },
    };
    Ok(NoiseSpec { kind, ratio })
}

/// Parse and validate config text. Relative paths resolve against `base_dir`.
pub fn parse_config_str(text: &str, base_dir: &Path) -> Result<ExperimentConfig> {
    let de = toml::Deserializer::parse(text).map_err(|e| Error::Config(e.to_string()))?;
    let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::Config(format!("at `{path}`: {}", e.into_inner().message()))
    })?;

    let source = match (raw.benchmark, raw.dataset) {
        (Some(b), None) => {
            let d = desk_benchmark(raw.seed);
            DataSource::Benchmark(SyntheticBenchmarkSpec {
                generator: b.generator.unwrap_or(d.generator),
                n_train: b.n_train.unwrap_or(d.n_train),
                n_test: b.n_test.unwrap_or(d.n_test),
                dim: b.dim.unwrap_or(d.dim),
                classes: b.classes.unwrap_or(d.classes),
                separation: b.separation.unwrap_or(d.separation),
                seed: b.seed.unwrap_or(d.seed),
            })
        }
        (None, Some(f)) => DataSource::Files(DatasetFiles {
            train: base_dir.join(f.train),
            val: f.val.map(|v| base_dir.join(v)),
            test: base_dir.join(f.test),
            classes: f.classes,
        }),
        (Some(_), Some(_)) => {
            return Err(Error::Config(
                "exactly one data source: give [benchmark] or [dataset], not both".into(),
            ))
        }
        (None, None) => {
            return Err(Error::Config(
                "missing data source: add a [benchmark] or [dataset] table".into(),
            ))
        }
    };

    let output_dir = base_dir.join(raw.output_dir.unwrap_or_else(|| PathBuf::from("mlnt-out")));
    let mut cfg = ExperimentConfig::new(source, raw.seed, output_dir);
    cfg.noise = build_noise(raw.noise)?;
    if let Some(m) = raw.model {
        cfg.model.hidden = m.hidden.unwrap_or(cfg.model.hidden);
        cfg.model.activation = m.activation.unwrap_or(cfg.model.activation);
    }
    cfg.hyper = build_hyper(raw.hyper.unwrap_or_default())?;
    if let Some(it) = raw.iterations {
        cfg.plan = IterationPlan {
            num_iterations: it.count.unwrap_or(cfg.plan.num_iterations),
            overrides: it.overrides,
        };
    }
    cfg.replicates = raw.replicates.unwrap_or(cfg.replicates);
    cfg.pretrain_epochs = raw.pretrain_epochs.unwrap_or(cfg.pretrain_epochs);
    cfg.sweep = raw.sweep.map(|s| SweepConfig {
        axis: s.axis,
        values: s.values,
    });
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config_str(&text, base).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        Error::Range(msg) => Error::Range(format!("{}: {msg}", path.display())),
        other => other,
    })
}
