//! Experiment configuration files.
//!
//! A config is a TOML document with the sections `[data]`, `[train]`,
//! `[eval]`, `[sweep]` and `[output]`. Each command asks for the sections it
//! needs; a missing one is a config error naming it. Keys inside a section
//! are flat and unknown keys are rejected.
//!
//! ```toml
//! [data]
//! num_identity_pairs = 100
//! pair_separation = 1.0
//! test_pairs = 50
//! seed = 0
//!
//! [train]
//! loss = "fidi"
//! alpha = 1.05
//! beta = 0.5
//! iterations = 2000
//!
//! [eval]
//! exclude_same_camera = true
//!
//! [sweep]
//! alpha = [1.01, 1.05, 1.2, 2.0]
//! losses = ["fidi", "btl"]
//! seeds = [0, 1, 2]
//!
//! [output]
//! dir = "runs/example"
//! ```
//!
//! `[data]` holds either the synthetic generator fields or `train_path` /
//! `test_path` pointing at dataset CSVs, never both.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{load_sampleset, SampleSet, SynthConfig};
use crate::error::{Error, Result};
use crate::eval::{EvalProtocol, DEFAULT_BINS};
use crate::experiment::Experiment;
use crate::geometry::{DistanceKind, Metric, ProbMap};
use crate::losses::{LossKind, PairPolicy, Reduction};
use crate::train::{OptimizerConfig, OptimizerKind, TrainConfig};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: Option<DataSection>,
    pub train: Option<TrainSection>,
    pub eval: Option<EvalSection>,
    pub sweep: Option<SweepSection>,
    pub output: Option<OutputSection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub train_path: Option<PathBuf>,
    pub test_path: Option<PathBuf>,
    /// Identity pairs generated for the held-out set.
    pub test_pairs: usize,
    pub num_identity_pairs: Option<usize>,
    pub samples_per_identity: Option<usize>,
    pub feature_dim: Option<usize>,
    pub pair_separation: Option<f64>,
    pub intra_noise: Option<f64>,
    pub camera_count: Option<usize>,
    pub camera_offset_scale: Option<f64>,
    pub signal_dim: Option<usize>,
    pub center_spread: Option<f64>,
    pub seed: Option<u64>,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            train_path: None,
            test_path: None,
            test_pairs: 50,
            num_identity_pairs: None,
            samples_per_identity: None,
            feature_dim: None,
            pair_separation: None,
            intra_noise: None,
            camera_count: None,
            camera_offset_scale: None,
            signal_dim: None,
            center_spread: None,
            seed: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbMapName {
    Exponential,
    Sigmoid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerName {
    Adam,
    Sgd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub loss: LossKind,
    pub alpha: f64,
    pub prob_map: ProbMapName,
    pub beta: f64,
    pub distance: Metric,
    pub pair_policy: PairPolicy,
    pub reduction: Reduction,
    pub margin: f64,
    pub cls_weight: f64,
    pub optimizer: OptimizerName,
    pub lr: f64,
    pub weight_decay: f64,
    pub momentum: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub iterations: usize,
    pub p: usize,
    pub k: usize,
    pub hidden: Vec<usize>,
    pub embedding_dim: usize,
    pub use_bn: bool,
    pub seed: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection::from_config(&TrainConfig::default())
    }
}

impl TrainSection {
    pub fn from_config(cfg: &TrainConfig) -> Self {
        let (optimizer, momentum, beta1, beta2, adam_eps) = match cfg.optimizer.kind {
            OptimizerKind::Adam { beta1, beta2, eps } => (OptimizerName::Adam, 0.9, beta1, beta2, eps),
            OptimizerKind::SgdMomentum { momentum } => (OptimizerName::Sgd, momentum, 0.9, 0.999, 1e-8),
        };
        TrainSection {
            loss: cfg.loss_kind,
            alpha: cfg.fidi.alpha,
            prob_map: match cfg.fidi.prob_map {
                ProbMap::Exponential { .. } => ProbMapName::Exponential,
                ProbMap::Sigmoid { .. } => ProbMapName::Sigmoid,
            },
            beta: cfg.fidi.prob_map.beta(),
            distance: cfg.fidi.distance.metric,
            pair_policy: cfg.fidi.pair_policy,
            reduction: cfg.fidi.reduction,
            margin: cfg.margin.margin,
            cls_weight: cfg.cls_weight,
            optimizer,
            lr: cfg.optimizer.lr,
            weight_decay: cfg.optimizer.weight_decay,
            momentum,
            beta1,
            beta2,
            adam_eps,
            iterations: cfg.iterations,
            p: cfg.p,
            k: cfg.k,
            hidden: cfg.hidden.clone(),
            embedding_dim: cfg.embedding_dim,
            use_bn: cfg.use_bn,
            seed: cfg.seed,
        }
    }

    pub fn to_config(&self) -> Result<TrainConfig> {
        let base = TrainConfig::default();
        let distance = DistanceKind {
            metric: self.distance,
            ..base.fidi.distance
        };
        let mut cfg = TrainConfig {
            loss_kind: self.loss,
            cls_weight: self.cls_weight,
            optimizer: OptimizerConfig {
                kind: match self.optimizer {
                    OptimizerName::Adam => OptimizerKind::Adam {
                        beta1: self.beta1,
                        beta2: self.beta2,
                        eps: self.adam_eps,
                    },
                    OptimizerName::Sgd => OptimizerKind::SgdMomentum { momentum: self.momentum },
                },
                lr: self.lr,
                weight_decay: self.weight_decay,
            },
            iterations: self.iterations,
            p: self.p,
            k: self.k,
            hidden: self.hidden.clone(),
            embedding_dim: self.embedding_dim,
            use_bn: self.use_bn,
            seed: self.seed,
            ..base
        };
        cfg.fidi.alpha = self.alpha;
        cfg.fidi.prob_map = match self.prob_map {
            ProbMapName::Exponential => ProbMap::Exponential { beta: self.beta },
            ProbMapName::Sigmoid => ProbMap::Sigmoid { beta: self.beta },
        };
        cfg.fidi.distance = distance;
        cfg.fidi.pair_policy = self.pair_policy;
        cfg.fidi.reduction = self.reduction;
        cfg.margin.margin = self.margin;
        cfg.margin.distance = distance;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub exclude_same_camera: bool,
    pub cmc_ranks: Vec<usize>,
    /// Histogram bins for the distance summary.
    pub bins: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        let p = EvalProtocol::default();
        EvalSection {
            exclude_same_camera: p.exclude_same_camera,
            cmc_ranks: p.cmc_ranks,
            bins: DEFAULT_BINS,
        }
    }
}

impl EvalSection {
    pub fn protocol(&self) -> Result<EvalProtocol> {
        let p = EvalProtocol {
            exclude_same_camera: self.exclude_same_camera,
            cmc_ranks: self.cmc_ranks.clone(),
        };
        p.validate()?;
        if self.bins == 0 {
            return Err(Error::config("[eval] bins must be >= 1"));
        }
        Ok(p)
    }
}

/// Grid axes are varied one at a time around the `[train]` values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub keep_fraction: Vec<f64>,
    pub losses: Vec<LossKind>,
    pub seeds: Vec<u64>,
    /// Run grid points on all cores.
    pub parallel: bool,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            alpha: Vec::new(),
            beta: Vec::new(),
            keep_fraction: Vec::new(),
            losses: vec![LossKind::Fidi],
            seeds: vec![0],
            parallel: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

/// Where a command's data comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Synthetic { synth: SynthConfig, test_pairs: usize },
    Files { train: Option<PathBuf>, test: Option<PathBuf> },
}

impl DataSource {
    pub fn train_set(&self) -> Result<SampleSet> {
        match self {
            DataSource::Synthetic { synth, test_pairs } => {
                Ok(crate::data::generate_train_test(synth, *test_pairs)?.0)
            }
            DataSource::Files { train: Some(p), .. } => load_sampleset(p),
            DataSource::Files { train: None, .. } => Err(Error::config("[data] train_path is not set")),
        }
    }

    pub fn test_set(&self) -> Result<SampleSet> {
        match self {
            DataSource::Synthetic { synth, test_pairs } => {
                Ok(crate::data::generate_train_test(synth, *test_pairs)?.1)
            }
            DataSource::Files { test: Some(p), .. } => load_sampleset(p),
            DataSource::Files { test: None, .. } => Err(Error::config("[data] test_path is not set")),
        }
    }
}

fn missing(section: &str) -> Error {
    Error::config(format!("missing [{section}] section"))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(e.to_string()))
    }

    /// Overrides every seed in the file.
    pub fn override_seed(&mut self, seed: u64) {
        if let Some(d) = self.data.as_mut() {
            d.seed = Some(seed);
        }
        if let Some(t) = self.train.as_mut() {
            t.seed = seed;
        }
        if let Some(s) = self.sweep.as_mut() {
            s.seeds = vec![seed];
        }
    }

    pub fn synth(&self) -> Result<SynthConfig> {
        let d = self.data.as_ref().ok_or_else(|| missing("data"))?;
        if d.train_path.is_some() || d.test_path.is_some() {
            return Err(Error::config("[data] points at files; a synthetic generator section is required here"));
        }
        Ok(synth_from(d))
    }

    pub fn data_source(&self) -> Result<DataSource> {
        let d = self.data.as_ref().ok_or_else(|| missing("data"))?;
        let has_files = d.train_path.is_some() || d.test_path.is_some();
        let has_synth = d.num_identity_pairs.is_some()
            || d.samples_per_identity.is_some()
            || d.feature_dim.is_some()
            || d.pair_separation.is_some()
            || d.intra_noise.is_some()
            || d.camera_count.is_some()
            || d.camera_offset_scale.is_some()
            || d.signal_dim.is_some()
            || d.center_spread.is_some();
        if has_files && has_synth {
            return Err(Error::config("[data] must give either dataset paths or generator fields, not both"));
        }
        if has_files {
            for p in d.train_path.iter().chain(d.test_path.iter()) {
                if !p.exists() {
                    return Err(Error::config(format!("[data] file {} does not exist", p.display())));
                }
            }
            return Ok(DataSource::Files {
                train: d.train_path.clone(),
                test: d.test_path.clone(),
            });
        }
        Ok(DataSource::Synthetic {
            synth: synth_from(d),
            test_pairs: d.test_pairs,
        })
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        self.train.as_ref().ok_or_else(|| missing("train"))?.to_config()
    }

    /// `[eval]` is optional; defaults apply when absent.
    pub fn eval_section(&self) -> EvalSection {
        self.eval.clone().unwrap_or_default()
    }

    pub fn sweep(&self) -> Result<&SweepSection> {
        let s = self.sweep.as_ref().ok_or_else(|| missing("sweep"))?;
        if s.seeds.is_empty() || s.losses.is_empty() {
            return Err(Error::config("[sweep] needs at least one seed and one loss"));
        }
        if s.alpha.is_empty() && s.beta.is_empty() && s.keep_fraction.is_empty() {
            return Err(Error::config("[sweep] grid is empty; set alpha, beta or keep_fraction"));
        }
        if let Some(f) = s.keep_fraction.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
            return Err(Error::config(format!("[sweep] keep_fraction must be in (0, 1], got {f}")));
        }
        Ok(s)
    }

    /// `--out` wins over `[output] dir`.
    pub fn output_dir(&self, cli: Option<&Path>) -> Result<PathBuf> {
        cli.map(Path::to_path_buf)
            .or_else(|| self.output.as_ref().and_then(|o| o.dir.clone()))
            .ok_or_else(|| Error::config("no output directory: pass --out or set [output] dir"))
    }

    /// The synthetic experiment described by `[data]`, `[train]` and `[eval]`.
    pub fn experiment(&self) -> Result<Experiment> {
        let (synth, test_pairs) = match self.data_source()? {
            DataSource::Synthetic { synth, test_pairs } => (synth, test_pairs),
            DataSource::Files { .. } => {
                return Err(Error::config("sweeps need a synthetic [data] section"));
            }
        };
        let ev = self.eval_section();
        Ok(Experiment {
            synth,
            test_pairs,
            train: self.train_config()?,
            protocol: ev.protocol()?,
            bins: ev.bins,
            keep_fraction: 1.0,
        })
    }
}

fn synth_from(d: &DataSection) -> SynthConfig {
    let b = SynthConfig::default();
    SynthConfig {
        num_identity_pairs: d.num_identity_pairs.unwrap_or(b.num_identity_pairs),
        samples_per_identity: d.samples_per_identity.unwrap_or(b.samples_per_identity),
        feature_dim: d.feature_dim.unwrap_or(b.feature_dim),
        pair_separation: d.pair_separation.unwrap_or(b.pair_separation),
        intra_noise: d.intra_noise.unwrap_or(b.intra_noise),
        camera_count: d.camera_count.unwrap_or(b.camera_count),
        camera_offset_scale: d.camera_offset_scale.unwrap_or(b.camera_offset_scale),
        signal_dim: d.signal_dim.unwrap_or(b.signal_dim),
        center_spread: d.center_spread.unwrap_or(b.center_spread),
        seed: d.seed.unwrap_or(b.seed),
    }
}
