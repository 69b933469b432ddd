//! Optimizers and the training loop.

mod history;
mod optim;

pub use history::{moving_average, HistoryRecord, TrainHistory};
pub use optim::{optimizer_step, OptimizerConfig, OptimizerKind, OptimizerState};

use crate::data::{pk_sample_grouped, SampleSet, DEFAULT_K, DEFAULT_P};
use crate::error::{Error, Result};
use crate::losses::{cross_entropy_loss, FidiConfig, LossKind, MetricLoss, TripletConfig};
use crate::model::{MlpModel, Mode};
use crate::numerics::{Matrix, Rng};

// Stream keys so the model and the sampler draw independent sequences.
const MODEL_STREAM: u64 = 0x6D6F_6465_6C00;
const SAMPLER_STREAM: u64 = 0x7361_6D70_6C00;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub loss_kind: LossKind,
    pub fidi: FidiConfig,
    /// Margin and distance for the triplet and contrastive losses; the
    /// variant is set from `loss_kind`.
    pub margin: TripletConfig,
    /// Weight of the cross-entropy term.
    pub cls_weight: f64,
    pub optimizer: OptimizerConfig,
    pub iterations: usize,
    pub p: usize,
    pub k: usize,
    pub hidden: Vec<usize>,
    pub embedding_dim: usize,
    pub use_bn: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss_kind: LossKind::Fidi,
            fidi: FidiConfig::default(),
            margin: TripletConfig::default(),
            cls_weight: 1.0,
            optimizer: OptimizerConfig::default(),
            iterations: 2000,
            p: DEFAULT_P,
            k: DEFAULT_K,
            hidden: vec![64],
            embedding_dim: 32,
            use_bn: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(Error::config("iterations must be >= 1"));
        }
        if self.p < 1 || self.k < 1 {
            return Err(Error::config("P and K must be >= 1"));
        }
        if !(self.cls_weight >= 0.0) {
            return Err(Error::config("cls_weight must be >= 0"));
        }
        if self.embedding_dim < 1 || self.hidden.contains(&0) {
            return Err(Error::config("layer widths must be >= 1"));
        }
        self.optimizer.validate()?;
        self.fidi.validate()?;
        self.margin.validate()
    }

    pub fn metric_loss(&self) -> MetricLoss {
        MetricLoss::new(self.loss_kind, &self.fidi, &self.margin)
    }

    pub fn dims(&self, input_dim: usize) -> Vec<usize> {
        let mut dims = vec![input_dim];
        dims.extend(&self.hidden);
        dims.push(self.embedding_dim);
        dims
    }
}

/// The model `train` starts from, before any update.
pub fn initial_model(data: &SampleSet, cfg: &TrainConfig) -> Result<MlpModel> {
    let mut rng = Rng::substream(cfg.seed, MODEL_STREAM);
    MlpModel::init(&cfg.dims(data.feature_dim()), data.num_identities(), cfg.use_bn, &mut rng)
}

/// Runs `cfg.iterations` steps of PK sampling, forward, metric loss plus
/// weighted cross-entropy, backward and one optimizer update.
pub fn train(data: &SampleSet, cfg: &TrainConfig) -> Result<(MlpModel, TrainHistory)> {
    cfg.validate()?;
    let groups = data.indices_by_identity();
    if cfg.p > groups.len() {
        return Err(Error::Sampling(format!(
            "P = {} exceeds the {} training identities",
            cfg.p,
            groups.len()
        )));
    }
    let mut model = initial_model(data, cfg)?;
    let mut sampler = Rng::substream(cfg.seed, SAMPLER_STREAM);
    let metric = cfg.metric_loss();
    let mut state = OptimizerState::default();
    let mut history = TrainHistory::default();

    for iter in 0..cfg.iterations {
        let batch = pk_sample_grouped(&groups, cfg.p, cfg.k, &mut sampler)?;
        let x = data.features().select_rows(&batch.indices);
        let labels: Vec<usize> = batch.indices.iter().map(|&i| data.identity()[i]).collect();

        let diverged = |what: String| Error::Divergence { iteration: iter, what };
        let fwd = model.forward(&x, Mode::Train).map_err(|e| diverged(e.to_string()))?;
        let m = metric.compute(&fwd.embeddings, &labels)?;
        let (cls_value, mut grad_logits) = if cfg.cls_weight > 0.0 {
            let ce = cross_entropy_loss(&fwd.logits, &labels)?;
            (ce.value, ce.grad_logits.expect("cross entropy sets grad_logits"))
        } else {
            (0.0, Matrix::zeros(labels.len(), model.classes()))
        };
        grad_logits.scale(cfg.cls_weight);
        let total = m.value + cfg.cls_weight * cls_value;
        if !total.is_finite() {
            return Err(diverged(format!("total loss {total}")));
        }
        history.records.push(HistoryRecord {
            iter,
            metric_loss: m.value,
            cls_loss: cls_value,
            total,
        });

        let grads = model.backward(&fwd.cache, &m.grad_embeddings, &grad_logits)?;
        let blocks = grads.blocks();
        optimizer_step(&mut model.param_blocks_mut(), &blocks, &mut state, &cfg.optimizer)
            .map_err(|e| diverged(e.to_string()))?;
    }
    Ok((model, history))
}
