//! Generate → split → train → evaluate, the unit every sweep point and
//! acceptance experiment runs.

use crate::data::{generate_train_test, split_identities, SampleSet, SynthConfig};
use crate::error::Result;
use crate::eval::{evaluate_model, EvalProtocol, EvalReport};
use crate::model::MlpModel;
use crate::numerics::Rng;
use crate::train::{initial_model, train, TrainConfig, TrainHistory};

const SPLIT_STREAM: u64 = 0x7370_6C69_7400;

/// One synthetic train/held-out experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct Experiment {
    pub synth: SynthConfig,
    /// Identity pairs generated for the held-out set.
    pub test_pairs: usize,
    pub train: TrainConfig,
    pub protocol: EvalProtocol,
    pub bins: usize,
    /// Fraction of training identities kept.
    pub keep_fraction: f64,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub seed: u64,
    pub model: MlpModel,
    pub history: TrainHistory,
    pub report: EvalReport,
    /// The same architecture at initialization, evaluated on the same data.
    pub init_report: EvalReport,
}

impl Experiment {
    /// Data for `seed`: the generator seed and the training seed are both
    /// set to `seed`, so runs of different losses with the same seed see
    /// identical data. Below `keep_fraction = 1` a seeded subset of the
    /// training identities is kept; the held-out set never changes.
    pub fn datasets(&self, seed: u64) -> Result<(SampleSet, SampleSet)> {
        let synth = SynthConfig {
            seed,
            ..self.synth.clone()
        };
        let (train_set, test_set) = generate_train_test(&synth, self.test_pairs)?;
        let train_set = if self.keep_fraction != 1.0 {
            split_identities(&train_set, self.keep_fraction, Rng::substream(seed, SPLIT_STREAM))?.0
        } else {
            train_set
        };
        Ok((train_set, test_set))
    }

    pub fn run(&self, seed: u64) -> Result<RunOutcome> {
        let (train_set, test_set) = self.datasets(seed)?;
        let cfg = TrainConfig {
            seed,
            ..self.train.clone()
        };
        let init = initial_model(&train_set, &cfg)?;
        let init_report = evaluate_model(&init, &test_set, &self.protocol, self.bins)?;
        let (model, history) = train(&train_set, &cfg)?;
        let report = evaluate_model(&model, &test_set, &self.protocol, self.bins)?;
        Ok(RunOutcome {
            seed,
            model,
            history,
            report,
            init_report,
        })
    }
}
