//! Sample sets, synthetic generation, dataset files, PK sampling, and
//! identity splits.

pub mod csv;
mod sampler;
mod sampleset;
mod split;
pub mod synth;

pub use self::csv::{load_sampleset, save_sampleset};
pub use sampler::{pk_sample, pk_sample_grouped, Batch, DEFAULT_K, DEFAULT_P};
pub use sampleset::SampleSet;
pub use split::split_identities;
pub use synth::{generate_synthetic, generate_train_test, SynthConfig};
