//! End-to-end fitting: classifiers and retrieval index from one labeled
//! training split.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;

use serde::{Deserialize, Serialize};

use crate::classify::{train, ClassifyError, StrategyPredictor, TrainConfig, VocabConfig, Vocabulary};
use crate::corpus::{build_all_instances, downsample_negatives};
use crate::domain::{Context, Conversation, Strategy};
use crate::generate::{build_index, GenerateError, GeneratorIndex};

/// Backend identifier written into bundle manifests.
pub const BACKEND: &str = "logistic_bow+tfidf_retrieval";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Generate(#[from] GenerateError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOptions {
    pub context_len: usize,
    pub min_count: u64,
    pub max_vocab: usize,
    pub downsample: bool,
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        let vocab = VocabConfig::default();
        let train = TrainConfig::default();
        TrainOptions {
            context_len: Context::MAX_LEN,
            min_count: vocab.min_count,
            max_vocab: vocab.max_size,
            downsample: true,
            epochs: train.epochs,
            learning_rate: train.learning_rate,
            l2: train.l2,
            seed: train.seed,
        }
    }
}

impl TrainOptions {
    /// Version string recorded in the bundle; a pure function of the options.
    pub fn version(&self) -> String {
        format!(
            "lr-bow/ctx{}-min{}-max{}-ds{}-ep{}-lr{}-l2{}-seed{}",
            self.context_len,
            self.min_count,
            self.max_vocab,
            u8::from(self.downsample),
            self.epochs,
            self.learning_rate,
            self.l2,
            self.seed
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModels {
    pub predictor: StrategyPredictor,
    pub index: GeneratorIndex,
}

/// Seed for strategy `s`'s negative sample.
fn downsample_seed(seed: u64, s: Strategy) -> u64 {
    seed.wrapping_add(0x5851_F42D_4C95_7F2D_u64.wrapping_mul(s.ordinal() as u64 + 1))
}

pub fn fit(train_convs: &[Conversation], opts: &TrainOptions) -> Result<TrainedModels, TrainError> {
    let version = opts.version();
    let vocab = Vocabulary::from_conversations(
        train_convs,
        VocabConfig {
            min_count: opts.min_count,
            max_size: opts.max_vocab,
        },
    );
    let mut instances = build_all_instances(train_convs, opts.context_len);
    if opts.downsample {
        instances = instances
            .into_iter()
            .map(|(s, v)| (s, downsample_negatives(&v, downsample_seed(opts.seed, s))))
            .collect::<BTreeMap<_, _>>();
    }
    let cfg = TrainConfig {
        epochs: opts.epochs,
        learning_rate: opts.learning_rate,
        l2: opts.l2,
        seed: opts.seed,
    };
    let predictor = train(vocab, &instances, &cfg, version.clone())?;
    let index = build_index(train_convs, opts.context_len, version)?;
    Ok(TrainedModels { predictor, index })
}
