//! Corpus preparation: quality filtering, auto-labeling, instance pairing,
//! negative downsampling and conversation-level splits.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classify::{ClassifyError, StrategyModel};
use crate::domain::{Context, Conversation, Speaker, Strategy};

pub const DEFAULT_CONTEXT_LEN: usize = Context::MAX_LEN;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CorpusError {
    #[error("split ratios must be positive and sum to 1 (got {train}, {dev}, {test})")]
    InvalidSplit { train: f64, dev: f64, test: f64 },
}

/// A (context, counselor response) pair labeled for one strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingInstance {
    pub context: Context,
    pub response: String,
    pub strategy: Strategy,
    pub label: bool,
}

/// Keeps conversations whose rating is present and at least `min_rating`.
pub fn filter_high_quality(convs: &[Conversation], min_rating: u8) -> Vec<Conversation> {
    convs
        .iter()
        .filter(|c| c.rating.is_some_and(|r| r >= min_rating))
        .cloned()
        .collect()
}

/// How [`auto_label`] treats labels that are already present.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabelPolicy {
    /// Replace every counselor label set with the classifier output.
    #[default]
    Recompute,
    /// Only label counselor utterances whose strategy set is empty.
    PreserveExisting,
}

/// Labels every counselor utterance with the strategies whose classifier
/// accepts the context ending at that utterance.
pub fn auto_label(
    convs: &[Conversation],
    model: &dyn StrategyModel,
    context_len: usize,
    policy: LabelPolicy,
) -> Result<Vec<Conversation>, ClassifyError> {
    let mut out = Vec::with_capacity(convs.len());
    for conv in convs {
        let mut conv = conv.clone();
        for i in 0..conv.utterances.len() {
            let u = &conv.utterances[i];
            if u.speaker != Speaker::Counselor {
                continue;
            }
            if policy == LabelPolicy::PreserveExisting && !u.strategies.is_empty() {
                continue;
            }
            let ctx = Context::window(&conv.utterances[..=i], context_len);
            let probs = model.predict(&ctx)?;
            conv.utterances[i].strategies = probs.positive(0.5).collect();
        }
        out.push(conv);
    }
    Ok(out)
}

/// One instance per counselor utterance that has at least one predecessor.
/// The context is the `context_len` utterances immediately before it.
pub fn build_instances(
    convs: &[Conversation],
    strategy: Strategy,
    context_len: usize,
) -> Vec<TrainingInstance> {
    let context_len = context_len.max(1);
    let mut out = Vec::new();
    for conv in convs {
        for (i, u) in conv.utterances.iter().enumerate() {
            if i == 0 || u.speaker != Speaker::Counselor {
                continue;
            }
            out.push(TrainingInstance {
                context: Context::window(&conv.utterances[..i], context_len),
                response: u.text.clone(),
                strategy,
                label: u.strategies.contains(&strategy),
            });
        }
    }
    out
}

/// [`build_instances`] for every strategy.
pub fn build_all_instances(
    convs: &[Conversation],
    context_len: usize,
) -> BTreeMap<Strategy, Vec<TrainingInstance>> {
    Strategy::ALL
        .into_iter()
        .map(|s| (s, build_instances(convs, s, context_len)))
        .collect()
}

/// Keeps every positive and a uniform sample (without replacement) of
/// `min(#neg, #pos)` negatives. Input order is preserved.
pub fn downsample_negatives(instances: &[TrainingInstance], seed: u64) -> Vec<TrainingInstance> {
    let positives = instances.iter().filter(|i| i.label).count();
    let negative_positions: Vec<usize> = instances
        .iter()
        .enumerate()
        .filter(|(_, i)| !i.label)
        .map(|(pos, _)| pos)
        .collect();
    let keep = positives.min(negative_positions.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kept = alloc::vec![false; instances.len()];
    for k in index::sample(&mut rng, negative_positions.len(), keep) {
        kept[negative_positions[k]] = true;
    }
    instances
        .iter()
        .enumerate()
        .filter(|(pos, i)| i.label || kept[*pos])
        .map(|(_, i)| i.clone())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub dev: f64,
    pub test: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub ratios: SplitRatios,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train: f64, dev: f64, test: f64, seed: u64) -> Result<Self, CorpusError> {
        let ratios = SplitRatios { train, dev, test };
        let ok = [train, dev, test].iter().all(|r| r.is_finite() && *r > 0.0)
            && (train + dev + test - 1.0).abs() <= 1e-9;
        if !ok {
            return Err(CorpusError::InvalidSplit { train, dev, test });
        }
        Ok(SplitSpec { ratios, seed })
    }

    /// The 8:1:1 split.
    pub fn standard(seed: u64) -> Self {
        SplitSpec {
            ratios: SplitRatios {
                train: 0.8,
                dev: 0.1,
                test: 0.1,
            },
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Split {
    pub train: Vec<Conversation>,
    pub dev: Vec<Conversation>,
    pub test: Vec<Conversation>,
}

impl Split {
    pub fn manifest(&self, spec: &SplitSpec) -> SplitManifest {
        let ids = |v: &[Conversation]| v.iter().map(|c| c.conversation_id.clone()).collect();
        SplitManifest {
            seed: spec.seed,
            ratios: spec.ratios,
            ids_per_split: SplitIds {
                train: ids(&self.train),
                dev: ids(&self.dev),
                test: ids(&self.test),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitIds {
    pub train: Vec<String>,
    pub dev: Vec<String>,
    pub test: Vec<String>,
}

/// On-disk record of a split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub ratios: SplitRatios,
    pub ids_per_split: SplitIds,
}

fn round_half_up(x: f64) -> usize {
    libm::floor(x + 0.5) as usize
}

/// Seeded conversation-level partition. Within each part the input order is
/// kept.
pub fn split(convs: &[Conversation], spec: &SplitSpec) -> Split {
    let n = convs.len();
    let n_train = round_half_up(n as f64 * spec.ratios.train).min(n);
    let n_dev = round_half_up(n as f64 * spec.ratios.dev).min(n - n_train);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    // 0 = train, 1 = dev, 2 = test
    let mut part = alloc::vec![2u8; n];
    for (rank, &pos) in order.iter().enumerate() {
        part[pos] = if rank < n_train {
            0
        } else if rank < n_train + n_dev {
            1
        } else {
            2
        };
    }
    let mut out = Split::default();
    for (conv, p) in convs.iter().zip(part) {
        match p {
            0 => out.train.push(conv.clone()),
            1 => out.dev.push(conv.clone()),
            _ => out.test.push(conv.clone()),
        }
    }
    out
}
