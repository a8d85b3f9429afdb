//! Next-turn strategy classifiers.
//!
//! The multi-label problem is decomposed into eight independent binary
//! problems (binary relevance), one per [`Strategy`]. Any backend that maps a
//! [`Context`] to eight probabilities can stand behind [`StrategyModel`]; the
//! reference backend here is an L2-regularized logistic regression over
//! unigram and bigram counts of the speaker-tagged context.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::TrainingInstance;
use crate::domain::{tokenize, Context, Conversation, Speaker, Strategy, Utterance};
use crate::math::{sigmoid, softplus};

pub const SEEKER_TAG: &str = "<seeker>";
pub const COUNSELOR_TAG: &str = "<counselor>";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClassifyError {
    #[error("strategy model is not trained")]
    ModelNotTrained,
    #[error("strategy `{strategy}` needs at least one positive and one negative instance")]
    InsufficientData { strategy: Strategy },
    #[error("no test instances for strategy `{strategy}`")]
    EmptyTestSet { strategy: Strategy },
    #[error("scorer for `{strategy}` has {found} weights, expected {expected}")]
    WeightLength {
        strategy: Strategy,
        expected: usize,
        found: usize,
    },
    #[error("expected {expected} scorers, found {found}")]
    ScorerCount { expected: usize, found: usize },
    #[error("duplicate vocabulary term `{0}`")]
    DuplicateTerm(String),
}

/// Independent per-strategy confidences. They do not sum to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrategyProbabilities([f64; Strategy::COUNT]);

impl StrategyProbabilities {
    /// Values are clamped into `[0, 1]`; NaN becomes 0.
    pub fn new(values: [f64; Strategy::COUNT]) -> Self {
        StrategyProbabilities(values.map(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) }))
    }

    pub fn uniform(p: f64) -> Self {
        Self::new([p; Strategy::COUNT])
    }

    pub fn get(&self, strategy: Strategy) -> f64 {
        self.0[strategy.ordinal()]
    }

    pub fn set(&mut self, strategy: Strategy, p: f64) {
        self.0[strategy.ordinal()] = if p.is_nan() { 0.0 } else { p.clamp(0.0, 1.0) };
    }

    pub fn iter(&self) -> impl Iterator<Item = (Strategy, f64)> + '_ {
        Strategy::ALL.into_iter().map(|s| (s, self.get(s)))
    }

    /// Strategies with probability strictly above `threshold`, canonical order.
    pub fn positive(&self, threshold: f64) -> impl Iterator<Item = Strategy> + '_ {
        self.iter().filter(move |(_, p)| *p > threshold).map(|(s, _)| s)
    }

    /// Descending by probability, ties in canonical strategy order.
    pub fn ranked(&self) -> Vec<(Strategy, f64)> {
        let mut v: Vec<_> = self.iter().collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        v
    }
}

impl Serialize for StrategyProbabilities {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let map: BTreeMap<Strategy, f64> = self.iter().collect();
        map.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for StrategyProbabilities {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let map = BTreeMap::<Strategy, f64>::deserialize(deserializer)?;
        let mut values = [0.0; Strategy::COUNT];
        for s in Strategy::ALL {
            values[s.ordinal()] = *map
                .get(&s)
                .ok_or_else(|| serde::de::Error::custom(format!("missing strategy {s}")))?;
        }
        Ok(StrategyProbabilities::new(values))
    }
}

/// Anything that scores the eight strategies for the next counselor turn.
pub trait StrategyModel: Send + Sync {
    fn predict(&self, ctx: &Context) -> Result<StrategyProbabilities, ClassifyError>;
}

/// Speaker tags followed by the tokens of each utterance, oldest first.
fn tagged_sequence(utterances: &[Utterance]) -> Vec<String> {
    let mut seq = Vec::new();
    for u in utterances {
        seq.push(
            match u.speaker {
                Speaker::Seeker => SEEKER_TAG,
                Speaker::Counselor => COUNSELOR_TAG,
            }
            .to_string(),
        );
        seq.extend(tokenize(&u.text));
    }
    seq
}

/// Unigram and bigram terms of a tagged sequence. Bigrams are joined with a
/// single space, which never occurs inside a token.
fn sequence_terms(seq: &[String]) -> Vec<String> {
    let mut terms: Vec<String> = seq.to_vec();
    for pair in seq.windows(2) {
        terms.push(format!("{} {}", pair[0], pair[1]));
    }
    terms
}

/// Feature terms of a context.
pub fn context_terms(ctx: &Context) -> Vec<String> {
    sequence_terms(&tagged_sequence(ctx.utterances()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VocabConfig {
    pub min_count: u64,
    pub max_size: usize,
}

impl Default for VocabConfig {
    fn default() -> Self {
        VocabConfig {
            min_count: 2,
            max_size: 50_000,
        }
    }
}

/// Term → feature index map shared by all eight scorers.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Vocabulary {
    terms: Vec<String>,
    lookup: BTreeMap<String, u32>,
}

impl Vocabulary {
    /// Keeps terms seen at least `min_count` times, most frequent first (ties
    /// lexicographic), capped at `max_size`.
    pub fn from_counts(counts: &BTreeMap<String, u64>, cfg: VocabConfig) -> Self {
        let mut kept: Vec<(&String, u64)> = counts
            .iter()
            .filter(|(_, &c)| c >= cfg.min_count)
            .map(|(t, &c)| (t, c))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        kept.truncate(cfg.max_size);
        let terms: Vec<String> = kept.into_iter().map(|(t, _)| t.clone()).collect();
        Self::from_terms(terms).expect("counts keys are unique")
    }

    /// Counts terms over each conversation's full tagged transcript.
    pub fn from_conversations(convs: &[Conversation], cfg: VocabConfig) -> Self {
        let mut counts = BTreeMap::new();
        for conv in convs {
            for term in sequence_terms(&tagged_sequence(&conv.utterances)) {
                *counts.entry(term).or_insert(0) += 1;
            }
        }
        Self::from_counts(&counts, cfg)
    }

    pub fn from_contexts<'a>(contexts: impl IntoIterator<Item = &'a Context>, cfg: VocabConfig) -> Self {
        let mut counts = BTreeMap::new();
        for ctx in contexts {
            for term in context_terms(ctx) {
                *counts.entry(term).or_insert(0) += 1;
            }
        }
        Self::from_counts(&counts, cfg)
    }

    /// Terms in index order.
    pub fn from_terms(terms: Vec<String>) -> Result<Self, ClassifyError> {
        let mut lookup = BTreeMap::new();
        for (i, t) in terms.iter().enumerate() {
            if lookup.insert(t.clone(), i as u32).is_some() {
                return Err(ClassifyError::DuplicateTerm(t.clone()));
            }
        }
        Ok(Vocabulary { terms, lookup })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn get(&self, term: &str) -> Option<u32> {
        self.lookup.get(term).copied()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }
}

/// Sorted `(index, value)` pairs with unique indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVector {
    entries: Vec<(u32, f64)>,
}

impl SparseVector {
    pub fn from_counts(counts: BTreeMap<u32, f64>) -> Self {
        SparseVector {
            entries: counts.into_iter().filter(|(_, v)| *v != 0.0).collect(),
        }
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn squared_norm(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v * v).sum()
    }

    pub fn get(&self, index: u32) -> f64 {
        self.entries
            .binary_search_by_key(&index, |(i, _)| *i)
            .map_or(0.0, |pos| self.entries[pos].1)
    }
}

/// Term counts of `ctx` restricted to `vocab`.
pub fn featurize(ctx: &Context, vocab: &Vocabulary) -> SparseVector {
    let mut counts = BTreeMap::new();
    for term in context_terms(ctx) {
        if let Some(i) = vocab.get(&term) {
            *counts.entry(i).or_insert(0.0) += 1.0;
        }
    }
    SparseVector::from_counts(counts)
}

/// One binary logistic scorer: `dim` feature weights then the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticScorer {
    weights: Vec<f32>,
}

impl LogisticScorer {
    pub fn zeros(dim: usize) -> Self {
        LogisticScorer {
            weights: alloc::vec![0.0; dim + 1],
        }
    }

    /// `weights.len()` must be the feature dimension plus one.
    pub fn from_weights(weights: Vec<f32>) -> Self {
        LogisticScorer { weights }
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.weights.len().saturating_sub(1)
    }

    pub fn bias(&self) -> f32 {
        self.weights.last().copied().unwrap_or(0.0)
    }

    pub fn logit(&self, x: &SparseVector) -> f64 {
        let dim = self.dim();
        let mut z = self.bias() as f64;
        for &(i, v) in x.entries() {
            if (i as usize) < dim {
                z += self.weights[i as usize] as f64 * v;
            }
        }
        z
    }

    pub fn probability(&self, x: &SparseVector) -> f64 {
        sigmoid(self.logit(x))
    }
}

/// Eight logistic scorers over one shared vocabulary.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StrategyPredictor {
    vocab: Vocabulary,
    scorers: Vec<LogisticScorer>,
    version: String,
}

impl StrategyPredictor {
    /// A predictor with no scorers; every prediction fails with
    /// [`ClassifyError::ModelNotTrained`].
    pub fn untrained() -> Self {
        Self::default()
    }

    /// All-zero weights: every probability is exactly 0.5.
    pub fn zeroed(vocab: Vocabulary, version: impl Into<String>) -> Self {
        let scorers = (0..Strategy::COUNT)
            .map(|_| LogisticScorer::zeros(vocab.len()))
            .collect();
        StrategyPredictor {
            vocab,
            scorers,
            version: version.into(),
        }
    }

    /// `scorers` in canonical strategy order.
    pub fn from_parts(
        vocab: Vocabulary,
        scorers: Vec<LogisticScorer>,
        version: impl Into<String>,
    ) -> Result<Self, ClassifyError> {
        if scorers.len() != Strategy::COUNT {
            return Err(ClassifyError::ScorerCount {
                expected: Strategy::COUNT,
                found: scorers.len(),
            });
        }
        for (s, scorer) in Strategy::ALL.into_iter().zip(&scorers) {
            if scorer.weights().len() != vocab.len() + 1 {
                return Err(ClassifyError::WeightLength {
                    strategy: s,
                    expected: vocab.len() + 1,
                    found: scorer.weights().len(),
                });
            }
        }
        Ok(StrategyPredictor {
            vocab,
            scorers,
            version: version.into(),
        })
    }

    pub fn is_trained(&self) -> bool {
        self.scorers.len() == Strategy::COUNT
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn scorer(&self, strategy: Strategy) -> Option<&LogisticScorer> {
        self.scorers.get(strategy.ordinal())
    }

    /// Replaces one strategy's scorer; the others are untouched.
    pub fn with_scorer(mut self, strategy: Strategy, scorer: LogisticScorer) -> Result<Self, ClassifyError> {
        if !self.is_trained() {
            return Err(ClassifyError::ModelNotTrained);
        }
        if scorer.weights().len() != self.vocab.len() + 1 {
            return Err(ClassifyError::WeightLength {
                strategy,
                expected: self.vocab.len() + 1,
                found: scorer.weights().len(),
            });
        }
        self.scorers[strategy.ordinal()] = scorer;
        Ok(self)
    }

    pub fn features(&self, ctx: &Context) -> SparseVector {
        featurize(ctx, &self.vocab)
    }
}

impl StrategyModel for StrategyPredictor {
    fn predict(&self, ctx: &Context) -> Result<StrategyProbabilities, ClassifyError> {
        if !self.is_trained() {
            return Err(ClassifyError::ModelNotTrained);
        }
        let x = self.features(ctx);
        let mut values = [0.0; Strategy::COUNT];
        for (v, scorer) in values.iter_mut().zip(&self.scorers) {
            *v = scorer.probability(&x);
        }
        Ok(StrategyProbabilities::new(values))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Upper bound on the step; the effective step is also capped by the
    /// inverse smoothness bound of the loss so every epoch decreases it.
    pub learning_rate: f64,
    pub l2: f64,
    /// Fixes the order in which instances are accumulated.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 300,
            learning_rate: 1.0,
            l2: 1e-4,
            seed: 0,
        }
    }
}

/// Per-strategy regularized loss before the first epoch and after each one.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub losses: BTreeMap<Strategy, Vec<f64>>,
}

pub fn train(
    vocab: Vocabulary,
    instances: &BTreeMap<Strategy, Vec<TrainingInstance>>,
    cfg: &TrainConfig,
    version: impl Into<String>,
) -> Result<StrategyPredictor, ClassifyError> {
    train_with_report(vocab, instances, cfg, version).map(|(p, _)| p)
}

pub fn train_with_report(
    vocab: Vocabulary,
    instances: &BTreeMap<Strategy, Vec<TrainingInstance>>,
    cfg: &TrainConfig,
    version: impl Into<String>,
) -> Result<(StrategyPredictor, TrainReport), ClassifyError> {
    // Check all strategies before doing any work.
    for s in Strategy::ALL {
        let set = instances.get(&s).map(Vec::as_slice).unwrap_or(&[]);
        if !set.iter().any(|i| i.label) || !set.iter().any(|i| !i.label) {
            return Err(ClassifyError::InsufficientData { strategy: s });
        }
    }
    let mut scorers = Vec::with_capacity(Strategy::COUNT);
    let mut report = TrainReport::default();
    for s in Strategy::ALL {
        let set = &instances[&s];
        let features: Vec<SparseVector> = set.iter().map(|i| featurize(&i.context, &vocab)).collect();
        let labels: Vec<bool> = set.iter().map(|i| i.label).collect();
        let seed = cfg.seed ^ ((s.ordinal() as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let (weights, losses) = fit_logistic(&features, &labels, vocab.len(), cfg, seed);
        scorers.push(LogisticScorer::from_weights(weights.iter().map(|&w| w as f32).collect()));
        report.losses.insert(s, losses);
    }
    let predictor = StrategyPredictor::from_parts(vocab, scorers, version)?;
    Ok((predictor, report))
}

fn regularized_loss(features: &[SparseVector], labels: &[bool], w: &[f64], l2: f64) -> f64 {
    let dim = w.len() - 1;
    let n = features.len() as f64;
    let mut total = 0.0;
    for (x, &y) in features.iter().zip(labels) {
        let z = w[dim] + x.entries().iter().map(|&(i, v)| w[i as usize] * v).sum::<f64>();
        total += softplus(z) - if y { z } else { 0.0 };
    }
    let penalty: f64 = w[..dim].iter().map(|v| v * v).sum();
    total / n + 0.5 * l2 * penalty
}

/// Full-batch gradient descent on the mean logistic loss plus
/// `l2/2 * |w|^2` (bias unpenalized). Returns weights (bias last) and the
/// loss trajectory.
fn fit_logistic(
    features: &[SparseVector],
    labels: &[bool],
    dim: usize,
    cfg: &TrainConfig,
    seed: u64,
) -> (Vec<f64>, Vec<f64>) {
    let n = features.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    // Hessian <= (1/4n) X'X + l2 I, and lambda_max(X'X) <= trace(X'X).
    let mean_sq_norm = features.iter().map(|x| x.squared_norm() + 1.0).sum::<f64>() / n as f64;
    let smoothness = 0.25 * mean_sq_norm + cfg.l2;
    let step = cfg.learning_rate.min(1.0 / smoothness);

    let mut w = alloc::vec![0.0f64; dim + 1];
    let mut grad = alloc::vec![0.0f64; dim + 1];
    let mut losses = Vec::with_capacity(cfg.epochs + 1);
    losses.push(regularized_loss(features, labels, &w, cfg.l2));
    for _ in 0..cfg.epochs {
        grad.iter_mut().for_each(|g| *g = 0.0);
        for &k in &order {
            let x = &features[k];
            let z = w[dim] + x.entries().iter().map(|&(i, v)| w[i as usize] * v).sum::<f64>();
            let residual = sigmoid(z) - if labels[k] { 1.0 } else { 0.0 };
            for &(i, v) in x.entries() {
                grad[i as usize] += residual * v;
            }
            grad[dim] += residual;
        }
        let inv_n = 1.0 / n as f64;
        for (j, (wj, gj)) in w.iter_mut().zip(&grad).enumerate() {
            let reg = if j < dim { cfg.l2 * *wj } else { 0.0 };
            *wj -= step * (gj * inv_n + reg);
        }
        losses.push(regularized_loss(features, labels, &w, cfg.l2));
    }
    (w, losses)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn record(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub n: usize,
}

impl ClassifierMetrics {
    pub fn from_confusion(c: &Confusion) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(c.tp, c.tp + c.fp);
        let recall = ratio(c.tp, c.tp + c.fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        ClassifierMetrics {
            accuracy: ratio(c.tp + c.tn, c.total()),
            precision,
            recall,
            f1,
            n: c.total(),
        }
    }
}

/// Confusion-matrix metrics per strategy; predicted positive means
/// probability strictly above `threshold`.
pub fn evaluate(
    model: &dyn StrategyModel,
    test: &BTreeMap<Strategy, Vec<TrainingInstance>>,
    threshold: f64,
) -> Result<BTreeMap<Strategy, ClassifierMetrics>, ClassifyError> {
    let mut out = BTreeMap::new();
    for s in Strategy::ALL {
        let set = test.get(&s).map(Vec::as_slice).unwrap_or(&[]);
        if set.is_empty() {
            return Err(ClassifyError::EmptyTestSet { strategy: s });
        }
        let mut confusion = Confusion::default();
        for inst in set {
            let p = model.predict(&inst.context)?.get(s);
            confusion.record(p > threshold, inst.label);
        }
        out.insert(s, ClassifierMetrics::from_confusion(&confusion));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_all_instances, downsample_negatives};
    use crate::synth;
    use alloc::vec;
    use proptest::prelude::{prop_assert, proptest};

    fn ctx(texts: &[(Speaker, &str)]) -> Context {
        let utts = texts
            .iter()
            .enumerate()
            .map(|(i, (s, t))| Utterance::new(i, *s, *t))
            .collect();
        Context::new(utts).unwrap()
    }

    #[test]
    fn featurize_single_known_token() {
        let vocab = Vocabulary::from_terms(vec!["hi".into()]).unwrap();
        let x = featurize(&ctx(&[(Speaker::Seeker, "hi")]), &vocab);
        assert_eq!(x.entries(), &[(0, 1.0)]);
    }

    #[test]
    fn featurize_empty_and_deterministic() {
        let vocab = Vocabulary::from_terms(vec!["hi".into(), SEEKER_TAG.into()]).unwrap();
        assert!(featurize(&Context::default(), &vocab).is_zero());
        let c = ctx(&[(Speaker::Seeker, "hi hi there"), (Speaker::Counselor, "hi")]);
        assert_eq!(featurize(&c, &vocab), featurize(&c, &vocab));
        let x = featurize(&c, &vocab);
        assert_eq!(x.get(0), 3.0);
        assert_eq!(x.get(1), 1.0);
    }

    #[test]
    fn context_terms_include_tags_and_bigrams() {
        let terms = context_terms(&ctx(&[(Speaker::Seeker, "I'm sad"), (Speaker::Counselor, "oh")]));
        for t in ["<seeker>", "i'm", "sad", "<counselor>", "oh", "<seeker> i'm", "sad <counselor>", "<counselor> oh"] {
            assert!(terms.iter().any(|x| x == t), "missing {t}");
        }
    }

    #[test]
    fn vocabulary_frequency_then_lexicographic() {
        let mut counts = BTreeMap::new();
        for (t, c) in [("b", 3), ("a", 3), ("z", 5), ("rare", 1)] {
            counts.insert(String::from(t), c);
        }
        let v = Vocabulary::from_counts(&counts, VocabConfig::default());
        assert_eq!(v.terms(), ["z", "a", "b"]);
        let capped = Vocabulary::from_counts(&counts, VocabConfig { min_count: 2, max_size: 2 });
        assert_eq!(capped.terms(), ["z", "a"]);
        assert!(Vocabulary::from_terms(vec!["x".into(), "x".into()]).is_err());
    }

    #[test]
    fn zero_weights_give_one_half() {
        let vocab = Vocabulary::from_terms(vec!["hi".into()]).unwrap();
        let p = StrategyPredictor::zeroed(vocab, "t")
            .predict(&ctx(&[(Speaker::Seeker, "hi")]))
            .unwrap();
        assert!(p.iter().all(|(_, v)| v == 0.5));
    }

    #[test]
    fn untrained_predictor_errors() {
        assert_eq!(
            StrategyPredictor::untrained().predict(&Context::default()),
            Err(ClassifyError::ModelNotTrained)
        );
    }

    #[test]
    fn from_parts_checks_shapes() {
        let vocab = Vocabulary::from_terms(vec!["a".into()]).unwrap();
        assert!(matches!(
            StrategyPredictor::from_parts(vocab.clone(), vec![LogisticScorer::zeros(1)], "v"),
            Err(ClassifyError::ScorerCount { .. })
        ));
        let mut scorers: Vec<_> = (0..8).map(|_| LogisticScorer::zeros(1)).collect();
        scorers[3] = LogisticScorer::zeros(4);
        assert!(matches!(
            StrategyPredictor::from_parts(vocab, scorers, "v"),
            Err(ClassifyError::WeightLength { strategy: Strategy::Reflection, .. })
        ));
    }

    fn separable_training(seed: u64) -> (Vocabulary, BTreeMap<Strategy, Vec<TrainingInstance>>) {
        let convs = synth::separable_corpus(40, seed);
        let vocab = Vocabulary::from_conversations(&convs, VocabConfig::default());
        let all = build_all_instances(&convs, 5);
        let balanced = all
            .into_iter()
            .map(|(s, v)| (s, downsample_negatives(&v, seed + s.ordinal() as u64)))
            .collect();
        (vocab, balanced)
    }

    #[test]
    fn training_fits_separable_corpus_and_loss_decreases() {
        let (vocab, data) = separable_training(3);
        let cfg = TrainConfig { seed: 11, ..TrainConfig::default() };
        let (model, report) = train_with_report(vocab, &data, &cfg, "t").unwrap();
        for (s, losses) in &report.losses {
            for w in losses.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "{s}: loss rose {} -> {}", w[0], w[1]);
            }
            assert!(losses.last().unwrap() < &losses[0]);
        }
        let metrics = evaluate(&model, &data, 0.5).unwrap();
        for (s, m) in metrics {
            assert!(m.accuracy >= 0.95, "{s}: training accuracy {}", m.accuracy);
        }
    }

    #[test]
    fn training_is_seed_deterministic() {
        let (vocab, data) = separable_training(5);
        let cfg = TrainConfig { epochs: 40, seed: 9, ..TrainConfig::default() };
        let a = train(vocab.clone(), &data, &cfg, "t").unwrap();
        let b = train(vocab, &data, &cfg, "t").unwrap();
        for s in Strategy::ALL {
            let wa: Vec<u32> = a.scorer(s).unwrap().weights().iter().map(|w| w.to_bits()).collect();
            let wb: Vec<u32> = b.scorer(s).unwrap().weights().iter().map(|w| w.to_bits()).collect();
            assert_eq!(wa, wb);
        }
    }

    #[test]
    fn insufficient_data_is_reported() {
        let (vocab, mut data) = separable_training(1);
        data.get_mut(&Strategy::Affirm).unwrap().retain(|i| !i.label);
        assert_eq!(
            train(vocab, &data, &TrainConfig::default(), "t"),
            Err(ClassifyError::InsufficientData { strategy: Strategy::Affirm })
        );
    }

    #[test]
    fn marker_context_predicts_its_strategy() {
        let (vocab, data) = separable_training(2);
        let model = train(vocab, &data, &TrainConfig::default(), "t").unwrap();
        let marker = synth::signature(Strategy::OpenQuestion);
        let c = ctx(&[(Speaker::Seeker, &alloc::format!("i keep thinking about it {marker}"))]);
        let p = model.predict(&c).unwrap();
        assert!(p.get(Strategy::OpenQuestion) > 0.5);
    }

    #[test]
    fn strategies_are_scored_independently() {
        let (vocab, data) = separable_training(4);
        let cfg = TrainConfig { epochs: 60, ..TrainConfig::default() };
        let model = train(vocab, &data, &cfg, "t").unwrap();
        let c = ctx(&[(Speaker::Seeker, "kxaffirm and kxsupport")]);
        let before = model.predict(&c).unwrap();
        let dim = model.vocabulary().len();
        let wiped = model.with_scorer(Strategy::Support, LogisticScorer::zeros(dim)).unwrap();
        let after = wiped.predict(&c).unwrap();
        assert_eq!(after.get(Strategy::Support), 0.5);
        for s in Strategy::ALL.into_iter().filter(|s| *s != Strategy::Support) {
            assert_eq!(before.get(s), after.get(s));
        }
    }

    #[test]
    fn confusion_matrix_arithmetic() {
        let c = Confusion { tp: 8, fp: 2, fn_: 2, tn: 8 };
        let m = ClassifierMetrics::from_confusion(&c);
        assert!((m.precision - 0.8).abs() < 1e-12);
        assert!((m.recall - 0.8).abs() < 1e-12);
        assert!((m.f1 - 0.8).abs() < 1e-12);
        assert!((m.accuracy - 0.8).abs() < 1e-12);
        let none = ClassifierMetrics::from_confusion(&Confusion { tp: 0, fp: 0, fn_: 3, tn: 1 });
        assert_eq!(none.f1, 0.0);
    }

    /// A model that returns fixed probabilities regardless of context.
    struct Fixed(StrategyProbabilities);

    impl StrategyModel for Fixed {
        fn predict(&self, _: &Context) -> Result<StrategyProbabilities, ClassifyError> {
            Ok(self.0)
        }
    }

    fn labeled(label: bool) -> TrainingInstance {
        TrainingInstance {
            context: ctx(&[(Speaker::Seeker, "x")]),
            response: "r".into(),
            strategy: Strategy::Support,
            label,
        }
    }

    #[test]
    fn evaluate_all_right_all_wrong_and_empty() {
        let all_pos: BTreeMap<_, _> = Strategy::ALL.into_iter().map(|s| (s, vec![labeled(true); 4])).collect();
        let right = evaluate(&Fixed(StrategyProbabilities::uniform(0.9)), &all_pos, 0.5).unwrap();
        assert!(right.values().all(|m| m.accuracy == 1.0 && m.f1 == 1.0));
        let wrong = evaluate(&Fixed(StrategyProbabilities::uniform(0.1)), &all_pos, 0.5).unwrap();
        assert!(wrong.values().all(|m| m.accuracy == 0.0));

        let mut missing = all_pos;
        missing.insert(Strategy::Grounding, Vec::new());
        assert_eq!(
            evaluate(&Fixed(StrategyProbabilities::uniform(0.9)), &missing, 0.5),
            Err(ClassifyError::EmptyTestSet { strategy: Strategy::Grounding })
        );
    }

    #[test]
    fn probabilities_serialize_as_map() {
        let mut p = StrategyProbabilities::uniform(0.25);
        p.set(Strategy::Affirm, 0.75);
        let json = serde_json::to_string(&p).unwrap();
        assert!(json.contains("\"affirm\":0.75"));
        let back: StrategyProbabilities = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
        let ranked = p.ranked();
        assert_eq!(ranked[0].0, Strategy::Affirm);
        assert_eq!(ranked[1].0, Strategy::OpenQuestion);
    }

    proptest! {
        #[test]
        fn f1_is_harmonic_mean(tp in 0usize..50, fp in 0usize..50, fn_ in 0usize..50, tn in 0usize..50) {
            let m = ClassifierMetrics::from_confusion(&Confusion { tp, fp, fn_, tn });
            // arithmetic oracle straight from the counts
            let p = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
            let r = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
            let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
            prop_assert!((m.f1 - f1).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&m.f1));
        }

        #[test]
        fn extra_positive_feature_never_lowers_probability(
            weights in proptest::collection::vec(-3.0f32..3.0, 6),
            counts in proptest::collection::vec(0u8..4, 5),
            bump in 0usize..5,
        ) {
            let scorer = LogisticScorer::from_weights(weights.clone());
            let to_vec = |c: &[u8]| SparseVector::from_counts(
                c.iter().enumerate().map(|(i, &v)| (i as u32, v as f64)).collect());
            let base = to_vec(&counts);
            let mut more = counts.clone();
            more[bump] += 1;
            let bumped = to_vec(&more);
            if weights[bump] > 0.0 {
                prop_assert!(scorer.probability(&bumped) >= scorer.probability(&base));
            }
        }
    }
}
