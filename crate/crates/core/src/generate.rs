//! Strategy-conditioned response candidates.
//!
//! [`ResponseGenerator`] is the backend seam: given the recent context and a
//! strategy, produce at most one candidate counselor reply. The reference
//! backend, [`RetrievalGenerator`], returns the stored reply whose preceding
//! context is most similar (TF-IDF cosine) among replies labeled with the
//! requested strategy.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::classify::{ClassifyError, StrategyModel};
use crate::domain::{normalize_text, tokenize, Context, Conversation, Speaker, Strategy};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GenerateError {
    #[error("corpus has no labeled counselor utterances to index")]
    EmptyCorpus,
    #[error("max_chars must be at least 1")]
    InvalidMaxChars,
    #[error("min_similarity must lie in [0, 1], got {0}")]
    InvalidMinSimilarity(f64),
    #[error("index entry {entry} refers to term {term}, but only {terms} terms exist")]
    TermOutOfRange { entry: usize, term: u32, terms: usize },
    #[error("index entry {0} has an empty response")]
    EmptyResponse(usize),
    #[error("duplicate idf term `{0}`")]
    DuplicateTerm(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationConfig {
    pub max_chars: usize,
    pub min_similarity: f64,
    /// Reserved for sampling backends; retrieval is deterministic.
    pub seed: u64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            max_chars: 200,
            min_similarity: 0.0,
            seed: 0,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), GenerateError> {
        if self.max_chars == 0 {
            return Err(GenerateError::InvalidMaxChars);
        }
        if !(0.0..=1.0).contains(&self.min_similarity) {
            return Err(GenerateError::InvalidMinSimilarity(self.min_similarity));
        }
        Ok(())
    }
}

/// One stored `(context, reply, strategy)` triple. `features` is the
/// L2-normalized TF-IDF vector of the context as sorted `(term, weight)`
/// pairs, where `term` indexes [`GeneratorIndex::terms`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub strategy: Strategy,
    pub response: String,
    pub features: Vec<(u32, f64)>,
}

/// Immutable retrieval index.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorIndex {
    /// `(term, idf)` sorted by term.
    idf: Vec<(String, f64)>,
    entries: Vec<IndexEntry>,
    by_strategy: [Vec<usize>; Strategy::COUNT],
    version: String,
}

/// Bag of unigram tokens over every utterance in the context (no speaker
/// tags).
fn context_tokens(ctx: &Context) -> Vec<String> {
    ctx.utterances().iter().flat_map(|u| tokenize(&u.text)).collect()
}

/// Smoothed inverse document frequency.
fn idf_weight(docs: usize, df: usize) -> f64 {
    libm::log((1.0 + docs as f64) / (1.0 + df as f64)) + 1.0
}

impl GeneratorIndex {
    /// Rebuilds an index from persisted parts, validating term references.
    pub fn from_parts(
        idf: Vec<(String, f64)>,
        entries: Vec<IndexEntry>,
        version: impl Into<String>,
    ) -> Result<Self, GenerateError> {
        let mut idf = idf;
        idf.sort_by(|a, b| a.0.cmp(&b.0));
        for pair in idf.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(GenerateError::DuplicateTerm(pair[0].0.clone()));
            }
        }
        let mut by_strategy: [Vec<usize>; Strategy::COUNT] = Default::default();
        for (i, e) in entries.iter().enumerate() {
            if normalize_text(&e.response).is_empty() {
                return Err(GenerateError::EmptyResponse(i));
            }
            if let Some(&(term, _)) = e.features.iter().find(|(t, _)| *t as usize >= idf.len()) {
                return Err(GenerateError::TermOutOfRange {
                    entry: i,
                    term,
                    terms: idf.len(),
                });
            }
            by_strategy[e.strategy.ordinal()].push(i);
        }
        Ok(GeneratorIndex {
            idf,
            entries,
            by_strategy,
            version: version.into(),
        })
    }

    pub fn terms(&self) -> &[(String, f64)] {
        &self.idf
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn entries_for(&self, strategy: Strategy) -> impl Iterator<Item = (usize, &IndexEntry)> + '_ {
        self.by_strategy[strategy.ordinal()].iter().map(move |&i| (i, &self.entries[i]))
    }

    fn term_index(&self, term: &str) -> Option<u32> {
        self.idf
            .binary_search_by(|(t, _)| t.as_str().cmp(term))
            .ok()
            .map(|i| i as u32)
    }

    /// L2-normalized TF-IDF vector of `ctx`; unknown tokens are dropped.
    pub fn vectorize(&self, ctx: &Context) -> Vec<(u32, f64)> {
        self.vectorize_tokens(&context_tokens(ctx))
    }

    fn vectorize_tokens(&self, tokens: &[String]) -> Vec<(u32, f64)> {
        let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
        for tok in tokens {
            if let Some(i) = self.term_index(tok) {
                *counts.entry(i).or_insert(0.0) += 1.0;
            }
        }
        let mut v: Vec<(u32, f64)> = counts
            .into_iter()
            .map(|(i, tf)| (i, tf * self.idf[i as usize].1))
            .collect();
        let norm = libm::sqrt(v.iter().map(|(_, w)| w * w).sum::<f64>());
        if norm > 0.0 {
            for (_, w) in &mut v {
                *w /= norm;
            }
        }
        v
    }
}

/// Dot product of two sorted sparse vectors.
fn sparse_dot(a: &[(u32, f64)], b: &[(u32, f64)]) -> f64 {
    let (mut i, mut j, mut acc) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            core::cmp::Ordering::Less => i += 1,
            core::cmp::Ordering::Greater => j += 1,
            core::cmp::Ordering::Equal => {
                acc += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    acc
}

/// One entry per (counselor utterance with a predecessor, strategy label).
/// Document frequencies count each such utterance's context once.
pub fn build_index(
    convs: &[Conversation],
    context_len: usize,
    version: impl Into<String>,
) -> Result<GeneratorIndex, GenerateError> {
    let context_len = context_len.max(1);
    let mut docs: Vec<(Vec<String>, &crate::domain::Utterance)> = Vec::new();
    for conv in convs {
        for (i, u) in conv.utterances.iter().enumerate() {
            if i == 0
                || u.speaker != Speaker::Counselor
                || u.strategies.is_empty()
                || normalize_text(&u.text).is_empty()
            {
                continue;
            }
            let ctx = Context::window(&conv.utterances[..i], context_len);
            docs.push((context_tokens(&ctx), u));
        }
    }
    if docs.is_empty() {
        return Err(GenerateError::EmptyCorpus);
    }

    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for (tokens, _) in &docs {
        let mut seen: Vec<&str> = tokens.iter().map(String::as_str).collect();
        seen.sort_unstable();
        seen.dedup();
        for t in seen {
            *df.entry(t).or_insert(0) += 1;
        }
    }
    let idf: Vec<(String, f64)> = df
        .iter()
        .map(|(t, &n)| (t.to_string(), idf_weight(docs.len(), n)))
        .collect();

    let mut index = GeneratorIndex::from_parts(idf, Vec::new(), version)?;
    let mut entries = Vec::new();
    for (tokens, u) in &docs {
        let ctx_features = index.vectorize_tokens(tokens);
        for &s in &u.strategies {
            entries.push(IndexEntry {
                strategy: s,
                response: u.text.trim().to_string(),
                features: ctx_features.clone(),
            });
        }
    }
    let version = core::mem::take(&mut index.version);
    GeneratorIndex::from_parts(index.idf, entries, version)
}

/// The longest prefix of at most `max_chars` characters that ends right
/// before whitespace (trailing whitespace trimmed). Falls back to a hard cut
/// when no such prefix exists.
pub fn truncate_on_word_boundary(text: &str, max_chars: usize) -> String {
    let chars: Vec<char> = text.chars().collect();
    if chars.len() <= max_chars {
        return text.to_string();
    }
    let best = (1..=max_chars)
        .rev()
        .find(|&k| chars[k].is_whitespace() && !chars[k - 1].is_whitespace());
    let cut = best.unwrap_or(max_chars);
    chars[..cut].iter().collect()
}

/// Nearest stored reply for `strategy`, or `None` when no entry of that
/// strategy reaches `cfg.min_similarity`. Ties go to the lowest entry
/// ordinal.
pub fn generate(index: &GeneratorIndex, ctx: &Context, strategy: Strategy, cfg: &GenerationConfig) -> Option<String> {
    nearest(index, ctx, strategy, cfg.min_similarity)
        .map(|(i, _)| truncate_on_word_boundary(&index.entries[i].response, cfg.max_chars.max(1)))
}

/// Ordinal and cosine similarity of the best entry for `strategy`.
pub fn nearest(index: &GeneratorIndex, ctx: &Context, strategy: Strategy, min_similarity: f64) -> Option<(usize, f64)> {
    let q = index.vectorize(ctx);
    let mut best: Option<(usize, f64)> = None;
    for (i, e) in index.entries_for(strategy) {
        let sim = sparse_dot(&q, &e.features);
        if sim < min_similarity {
            continue;
        }
        if best.is_none_or(|(_, b)| sim > b) {
            best = Some((i, sim));
        }
    }
    best
}

/// Backend seam for candidate generation.
pub trait ResponseGenerator: Send + Sync {
    fn generate(&self, ctx: &Context, strategy: Strategy) -> Option<String>;
}

#[derive(Debug, Clone)]
pub struct RetrievalGenerator {
    index: GeneratorIndex,
    cfg: GenerationConfig,
}

impl RetrievalGenerator {
    pub fn new(index: GeneratorIndex, cfg: GenerationConfig) -> Result<Self, GenerateError> {
        cfg.validate()?;
        Ok(RetrievalGenerator { index, cfg })
    }

    pub fn index(&self) -> &GeneratorIndex {
        &self.index
    }

    pub fn config(&self) -> &GenerationConfig {
        &self.cfg
    }
}

impl ResponseGenerator for RetrievalGenerator {
    fn generate(&self, ctx: &Context, strategy: Strategy) -> Option<String> {
        generate(&self.index, ctx, strategy, &self.cfg)
    }
}

/// Whether the intended strategy's classifier accepts `generated` as the
/// counselor reply to `ctx` (probability strictly above 0.5). Blank text is
/// never consistent.
pub fn strategy_consistency(
    generated: &str,
    intended: Strategy,
    ctx: &Context,
    model: &dyn StrategyModel,
) -> Result<bool, ClassifyError> {
    if normalize_text(generated).is_empty() {
        return Ok(false);
    }
    let probe = ctx.extended(Speaker::Counselor, generated);
    Ok(model.predict(&probe)?.get(intended) > 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Category, Utterance};
    use alloc::vec;
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest};

    fn conv(turns: &[(Speaker, &str, &[Strategy])]) -> Conversation {
        let mut c = Conversation::new("c", Category::Anxiety);
        for (i, (sp, t, ss)) in turns.iter().enumerate() {
            c.utterances
                .push(Utterance::new(i, *sp, *t).with_strategies(ss.iter().copied()));
        }
        c
    }

    fn sample() -> Vec<Conversation> {
        vec![
            conv(&[
                (Speaker::Seeker, "i am worried about my exam", &[]),
                (Speaker::Counselor, "that sounds stressful", &[Strategy::Support, Strategy::Reflection]),
                (Speaker::Seeker, "my partner left", &[]),
                (Speaker::Counselor, "what happened with your partner?", &[Strategy::OpenQuestion]),
            ]),
            conv(&[
                (Speaker::Seeker, "i finally studied for the exam", &[]),
                (Speaker::Counselor, "well done on studying", &[Strategy::Affirm]),
            ]),
        ]
    }

    #[test]
    fn multi_label_utterance_gives_one_entry_per_label() {
        let c = conv(&[
            (Speaker::Seeker, "hi", &[]),
            (Speaker::Counselor, "hello", &[Strategy::Support, Strategy::Affirm]),
        ]);
        let index = build_index(&[c], 5, "t").unwrap();
        assert_eq!(index.entries().len(), 2);
        let strategies: Vec<_> = index.entries().iter().map(|e| e.strategy).collect();
        assert_eq!(strategies, [Strategy::Support, Strategy::Affirm]);
    }

    #[test]
    fn no_counselor_utterances_is_empty_corpus() {
        let c = conv(&[(Speaker::Seeker, "hi", &[]), (Speaker::Seeker, "anyone?", &[])]);
        assert_eq!(build_index(&[c], 5, "t"), Err(GenerateError::EmptyCorpus));
        assert_eq!(build_index(&[], 5, "t"), Err(GenerateError::EmptyCorpus));
    }

    #[test]
    fn build_is_deterministic() {
        assert_eq!(build_index(&sample(), 5, "t").unwrap(), build_index(&sample(), 5, "t").unwrap());
    }

    #[test]
    fn idf_matches_formula() {
        let index = build_index(&sample(), 5, "t").unwrap();
        // Three documents; "exam" is in all three contexts, "partner" in one.
        let exam = index.terms().iter().find(|(t, _)| t == "exam").unwrap().1;
        let expected = libm::log(4.0 / 4.0) + 1.0;
        assert!((exam - expected).abs() < 1e-12);
        let partner = index.terms().iter().find(|(t, _)| t == "partner").unwrap().1;
        assert!((partner - (libm::log(4.0 / 2.0) + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn identical_context_returns_its_response() {
        let convs = sample();
        let index = build_index(&convs, 5, "t").unwrap();
        let ctx = Context::window(&convs[0].utterances[..3], 5);
        let out = generate(&index, &ctx, Strategy::OpenQuestion, &GenerationConfig::default());
        assert_eq!(out.as_deref(), Some("what happened with your partner?"));
        let ctx = Context::window(&convs[1].utterances[..1], 5);
        let out = generate(&index, &ctx, Strategy::Affirm, &GenerationConfig::default());
        assert_eq!(out.as_deref(), Some("well done on studying"));
    }

    #[test]
    fn missing_strategy_yields_none() {
        let index = build_index(&sample(), 5, "t").unwrap();
        let ctx = Context::window(&sample()[0].utterances[..1], 5);
        assert_eq!(generate(&index, &ctx, Strategy::Grounding, &GenerationConfig::default()), None);
    }

    #[test]
    fn min_similarity_excludes_unrelated_contexts() {
        let index = build_index(&sample(), 5, "t").unwrap();
        let ctx = Context::window(&[Utterance::new(0, Speaker::Seeker, "zebra")], 5);
        let strict = GenerationConfig {
            min_similarity: 0.1,
            ..GenerationConfig::default()
        };
        assert_eq!(generate(&index, &ctx, Strategy::Support, &strict), None);
        // With the default threshold the first entry wins the all-zero tie.
        assert_eq!(
            generate(&index, &ctx, Strategy::Support, &GenerationConfig::default()).as_deref(),
            Some("that sounds stressful")
        );
    }

    #[test]
    fn ties_go_to_lowest_ordinal() {
        let a = conv(&[(Speaker::Seeker, "same words", &[]), (Speaker::Counselor, "first", &[Strategy::Support])]);
        let b = conv(&[(Speaker::Seeker, "same words", &[]), (Speaker::Counselor, "second", &[Strategy::Support])]);
        let index = build_index(&[a.clone(), b], 5, "t").unwrap();
        let ctx = Context::window(&a.utterances[..1], 5);
        assert_eq!(nearest(&index, &ctx, Strategy::Support, 0.0).unwrap().0, 0);
    }

    #[test]
    fn from_parts_rejects_bad_terms() {
        let e = IndexEntry {
            strategy: Strategy::Affirm,
            response: "ok".into(),
            features: vec![(3, 1.0)],
        };
        assert!(matches!(
            GeneratorIndex::from_parts(vec![("a".into(), 1.0)], vec![e], "t"),
            Err(GenerateError::TermOutOfRange { .. })
        ));
    }

    /// Longest prefix of at most `max` chars ending right before whitespace,
    /// found by checking every candidate length.
    fn brute_truncate(text: &str, max: usize) -> String {
        let chars: Vec<char> = text.chars().collect();
        if chars.len() <= max {
            return text.into();
        }
        let mut best = None;
        for k in 1..=max {
            let prefix: String = chars[..k].iter().collect();
            let ends_word = !chars[k - 1].is_whitespace();
            let followed_by_space = chars[k].is_whitespace();
            if ends_word && followed_by_space {
                best = Some(prefix);
            }
        }
        best.unwrap_or_else(|| chars[..max].iter().collect())
    }

    #[test]
    fn long_response_truncates_on_word_boundary() {
        let words = ["alpha", "be", "gamma", "de", "epsilonic"];
        let mut text = String::new();
        let mut i = 0;
        while text.len() < 500 {
            if !text.is_empty() {
                text.push(' ');
            }
            text.push_str(words[i % words.len()]);
            i += 1;
        }
        let out = truncate_on_word_boundary(&text, 200);
        assert!(out.chars().count() <= 200);
        assert_eq!(out, brute_truncate(&text, 200));
        assert!(text[out.len()..].starts_with(' '));
    }

    #[test]
    fn unbroken_text_is_hard_cut() {
        assert_eq!(truncate_on_word_boundary("abcdefgh", 3), "abc");
        assert_eq!(truncate_on_word_boundary("ab", 3), "ab");
    }

    proptest! {
        #[test]
        fn truncation_matches_brute_force(text in "[a-c ]{0,40}", max in 1usize..30) {
            let out = truncate_on_word_boundary(&text, max);
            prop_assert_eq!(&out, &brute_truncate(&text, max));
            prop_assert!(out.chars().count() <= max.max(text.chars().count().min(max)));
        }

        #[test]
        fn retrieval_respects_strategy(seed in 0u64..20, s in 0usize..8) {
            let convs = crate::synth::demo_corpus(6, seed);
            let index = build_index(&convs, 5, "t").unwrap();
            let strategy = Strategy::ALL[s];
            let ctx = Context::window(&convs[0].utterances[..2], 5);
            match nearest(&index, &ctx, strategy, 0.0) {
                Some((i, sim)) => {
                    prop_assert_eq!(index.entries()[i].strategy, strategy);
                    prop_assert!((-1e-12..=1.0 + 1e-9).contains(&sim));
                    let text = generate(&index, &ctx, strategy, &GenerationConfig::default()).unwrap();
                    prop_assert!(!normalize_text(&text).is_empty());
                }
                None => prop_assert!(index.entries_for(strategy).next().is_none()),
            }
        }
    }

    struct Always(f64);
    impl StrategyModel for Always {
        fn predict(&self, _: &Context) -> Result<crate::classify::StrategyProbabilities, ClassifyError> {
            Ok(crate::classify::StrategyProbabilities::uniform(self.0))
        }
    }

    #[test]
    fn consistency_thresholds_strictly() {
        let ctx = Context::default();
        assert!(strategy_consistency("ok", Strategy::Affirm, &ctx, &Always(0.6)).unwrap());
        assert!(!strategy_consistency("ok", Strategy::Affirm, &ctx, &Always(0.5)).unwrap());
        assert!(!strategy_consistency("   ", Strategy::Affirm, &ctx, &Always(0.9)).unwrap());
    }

    #[test]
    fn consistency_requires_trained_model() {
        let p = crate::classify::StrategyPredictor::untrained();
        assert_eq!(
            strategy_consistency("hi", Strategy::Affirm, &Context::default(), &p),
            Err(ClassifyError::ModelNotTrained)
        );
    }
}
