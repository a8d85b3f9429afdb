//! Offline scoring of generated replies against reference replies.
//!
//! All metrics run on [`tokenize`] output. BLEU is single-reference with
//! add-one smoothing on every order above unigrams.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::classify::{ClassifyError, StrategyModel};
use crate::domain::{tokenize, Context, Conversation, Speaker, Strategy};
use crate::generate::{strategy_consistency, ResponseGenerator};
use crate::telemetry::lcs_len;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    fn from_overlap(overlap: usize, candidate_total: usize, reference_total: usize) -> Self {
        if overlap == 0 || candidate_total == 0 || reference_total == 0 {
            return Prf::default();
        }
        let precision = overlap as f64 / candidate_total as f64;
        let recall = overlap as f64 / reference_total as f64;
        Prf {
            precision,
            recall,
            f1: 2.0 * precision * recall / (precision + recall),
        }
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> BTreeMap<&[String], usize> {
    let mut counts = BTreeMap::new();
    if n > 0 && tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped overlap and candidate total for order `n`.
fn clipped(candidate: &[String], reference: &[String], n: usize) -> (usize, usize) {
    let cand = ngram_counts(candidate, n);
    let refs = ngram_counts(reference, n);
    let overlap = cand
        .iter()
        .map(|(g, &c)| c.min(refs.get(g).copied().unwrap_or(0)))
        .sum();
    (overlap, cand.values().sum())
}

/// N-gram overlap precision, recall and F1; all zero when either side has no
/// n-grams. `n = 0` is treated as 1.
pub fn rouge_n(candidate: &str, reference: &str, n: usize) -> Prf {
    let n = n.max(1);
    let (c, r) = (tokenize(candidate), tokenize(reference));
    let (overlap, cand_total) = clipped(&c, &r, n);
    let ref_total = r.len().saturating_sub(n - 1);
    Prf::from_overlap(overlap, cand_total, ref_total)
}

/// Token-LCS precision, recall and F1.
pub fn rouge_l(candidate: &str, reference: &str) -> Prf {
    let (c, r) = (tokenize(candidate), tokenize(reference));
    Prf::from_overlap(lcs_len(&c, &r), c.len(), r.len())
}

/// Sentence BLEU up to `max_n` (at least 1) with brevity penalty. Unigram
/// precision is unsmoothed, so no shared token means 0; higher orders use
/// `(matches + 1) / (total + 1)`.
pub fn bleu(candidate: &str, reference: &str, max_n: usize) -> f64 {
    let max_n = max_n.max(1);
    let (c, r) = (tokenize(candidate), tokenize(reference));
    if c.is_empty() || r.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let (m, t) = clipped(&c, &r, n);
        let p = if n == 1 {
            if m == 0 {
                return 0.0;
            }
            m as f64 / t as f64
        } else {
            (m as f64 + 1.0) / (t as f64 + 1.0)
        };
        log_sum += libm::log(p);
    }
    let bp = if c.len() > r.len() {
        1.0
    } else {
        libm::exp(1.0 - r.len() as f64 / c.len() as f64)
    };
    (bp * libm::exp(log_sum / max_n as f64)).clamp(0.0, 1.0)
}

/// Embedding-based similarity (for example BERTScore). No implementation
/// ships with this crate.
pub trait SemanticSimilarity: Send + Sync {
    fn similarity(&self, candidate: &str, reference: &str) -> f64;
}

/// One row of the generation table. `strategy` is `None` for the overall row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenEvalRow {
    #[serde(with = "row_key")]
    pub strategy: Option<Strategy>,
    pub n: usize,
    pub avg_words: f64,
    pub rouge1: f64,
    pub rouge2: f64,
    #[serde(rename = "rougeL")]
    pub rouge_l: f64,
    pub bleu: f64,
    pub positive_rate: f64,
}

impl GenEvalRow {
    pub fn label(&self) -> &'static str {
        self.strategy.map_or("overall", Strategy::as_str)
    }
}

mod row_key {
    use crate::domain::Strategy;
    use alloc::string::String;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: &Option<Strategy>, ser: S) -> Result<S::Ok, S::Error> {
        ser.serialize_str(s.map_or("overall", Strategy::as_str))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Option<Strategy>, D::Error> {
        let s = String::deserialize(de)?;
        if s == "overall" {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(serde::de::Error::custom)
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Sums {
    n: usize,
    words: f64,
    rouge1: f64,
    rouge2: f64,
    rouge_l: f64,
    bleu: f64,
    positive: usize,
}

impl Sums {
    fn add(&mut self, o: &Sums) {
        self.n += o.n;
        self.words += o.words;
        self.rouge1 += o.rouge1;
        self.rouge2 += o.rouge2;
        self.rouge_l += o.rouge_l;
        self.bleu += o.bleu;
        self.positive += o.positive;
    }

    fn row(&self, strategy: Option<Strategy>) -> GenEvalRow {
        let n = self.n.max(1) as f64;
        GenEvalRow {
            strategy,
            n: self.n,
            avg_words: self.words / n,
            rouge1: self.rouge1 / n,
            rouge2: self.rouge2 / n,
            rouge_l: self.rouge_l / n,
            bleu: self.bleu / n,
            positive_rate: self.positive as f64 / n,
        }
    }
}

/// Generates under each labeled strategy of every counselor utterance that
/// has context, and scores the result against the actual reply. A missing
/// generation scores as an empty candidate. Rows for strategies without test
/// instances are omitted (with a warning); the overall row comes last.
pub fn evaluate_generation(
    generator: &dyn ResponseGenerator,
    model: &dyn StrategyModel,
    test: &[Conversation],
    context_len: usize,
) -> Result<Vec<GenEvalRow>, ClassifyError> {
    let mut per: [Sums; Strategy::COUNT] = [Sums::default(); Strategy::COUNT];
    for conv in test {
        for (i, u) in conv.utterances.iter().enumerate() {
            if i == 0 || u.speaker != Speaker::Counselor {
                continue;
            }
            let ctx = Context::window(&conv.utterances[..i], context_len);
            for &s in &u.strategies {
                let generated = generator.generate(&ctx, s).unwrap_or_default();
                let sums = &mut per[s.ordinal()];
                sums.n += 1;
                sums.words += tokenize(&generated).len() as f64;
                sums.rouge1 += rouge_n(&generated, &u.text, 1).f1;
                sums.rouge2 += rouge_n(&generated, &u.text, 2).f1;
                sums.rouge_l += rouge_l(&generated, &u.text).f1;
                sums.bleu += bleu(&generated, &u.text, 4);
                if strategy_consistency(&generated, s, &ctx, model)? {
                    sums.positive += 1;
                }
            }
        }
    }
    let mut rows = Vec::new();
    let mut total = Sums::default();
    for s in Strategy::ALL {
        let sums = &per[s.ordinal()];
        if sums.n == 0 {
            log::warn!("no test instances for strategy {s}; row omitted");
            continue;
        }
        total.add(sums);
        rows.push(sums.row(Some(s)));
    }
    rows.push(total.row(None));
    Ok(rows)
}
