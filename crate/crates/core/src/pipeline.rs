//! Suggestion pipeline: predict, generate, filter, dedup, rank.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::classify::{ClassifyError, StrategyModel, StrategyProbabilities};
use crate::domain::{normalize_text, Context, Conversation, Suggestion, SuggestionSet};
use crate::generate::ResponseGenerator;
use crate::safety::SafetyFilter;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Strategies must score strictly above this.
    pub confidence_threshold: f64,
    pub max_suggestions: usize,
    pub min_utterances: usize,
    pub context_len: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            confidence_threshold: 0.5,
            max_suggestions: SuggestionSet::MAX_ITEMS,
            min_utterances: 5,
            context_len: Context::MAX_LEN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PipelineConfigError {
    #[error("confidence_threshold must lie in [0, 1], got {0}")]
    Threshold(f64),
    #[error("{0} must be positive")]
    NotPositive(&'static str),
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineConfigError> {
        if !(0.0..=1.0).contains(&self.confidence_threshold) {
            return Err(PipelineConfigError::Threshold(self.confidence_threshold));
        }
        for (name, v) in [
            ("max_suggestions", self.max_suggestions),
            ("min_utterances", self.min_utterances),
            ("context_len", self.context_len),
        ] {
            if v == 0 {
                return Err(PipelineConfigError::NotPositive(name));
            }
        }
        Ok(())
    }
}

/// The assembled models. Cheap to clone; safe to share across threads.
#[derive(Clone)]
pub struct Pipeline {
    model: Arc<dyn StrategyModel>,
    generator: Arc<dyn ResponseGenerator>,
    safety: Arc<SafetyFilter>,
    cfg: PipelineConfig,
}

impl core::fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Pipeline").field("cfg", &self.cfg).finish_non_exhaustive()
    }
}

impl Pipeline {
    pub fn new(
        model: Arc<dyn StrategyModel>,
        generator: Arc<dyn ResponseGenerator>,
        safety: Arc<SafetyFilter>,
        cfg: PipelineConfig,
    ) -> Result<Self, PipelineConfigError> {
        cfg.validate()?;
        Ok(Pipeline {
            model,
            generator,
            safety,
            cfg,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn safety(&self) -> &SafetyFilter {
        &self.safety
    }

    /// `None` below the length gate, otherwise the model's probabilities for
    /// the trailing context window.
    fn probabilities(&self, conversation: &Conversation) -> Result<Option<StrategyProbabilities>, ClassifyError> {
        if conversation.utterances.len() < self.cfg.min_utterances {
            return Ok(None);
        }
        let ctx = Context::window(&conversation.utterances, self.cfg.context_len);
        self.model.predict(&ctx).map(Some)
    }

    /// Ranked, filtered suggestions for the counselor's next turn.
    pub fn suggest(&self, conversation: &Conversation) -> Result<SuggestionSet, ClassifyError> {
        let for_index = conversation.last_index().unwrap_or(0);
        let Some(probs) = self.probabilities(conversation)? else {
            return Ok(SuggestionSet::empty(for_index));
        };
        let ctx = Context::window(&conversation.utterances, self.cfg.context_len);
        let candidates: Vec<Suggestion> = probs
            .ranked()
            .into_iter()
            .filter(|(_, p)| *p > self.cfg.confidence_threshold)
            .take(self.cfg.max_suggestions)
            .filter_map(|(strategy, probability)| {
                self.generator.generate(&ctx, strategy).map(|text| Suggestion {
                    strategy,
                    text,
                    probability,
                })
            })
            .collect();
        let allowed = crate::safety::filter_suggestions(candidates, &self.safety);
        // Candidates are already in descending probability order, so the
        // first occurrence of a text is the one to keep.
        let mut seen: BTreeSet<String> = BTreeSet::new();
        let items = allowed
            .into_iter()
            .filter(|s| seen.insert(normalize_text(&s.text)))
            .collect();
        Ok(SuggestionSet::ranked(for_index, items))
    }

    /// Whether the gates would let any suggestion through (before generation
    /// and filtering).
    pub fn should_offer(&self, conversation: &Conversation) -> Result<bool, ClassifyError> {
        Ok(self
            .probabilities(conversation)?
            .is_some_and(|p| p.positive(self.cfg.confidence_threshold).next().is_some()))
    }
}
