//! Candidate-response safety filter.
//!
//! A reply is blocked when it contains abusive language, asks for personal
//! identifiers, uses more swear words than allowed, or (optionally) when a
//! learned [`TextScorer`] rates it at or above the configured threshold. The
//! default threshold sits below 0.5 so the filter errs toward blocking.
//!
//! Lexicon lists are plain text: one entry per line, `#` starts a comment
//! line. An entry prefixed with `re:` is a regular expression; any other
//! entry is a literal term matched on word boundaries. All matching is
//! case-insensitive and runs on normalized text.

use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use regex_automata::meta::Regex;
use regex_automata::util::syntax;
use serde::{Deserialize, Serialize};

use crate::domain::{normalize_text, Suggestion};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SafetyError {
    #[error("safety lexicon not found: {0}")]
    LexiconMissing(String),
    #[error("{list} lexicon line {line}: {message}")]
    InvalidPattern {
        list: LexiconList,
        line: usize,
        message: String,
    },
    #[error("classifier_threshold must lie in [0, 1], got {0}")]
    InvalidThreshold(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SafetyReason {
    AbusiveLanguage,
    PersonalInfoInquiry,
    ExcessiveProfanity,
    ClassifierFlag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyVerdict {
    pub allowed: bool,
    pub reasons: Vec<SafetyReason>,
    /// Scorer output when a scorer is attached, otherwise 1 for a lexicon
    /// block and 0 for a clean text.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SafetyConfig {
    /// Directory holding `abusive.txt`, `profanity.txt` and
    /// `personal_info.txt`; `None` selects the built-in lists.
    pub lexicon_path: Option<String>,
    pub classifier_threshold: f64,
    pub profanity_max: usize,
}

impl Default for SafetyConfig {
    fn default() -> Self {
        SafetyConfig {
            lexicon_path: None,
            classifier_threshold: 0.3,
            profanity_max: 0,
        }
    }
}

impl SafetyConfig {
    pub fn validate(&self) -> Result<(), SafetyError> {
        if !(0.0..=1.0).contains(&self.classifier_threshold) {
            return Err(SafetyError::InvalidThreshold(self.classifier_threshold));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LexiconList {
    Abusive,
    Profanity,
    PersonalInfo,
}

impl LexiconList {
    pub const ALL: [LexiconList; 3] = [LexiconList::Abusive, LexiconList::Profanity, LexiconList::PersonalInfo];

    pub fn file_name(self) -> &'static str {
        match self {
            LexiconList::Abusive => "abusive.txt",
            LexiconList::Profanity => "profanity.txt",
            LexiconList::PersonalInfo => "personal_info.txt",
        }
    }

    fn reason(self) -> SafetyReason {
        match self {
            LexiconList::Abusive => SafetyReason::AbusiveLanguage,
            LexiconList::Profanity => SafetyReason::ExcessiveProfanity,
            LexiconList::PersonalInfo => SafetyReason::PersonalInfoInquiry,
        }
    }

    fn builtin_source(self) -> &'static str {
        match self {
            LexiconList::Abusive => include_str!("../assets/safety/abusive.txt"),
            LexiconList::Profanity => include_str!("../assets/safety/profanity.txt"),
            LexiconList::PersonalInfo => include_str!("../assets/safety/personal_info.txt"),
        }
    }
}

impl fmt::Display for LexiconList {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LexiconList::Abusive => "abusive",
            LexiconList::Profanity => "profanity",
            LexiconList::PersonalInfo => "personal_info",
        })
    }
}

#[derive(Debug, Clone)]
struct CompiledList {
    source: String,
    regex: Option<Regex>,
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Regex for one lexicon line, or `None` for blank and comment lines.
fn line_pattern(line: &str) -> Option<String> {
    let line = line.trim();
    if line.is_empty() || line.starts_with('#') {
        return None;
    }
    if let Some(re) = line.strip_prefix("re:") {
        return Some(re.trim().to_string());
    }
    let term = normalize_text(line);
    let mut pat = String::new();
    if term.chars().next().is_some_and(is_word_char) {
        pat.push_str(r"\b");
    }
    pat.push_str(&regex_syntax::escape(&term));
    if term.chars().last().is_some_and(is_word_char) {
        pat.push_str(r"\b");
    }
    Some(pat)
}

fn compile(list: LexiconList, source: &str) -> Result<CompiledList, SafetyError> {
    let mut patterns = Vec::new();
    for (n, line) in source.lines().enumerate() {
        if let Some(p) = line_pattern(line) {
            // Compile alone first so errors point at the offending line.
            Regex::builder()
                .syntax(syntax::Config::new().case_insensitive(true))
                .build(&p)
                .map_err(|e| SafetyError::InvalidPattern {
                    list,
                    line: n + 1,
                    message: e.to_string(),
                })?;
            patterns.push(p);
        }
    }
    let regex = if patterns.is_empty() {
        None
    } else {
        Some(
            Regex::builder()
                .syntax(syntax::Config::new().case_insensitive(true))
                .build_many(&patterns)
                .map_err(|e| SafetyError::InvalidPattern {
                    list,
                    line: 0,
                    message: e.to_string(),
                })?,
        )
    };
    Ok(CompiledList {
        source: source.to_string(),
        regex,
    })
}

/// The three compiled lists.
#[derive(Debug, Clone)]
pub struct Lexicon {
    lists: [CompiledList; 3],
}

impl Lexicon {
    pub fn parse(abusive: &str, profanity: &str, personal_info: &str) -> Result<Self, SafetyError> {
        Ok(Lexicon {
            lists: [
                compile(LexiconList::Abusive, abusive)?,
                compile(LexiconList::Profanity, profanity)?,
                compile(LexiconList::PersonalInfo, personal_info)?,
            ],
        })
    }

    /// The lists shipped with the crate.
    pub fn builtin() -> Self {
        let [a, p, i] = LexiconList::ALL.map(LexiconList::builtin_source);
        Lexicon::parse(a, p, i).expect("built-in lexicon compiles")
    }

    /// Raw text of one list, as parsed.
    pub fn source(&self, list: LexiconList) -> &str {
        &self.lists[list as usize].source
    }

    /// Non-overlapping matches of `list` in already-normalized text.
    fn count(&self, list: LexiconList, normalized: &str) -> usize {
        self.lists[list as usize]
            .regex
            .as_ref()
            .map_or(0, |re| re.find_iter(normalized).count())
    }
}

/// Optional learned scorer: probability that a text is inappropriate.
pub trait TextScorer: Send + Sync {
    fn score(&self, text: &str) -> f64;
}

/// Lowercase, NFC, collapsed whitespace, curly apostrophes folded.
fn canonical(text: &str) -> String {
    normalize_text(text).replace(['\u{2019}', '\u{02BC}'], "'")
}

pub fn check(text: &str, lexicon: &Lexicon, cfg: &SafetyConfig, scorer: Option<&dyn TextScorer>) -> SafetyVerdict {
    let normalized = canonical(text);
    let mut reasons = Vec::new();
    if lexicon.count(LexiconList::Abusive, &normalized) > 0 {
        reasons.push(LexiconList::Abusive.reason());
    }
    if lexicon.count(LexiconList::PersonalInfo, &normalized) > 0 {
        reasons.push(LexiconList::PersonalInfo.reason());
    }
    if lexicon.count(LexiconList::Profanity, &normalized) > cfg.profanity_max {
        reasons.push(LexiconList::Profanity.reason());
    }
    let score = match scorer {
        Some(s) if !normalized.is_empty() => {
            let v = s.score(text);
            let v = if v.is_nan() { 1.0 } else { v.clamp(0.0, 1.0) };
            if v >= cfg.classifier_threshold {
                reasons.push(SafetyReason::ClassifierFlag);
            }
            v
        }
        _ if reasons.is_empty() => 0.0,
        _ => 1.0,
    };
    SafetyVerdict {
        allowed: reasons.is_empty(),
        reasons,
        score,
    }
}

/// A lexicon, its configuration and an optional scorer bundled together.
#[derive(Clone)]
pub struct SafetyFilter {
    lexicon: Lexicon,
    cfg: SafetyConfig,
    scorer: Option<Arc<dyn TextScorer>>,
}

impl fmt::Debug for SafetyFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SafetyFilter")
            .field("cfg", &self.cfg)
            .field("scorer", &self.scorer.is_some())
            .finish_non_exhaustive()
    }
}

impl SafetyFilter {
    pub fn new(lexicon: Lexicon, cfg: SafetyConfig) -> Result<Self, SafetyError> {
        cfg.validate()?;
        Ok(SafetyFilter {
            lexicon,
            cfg,
            scorer: None,
        })
    }

    pub fn with_scorer(mut self, scorer: Arc<dyn TextScorer>) -> Self {
        self.scorer = Some(scorer);
        self
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    pub fn config(&self) -> &SafetyConfig {
        &self.cfg
    }

    pub fn check(&self, text: &str) -> SafetyVerdict {
        check(text, &self.lexicon, &self.cfg, self.scorer.as_deref())
    }
}

impl Default for SafetyFilter {
    fn default() -> Self {
        SafetyFilter::new(Lexicon::builtin(), SafetyConfig::default()).expect("default config is valid")
    }
}

/// Items whose text passes `filter`, in their original order.
pub fn filter_suggestions(items: Vec<Suggestion>, filter: &SafetyFilter) -> Vec<Suggestion> {
    items.into_iter().filter(|s| filter.check(&s.text).allowed).collect()
}
