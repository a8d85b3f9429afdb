//! Transcript types and the counseling strategy taxonomy.

mod text;

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use text::{normalize_text, tokenize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DomainError {
    #[error("unknown strategy `{0}`")]
    UnknownStrategy(String),
    #[error("utterance index {found} where {expected} was expected")]
    NonConsecutiveIndex { expected: usize, found: usize },
    #[error("seeker utterance {index} carries strategy labels")]
    SeekerWithStrategies { index: usize },
    #[error("utterance {index} has empty text")]
    EmptyText { index: usize },
    #[error("rating {0} outside 1..=5")]
    RatingOutOfRange(u8),
    #[error("context of {0} utterances exceeds the maximum of {max}", max = Context::MAX_LEN)]
    ContextTooLong(usize),
}

/// Motivational Interviewing strategy. Declaration order is the canonical
/// order used for every tie-break.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    OpenQuestion,
    ClosedQuestion,
    PersuadeWithPermission,
    Reflection,
    Support,
    IntroductionGreeting,
    Grounding,
    Affirm,
}

impl Strategy {
    pub const COUNT: usize = 8;

    pub const ALL: [Strategy; Strategy::COUNT] = [
        Strategy::OpenQuestion,
        Strategy::ClosedQuestion,
        Strategy::PersuadeWithPermission,
        Strategy::Reflection,
        Strategy::Support,
        Strategy::IntroductionGreeting,
        Strategy::Grounding,
        Strategy::Affirm,
    ];

    /// Position in [`Strategy::ALL`].
    pub fn ordinal(self) -> usize {
        self as usize
    }

    /// Wire / file name (snake_case).
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::OpenQuestion => "open_question",
            Strategy::ClosedQuestion => "closed_question",
            Strategy::PersuadeWithPermission => "persuade_with_permission",
            Strategy::Reflection => "reflection",
            Strategy::Support => "support",
            Strategy::IntroductionGreeting => "introduction_greeting",
            Strategy::Grounding => "grounding",
            Strategy::Affirm => "affirm",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Strategy::OpenQuestion => "Open Question",
            Strategy::ClosedQuestion => "Closed Question",
            Strategy::PersuadeWithPermission => "Persuade with Permission",
            Strategy::Reflection => "Reflection",
            Strategy::Support => "Support",
            Strategy::IntroductionGreeting => "Introduction or Greeting",
            Strategy::Grounding => "Grounding",
            Strategy::Affirm => "Affirm",
        }
    }

    /// One-sentence description shown as the strategy tooltip.
    pub fn description(self) -> &'static str {
        match self {
            Strategy::OpenQuestion => "Open-ended questions that leave room for a response.",
            Strategy::ClosedQuestion => "Questions with a short, specific answer.",
            Strategy::PersuadeWithPermission => {
                "Counselor tries to change the member's opinions, attitudes, or behavior with \
                 logical arguments and facts, after asking permission or emphasizing collaboration."
            }
            Strategy::Reflection => {
                "Counselor captures the implicit meaning and feelings of the client's statements \
                 and returns them to the client as a rephrase."
            }
            Strategy::Support => {
                "Sympathetic, compassionate, or understanding comments that encourage the client."
            }
            Strategy::IntroductionGreeting => {
                "Counselor and seeker greet each other and exchange names."
            }
            Strategy::Grounding => "Counselor facilitates the conversation through acknowledgements.",
            Strategy::Affirm => "Counselor compliments the seeker.",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| DomainError::UnknownStrategy(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    Seeker,
    Counselor,
}

impl Speaker {
    pub fn as_str(self) -> &'static str {
        match self {
            Speaker::Seeker => "seeker",
            Speaker::Counselor => "counselor",
        }
    }

    pub fn other(self) -> Speaker {
        match self {
            Speaker::Seeker => Speaker::Counselor,
            Speaker::Counselor => Speaker::Seeker,
        }
    }
}

impl fmt::Display for Speaker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Chat topic. Serialized as a bare string; `Other` never holds one of the
/// two named values.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Category {
    Anxiety,
    RelationshipStress,
    Other(String),
}

impl Category {
    pub fn as_str(&self) -> &str {
        match self {
            Category::Anxiety => "anxiety",
            Category::RelationshipStress => "relationship_stress",
            Category::Other(s) => s,
        }
    }
}

impl From<&str> for Category {
    fn from(s: &str) -> Self {
        match s {
            "anxiety" => Category::Anxiety,
            "relationship_stress" => Category::RelationshipStress,
            other => Category::Other(other.to_string()),
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for Category {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Category {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Ok(Category::from(s.as_str()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub index: usize,
    pub speaker: Speaker,
    pub text: String,
    #[serde(default)]
    pub strategies: BTreeSet<Strategy>,
    #[serde(default)]
    pub timestamp_ms: Option<i64>,
}

impl Utterance {
    pub fn new(index: usize, speaker: Speaker, text: impl Into<String>) -> Self {
        Utterance {
            index,
            speaker,
            text: text.into(),
            strategies: BTreeSet::new(),
            timestamp_ms: None,
        }
    }

    pub fn with_strategies(mut self, strategies: impl IntoIterator<Item = Strategy>) -> Self {
        self.strategies = strategies.into_iter().collect();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conversation {
    pub conversation_id: String,
    pub category: Category,
    #[serde(default)]
    pub rating: Option<u8>,
    #[serde(default)]
    pub utterances: Vec<Utterance>,
}

impl Conversation {
    pub fn new(conversation_id: impl Into<String>, category: Category) -> Self {
        Conversation {
            conversation_id: conversation_id.into(),
            category,
            rating: None,
            utterances: Vec::new(),
        }
    }

    /// Appends an utterance with the next index and returns that index.
    pub fn push(&mut self, speaker: Speaker, text: impl Into<String>) -> usize {
        let index = self.utterances.len();
        self.utterances.push(Utterance::new(index, speaker, text));
        index
    }

    pub fn last_index(&self) -> Option<usize> {
        self.utterances.len().checked_sub(1)
    }

    /// Checks every structural invariant of a stored transcript.
    pub fn validate(&self) -> Result<(), DomainError> {
        if let Some(r) = self.rating {
            if !(1..=5).contains(&r) {
                return Err(DomainError::RatingOutOfRange(r));
            }
        }
        for (expected, u) in self.utterances.iter().enumerate() {
            if u.index != expected {
                return Err(DomainError::NonConsecutiveIndex {
                    expected,
                    found: u.index,
                });
            }
            if u.text.trim().is_empty() {
                return Err(DomainError::EmptyText { index: u.index });
            }
            if u.speaker == Speaker::Seeker && !u.strategies.is_empty() {
                return Err(DomainError::SeekerWithStrategies { index: u.index });
            }
        }
        Ok(())
    }
}

/// The most recent utterances of a chat, oldest first.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<Utterance>", into = "Vec<Utterance>")]
pub struct Context {
    utterances: Vec<Utterance>,
}

impl Context {
    pub const MAX_LEN: usize = 5;

    pub fn new(utterances: Vec<Utterance>) -> Result<Self, DomainError> {
        if utterances.len() > Self::MAX_LEN {
            return Err(DomainError::ContextTooLong(utterances.len()));
        }
        Ok(Context { utterances })
    }

    /// The last `len` utterances of `history` (capped at [`Context::MAX_LEN`]).
    pub fn window(history: &[Utterance], len: usize) -> Self {
        let len = len.min(Self::MAX_LEN);
        let start = history.len().saturating_sub(len);
        Context {
            utterances: history[start..].to_vec(),
        }
    }

    /// This context followed by `text` spoken by `speaker`, still capped at
    /// [`Context::MAX_LEN`].
    pub fn extended(&self, speaker: Speaker, text: &str) -> Self {
        let mut all = self.utterances.clone();
        let index = all.last().map_or(0, |u| u.index + 1);
        all.push(Utterance::new(index, speaker, text));
        Context::window(&all, Self::MAX_LEN)
    }

    pub fn utterances(&self) -> &[Utterance] {
        &self.utterances
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }
}

impl TryFrom<Vec<Utterance>> for Context {
    type Error = DomainError;

    fn try_from(v: Vec<Utterance>) -> Result<Self, Self::Error> {
        Context::new(v)
    }
}

impl From<Context> for Vec<Utterance> {
    fn from(c: Context) -> Self {
        c.utterances
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    pub strategy: Strategy,
    pub text: String,
    pub probability: f64,
}

/// Ranked suggestions for the counselor turn following `for_utterance_index`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestionSet {
    pub for_utterance_index: usize,
    pub items: Vec<Suggestion>,
}

impl SuggestionSet {
    pub const MAX_ITEMS: usize = 3;

    pub fn empty(for_utterance_index: usize) -> Self {
        SuggestionSet {
            for_utterance_index,
            items: Vec::new(),
        }
    }

    /// Sorts `items` by probability (descending), ties by strategy order.
    pub fn ranked(for_utterance_index: usize, mut items: Vec<Suggestion>) -> Self {
        items.sort_by(|a, b| {
            b.probability
                .total_cmp(&a.probability)
                .then(a.strategy.cmp(&b.strategy))
        });
        SuggestionSet {
            for_utterance_index,
            items,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Size bound, ordering and distinct normalized texts.
    pub fn is_well_formed(&self) -> bool {
        if self.items.len() > Self::MAX_ITEMS {
            return false;
        }
        let ordered = self.items.windows(2).all(|w| {
            w[0].probability > w[1].probability
                || (w[0].probability == w[1].probability && w[0].strategy < w[1].strategy)
        });
        let mut seen = BTreeSet::new();
        let distinct = self.items.iter().all(|s| seen.insert(normalize_text(&s.text)));
        let in_range = self
            .items
            .iter()
            .all(|s| (0.0..=1.0).contains(&s.probability) && !s.text.trim().is_empty());
        ordered && distinct && in_range
    }
}
