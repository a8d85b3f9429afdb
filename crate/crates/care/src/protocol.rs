//! WebSocket frames: `{type, seq, payload}` as UTF-8 JSON, one per message.

use care_core::telemetry::{ShownSuggestion, ShownSuggestionSet};
use care_core::{Category, Speaker, Strategy, Utterance};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameType {
    Join,
    Joined,
    Message,
    Typing,
    Suggestions,
    PanelToggle,
    SuggestionClick,
    Error,
    Presence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    #[serde(rename = "type")]
    pub kind: FrameType,
    /// Per-connection counter assigned by the sender; strictly increasing
    /// on server frames.
    #[serde(default)]
    pub seq: u64,
    #[serde(default)]
    pub payload: Value,
}

impl Frame {
    pub fn new<T: Serialize>(kind: FrameType, seq: u64, payload: &T) -> Self {
        Frame {
            kind,
            seq,
            payload: serde_json::to_value(payload).expect("payloads serialize"),
        }
    }

    pub fn payload_as<T: DeserializeOwned>(&self) -> Result<T, serde_json::Error> {
        T::deserialize(&self.payload)
    }

    pub fn to_text(&self) -> String {
        serde_json::to_string(self).expect("frames serialize")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ErrorCode {
    RoleTaken,
    UnknownSession,
    NotJoined,
    EmptyMessage,
    UnknownSuggestion,
    /// A seeker sent a counselor-only frame.
    Forbidden,
    /// Unparseable frame, server-only frame type, or invalid query.
    BadFrame,
}

impl std::fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        std::fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorPayload {
    pub code: ErrorCode,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JoinRequest {
    pub role: Speaker,
    #[serde(default)]
    pub name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JoinedPayload {
    pub session_id: String,
    pub role: Speaker,
    pub name: String,
    pub category: Category,
    pub transcript: Vec<Utterance>,
    pub panel_visible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresenceUpdate {
    pub role: Speaker,
    pub name: String,
    pub online: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageRequest {
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypingRequest {
    pub typing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClickRequest {
    pub suggestion_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestionItem {
    pub id: String,
    pub strategy: Strategy,
    /// One-sentence strategy description for the panel tooltip.
    pub description: String,
    pub text: String,
    pub probability: f64,
}

impl From<&ShownSuggestion> for SuggestionItem {
    fn from(s: &ShownSuggestion) -> Self {
        SuggestionItem {
            id: s.id.clone(),
            strategy: s.strategy,
            description: s.strategy.description().to_string(),
            text: s.text.clone(),
            probability: s.probability,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestionsPayload {
    pub for_utterance_index: usize,
    pub items: Vec<SuggestionItem>,
}

impl From<&ShownSuggestionSet> for SuggestionsPayload {
    fn from(set: &ShownSuggestionSet) -> Self {
        SuggestionsPayload {
            for_utterance_index: set.for_utterance_index,
            items: set.items.iter().map(SuggestionItem::from).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateSessionRequest {
    #[serde(default)]
    pub category: Option<Category>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateSessionResponse {
    pub session_id: String,
    pub category: Category,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_shape() {
        let f = Frame::new(FrameType::PanelToggle, 3, &serde_json::json!({"visible": false}));
        assert_eq!(f.to_text(), r#"{"type":"panel_toggle","seq":3,"payload":{"visible":false}}"#);
        let back: Frame = serde_json::from_str(&f.to_text()).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn client_frames_may_omit_seq_and_payload() {
        let f: Frame = serde_json::from_str(r#"{"type":"join"}"#).unwrap();
        assert_eq!(f.kind, FrameType::Join);
        assert_eq!(f.seq, 0);
        assert!(f.payload.is_null());
    }

    #[test]
    fn error_codes_serialize_by_name() {
        let p = ErrorPayload {
            code: ErrorCode::UnknownSuggestion,
            message: "x".into(),
        };
        assert_eq!(serde_json::to_value(&p).unwrap()["code"], "UnknownSuggestion");
    }
}
