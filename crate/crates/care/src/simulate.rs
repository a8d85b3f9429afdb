//! Scripted seekers and an automatic counselor for end-to-end sessions.

use std::path::Path;
use std::time::Duration;

use care_core::telemetry::MessagePayload;
use care_core::{Category, Speaker};
use serde::{Deserialize, Serialize};
use tokio::time::Instant;

use crate::client::{create_session, rejected, ws_base, ClientError, WsClient};
use crate::error::{CareError, Result};
use crate::protocol::{ClickRequest, FrameType, MessageRequest, PresenceUpdate, SuggestionsPayload};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeekerScript {
    pub scenario_id: String,
    pub category: Category,
    pub turns: Vec<String>,
}

impl SeekerScript {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let script: SeekerScript = serde_json::from_str(text).map_err(|e| CareError::Parse {
            path: origin.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?;
        if script.turns.is_empty() || script.turns.iter().any(|t| t.trim().is_empty()) {
            return Err(CareError::Parse {
                path: origin.to_path_buf(),
                line: 0,
                message: "a script needs at least one turn and no blank turns".into(),
            });
        }
        Ok(script)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CareError::io(path, e))?;
        Self::parse(&text, path)
    }
}

const BUILTIN_SCRIPTS: [(&str, &str); 4] = [
    ("anxiety_1", include_str!("../assets/scenarios/anxiety_1.json")),
    ("anxiety_2", include_str!("../assets/scenarios/anxiety_2.json")),
    ("relationship_1", include_str!("../assets/scenarios/relationship_1.json")),
    ("relationship_2", include_str!("../assets/scenarios/relationship_2.json")),
];

/// The four shipped scenarios, two per category.
pub fn builtin_scripts() -> Vec<SeekerScript> {
    BUILTIN_SCRIPTS
        .iter()
        .map(|(id, text)| SeekerScript::parse(text, Path::new(id)).expect("built-in scripts parse"))
        .collect()
}

pub fn builtin_script(id: &str) -> Option<SeekerScript> {
    builtin_scripts().into_iter().find(|s| s.scenario_id == id)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pacing {
    /// How long the seeker waits for a counselor reply before sending its
    /// next turn anyway.
    pub reply_wait: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptLine {
    pub index: usize,
    pub role: Speaker,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeekerRun {
    pub scenario_id: String,
    pub session_id: String,
    pub transcript: Vec<TranscriptLine>,
    pub turns_sent: usize,
    /// Turns after which no reply came within `reply_wait`.
    pub timeouts: usize,
}

/// Joins as the seeker, sends each turn, and waits for a counselor message
/// (or `reply_wait`) before the next. Leaves after the final turn's wait.
pub async fn run_scripted_seeker(
    ws_base: &str,
    session_id: &str,
    script: &SeekerScript,
    pacing: Pacing,
) -> Result<SeekerRun, ClientError> {
    let mut client = WsClient::join(ws_base, session_id, Speaker::Seeker, "seeker-sim").await?;
    let mut transcript = Vec::new();
    let mut timeouts = 0;
    for turn in &script.turns {
        client
            .send(FrameType::Message, &MessageRequest { text: turn.clone() })
            .await?;
        let mut own_index = None;
        let deadline = Instant::now() + pacing.reply_wait;
        let replied = loop {
            let left = deadline.saturating_duration_since(Instant::now());
            let Some(frame) = client.recv_timeout(left).await? else {
                break false;
            };
            match frame.kind {
                FrameType::Message => {
                    let m: MessagePayload = frame
                        .payload_as()
                        .map_err(|e| ClientError::Protocol(e.to_string()))?;
                    transcript.push(TranscriptLine {
                        index: m.index,
                        role: m.role,
                        text: m.text.clone(),
                    });
                    match m.role {
                        Speaker::Seeker => own_index = Some(m.index),
                        Speaker::Counselor if own_index.is_some_and(|i| m.index > i) => break true,
                        Speaker::Counselor => {}
                    }
                }
                FrameType::Error => return Err(rejected(&frame)),
                _ => {}
            }
        };
        if !replied {
            timeouts += 1;
        }
    }
    client.close().await;
    Ok(SeekerRun {
        scenario_id: script.scenario_id.clone(),
        session_id: session_id.to_string(),
        transcript,
        turns_sent: script.turns.len(),
        timeouts,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CounselorBot {
    /// Upper bound on waiting for the suggestion set of a seeker message.
    pub suggestion_wait: Duration,
    /// Replies used when no suggestion arrives, cycled in order.
    pub fallback_replies: Vec<String>,
    /// Stop after this long without any frame.
    pub idle_timeout: Duration,
}

impl Default for CounselorBot {
    fn default() -> Self {
        CounselorBot {
            suggestion_wait: Duration::from_secs(3),
            fallback_replies: [
                "hi there, welcome! my name is sam. what brings you here today?",
                "it sounds like this is leaving you feeling overwhelmed.",
                "that sounds really tough, i am here for you.",
                "can you tell me more about that?",
            ]
            .map(String::from)
            .to_vec(),
            idle_timeout: Duration::from_secs(60),
        }
    }
}

/// What the counselor saw: every suggestions frame, in arrival order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CounselorRun {
    pub suggestion_frames: Vec<SuggestionsPayload>,
    pub replies: usize,
    pub clicked_replies: usize,
}

impl CounselorRun {
    /// Utterance index of the first non-empty suggestions frame.
    pub fn first_suggestion_index(&self) -> Option<usize> {
        self.suggestion_frames
            .iter()
            .find(|f| !f.items.is_empty())
            .map(|f| f.for_utterance_index)
    }
}

impl CounselorBot {
    /// Joins as the counselor and answers every seeker message, clicking and
    /// sending the top suggestion when one arrives. Returns once the seeker
    /// has left.
    pub async fn run(&self, ws_base: &str, session_id: &str) -> Result<CounselorRun, ClientError> {
        let client = WsClient::join(ws_base, session_id, Speaker::Counselor, "counselor-bot").await?;
        self.serve(client).await
    }

    /// As [`CounselorBot::run`] on an already joined counselor connection.
    pub async fn serve(&self, mut client: WsClient) -> Result<CounselorRun, ClientError> {
        let mut run = CounselorRun::default();
        let mut pending: Option<(usize, Instant)> = None;
        let mut seeker_seen = false;
        let mut fallback = 0usize;
        loop {
            let wait = match pending {
                Some((_, deadline)) => deadline.saturating_duration_since(Instant::now()),
                None => self.idle_timeout,
            };
            let frame = match client.recv_timeout(wait).await {
                Ok(f) => f,
                Err(ClientError::Closed) => break,
                Err(e) => return Err(e),
            };
            let mut reply: Option<(Option<String>, String)> = None;
            match frame {
                None => match pending.take() {
                    Some(_) => reply = Some((None, self.next_fallback(&mut fallback))),
                    None => break,
                },
                Some(frame) => match frame.kind {
                    FrameType::Message => {
                        let m: MessagePayload = frame
                            .payload_as()
                            .map_err(|e| ClientError::Protocol(e.to_string()))?;
                        if m.role == Speaker::Seeker {
                            pending = Some((m.index, Instant::now() + self.suggestion_wait));
                        }
                    }
                    FrameType::Suggestions => {
                        let s: SuggestionsPayload = frame
                            .payload_as()
                            .map_err(|e| ClientError::Protocol(e.to_string()))?;
                        if pending.is_some_and(|(i, _)| i == s.for_utterance_index) {
                            pending = None;
                            reply = Some(match s.items.first() {
                                Some(item) => (Some(item.id.clone()), item.text.clone()),
                                None => (None, self.next_fallback(&mut fallback)),
                            });
                        }
                        run.suggestion_frames.push(s);
                    }
                    FrameType::Presence => {
                        let p: PresenceUpdate = frame
                            .payload_as()
                            .map_err(|e| ClientError::Protocol(e.to_string()))?;
                        if p.role == Speaker::Seeker {
                            if p.online {
                                seeker_seen = true;
                            } else if seeker_seen {
                                break;
                            }
                        }
                    }
                    FrameType::Error => log::warn!("counselor bot got error frame: {}", frame.payload),
                    _ => {}
                },
            }
            if let Some((click, text)) = reply {
                if let Some(id) = click {
                    client
                        .send(FrameType::SuggestionClick, &ClickRequest { suggestion_id: id })
                        .await?;
                    run.clicked_replies += 1;
                }
                client.send(FrameType::Message, &MessageRequest { text }).await?;
                run.replies += 1;
            }
        }
        client.close().await;
        Ok(run)
    }

    fn next_fallback(&self, k: &mut usize) -> String {
        let text = self.fallback_replies[*k % self.fallback_replies.len()].clone();
        *k += 1;
        text
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario_id: String,
    pub session_id: String,
    pub transcript: Vec<TranscriptLine>,
    pub seeker_timeouts: usize,
    pub suggestion_frames: Vec<SuggestionsPayload>,
    pub first_suggestion_index: Option<usize>,
    pub counselor_replies: usize,
    pub clicked_replies: usize,
}

/// Creates a session on `http_base`, runs the automatic counselor and the
/// scripted seeker against it, and collects what both sides saw.
pub async fn simulate_scenario(
    http_base: &str,
    script: &SeekerScript,
    pacing: Pacing,
    bot: &CounselorBot,
) -> Result<ScenarioReport, ClientError> {
    let session_id = create_session(http_base, Some(script.category.clone())).await?;
    let ws = ws_base(http_base);
    // The bot joins first so it sees the seeker's presence and every message.
    let counselor = WsClient::join(&ws, &session_id, Speaker::Counselor, "counselor-bot").await?;
    let bot_task = {
        let bot = bot.clone();
        tokio::spawn(async move { bot.serve(counselor).await })
    };
    let seeker = run_scripted_seeker(&ws, &session_id, script, pacing).await?;
    let counselor = bot_task
        .await
        .map_err(|e| ClientError::Protocol(format!("counselor task failed: {e}")))??;
    Ok(ScenarioReport {
        scenario_id: script.scenario_id.clone(),
        session_id,
        transcript: seeker.transcript,
        seeker_timeouts: seeker.timeouts,
        first_suggestion_index: counselor.first_suggestion_index(),
        suggestion_frames: counselor.suggestion_frames,
        counselor_replies: counselor.replies,
        clicked_replies: counselor.clicked_replies,
    })
}
