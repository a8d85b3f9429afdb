//! Helpers shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use care::bundle::ModelBundle;
use care::cli::pipeline_from_bundle;
use care::client::WsClient;
use care::config::CareConfig;
use care::protocol::{Frame, FrameType};
use care::server::{bind, AppState, ServerHandle, ServerOptions, SuggestionSource};
use care_core::classify::ClassifyError;
use care_core::pipeline::Pipeline;
use care_core::safety::Lexicon;
use care_core::synth;
use care_core::training::{fit, TrainOptions};
use care_core::{Conversation, Strategy, Suggestion, SuggestionSet};

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn demo_options() -> TrainOptions {
    TrainOptions {
        seed: 3,
        ..TrainOptions::default()
    }
}

/// Model trained on the multi-turn demo corpus.
pub fn demo_bundle() -> ModelBundle {
    let opts = demo_options();
    let models = fit(&synth::demo_corpus(600, 3), &opts).expect("demo corpus trains");
    ModelBundle::new(models, Lexicon::builtin(), &opts)
}

pub fn demo_pipeline() -> Pipeline {
    pipeline_from_bundle(&demo_bundle(), &CareConfig::default()).expect("pipeline assembles")
}

/// Two fixed suggestions once the transcript has five utterances.
#[derive(Debug, Clone, Copy)]
pub struct Scripted;

impl SuggestionSource for Scripted {
    fn suggest(&self, c: &Conversation) -> Result<SuggestionSet, ClassifyError> {
        let idx = c.last_index().unwrap_or(0);
        if c.utterances.len() < 5 {
            return Ok(SuggestionSet::empty(idx));
        }
        Ok(SuggestionSet::ranked(
            idx,
            vec![
                Suggestion {
                    strategy: Strategy::Reflection,
                    text: format!("it sounds like that is hard ({idx})"),
                    probability: 0.8,
                },
                Suggestion {
                    strategy: Strategy::OpenQuestion,
                    text: format!("can you tell me more? ({idx})"),
                    probability: 0.6,
                },
            ],
        ))
    }
}

pub async fn start(source: Arc<dyn SuggestionSource>, opts: ServerOptions) -> ServerHandle {
    bind("127.0.0.1:0".parse().unwrap(), AppState::new(source, opts))
        .await
        .expect("server binds")
}

pub const WAIT: Duration = Duration::from_secs(10);

/// Next frame of `kind`, skipping others; panics on timeout.
pub async fn expect_kind(c: &mut WsClient, kind: FrameType) -> Frame {
    c.recv_kind(kind, WAIT)
        .await
        .expect("connection open")
        .unwrap_or_else(|| panic!("no {kind:?} frame within {WAIT:?}"))
}

/// Every frame that arrives within `window`.
pub async fn drain(c: &mut WsClient, window: Duration) -> Vec<Frame> {
    let mut out = Vec::new();
    let deadline = tokio::time::Instant::now() + window;
    loop {
        let left = deadline.saturating_duration_since(tokio::time::Instant::now());
        match c.recv_timeout(left).await {
            Ok(Some(f)) => out.push(f),
            _ => return out,
        }
    }
}
