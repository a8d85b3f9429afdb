//! Server behaviour beyond the acceptance gate: static assets, frame
//! validation, joins by frame, reconnects.

mod common;

use std::sync::Arc;
use std::time::Duration;

use care::client::{create_session, WsClient};
use care::protocol::{ErrorCode, ErrorPayload, Frame, FrameType, JoinedPayload, MessageRequest, SuggestionsPayload};
use care::server::ServerOptions;
use care_core::{Category, Speaker};
use common::{drain, expect_kind, start, Scripted};
use serde_json::json;

fn code(f: &Frame) -> ErrorCode {
    f.payload_as::<ErrorPayload>().unwrap().code
}

#[tokio::test]
async fn serves_static_assets_under_root() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<html>chat</html>").unwrap();
    std::fs::write(dir.path().join("app.js"), "console.log(1)").unwrap();
    let server = start(
        Arc::new(Scripted),
        ServerOptions {
            log_dir: None,
            static_dir: Some(dir.path().to_path_buf()),
        },
    )
    .await;
    let base = server.http_base();
    let index = reqwest::get(format!("{base}/")).await.unwrap();
    assert_eq!(index.status(), 200);
    assert_eq!(index.text().await.unwrap(), "<html>chat</html>");
    let js = reqwest::get(format!("{base}/app.js")).await.unwrap();
    assert_eq!(js.status(), 200);
    assert!(js.headers()["content-type"].to_str().unwrap().contains("javascript"));
    assert_eq!(reqwest::get(format!("{base}/missing.css")).await.unwrap().status(), 404);
    assert_eq!(reqwest::get(format!("{base}/healthz")).await.unwrap().text().await.unwrap(), "ok");
    server.shutdown().await;
}

#[tokio::test]
async fn session_creation_defaults_and_echoes_category() {
    let server = start(Arc::new(Scripted), ServerOptions::default()).await;
    let base = server.http_base();
    let client = reqwest::Client::new();
    let bare: serde_json::Value = client.post(format!("{base}/sessions")).send().await.unwrap().json().await.unwrap();
    assert_eq!(bare["category"], "general");
    let typed: serde_json::Value = client
        .post(format!("{base}/sessions"))
        .json(&json!({ "category": "relationship" }))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(typed["category"], "relationship");
    let mut ids = server.state().session_ids();
    ids.sort();
    let mut expected = vec![bare["session_id"].as_str().unwrap().to_string(), typed["session_id"].as_str().unwrap().to_string()];
    expected.sort();
    assert_eq!(ids, expected);
    server.shutdown().await;
}

#[tokio::test]
async fn join_by_frame_and_frame_validation() {
    let server = start(Arc::new(Scripted), ServerOptions::default()).await;
    let ws = server.ws_base();
    let id = create_session(&server.http_base(), Some(Category::Anxiety)).await.unwrap();

    let mut seeker = WsClient::connect(&ws, &id, None, None).await.unwrap();
    seeker.send_raw("{not json").await.unwrap();
    assert_eq!(code(&expect_kind(&mut seeker, FrameType::Error).await), ErrorCode::BadFrame);
    seeker
        .send(FrameType::Join, &json!({ "role": "seeker", "name": "river" }))
        .await
        .unwrap();
    let joined: JoinedPayload = expect_kind(&mut seeker, FrameType::Joined).await.payload_as().unwrap();
    assert_eq!(joined.session_id, id);
    assert_eq!(joined.role, Speaker::Seeker);
    assert_eq!(joined.category, Category::Anxiety);
    assert!(joined.transcript.is_empty());

    // Frames only the server may send, and counselor-only frames.
    seeker.send(FrameType::Suggestions, &json!({})).await.unwrap();
    assert_eq!(code(&expect_kind(&mut seeker, FrameType::Error).await), ErrorCode::BadFrame);
    seeker
        .send(FrameType::SuggestionClick, &json!({ "suggestion_id": "0-0" }))
        .await
        .unwrap();
    assert_eq!(code(&expect_kind(&mut seeker, FrameType::Error).await), ErrorCode::Forbidden);
    seeker.send(FrameType::Message, &json!({ "txt": "hi" })).await.unwrap();
    assert_eq!(code(&expect_kind(&mut seeker, FrameType::Error).await), ErrorCode::BadFrame);
    seeker.send(FrameType::Join, &json!({ "role": "counselor" })).await.unwrap();
    assert_eq!(code(&expect_kind(&mut seeker, FrameType::Error).await), ErrorCode::BadFrame);
    let mut second = WsClient::connect(&ws, &id, None, None).await.unwrap();
    second.send(FrameType::Join, &json!({ "role": "seeker" })).await.unwrap();
    assert_eq!(code(&expect_kind(&mut second, FrameType::Error).await), ErrorCode::RoleTaken);
    second.send(FrameType::Join, &json!({ "role": "admin" })).await.unwrap();
    assert_eq!(code(&expect_kind(&mut second, FrameType::Error).await), ErrorCode::BadFrame);

    // Nothing above changed the session.
    let snap = server.state().snapshot(&id).await.unwrap();
    assert!(snap.transcript.utterances.is_empty());
    assert_eq!(snap.participants.get(&Speaker::Seeker).map(String::as_str), Some("river"));
    server.shutdown().await;
}

#[tokio::test]
async fn rejoining_counselor_gets_transcript_and_live_suggestions() {
    let logs = tempfile::tempdir().unwrap();
    let server = start(
        Arc::new(Scripted),
        ServerOptions {
            log_dir: Some(logs.path().to_path_buf()),
            static_dir: None,
        },
    )
    .await;
    let ws = server.ws_base();
    let id = create_session(&server.http_base(), None).await.unwrap();
    let mut seeker = WsClient::join(&ws, &id, Speaker::Seeker, "river").await.unwrap();
    let counselor = WsClient::join(&ws, &id, Speaker::Counselor, "sam").await.unwrap();
    for i in 0..5 {
        seeker
            .send(FrameType::Message, &MessageRequest { text: format!("line {i}") })
            .await
            .unwrap();
        let m = expect_kind(&mut seeker, FrameType::Message).await;
        assert_eq!(m.payload["index"], i);
    }
    // Wait until the set for utterance 4 is live, then drop the counselor.
    for _ in 0..100 {
        if server.state().snapshot(&id).await.unwrap().live.is_some_and(|l| l.for_utterance_index == 4) {
            break;
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    counselor.close().await;
    let off = expect_kind(&mut seeker, FrameType::Presence).await;
    assert_eq!(off.payload, json!({ "role": "counselor", "name": "sam", "online": false }));

    let mut back = WsClient::connect(&ws, &id, Some(Speaker::Counselor), Some("sam")).await.unwrap();
    let joined: JoinedPayload = expect_kind(&mut back, FrameType::Joined).await.payload_as().unwrap();
    assert_eq!(joined.transcript.len(), 5);
    assert!(joined.panel_visible);
    let live: SuggestionsPayload = expect_kind(&mut back, FrameType::Suggestions).await.payload_as().unwrap();
    assert_eq!(live.for_utterance_index, 4);
    assert_eq!(live.items.len(), 2);
    assert_eq!(live.items[0].id, "4-0");

    // The seeker's next message clears the live set before new suggestions.
    seeker.send(FrameType::Message, &MessageRequest { text: "still here".into() }).await.unwrap();
    let frames = drain(&mut back, Duration::from_millis(500)).await;
    let kinds: Vec<FrameType> = frames.iter().map(|f| f.kind).collect();
    let msg = kinds.iter().position(|k| *k == FrameType::Message).unwrap();
    let sug = kinds.iter().position(|k| *k == FrameType::Suggestions).unwrap();
    assert!(msg < sug, "{kinds:?}");
    back.send(FrameType::SuggestionClick, &json!({ "suggestion_id": "4-0" })).await.unwrap();
    let frames = drain(&mut back, Duration::from_millis(300)).await;
    assert!(
        frames.iter().any(|f| f.kind == FrameType::Error && code(f) == ErrorCode::UnknownSuggestion),
        "stale click accepted"
    );
    server.shutdown().await;

    let text = std::fs::read_to_string(logs.path().join(format!("{id}.jsonl"))).unwrap();
    let kinds: Vec<String> = text
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["event_type"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(kinds.iter().filter(|k| *k == "message").count(), 6);
    assert_eq!(kinds.iter().filter(|k| *k == "join").count(), 3);
    assert!(kinds.iter().any(|k| k == "leave"));
    assert!(!kinds.iter().any(|k| k == "suggestion_click"));
}
