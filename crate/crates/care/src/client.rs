//! Minimal protocol client used by the simulator and tests.

use std::time::Duration;

use care_core::{Category, Speaker};
use futures_util::{SinkExt, StreamExt};
use serde::Serialize;
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

use crate::protocol::{CreateSessionRequest, CreateSessionResponse, ErrorPayload, Frame, FrameType};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("http: {0}")]
    Http(#[from] reqwest::Error),
    #[error("websocket: {0}")]
    Ws(#[from] tokio_tungstenite::tungstenite::Error),
    #[error("server rejected request: {} ({})", .0.code, .0.message)]
    Rejected(ErrorPayload),
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("connection closed")]
    Closed,
}

/// `POST {http_base}/sessions`.
pub async fn create_session(http_base: &str, category: Option<Category>) -> Result<String, ClientError> {
    let resp: CreateSessionResponse = reqwest::Client::new()
        .post(format!("{}/sessions", http_base.trim_end_matches('/')))
        .json(&CreateSessionRequest { category })
        .send()
        .await?
        .error_for_status()?
        .json()
        .await?;
    Ok(resp.session_id)
}

/// `ws://host:port` for an `http://host:port` base.
pub fn ws_base(http_base: &str) -> String {
    let base = http_base.trim_end_matches('/');
    match base.split_once("://") {
        Some(("https", rest)) => format!("wss://{rest}"),
        Some((_, rest)) => format!("ws://{rest}"),
        None => format!("ws://{base}"),
    }
}

pub struct WsClient {
    stream: WebSocketStream<MaybeTlsStream<TcpStream>>,
    seq: u64,
}

impl std::fmt::Debug for WsClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WsClient").field("seq", &self.seq).finish_non_exhaustive()
    }
}

impl WsClient {
    /// Opens `/ws?session=..[&role=..&name=..]`. With a role, the server
    /// joins immediately.
    pub async fn connect(
        ws_base: &str,
        session: &str,
        role: Option<Speaker>,
        name: Option<&str>,
    ) -> Result<Self, ClientError> {
        let mut url = reqwest::Url::parse(&format!("{}/ws", ws_base.trim_end_matches('/')))
            .map_err(|e| ClientError::Protocol(format!("bad url `{ws_base}`: {e}")))?;
        {
            let mut q = url.query_pairs_mut();
            q.append_pair("session", session);
            if let Some(role) = role {
                q.append_pair("role", role.as_str());
            }
            if let Some(name) = name {
                q.append_pair("name", name);
            }
        }
        let (stream, _) = connect_async(url.as_str()).await?;
        Ok(WsClient { stream, seq: 0 })
    }

    /// Connects with a role and waits for `joined`.
    pub async fn join(ws_base: &str, session: &str, role: Speaker, name: &str) -> Result<Self, ClientError> {
        let mut c = Self::connect(ws_base, session, Some(role), Some(name)).await?;
        loop {
            let f = c.recv().await?;
            match f.kind {
                FrameType::Joined => return Ok(c),
                FrameType::Error => return Err(rejected(&f)),
                _ => {}
            }
        }
    }

    pub async fn send<T: Serialize>(&mut self, kind: FrameType, payload: &T) -> Result<(), ClientError> {
        self.seq += 1;
        let frame = Frame::new(kind, self.seq, payload);
        self.stream.send(Message::Text(frame.to_text().into())).await?;
        Ok(())
    }

    pub async fn send_raw(&mut self, text: &str) -> Result<(), ClientError> {
        self.stream.send(Message::Text(text.into())).await?;
        Ok(())
    }

    pub async fn recv(&mut self) -> Result<Frame, ClientError> {
        loop {
            match self.stream.next().await {
                Some(Ok(Message::Text(t))) => {
                    return serde_json::from_str(t.as_str()).map_err(|e| ClientError::Protocol(e.to_string()))
                }
                Some(Ok(Message::Close(_))) | None => return Err(ClientError::Closed),
                Some(Ok(_)) => continue,
                Some(Err(e)) => return Err(e.into()),
            }
        }
    }

    /// `Ok(None)` on timeout.
    pub async fn recv_timeout(&mut self, wait: Duration) -> Result<Option<Frame>, ClientError> {
        match tokio::time::timeout(wait, self.recv()).await {
            Ok(r) => r.map(Some),
            Err(_) => Ok(None),
        }
    }

    /// Skips frames until one of `kind` arrives.
    pub async fn recv_kind(&mut self, kind: FrameType, wait: Duration) -> Result<Option<Frame>, ClientError> {
        let deadline = tokio::time::Instant::now() + wait;
        loop {
            let left = deadline.saturating_duration_since(tokio::time::Instant::now());
            match self.recv_timeout(left).await? {
                Some(f) if f.kind == kind => return Ok(Some(f)),
                Some(_) => continue,
                None => return Ok(None),
            }
        }
    }

    pub async fn close(mut self) {
        let _ = self.stream.close(None).await;
    }
}

pub(crate) fn rejected(frame: &Frame) -> ClientError {
    match frame.payload_as::<ErrorPayload>() {
        Ok(p) => ClientError::Rejected(p),
        Err(e) => ClientError::Protocol(e.to_string()),
    }
}
