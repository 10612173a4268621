//! HTTP routes: the websocket endpoint and the health check.

use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::{CloseFrame, Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::response::Response;
use axum::routing::get;
use axum::{Json, Router};
use futures_util::{SinkExt, StreamExt};
use mindmap_core::room::join_rejection;
use mindmap_core::{ClientMessage, ServerMessage};
use serde_json::{json, Value};
use tokio::sync::mpsc;

use crate::rooms::Registry;

/// How long a fresh connection may take to send its hello.
pub const HELLO_TIMEOUT: Duration = Duration::from_secs(10);

/// Close codes used for diagnostics.
pub const CLOSE_POLICY: u16 = 1008;
pub const CLOSE_NORMAL: u16 = 1000;

pub fn router(registry: Arc<Registry>) -> Router {
    Router::new()
        .route("/ws/{room}", get(upgrade))
        .route("/healthz", get(health))
        .with_state(registry)
}

async fn health(State(registry): State<Arc<Registry>>) -> Json<Value> {
    Json(json!({
        "status": "ok",
        "rooms": registry.room_count(),
        "uptimeSeconds": registry.uptime().as_secs_f64(),
    }))
}

async fn upgrade(
    ws: WebSocketUpgrade,
    Path(room): Path<String>,
    State(registry): State<Arc<Registry>>,
) -> Response {
    ws.on_upgrade(move |socket| connection(socket, registry, room))
}

async fn close(mut socket: WebSocket, code: u16, mut reason: String) {
    tracing::debug!(code, %reason, "closing connection");
    // Close frames carry at most 123 bytes of reason.
    if reason.len() > 123 {
        let mut cut = 120;
        while !reason.is_char_boundary(cut) {
            cut -= 1;
        }
        reason.truncate(cut);
        reason.push_str("...");
    }
    let _ = socket
        .send(Message::Close(Some(CloseFrame {
            code,
            reason: reason.into(),
        })))
        .await;
}

fn text(msg: &ServerMessage) -> Message {
    Message::Text(msg.to_json().into())
}

async fn connection(mut socket: WebSocket, registry: Arc<Registry>, room_id: String) {
    let first = match tokio::time::timeout(HELLO_TIMEOUT, socket.recv()).await {
        Ok(Some(Ok(m))) => m,
        Ok(_) => return,
        Err(_) => return close(socket, CLOSE_POLICY, "no hello received".into()).await,
    };
    let Message::Text(first) = first else {
        return close(socket, CLOSE_POLICY, "expected a text hello frame".into()).await;
    };
    let (display_name, resume_from_seq, user_id) = match ClientMessage::from_json(&first) {
        Ok(ClientMessage::Hello {
            room,
            display_name,
            resume_from_seq,
            user_id,
        }) => {
            if room != room_id {
                let why = format!("hello names room {room:?} but the endpoint is {room_id:?}");
                return close(socket, CLOSE_POLICY, why).await;
            }
            (display_name, resume_from_seq, user_id)
        }
        Ok(_) => return close(socket, CLOSE_POLICY, "first message must be hello".into()).await,
        Err(e) => return close(socket, CLOSE_POLICY, format!("malformed hello: {e}")).await,
    };

    let handle = match registry.room(&room_id) {
        Ok(h) => h,
        Err(refusal) => {
            let _ = socket.send(text(&join_rejection(refusal.reason, refusal.detail.clone()))).await;
            return close(socket, CLOSE_POLICY, refusal.detail).await;
        }
    };
    let (outbox, mut inbox) = mpsc::unbounded_channel();
    let Ok(joined) = handle.join(display_name, resume_from_seq, user_id, outbox).await else {
        return close(socket, CLOSE_NORMAL, "room shut down".into()).await;
    };

    let (mut sink, mut stream) = socket.split();
    let writer = async {
        while let Some(msg) = inbox.recv().await {
            if sink.send(text(&msg)).await.is_err() {
                return;
            }
        }
        // The room dropped us (reaped or shutting down).
        let _ = sink
            .send(Message::Close(Some(CloseFrame {
                code: CLOSE_NORMAL,
                reason: "session ended".into(),
            })))
            .await;
    };
    let reader = async {
        while let Some(Ok(frame)) = stream.next().await {
            match frame {
                Message::Text(t) => match ClientMessage::from_json(&t) {
                    Ok(ClientMessage::Hello { .. }) => {
                        tracing::warn!(room = %room_id, user = joined.user.0, "repeated hello ignored");
                    }
                    Ok(msg) => {
                        if handle.message(&joined, msg).is_err() {
                            return;
                        }
                    }
                    Err(e) => {
                        tracing::warn!(room = %room_id, user = joined.user.0, error = %e, "malformed message ignored");
                    }
                },
                Message::Close(_) => return,
                _ => {}
            }
        }
    };
    tokio::select! {
        _ = writer => {}
        _ = reader => {}
    }
    handle.leave(&joined);
}
