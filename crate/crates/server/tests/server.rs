use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use mindmap_core::replica::Replica;
use mindmap_core::room::RoomOptions;
use mindmap_core::snapshot::restore_bytes;
use mindmap_core::*;
use mindmap_server::{serve, Registry, ServerConfig};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::TcpStream;
use tokio::sync::oneshot;
use tokio_tungstenite::tungstenite::protocol::frame::coding::CloseCode;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};

type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;

struct Server {
    addr: SocketAddr,
    registry: Arc<Registry>,
    stop: Option<oneshot::Sender<()>>,
    done: tokio::task::JoinHandle<()>,
}

impl Server {
    async fn start(config: ServerConfig, dir: &Path, options: RoomOptions) -> Self {
        let registry = Registry::with_options(config, dir.to_path_buf(), options, true);
        registry.load_existing().unwrap();
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let addr = listener.local_addr().unwrap();
        let (stop, rx) = oneshot::channel::<()>();
        let reg = registry.clone();
        let done = tokio::spawn(async move {
            serve(listener, reg, async {
                let _ = rx.await;
            })
            .await
            .unwrap();
        });
        Self { addr, registry, stop: Some(stop), done }
    }

    async fn default(dir: &Path) -> Self {
        Self::start(ServerConfig::default(), dir, RoomOptions::default()).await
    }

    async fn stop(mut self) {
        let _ = self.stop.take().unwrap().send(());
        tokio::time::timeout(Duration::from_secs(10), self.done).await.unwrap().unwrap();
    }

    async fn snapshot(&self, room: &str) -> Vec<u8> {
        self.registry.room(room).unwrap().snapshot().await.unwrap()
    }
}

async fn connect(addr: SocketAddr, room: &str) -> Ws {
    let (ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/ws/{room}")).await.unwrap();
    ws
}

async fn send(ws: &mut Ws, msg: &ClientMessage) {
    ws.send(Message::text(msg.to_json())).await.unwrap();
}

async fn recv(ws: &mut Ws) -> ServerMessage {
    loop {
        let frame = tokio::time::timeout(Duration::from_secs(5), ws.next())
            .await
            .expect("timed out waiting for a message")
            .expect("stream ended")
            .unwrap();
        if let Message::Text(t) = frame {
            return ServerMessage::from_json(&t).unwrap();
        }
    }
}

async fn recv_until(ws: &mut Ws, pred: impl Fn(&ServerMessage) -> bool) -> ServerMessage {
    loop {
        let m = recv(ws).await;
        if pred(&m) {
            return m;
        }
    }
}

fn hello(room: &str, name: &str) -> ClientMessage {
    ClientMessage::Hello {
        room: room.into(),
        display_name: name.into(),
        resume_from_seq: None,
        user_id: None,
    }
}

/// Connect, say hello and fold the welcome into a fresh replica.
async fn join(addr: SocketAddr, room: &str, name: &str) -> (Ws, Replica) {
    let mut ws = connect(addr, room).await;
    send(&mut ws, &hello(room, name)).await;
    let mut rep = Replica::new();
    let welcome = recv(&mut ws).await;
    rep.handle(&welcome).unwrap();
    (ws, rep)
}

fn note(i: usize) -> OperationPayload {
    OperationPayload::CreateNote {
        text: format!("idea {i}"),
        color: NoteColor::new((i % 8) as u8).unwrap(),
        position: Vec2::new(i as f64 * 150.0, 0.0),
        from_clipboard: None,
    }
}

async fn submit(ws: &mut Ws, rep: &mut Replica, payload: OperationPayload) -> ServerMessage {
    let op = rep.submit(payload, 0).unwrap();
    send(ws, &ClientMessage::SubmitOp { op }).await;
    loop {
        let m = recv(ws).await;
        rep.handle(&m).unwrap();
        if matches!(m, ServerMessage::OpAccepted { .. } | ServerMessage::OpRejected { .. }) {
            return m;
        }
    }
}

/// Read until the replica has reached `seq`.
async fn drain_to(ws: &mut Ws, rep: &mut Replica, seq: u64) {
    while rep.applied_seq() < seq {
        let m = recv(ws).await;
        rep.handle(&m).unwrap();
    }
}

async fn close_code(ws: &mut Ws) -> (CloseCode, String) {
    loop {
        let frame = tokio::time::timeout(Duration::from_secs(5), ws.next()).await.unwrap();
        match frame {
            Some(Ok(Message::Close(Some(f)))) => return (f.code, f.reason.to_string()),
            Some(Ok(_)) => continue,
            other => panic!("expected a close frame, got {other:?}"),
        }
    }
}

async fn http_get(addr: SocketAddr, path: &str) -> String {
    let mut s = TcpStream::connect(addr).await.unwrap();
    s.write_all(format!("GET {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n").as_bytes())
        .await
        .unwrap();
    let mut out = String::new();
    s.read_to_string(&mut out).await.unwrap();
    out
}

#[tokio::test]
async fn health_reports_rooms() {
    let dir = tempfile::tempdir().unwrap();
    let server = Server::default(dir.path()).await;
    let (_ws, _) = join(server.addr, "alpha", "Ana").await;
    let body = http_get(server.addr, "/healthz").await;
    let json = body.split("\r\n\r\n").nth(1).unwrap();
    let v: serde_json::Value = serde_json::from_str(json).unwrap();
    assert_eq!(v["status"], "ok");
    assert_eq!(v["rooms"], 1);
    assert!(v["uptimeSeconds"].as_f64().unwrap() >= 0.0);
    server.stop().await;
}

#[tokio::test]
async fn first_join_and_distinct_colours() {
    let dir = tempfile::tempdir().unwrap();
    let server = Server::default(dir.path()).await;
    let mut colours = Vec::new();
    let mut sockets = Vec::new();
    for i in 0..4 {
        let mut ws = connect(server.addr, "room").await;
        send(&mut ws, &hello("room", "Same")).await;
        match recv(&mut ws).await {
            ServerMessage::Welcome { snapshot, assigned_color, display_name, .. } => {
                assert_eq!(snapshot.applied_seq, 0);
                colours.push(assigned_color);
                let expected = if i == 0 { "Same".to_string() } else { format!("Same ({})", i + 1) };
                assert_eq!(display_name, expected);
            }
            m => panic!("{m:?}"),
        }
        sockets.push(ws);
    }
    assert_eq!(colours, AvatarColor::ALL[..4].to_vec());
    server.stop().await;
}

#[tokio::test]
async fn malformed_hello_closes_with_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let server = Server::default(dir.path()).await;

    let mut ws = connect(server.addr, "room").await;
    ws.send(Message::text("{\"type\":\"hello\"}")).await.unwrap();
    let (code, reason) = close_code(&mut ws).await;
    assert_eq!(code, CloseCode::Policy);
    assert!(reason.contains("malformed hello"), "{reason}");

    let mut ws = connect(server.addr, "room").await;
    send(&mut ws, &ClientMessage::Ping).await;
    let (_, reason) = close_code(&mut ws).await;
    assert!(reason.contains("must be hello"), "{reason}");

    let mut ws = connect(server.addr, "room").await;
    send(&mut ws, &hello("other", "x")).await;
    let (_, reason) = close_code(&mut ws).await;
    assert!(reason.contains("other"), "{reason}");

    let mut ws = connect(server.addr, "bad.name").await;
    send(&mut ws, &hello("bad.name", "x")).await;
    assert!(matches!(
        recv(&mut ws).await,
        ServerMessage::JoinRejected { reason: RejectReason::UnknownRoom, .. }
    ));
    server.stop().await;
}

#[tokio::test]
async fn unknown_room_rejected_without_auto_create() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ServerConfig::parse(
        "[defaults]\nauto_create = false\n[[rooms]]\nroom_id = \"lab\"\n",
        Path::new("rooms.toml"),
    )
    .unwrap();
    let server = Server::start(cfg, dir.path(), RoomOptions::default()).await;
    assert_eq!(server.registry.room_count(), 1);
    let mut ws = connect(server.addr, "elsewhere").await;
    send(&mut ws, &hello("elsewhere", "x")).await;
    assert!(matches!(
        recv(&mut ws).await,
        ServerMessage::JoinRejected { reason: RejectReason::UnknownRoom, .. }
    ));
    let (_ws, _) = join(server.addr, "lab", "ok").await;
    server.stop().await;
}

#[tokio::test]
async fn clients_converge_with_server() {
    let dir = tempfile::tempdir().unwrap();
    let server = Server::default(dir.path()).await;
    let (mut a, mut ra) = join(server.addr, "r", "A").await;
    let (mut b, mut rb) = join(server.addr, "r", "B").await;
    for i in 0..10 {
        submit(&mut a, &mut ra, note(i)).await;
    }
    let me = ra.user().unwrap();
    let n = |i| NoteId::new(me, i);
    submit(&mut b, &mut rb, OperationPayload::CreateLink { source: n(1), target: n(2) }).await;
    let dup = submit(&mut a, &mut ra, OperationPayload::CreateLink { source: n(2), target: n(1) }).await;
    assert!(matches!(dup, ServerMessage::OpRejected { reason: RejectReason::DuplicateLink, .. }));
    submit(&mut a, &mut ra, OperationPayload::DeleteNote { note: n(3) }).await;
    let gone = submit(&mut b, &mut rb, OperationPayload::MoveNote { note: n(3), position: Vec2::ZERO }).await;
    assert!(matches!(gone, ServerMessage::OpRejected { reason: RejectReason::UnknownTarget, .. }));

    drain_to(&mut a, &mut ra, 12).await;
    drain_to(&mut b, &mut rb, 12).await;
    let server_bytes = server.snapshot("r").await;
    assert_eq!(ra.snapshot_bytes(), server_bytes);
    assert_eq!(rb.snapshot_bytes(), server_bytes);

    send(&mut a, &ClientMessage::Ping).await;
    recv_until(&mut a, |m| matches!(m, ServerMessage::Pong)).await;
    server.stop().await;
}

#[tokio::test]
async fn reconnect_receives_missing_suffix() {
    let dir = tempfile::tempdir().unwrap();
    let server = Server::default(dir.path()).await;
    let (mut a, mut ra) = join(server.addr, "r", "A").await;
    let (mut b, mut rb) = join(server.addr, "r", "B").await;
    submit(&mut b, &mut rb, note(0)).await;
    drain_to(&mut a, &mut ra, 1).await;
    let me = ra.user().unwrap();
    a.close(None).await.unwrap();
    for i in 1..4 {
        submit(&mut b, &mut rb, note(i)).await;
    }
    let mut a = connect(server.addr, "r").await;
    send(
        &mut a,
        &ClientMessage::Hello {
            room: "r".into(),
            display_name: "A".into(),
            resume_from_seq: Some(1),
            user_id: Some(me),
        },
    )
    .await;
    let m = recv(&mut a).await;
    match &m {
        ServerMessage::OpReplay { your_user_id, ops, .. } => {
            assert_eq!(*your_user_id, me);
            assert_eq!(ops.iter().map(|o| o.server_seq.unwrap()).collect::<Vec<_>>(), vec![2, 3, 4]);
        }
        m => panic!("{m:?}"),
    }
    ra.handle(&m).unwrap();
    assert_eq!(ra.snapshot_bytes(), server.snapshot("r").await);
    server.stop().await;
}

#[tokio::test]
async fn save_restart_restores_identical_state() {
    let dir = tempfile::tempdir().unwrap();
    let server = Server::default(dir.path()).await;
    let (mut a, mut ra) = join(server.addr, "keep", "A").await;
    for i in 0..5 {
        submit(&mut a, &mut ra, note(i)).await;
    }
    submit(
        &mut a,
        &mut ra,
        OperationPayload::CreatePanel { bounds: Rect::from_coords(-500.0, -500.0, 500.0, 500.0) },
    )
    .await;
    let before = server.snapshot("keep").await;
    drop(a);
    server.stop().await;

    let path = dir.path().join("keep.snapshot");
    assert_eq!(std::fs::read(&path).unwrap(), before);

    let server = Server::default(dir.path()).await;
    assert_eq!(server.registry.room_ids(), vec!["keep".to_string()]);
    assert_eq!(server.snapshot("keep").await, before);
    // Users created before the restart keep their ids out of reach.
    let (_b, rb) = join(server.addr, "keep", "B").await;
    assert!(rb.user().unwrap() > ra.user().unwrap());
    server.stop().await;
}

#[tokio::test]
async fn corrupt_snapshot_degrades_to_empty_room() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("broken.snapshot"), b"{\"format\":1,").unwrap();
    let server = Server::default(dir.path()).await;
    let (_ws, rep) = join(server.addr, "broken", "A").await;
    assert_eq!(rep.state().applied_seq, 0);
    assert!(rep.state().notes.is_empty());
    assert_eq!(std::fs::read(dir.path().join("broken.snapshot.bad")).unwrap(), b"{\"format\":1,");
    server.stop().await;
}

#[tokio::test]
async fn autosave_writes_consistent_documents() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ServerConfig::parse("[[rooms]]\nroom_id = \"auto\"\nautosave_interval_seconds = 1\n", Path::new("c.toml")).unwrap();
    let server = Server::start(cfg, dir.path(), RoomOptions::default()).await;
    let (mut a, mut ra) = join(server.addr, "auto", "A").await;
    let (mut b, mut rb) = join(server.addr, "auto", "B").await;
    let path = dir.path().join("auto.snapshot");
    let deadline = tokio::time::Instant::now() + Duration::from_millis(2500);
    let mut i = 0;
    let mut seen = 0;
    while tokio::time::Instant::now() < deadline {
        if i % 2 == 0 {
            submit(&mut a, &mut ra, note(i)).await;
        } else {
            submit(&mut b, &mut rb, note(i)).await;
        }
        i += 1;
        if let Ok(bytes) = std::fs::read(&path) {
            let state = restore_bytes(&bytes).expect("saved document validates");
            let creates = state.notes.len() as u64;
            assert_eq!(state.applied_seq, creates, "appliedSeq matches content");
            seen += 1;
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    assert!(seen > 0, "autosave never ran");
    server.stop().await;
}

#[tokio::test]
async fn write_failure_does_not_stop_service() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("not-a-dir");
    std::fs::write(&blocker, b"").unwrap();
    let cfg = ServerConfig::parse(
        &format!(
            "[[rooms]]\nroom_id = \"r\"\nautosave_interval_seconds = 1\npersistence_directory = {:?}\n",
            blocker.to_str().unwrap()
        ),
        Path::new("c.toml"),
    )
    .unwrap();
    let server = Server::start(cfg, dir.path(), RoomOptions::default()).await;
    let (mut a, mut ra) = join(server.addr, "r", "A").await;
    submit(&mut a, &mut ra, note(0)).await;
    assert!(server.registry.room("r").unwrap().save().await.unwrap().is_err());
    tokio::time::sleep(Duration::from_millis(1200)).await;
    let m = submit(&mut a, &mut ra, note(1)).await;
    assert!(matches!(m, ServerMessage::OpAccepted { server_seq: 2, .. }));
    server.stop().await;
}

#[tokio::test]
async fn silent_clients_are_reaped() {
    let dir = tempfile::tempdir().unwrap();
    let options = RoomOptions { heartbeat_timeout_ms: 300, ..RoomOptions::default() };
    let server = Server::start(ServerConfig::default(), dir.path(), options).await;
    let (mut quiet, _) = join(server.addr, "r", "Quiet").await;
    let (mut talker, _) = join(server.addr, "r", "Talker").await;
    for _ in 0..8 {
        tokio::time::sleep(Duration::from_millis(100)).await;
        send(&mut talker, &ClientMessage::Ping).await;
    }
    close_code(&mut quiet).await;
    let roster = recv_until(&mut talker, |m| {
        matches!(m, ServerMessage::PresenceBroadcast { users } if users.len() == 1)
    })
    .await;
    assert!(matches!(roster, ServerMessage::PresenceBroadcast { users } if users[0].name == "Talker"));
    server.stop().await;
}

#[tokio::test]
async fn metrics_log_records_session() {
    let dir = tempfile::tempdir().unwrap();
    let server = Server::default(dir.path()).await;
    let (mut a, mut ra) = join(server.addr, "m", "A").await;
    submit(&mut a, &mut ra, note(0)).await;
    send(&mut a, &ClientMessage::Speaking { speaking: true }).await;
    send(&mut a, &ClientMessage::Ping).await;
    recv_until(&mut a, |m| matches!(m, ServerMessage::Pong)).await;
    drop(a);
    server.stop().await;
    let path = dir.path().join("m.metrics.jsonl");
    let mut events = Vec::new();
    for _ in 0..50 {
        let text = std::fs::read_to_string(&path).unwrap_or_default();
        events = text
            .lines()
            .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["event"].as_str().unwrap().to_string())
            .collect();
        if events.iter().any(|e| e == "speaking") {
            break;
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    for e in ["join", "op", "scoreboard", "speaking"] {
        assert!(events.iter().any(|x| x == e), "missing {e} in {events:?}");
    }
}
