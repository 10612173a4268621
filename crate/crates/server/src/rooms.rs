//! Room registry and the per-room task that owns each [`Room`].

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use mindmap_core::gamification::Millis;
use mindmap_core::room::{Audience, Envelope, Room, RoomOptions};
use mindmap_core::{ClientMessage, RejectReason, ServerMessage, UserId, WorkspaceState};
use serde_json::json;
use tokio::sync::{mpsc, oneshot};

use crate::config::{load_clipboard, valid_room_id, RoomConfig, ServerConfig};
use crate::metrics::MetricsLog;
use crate::persist::{self, Loaded};

/// Housekeeping period of each room task.
pub const TICK: Duration = Duration::from_millis(25);

pub type Outbox = mpsc::UnboundedSender<ServerMessage>;

/// A joined member as seen by its connection.
#[derive(Debug)]
pub struct Joined {
    pub user: UserId,
    pub conn: u64,
}

enum Command {
    Join {
        display_name: String,
        resume_from_seq: Option<u64>,
        user_id: Option<UserId>,
        outbox: Outbox,
        reply: oneshot::Sender<Joined>,
    },
    Message {
        user: UserId,
        conn: u64,
        msg: ClientMessage,
    },
    Leave {
        user: UserId,
        conn: u64,
    },
    Snapshot {
        reply: oneshot::Sender<Vec<u8>>,
    },
    Save {
        reply: oneshot::Sender<std::io::Result<()>>,
    },
    Saved {
        seq: u64,
        result: std::io::Result<()>,
    },
    Shutdown {
        reply: oneshot::Sender<()>,
    },
}

#[derive(Debug, Clone)]
pub struct RoomHandle {
    id: String,
    tx: mpsc::UnboundedSender<Command>,
}

#[derive(Debug, thiserror::Error)]
#[error("room {0} has shut down")]
pub struct RoomGone(pub String);

impl RoomHandle {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub async fn join(
        &self,
        display_name: String,
        resume_from_seq: Option<u64>,
        user_id: Option<UserId>,
        outbox: Outbox,
    ) -> Result<Joined, RoomGone> {
        let (reply, rx) = oneshot::channel();
        self.send(Command::Join {
            display_name,
            resume_from_seq,
            user_id,
            outbox,
            reply,
        })?;
        rx.await.map_err(|_| self.gone())
    }

    pub fn message(&self, joined: &Joined, msg: ClientMessage) -> Result<(), RoomGone> {
        self.send(Command::Message {
            user: joined.user,
            conn: joined.conn,
            msg,
        })
    }

    pub fn leave(&self, joined: &Joined) {
        let _ = self.send(Command::Leave {
            user: joined.user,
            conn: joined.conn,
        });
    }

    /// Canonical bytes of the current state.
    pub async fn snapshot(&self) -> Result<Vec<u8>, RoomGone> {
        let (reply, rx) = oneshot::channel();
        self.send(Command::Snapshot { reply })?;
        rx.await.map_err(|_| self.gone())
    }

    /// Write the snapshot file now.
    pub async fn save(&self) -> Result<std::io::Result<()>, RoomGone> {
        let (reply, rx) = oneshot::channel();
        self.send(Command::Save { reply })?;
        rx.await.map_err(|_| self.gone())
    }

    async fn shutdown(&self) {
        let (reply, rx) = oneshot::channel();
        if self.send(Command::Shutdown { reply }).is_ok() {
            let _ = rx.await;
        }
    }

    fn send(&self, c: Command) -> Result<(), RoomGone> {
        self.tx.send(c).map_err(|_| self.gone())
    }

    fn gone(&self) -> RoomGone {
        RoomGone(self.id.clone())
    }
}

struct Member {
    conn: u64,
    outbox: Outbox,
}

struct RoomTask {
    id: String,
    room: Room,
    members: HashMap<UserId, Member>,
    snapshot_path: PathBuf,
    autosave: Duration,
    last_autosave: Instant,
    /// Sequence number of the last snapshot on disk; held while writing.
    written: Arc<Mutex<Option<u64>>>,
    saving: bool,
    metrics: MetricsLog,
    clock: Instant,
    next_conn: u64,
    tx: mpsc::UnboundedSender<Command>,
}

impl RoomTask {
    fn now(&self) -> Millis {
        self.clock.elapsed().as_millis() as Millis
    }

    fn dispatch(&mut self, envelopes: Vec<Envelope>, now: Millis) {
        for env in envelopes {
            match &env.msg {
                ServerMessage::ScoreUpdate { scoreboard } => {
                    self.metrics.record(json!({"at": now, "event": "scoreboard", "scoreboard": scoreboard}))
                }
                ServerMessage::BadgeChange { new_holder } => {
                    self.metrics.record(json!({"at": now, "event": "badge", "holder": new_holder}))
                }
                ServerMessage::OpBroadcast { op } => self.metrics.record(json!({
                    "at": now,
                    "event": "op",
                    "serverSeq": op.server_seq,
                    "actor": op.actor,
                    "kind": op.payload.kind(),
                })),
                ServerMessage::OpRejected { op_id, reason } => self.metrics.record(json!({
                    "at": now,
                    "event": "rejected",
                    "actor": op_id.client_id,
                    "reason": reason,
                })),
                _ => {}
            }
            match env.to {
                Audience::User(u) => {
                    if let Some(m) = self.members.get(&u) {
                        let _ = m.outbox.send(env.msg);
                    }
                }
                Audience::All => {
                    for m in self.members.values() {
                        let _ = m.outbox.send(env.msg.clone());
                    }
                }
            }
        }
    }

    fn start_save(&mut self) {
        let seq = self.room.state().applied_seq;
        if self.saving || *self.written.lock().expect("save lock") == Some(seq) {
            return;
        }
        self.saving = true;
        let bytes = self.room.snapshot_bytes();
        let path = self.snapshot_path.clone();
        let written = self.written.clone();
        let tx = self.tx.clone();
        tokio::task::spawn_blocking(move || {
            let result = write_if_newer(&written, &path, seq, &bytes);
            let _ = tx.send(Command::Saved { seq, result });
        });
    }

    fn save_now(&mut self) -> std::io::Result<()> {
        let seq = self.room.state().applied_seq;
        write_if_newer(&self.written, &self.snapshot_path, seq, &self.room.snapshot_bytes())
    }

    async fn run(mut self, mut rx: mpsc::UnboundedReceiver<Command>) {
        let mut tick = tokio::time::interval(TICK);
        tick.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
        loop {
            tokio::select! {
                cmd = rx.recv() => {
                    let Some(cmd) = cmd else { break };
                    if self.command(cmd) {
                        break;
                    }
                }
                _ = tick.tick() => self.tick(),
            }
        }
    }

    /// Returns true when the task should stop.
    fn command(&mut self, cmd: Command) -> bool {
        let now = self.now();
        match cmd {
            Command::Join {
                display_name,
                resume_from_seq,
                user_id,
                outbox,
                reply,
            } => {
                let (user, envelopes) = self.room.join(&display_name, resume_from_seq, user_id, now);
                self.next_conn += 1;
                let conn = self.next_conn;
                self.members.insert(user, Member { conn, outbox });
                self.metrics.record(json!({"at": now, "event": "join", "user": user, "name": display_name}));
                tracing::info!(room = %self.id, user = user.0, "joined");
                self.dispatch(envelopes, now);
                let _ = reply.send(Joined { user, conn });
            }
            Command::Message { user, conn, msg } => {
                if self.members.get(&user).is_some_and(|m| m.conn == conn) {
                    if let ClientMessage::Speaking { speaking } = msg {
                        self.metrics.record(json!({"at": now, "event": "speaking", "user": user, "speaking": speaking}));
                    }
                    let envelopes = self.room.handle(user, msg, now);
                    self.dispatch(envelopes, now);
                }
            }
            Command::Leave { user, conn } => {
                if self.members.get(&user).is_some_and(|m| m.conn == conn) {
                    self.drop_member(user, now);
                }
            }
            Command::Snapshot { reply } => {
                let _ = reply.send(self.room.snapshot_bytes());
            }
            Command::Save { reply } => {
                let _ = reply.send(self.save_now());
            }
            Command::Saved { seq, result } => {
                self.saving = false;
                match result {
                    Ok(()) => tracing::debug!(room = %self.id, seq, "autosaved"),
                    Err(e) => tracing::warn!(room = %self.id, error = %e, "autosave failed; retrying next interval"),
                }
            }
            Command::Shutdown { reply } => {
                if let Err(e) = self.save_now() {
                    tracing::error!(room = %self.id, error = %e, "final save failed");
                }
                self.members.clear();
                let _ = reply.send(());
                return true;
            }
        }
        false
    }

    fn drop_member(&mut self, user: UserId, now: Millis) {
        self.members.remove(&user);
        let envelopes = self.room.leave(user, now);
        self.metrics.record(json!({"at": now, "event": "leave", "user": user}));
        tracing::info!(room = %self.id, user = user.0, "left");
        self.dispatch(envelopes, now);
        if self.members.is_empty() {
            self.start_save();
        }
    }

    fn tick(&mut self) {
        let now = self.now();
        let outcome = self.room.tick(now);
        for user in &outcome.reaped {
            // Dropping the outbox ends the connection's writer.
            self.members.remove(user);
            self.metrics.record(json!({"at": now, "event": "reaped", "user": user}));
            tracing::info!(room = %self.id, user = user.0, "reaped after heartbeat timeout");
        }
        self.dispatch(outcome.envelopes, now);
        if !outcome.reaped.is_empty() && self.members.is_empty() {
            self.start_save();
        }
        if self.last_autosave.elapsed() >= self.autosave {
            self.last_autosave = Instant::now();
            self.start_save();
        }
    }
}

/// Why a room could not be opened for a join.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Refusal {
    pub reason: RejectReason,
    pub detail: String,
}

/// All rooms of one server process.
pub struct Registry {
    config: ServerConfig,
    data_dir: PathBuf,
    started: Instant,
    room_options: RoomOptions,
    metrics: bool,
    rooms: Mutex<BTreeMap<String, RoomHandle>>,
}

impl Registry {
    pub fn new(config: ServerConfig, data_dir: PathBuf) -> Arc<Self> {
        Self::with_options(config, data_dir, RoomOptions::default(), true)
    }

    /// `room_options` supplies the timing knobs; gamification is taken from
    /// each room's config.
    pub fn with_options(
        config: ServerConfig,
        data_dir: PathBuf,
        room_options: RoomOptions,
        metrics: bool,
    ) -> Arc<Self> {
        Arc::new(Self {
            config,
            data_dir,
            started: Instant::now(),
            room_options,
            metrics,
            rooms: Mutex::new(BTreeMap::new()),
        })
    }

    pub fn uptime(&self) -> Duration {
        self.started.elapsed()
    }

    pub fn room_count(&self) -> usize {
        self.rooms.lock().expect("registry lock").len()
    }

    pub fn room_ids(&self) -> Vec<String> {
        self.rooms.lock().expect("registry lock").keys().cloned().collect()
    }

    fn persistence_dir(&self, config: &RoomConfig) -> PathBuf {
        config.persistence_directory.clone().unwrap_or_else(|| self.data_dir.clone())
    }

    /// Open every configured room and every room with a snapshot in the
    /// data directory.
    pub fn load_existing(&self) -> std::io::Result<Vec<String>> {
        let mut ids: Vec<String> = self.config.rooms.keys().cloned().collect();
        ids.extend(persist::scan(&self.data_dir)?);
        ids.sort();
        ids.dedup();
        for id in &ids {
            if let Err(r) = self.room(id) {
                tracing::warn!(room = %id, detail = %r.detail, "not loaded");
            }
        }
        Ok(ids)
    }

    /// Handle for `room_id`, creating the room on first use.
    pub fn room(&self, room_id: &str) -> Result<RoomHandle, Refusal> {
        if !valid_room_id(room_id) {
            return Err(Refusal {
                reason: RejectReason::UnknownRoom,
                detail: format!("invalid room id {room_id:?}"),
            });
        }
        let mut rooms = self.rooms.lock().expect("registry lock");
        if let Some(h) = rooms.get(room_id) {
            if !h.tx.is_closed() {
                return Ok(h.clone());
            }
        }
        let Some(config) = self.config.room(room_id) else {
            return Err(Refusal {
                reason: RejectReason::UnknownRoom,
                detail: format!("room {room_id} is not configured"),
            });
        };
        let handle = self.open(&config);
        rooms.insert(room_id.to_string(), handle.clone());
        Ok(handle)
    }

    fn open(&self, config: &RoomConfig) -> RoomHandle {
        let dir = self.persistence_dir(config);
        let snapshot_path = persist::snapshot_path(&dir, &config.room_id);
        let state = match persist::load(&snapshot_path) {
            Ok(Loaded::Restored(state)) => {
                tracing::info!(room = %config.room_id, seq = state.applied_seq, "restored snapshot");
                state
            }
            Ok(Loaded::Missing) => fresh_state(config),
            Ok(Loaded::Corrupt { error, moved_to }) => {
                tracing::error!(
                    room = %config.room_id,
                    error = %error,
                    moved_to = %moved_to.display(),
                    "corrupt snapshot preserved; starting empty"
                );
                fresh_state(config)
            }
            Err(e) => {
                tracing::error!(room = %config.room_id, error = %e, "cannot read snapshot; starting empty");
                fresh_state(config)
            }
        };
        let written = snapshot_path.exists().then_some(state.applied_seq);
        let options = RoomOptions {
            gamification: config.gamification_enabled,
            ..self.room_options.clone()
        };
        let metrics = if self.metrics {
            MetricsLog::open(&dir, &config.room_id).unwrap_or_else(|e| {
                tracing::warn!(room = %config.room_id, error = %e, "metrics log disabled");
                MetricsLog::disabled()
            })
        } else {
            MetricsLog::disabled()
        };
        let (tx, rx) = mpsc::unbounded_channel();
        let task = RoomTask {
            id: config.room_id.clone(),
            room: Room::new(options, state, 0),
            members: HashMap::new(),
            snapshot_path,
            autosave: Duration::from_secs(config.autosave_interval_seconds),
            last_autosave: Instant::now(),
            written: Arc::new(Mutex::new(written)),
            saving: false,
            metrics,
            clock: Instant::now(),
            next_conn: 0,
            tx: tx.clone(),
        };
        tokio::spawn(task.run(rx));
        RoomHandle {
            id: config.room_id.clone(),
            tx,
        }
    }

    /// Save every room and stop its task.
    pub async fn shutdown(&self) {
        let handles: Vec<RoomHandle> = self.rooms.lock().expect("registry lock").values().cloned().collect();
        for h in handles {
            h.shutdown().await;
        }
    }
}

/// Writes run one at a time and never replace a newer snapshot.
fn write_if_newer(
    written: &Mutex<Option<u64>>,
    path: &std::path::Path,
    seq: u64,
    bytes: &[u8],
) -> std::io::Result<()> {
    let mut last = written.lock().expect("save lock");
    if last.is_some_and(|s| s >= seq) {
        return Ok(());
    }
    persist::write_atomic(path, bytes)?;
    *last = Some(seq);
    Ok(())
}

fn fresh_state(config: &RoomConfig) -> WorkspaceState {
    let clipboard = match &config.clipboard_source {
        Some(path) => load_clipboard(path).unwrap_or_else(|e| {
            tracing::error!(room = %config.room_id, error = %e, "clipboard not loaded");
            Vec::new()
        }),
        None => Vec::new(),
    };
    WorkspaceState::new(clipboard)
}
