//! Transport-independent room logic.
//!
//! A [`Room`] is the single logical writer for one shared workspace. It takes
//! client messages with an explicit timestamp and returns the server messages
//! to deliver, addressed to one member or to everyone. The network server and
//! the in-process simulator both drive it.

use std::collections::BTreeMap;

use crate::gamification::{Millis, ScoreConfig, ScoreEngine, ScoreEvent, Scoreboard};
use crate::geometry::{Rect, Vec2};
use crate::ids::UserId;
use crate::model::{AvatarColor, WorkspaceState};
use crate::op::{Operation, RejectReason, StateEvent};
use crate::protocol::{ClientMessage, PresenceState, ServerMessage};
use crate::sequencer::{CatchUp, Sequencer, Verdict, DEFAULT_RETENTION};
use crate::snapshot::{snapshot, to_canonical_bytes};

#[derive(Debug, Clone, PartialEq)]
pub struct RoomOptions {
    pub retention: usize,
    pub gamification: bool,
    pub scoring: ScoreConfig,
    /// Minimum spacing of presence broadcasts caused by one member.
    pub presence_interval_ms: Millis,
    /// Members silent for longer than this are reaped.
    pub heartbeat_timeout_ms: Millis,
    /// Spacing of periodic scoreboard refreshes.
    pub score_refresh_ms: Millis,
    /// Full integrity scan after every accepted op.
    pub checked: bool,
    /// Keep the complete scoring input log for replay.
    pub record_log: bool,
}

impl Default for RoomOptions {
    fn default() -> Self {
        Self {
            retention: DEFAULT_RETENTION,
            gamification: true,
            scoring: ScoreConfig::default(),
            presence_interval_ms: 50,
            heartbeat_timeout_ms: 15_000,
            score_refresh_ms: 2_000,
            checked: false,
            record_log: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Audience {
    User(UserId),
    All,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub to: Audience,
    pub msg: ServerMessage,
}

impl Envelope {
    fn to(user: UserId, msg: ServerMessage) -> Self {
        Self {
            to: Audience::User(user),
            msg,
        }
    }

    fn all(msg: ServerMessage) -> Self {
        Self {
            to: Audience::All,
            msg,
        }
    }
}

/// Everything that fed the score engine, in arrival order.
#[derive(Debug, Clone, PartialEq)]
pub enum ScoreInput {
    Join { user: UserId, at: Millis },
    Op { op: Operation, at: Millis },
    Speaking { user: UserId, speaking: bool, at: Millis },
}

#[derive(Debug, Clone)]
struct Member {
    presence: PresenceState,
    last_broadcast: Option<Millis>,
    dirty: bool,
}

#[derive(Debug, Clone)]
struct KnownUser {
    color: AvatarColor,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TickOutcome {
    pub envelopes: Vec<Envelope>,
    pub reaped: Vec<UserId>,
}

#[derive(Debug, Clone)]
pub struct Room {
    options: RoomOptions,
    seq: Sequencer,
    scores: Option<ScoreEngine>,
    members: BTreeMap<UserId, Member>,
    known: BTreeMap<UserId, KnownUser>,
    next_user: u32,
    last_score_refresh: Millis,
    initial: Option<WorkspaceState>,
    log: Vec<ScoreInput>,
    state_events: u64,
}

pub const DEFAULT_VIEWPORT: Rect = Rect::new(Vec2::new(-640.0, -400.0), Vec2::new(640.0, 400.0));

impl Room {
    pub fn new(options: RoomOptions, state: WorkspaceState, now: Millis) -> Self {
        let next_user = state
            .referenced_users()
            .last()
            .map_or(1, |u| u.0.saturating_add(1));
        let mut seq = Sequencer::new(state.clone(), options.retention);
        seq.set_checked(options.checked);
        Self {
            scores: options
                .gamification
                .then(|| ScoreEngine::new(options.scoring, now)),
            initial: options.record_log.then_some(state),
            options,
            seq,
            members: BTreeMap::new(),
            known: BTreeMap::new(),
            next_user,
            last_score_refresh: now,
            log: Vec::new(),
            state_events: 0,
        }
    }

    pub fn options(&self) -> &RoomOptions {
        &self.options
    }

    pub fn state(&self) -> &WorkspaceState {
        self.seq.state()
    }

    pub fn sequencer(&self) -> &Sequencer {
        &self.seq
    }

    pub fn scores(&self) -> Option<&ScoreEngine> {
        self.scores.as_ref()
    }

    pub fn scoreboard(&self, now: Millis) -> Option<Scoreboard> {
        self.scores.as_ref().map(|s| s.scoreboard(now))
    }

    /// State the room started from, when `record_log` is on.
    pub fn initial_state(&self) -> Option<&WorkspaceState> {
        self.initial.as_ref()
    }

    pub fn score_log(&self) -> &[ScoreInput] {
        &self.log
    }

    /// Number of state events emitted so far.
    pub fn state_event_count(&self) -> u64 {
        self.state_events
    }

    pub fn snapshot_bytes(&self) -> Vec<u8> {
        to_canonical_bytes(self.seq.state())
    }

    pub fn member_count(&self) -> usize {
        self.members.len()
    }

    pub fn is_member(&self, user: UserId) -> bool {
        self.members.contains_key(&user)
    }

    pub fn roster(&self) -> Vec<PresenceState> {
        self.members.values().map(|m| m.presence.clone()).collect()
    }

    /// Avatar colour of everyone who joined during this room's lifetime.
    pub fn colors(&self) -> BTreeMap<UserId, AvatarColor> {
        self.known.iter().map(|(u, k)| (*u, k.color)).collect()
    }

    fn unique_name(&self, requested: &str) -> String {
        let base = requested.trim();
        let base = if base.is_empty() { "Guest" } else { base };
        let taken = |n: &str| self.members.values().any(|m| m.presence.name == n);
        if !taken(base) {
            return base.to_string();
        }
        (2..)
            .map(|i| format!("{base} ({i})"))
            .find(|n| !taken(n))
            .expect("unbounded suffix search")
    }

    fn pick_color(&self, preferred: Option<AvatarColor>) -> AvatarColor {
        let mut usage: BTreeMap<AvatarColor, usize> =
            AvatarColor::ALL.iter().map(|c| (*c, 0)).collect();
        for m in self.members.values() {
            *usage.entry(m.presence.color).or_default() += 1;
        }
        if let Some(p) = preferred {
            if usage[&p] == 0 {
                return p;
            }
        }
        // Least used, lowest index on ties: lowest unused first, then
        // round-robin once the palette is exhausted.
        usage
            .into_iter()
            .min_by_key(|(c, n)| (*n, *c))
            .map(|(c, _)| c)
            .expect("palette is non-empty")
    }

    /// Admit a client. Returns its user id and the messages to send: the
    /// welcome (or replay) to the joiner, then roster and score refreshes.
    pub fn join(
        &mut self,
        display_name: &str,
        resume_from_seq: Option<u64>,
        resume_as: Option<UserId>,
        now: Millis,
    ) -> (UserId, Vec<Envelope>) {
        let reuse = resume_as.filter(|u| self.known.contains_key(u) && !self.members.contains_key(u));
        let user = match reuse {
            Some(u) => u,
            None => {
                let u = UserId(self.next_user);
                self.next_user += 1;
                u
            }
        };
        let color = self.pick_color(reuse.map(|u| self.known[&u].color));
        let name = self.unique_name(display_name);
        self.known.insert(user, KnownUser { color });
        self.members.insert(
            user,
            Member {
                presence: PresenceState {
                    user,
                    name: name.clone(),
                    color,
                    cursor: Vec2::ZERO,
                    viewport: DEFAULT_VIEWPORT,
                    holding: None,
                    speaking: false,
                    last_heard: now,
                },
                last_broadcast: Some(now),
                dirty: false,
            },
        );
        if let Some(scores) = &mut self.scores {
            scores.register(user);
            if self.options.record_log {
                self.log.push(ScoreInput::Join { user, at: now });
            }
        }

        let next_client_seq = self.seq.next_client_seq(user);
        let scoreboard = self.scoreboard(now);
        let welcome = match resume_from_seq.map(|k| self.seq.catch_up(k)) {
            Some(CatchUp::Replay(ops)) => ServerMessage::OpReplay {
                your_user_id: user,
                assigned_color: color,
                next_client_seq,
                display_name: name,
                from_seq: resume_from_seq.unwrap_or_default(),
                ops,
                scoreboard: scoreboard.clone(),
            },
            Some(CatchUp::Snapshot(doc)) => self.welcome(user, color, name, doc, scoreboard.clone()),
            None => {
                let doc = snapshot(self.seq.state());
                self.welcome(user, color, name, doc, scoreboard.clone())
            }
        };
        let mut out = vec![Envelope::to(user, welcome), self.roster_envelope()];
        if let Some(scoreboard) = scoreboard {
            out.push(Envelope::all(ServerMessage::ScoreUpdate { scoreboard }));
        }
        (user, out)
    }

    fn welcome(
        &self,
        user: UserId,
        color: AvatarColor,
        display_name: String,
        snapshot: crate::snapshot::SnapshotDocument,
        scoreboard: Option<Scoreboard>,
    ) -> ServerMessage {
        ServerMessage::Welcome {
            your_user_id: user,
            assigned_color: color,
            next_client_seq: self.seq.next_client_seq(user),
            display_name,
            clipboard: self.seq.state().clipboard.clone(),
            snapshot,
            scoreboard,
        }
    }

    fn roster_envelope(&mut self) -> Envelope {
        Envelope::all(ServerMessage::PresenceBroadcast {
            users: self.roster(),
        })
    }

    fn flush_roster(&mut self, now: Millis) -> Envelope {
        for m in self.members.values_mut() {
            if m.dirty {
                m.dirty = false;
                m.last_broadcast = Some(now);
            }
        }
        self.roster_envelope()
    }

    /// Remove a member. Their artifacts and scores stay; an open speaking
    /// interval is closed at `now`.
    pub fn leave(&mut self, user: UserId, now: Millis) -> Vec<Envelope> {
        if self.members.remove(&user).is_none() {
            return Vec::new();
        }
        let mut out = Vec::new();
        if self.scores.as_ref().is_some_and(|s| s.is_speaking(user)) {
            out.extend(self.speaking(user, false, now));
        }
        out.push(self.roster_envelope());
        out
    }

    /// Handle one message from a member. `Hello` is handled by [`join`](Self::join)
    /// and ignored here; messages from non-members are ignored.
    pub fn handle(&mut self, user: UserId, msg: ClientMessage, now: Millis) -> Vec<Envelope> {
        let Some(member) = self.members.get_mut(&user) else {
            return Vec::new();
        };
        member.presence.last_heard = now;
        match msg {
            ClientMessage::Hello { .. } => Vec::new(),
            ClientMessage::Ping => vec![Envelope::to(user, ServerMessage::Pong)],
            ClientMessage::SubmitOp { op } => self.submit(user, op, now),
            ClientMessage::Presence {
                cursor,
                viewport,
                holding,
            } => {
                if !cursor.is_finite() || !viewport.is_well_formed() {
                    return Vec::new();
                }
                member.presence.cursor = cursor;
                member.presence.viewport = viewport;
                member.presence.holding = holding;
                let due = member
                    .last_broadcast
                    .is_none_or(|t| now.saturating_sub(t) >= self.options.presence_interval_ms);
                member.dirty = true;
                if due {
                    vec![self.flush_roster(now)]
                } else {
                    Vec::new()
                }
            }
            ClientMessage::Speaking { speaking } => self.speaking(user, speaking, now),
        }
    }

    fn speaking(&mut self, user: UserId, speaking: bool, now: Millis) -> Vec<Envelope> {
        let mut out = Vec::new();
        let events = match &mut self.scores {
            Some(scores) => {
                if self.options.record_log {
                    self.log.push(ScoreInput::Speaking {
                        user,
                        speaking,
                        at: now,
                    });
                }
                let events = scores.record_speaking(user, speaking, now);
                if let Some(m) = self.members.get_mut(&user) {
                    m.presence.speaking = scores.is_speaking(user);
                }
                events
            }
            None => {
                if let Some(m) = self.members.get_mut(&user) {
                    m.presence.speaking = speaking;
                }
                Vec::new()
            }
        };
        if let Some(m) = self.members.get_mut(&user) {
            m.dirty = true;
            out.push(self.flush_roster(now));
        }
        out.extend(self.score_envelopes(&events, now));
        out
    }

    fn score_envelopes(&mut self, events: &[ScoreEvent], now: Millis) -> Vec<Envelope> {
        if events.is_empty() {
            return Vec::new();
        }
        let Some(scoreboard) = self.scoreboard(now) else {
            return Vec::new();
        };
        self.last_score_refresh = now;
        let mut out = vec![Envelope::all(ServerMessage::ScoreUpdate { scoreboard })];
        for e in events {
            if let ScoreEvent::LeadershipShift { holder, .. } = e {
                out.push(Envelope::all(ServerMessage::BadgeChange { new_holder: *holder }));
            }
        }
        out
    }

    /// Sequence a submission without the envelope plumbing.
    pub fn submit_op(
        &mut self,
        user: UserId,
        op: Operation,
        now: Millis,
    ) -> (Verdict, Option<Operation>, Vec<StateEvent>, Vec<ScoreEvent>) {
        let mut score_events = Vec::new();
        let scores = &mut self.scores;
        let log = &mut self.log;
        let record = self.options.record_log;
        let out = self.seq.sequence(user, op, |before, op| {
            if let Some(scores) = scores {
                if record {
                    log.push(ScoreInput::Op { op: op.clone(), at: now });
                }
                score_events = scores.score_op(before, op, now);
            }
        });
        self.state_events += out.events.len() as u64;
        (out.verdict, out.accepted, out.events, score_events)
    }

    fn submit(&mut self, user: UserId, op: Operation, now: Millis) -> Vec<Envelope> {
        let op_id = op.op_id;
        let (verdict, accepted, _events, score_events) = self.submit_op(user, op, now);
        let mut out = Vec::new();
        match verdict {
            Verdict::Accepted { server_seq } => {
                out.push(Envelope::to(user, ServerMessage::OpAccepted { op_id, server_seq }));
            }
            Verdict::Rejected(reason) => {
                out.push(Envelope::to(user, ServerMessage::OpRejected { op_id, reason }));
            }
        }
        if let Some(op) = accepted {
            out.push(Envelope::all(ServerMessage::OpBroadcast { op }));
        }
        out.extend(self.score_envelopes(&score_events, now));
        out
    }

    /// Periodic housekeeping: flush throttled presence, refresh the
    /// scoreboard and reap silent members.
    pub fn tick(&mut self, now: Millis) -> TickOutcome {
        let mut out = TickOutcome::default();
        let timeout = self.options.heartbeat_timeout_ms;
        let silent: Vec<UserId> = self
            .members
            .values()
            .filter(|m| now.saturating_sub(m.presence.last_heard) > timeout)
            .map(|m| m.presence.user)
            .collect();
        for user in silent {
            out.envelopes.extend(self.leave(user, now));
            out.reaped.push(user);
        }
        let interval = self.options.presence_interval_ms;
        let flush = self.members.values().any(|m| {
            m.dirty && m.last_broadcast.is_none_or(|t| now.saturating_sub(t) >= interval)
        });
        if flush {
            out.envelopes.push(self.flush_roster(now));
        }
        if !self.members.is_empty()
            && now.saturating_sub(self.last_score_refresh) >= self.options.score_refresh_ms
        {
            if let Some(scoreboard) = self.scoreboard(now) {
                self.last_score_refresh = now;
                out.envelopes
                    .push(Envelope::all(ServerMessage::ScoreUpdate { scoreboard }));
            }
        }
        out
    }
}

/// Reason a hello could not be admitted, for transports to report.
pub fn join_rejection(reason: RejectReason, detail: impl Into<String>) -> ServerMessage {
    ServerMessage::JoinRejected {
        reason,
        detail: detail.into(),
    }
}
