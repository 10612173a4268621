//! Deterministic in-process runs on a virtual clock.
//!
//! The server is a [`Room`] driven directly; every message between an agent
//! and the room is an event in a time-ordered queue with a sampled one-way
//! latency. Links are FIFO per direction. Equal seeds give equal transcripts.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::time::Instant;

use mindmap_core::gamification::Millis;
use mindmap_core::integrity::check_integrity;
use mindmap_core::replica::{Replica, ReplicaUpdate};
use mindmap_core::room::{Audience, Room, RoomOptions};
use mindmap_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::generate::OpGenerator;
use crate::oracle;
use crate::report::{LatencySummary, Report};
use crate::scenario::Scenario;

pub const PING_INTERVAL_MS: Millis = 5_000;
pub const TICK_MS: Millis = 25;
/// Delay before a reaped agent dials in again.
const REDIAL_MS: Millis = 1_000;

#[derive(Debug, Clone)]
enum Event {
    /// Carries the connection epoch so a stale chain stops after a reconnect.
    Act(usize, u64),
    Up { agent: usize, epoch: u64, msg: ClientMessage },
    Down { agent: usize, epoch: u64, msg: ServerMessage },
    Disconnect(usize),
    Connect(usize),
    Ping(usize),
    Tick,
}

impl Event {
    /// Events that keep the run alive; pings and ticks only tick along.
    fn is_foreground(&self) -> bool {
        !matches!(self, Event::Ping(_) | Event::Tick)
    }
}

struct Agent {
    name: String,
    replica: Replica,
    gen: OpGenerator,
    epoch: u64,
    online: bool,
    dialing: bool,
    ever_joined: bool,
    remaining: usize,
    speaking: bool,
    sent_at: BTreeMap<u64, Millis>,
    fifo_up: Millis,
    fifo_down: Millis,
    errors: Vec<String>,
}

/// A scenario run in one thread on a virtual clock.
pub struct Simulation {
    scenario: Scenario,
    room: Room,
    agents: Vec<Agent>,
    /// Server side of each agent's current connection.
    conns: BTreeMap<usize, (u64, UserId)>,
    queue: BinaryHeap<Reverse<(Millis, u64, usize)>>,
    events: Vec<Option<Event>>,
    seq: u64,
    foreground: usize,
    now: Millis,
    net: ChaCha8Rng,
    hasher: Sha256,
    report: Report,
    latencies: Vec<u64>,
    clone_checked_at: u64,
    clone_failure: Option<String>,
    clone_samples: u64,
}

impl Simulation {
    pub fn new(scenario: Scenario) -> Self {
        let clipboard = scenario.clipboard_items().expect("validated scenario");
        let options = RoomOptions {
            retention: scenario.retention,
            gamification: scenario.gamification,
            checked: scenario.checked,
            record_log: true,
            ..RoomOptions::default()
        };
        let room = Room::new(options, WorkspaceState::new(clipboard), 0);
        let agents = (0..scenario.agents)
            .map(|i| {
                let rng = ChaCha8Rng::seed_from_u64(scenario.seed ^ (0x9e37_79b9_7f4a_7c15_u64.wrapping_mul(i as u64 + 1)));
                Agent {
                    name: format!("agent-{i}"),
                    replica: Replica::new(),
                    gen: OpGenerator::new(rng, &scenario),
                    epoch: 0,
                    online: false,
                    dialing: false,
                    ever_joined: false,
                    remaining: scenario.ops_per_agent,
                    speaking: false,
                    sent_at: BTreeMap::new(),
                    fifo_up: 0,
                    fifo_down: 0,
                    errors: Vec::new(),
                }
            })
            .collect();
        let report = Report {
            scenario: scenario.name.clone(),
            mode: "inprocess".into(),
            seed: scenario.seed,
            passed: true,
            ..Report::default()
        };
        Self {
            net: ChaCha8Rng::seed_from_u64(scenario.seed.rotate_left(17) ^ 0x5eed),
            scenario,
            room,
            agents,
            conns: BTreeMap::new(),
            queue: BinaryHeap::new(),
            events: Vec::new(),
            seq: 0,
            foreground: 0,
            now: 0,
            hasher: Sha256::new(),
            report,
            latencies: Vec::new(),
            clone_checked_at: 0,
            clone_failure: None,
            clone_samples: 0,
        }
    }

    pub fn room(&self) -> &Room {
        &self.room
    }

    pub fn now(&self) -> Millis {
        self.now
    }

    /// Canonical snapshot bytes of each agent's replica.
    pub fn replica_snapshots(&self) -> Vec<Vec<u8>> {
        self.agents.iter().map(|a| a.replica.snapshot_bytes()).collect()
    }

    fn schedule(&mut self, at: Millis, ev: Event) {
        if ev.is_foreground() {
            self.foreground += 1;
        }
        let slot = self.events.len();
        self.events.push(Some(ev));
        self.queue.push(Reverse((at, self.seq, slot)));
        self.seq += 1;
    }

    fn latency(&mut self) -> Millis {
        let [lo, hi] = self.scenario.latency_ms;
        self.net.gen_range(lo..=hi)
    }

    fn think(&mut self, agent: usize) -> Millis {
        let [lo, hi] = self.scenario.think_ms;
        self.agents[agent].gen.rng().gen_range(lo..=hi)
    }

    fn send_up(&mut self, agent: usize, msg: ClientMessage) {
        let at = (self.now + self.latency()).max(self.agents[agent].fifo_up);
        self.agents[agent].fifo_up = at;
        let epoch = self.agents[agent].epoch;
        self.schedule(at, Event::Up { agent, epoch, msg });
    }

    fn send_down(&mut self, agent: usize, msg: ServerMessage) {
        let at = (self.now + self.latency()).max(self.agents[agent].fifo_down);
        self.agents[agent].fifo_down = at;
        let epoch = self.agents[agent].epoch;
        self.schedule(at, Event::Down { agent, epoch, msg });
    }

    fn agent_of(&self, user: UserId) -> Option<usize> {
        self.conns.iter().find(|(_, (_, u))| *u == user).map(|(a, _)| *a)
    }

    fn deliver(&mut self, envelopes: Vec<mindmap_core::room::Envelope>) {
        for env in envelopes {
            match env.to {
                Audience::User(u) => {
                    if let Some(a) = self.agent_of(u) {
                        self.send_down(a, env.msg);
                    }
                }
                Audience::All => {
                    let targets: Vec<usize> = self.conns.keys().copied().collect();
                    for a in targets {
                        self.send_down(a, env.msg.clone());
                    }
                }
            }
        }
    }

    fn record(&mut self, dir: &str, agent: usize, json: &str) {
        self.hasher.update(format!("{} {dir} {agent} {json}\n", self.now).as_bytes());
    }

    /// Run to quiescence and evaluate the scenario's assertions.
    pub fn run(mut self) -> (Report, Self) {
        let wall = Instant::now();
        for i in 0..self.agents.len() {
            self.schedule(i as Millis, Event::Connect(i));
            self.schedule(PING_INTERVAL_MS, Event::Ping(i));
        }
        for d in self.scenario.disturbances.clone() {
            self.schedule(d.disconnect_at, Event::Disconnect(d.agent));
            self.schedule(d.reconnect_at, Event::Connect(d.agent));
        }
        self.schedule(TICK_MS, Event::Tick);

        while let Some(Reverse((at, _, slot))) = self.queue.pop() {
            let ev = self.events[slot].take().expect("each event runs once");
            if ev.is_foreground() {
                self.foreground -= 1;
            }
            self.now = at;
            self.handle(ev);
            if self.foreground == 0 {
                break;
            }
        }
        self.report.duration_ms = self.now;
        self.report.wall_ms = wall.elapsed().as_millis() as u64;
        self.finish();
        (self.report.clone(), self)
    }

    fn handle(&mut self, ev: Event) {
        match ev {
            Event::Tick => {
                let out = self.room.tick(self.now);
                for user in &out.reaped {
                    if let Some(a) = self.agent_of(*user) {
                        self.conns.remove(&a);
                        self.drop_connection(a);
                        self.schedule(self.now + REDIAL_MS, Event::Connect(a));
                    }
                }
                self.deliver(out.envelopes);
                self.sample_clones();
                self.schedule(self.now + TICK_MS, Event::Tick);
            }
            Event::Ping(a) => {
                if self.agents[a].online {
                    self.send_up(a, ClientMessage::Ping);
                }
                self.schedule(self.now + PING_INTERVAL_MS, Event::Ping(a));
            }
            Event::Disconnect(a) => {
                if let Some((_, user)) = self.conns.remove(&a) {
                    let out = self.room.leave(user, self.now);
                    self.deliver(out);
                }
                self.drop_connection(a);
            }
            Event::Connect(a) => {
                let agent = &mut self.agents[a];
                if agent.online || agent.dialing {
                    return;
                }
                agent.dialing = true;
                let resume = agent.ever_joined.then(|| agent.replica.applied_seq());
                let hello = ClientMessage::Hello {
                    room: "sim".into(),
                    display_name: agent.name.clone(),
                    resume_from_seq: resume,
                    user_id: agent.replica.user(),
                };
                if agent.ever_joined {
                    self.report.reconnects += 1;
                }
                self.send_up(a, hello);
            }
            Event::Up { agent, epoch, msg } => {
                if epoch != self.agents[agent].epoch {
                    return;
                }
                self.record("up", agent, &msg.to_json());
                self.server_receive(agent, epoch, msg);
            }
            Event::Down { agent, epoch, msg } => {
                if epoch != self.agents[agent].epoch {
                    return;
                }
                self.record("down", agent, &msg.to_json());
                self.agent_receive(agent, msg);
            }
            Event::Act(a, epoch) => {
                if epoch == self.agents[a].epoch {
                    self.act(a);
                }
            }
        }
    }

    fn drop_connection(&mut self, a: usize) {
        let agent = &mut self.agents[a];
        agent.epoch += 1;
        agent.online = false;
        agent.dialing = false;
    }

    fn server_receive(&mut self, agent: usize, epoch: u64, msg: ClientMessage) {
        match msg {
            ClientMessage::Hello {
                display_name,
                resume_from_seq,
                user_id,
                ..
            } => {
                let (user, out) = self.room.join(&display_name, resume_from_seq, user_id, self.now);
                self.conns.insert(agent, (epoch, user));
                self.deliver(out);
            }
            msg => {
                let Some((_, user)) = self.conns.get(&agent).copied() else {
                    return;
                };
                let before = self.room.state().applied_seq;
                let out = self.room.handle(user, msg, self.now);
                self.deliver(out);
                if self.room.state().applied_seq != before {
                    self.sample_clones();
                }
            }
        }
    }

    fn sample_clones(&mut self) {
        let seq = self.room.state().applied_seq;
        if !self.scenario.assertions.clone_oracle
            || self.clone_failure.is_some()
            || seq < self.clone_checked_at + self.scenario.clone_sample_every
        {
            return;
        }
        self.clone_checked_at = seq;
        self.clone_samples += 1;
        if let Err(e) = oracle::check_clones(self.room.state()) {
            self.clone_failure = Some(format!("at seq {seq}: {e}"));
        }
    }

    fn agent_receive(&mut self, a: usize, msg: ServerMessage) {
        let update = self.agents[a].replica.handle(&msg);
        let update = match update {
            Ok(u) => u,
            Err(e) => {
                let e = format!("{} at {} ms: {e}", self.agents[a].name, self.now);
                self.agents[a].errors.push(e);
                return;
            }
        };
        match (&msg, update) {
            (ServerMessage::Welcome { .. } | ServerMessage::OpReplay { .. }, ReplicaUpdate::Joined) => {
                let rejoin = self.agents[a].ever_joined;
                if rejoin {
                    if matches!(msg, ServerMessage::Welcome { .. }) {
                        self.report.snapshot_catch_ups += 1;
                    } else {
                        self.report.replay_catch_ups += 1;
                    }
                }
                let agent = &mut self.agents[a];
                match &msg {
                    ServerMessage::Welcome { .. } => agent.gen.observe_state(agent.replica.state()),
                    ServerMessage::OpReplay { ops, .. } => ops.iter().for_each(|o| agent.gen.observe(o)),
                    _ => {}
                }
                agent.online = true;
                agent.dialing = false;
                agent.ever_joined = true;
                let pending: Vec<Operation> = agent.replica.pending().cloned().collect();
                if rejoin {
                    self.report.ops.resubmitted += pending.len() as u64;
                }
                for op in pending {
                    self.send_up(a, ClientMessage::SubmitOp { op });
                }
                // The server closed any speaking interval when the link dropped.
                self.agents[a].speaking = false;
                let think = self.think(a);
                let epoch = self.agents[a].epoch;
                self.schedule(self.now + think, Event::Act(a, epoch));
            }
            (ServerMessage::OpBroadcast { op }, _) => self.agents[a].gen.observe(op),
            (_, ReplicaUpdate::Acked { client_seq, .. }) => {
                if let Some(t) = self.agents[a].sent_at.remove(&client_seq) {
                    self.latencies.push(self.now - t);
                    self.report.ops.accepted += 1;
                }
            }
            (_, ReplicaUpdate::Rejected { client_seq, reason }) => {
                if let Some(t) = self.agents[a].sent_at.remove(&client_seq) {
                    self.latencies.push(self.now - t);
                    self.report.ops.rejected += 1;
                    *self.report.rejections.entry(reason).or_default() += 1;
                }
            }
            (ServerMessage::JoinRejected { reason, detail }, _) => {
                let e = format!("{} refused: {reason} {detail}", self.agents[a].name);
                self.agents[a].errors.push(e);
            }
            _ => {}
        }
    }

    fn act(&mut self, a: usize) {
        if self.agents[a].remaining == 0 {
            if self.agents[a].speaking {
                self.agents[a].speaking = false;
                self.send_up(a, ClientMessage::Speaking { speaking: false });
            }
            return;
        }
        let now = self.now;
        let (speak, presence) = {
            let rng = self.agents[a].gen.rng();
            (
                rng.gen_bool(self.scenario.speaking_probability),
                rng.gen_bool(self.scenario.presence_probability),
            )
        };
        if speak {
            let s = !self.agents[a].speaking;
            self.agents[a].speaking = s;
            self.send_up(a, ClientMessage::Speaking { speaking: s });
        }
        if presence {
            let agent = &mut self.agents[a];
            let rng = agent.gen.rng();
            let cursor = Vec2::new(rng.gen_range(-2000.0..2000.0), rng.gen_range(-2000.0..2000.0));
            let msg = ClientMessage::Presence {
                cursor,
                viewport: Rect::centered(cursor, 1280.0, 800.0),
                holding: None,
            };
            self.send_up(a, msg);
        }
        let agent = &mut self.agents[a];
        let me = agent.replica.user().expect("online agents have joined");
        let payload = agent.gen.next(agent.replica.state(), me);
        let op = agent.replica.submit(payload, now).expect("joined");
        agent.sent_at.insert(op.op_id.client_seq, now);
        agent.remaining -= 1;
        self.report.ops.submitted += 1;
        self.send_up(a, ClientMessage::SubmitOp { op });
        let think = self.think(a);
        let epoch = self.agents[a].epoch;
        self.schedule(now + think, Event::Act(a, epoch));
    }

    fn finish(&mut self) {
        let now = self.now;
        let assertions = self.scenario.assertions;
        let server = self.room.snapshot_bytes();
        self.report.final_seq = self.room.state().applied_seq;
        self.report.latency = LatencySummary::from_samples(std::mem::take(&mut self.latencies));
        self.report.transcript_digest = hex::encode(self.hasher.clone().finalize());
        let mut by_kind = BTreeMap::new();
        for input in self.room.score_log() {
            if let mindmap_core::room::ScoreInput::Op { op, .. } = input {
                *by_kind.entry(op.payload.kind()).or_default() += 1;
            }
        }
        self.report.ops.accepted_by_kind = by_kind;

        let errors: Vec<String> = self.agents.iter().flat_map(|a| a.errors.clone()).collect();
        self.report.assert(
            "protocol",
            if errors.is_empty() {
                Ok("every replica saw a gap-free sequence".into())
            } else {
                Err(errors.join("; "))
            },
        );

        if assertions.convergence {
            let mut bad = Vec::new();
            for (i, a) in self.agents.iter().enumerate() {
                let bytes = a.replica.snapshot_bytes();
                if bytes != server || a.replica.has_pending() {
                    if self.report.divergence.is_none() {
                        self.report.divergence = Some(format!(
                            "{}:\n{}",
                            a.name,
                            oracle::divergence_diff(&server, &bytes, 20)
                        ));
                    }
                    bad.push(i);
                }
            }
            let n = self.agents.len();
            self.report.assert(
                "convergence",
                if bad.is_empty() {
                    Ok(format!("{n} replicas byte-identical to server at seq {}", self.report.final_seq))
                } else {
                    Err(format!("replicas {bad:?} differ from server"))
                },
            );
        }

        if assertions.integrity {
            let during = self.room.sequencer().violations();
            let after = check_integrity(self.room.state());
            let result = if let Some((seq, v)) = during.first() {
                Err(format!("{} violations, first after seq {seq}: {}", during.len(), v.0))
            } else if let Some(v) = after.first() {
                Err(format!("final state: {}", v.0))
            } else if self.scenario.checked {
                Ok(format!("clean after each of {} accepted ops", self.report.final_seq))
            } else {
                Ok("final state clean".into())
            };
            self.report.assert("integrity", result);
        }

        if assertions.score_replay && self.scenario.gamification {
            let engine = self.room.scores().expect("gamification on");
            let initial = self.room.initial_state().expect("log recorded");
            let log = self.room.score_log();
            let incremental = engine.scoreboard(now);
            let replayed = oracle::replay_scoreboard(initial, log, engine.config(), engine.session_start(), now);
            let badge = oracle::check_badge_each_event(initial, log, engine.config(), engine.session_start());
            let result = if incremental != replayed {
                Err(format!("incremental {incremental:?} != replay {replayed:?}"))
            } else {
                match badge {
                    Err(e) => Err(e),
                    Ok(fresh) if fresh != *engine => Err("log replay engine differs from live engine".into()),
                    Ok(_) => Ok(format!(
                        "{} log events, badge {:?}",
                        log.len(),
                        incremental.badge_holder.map(|u| u.0)
                    )),
                }
            };
            self.report.assert("score_replay", result);
        }

        if assertions.clone_oracle {
            self.clone_samples += 1;
            let result = match self.clone_failure.clone().or_else(|| oracle::check_clones(self.room.state()).err()) {
                Some(e) => Err(e),
                None => Ok(format!("{} sampled states", self.clone_samples)),
            };
            self.report.assert("clone_oracle", result);
        }

        if assertions.conflicts_exercised {
            let dup = self.report.rejections.get(&RejectReason::DuplicateLink).copied().unwrap_or(0);
            let unknown = self.report.rejections.get(&RejectReason::UnknownTarget).copied().unwrap_or(0);
            self.report.assert(
                "conflicts_exercised",
                if dup > 0 && unknown > 0 {
                    Ok(format!("duplicateLink {dup}, unknownTarget {unknown}"))
                } else {
                    Err(format!("duplicateLink {dup}, unknownTarget {unknown}"))
                },
            );
        }
    }
}

/// Run `scenario` in process.
pub fn run(scenario: Scenario) -> Report {
    Simulation::new(scenario).run().0
}
