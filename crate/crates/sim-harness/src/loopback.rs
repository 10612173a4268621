//! Agents over real websockets against a running server.
//!
//! Each agent is a task with its own connection. Timing is wall-clock, so
//! only protocol and convergence are checked: once every agent has drained
//! its pending ops, an observer joins, and its welcome snapshot is the
//! reference every agent must reach byte for byte.

use std::collections::{BTreeMap, VecDeque};
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use futures_util::{SinkExt, StreamExt};
use mindmap_core::replica::{Replica, ReplicaUpdate};
use mindmap_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tokio::net::TcpStream;
use tokio::sync::{mpsc, watch};
use tokio::time::{sleep_until, timeout, Instant};
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

use crate::generate::OpGenerator;
use crate::oracle;
use crate::report::{LatencySummary, Report};
use crate::scenario::{Disturbance, Scenario};

type Socket = WebSocketStream<MaybeTlsStream<TcpStream>>;

const JOIN_TIMEOUT: Duration = Duration::from_secs(10);
const PING_EVERY: Duration = Duration::from_secs(5);
/// Upper bound on the drain phase after the last op.
const DRAIN_TIMEOUT: Duration = Duration::from_secs(60);

#[derive(Debug, Default)]
struct Outcome {
    name: String,
    snapshot: Vec<u8>,
    submitted: u64,
    accepted: u64,
    rejected: u64,
    resubmitted: u64,
    rejections: BTreeMap<RejectReason, u64>,
    latencies: Vec<u64>,
    reconnects: u64,
    replay_catch_ups: u64,
    snapshot_catch_ups: u64,
    pending_left: usize,
}

fn url(addr: &str, room: &str) -> String {
    let base = if addr.starts_with("ws://") || addr.starts_with("wss://") {
        addr.trim_end_matches('/').to_string()
    } else {
        format!("ws://{addr}")
    };
    format!("{base}/ws/{room}")
}

async fn send(ws: &mut Socket, msg: &ClientMessage) -> Result<()> {
    ws.send(Message::text(msg.to_json())).await.context("sending")
}

/// Next server message; `None` when the connection ended.
async fn recv(ws: &mut Socket) -> Result<Option<ServerMessage>> {
    loop {
        match ws.next().await {
            None => return Ok(None),
            Some(Err(e)) => return Err(e).context("reading"),
            Some(Ok(Message::Text(t))) => {
                return ServerMessage::from_json(&t)
                    .map(Some)
                    .with_context(|| format!("malformed server message {t}"))
            }
            Some(Ok(Message::Close(frame))) => {
                let why = frame.map(|f| format!("{} {}", u16::from(f.code), f.reason)).unwrap_or_default();
                bail!("server closed the connection: {why}");
            }
            Some(Ok(_)) => {}
        }
    }
}

struct Agent {
    index: usize,
    scenario: Scenario,
    url: String,
    replica: Replica,
    gen: OpGenerator,
    remaining: usize,
    speaking: bool,
    sent_at: BTreeMap<u64, Instant>,
    out: Outcome,
}

impl Agent {
    fn new(index: usize, scenario: &Scenario, url: String) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(scenario.seed ^ (0x9e37_79b9_7f4a_7c15_u64.wrapping_mul(index as u64 + 1)));
        Self {
            index,
            gen: OpGenerator::new(rng, scenario),
            scenario: scenario.clone(),
            url,
            replica: Replica::new(),
            remaining: scenario.ops_per_agent,
            speaking: false,
            sent_at: BTreeMap::new(),
            out: Outcome {
                name: format!("agent-{index}"),
                ..Outcome::default()
            },
        }
    }

    fn think(&mut self) -> Duration {
        let [lo, hi] = self.scenario.think_ms;
        Duration::from_millis(self.gen.rng().gen_range(lo..=hi))
    }

    async fn connect(&mut self, room: &str, rejoin: bool) -> Result<Socket> {
        let (mut ws, _) = connect_async(&self.url).await.with_context(|| format!("connecting {}", self.url))?;
        let hello = ClientMessage::Hello {
            room: room.into(),
            display_name: self.out.name.clone(),
            resume_from_seq: rejoin.then(|| self.replica.applied_seq()),
            user_id: self.replica.user(),
        };
        send(&mut ws, &hello).await?;
        let joined = timeout(JOIN_TIMEOUT, async {
            loop {
                let msg = recv(&mut ws).await?.ok_or_else(|| anyhow!("closed before welcome"))?;
                match self.replica.handle(&msg)? {
                    ReplicaUpdate::Joined => return Ok::<_, anyhow::Error>(msg),
                    ReplicaUpdate::JoinRefused(r) => bail!("join refused: {r}"),
                    _ => {}
                }
            }
        })
        .await
        .context("waiting for welcome")??;
        match &joined {
            ServerMessage::Welcome { .. } => {
                self.gen.observe_state(self.replica.state());
                self.out.snapshot_catch_ups += u64::from(rejoin);
            }
            ServerMessage::OpReplay { ops, .. } => {
                ops.iter().for_each(|o| self.gen.observe(o));
                self.out.replay_catch_ups += u64::from(rejoin);
            }
            _ => unreachable!("only join replies yield Joined"),
        }
        if rejoin {
            self.out.reconnects += 1;
            self.speaking = false;
            let pending: Vec<Operation> = self.replica.pending().cloned().collect();
            self.out.resubmitted += pending.len() as u64;
            for op in pending {
                send(&mut ws, &ClientMessage::SubmitOp { op }).await?;
            }
        }
        Ok(ws)
    }

    fn absorb(&mut self, msg: &ServerMessage) -> Result<()> {
        let update = self
            .replica
            .handle(msg)
            .with_context(|| format!("{} replica", self.out.name))?;
        let now = Instant::now();
        match update {
            ReplicaUpdate::Acked { client_seq, .. } => {
                if let Some(t) = self.sent_at.remove(&client_seq) {
                    self.out.latencies.push((now - t).as_millis() as u64);
                    self.out.accepted += 1;
                }
            }
            ReplicaUpdate::Rejected { client_seq, reason } => {
                if let Some(t) = self.sent_at.remove(&client_seq) {
                    self.out.latencies.push((now - t).as_millis() as u64);
                    self.out.rejected += 1;
                    *self.out.rejections.entry(reason).or_default() += 1;
                }
            }
            _ => {}
        }
        if let ServerMessage::OpBroadcast { op } = msg {
            self.gen.observe(op);
        }
        Ok(())
    }

    async fn act(&mut self, ws: &mut Socket, epoch: Instant) -> Result<()> {
        let (speak, presence) = {
            let rng = self.gen.rng();
            (
                rng.gen_bool(self.scenario.speaking_probability),
                rng.gen_bool(self.scenario.presence_probability),
            )
        };
        if speak {
            self.speaking = !self.speaking;
            send(ws, &ClientMessage::Speaking { speaking: self.speaking }).await?;
        }
        if presence {
            let rng = self.gen.rng();
            let cursor = Vec2::new(rng.gen_range(-2000.0..2000.0), rng.gen_range(-2000.0..2000.0));
            let msg = ClientMessage::Presence {
                cursor,
                viewport: Rect::centered(cursor, 1280.0, 800.0),
                holding: None,
            };
            send(ws, &msg).await?;
        }
        let me = self.replica.user().expect("joined");
        let payload = self.gen.next(self.replica.state(), me);
        let op = self.replica.submit(payload, epoch.elapsed().as_millis() as u64)?;
        self.sent_at.insert(op.op_id.client_seq, Instant::now());
        self.remaining -= 1;
        self.out.submitted += 1;
        send(ws, &ClientMessage::SubmitOp { op }).await
    }

    async fn run(
        mut self,
        room: String,
        mut outages: VecDeque<Disturbance>,
        done: mpsc::UnboundedSender<usize>,
        mut target: watch::Receiver<Option<u64>>,
        epoch: Instant,
    ) -> Result<Outcome> {
        let mut ws = self.connect(&room, false).await?;
        let mut next_act = Instant::now() + self.think();
        let mut next_ping = Instant::now() + PING_EVERY;
        let mut reported = false;
        loop {
            if !reported && self.remaining == 0 && !self.replica.has_pending() {
                if self.speaking {
                    self.speaking = false;
                    send(&mut ws, &ClientMessage::Speaking { speaking: false }).await?;
                }
                reported = true;
                let _ = done.send(self.index);
            }
            if let Some(seq) = *target.borrow() {
                if self.replica.applied_seq() >= seq {
                    break;
                }
            }
            let outage = outages.front().copied();
            let cut_at = outage.map(|d| epoch + Duration::from_millis(d.disconnect_at));
            tokio::select! {
                msg = recv(&mut ws) => {
                    let msg = msg?.ok_or_else(|| anyhow!("{}: server hung up", self.out.name))?;
                    self.absorb(&msg)?;
                }
                _ = sleep_until(next_act), if self.remaining > 0 => {
                    self.act(&mut ws, epoch).await?;
                    next_act = Instant::now() + self.think();
                }
                _ = sleep_until(next_ping) => {
                    send(&mut ws, &ClientMessage::Ping).await?;
                    next_ping = Instant::now() + PING_EVERY;
                }
                _ = sleep_until(cut_at.unwrap_or(next_ping)), if cut_at.is_some() => {
                    let d = outages.pop_front().expect("front exists");
                    let _ = ws.close(None).await;
                    drop(ws);
                    sleep_until(epoch + Duration::from_millis(d.reconnect_at)).await;
                    ws = self.connect(&room, true).await?;
                    next_act = Instant::now() + self.think();
                }
                r = target.changed() => {
                    r.context("coordinator gone")?;
                }
            }
        }
        let _ = ws.close(None).await;
        self.out.snapshot = self.replica.snapshot_bytes();
        self.out.pending_left = self.replica.pending().count();
        Ok(self.out)
    }
}

/// The room's current state as a freshly joined client sees it.
async fn observe(url: &str, room: &str) -> Result<(u64, Vec<u8>)> {
    let (mut ws, _) = connect_async(url).await.context("observer connect")?;
    let hello = ClientMessage::Hello {
        room: room.into(),
        display_name: "observer".into(),
        resume_from_seq: None,
        user_id: None,
    };
    send(&mut ws, &hello).await?;
    let mut replica = Replica::new();
    timeout(JOIN_TIMEOUT, async {
        loop {
            let msg = recv(&mut ws).await?.ok_or_else(|| anyhow!("observer: closed before welcome"))?;
            if let ReplicaUpdate::Joined = replica.handle(&msg)? {
                return Ok::<_, anyhow::Error>(());
            }
        }
    })
    .await
    .context("observer welcome")??;
    let _ = ws.close(None).await;
    Ok((replica.applied_seq(), replica.snapshot_bytes()))
}

/// Run `scenario` against the server at `addr` in room `room`.
pub async fn run(scenario: Scenario, addr: &str, room: &str) -> Result<Report> {
    let url = url(addr, room);
    let start = Instant::now();
    let (done_tx, mut done_rx) = mpsc::unbounded_channel();
    let (target_tx, target_rx) = watch::channel(None);
    let mut tasks = Vec::new();
    for i in 0..scenario.agents {
        let outages: VecDeque<Disturbance> = {
            let mut v: Vec<_> = scenario.disturbances.iter().filter(|d| d.agent == i).copied().collect();
            v.sort_by_key(|d| d.disconnect_at);
            v.into()
        };
        let agent = Agent::new(i, &scenario, url.clone());
        tasks.push(tokio::spawn(agent.run(
            room.to_string(),
            outages,
            done_tx.clone(),
            target_rx.clone(),
            start,
        )));
    }
    drop(done_tx);

    let mut report = Report {
        scenario: scenario.name.clone(),
        mode: format!("loopback {addr}"),
        seed: scenario.seed,
        passed: true,
        ..Report::default()
    };
    let mut finished = 0;
    while finished < scenario.agents {
        if done_rx.recv().await.is_none() {
            break;
        }
        finished += 1;
    }
    let reference = if finished == scenario.agents {
        match observe(&url, room).await {
            Ok((seq, bytes)) => {
                let _ = target_tx.send(Some(seq));
                Some((seq, bytes))
            }
            Err(e) => {
                report.assert("protocol", Err(format!("observer: {e:#}")));
                None
            }
        }
    } else {
        None
    };

    let mut outcomes = Vec::new();
    let mut errors = Vec::new();
    for (i, t) in tasks.into_iter().enumerate() {
        match timeout(DRAIN_TIMEOUT, t).await {
            Ok(Ok(Ok(o))) => outcomes.push(o),
            Ok(Ok(Err(e))) => errors.push(format!("agent-{i}: {e:#}")),
            Ok(Err(e)) => errors.push(format!("agent-{i} panicked: {e}")),
            Err(_) => errors.push(format!("agent-{i}: did not drain within {DRAIN_TIMEOUT:?}")),
        }
    }
    report.duration_ms = start.elapsed().as_millis() as u64;
    report.wall_ms = report.duration_ms;

    let mut latencies = Vec::new();
    for o in &outcomes {
        report.ops.submitted += o.submitted;
        report.ops.accepted += o.accepted;
        report.ops.rejected += o.rejected;
        report.ops.resubmitted += o.resubmitted;
        report.reconnects += o.reconnects;
        report.replay_catch_ups += o.replay_catch_ups;
        report.snapshot_catch_ups += o.snapshot_catch_ups;
        for (r, n) in &o.rejections {
            *report.rejections.entry(*r).or_default() += n;
        }
        latencies.extend_from_slice(&o.latencies);
    }
    report.latency = LatencySummary::from_samples(latencies);

    if report.assertion("protocol").is_none() {
        report.assert(
            "protocol",
            if errors.is_empty() {
                Ok(format!("{} agents drained", outcomes.len()))
            } else {
                Err(errors.join("; "))
            },
        );
    }
    if scenario.assertions.convergence {
        let result = match &reference {
            None => Err("no reference snapshot".to_string()),
            Some((seq, bytes)) => {
                report.final_seq = *seq;
                let bad: Vec<&Outcome> = outcomes
                    .iter()
                    .filter(|o| o.snapshot != *bytes || o.pending_left > 0)
                    .collect();
                if let Some(first) = bad.first() {
                    report.divergence = Some(format!(
                        "{}:\n{}",
                        first.name,
                        oracle::divergence_diff(bytes, &first.snapshot, 20)
                    ));
                    Err(format!("{} of {} replicas differ from server", bad.len(), outcomes.len()))
                } else if outcomes.len() != scenario.agents {
                    Err(format!("only {} of {} agents finished", outcomes.len(), scenario.agents))
                } else {
                    Ok(format!("{} replicas byte-identical to server at seq {seq}", outcomes.len()))
                }
            }
        };
        report.assert("convergence", result);
    }
    Ok(report)
}
