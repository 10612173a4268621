//! Incremental scoring over the accepted-operation stream and speaking
//! signals.
//!
//! Cooperation counts linking two notes created by others and labelling a
//! link created by someone else. The badge follows cooperation; ties go to
//! whoever reached the tied value first.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ids::UserId;
use crate::model::{AvatarColor, WorkspaceState};
use crate::op::{Operation, OperationPayload};

/// Milliseconds since the Unix epoch (or since an arbitrary origin in
/// virtual-clock mode).
pub type Millis = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ScoreConfig {
    /// Longest credited speaking interval.
    pub max_utterance_ms: Millis,
    /// A user counts as active for this long after each op or speaking signal.
    pub activity_window_ms: Millis,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self {
            max_utterance_ms: 30_000,
            activity_window_ms: 60_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Metric {
    Cooperation,
    SpeakingMs,
    ArtifactsCreated,
    ActionEfficiency,
    DiscussionEfficiency,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase", rename_all_fields = "camelCase")]
pub enum ScoreEvent {
    ScoreChanged {
        user: UserId,
        metric: Metric,
        old_value: u64,
        new_value: u64,
    },
    LeadershipShift {
        previous: Option<UserId>,
        holder: Option<UserId>,
    },
}

/// Union of `[t, t + window)` over every activity instant `t`, kept as closed
/// total plus the currently open span.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct ActivityClock {
    closed_ms: Millis,
    span: Option<(Millis, Millis)>,
}

impl ActivityClock {
    fn mark(&mut self, at: Millis, window: Millis) {
        match &mut self.span {
            Some((_, end)) if at <= *end => *end = (*end).max(at + window),
            span => {
                if let Some((start, end)) = *span {
                    self.closed_ms += end - start;
                }
                *span = Some((at, at + window));
            }
        }
    }

    fn active_ms(&self, now: Millis) -> Millis {
        let open = self
            .span
            .map(|(start, end)| end.min(now).saturating_sub(start))
            .unwrap_or(0);
        self.closed_ms + open
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct Tally {
    cooperation: u64,
    /// Global cooperation stamp at which `cooperation` reached its value.
    reached_at: u64,
    artifacts: u64,
    speaking_closed_ms: Millis,
    speaking_since: Option<Millis>,
    last_signal_at: Option<Millis>,
    activity: ActivityClock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct UserScore {
    pub user: UserId,
    pub cooperation: u64,
    pub speaking_ms: Millis,
    pub artifacts_created: u64,
    pub active_ms: Millis,
    /// Artifacts per active minute.
    pub action_efficiency: f64,
    /// Fraction of session time spent speaking.
    pub discussion_efficiency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Scoreboard {
    pub session_start: Millis,
    /// Instant the derived durations and ratios were evaluated at.
    pub at: Millis,
    pub users: Vec<UserScore>,
    pub badge_holder: Option<UserId>,
}

impl Scoreboard {
    pub fn user(&self, user: UserId) -> Option<&UserScore> {
        self.users.iter().find(|u| u.user == user)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreEngine {
    config: ScoreConfig,
    session_start: Millis,
    users: BTreeMap<UserId, Tally>,
    badge: Option<UserId>,
    cooperation_stamp: u64,
    dropped_signals: u64,
}

impl ScoreEngine {
    pub fn new(config: ScoreConfig, session_start: Millis) -> Self {
        Self {
            config,
            session_start,
            users: BTreeMap::new(),
            badge: None,
            cooperation_stamp: 0,
            dropped_signals: 0,
        }
    }

    pub fn config(&self) -> ScoreConfig {
        self.config
    }

    pub fn session_start(&self) -> Millis {
        self.session_start
    }

    pub fn badge_holder(&self) -> Option<UserId> {
        self.badge
    }

    /// Speaking signals dropped for arriving out of time order.
    pub fn dropped_signals(&self) -> u64 {
        self.dropped_signals
    }

    /// Make a user visible on the scoreboard with zero scores.
    pub fn register(&mut self, user: UserId) {
        self.users.entry(user).or_default();
    }

    /// Score an accepted operation. `before` must be the state the operation
    /// was validated against.
    pub fn score_op(&mut self, before: &WorkspaceState, op: &Operation, at: Millis) -> Vec<ScoreEvent> {
        let actor = op.actor;
        let window = self.config.activity_window_ms;
        let tally = self.users.entry(actor).or_default();
        tally.activity.mark(at, window);

        let (artifact, cooperative) = match &op.payload {
            OperationPayload::CreateNote { .. } => (true, false),
            OperationPayload::CreateLink { source, target } => {
                let others = [source, target]
                    .iter()
                    .all(|n| before.notes.get(n).is_some_and(|n| n.creator != actor));
                (true, others)
            }
            OperationPayload::AttachLabel { link, .. } => {
                let other = before.links.get(link).is_some_and(|l| l.creator != actor);
                (true, other)
            }
            _ => (false, false),
        };

        let mut events = Vec::new();
        if artifact {
            let old = tally.artifacts;
            tally.artifacts += 1;
            events.push(ScoreEvent::ScoreChanged {
                user: actor,
                metric: Metric::ArtifactsCreated,
                old_value: old,
                new_value: old + 1,
            });
        }
        if cooperative {
            self.cooperation_stamp += 1;
            let tally = self.users.get_mut(&actor).expect("registered above");
            let old = tally.cooperation;
            tally.cooperation += 1;
            tally.reached_at = self.cooperation_stamp;
            events.push(ScoreEvent::ScoreChanged {
                user: actor,
                metric: Metric::Cooperation,
                old_value: old,
                new_value: old + 1,
            });
            let previous = self.badge;
            self.badge = match previous {
                Some(h) if h != actor && self.users[&h].cooperation > old => Some(h),
                _ => Some(actor),
            };
            if self.badge != previous {
                events.push(ScoreEvent::LeadershipShift {
                    previous,
                    holder: self.badge,
                });
            }
        }
        events
    }

    /// Record a speaking on/off signal. Repeats of the current state are
    /// ignored; signals older than the user's previous one are dropped.
    pub fn record_speaking(&mut self, user: UserId, speaking: bool, at: Millis) -> Vec<ScoreEvent> {
        let cap = self.config.max_utterance_ms;
        let window = self.config.activity_window_ms;
        let session_start = self.session_start;
        let tally = self.users.entry(user).or_default();
        if at < session_start || tally.last_signal_at.is_some_and(|last| at < last) {
            self.dropped_signals += 1;
            return Vec::new();
        }
        tally.last_signal_at = Some(at);
        match (tally.speaking_since, speaking) {
            (None, true) => {
                tally.speaking_since = Some(at);
                tally.activity.mark(at, window);
                Vec::new()
            }
            (Some(since), false) => {
                let old = tally.speaking_closed_ms;
                tally.speaking_closed_ms += (at - since).min(cap);
                tally.speaking_since = None;
                tally.activity.mark(at, window);
                vec![ScoreEvent::ScoreChanged {
                    user,
                    metric: Metric::SpeakingMs,
                    old_value: old,
                    new_value: tally.speaking_closed_ms,
                }]
            }
            _ => Vec::new(),
        }
    }

    pub fn is_speaking(&self, user: UserId) -> bool {
        self.users
            .get(&user)
            .is_some_and(|t| t.speaking_since.is_some())
    }

    pub fn scoreboard(&self, now: Millis) -> Scoreboard {
        let elapsed = now.saturating_sub(self.session_start);
        let users = self
            .users
            .iter()
            .map(|(user, t)| {
                let open = t
                    .speaking_since
                    .map(|s| now.saturating_sub(s).min(self.config.max_utterance_ms))
                    .unwrap_or(0);
                let speaking_ms = t.speaking_closed_ms + open;
                let active_ms = t.activity.active_ms(now);
                let (action_efficiency, discussion_efficiency) =
                    efficiency_ratios(t.artifacts, active_ms, speaking_ms, elapsed);
                UserScore {
                    user: *user,
                    cooperation: t.cooperation,
                    speaking_ms,
                    artifacts_created: t.artifacts,
                    active_ms,
                    action_efficiency,
                    discussion_efficiency,
                }
            })
            .collect();
        Scoreboard {
            session_start: self.session_start,
            at: now,
            users,
            badge_holder: self.badge,
        }
    }
}

/// Output/input ratios: artifacts per active minute (0 with no active time)
/// and speaking share of elapsed session time, clamped to `[0, 1]`.
pub fn efficiency_ratios(artifacts: u64, active_ms: Millis, speaking_ms: Millis, elapsed_ms: Millis) -> (f64, f64) {
    let action = if active_ms == 0 {
        0.0
    } else {
        artifacts as f64 / (active_ms as f64 / 60_000.0)
    };
    let discussion = if elapsed_ms == 0 {
        0.0
    } else {
        (speaking_ms as f64 / elapsed_ms as f64).clamp(0.0, 1.0)
    };
    (action, discussion)
}

/// `(action_efficiency, discussion_efficiency)` for `user` at `now`, from a
/// scoreboard's raw counters. Unknown users score zero.
pub fn efficiency(scoreboard: &Scoreboard, user: UserId, now: Millis) -> (f64, f64) {
    match scoreboard.user(user) {
        None => (0.0, 0.0),
        Some(u) => efficiency_ratios(
            u.artifacts_created,
            u.active_ms,
            u.speaking_ms,
            now.saturating_sub(scoreboard.session_start),
        ),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Bar {
    pub user: UserId,
    pub color: Option<AvatarColor>,
    pub value: f64,
    /// `value` divided by the group maximum; 0 when every value is 0.
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BarGroup {
    pub metric: Metric,
    pub bars: Vec<Bar>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Dashboard {
    pub groups: Vec<BarGroup>,
    pub badge_holder: Option<UserId>,
}

pub const DASHBOARD_METRICS: [Metric; 4] = [
    Metric::Cooperation,
    Metric::SpeakingMs,
    Metric::ActionEfficiency,
    Metric::DiscussionEfficiency,
];

/// Bar-chart model: one group per displayed measure, bars normalized to the
/// group's current maximum.
pub fn dashboard(scoreboard: &Scoreboard, colors: &BTreeMap<UserId, AvatarColor>) -> Dashboard {
    let groups = DASHBOARD_METRICS
        .iter()
        .map(|&metric| {
            let values: Vec<(UserId, f64)> = scoreboard
                .users
                .iter()
                .map(|u| {
                    let v = match metric {
                        Metric::Cooperation => u.cooperation as f64,
                        Metric::SpeakingMs => u.speaking_ms as f64,
                        Metric::ArtifactsCreated => u.artifacts_created as f64,
                        Metric::ActionEfficiency => u.action_efficiency,
                        Metric::DiscussionEfficiency => u.discussion_efficiency,
                    };
                    (u.user, v)
                })
                .collect();
            let max = values.iter().map(|(_, v)| *v).fold(0.0, f64::max);
            let bars = values
                .into_iter()
                .map(|(user, value)| Bar {
                    user,
                    color: colors.get(&user).copied(),
                    value,
                    length: if max > 0.0 { value / max } else { 0.0 },
                })
                .collect();
            BarGroup { metric, bars }
        })
        .collect();
    Dashboard {
        groups,
        badge_holder: scoreboard.badge_holder,
    }
}
