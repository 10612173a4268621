//! Scenario files: what the agents do and which checks run at the end.

use std::collections::BTreeMap;
use std::path::Path;

use mindmap_core::{ClipboardItem, ClipboardItemId, ClipboardKind, PayloadKind};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("reading {0}: {1}")]
    Io(String, std::io::Error),
    #[error("parsing scenario: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

/// One agent's connection outage, in milliseconds from the start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Disturbance {
    pub agent: usize,
    pub disconnect_at: u64,
    pub reconnect_at: u64,
}

/// Checks run at quiescence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Assertions {
    /// Every replica's snapshot equals the server's, byte for byte.
    pub convergence: bool,
    /// Referential integrity of the final state (and after every op when
    /// `checked` is set).
    pub integrity: bool,
    /// Incremental scoreboard equals a from-scratch recomputation, and the
    /// badge matches the brute-force leader after every event.
    pub score_replay: bool,
    /// Clone sets equal a pairwise scan on sampled states.
    pub clone_oracle: bool,
    /// DuplicateLink and UnknownTarget rejections both occurred.
    pub conflicts_exercised: bool,
}

impl Default for Assertions {
    fn default() -> Self {
        Self {
            convergence: true,
            integrity: true,
            score_replay: true,
            clone_oracle: true,
            conflicts_exercised: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_name")]
    pub name: String,
    pub seed: u64,
    pub agents: usize,
    pub ops_per_agent: usize,
    /// Relative weights per payload kind; missing kinds are never generated.
    #[serde(default = "default_mix")]
    pub op_mix: BTreeMap<PayloadKind, u32>,
    #[serde(default)]
    pub disturbances: Vec<Disturbance>,
    #[serde(default)]
    pub assertions: Assertions,
    /// Share of ops that deliberately reference ids the agent has seen
    /// deleted or never existed.
    #[serde(default = "default_stale")]
    pub stale_fraction: f64,
    #[serde(default = "default_retention")]
    pub retention: usize,
    /// Integrity scan after every accepted op.
    #[serde(default)]
    pub checked: bool,
    #[serde(default = "yes")]
    pub gamification: bool,
    /// Pause between an agent's ops, uniform in `[min, max]` ms.
    #[serde(default = "default_think")]
    pub think_ms: [u64; 2],
    /// One-way message latency, uniform in `[min, max]` ms.
    #[serde(default = "default_latency")]
    pub latency_ms: [u64; 2],
    /// Chance per agent step of toggling the speaking signal.
    #[serde(default = "default_speaking")]
    pub speaking_probability: f64,
    /// Chance per agent step of a cursor update.
    #[serde(default = "default_presence")]
    pub presence_probability: f64,
    /// Run the clone check every this many accepted ops.
    #[serde(default = "default_clone_every")]
    pub clone_sample_every: u64,
    /// Clipboard lines in the server config format (`note: ...`, `label: ...`).
    #[serde(default = "default_clipboard")]
    pub clipboard: Vec<String>,
}

fn yes() -> bool {
    true
}
fn default_name() -> String {
    "scenario".into()
}
fn default_stale() -> f64 {
    0.05
}
fn default_retention() -> usize {
    mindmap_core::sequencer::DEFAULT_RETENTION
}
fn default_think() -> [u64; 2] {
    [20, 120]
}
fn default_latency() -> [u64; 2] {
    [2, 30]
}
fn default_speaking() -> f64 {
    0.05
}
fn default_presence() -> f64 {
    0.2
}
fn default_clone_every() -> u64 {
    250
}

fn default_clipboard() -> Vec<String> {
    [
        "note: water cycle",
        "note: Water Cycle",
        "note: evaporation",
        "note: condensation",
        "note: clouds",
        "label: causes",
        "label: leads to",
        "label: part of",
    ]
    .map(String::from)
    .to_vec()
}

/// Default weights: mostly creation and movement, with enough deletes,
/// links and panels to exercise every conflict path.
pub fn default_mix() -> BTreeMap<PayloadKind, u32> {
    use PayloadKind as K;
    [
        (K::CreateNote, 16),
        (K::SetNoteText, 3),
        (K::SetNoteColor, 2),
        (K::MoveNote, 10),
        (K::DeleteNote, 5),
        (K::CreateLink, 12),
        (K::DeleteLink, 3),
        (K::AttachLabel, 6),
        (K::DetachLabel, 2),
        (K::FlipLabel, 2),
        (K::SetGroup, 2),
        (K::ClearGroup, 1),
        (K::MoveGroup, 2),
        (K::CreatePanel, 2),
        (K::MovePanel, 2),
        (K::ResizePanel, 1),
        (K::DeletePanel, 1),
        (K::AttachNoteToPanel, 4),
        (K::DetachNoteFromPanel, 1),
    ]
    .into_iter()
    .collect()
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = toml::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io(path.display().to_string(), e))?;
        Self::parse(&text)
    }

    /// A scenario with every optional field at its default.
    pub fn basic(seed: u64, agents: usize, ops_per_agent: usize) -> Self {
        Self::parse(&format!("seed = {seed}\nagents = {agents}\nops_per_agent = {ops_per_agent}\n"))
            .expect("basic scenario is valid")
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        if self.agents == 0 {
            return bad("agents must be at least 1".into());
        }
        if self.op_mix.values().all(|w| *w == 0) {
            return bad("op_mix has no positive weight".into());
        }
        if !(0.0..=1.0).contains(&self.stale_fraction)
            || !(0.0..=1.0).contains(&self.speaking_probability)
            || !(0.0..=1.0).contains(&self.presence_probability)
        {
            return bad("probabilities must lie in [0, 1]".into());
        }
        if self.retention == 0 {
            return bad("retention must be at least 1".into());
        }
        if self.think_ms[0] > self.think_ms[1] || self.latency_ms[0] > self.latency_ms[1] {
            return bad("ranges must be [min, max]".into());
        }
        if self.clone_sample_every == 0 {
            return bad("clone_sample_every must be at least 1".into());
        }
        for d in &self.disturbances {
            if d.agent >= self.agents {
                return bad(format!("disturbance names agent {} of {}", d.agent, self.agents));
            }
            if d.reconnect_at <= d.disconnect_at {
                return bad(format!("agent {} reconnects before it disconnects", d.agent));
            }
        }
        self.clipboard_items()?;
        Ok(())
    }

    pub fn clipboard_items(&self) -> Result<Vec<ClipboardItem>, ScenarioError> {
        self.clipboard
            .iter()
            .enumerate()
            .map(|(i, line)| {
                let (kind, text) = if let Some(t) = line.strip_prefix("note:") {
                    (ClipboardKind::NoteSource, t)
                } else if let Some(t) = line.strip_prefix("label:") {
                    (ClipboardKind::LabelSource, t)
                } else {
                    return Err(ScenarioError::Invalid(format!("clipboard line {line:?}")));
                };
                Ok(ClipboardItem {
                    id: ClipboardItemId(i as u32 + 1),
                    text: text.trim().to_string(),
                    kind,
                })
            })
            .collect()
    }
}
