//! Run results: structured JSON plus a short human summary.

use std::collections::BTreeMap;
use std::fmt;

use mindmap_core::{PayloadKind, RejectReason};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AssertionResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct LatencySummary {
    pub count: usize,
    pub min_ms: u64,
    pub p50_ms: u64,
    pub p95_ms: u64,
    pub max_ms: u64,
    pub mean_ms: f64,
}

impl LatencySummary {
    pub fn from_samples(mut samples: Vec<u64>) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        samples.sort_unstable();
        let n = samples.len();
        // Nearest-rank percentiles.
        let rank = |p: f64| samples[((p * n as f64).ceil() as usize).clamp(1, n) - 1];
        Self {
            count: n,
            min_ms: samples[0],
            p50_ms: rank(0.50),
            p95_ms: rank(0.95),
            max_ms: samples[n - 1],
            mean_ms: samples.iter().sum::<u64>() as f64 / n as f64,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct OpCounts {
    /// Ops generated by agents (excluding resubmissions).
    pub submitted: u64,
    pub accepted: u64,
    pub rejected: u64,
    /// Pending ops sent again after a reconnect.
    pub resubmitted: u64,
    pub accepted_by_kind: BTreeMap<PayloadKind, u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Report {
    pub scenario: String,
    pub mode: String,
    pub seed: u64,
    pub passed: bool,
    pub assertions: Vec<AssertionResult>,
    pub ops: OpCounts,
    pub rejections: BTreeMap<RejectReason, u64>,
    pub latency: LatencySummary,
    pub final_seq: u64,
    pub reconnects: u64,
    pub snapshot_catch_ups: u64,
    pub replay_catch_ups: u64,
    /// Simulated milliseconds (in-process) or wall milliseconds (loopback).
    pub duration_ms: u64,
    pub wall_ms: u64,
    /// SHA-256 over every delivered message; equal for equal seeds.
    pub transcript_digest: String,
    /// Field-level differences for the first diverged replica.
    pub divergence: Option<String>,
}

impl Report {
    pub fn assert(&mut self, name: &str, result: Result<String, String>) {
        let (passed, detail) = match result {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        self.assertions.push(AssertionResult {
            name: name.into(),
            passed,
            detail,
        });
        self.passed = self.assertions.iter().all(|a| a.passed);
    }

    pub fn assertion(&self, name: &str) -> Option<&AssertionResult> {
        self.assertions.iter().find(|a| a.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} [{}] seed {}: {}",
            self.scenario,
            self.mode,
            self.seed,
            if self.passed { "PASS" } else { "FAIL" }
        )?;
        for a in &self.assertions {
            writeln!(f, "  {:<5} {:<20} {}", if a.passed { "ok" } else { "FAIL" }, a.name, a.detail)?;
        }
        writeln!(
            f,
            "  ops: {} submitted, {} accepted, {} rejected, {} resubmitted; final seq {}",
            self.ops.submitted, self.ops.accepted, self.ops.rejected, self.ops.resubmitted, self.final_seq
        )?;
        if !self.rejections.is_empty() {
            let parts: Vec<String> = self.rejections.iter().map(|(r, n)| format!("{r} {n}")).collect();
            writeln!(f, "  rejections: {}", parts.join(", "))?;
        }
        writeln!(
            f,
            "  reconnects: {} ({} replay, {} snapshot)",
            self.reconnects, self.replay_catch_ups, self.snapshot_catch_ups
        )?;
        let l = &self.latency;
        writeln!(
            f,
            "  latency ms: min {} p50 {} p95 {} max {} mean {:.1} (n={})",
            l.min_ms, l.p50_ms, l.p95_ms, l.max_ms, l.mean_ms, l.count
        )?;
        write!(f, "  duration {} ms, wall {} ms", self.duration_ms, self.wall_ms)?;
        if !self.transcript_digest.is_empty() {
            write!(f, "\n  transcript {}", self.transcript_digest)?;
        }
        if let Some(d) = &self.divergence {
            write!(f, "\n  divergence:\n{d}")?;
        }
        Ok(())
    }
}
