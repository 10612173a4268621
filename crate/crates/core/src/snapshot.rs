//! Canonical snapshot documents.
//!
//! A snapshot lists every object in id order with fixed field order, so two
//! replicas holding the same state serialize to the same bytes.

use serde::{Deserialize, Serialize};

use crate::integrity::{check_integrity, Violation};
use crate::model::{ClipboardItem, GroupSelection, Label, Link, Note, Panel, WorkspaceState};

pub const SNAPSHOT_FORMAT: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SnapshotDocument {
    pub format: u32,
    pub applied_seq: u64,
    pub notes: Vec<Note>,
    pub links: Vec<Link>,
    pub labels: Vec<Label>,
    pub panels: Vec<Panel>,
    pub groups: Vec<GroupSelection>,
    pub clipboard: Vec<ClipboardItem>,
}

#[derive(Debug, thiserror::Error)]
pub enum RestoreError {
    #[error("malformed snapshot: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("unsupported snapshot format {0}")]
    UnsupportedFormat(u32),
    #[error("duplicate {kind} id {id}")]
    DuplicateId { kind: &'static str, id: String },
    #[error("integrity violation: {}", .0.iter().map(|v| v.0.as_str()).collect::<Vec<_>>().join("; "))]
    IntegrityViolation(Vec<Violation>),
}

pub fn snapshot(state: &WorkspaceState) -> SnapshotDocument {
    SnapshotDocument {
        format: SNAPSHOT_FORMAT,
        applied_seq: state.applied_seq,
        notes: state.notes.values().cloned().collect(),
        links: state.links.values().cloned().collect(),
        labels: state.labels.values().cloned().collect(),
        panels: state.panels.values().cloned().collect(),
        groups: state.groups.values().cloned().collect(),
        clipboard: state.clipboard.clone(),
    }
}

macro_rules! collect_unique {
    ($items:expr, $key:expr, $kind:literal) => {{
        let mut map = std::collections::BTreeMap::new();
        for item in $items {
            let k = $key(&item);
            if map.insert(k, item).is_some() {
                return Err(RestoreError::DuplicateId {
                    kind: $kind,
                    id: format!("{k}"),
                });
            }
        }
        map
    }};
}

pub fn restore(doc: SnapshotDocument) -> Result<WorkspaceState, RestoreError> {
    if doc.format != SNAPSHOT_FORMAT {
        return Err(RestoreError::UnsupportedFormat(doc.format));
    }
    let state = WorkspaceState {
        notes: collect_unique!(doc.notes, |n: &Note| n.id, "note"),
        links: collect_unique!(doc.links, |l: &Link| l.id, "link"),
        labels: collect_unique!(doc.labels, |l: &Label| l.id, "label"),
        panels: collect_unique!(doc.panels, |p: &Panel| p.id, "panel"),
        groups: collect_unique!(doc.groups, |g: &GroupSelection| g.owner, "group"),
        clipboard: doc.clipboard,
        applied_seq: doc.applied_seq,
    };
    let violations = check_integrity(&state);
    if !violations.is_empty() {
        return Err(RestoreError::IntegrityViolation(violations));
    }
    Ok(state)
}

/// Canonical byte encoding (compact JSON).
pub fn to_canonical_bytes(state: &WorkspaceState) -> Vec<u8> {
    serde_json::to_vec(&snapshot(state)).expect("snapshot serialization is infallible")
}

pub fn restore_bytes(bytes: &[u8]) -> Result<WorkspaceState, RestoreError> {
    restore(serde_json::from_slice(bytes)?)
}
