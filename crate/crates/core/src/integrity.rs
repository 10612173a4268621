//! Full-scan invariant checks over a [`WorkspaceState`].
//!
//! Deliberately naive: every rule is re-derived from the maps directly so the
//! checker shares no bookkeeping with `apply`.

use std::collections::BTreeSet;
use std::fmt;

use crate::geometry::{panel_fit, Rect, LAYOUT};
use crate::model::WorkspaceState;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation(pub String);

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

macro_rules! violation {
    ($out:expr, $($arg:tt)*) => {
        $out.push(Violation(format!($($arg)*)))
    };
}

/// Every broken invariant in `state`; empty when the document is consistent.
pub fn check_integrity(state: &WorkspaceState) -> Vec<Violation> {
    let mut out = Vec::new();

    for (id, note) in &state.notes {
        if *id != note.id {
            violation!(out, "note keyed {id} carries id {}", note.id);
        }
        if !note.position.is_finite() {
            violation!(out, "note {id} has non-finite position");
        }
        if let Some(panel) = note.panel {
            match state.panels.get(&panel) {
                None => violation!(out, "note {id} attached to missing panel {panel}"),
                Some(p) if !p.attached.contains(id) => {
                    violation!(out, "note {id} claims panel {panel} which does not list it")
                }
                Some(_) => {}
            }
        }
    }

    let mut pairs = BTreeSet::new();
    for (id, link) in &state.links {
        if *id != link.id {
            violation!(out, "link keyed {id} carries id {}", link.id);
        }
        if link.source == link.target {
            violation!(out, "link {id} is a self link");
        }
        for end in [link.source, link.target] {
            if !state.notes.contains_key(&end) {
                violation!(out, "link {id} references missing note {end}");
            }
        }
        let pair = if link.source <= link.target {
            (link.source, link.target)
        } else {
            (link.target, link.source)
        };
        if !pairs.insert(pair) {
            violation!(out, "link {id} duplicates pair {} / {}", pair.0, pair.1);
        }
        let mut seen = BTreeSet::new();
        for label in &link.labels {
            if !seen.insert(*label) {
                violation!(out, "link {id} lists label {label} twice");
            }
            match state.labels.get(label) {
                None => violation!(out, "link {id} lists missing label {label}"),
                Some(l) if l.link != *id => {
                    violation!(out, "link {id} lists label {label} owned by {}", l.link)
                }
                Some(_) => {}
            }
        }
    }

    for (id, label) in &state.labels {
        if *id != label.id {
            violation!(out, "label keyed {id} carries id {}", label.id);
        }
        match state.links.get(&label.link) {
            None => violation!(out, "label {id} on missing link {}", label.link),
            Some(l) if !l.labels.contains(id) => {
                violation!(out, "label {id} not listed by its link {}", label.link)
            }
            Some(_) => {}
        }
    }

    for (id, panel) in &state.panels {
        if *id != panel.id {
            violation!(out, "panel keyed {id} carries id {}", panel.id);
        }
        if !panel.bounds.is_well_formed() {
            violation!(out, "panel {id} has malformed bounds");
        }
        let mut seen = BTreeSet::new();
        let mut rects: Vec<Rect> = Vec::new();
        for n in &panel.attached {
            if !seen.insert(*n) {
                violation!(out, "panel {id} lists note {n} twice");
            }
            match state.notes.get(n) {
                None => violation!(out, "panel {id} lists missing note {n}"),
                Some(note) => {
                    if note.panel != Some(*id) {
                        violation!(out, "panel {id} lists note {n} attached elsewhere");
                    }
                    let r = LAYOUT.note_rect(note.position);
                    if !panel.bounds.contains_rect(&r) {
                        violation!(out, "panel {id} does not contain note {n}");
                    }
                    rects.push(r);
                }
            }
        }
        if panel.auto_resize {
            if let Some(fit) = panel_fit(&rects, LAYOUT.panel_margin) {
                if fit != panel.bounds {
                    violation!(out, "auto-resize panel {id} bounds differ from fit");
                }
            }
        }
    }

    for (owner, group) in &state.groups {
        if *owner != group.owner {
            violation!(out, "group keyed {owner} owned by {}", group.owner);
        }
        if group.members.is_empty() {
            violation!(out, "group of {owner} is empty");
        }
        for m in &group.members {
            if !state.notes.contains_key(m) {
                violation!(out, "group of {owner} lists missing note {m}");
            }
        }
    }

    let mut clip = BTreeSet::new();
    for item in &state.clipboard {
        if !clip.insert(item.id) {
            violation!(out, "clipboard id {} repeated", item.id.0);
        }
    }

    out
}
