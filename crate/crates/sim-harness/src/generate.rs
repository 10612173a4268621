//! Random payloads drawn from an op mix against an agent's replica.

use std::collections::BTreeSet;

use mindmap_core::geometry::panel_fit;
use mindmap_core::*;
use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::{IteratorRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::scenario::Scenario;

const WORDS: &[&str] = &[
    "rain", "Rain", "rivers", "ocean", "sun", "heat", "vapour", "clouds", "snow", "ice",
    "water cycle", "Water  cycle", "groundwater", "plants", "",
];

/// Share of CreateLink ops drawn from recently created notes.
const HOT_LINK_FRACTION: f64 = 0.3;
const RECENT_NOTES: usize = 4;

/// Ids that no replica will ever hold.
const PHANTOM: UserId = UserId(u32::MAX);

/// Ids this agent has ever observed, live or deleted.
#[derive(Debug, Default, Clone)]
struct Seen {
    notes: Vec<NoteId>,
    links: Vec<LinkId>,
    labels: Vec<LabelId>,
    panels: Vec<PanelId>,
}

pub struct OpGenerator {
    rng: ChaCha8Rng,
    kinds: Vec<PayloadKind>,
    weights: WeightedIndex<u32>,
    stale_fraction: f64,
    seen: Seen,
}

impl OpGenerator {
    pub fn new(rng: ChaCha8Rng, scenario: &Scenario) -> Self {
        let (kinds, weights): (Vec<_>, Vec<_>) = scenario
            .op_mix
            .iter()
            .filter(|(_, w)| **w > 0)
            .map(|(k, w)| (*k, *w))
            .unzip();
        Self {
            rng,
            kinds,
            weights: WeightedIndex::new(weights).expect("validated mix"),
            stale_fraction: scenario.stale_fraction,
            seen: Seen::default(),
        }
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Remember ids created by an applied operation.
    pub fn observe(&mut self, op: &Operation) {
        match op.payload.kind() {
            PayloadKind::CreateNote => self.seen.notes.push(op.created_note_id()),
            PayloadKind::CreateLink => self.seen.links.push(op.created_link_id()),
            PayloadKind::AttachLabel => self.seen.labels.push(op.created_label_id()),
            PayloadKind::CreatePanel => self.seen.panels.push(op.created_panel_id()),
            _ => {}
        }
    }

    /// Remember every id present in a state (after a snapshot join).
    pub fn observe_state(&mut self, state: &WorkspaceState) {
        self.seen.notes.extend(state.notes.keys());
        self.seen.links.extend(state.links.keys());
        self.seen.labels.extend(state.labels.keys());
        self.seen.panels.extend(state.panels.keys());
    }

    pub fn next(&mut self, state: &WorkspaceState, me: UserId) -> OperationPayload {
        let kind = self.kinds[self.weights.sample(&mut self.rng)];
        let stale = self.rng.gen_bool(self.stale_fraction);
        self.payload(kind, stale, state, me)
            .unwrap_or_else(|| self.create_note(state))
    }

    fn coord(&mut self) -> f64 {
        (self.rng.gen_range(-8000..8000) as f64) * 0.25
    }

    fn text(&mut self) -> String {
        WORDS.choose(&mut self.rng).expect("non-empty").to_string()
    }

    fn color(&mut self) -> NoteColor {
        NoteColor::new(self.rng.gen_range(0..8)).expect("in palette")
    }

    fn note(&mut self, state: &WorkspaceState, stale: bool) -> Option<NoteId> {
        if stale {
            return Some(
                self.seen
                    .notes
                    .choose(&mut self.rng)
                    .copied()
                    .unwrap_or(NoteId::new(PHANTOM, 1)),
            );
        }
        state.notes.keys().copied().choose(&mut self.rng)
    }

    /// One of the last few live notes this agent saw created.
    fn recent_note(&mut self, state: &WorkspaceState) -> Option<NoteId> {
        self.seen
            .notes
            .iter()
            .rev()
            .filter(|n| state.notes.contains_key(n))
            .take(RECENT_NOTES)
            .copied()
            .choose(&mut self.rng)
    }

    fn link(&mut self, state: &WorkspaceState, stale: bool) -> Option<LinkId> {
        if stale {
            return Some(self.seen.links.choose(&mut self.rng).copied().unwrap_or(LinkId::new(PHANTOM, 1)));
        }
        state.links.keys().copied().choose(&mut self.rng)
    }

    fn label(&mut self, state: &WorkspaceState, stale: bool) -> Option<LabelId> {
        if stale {
            return Some(self.seen.labels.choose(&mut self.rng).copied().unwrap_or(LabelId::new(PHANTOM, 1)));
        }
        state.labels.keys().copied().choose(&mut self.rng)
    }

    fn panel(&mut self, state: &WorkspaceState, stale: bool) -> Option<PanelId> {
        if stale {
            return Some(self.seen.panels.choose(&mut self.rng).copied().unwrap_or(PanelId::new(PHANTOM, 1)));
        }
        state.panels.keys().copied().choose(&mut self.rng)
    }

    fn clipboard(&mut self, state: &WorkspaceState, kind: ClipboardKind) -> Option<ClipboardItem> {
        state
            .clipboard
            .iter()
            .filter(|c| c.kind == kind)
            .choose(&mut self.rng)
            .cloned()
    }

    fn create_note(&mut self, state: &WorkspaceState) -> OperationPayload {
        let source = if self.rng.gen_bool(0.4) {
            self.clipboard(state, ClipboardKind::NoteSource)
        } else {
            None
        };
        let (text, from_clipboard) = match source {
            Some(c) => (c.text, Some(c.id)),
            None => (self.text(), None),
        };
        OperationPayload::CreateNote {
            text,
            color: self.color(),
            position: Vec2::new(self.coord(), self.coord()),
            from_clipboard,
        }
    }

    fn payload(
        &mut self,
        kind: PayloadKind,
        stale: bool,
        state: &WorkspaceState,
        me: UserId,
    ) -> Option<OperationPayload> {
        use OperationPayload as P;
        use PayloadKind as K;
        Some(match kind {
            K::CreateNote => self.create_note(state),
            K::SetNoteText => P::SetNoteText {
                note: self.note(state, stale)?,
                text: self.text(),
            },
            K::SetNoteColor => P::SetNoteColor {
                note: self.note(state, stale)?,
                color: self.color(),
            },
            K::MoveNote => {
                let note = self.note(state, stale)?;
                let base = state.notes.get(&note).map_or(Vec2::ZERO, |n| n.position);
                let d = Vec2::new(self.rng.gen_range(-300.0..300.0), self.rng.gen_range(-300.0..300.0));
                P::MoveNote { note, position: base + d }
            }
            K::DeleteNote => P::DeleteNote {
                note: self.note(state, stale)?,
            },
            K::CreateLink => {
                if stale {
                    P::CreateLink {
                        source: self.note(state, true)?,
                        target: self.note(state, false)?,
                    }
                } else {
                    // Prefer an unlinked pair. Recent notes are linked by
                    // several agents at once, which yields concurrent duplicates.
                    let hot = self.rng.gen_bool(HOT_LINK_FRACTION);
                    let mut pair = None;
                    for _ in 0..8 {
                        let (a, b) = if hot {
                            (self.recent_note(state)?, self.recent_note(state)?)
                        } else {
                            (self.note(state, false)?, self.note(state, false)?)
                        };
                        if a != b {
                            pair = Some((a, b));
                            if state.link_between(a, b).is_none() {
                                break;
                            }
                        }
                    }
                    let (source, target) = pair?;
                    P::CreateLink { source, target }
                }
            }
            K::DeleteLink => P::DeleteLink {
                link: self.link(state, stale)?,
            },
            K::AttachLabel => {
                let link = self.link(state, stale)?;
                let source = if self.rng.gen_bool(0.5) {
                    self.clipboard(state, ClipboardKind::LabelSource)
                } else {
                    None
                };
                let (text, from_clipboard) = match source {
                    Some(c) => (c.text, Some(c.id)),
                    None => (self.text(), None),
                };
                P::AttachLabel {
                    link,
                    text,
                    orientation: if self.rng.gen() { Orientation::Forward } else { Orientation::Reverse },
                    from_clipboard,
                }
            }
            K::DetachLabel => P::DetachLabel {
                label: self.label(state, stale)?,
            },
            K::FlipLabel => P::FlipLabel {
                label: self.label(state, stale)?,
            },
            K::SetGroup => {
                let n = self.rng.gen_range(1..=3);
                let mut members = BTreeSet::new();
                for _ in 0..n {
                    members.insert(self.note(state, stale)?);
                }
                P::SetGroup { members }
            }
            K::ClearGroup => {
                if !stale && !state.groups.contains_key(&me) {
                    return None;
                }
                P::ClearGroup
            }
            K::MoveGroup => {
                if !stale && !state.groups.contains_key(&me) {
                    return None;
                }
                P::MoveGroup {
                    delta: Vec2::new(self.rng.gen_range(-200.0..200.0), self.rng.gen_range(-200.0..200.0)),
                }
            }
            K::CreatePanel => {
                let c = match self.note(state, false) {
                    Some(n) => state.notes[&n].position,
                    None => Vec2::new(self.coord(), self.coord()),
                };
                let (w, h) = (self.rng.gen_range(160.0..700.0), self.rng.gen_range(160.0..700.0));
                P::CreatePanel {
                    bounds: Rect::centered(c, w, h),
                }
            }
            K::MovePanel => P::MovePanel {
                panel: self.panel(state, stale)?,
                delta: Vec2::new(self.rng.gen_range(-250.0..250.0), self.rng.gen_range(-250.0..250.0)),
            },
            K::ResizePanel => {
                let panel = self.panel(state, stale)?;
                let bounds = match state.panels.get(&panel) {
                    Some(p) => {
                        let rects: Vec<Rect> = p.attached.iter().map(|n| state.notes[n].rect()).collect();
                        let extra = self.rng.gen_range(0.0..150.0);
                        match panel_fit(&rects, LAYOUT.panel_margin) {
                            Some(fit) => fit.expand(extra),
                            None => p.bounds.expand(extra - 40.0).union(&Rect::centered(p.bounds.center(), 20.0, 20.0)),
                        }
                    }
                    None => Rect::centered(Vec2::ZERO, 300.0, 300.0),
                };
                P::ResizePanel { panel, bounds }
            }
            K::DeletePanel => P::DeletePanel {
                panel: self.panel(state, stale)?,
            },
            K::AttachNoteToPanel => P::AttachNoteToPanel {
                note: self.note(state, stale)?,
                panel: self.panel(state, false).or_else(|| stale.then_some(PanelId::new(PHANTOM, 1)))?,
            },
            K::DetachNoteFromPanel => {
                let note = if stale {
                    self.note(state, true)?
                } else {
                    state
                        .notes
                        .values()
                        .filter(|n| n.panel.is_some())
                        .map(|n| n.id)
                        .choose(&mut self.rng)?
                };
                P::DetachNoteFromPanel { note }
            }
        })
    }
}
