#![allow(dead_code)]

use std::collections::BTreeSet;

use mindmap_core::*;
use rand::seq::IteratorRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TEXTS: &[&str] = &["water", "Water ", "fire", "  FIRE", "earth", "air", "", "water  cycle", "Water\tCycle"];

pub fn color(i: u8) -> NoteColor {
    NoteColor::new(i).unwrap()
}

pub fn op(user: u32, seq: u64, payload: OperationPayload) -> Operation {
    Operation::new(UserId(user), seq, payload)
}

pub fn create_note(user: u32, seq: u64, text: &str, x: f64, y: f64) -> Operation {
    op(
        user,
        seq,
        OperationPayload::CreateNote {
            text: text.into(),
            color: color(0),
            position: Vec2::new(x, y),
            from_clipboard: None,
        },
    )
}

/// Applies `op`, panicking on rejection.
pub fn must(state: &mut WorkspaceState, op: &Operation) -> Vec<StateEvent> {
    state
        .try_apply(op)
        .unwrap_or_else(|r| panic!("{:?} rejected: {r}", op.payload))
}

fn pick<T: Copy>(rng: &mut ChaCha8Rng, it: impl Iterator<Item = T>) -> Option<T> {
    it.choose(rng)
}

fn coord(rng: &mut ChaCha8Rng) -> f64 {
    // Quarter-unit grid keeps values exactly representable but not trivial.
    (rng.gen_range(-4000..4000) as f64) * 0.25 + rng.gen::<f64>() * 1e-3
}

/// A random payload, mostly valid against `state`, sometimes stale.
pub fn random_payload(rng: &mut ChaCha8Rng, state: &WorkspaceState) -> OperationPayload {
    use OperationPayload as P;
    let note = |rng: &mut ChaCha8Rng| {
        pick(rng, state.notes.keys().copied())
            .unwrap_or(NoteId::new(UserId(99), rng.gen_range(1..5)))
    };
    let link = |rng: &mut ChaCha8Rng| {
        pick(rng, state.links.keys().copied()).unwrap_or(LinkId::new(UserId(99), 1))
    };
    let label = |rng: &mut ChaCha8Rng| {
        pick(rng, state.labels.keys().copied()).unwrap_or(LabelId::new(UserId(99), 1))
    };
    let panel = |rng: &mut ChaCha8Rng| {
        pick(rng, state.panels.keys().copied()).unwrap_or(PanelId::new(UserId(99), 1))
    };
    let text = |rng: &mut ChaCha8Rng| TEXTS[rng.gen_range(0..TEXTS.len())].to_string();
    match rng.gen_range(0..24) {
        0..=4 => P::CreateNote {
            text: text(rng),
            color: color(rng.gen_range(0..8)),
            position: Vec2::new(coord(rng), coord(rng)),
            from_clipboard: None,
        },
        5 => P::SetNoteText {
            note: note(rng),
            text: text(rng),
        },
        6 => P::SetNoteColor {
            note: note(rng),
            color: color(rng.gen_range(0..8)),
        },
        7 | 8 => P::MoveNote {
            note: note(rng),
            position: Vec2::new(coord(rng), coord(rng)),
        },
        9 => P::DeleteNote { note: note(rng) },
        10..=12 => P::CreateLink {
            source: note(rng),
            target: note(rng),
        },
        13 => P::DeleteLink { link: link(rng) },
        14 => P::AttachLabel {
            link: link(rng),
            text: text(rng),
            orientation: if rng.gen() { Orientation::Forward } else { Orientation::Reverse },
            from_clipboard: None,
        },
        15 => P::DetachLabel { label: label(rng) },
        16 => P::FlipLabel { label: label(rng) },
        17 => {
            let n = rng.gen_range(0..4);
            let members: BTreeSet<NoteId> = (0..n).map(|_| note(rng)).collect();
            P::SetGroup { members }
        }
        18 => {
            if rng.gen_bool(0.3) {
                P::ClearGroup
            } else {
                P::MoveGroup {
                    delta: Vec2::new(coord(rng) / 10.0, coord(rng) / 10.0),
                }
            }
        }
        19 => {
            let (x, y) = (coord(rng), coord(rng));
            P::CreatePanel {
                bounds: Rect::from_coords(x, y, x + rng.gen_range(50.0..600.0), y + rng.gen_range(50.0..600.0)),
            }
        }
        20 => {
            if rng.gen_bool(0.5) {
                P::MovePanel {
                    panel: panel(rng),
                    delta: Vec2::new(coord(rng) / 10.0, coord(rng) / 10.0),
                }
            } else {
                let p = panel(rng);
                let base = state.panels.get(&p).map(|p| p.bounds).unwrap_or(Rect::from_coords(0.0, 0.0, 10.0, 10.0));
                P::ResizePanel {
                    panel: p,
                    bounds: base.expand(rng.gen_range(-30.0..200.0)),
                }
            }
        }
        21 => P::DeletePanel { panel: panel(rng) },
        22 => P::AttachNoteToPanel {
            note: note(rng),
            panel: panel(rng),
        },
        _ => P::DetachNoteFromPanel { note: note(rng) },
    }
}

/// Folds `n` random submissions from users 1..=4 into an empty state,
/// skipping rejections. Returns the state and accepted ops.
pub fn random_run(seed: u64, n: usize) -> (WorkspaceState, Vec<Operation>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = WorkspaceState::default();
    let mut seqs = [0u64; 5];
    let mut accepted = Vec::new();
    for _ in 0..n {
        let user = rng.gen_range(1..=4u32);
        seqs[user as usize] += 1;
        let payload = random_payload(&mut rng, &state);
        let o = op(user, seqs[user as usize], payload);
        if state.try_apply(&o).is_ok() {
            accepted.push(o);
        }
    }
    (state, accepted)
}
