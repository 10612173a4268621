mod common;

use std::collections::BTreeSet;

use common::*;
use mindmap_core::awareness::{
    clone_classes, clone_targets, minimap_project, normalize_text, world_bounds, MinimapGeometry,
    MinimapItemKind,
};
use mindmap_core::snapshot::{restore_bytes, to_canonical_bytes};
use mindmap_core::*;
use proptest::prelude::*;

/// Pairwise scan oracle for clone targets.
fn naive_clones(state: &WorkspaceState, source: NoteId) -> BTreeSet<NoteId> {
    let src = &state.notes[&source];
    let key: String = src.text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    if key.is_empty() {
        return BTreeSet::new();
    }
    state
        .notes
        .values()
        .filter(|n| {
            n.id != source
                && n.text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase() == key
        })
        .map(|n| n.id)
        .collect()
}

#[test]
fn clone_targets_match_naive_scan_and_are_symmetric() {
    for seed in 0..100 {
        let (state, _) = random_run(seed, 120);
        for id in state.notes.keys() {
            let got = clone_targets(&state, *id, false).targets;
            assert_eq!(got, naive_clones(&state, *id), "seed {seed}");
            assert!(!got.contains(id));
            for t in &got {
                assert!(clone_targets(&state, *t, false).targets.contains(id));
            }
        }
        for class in clone_classes(&state) {
            for id in &class {
                let mut expected = class.clone();
                expected.remove(id);
                assert_eq!(clone_targets(&state, *id, true).targets, expected);
            }
        }
    }
}

#[test]
fn minimap_item_count_matches_workspace() {
    for seed in 0..30 {
        let (state, _) = random_run(seed, 200);
        let world = world_bounds(&state);
        let m = minimap_project(&state, &[], world, Vec2::new(240.0, 160.0));
        let expected = state.notes.len() + state.links.len() + state.labels.len() + state.panels.len();
        assert_eq!(m.items.len(), expected, "seed {seed}");
        let count = |k| m.items.iter().filter(|i| i.kind == k).count();
        assert_eq!(count(MinimapItemKind::Note), state.notes.len());
        assert_eq!(count(MinimapItemKind::Label), state.labels.len());
        // everything lands inside the minimap
        for item in &m.items {
            let pts = match item.geometry {
                MinimapGeometry::Rect { rect } => vec![rect.min, rect.max],
                MinimapGeometry::Segment { from, to } => vec![from, to],
                MinimapGeometry::Point { at } => vec![at],
            };
            for p in pts {
                assert!(p.x >= -1e-9 && p.x <= 240.0 + 1e-9 && p.y >= -1e-9 && p.y <= 160.0 + 1e-9);
            }
        }
    }
}

#[test]
fn randomized_snapshot_round_trip_is_byte_stable() {
    for seed in 0..20 {
        let (state, _) = random_run(seed, 500);
        let bytes = to_canonical_bytes(&state);
        let back = restore_bytes(&bytes).unwrap();
        assert_eq!(back, state);
        assert_eq!(to_canonical_bytes(&back), bytes);
    }
}

proptest! {
    #[test]
    fn normalize_is_idempotent(s in "\\PC*") {
        let once = normalize_text(&s);
        prop_assert_eq!(normalize_text(&once), once.clone());
        prop_assert!(!once.starts_with(' ') && !once.ends_with(' '));
        prop_assert!(!once.contains("  "));
    }

    #[test]
    fn normalize_idempotent_on_whitespace_heavy(s in "[ \\tA-Za-zİẞ\\n]{0,40}") {
        let once = normalize_text(&s);
        prop_assert_eq!(normalize_text(&once), once);
    }

    #[test]
    fn minimap_is_monotone_and_aspect_preserving(
        x0 in -5000.0..5000.0f64, y0 in -5000.0..5000.0f64,
        w in 10.0..8000.0f64, h in 10.0..8000.0f64,
        mw in 10.0..400.0f64, mh in 10.0..400.0f64,
        px in prop::collection::vec(0.0..1.0f64, 2), py in prop::collection::vec(0.0..1.0f64, 2),
    ) {
        let world = Rect::from_coords(x0, y0, x0 + w, y0 + h);
        let m = minimap_project(&WorkspaceState::default(), &[], world, Vec2::new(mw, mh));
        prop_assert!((m.scale - (mw / w).min(mh / h)).abs() < 1e-15);
        let p = |i: usize| Vec2::new(x0 + px[i] * w, y0 + py[i] * h);
        let (a, b) = (m.project(p(0)), m.project(p(1)));
        if p(0).x <= p(1).x { prop_assert!(a.x <= b.x) } else { prop_assert!(a.x >= b.x) }
        if p(0).y <= p(1).y { prop_assert!(a.y <= b.y) } else { prop_assert!(a.y >= b.y) }
        // uniform scale on both axes
        let d = m.project(world.max) - m.project(world.min);
        prop_assert!((d.x / w - d.y / h).abs() < 1e-9);
    }
}
