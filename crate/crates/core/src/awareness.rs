//! Situational-awareness derivations: clone indicators and the minimap.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::geometry::{Rect, Vec2};
use crate::ids::{NoteId, UserId};
use crate::model::{AvatarColor, WorkspaceState};
use crate::protocol::PresenceState;

/// Minimum minimap world extent on each axis.
pub const MIN_WORLD_EXTENT: f64 = 2000.0;
/// Growth applied to the content bounding box for the minimap world.
pub const WORLD_PADDING: f64 = 0.10;

/// Text identity for clone matching: trimmed, internal whitespace runs
/// collapsed to one space, lower-cased.
pub fn normalize_text(s: &str) -> String {
    s.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Notes whose content duplicates a held or freshly created note.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CloneIndicatorSet {
    pub source: NoteId,
    pub targets: BTreeSet<NoteId>,
    /// True while the source note is being held or created.
    pub active: bool,
}

/// All other notes whose normalized text equals `source`'s. Empty text never
/// matches. An unknown source yields no targets.
pub fn clone_targets(state: &WorkspaceState, source: NoteId, active: bool) -> CloneIndicatorSet {
    let key = state
        .notes
        .get(&source)
        .map(|n| normalize_text(&n.text))
        .filter(|k| !k.is_empty());
    let targets = match key {
        None => BTreeSet::new(),
        Some(key) => state
            .notes
            .values()
            .filter(|n| n.id != source && normalize_text(&n.text) == key)
            .map(|n| n.id)
            .collect(),
    };
    CloneIndicatorSet {
        source,
        targets,
        active,
    }
}

/// Partition of all non-empty notes by normalized text. Only classes with at
/// least two members are returned.
pub fn clone_classes(state: &WorkspaceState) -> Vec<BTreeSet<NoteId>> {
    let mut classes: BTreeMap<String, BTreeSet<NoteId>> = BTreeMap::new();
    for n in state.notes.values() {
        let key = normalize_text(&n.text);
        if !key.is_empty() {
            classes.entry(key).or_default().insert(n.id);
        }
    }
    classes.into_values().filter(|c| c.len() > 1).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum MinimapItemKind {
    Note,
    Link,
    Label,
    Panel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "camelCase")]
pub enum MinimapGeometry {
    Rect { rect: Rect },
    Segment { from: Vec2, to: Vec2 },
    Point { at: Vec2 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MinimapItem {
    pub kind: MinimapItemKind,
    /// Geometry in minimap coordinates.
    pub geometry: MinimapGeometry,
    pub creator: UserId,
    /// Creator's avatar colour; `None` when the creator is not in the roster.
    pub color: Option<AvatarColor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MinimapViewport {
    pub user: UserId,
    pub rect: Rect,
    pub color: AvatarColor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MinimapModel {
    /// World units to minimap units.
    pub scale: f64,
    pub world: Rect,
    /// Minimap position of `world.min`; centres the scaled world.
    pub offset: Vec2,
    pub items: Vec<MinimapItem>,
    pub viewports: Vec<MinimapViewport>,
}

impl MinimapModel {
    pub fn project(&self, p: Vec2) -> Vec2 {
        Vec2::new(
            (p.x - self.world.min.x) * self.scale + self.offset.x,
            (p.y - self.world.min.y) * self.scale + self.offset.y,
        )
    }

    pub fn project_rect(&self, r: &Rect) -> Rect {
        Rect::new(self.project(r.min), self.project(r.max))
    }
}

/// Content bounding box grown by 10% and never smaller than
/// [`MIN_WORLD_EXTENT`] on either axis.
pub fn world_bounds(state: &WorkspaceState) -> Rect {
    let content = state
        .notes
        .values()
        .map(|n| n.rect())
        .chain(state.panels.values().map(|p| p.bounds))
        .reduce(|a, b| a.union(&b));
    let Some(content) = content else {
        return Rect::centered(Vec2::ZERO, MIN_WORLD_EXTENT, MIN_WORLD_EXTENT);
    };
    let w = (content.width() * (1.0 + WORLD_PADDING)).max(MIN_WORLD_EXTENT);
    let h = (content.height() * (1.0 + WORLD_PADDING)).max(MIN_WORLD_EXTENT);
    Rect::centered(content.center(), w, h)
}

/// Project the workspace and everyone's viewport into a `minimap_size`
/// overview of `world`, uniformly scaled and centred.
pub fn minimap_project(
    state: &WorkspaceState,
    presence: &[PresenceState],
    world: Rect,
    minimap_size: Vec2,
) -> MinimapModel {
    assert!(
        world.width() > 0.0 && world.height() > 0.0,
        "minimap world must be non-degenerate"
    );
    let scale = (minimap_size.x / world.width()).min(minimap_size.y / world.height());
    let offset = Vec2::new(
        (minimap_size.x - world.width() * scale) / 2.0,
        (minimap_size.y - world.height() * scale) / 2.0,
    );
    let mut model = MinimapModel {
        scale,
        world,
        offset,
        items: Vec::new(),
        viewports: Vec::new(),
    };

    let colors: BTreeMap<UserId, AvatarColor> =
        presence.iter().map(|p| (p.user, p.color)).collect();
    let mut items = Vec::with_capacity(
        state.panels.len() + state.notes.len() + state.links.len() + state.labels.len(),
    );
    let mut push = |kind, geometry, creator: UserId| {
        items.push(MinimapItem {
            kind,
            geometry,
            creator,
            color: colors.get(&creator).copied(),
        })
    };

    for p in state.panels.values() {
        let rect = model.project_rect(&p.bounds);
        push(MinimapItemKind::Panel, MinimapGeometry::Rect { rect }, p.creator);
    }
    for l in state.links.values() {
        let (Some(a), Some(b)) = (state.notes.get(&l.source), state.notes.get(&l.target)) else {
            continue;
        };
        let geometry = MinimapGeometry::Segment {
            from: model.project(a.pin()),
            to: model.project(b.pin()),
        };
        push(MinimapItemKind::Link, geometry, l.creator);
        for (label, at) in state.label_positions(l.id) {
            let creator = state.labels[&label].creator;
            let at = model.project(at);
            push(MinimapItemKind::Label, MinimapGeometry::Point { at }, creator);
        }
    }
    for n in state.notes.values() {
        let rect = model.project_rect(&n.rect());
        push(MinimapItemKind::Note, MinimapGeometry::Rect { rect }, n.creator);
    }
    model.items = items;

    model.viewports = presence
        .iter()
        .map(|p| MinimapViewport {
            user: p.user,
            rect: model.project_rect(&p.viewport),
            color: p.color,
        })
        .collect();
    model
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NoteColor;
    use crate::op::{Operation, OperationPayload};

    fn state_with(texts: &[&str]) -> (WorkspaceState, Vec<NoteId>) {
        let mut s = WorkspaceState::default();
        let mut ids = Vec::new();
        for (i, t) in texts.iter().enumerate() {
            let op = Operation::new(
                UserId(1),
                i as u64 + 1,
                OperationPayload::CreateNote {
                    text: t.to_string(),
                    color: NoteColor::new(0).unwrap(),
                    position: Vec2::new(i as f64 * 200.0, 0.0),
                    from_clipboard: None,
                },
            );
            ids.push(op.created_note_id());
            s.apply(&op);
        }
        (s, ids)
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_text("  Water\tCycle "), "water cycle");
        assert_eq!(normalize_text(""), "");
        assert_eq!(normalize_text("a \n\n  B"), "a b");
    }

    #[test]
    fn clone_examples() {
        let (s, ids) = state_with(&["Cats", "cats ", "Dogs", "CATS"]);
        let set = clone_targets(&s, ids[3], true);
        assert_eq!(set.targets, BTreeSet::from([ids[0], ids[1]]));
        assert!(set.active);

        let (s, ids) = state_with(&["unique", "other"]);
        assert!(clone_targets(&s, ids[0], false).targets.is_empty());

        let (s, ids) = state_with(&["", "", "  "]);
        assert!(clone_targets(&s, ids[0], true).targets.is_empty());
        assert!(clone_classes(&s).is_empty());
    }

    fn presence(user: u32, color: u8, viewport: Rect) -> PresenceState {
        PresenceState {
            user: UserId(user),
            name: format!("user{user}"),
            color: AvatarColor::new(color).unwrap(),
            cursor: Vec2::ZERO,
            viewport,
            holding: None,
            speaking: false,
            last_heard: 0,
        }
    }

    #[test]
    fn minimap_linear_map() {
        let (s, ids) = state_with(&["x"]);
        let mut s = s;
        s.notes.get_mut(&ids[0]).unwrap().position = Vec2::new(500.0, 500.0);
        let world = Rect::from_coords(0.0, 0.0, 1000.0, 1000.0);
        let m = minimap_project(&s, &[], world, Vec2::new(100.0, 100.0));
        assert_eq!(m.scale, 0.1);
        assert_eq!(m.project(Vec2::new(500.0, 500.0)), Vec2::new(50.0, 50.0));
        let MinimapGeometry::Rect { rect } = m.items[0].geometry else {
            panic!("note should be a rect");
        };
        assert_eq!(rect.center(), Vec2::new(50.0, 50.0));
        assert_eq!(m.items[0].color, None);
    }

    #[test]
    fn minimap_empty_workspace_still_shows_viewports() {
        let s = WorkspaceState::default();
        let world = world_bounds(&s);
        assert_eq!(world, Rect::from_coords(-1000.0, -1000.0, 1000.0, 1000.0));
        let p = [presence(1, 2, Rect::from_coords(0.0, 0.0, 400.0, 300.0))];
        let m = minimap_project(&s, &p, world, Vec2::new(200.0, 100.0));
        assert!(m.items.is_empty());
        assert_eq!(m.viewports.len(), 1);
        assert_eq!(m.viewports[0].color.index(), 2);
        // 2000x2000 world into 200x100: scale 0.05, horizontally centred.
        assert_eq!(m.scale, 0.05);
        assert_eq!(m.offset, Vec2::new(50.0, 0.0));
        assert_eq!(m.viewports[0].rect, Rect::from_coords(100.0, 50.0, 120.0, 65.0));
    }

    #[test]
    fn world_bounds_grow_with_content() {
        let (mut s, ids) = state_with(&["a", "b"]);
        s.notes.get_mut(&ids[0]).unwrap().position = Vec2::new(-5000.0, 0.0);
        s.notes.get_mut(&ids[1]).unwrap().position = Vec2::new(5000.0, 0.0);
        let w = world_bounds(&s);
        // content spans 10120 wide, 120 tall
        assert!((w.width() - 10120.0 * 1.1).abs() < 1e-9);
        assert_eq!(w.height(), MIN_WORLD_EXTENT);
        assert_eq!(w.center(), Vec2::ZERO);
    }
}
