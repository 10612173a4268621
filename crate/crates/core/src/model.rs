//! Workspace document types.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::geometry::{label_layout, Rect, Vec2, LAYOUT};
use crate::ids::{ClipboardItemId, LabelId, LinkId, NoteId, PanelId, UserId};

/// Number of entries in both the note and avatar palettes.
pub const PALETTE_SIZE: u8 = 8;

/// Upper bound on note and label text, in characters.
pub const MAX_TEXT_CHARS: usize = 1024;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("palette index {0} out of range (0..{PALETTE_SIZE})")]
pub struct PaletteIndexError(u8);

macro_rules! palette_index {
    ($(#[$meta:meta])* $name:ident, $hex:expr) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(try_from = "u8", into = "u8")]
        pub struct $name(u8);

        impl $name {
            pub const ALL: [$name; PALETTE_SIZE as usize] =
                [$name(0), $name(1), $name(2), $name(3), $name(4), $name(5), $name(6), $name(7)];

            pub fn new(index: u8) -> Result<Self, PaletteIndexError> {
                if index < PALETTE_SIZE {
                    Ok(Self(index))
                } else {
                    Err(PaletteIndexError(index))
                }
            }

            pub fn index(self) -> u8 {
                self.0
            }

            /// CSS hex colour for rendering.
            pub fn hex(self) -> &'static str {
                $hex[self.0 as usize]
            }
        }

        impl TryFrom<u8> for $name {
            type Error = PaletteIndexError;
            fn try_from(v: u8) -> Result<Self, Self::Error> {
                Self::new(v)
            }
        }

        impl From<$name> for u8 {
            fn from(c: $name) -> u8 {
                c.0
            }
        }
    };
}

palette_index!(
    /// Sticky-note colour.
    NoteColor,
    ["#fff176", "#ffb74d", "#f48fb1", "#ce93d8", "#90caf9", "#80deea", "#a5d6a7", "#e0e0e0"]
);
palette_index!(
    /// Avatar colour of a participant; also used for everything they create
    /// in the minimap and dashboard.
    AvatarColor,
    ["#e53935", "#1e88e5", "#43a047", "#fb8c00", "#8e24aa", "#00897b", "#6d4c41", "#3949ab"]
);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Note {
    pub id: NoteId,
    pub text: String,
    pub color: NoteColor,
    /// Centre of the note rectangle.
    pub position: Vec2,
    pub creator: UserId,
    pub panel: Option<PanelId>,
}

impl Note {
    pub fn rect(&self) -> Rect {
        LAYOUT.note_rect(self.position)
    }

    pub fn pin(&self) -> Vec2 {
        LAYOUT.pin_anchor(self.position)
    }
}

/// Undirected link between two notes. Direction lives on its labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Link {
    pub id: LinkId,
    pub source: NoteId,
    pub target: NoteId,
    pub creator: UserId,
    pub labels: Vec<LabelId>,
}

impl Link {
    pub fn connects(&self, a: NoteId, b: NoteId) -> bool {
        (self.source == a && self.target == b) || (self.source == b && self.target == a)
    }

    pub fn touches(&self, note: NoteId) -> bool {
        self.source == note || self.target == note
    }
}

/// Arrow direction of a label relative to its link's source→target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Orientation {
    Forward,
    Reverse,
}

impl Orientation {
    pub fn flipped(self) -> Self {
        match self {
            Orientation::Forward => Orientation::Reverse,
            Orientation::Reverse => Orientation::Forward,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Label {
    pub id: LabelId,
    pub text: String,
    pub orientation: Orientation,
    pub creator: UserId,
    pub link: LinkId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Panel {
    pub id: PanelId,
    pub bounds: Rect,
    /// Attached notes in attachment order.
    pub attached: Vec<NoteId>,
    pub creator: UserId,
    pub auto_resize: bool,
}

/// A user's current multi-selection. Absent from the state when empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GroupSelection {
    pub owner: UserId,
    pub members: BTreeSet<NoteId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ClipboardKind {
    NoteSource,
    LabelSource,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ClipboardItem {
    pub id: ClipboardItemId,
    pub text: String,
    pub kind: ClipboardKind,
}

/// The replicated mind-map document.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WorkspaceState {
    pub notes: BTreeMap<NoteId, Note>,
    pub links: BTreeMap<LinkId, Link>,
    pub labels: BTreeMap<LabelId, Label>,
    pub panels: BTreeMap<PanelId, Panel>,
    pub groups: BTreeMap<UserId, GroupSelection>,
    pub clipboard: Vec<ClipboardItem>,
    /// Number of accepted operations folded into this state.
    pub applied_seq: u64,
}

impl WorkspaceState {
    pub fn new(clipboard: Vec<ClipboardItem>) -> Self {
        Self {
            clipboard,
            ..Self::default()
        }
    }

    pub fn clipboard_item(&self, id: ClipboardItemId) -> Option<&ClipboardItem> {
        self.clipboard.iter().find(|c| c.id == id)
    }

    pub fn link_between(&self, a: NoteId, b: NoteId) -> Option<&Link> {
        self.links.values().find(|l| l.connects(a, b))
    }

    /// Panel to attach a note to when dropped at `drop`: the panel whose
    /// bounds grown by the snap distance contain the point, nearest centre
    /// first, lowest id on ties.
    pub fn panel_snap(&self, drop: Vec2) -> Option<PanelId> {
        self.panels
            .values()
            .filter(|p| p.bounds.expand(LAYOUT.snap_distance).contains_point(drop))
            .map(|p| (p.bounds.center().distance(drop), p.id))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .map(|(_, id)| id)
    }

    /// Stacked label positions for a link, in its label order.
    pub fn label_positions(&self, link: LinkId) -> Vec<(LabelId, Vec2)> {
        let Some(link) = self.links.get(&link) else {
            return Vec::new();
        };
        let (Some(a), Some(b)) = (self.notes.get(&link.source), self.notes.get(&link.target)) else {
            return Vec::new();
        };
        let spots = label_layout(a.pin(), b.pin(), link.labels.len(), LAYOUT.label_spacing);
        link.labels.iter().copied().zip(spots).collect()
    }

    /// Every user id referenced by the document.
    pub fn referenced_users(&self) -> BTreeSet<UserId> {
        let mut users = BTreeSet::new();
        users.extend(self.notes.values().map(|n| n.creator));
        users.extend(self.links.values().map(|l| l.creator));
        users.extend(self.labels.values().map(|l| l.creator));
        users.extend(self.panels.values().map(|p| p.creator));
        users.extend(self.groups.keys().copied());
        users
    }
}
