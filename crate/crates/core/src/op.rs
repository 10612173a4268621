//! Operations: the unit of replication.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::geometry::{Rect, Vec2};
use crate::ids::{ClipboardItemId, LabelId, LinkId, NoteId, PanelId, UserId};
use crate::model::{NoteColor, Orientation};

/// Client-assigned operation identity, unique per room lifetime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OpId {
    pub client_id: UserId,
    pub client_seq: u64,
}

impl fmt::Display for OpId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.client_id, self.client_seq)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Operation {
    pub op_id: OpId,
    /// Assigned by the sequencer on acceptance.
    #[serde(default)]
    pub server_seq: Option<u64>,
    pub actor: UserId,
    /// Informational only; ordering never depends on it.
    #[serde(default)]
    pub wall_clock: u64,
    pub payload: OperationPayload,
}

impl Operation {
    pub fn new(actor: UserId, client_seq: u64, payload: OperationPayload) -> Self {
        Self {
            op_id: OpId {
                client_id: actor,
                client_seq,
            },
            server_seq: None,
            actor,
            wall_clock: 0,
            payload,
        }
    }

    pub fn created_note_id(&self) -> NoteId {
        NoteId::new(self.op_id.client_id, self.op_id.client_seq)
    }

    pub fn created_link_id(&self) -> LinkId {
        LinkId::new(self.op_id.client_id, self.op_id.client_seq)
    }

    pub fn created_label_id(&self) -> LabelId {
        LabelId::new(self.op_id.client_id, self.op_id.client_seq)
    }

    pub fn created_panel_id(&self) -> PanelId {
        PanelId::new(self.op_id.client_id, self.op_id.client_seq)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase", rename_all_fields = "camelCase")]
pub enum OperationPayload {
    CreateNote {
        text: String,
        color: NoteColor,
        position: Vec2,
        #[serde(default)]
        from_clipboard: Option<ClipboardItemId>,
    },
    SetNoteText {
        note: NoteId,
        text: String,
    },
    SetNoteColor {
        note: NoteId,
        color: NoteColor,
    },
    MoveNote {
        note: NoteId,
        position: Vec2,
    },
    DeleteNote {
        note: NoteId,
    },
    CreateLink {
        source: NoteId,
        target: NoteId,
    },
    DeleteLink {
        link: LinkId,
    },
    AttachLabel {
        link: LinkId,
        text: String,
        orientation: Orientation,
        #[serde(default)]
        from_clipboard: Option<ClipboardItemId>,
    },
    DetachLabel {
        label: LabelId,
    },
    FlipLabel {
        label: LabelId,
    },
    SetGroup {
        members: BTreeSet<NoteId>,
    },
    ClearGroup,
    MoveGroup {
        delta: Vec2,
    },
    CreatePanel {
        bounds: Rect,
    },
    MovePanel {
        panel: PanelId,
        delta: Vec2,
    },
    ResizePanel {
        panel: PanelId,
        bounds: Rect,
    },
    DeletePanel {
        panel: PanelId,
    },
    AttachNoteToPanel {
        note: NoteId,
        panel: PanelId,
    },
    DetachNoteFromPanel {
        note: NoteId,
    },
}

impl OperationPayload {
    /// Stable kind name, as used in the wire `kind` tag.
    pub fn kind(&self) -> PayloadKind {
        use OperationPayload as P;
        match self {
            P::CreateNote { .. } => PayloadKind::CreateNote,
            P::SetNoteText { .. } => PayloadKind::SetNoteText,
            P::SetNoteColor { .. } => PayloadKind::SetNoteColor,
            P::MoveNote { .. } => PayloadKind::MoveNote,
            P::DeleteNote { .. } => PayloadKind::DeleteNote,
            P::CreateLink { .. } => PayloadKind::CreateLink,
            P::DeleteLink { .. } => PayloadKind::DeleteLink,
            P::AttachLabel { .. } => PayloadKind::AttachLabel,
            P::DetachLabel { .. } => PayloadKind::DetachLabel,
            P::FlipLabel { .. } => PayloadKind::FlipLabel,
            P::SetGroup { .. } => PayloadKind::SetGroup,
            P::ClearGroup => PayloadKind::ClearGroup,
            P::MoveGroup { .. } => PayloadKind::MoveGroup,
            P::CreatePanel { .. } => PayloadKind::CreatePanel,
            P::MovePanel { .. } => PayloadKind::MovePanel,
            P::ResizePanel { .. } => PayloadKind::ResizePanel,
            P::DeletePanel { .. } => PayloadKind::DeletePanel,
            P::AttachNoteToPanel { .. } => PayloadKind::AttachNoteToPanel,
            P::DetachNoteFromPanel { .. } => PayloadKind::DetachNoteFromPanel,
        }
    }
}

/// Fieldless mirror of [`OperationPayload`], used for op-mix weights and
/// per-kind counters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum PayloadKind {
    CreateNote,
    SetNoteText,
    SetNoteColor,
    MoveNote,
    DeleteNote,
    CreateLink,
    DeleteLink,
    AttachLabel,
    DetachLabel,
    FlipLabel,
    SetGroup,
    ClearGroup,
    MoveGroup,
    CreatePanel,
    MovePanel,
    ResizePanel,
    DeletePanel,
    AttachNoteToPanel,
    DetachNoteFromPanel,
}

impl PayloadKind {
    pub const ALL: [PayloadKind; 19] = [
        PayloadKind::CreateNote,
        PayloadKind::SetNoteText,
        PayloadKind::SetNoteColor,
        PayloadKind::MoveNote,
        PayloadKind::DeleteNote,
        PayloadKind::CreateLink,
        PayloadKind::DeleteLink,
        PayloadKind::AttachLabel,
        PayloadKind::DetachLabel,
        PayloadKind::FlipLabel,
        PayloadKind::SetGroup,
        PayloadKind::ClearGroup,
        PayloadKind::MoveGroup,
        PayloadKind::CreatePanel,
        PayloadKind::MovePanel,
        PayloadKind::ResizePanel,
        PayloadKind::DeletePanel,
        PayloadKind::AttachNoteToPanel,
        PayloadKind::DetachNoteFromPanel,
    ];
}

/// Machine-readable reason an operation (or join) was refused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum RejectReason {
    SelfLink,
    UnknownTarget,
    DuplicateLink,
    SequenceGap,
    UnknownRoom,
    NotMember,
    ActorMismatch,
    InvalidGeometry,
    TextTooLong,
    WrongClipboardKind,
    IdCollision,
    AlreadyAttached,
    NotAttached,
    PanelTooSmall,
    NoGroup,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Same spelling as on the wire.
        let s = serde_json::to_value(self).ok();
        match s.as_ref().and_then(|v| v.as_str()) {
            Some(s) => f.write_str(s),
            None => write!(f, "{self:?}"),
        }
    }
}

/// A change effected by applying an operation, in cascade order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "camelCase", rename_all_fields = "camelCase")]
pub enum StateEvent {
    NoteCreated { note: NoteId },
    NoteTextChanged { note: NoteId },
    NoteColorChanged { note: NoteId },
    NoteMoved { note: NoteId, from: Vec2, to: Vec2 },
    NoteDeleted { note: NoteId },
    LinkCreated { link: LinkId },
    LinkDeleted { link: LinkId },
    LabelAttached { label: LabelId, link: LinkId },
    LabelDetached { label: LabelId, link: LinkId },
    LabelFlipped { label: LabelId, orientation: Orientation },
    GroupChanged { owner: UserId, size: usize },
    GroupCleared { owner: UserId },
    PanelCreated { panel: PanelId },
    PanelMoved { panel: PanelId, delta: Vec2 },
    PanelResized { panel: PanelId, bounds: Rect },
    PanelDeleted { panel: PanelId },
    NoteAttached { note: NoteId, panel: PanelId },
    NoteDetached { note: NoteId, panel: PanelId },
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn payload_wire_shape() {
        let op = Operation::new(
            UserId(2),
            7,
            OperationPayload::CreateLink {
                source: NoteId::new(UserId(1), 1),
                target: NoteId::new(UserId(2), 3),
            },
        );
        let json = serde_json::to_string(&op).unwrap();
        assert_eq!(
            json,
            r#"{"opId":{"clientId":2,"clientSeq":7},"serverSeq":null,"actor":2,"wallClock":0,"payload":{"kind":"createLink","source":"1:1","target":"2:3"}}"#
        );
        let back: Operation = serde_json::from_str(&json).unwrap();
        assert_eq!(back, op);
    }

    #[test]
    fn payload_field_names_are_camel_case() {
        let p = OperationPayload::AttachNoteToPanel {
            note: NoteId::new(UserId(1), 1),
            panel: PanelId::new(UserId(1), 2),
        };
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(json, r#"{"kind":"attachNoteToPanel","note":"1:1","panel":"1:2"}"#);
        let p = OperationPayload::CreateNote {
            text: "x".into(),
            color: NoteColor::new(0).unwrap(),
            position: Vec2::ZERO,
            from_clipboard: Some(ClipboardItemId(4)),
        };
        assert!(serde_json::to_string(&p).unwrap().contains("\"fromClipboard\":4"));
    }

    #[test]
    fn kinds_cover_every_variant() {
        let unit = OperationPayload::ClearGroup;
        assert_eq!(unit.kind(), PayloadKind::ClearGroup);
        assert_eq!(serde_json::to_string(&unit).unwrap(), r#"{"kind":"clearGroup"}"#);
        let mut seen = std::collections::BTreeSet::new();
        for k in PayloadKind::ALL {
            assert!(seen.insert(k));
        }
    }

    #[test]
    fn reject_reason_display_matches_wire() {
        assert_eq!(RejectReason::DuplicateLink.to_string(), "duplicateLink");
        assert_eq!(
            serde_json::to_string(&RejectReason::UnknownTarget).unwrap(),
            "\"unknownTarget\""
        );
    }
}
