//! Shared mind-map workspace: document model, sequenced replication,
//! awareness derivations and gamification scoring.
//!
//! Everything in this crate is deterministic and transport-free. The
//! `mindmap-server` crate puts a [`room::Room`] behind websockets; the
//! simulator drives the same type with a virtual clock.

pub mod apply;
pub mod awareness;
pub mod gamification;
pub mod geometry;
pub mod ids;
pub mod integrity;
pub mod model;
pub mod op;
pub mod protocol;
pub mod replica;
pub mod room;
pub mod sequencer;
pub mod snapshot;

pub use geometry::{Rect, Vec2, LAYOUT};
pub use ids::{ClipboardItemId, LabelId, LinkId, NoteId, PanelId, UserId};
pub use model::{
    AvatarColor, ClipboardItem, ClipboardKind, GroupSelection, Label, Link, Note, NoteColor,
    Orientation, Panel, WorkspaceState,
};
pub use op::{OpId, Operation, OperationPayload, PayloadKind, RejectReason, StateEvent};
pub use protocol::{ClientMessage, PresenceState, ServerMessage};
