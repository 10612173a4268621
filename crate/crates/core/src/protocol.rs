//! Wire messages. Each message is one JSON text frame with a `type` tag.

use serde::{Deserialize, Serialize};

use crate::gamification::{Millis, Scoreboard};
use crate::geometry::{Rect, Vec2};
use crate::ids::{NoteId, UserId};
use crate::model::{AvatarColor, ClipboardItem};
use crate::op::{OpId, Operation, RejectReason};
use crate::snapshot::SnapshotDocument;

/// Ephemeral per-user awareness data. Never part of the document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PresenceState {
    pub user: UserId,
    pub name: String,
    pub color: AvatarColor,
    pub cursor: Vec2,
    pub viewport: Rect,
    pub holding: Option<NoteId>,
    pub speaking: bool,
    pub last_heard: Millis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "camelCase", rename_all_fields = "camelCase")]
pub enum ClientMessage {
    Hello {
        room: String,
        display_name: String,
        /// Last server sequence number the client holds, when reconnecting.
        #[serde(default)]
        resume_from_seq: Option<u64>,
        /// Identity held before a disconnect; reused when still free.
        #[serde(default)]
        user_id: Option<UserId>,
    },
    SubmitOp {
        op: Operation,
    },
    Presence {
        cursor: Vec2,
        viewport: Rect,
        #[serde(default)]
        holding: Option<NoteId>,
    },
    Speaking {
        speaking: bool,
    },
    Ping,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "camelCase", rename_all_fields = "camelCase")]
pub enum ServerMessage {
    Welcome {
        your_user_id: UserId,
        assigned_color: AvatarColor,
        /// Client sequence number the server expects next from this user.
        next_client_seq: u64,
        display_name: String,
        snapshot: SnapshotDocument,
        clipboard: Vec<ClipboardItem>,
        scoreboard: Option<Scoreboard>,
    },
    /// Catch-up for a reconnecting client: the ops after `from_seq`, in order.
    OpReplay {
        your_user_id: UserId,
        assigned_color: AvatarColor,
        next_client_seq: u64,
        display_name: String,
        from_seq: u64,
        ops: Vec<Operation>,
        scoreboard: Option<Scoreboard>,
    },
    JoinRejected {
        reason: RejectReason,
        detail: String,
    },
    OpAccepted {
        op_id: OpId,
        server_seq: u64,
    },
    OpRejected {
        op_id: OpId,
        reason: RejectReason,
    },
    OpBroadcast {
        op: Operation,
    },
    PresenceBroadcast {
        users: Vec<PresenceState>,
    },
    ScoreUpdate {
        scoreboard: Scoreboard,
    },
    BadgeChange {
        new_holder: Option<UserId>,
    },
    Pong,
}

impl ClientMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("client messages always serialize")
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }
}

impl ServerMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages always serialize")
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hello_minimal_form() {
        let m = ClientMessage::from_json(r#"{"type":"hello","room":"lab","displayName":"Ana"}"#)
            .unwrap();
        assert_eq!(
            m,
            ClientMessage::Hello {
                room: "lab".into(),
                display_name: "Ana".into(),
                resume_from_seq: None,
                user_id: None,
            }
        );
    }

    #[test]
    fn tags_are_camel_case() {
        assert_eq!(ServerMessage::Pong.to_json(), r#"{"type":"pong"}"#);
        let m = ServerMessage::BadgeChange {
            new_holder: Some(UserId(3)),
        };
        assert_eq!(m.to_json(), r#"{"type":"badgeChange","newHolder":3}"#);
        let back = ServerMessage::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn unknown_type_rejected() {
        assert!(ClientMessage::from_json(r#"{"type":"shout"}"#).is_err());
    }
}
