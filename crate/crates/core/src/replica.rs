//! Client-side replica: the fold of a welcome snapshot and the broadcast op
//! stream. Replicas never mutate the document locally; their own operations
//! take effect when the server echoes them.

use std::collections::BTreeMap;

use crate::ids::UserId;
use crate::model::{AvatarColor, WorkspaceState};
use crate::op::{Operation, OperationPayload, RejectReason};
use crate::protocol::ServerMessage;
use crate::snapshot::{restore, to_canonical_bytes, RestoreError};

#[derive(Debug, thiserror::Error)]
pub enum ReplicaError {
    #[error("broadcast seq {got} does not follow applied seq {applied}")]
    OutOfOrder { applied: u64, got: u64 },
    #[error("broadcast op {0} has no server seq")]
    Unsequenced(String),
    #[error("broadcast op rejected locally ({0}); replica diverged")]
    Diverged(RejectReason),
    #[error("bad snapshot: {0}")]
    Snapshot(#[from] RestoreError),
    #[error("message before welcome")]
    NotJoined,
}

/// What a handled message meant for the local session.
#[derive(Debug, Clone, PartialEq)]
pub enum ReplicaUpdate {
    Joined,
    Applied(u64),
    Acked { client_seq: u64, server_seq: u64 },
    Rejected { client_seq: u64, reason: RejectReason },
    JoinRefused(RejectReason),
    Other,
}

#[derive(Debug, Clone)]
pub struct Replica {
    state: WorkspaceState,
    user: Option<UserId>,
    color: Option<AvatarColor>,
    next_client_seq: u64,
    /// Submitted, not yet answered.
    pending: BTreeMap<u64, Operation>,
}

impl Default for Replica {
    fn default() -> Self {
        Self::new()
    }
}

impl Replica {
    pub fn new() -> Self {
        Self {
            state: WorkspaceState::default(),
            user: None,
            color: None,
            next_client_seq: 1,
            pending: BTreeMap::new(),
        }
    }

    pub fn state(&self) -> &WorkspaceState {
        &self.state
    }

    pub fn user(&self) -> Option<UserId> {
        self.user
    }

    pub fn color(&self) -> Option<AvatarColor> {
        self.color
    }

    pub fn applied_seq(&self) -> u64 {
        self.state.applied_seq
    }

    pub fn pending(&self) -> impl Iterator<Item = &Operation> {
        self.pending.values()
    }

    pub fn has_pending(&self) -> bool {
        !self.pending.is_empty()
    }

    pub fn snapshot_bytes(&self) -> Vec<u8> {
        to_canonical_bytes(&self.state)
    }

    /// Stamp a payload with this client's next sequence number and remember
    /// it until the server answers.
    pub fn submit(&mut self, payload: OperationPayload, wall_clock: u64) -> Result<Operation, ReplicaError> {
        let user = self.user.ok_or(ReplicaError::NotJoined)?;
        let mut op = Operation::new(user, self.next_client_seq, payload);
        op.wall_clock = wall_clock;
        self.next_client_seq += 1;
        self.pending.insert(op.op_id.client_seq, op.clone());
        Ok(op)
    }

    pub fn handle(&mut self, msg: &ServerMessage) -> Result<ReplicaUpdate, ReplicaError> {
        match msg {
            ServerMessage::Welcome {
                your_user_id,
                assigned_color,
                next_client_seq,
                snapshot,
                ..
            } => {
                self.state = restore(snapshot.clone())?;
                self.joined(*your_user_id, *assigned_color, *next_client_seq);
                Ok(ReplicaUpdate::Joined)
            }
            ServerMessage::OpReplay {
                your_user_id,
                assigned_color,
                next_client_seq,
                ops,
                ..
            } => {
                for op in ops {
                    self.apply_broadcast(op)?;
                }
                self.joined(*your_user_id, *assigned_color, *next_client_seq);
                Ok(ReplicaUpdate::Joined)
            }
            ServerMessage::JoinRejected { reason, .. } => Ok(ReplicaUpdate::JoinRefused(*reason)),
            ServerMessage::OpBroadcast { op } => {
                self.ensure_joined()?;
                self.apply_broadcast(op)?;
                Ok(ReplicaUpdate::Applied(self.state.applied_seq))
            }
            ServerMessage::OpAccepted { op_id, server_seq } => {
                self.pending.remove(&op_id.client_seq);
                Ok(ReplicaUpdate::Acked {
                    client_seq: op_id.client_seq,
                    server_seq: *server_seq,
                })
            }
            ServerMessage::OpRejected { op_id, reason } => {
                self.pending.remove(&op_id.client_seq);
                Ok(ReplicaUpdate::Rejected {
                    client_seq: op_id.client_seq,
                    reason: *reason,
                })
            }
            _ => Ok(ReplicaUpdate::Other),
        }
    }

    fn ensure_joined(&self) -> Result<(), ReplicaError> {
        self.user.map(drop).ok_or(ReplicaError::NotJoined)
    }

    fn joined(&mut self, user: UserId, color: AvatarColor, next_client_seq: u64) {
        let floor = if self.user == Some(user) {
            self.pending.keys().next_back().map_or(1, |s| s + 1)
        } else {
            // New identity: nothing in flight can be resubmitted under it.
            self.pending.clear();
            1
        };
        self.user = Some(user);
        self.color = Some(color);
        self.next_client_seq = next_client_seq.max(floor);
    }

    fn apply_broadcast(&mut self, op: &Operation) -> Result<(), ReplicaError> {
        let got = op
            .server_seq
            .ok_or_else(|| ReplicaError::Unsequenced(op.op_id.to_string()))?;
        let applied = self.state.applied_seq;
        if got <= applied {
            // Already folded (e.g. replay overlapping a late broadcast).
            return Ok(());
        }
        if got != applied + 1 {
            return Err(ReplicaError::OutOfOrder { applied, got });
        }
        self.state.try_apply(op).map_err(ReplicaError::Diverged)?;
        Ok(())
    }
}
