//! Per-room total ordering of operations.
//!
//! The sequencer validates each submission against the authoritative state,
//! assigns the next gap-free `server_seq` on acceptance and remembers every
//! verdict so resubmissions are answered idempotently. A bounded log of
//! recent accepted operations serves reconnecting clients.

use std::collections::{BTreeMap, VecDeque};

use crate::ids::UserId;
use crate::integrity::{check_integrity, Violation};
use crate::model::WorkspaceState;
use crate::op::{Operation, RejectReason, StateEvent};
use crate::snapshot::{snapshot, SnapshotDocument};

pub const DEFAULT_RETENTION: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Accepted { server_seq: u64 },
    Rejected(RejectReason),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sequenced {
    pub verdict: Verdict,
    /// The accepted operation stamped with its `server_seq`; `None` for
    /// rejections and for resubmissions of already-decided operations.
    pub accepted: Option<Operation>,
    pub events: Vec<StateEvent>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CatchUp {
    Replay(Vec<Operation>),
    Snapshot(SnapshotDocument),
}

#[derive(Debug, Clone, Default)]
struct ClientLedger {
    last_seq: u64,
    verdicts: BTreeMap<u64, Verdict>,
}

#[derive(Debug, Clone)]
pub struct Sequencer {
    state: WorkspaceState,
    log: VecDeque<Operation>,
    retention: usize,
    clients: BTreeMap<UserId, ClientLedger>,
    checked: bool,
    violations: Vec<(u64, Violation)>,
}

impl Sequencer {
    pub fn new(state: WorkspaceState, retention: usize) -> Self {
        Self {
            state,
            log: VecDeque::new(),
            retention: retention.max(1),
            clients: BTreeMap::new(),
            checked: false,
            violations: Vec::new(),
        }
    }

    /// Run a full integrity scan after every accepted operation and keep the
    /// findings.
    pub fn set_checked(&mut self, checked: bool) {
        self.checked = checked;
    }

    pub fn violations(&self) -> &[(u64, Violation)] {
        &self.violations
    }

    pub fn state(&self) -> &WorkspaceState {
        &self.state
    }

    pub fn applied_seq(&self) -> u64 {
        self.state.applied_seq
    }

    pub fn next_client_seq(&self, client: UserId) -> u64 {
        self.clients.get(&client).map_or(1, |c| c.last_seq + 1)
    }

    /// Oldest `server_seq` still held in the log.
    pub fn oldest_retained(&self) -> Option<u64> {
        self.log.front().and_then(|op| op.server_seq)
    }

    /// Order one submission. `on_accept` sees the pre-application state and
    /// the stamped operation, before the state changes.
    pub fn sequence(
        &mut self,
        submitter: UserId,
        mut op: Operation,
        on_accept: impl FnOnce(&WorkspaceState, &Operation),
    ) -> Sequenced {
        let rejected = |reason| Sequenced {
            verdict: Verdict::Rejected(reason),
            accepted: None,
            events: Vec::new(),
        };
        if op.op_id.client_id != submitter || op.actor != submitter {
            return rejected(RejectReason::ActorMismatch);
        }
        let ledger = self.clients.entry(submitter).or_default();
        let seq = op.op_id.client_seq;
        if seq <= ledger.last_seq {
            let verdict = ledger
                .verdicts
                .get(&seq)
                .copied()
                // Sequence numbers start at 1; 0 was never issued.
                .unwrap_or(Verdict::Rejected(RejectReason::SequenceGap));
            return Sequenced {
                verdict,
                accepted: None,
                events: Vec::new(),
            };
        }
        if seq != ledger.last_seq + 1 {
            return rejected(RejectReason::SequenceGap);
        }
        ledger.last_seq = seq;

        if let Err(reason) = self.state.validate(&op) {
            ledger.verdicts.insert(seq, Verdict::Rejected(reason));
            return rejected(reason);
        }
        let server_seq = self.state.applied_seq + 1;
        op.server_seq = Some(server_seq);
        let verdict = Verdict::Accepted { server_seq };
        ledger.verdicts.insert(seq, verdict);

        on_accept(&self.state, &op);
        let events = self.state.apply(&op);
        debug_assert_eq!(self.state.applied_seq, server_seq);
        if self.checked {
            for v in check_integrity(&self.state) {
                self.violations.push((server_seq, v));
            }
        }

        self.log.push_back(op.clone());
        while self.log.len() > self.retention {
            self.log.pop_front();
        }
        Sequenced {
            verdict,
            accepted: Some(op),
            events,
        }
    }

    /// What a client holding `resume_from` needs to converge: the missing
    /// suffix when the log still covers it, otherwise a full snapshot.
    pub fn catch_up(&self, resume_from: u64) -> CatchUp {
        let current = self.state.applied_seq;
        if resume_from == current {
            return CatchUp::Replay(Vec::new());
        }
        match self.oldest_retained() {
            Some(oldest) if resume_from < current && resume_from + 1 >= oldest => {
                let skip = (resume_from + 1 - oldest) as usize;
                CatchUp::Replay(self.log.iter().skip(skip).cloned().collect())
            }
            _ => CatchUp::Snapshot(snapshot(&self.state)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec2;
    use crate::model::NoteColor;
    use crate::op::OperationPayload;

    fn note_op(user: u32, seq: u64) -> Operation {
        Operation::new(
            UserId(user),
            seq,
            OperationPayload::CreateNote {
                text: format!("n{seq}"),
                color: NoteColor::new(0).unwrap(),
                position: Vec2::ZERO,
                from_clipboard: None,
            },
        )
    }

    #[test]
    fn first_op_gets_seq_one() {
        let mut s = Sequencer::new(WorkspaceState::default(), 100);
        let out = s.sequence(UserId(1), note_op(1, 1), |_, _| {});
        assert_eq!(out.verdict, Verdict::Accepted { server_seq: 1 });
        assert_eq!(out.accepted.unwrap().server_seq, Some(1));
    }

    #[test]
    fn resubmission_is_idempotent() {
        let mut s = Sequencer::new(WorkspaceState::default(), 100);
        s.sequence(UserId(1), note_op(1, 1), |_, _| {});
        let before = s.state().clone();
        let mut called = false;
        let again = s.sequence(UserId(1), note_op(1, 1), |_, _| called = true);
        assert_eq!(again.verdict, Verdict::Accepted { server_seq: 1 });
        assert!(again.accepted.is_none());
        assert!(!called);
        assert_eq!(s.state(), &before);
    }

    #[test]
    fn rejected_verdict_is_remembered() {
        let mut s = Sequencer::new(WorkspaceState::default(), 100);
        let bad = Operation::new(
            UserId(1),
            1,
            OperationPayload::DeleteNote {
                note: crate::ids::NoteId::new(UserId(9), 9),
            },
        );
        let first = s.sequence(UserId(1), bad.clone(), |_, _| {});
        assert_eq!(first.verdict, Verdict::Rejected(RejectReason::UnknownTarget));
        let again = s.sequence(UserId(1), bad, |_, _| {});
        assert_eq!(again.verdict, first.verdict);
        assert_eq!(s.next_client_seq(UserId(1)), 2);
        assert_eq!(s.applied_seq(), 0);
    }

    #[test]
    fn gap_rejected_without_consuming() {
        let mut s = Sequencer::new(WorkspaceState::default(), 100);
        let out = s.sequence(UserId(1), note_op(1, 3), |_, _| {});
        assert_eq!(out.verdict, Verdict::Rejected(RejectReason::SequenceGap));
        assert_eq!(s.next_client_seq(UserId(1)), 1);
        let zero = s.sequence(UserId(1), note_op(1, 0), |_, _| {});
        assert_eq!(zero.verdict, Verdict::Rejected(RejectReason::SequenceGap));
    }

    #[test]
    fn actor_must_match_submitter() {
        let mut s = Sequencer::new(WorkspaceState::default(), 100);
        let out = s.sequence(UserId(2), note_op(1, 1), |_, _| {});
        assert_eq!(out.verdict, Verdict::Rejected(RejectReason::ActorMismatch));
    }

    #[test]
    fn catch_up_replays_suffix_or_snapshots() {
        let mut s = Sequencer::new(WorkspaceState::default(), 5);
        for i in 1..=8 {
            s.sequence(UserId(1), note_op(1, i), |_, _| {});
        }
        assert_eq!(s.oldest_retained(), Some(4));
        assert_eq!(s.catch_up(8), CatchUp::Replay(vec![]));
        let CatchUp::Replay(ops) = s.catch_up(5) else { panic!() };
        assert_eq!(ops.iter().map(|o| o.server_seq.unwrap()).collect::<Vec<_>>(), vec![6, 7, 8]);
        let CatchUp::Replay(ops) = s.catch_up(3) else { panic!() };
        assert_eq!(ops.len(), 5);
        assert!(matches!(s.catch_up(2), CatchUp::Snapshot(_)));
        assert!(matches!(s.catch_up(9), CatchUp::Snapshot(_)));
    }
}
