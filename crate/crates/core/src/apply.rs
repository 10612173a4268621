//! Validation and application of operations against a [`WorkspaceState`].
//!
//! `validate` is pure and decides whether an operation would keep every
//! document invariant. `apply` assumes the operation validated and performs
//! it, including cascades and panel refits, returning the effected changes
//! in order.

use crate::geometry::{panel_fit, Rect, Vec2, LAYOUT};
use crate::ids::{ClipboardItemId, LinkId, NoteId, PanelId, UserId};
use crate::model::{
    ClipboardKind, GroupSelection, Label, Link, Note, Panel, WorkspaceState, MAX_TEXT_CHARS,
};
use crate::op::{Operation, OperationPayload as P, RejectReason, StateEvent};

type Verdict = Result<(), RejectReason>;

fn text_ok(text: &str) -> Verdict {
    if text.chars().count() > MAX_TEXT_CHARS {
        Err(RejectReason::TextTooLong)
    } else {
        Ok(())
    }
}

fn finite(p: Vec2) -> Verdict {
    if p.is_finite() {
        Ok(())
    } else {
        Err(RejectReason::InvalidGeometry)
    }
}

impl WorkspaceState {
    fn note(&self, id: NoteId) -> Result<&Note, RejectReason> {
        self.notes.get(&id).ok_or(RejectReason::UnknownTarget)
    }

    fn panel(&self, id: PanelId) -> Result<&Panel, RejectReason> {
        self.panels.get(&id).ok_or(RejectReason::UnknownTarget)
    }

    fn check_clipboard(&self, item: Option<ClipboardItemId>, kind: ClipboardKind) -> Verdict {
        match item {
            None => Ok(()),
            Some(id) => match self.clipboard_item(id) {
                None => Err(RejectReason::UnknownTarget),
                Some(c) if c.kind != kind => Err(RejectReason::WrongClipboardKind),
                Some(_) => Ok(()),
            },
        }
    }

    /// Decide whether `op` may be applied to this state.
    pub fn validate(&self, op: &Operation) -> Verdict {
        if op.actor != op.op_id.client_id {
            return Err(RejectReason::ActorMismatch);
        }
        match &op.payload {
            P::CreateNote {
                text,
                position,
                from_clipboard,
                ..
            } => {
                text_ok(text)?;
                finite(*position)?;
                self.check_clipboard(*from_clipboard, ClipboardKind::NoteSource)?;
                if self.notes.contains_key(&op.created_note_id()) {
                    return Err(RejectReason::IdCollision);
                }
                Ok(())
            }
            P::SetNoteText { note, text } => {
                self.note(*note)?;
                text_ok(text)
            }
            P::SetNoteColor { note, .. } | P::DeleteNote { note } => self.note(*note).map(drop),
            P::MoveNote { note, position } => {
                self.note(*note)?;
                finite(*position)
            }
            P::CreateLink { source, target } => {
                if source == target {
                    return Err(RejectReason::SelfLink);
                }
                self.note(*source)?;
                self.note(*target)?;
                if self.link_between(*source, *target).is_some() {
                    return Err(RejectReason::DuplicateLink);
                }
                if self.links.contains_key(&op.created_link_id()) {
                    return Err(RejectReason::IdCollision);
                }
                Ok(())
            }
            P::DeleteLink { link } => self
                .links
                .get(link)
                .map(drop)
                .ok_or(RejectReason::UnknownTarget),
            P::AttachLabel {
                link,
                text,
                from_clipboard,
                ..
            } => {
                if !self.links.contains_key(link) {
                    return Err(RejectReason::UnknownTarget);
                }
                text_ok(text)?;
                self.check_clipboard(*from_clipboard, ClipboardKind::LabelSource)?;
                if self.labels.contains_key(&op.created_label_id()) {
                    return Err(RejectReason::IdCollision);
                }
                Ok(())
            }
            P::DetachLabel { label } | P::FlipLabel { label } => self
                .labels
                .get(label)
                .map(drop)
                .ok_or(RejectReason::UnknownTarget),
            P::SetGroup { members } => {
                for m in members {
                    self.note(*m)?;
                }
                Ok(())
            }
            P::ClearGroup => {
                if self.groups.contains_key(&op.actor) {
                    Ok(())
                } else {
                    Err(RejectReason::NoGroup)
                }
            }
            P::MoveGroup { delta } => {
                finite(*delta)?;
                let group = self.groups.get(&op.actor).ok_or(RejectReason::NoGroup)?;
                for m in &group.members {
                    finite(self.note(*m)?.position + *delta)?;
                }
                Ok(())
            }
            P::CreatePanel { bounds } => {
                if !bounds.is_well_formed() {
                    return Err(RejectReason::InvalidGeometry);
                }
                if self.panels.contains_key(&op.created_panel_id()) {
                    return Err(RejectReason::IdCollision);
                }
                Ok(())
            }
            P::MovePanel { panel, delta } => {
                let panel = self.panel(*panel)?;
                finite(*delta)?;
                if !panel.bounds.translate(*delta).is_well_formed() {
                    return Err(RejectReason::InvalidGeometry);
                }
                for n in &panel.attached {
                    finite(self.note(*n)?.position + *delta)?;
                }
                Ok(())
            }
            P::ResizePanel { panel, bounds } => {
                let panel = self.panel(*panel)?;
                if !bounds.is_well_formed() {
                    return Err(RejectReason::InvalidGeometry);
                }
                for n in &panel.attached {
                    if !bounds.contains_rect(&self.note(*n)?.rect()) {
                        return Err(RejectReason::PanelTooSmall);
                    }
                }
                Ok(())
            }
            P::DeletePanel { panel } => self.panel(*panel).map(drop),
            P::AttachNoteToPanel { note, panel } => {
                let n = self.note(*note)?;
                self.panel(*panel)?;
                if n.panel == Some(*panel) {
                    return Err(RejectReason::AlreadyAttached);
                }
                Ok(())
            }
            P::DetachNoteFromPanel { note } => match self.note(*note)?.panel {
                Some(_) => Ok(()),
                None => Err(RejectReason::NotAttached),
            },
        }
    }

    /// Apply an operation that passed [`validate`](Self::validate) and bump
    /// `applied_seq`.
    ///
    /// Panics if the operation does not validate against this state.
    pub fn apply(&mut self, op: &Operation) -> Vec<StateEvent> {
        if let Err(reason) = self.validate(op) {
            panic!("apply called with invalid operation {}: {reason}", op.op_id);
        }
        let mut ev = Vec::new();
        let actor = op.actor;
        match &op.payload {
            P::CreateNote {
                text,
                color,
                position,
                ..
            } => {
                let id = op.created_note_id();
                self.notes.insert(
                    id,
                    Note {
                        id,
                        text: text.clone(),
                        color: *color,
                        position: *position,
                        creator: actor,
                        panel: None,
                    },
                );
                ev.push(StateEvent::NoteCreated { note: id });
            }
            P::SetNoteText { note, text } => {
                self.note_mut(*note).text = text.clone();
                ev.push(StateEvent::NoteTextChanged { note: *note });
            }
            P::SetNoteColor { note, color } => {
                self.note_mut(*note).color = *color;
                ev.push(StateEvent::NoteColorChanged { note: *note });
            }
            P::MoveNote { note, position } => {
                let panel = self.move_note(*note, *position, &mut ev);
                if let Some(panel) = panel {
                    self.settle_panel(panel, &mut ev);
                }
            }
            P::DeleteNote { note } => self.delete_note(*note, &mut ev),
            P::CreateLink { source, target } => {
                let id = op.created_link_id();
                self.links.insert(
                    id,
                    Link {
                        id,
                        source: *source,
                        target: *target,
                        creator: actor,
                        labels: Vec::new(),
                    },
                );
                ev.push(StateEvent::LinkCreated { link: id });
            }
            P::DeleteLink { link } => self.delete_link(*link, &mut ev),
            P::AttachLabel {
                link,
                text,
                orientation,
                ..
            } => {
                let id = op.created_label_id();
                self.labels.insert(
                    id,
                    Label {
                        id,
                        text: text.clone(),
                        orientation: *orientation,
                        creator: actor,
                        link: *link,
                    },
                );
                self.links.get_mut(link).expect("validated").labels.push(id);
                ev.push(StateEvent::LabelAttached { label: id, link: *link });
            }
            P::DetachLabel { label } => {
                let removed = self.labels.remove(label).expect("validated");
                if let Some(link) = self.links.get_mut(&removed.link) {
                    link.labels.retain(|l| l != label);
                }
                ev.push(StateEvent::LabelDetached {
                    label: *label,
                    link: removed.link,
                });
            }
            P::FlipLabel { label } => {
                let l = self.labels.get_mut(label).expect("validated");
                l.orientation = l.orientation.flipped();
                ev.push(StateEvent::LabelFlipped {
                    label: *label,
                    orientation: l.orientation,
                });
            }
            P::SetGroup { members } => {
                if members.is_empty() {
                    if self.groups.remove(&actor).is_some() {
                        ev.push(StateEvent::GroupCleared { owner: actor });
                    }
                } else {
                    self.groups.insert(
                        actor,
                        GroupSelection {
                            owner: actor,
                            members: members.clone(),
                        },
                    );
                    ev.push(StateEvent::GroupChanged {
                        owner: actor,
                        size: members.len(),
                    });
                }
            }
            P::ClearGroup => {
                self.groups.remove(&actor);
                ev.push(StateEvent::GroupCleared { owner: actor });
            }
            P::MoveGroup { delta } => {
                let members: Vec<NoteId> =
                    self.groups[&actor].members.iter().copied().collect();
                let mut touched = Vec::new();
                for m in members {
                    let to = self.notes[&m].position + *delta;
                    if let Some(p) = self.move_note(m, to, &mut ev) {
                        touched.push(p);
                    }
                }
                touched.sort();
                touched.dedup();
                for p in touched {
                    self.settle_panel(p, &mut ev);
                }
            }
            P::CreatePanel { bounds } => {
                let id = op.created_panel_id();
                self.panels.insert(
                    id,
                    Panel {
                        id,
                        bounds: *bounds,
                        attached: Vec::new(),
                        creator: actor,
                        auto_resize: true,
                    },
                );
                ev.push(StateEvent::PanelCreated { panel: id });
            }
            P::MovePanel { panel, delta } => {
                let members = self.panels[panel].attached.clone();
                for m in members {
                    let to = self.notes[&m].position + *delta;
                    self.move_note(m, to, &mut ev);
                }
                let p = self.panels.get_mut(panel).expect("validated");
                if p.attached.is_empty() || !p.auto_resize {
                    p.bounds = p.bounds.translate(*delta);
                }
                ev.push(StateEvent::PanelMoved {
                    panel: *panel,
                    delta: *delta,
                });
                self.settle_panel(*panel, &mut ev);
            }
            P::ResizePanel { panel, bounds } => {
                let p = self.panels.get_mut(panel).expect("validated");
                p.bounds = *bounds;
                p.auto_resize = false;
                ev.push(StateEvent::PanelResized {
                    panel: *panel,
                    bounds: *bounds,
                });
            }
            P::DeletePanel { panel } => {
                let removed = self.panels.remove(panel).expect("validated");
                for n in removed.attached {
                    self.note_mut(n).panel = None;
                    ev.push(StateEvent::NoteDetached {
                        note: n,
                        panel: *panel,
                    });
                }
                ev.push(StateEvent::PanelDeleted { panel: *panel });
            }
            P::AttachNoteToPanel { note, panel } => {
                if let Some(old) = self.notes[note].panel {
                    self.detach(*note, old, &mut ev);
                }
                self.note_mut(*note).panel = Some(*panel);
                let p = self.panels.get_mut(panel).expect("validated");
                p.attached.push(*note);
                p.auto_resize = true;
                ev.push(StateEvent::NoteAttached {
                    note: *note,
                    panel: *panel,
                });
                self.settle_panel(*panel, &mut ev);
            }
            P::DetachNoteFromPanel { note } => {
                let panel = self.notes[note].panel.expect("validated");
                self.detach(*note, panel, &mut ev);
            }
        }
        self.applied_seq += 1;
        ev
    }

    /// Validate then apply.
    pub fn try_apply(&mut self, op: &Operation) -> Result<Vec<StateEvent>, RejectReason> {
        self.validate(op)?;
        Ok(self.apply(op))
    }

    fn note_mut(&mut self, id: NoteId) -> &mut Note {
        self.notes.get_mut(&id).expect("validated note id")
    }

    /// Returns the panel the note is attached to, which needs settling.
    fn move_note(&mut self, id: NoteId, to: Vec2, ev: &mut Vec<StateEvent>) -> Option<PanelId> {
        let note = self.note_mut(id);
        let from = note.position;
        note.position = to;
        ev.push(StateEvent::NoteMoved { note: id, from, to });
        note.panel
    }

    fn detach(&mut self, note: NoteId, panel: PanelId, ev: &mut Vec<StateEvent>) {
        self.note_mut(note).panel = None;
        if let Some(p) = self.panels.get_mut(&panel) {
            p.attached.retain(|n| *n != note);
        }
        ev.push(StateEvent::NoteDetached { note, panel });
        self.settle_panel(panel, ev);
    }

    fn delete_link(&mut self, link: LinkId, ev: &mut Vec<StateEvent>) {
        let removed = self.links.remove(&link).expect("validated link id");
        for label in removed.labels {
            self.labels.remove(&label);
            ev.push(StateEvent::LabelDetached { label, link });
        }
        ev.push(StateEvent::LinkDeleted { link });
    }

    fn delete_note(&mut self, note: NoteId, ev: &mut Vec<StateEvent>) {
        let incident: Vec<LinkId> = self
            .links
            .values()
            .filter(|l| l.touches(note))
            .map(|l| l.id)
            .collect();
        for link in incident {
            self.delete_link(link, ev);
        }
        if let Some(panel) = self.notes[&note].panel {
            self.detach(note, panel, ev);
        }
        let owners: Vec<UserId> = self
            .groups
            .values()
            .filter(|g| g.members.contains(&note))
            .map(|g| g.owner)
            .collect();
        for owner in owners {
            let group = self.groups.get_mut(&owner).expect("just found");
            group.members.remove(&note);
            if group.members.is_empty() {
                self.groups.remove(&owner);
                ev.push(StateEvent::GroupCleared { owner });
            } else {
                ev.push(StateEvent::GroupChanged {
                    owner,
                    size: group.members.len(),
                });
            }
        }
        self.notes.remove(&note);
        ev.push(StateEvent::NoteDeleted { note });
    }

    /// Re-establish the panel geometry invariant after its members changed:
    /// auto-resizing panels fit their notes exactly, manually sized panels
    /// grow just enough to keep containing them. Empty panels keep their
    /// bounds.
    fn settle_panel(&mut self, panel: PanelId, ev: &mut Vec<StateEvent>) {
        let Some(p) = self.panels.get(&panel) else {
            return;
        };
        let rects: Vec<Rect> = p.attached.iter().map(|n| self.notes[n].rect()).collect();
        let Some(fit) = panel_fit(&rects, LAYOUT.panel_margin) else {
            return;
        };
        let bounds = if p.auto_resize {
            fit
        } else if rects.iter().all(|r| p.bounds.contains_rect(r)) {
            p.bounds
        } else {
            p.bounds.union(&fit)
        };
        if bounds != p.bounds {
            self.panels.get_mut(&panel).expect("present").bounds = bounds;
            ev.push(StateEvent::PanelResized { panel, bounds });
        }
    }
}
