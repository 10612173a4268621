//! Naive reference implementations checked against the incremental ones.

use std::collections::{BTreeMap, BTreeSet};

use mindmap_core::awareness::{clone_classes, clone_targets};
use mindmap_core::gamification::{Millis, ScoreConfig, ScoreEngine, ScoreEvent, Scoreboard, UserScore};
use mindmap_core::room::ScoreInput;
use mindmap_core::*;
use serde_json::Value;

/// Recompute every score from the raw logs with no incremental state:
/// creator maps for cooperation, explicit interval lists for speaking and a
/// sorted window merge for the activity clock.
pub fn replay_scoreboard(
    initial: &WorkspaceState,
    log: &[ScoreInput],
    config: ScoreConfig,
    session_start: Millis,
    now: Millis,
) -> Scoreboard {
    let mut note_creator: BTreeMap<NoteId, UserId> =
        initial.notes.values().map(|n| (n.id, n.creator)).collect();
    let mut link_creator: BTreeMap<LinkId, UserId> =
        initial.links.values().map(|l| (l.id, l.creator)).collect();

    let mut users: BTreeSet<UserId> = BTreeSet::new();
    let mut cooperation: BTreeMap<UserId, u64> = BTreeMap::new();
    let mut artifacts: BTreeMap<UserId, u64> = BTreeMap::new();
    let mut activity: BTreeMap<UserId, Vec<Millis>> = BTreeMap::new();
    let mut signals: BTreeMap<UserId, Vec<(bool, Millis)>> = BTreeMap::new();

    for input in log {
        match input {
            ScoreInput::Join { user, .. } => {
                users.insert(*user);
            }
            ScoreInput::Op { op, at } => {
                let actor = op.actor;
                users.insert(actor);
                activity.entry(actor).or_default().push(*at);
                let (artifact, coop) = match &op.payload {
                    OperationPayload::CreateNote { .. } => (true, false),
                    OperationPayload::CreateLink { source, target } => {
                        (true, note_creator[source] != actor && note_creator[target] != actor)
                    }
                    OperationPayload::AttachLabel { link, .. } => (true, link_creator[link] != actor),
                    _ => (false, false),
                };
                *artifacts.entry(actor).or_default() += u64::from(artifact);
                *cooperation.entry(actor).or_default() += u64::from(coop);
                match op.payload.kind() {
                    PayloadKind::CreateNote => {
                        note_creator.insert(op.created_note_id(), actor);
                    }
                    PayloadKind::CreateLink => {
                        link_creator.insert(op.created_link_id(), actor);
                    }
                    _ => {}
                }
            }
            ScoreInput::Speaking { user, speaking, at } => {
                users.insert(*user);
                signals.entry(*user).or_default().push((*speaking, *at));
            }
        }
    }

    let cap = config.max_utterance_ms;
    let window = config.activity_window_ms;
    let users = users
        .into_iter()
        .map(|user| {
            // Speaking: keep in-order signals, pair each "on" with the next
            // "off"; an unpaired final "on" runs until now.
            let mut kept = Vec::new();
            let mut last: Option<Millis> = None;
            for &(s, at) in signals.get(&user).map(Vec::as_slice).unwrap_or(&[]) {
                if at < session_start || last.is_some_and(|l| at < l) {
                    continue;
                }
                last = Some(at);
                kept.push((s, at));
            }
            let mut speaking_ms = 0;
            let mut on: Option<Millis> = None;
            let mut marks = activity.get(&user).cloned().unwrap_or_default();
            for (s, at) in kept {
                match (on, s) {
                    (None, true) => {
                        on = Some(at);
                        marks.push(at);
                    }
                    (Some(since), false) => {
                        speaking_ms += (at - since).min(cap);
                        on = None;
                        marks.push(at);
                    }
                    _ => {}
                }
            }
            if let Some(since) = on {
                speaking_ms += now.saturating_sub(since).min(cap);
            }

            // Activity: measure of the union of [t, t + window) up to now.
            marks.sort_unstable();
            let mut active_ms = 0;
            let mut cur: Option<(Millis, Millis)> = None;
            for t in marks {
                cur = match cur {
                    Some((s, e)) if t <= e => Some((s, e.max(t + window))),
                    Some((s, e)) => {
                        active_ms += e.min(now).saturating_sub(s);
                        Some((t, t + window))
                    }
                    None => Some((t, t + window)),
                };
            }
            if let Some((s, e)) = cur {
                active_ms += e.min(now).saturating_sub(s);
            }

            let artifacts_created = artifacts.get(&user).copied().unwrap_or(0);
            let elapsed = now.saturating_sub(session_start);
            let action_efficiency = if active_ms == 0 {
                0.0
            } else {
                artifacts_created as f64 / (active_ms as f64 / 60_000.0)
            };
            let discussion_efficiency = if elapsed == 0 {
                0.0
            } else {
                (speaking_ms as f64 / elapsed as f64).clamp(0.0, 1.0)
            };
            UserScore {
                user,
                cooperation: cooperation.get(&user).copied().unwrap_or(0),
                speaking_ms,
                artifacts_created,
                active_ms,
                action_efficiency,
                discussion_efficiency,
            }
        })
        .collect();

    let badge_holder = brute_force_badge(&cooperation_history(initial, log));
    Scoreboard {
        session_start,
        at: now,
        users,
        badge_holder,
    }
}

/// Successive (user, new cooperation value) pairs, in log order.
pub fn cooperation_history(initial: &WorkspaceState, log: &[ScoreInput]) -> Vec<(UserId, u64)> {
    cooperation_steps(initial, log).into_iter().flatten().collect()
}

/// For each log entry, the cooperation point it earned, if any.
fn cooperation_steps(initial: &WorkspaceState, log: &[ScoreInput]) -> Vec<Option<(UserId, u64)>> {
    let mut note_creator: BTreeMap<NoteId, UserId> =
        initial.notes.values().map(|n| (n.id, n.creator)).collect();
    let mut link_creator: BTreeMap<LinkId, UserId> =
        initial.links.values().map(|l| (l.id, l.creator)).collect();
    let mut values: BTreeMap<UserId, u64> = BTreeMap::new();
    log.iter()
        .map(|input| {
            let ScoreInput::Op { op, .. } = input else { return None };
            let actor = op.actor;
            let coop = match &op.payload {
                OperationPayload::CreateLink { source, target } => {
                    note_creator[source] != actor && note_creator[target] != actor
                }
                OperationPayload::AttachLabel { link, .. } => link_creator[link] != actor,
                _ => false,
            };
            match op.payload.kind() {
                PayloadKind::CreateNote => {
                    note_creator.insert(op.created_note_id(), actor);
                }
                PayloadKind::CreateLink => {
                    link_creator.insert(op.created_link_id(), actor);
                }
                _ => {}
            }
            coop.then(|| {
                let v = values.entry(actor).or_default();
                *v += 1;
                (actor, *v)
            })
        })
        .collect()
}

/// Leader after a cooperation history: highest value, and among equals the
/// one whose current value was reached earliest. `None` before any point.
pub fn brute_force_badge(history: &[(UserId, u64)]) -> Option<UserId> {
    let mut latest: BTreeMap<UserId, (u64, usize)> = BTreeMap::new();
    for (i, (u, v)) in history.iter().enumerate() {
        latest.insert(*u, (*v, i));
    }
    latest
        .into_iter()
        .filter(|(_, (v, _))| *v > 0)
        .min_by_key(|(_, (v, i))| (std::cmp::Reverse(*v), *i))
        .map(|(u, _)| u)
}

/// Replays the log through a fresh engine and checks, after every event,
/// that the badge equals the brute-force leader and that a leadership event
/// fired exactly when the holder changed. Returns the first mismatch.
pub fn check_badge_each_event(
    initial: &WorkspaceState,
    log: &[ScoreInput],
    config: ScoreConfig,
    session_start: Millis,
) -> Result<ScoreEngine, String> {
    let mut engine = ScoreEngine::new(config, session_start);
    let mut state = initial.clone();
    let steps = cooperation_steps(initial, log);
    let mut history = Vec::new();
    for (i, input) in log.iter().enumerate() {
        let before = engine.badge_holder();
        let events = match input {
            ScoreInput::Join { user, .. } => {
                engine.register(*user);
                Vec::new()
            }
            ScoreInput::Op { op, at } => {
                let ev = engine.score_op(&state, op, *at);
                state
                    .try_apply(op)
                    .map_err(|r| format!("log op {} does not apply: {r}", op.op_id))?;
                ev
            }
            ScoreInput::Speaking { user, speaking, at } => engine.record_speaking(*user, *speaking, *at),
        };
        history.extend(steps[i]);
        let expected = brute_force_badge(&history);
        if engine.badge_holder() != expected {
            return Err(format!(
                "event {i}: badge {:?}, brute force {:?}",
                engine.badge_holder(),
                expected
            ));
        }
        let shifted = events.iter().any(|e| matches!(e, ScoreEvent::LeadershipShift { .. }));
        if shifted != (before != engine.badge_holder()) {
            return Err(format!("event {i}: leadership event {shifted} but holder {before:?} -> {:?}", engine.badge_holder()));
        }
    }
    Ok(engine)
}

fn naive_key(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Pairwise scan: notes other than `source` whose normalized text equals
/// the source's non-empty normalized text.
pub fn naive_clones(state: &WorkspaceState, source: NoteId) -> BTreeSet<NoteId> {
    let key = naive_key(&state.notes[&source].text);
    if key.is_empty() {
        return BTreeSet::new();
    }
    state
        .notes
        .values()
        .filter(|n| n.id != source && naive_key(&n.text) == key)
        .map(|n| n.id)
        .collect()
}

/// Sources checked per state by [`check_clones`]; larger states are strided.
pub const CLONE_SOURCES_PER_STATE: usize = 64;

/// Check clone detection against a pairwise scan. The partition from
/// `clone_classes` must be disjoint and agree with the scan; `clone_targets`
/// is compared for up to [`CLONE_SOURCES_PER_STATE`] sources. Returns a
/// description of the first failure.
pub fn check_clones(state: &WorkspaceState) -> Result<(), String> {
    let keyed: Vec<(NoteId, String)> = state.notes.values().map(|n| (n.id, naive_key(&n.text))).collect();
    let mut by_key: BTreeMap<&str, BTreeSet<NoteId>> = BTreeMap::new();
    for (id, key) in &keyed {
        if !key.is_empty() {
            by_key.entry(key).or_default().insert(*id);
        }
    }
    let mut class_of: BTreeMap<NoteId, &BTreeSet<NoteId>> = BTreeMap::new();
    let classes = clone_classes(state);
    for class in &classes {
        for id in class {
            if class_of.insert(*id, class).is_some() {
                return Err(format!("{id} sits in two clone classes"));
            }
        }
    }
    let want_classes: BTreeSet<&BTreeSet<NoteId>> = by_key.values().filter(|c| c.len() > 1).collect();
    let got_classes: BTreeSet<&BTreeSet<NoteId>> = classes.iter().collect();
    if want_classes != got_classes {
        return Err(format!("clone classes {got_classes:?}, scan found {want_classes:?}"));
    }
    let stride = keyed.len().div_ceil(CLONE_SOURCES_PER_STATE).max(1);
    for (id, key) in keyed.iter().step_by(stride) {
        let want: BTreeSet<NoteId> = if key.is_empty() {
            BTreeSet::new()
        } else {
            keyed.iter().filter(|(o, k)| o != id && k == key).map(|(o, _)| *o).collect()
        };
        let got = clone_targets(state, *id, true).targets;
        if got != want {
            return Err(format!("clone set of {id}: got {got:?}, scan found {want:?}"));
        }
        let closed: BTreeSet<NoteId> = got.iter().copied().chain([*id]).collect();
        match class_of.get(id) {
            Some(class) if **class == closed => {}
            None if got.is_empty() => {}
            other => return Err(format!("clone set of {id} disagrees with its class {other:?}")),
        }
    }
    Ok(())
}

/// Describe how two canonical snapshots differ, listing up to `limit` paths.
pub fn divergence_diff(expected: &[u8], actual: &[u8], limit: usize) -> String {
    let (Ok(a), Ok(b)) = (
        serde_json::from_slice::<Value>(expected),
        serde_json::from_slice::<Value>(actual),
    ) else {
        return "snapshot bytes are not JSON".into();
    };
    let mut out = Vec::new();
    diff_values("", &a, &b, &mut out, limit);
    if out.is_empty() {
        let at = expected.iter().zip(actual).position(|(x, y)| x != y).unwrap_or(expected.len().min(actual.len()));
        return format!("same structure, bytes differ at offset {at}");
    }
    out.join("\n")
}

fn diff_values(path: &str, a: &Value, b: &Value, out: &mut Vec<String>, limit: usize) {
    if out.len() >= limit || a == b {
        return;
    }
    match (a, b) {
        (Value::Object(x), Value::Object(y)) => {
            let keys: BTreeSet<&String> = x.keys().chain(y.keys()).collect();
            for k in keys {
                let p = format!("{path}.{k}");
                match (x.get(k), y.get(k)) {
                    (Some(u), Some(v)) => diff_values(&p, u, v, out, limit),
                    (u, v) => out.push(format!("{p}: {u:?} vs {v:?}")),
                }
            }
        }
        (Value::Array(x), Value::Array(y)) => {
            // Collections are id-ordered; key by id where present.
            let id = |v: &Value| v.get("id").map(|i| i.to_string());
            if x.iter().chain(y).all(|v| id(v).is_some()) {
                let xm: BTreeMap<_, _> = x.iter().map(|v| (id(v).unwrap(), v)).collect();
                let ym: BTreeMap<_, _> = y.iter().map(|v| (id(v).unwrap(), v)).collect();
                let keys: BTreeSet<_> = xm.keys().chain(ym.keys()).cloned().collect();
                for k in keys {
                    let p = format!("{path}[{k}]");
                    match (xm.get(&k), ym.get(&k)) {
                        (Some(u), Some(v)) => diff_values(&p, u, v, out, limit),
                        (Some(_), None) => out.push(format!("{p}: missing in replica")),
                        (None, Some(_)) => out.push(format!("{p}: only in replica")),
                        (None, None) => {}
                    }
                }
            } else if x.len() != y.len() {
                out.push(format!("{path}: length {} vs {}", x.len(), y.len()));
            } else {
                for (i, (u, v)) in x.iter().zip(y).enumerate() {
                    diff_values(&format!("{path}[{i}]"), u, v, out, limit);
                }
            }
        }
        _ => out.push(format!("{path}: {a} vs {b}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn badge_brute_force() {
        let (a, b) = (UserId(1), UserId(2));
        assert_eq!(brute_force_badge(&[]), None);
        assert_eq!(brute_force_badge(&[(a, 1), (b, 1)]), Some(a));
        assert_eq!(brute_force_badge(&[(a, 1), (b, 1), (b, 2)]), Some(b));
        assert_eq!(brute_force_badge(&[(b, 1), (a, 1), (a, 2), (b, 2)]), Some(a));
    }

    #[test]
    fn speaking_fixtures() {
        let u = UserId(1);
        let speak = |s, at| ScoreInput::Speaking { user: u, speaking: s, at };
        let run = |log: Vec<ScoreInput>, now| {
            replay_scoreboard(&WorkspaceState::default(), &log, ScoreConfig::default(), 0, now)
                .user(u)
                .unwrap()
                .speaking_ms
        };
        assert_eq!(run(vec![speak(true, 0), speak(false, 5000)], 10_000), 5000);
        assert_eq!(run(vec![speak(true, 0), speak(true, 1000), speak(false, 5000)], 10_000), 5000);
        assert_eq!(run(vec![speak(true, 0)], 120_000), 30_000);
        assert_eq!(run(vec![speak(true, 100), speak(false, 50)], 1000), 900);
    }

    #[test]
    fn diff_names_paths() {
        let a = br#"{"notes":[{"id":"1:1","text":"a"}],"appliedSeq":1}"#;
        let b = br#"{"notes":[{"id":"1:1","text":"b"},{"id":"1:2","text":"c"}],"appliedSeq":2}"#;
        let d = divergence_diff(a, b, 10);
        assert!(d.contains(".appliedSeq: 1 vs 2"), "{d}");
        assert!(d.contains(".notes[\"1:1\"].text"), "{d}");
        assert!(d.contains("only in replica"), "{d}");
    }
}
