//! Every JSON example in docs/protocol.md parses and re-serializes to the
//! same bytes, and every message and payload kind has an example.

use std::collections::BTreeSet;

use mindmap_core::snapshot::{restore, SnapshotDocument};
use mindmap_core::*;

fn examples() -> Vec<String> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../docs/protocol.md");
    let doc = std::fs::read_to_string(path).unwrap();
    let mut out = Vec::new();
    let mut block: Option<String> = None;
    for line in doc.lines() {
        match (&mut block, line.trim()) {
            (None, "```json") => block = Some(String::new()),
            (Some(b), "```") => {
                out.push(std::mem::take(b));
                block = None;
            }
            (Some(b), l) => b.push_str(l),
            _ => {}
        }
    }
    out
}

fn tag(json: &str, key: &str) -> Option<String> {
    let v: serde_json::Value = serde_json::from_str(json).unwrap();
    v.get(key).and_then(|t| t.as_str()).map(String::from)
}

#[test]
fn examples_round_trip() {
    let mut client = BTreeSet::new();
    let mut server = BTreeSet::new();
    let mut kinds = BTreeSet::new();
    let mut snapshots = 0;
    for ex in examples() {
        if let Some(t) = tag(&ex, "type") {
            let again = if let Ok(m) = ClientMessage::from_json(&ex) {
                client.insert(t);
                m.to_json()
            } else {
                let m = ServerMessage::from_json(&ex).unwrap_or_else(|e| panic!("{e}: {ex}"));
                server.insert(t);
                m.to_json()
            };
            assert_eq!(again, ex);
        } else if let Some(k) = tag(&ex, "kind") {
            let p: OperationPayload = serde_json::from_str(&ex).unwrap_or_else(|e| panic!("{e}: {ex}"));
            assert_eq!(serde_json::to_string(&p).unwrap(), ex);
            kinds.insert(k);
        } else {
            let doc: SnapshotDocument = serde_json::from_str(&ex).unwrap_or_else(|e| panic!("{e}: {ex}"));
            let state = restore(doc).unwrap();
            assert_eq!(snapshot::to_canonical_bytes(&state), ex.as_bytes());
            snapshots += 1;
        }
    }
    let set = |s: &[&str]| s.iter().map(|x| x.to_string()).collect::<BTreeSet<_>>();
    assert_eq!(client, set(&["hello", "submitOp", "presence", "speaking", "ping"]));
    assert_eq!(
        server,
        set(&[
            "welcome",
            "opReplay",
            "joinRejected",
            "opAccepted",
            "opRejected",
            "opBroadcast",
            "presenceBroadcast",
            "scoreUpdate",
            "badgeChange",
            "pong"
        ])
    );
    assert_eq!(kinds.len(), 19, "{kinds:?}");
    assert_eq!(snapshots, 1);
}
