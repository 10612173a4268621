//! Per-room session metrics as JSON lines, written off the room task.

use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;

use serde_json::Value;

/// Appends one JSON object per line to `<dir>/<roomId>.metrics.jsonl`.
#[derive(Debug, Clone)]
pub struct MetricsLog {
    tx: Option<mpsc::Sender<Value>>,
}

impl MetricsLog {
    pub fn disabled() -> Self {
        Self { tx: None }
    }

    pub fn open(dir: &Path, room_id: &str) -> std::io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        let path = metrics_path(dir, room_id);
        let file = std::fs::OpenOptions::new().create(true).append(true).open(&path)?;
        let (tx, rx) = mpsc::channel::<Value>();
        std::thread::Builder::new()
            .name(format!("metrics-{room_id}"))
            .spawn(move || {
                let mut out = BufWriter::new(file);
                while let Ok(v) = rx.recv() {
                    let mut ok = writeln!(out, "{v}").is_ok();
                    // Drain whatever else is queued before flushing.
                    while let Ok(v) = rx.try_recv() {
                        ok &= writeln!(out, "{v}").is_ok();
                    }
                    if !ok || out.flush().is_err() {
                        tracing::warn!(path = %path.display(), "metrics write failed");
                    }
                }
            })?;
        Ok(Self { tx: Some(tx) })
    }

    pub fn record(&self, record: Value) {
        if let Some(tx) = &self.tx {
            let _ = tx.send(record);
        }
    }
}

pub fn metrics_path(dir: &Path, room_id: &str) -> PathBuf {
    dir.join(format!("{room_id}.metrics.jsonl"))
}
