//! Snapshot files: `<roomId>.snapshot` holding the canonical document.

use std::io::Write;
use std::path::{Path, PathBuf};

use mindmap_core::snapshot::{restore_bytes, RestoreError};
use mindmap_core::WorkspaceState;

pub const SNAPSHOT_EXT: &str = "snapshot";

pub fn snapshot_path(dir: &Path, room_id: &str) -> PathBuf {
    dir.join(format!("{room_id}.{SNAPSHOT_EXT}"))
}

/// Write `bytes` to `path` so that readers see either the old or the new
/// file, never a partial one: write a sibling temp file, sync, rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::Builder::new()
        .prefix(".snapshot-")
        .suffix(".tmp")
        .tempfile_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    // Make the rename itself durable where the platform allows it.
    if let Ok(d) = std::fs::File::open(dir) {
        let _ = d.sync_all();
    }
    Ok(())
}

#[derive(Debug)]
pub enum Loaded {
    Missing,
    Restored(WorkspaceState),
    /// The file did not validate and was moved aside.
    Corrupt {
        error: RestoreError,
        moved_to: PathBuf,
    },
}

/// Load a room snapshot. A file that fails to restore is renamed with a
/// `.bad` suffix (numbered if one already exists) and the room starts empty.
pub fn load(path: &Path) -> std::io::Result<Loaded> {
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Loaded::Missing),
        Err(e) => return Err(e),
    };
    match restore_bytes(&bytes) {
        Ok(state) => Ok(Loaded::Restored(state)),
        Err(error) => {
            let moved_to = bad_path(path);
            std::fs::rename(path, &moved_to)?;
            Ok(Loaded::Corrupt { error, moved_to })
        }
    }
}

fn bad_path(path: &Path) -> PathBuf {
    let base = path.as_os_str().to_owned();
    let mut candidate = base.clone();
    candidate.push(".bad");
    let mut n = 1;
    while Path::new(&candidate).exists() {
        candidate = base.clone();
        candidate.push(format!(".bad.{n}"));
        n += 1;
    }
    PathBuf::from(candidate)
}

/// Room ids with a snapshot file in `dir`.
pub fn scan(dir: &Path) -> std::io::Result<Vec<String>> {
    let mut ids = Vec::new();
    let entries = match std::fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(ids),
        Err(e) => return Err(e),
    };
    for entry in entries {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some(SNAPSHOT_EXT) {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            if crate::config::valid_room_id(stem) {
                ids.push(stem.to_string());
            }
        }
    }
    ids.sort();
    Ok(ids)
}
