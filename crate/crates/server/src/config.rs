//! Room configuration file and clipboard snippet files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use mindmap_core::{ClipboardItem, ClipboardItemId, ClipboardKind};
use serde::Deserialize;
use thiserror::Error;

pub const DEFAULT_AUTOSAVE_SECONDS: u64 = 30;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing {path}: {source}")]
    Toml {
        path: PathBuf,
        source: toml::de::Error,
    },
    #[error("invalid room id {0:?}: use 1-64 characters from [A-Za-z0-9_-]")]
    RoomId(String),
    #[error("room {0}: autosave_interval_seconds must be at least 1")]
    Autosave(String),
    #[error("room {0} configured twice")]
    Duplicate(String),
    #[error("{path}:{line}: expected a `note:` or `label:` prefix")]
    Clipboard { path: PathBuf, line: usize },
}

/// Settings for one room.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomConfig {
    pub room_id: String,
    #[serde(default)]
    pub clipboard_source: Option<PathBuf>,
    #[serde(default = "yes")]
    pub gamification_enabled: bool,
    #[serde(default = "default_autosave")]
    pub autosave_interval_seconds: u64,
    /// Overrides the server data directory for this room.
    #[serde(default)]
    pub persistence_directory: Option<PathBuf>,
}

fn yes() -> bool {
    true
}

fn default_autosave() -> u64 {
    DEFAULT_AUTOSAVE_SECONDS
}

impl RoomConfig {
    /// Settings for a room created on first join.
    pub fn auto(room_id: &str, defaults: &Defaults) -> Self {
        Self {
            room_id: room_id.to_string(),
            clipboard_source: defaults.clipboard_source.clone(),
            gamification_enabled: defaults.gamification_enabled,
            autosave_interval_seconds: defaults.autosave_interval_seconds,
            persistence_directory: None,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !valid_room_id(&self.room_id) {
            return Err(ConfigError::RoomId(self.room_id.clone()));
        }
        if self.autosave_interval_seconds < 1 {
            return Err(ConfigError::Autosave(self.room_id.clone()));
        }
        Ok(())
    }
}

/// Settings applied to rooms that are not listed in the file.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Defaults {
    #[serde(default = "yes")]
    pub auto_create: bool,
    #[serde(default)]
    pub clipboard_source: Option<PathBuf>,
    #[serde(default = "yes")]
    pub gamification_enabled: bool,
    #[serde(default = "default_autosave")]
    pub autosave_interval_seconds: u64,
}

impl Default for Defaults {
    fn default() -> Self {
        Self {
            auto_create: true,
            clipboard_source: None,
            gamification_enabled: true,
            autosave_interval_seconds: DEFAULT_AUTOSAVE_SECONDS,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(default)]
    defaults: Option<Defaults>,
    #[serde(default)]
    rooms: Vec<RoomConfig>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ServerConfig {
    pub defaults: Defaults,
    pub rooms: BTreeMap<String, RoomConfig>,
}

impl ServerConfig {
    /// Parse a config document. Relative clipboard and persistence paths
    /// are resolved against `base`.
    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let file: ConfigFile = toml::from_str(text).map_err(|source| ConfigError::Toml {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut Option<PathBuf>| {
            if let Some(q) = p {
                if q.is_relative() {
                    *q = base.join(&*q);
                }
            }
        };
        let mut defaults = file.defaults.unwrap_or_default();
        resolve(&mut defaults.clipboard_source);
        if defaults.autosave_interval_seconds < 1 {
            return Err(ConfigError::Autosave("<defaults>".into()));
        }
        let mut rooms = BTreeMap::new();
        for mut room in file.rooms {
            room.validate()?;
            resolve(&mut room.clipboard_source);
            resolve(&mut room.persistence_directory);
            if rooms.contains_key(&room.room_id) {
                return Err(ConfigError::Duplicate(room.room_id));
            }
            rooms.insert(room.room_id.clone(), room);
        }
        Ok(Self { defaults, rooms })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    /// Settings for `room_id`, or `None` when unknown and auto-creation is off.
    pub fn room(&self, room_id: &str) -> Option<RoomConfig> {
        match self.rooms.get(room_id) {
            Some(c) => Some(c.clone()),
            None if self.defaults.auto_create => Some(RoomConfig::auto(room_id, &self.defaults)),
            None => None,
        }
    }
}

/// Room ids double as file names.
pub fn valid_room_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 64
        && id
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

/// Parse clipboard snippets: one per line, `note:` or `label:` prefix.
/// Blank lines and lines starting with `#` are skipped.
pub fn parse_clipboard(text: &str, path: &Path) -> Result<Vec<ClipboardItem>, ConfigError> {
    let mut items = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (kind, rest) = if let Some(rest) = trimmed.strip_prefix("note:") {
            (ClipboardKind::NoteSource, rest)
        } else if let Some(rest) = trimmed.strip_prefix("label:") {
            (ClipboardKind::LabelSource, rest)
        } else {
            return Err(ConfigError::Clipboard {
                path: path.to_path_buf(),
                line: i + 1,
            });
        };
        items.push(ClipboardItem {
            id: ClipboardItemId(items.len() as u32 + 1),
            text: rest.trim().to_string(),
            kind,
        });
    }
    Ok(items)
}

pub fn load_clipboard(path: &Path) -> Result<Vec<ClipboardItem>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_clipboard(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn room_ids() {
        assert!(valid_room_id("lab-3_B"));
        for bad in ["", "..", "a/b", "a b", "é", &"x".repeat(65)] {
            assert!(!valid_room_id(bad), "{bad}");
        }
    }

    #[test]
    fn clipboard_lines() {
        let items = parse_clipboard("note: water cycle\n\n# c\nlabel:causes \n", Path::new("c.txt")).unwrap();
        assert_eq!(items.len(), 2);
        assert_eq!(items[0].kind, ClipboardKind::NoteSource);
        assert_eq!(items[0].text, "water cycle");
        assert_eq!(items[1].id, ClipboardItemId(2));
        assert_eq!(items[1].text, "causes");
        assert!(matches!(
            parse_clipboard("note: a\nfoo\n", Path::new("c.txt")),
            Err(ConfigError::Clipboard { line: 2, .. })
        ));
    }

    #[test]
    fn config_file() {
        let text = r#"
            [defaults]
            auto_create = false

            [[rooms]]
            room_id = "lab"
            clipboard_source = "lab.txt"
            gamification_enabled = false
            autosave_interval_seconds = 5
        "#;
        let c = ServerConfig::parse(text, Path::new("/etc/mm/rooms.toml")).unwrap();
        let lab = c.room("lab").unwrap();
        assert_eq!(lab.clipboard_source.unwrap(), Path::new("/etc/mm/lab.txt"));
        assert!(!lab.gamification_enabled);
        assert!(c.room("other").is_none());

        let zero = "[[rooms]]\nroom_id = \"a\"\nautosave_interval_seconds = 0\n";
        assert!(matches!(ServerConfig::parse(zero, Path::new("x")), Err(ConfigError::Autosave(_))));
        let bad = "[[rooms]]\nroom_id = \"../etc\"\n";
        assert!(matches!(ServerConfig::parse(bad, Path::new("x")), Err(ConfigError::RoomId(_))));
    }
}
