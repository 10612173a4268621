//! Identifiers for users and workspace objects.
//!
//! Object ids are `(origin client, client-local counter)` pairs. The counter
//! is the client sequence number of the operation that created the object,
//! so every replica derives the same id from the same operation without
//! coordination. On the wire an object id is the string `"<client>:<counter>"`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A participant in a room. Assigned by the server on join, never reused
/// while the room is alive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserId(pub u32);

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "u{}", self.0)
    }
}

/// Index of a clipboard snippet in the room's clipboard list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClipboardItemId(pub u32);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed object id {0:?}, expected \"<client>:<counter>\"")]
pub struct ParseIdError(String);

macro_rules! object_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name {
            pub client: UserId,
            pub counter: u64,
        }

        impl $name {
            pub const fn new(client: UserId, counter: u64) -> Self {
                Self { client, counter }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}:{}", self.client.0, self.counter)
            }
        }

        impl FromStr for $name {
            type Err = ParseIdError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                let err = || ParseIdError(s.to_string());
                let (client, counter) = s.split_once(':').ok_or_else(err)?;
                Ok(Self {
                    client: UserId(client.parse().map_err(|_| err())?),
                    counter: counter.parse().map_err(|_| err())?,
                })
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                let s = String::deserialize(deserializer)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

object_id!(
    /// A sticky note.
    NoteId
);
object_id!(
    /// A link between two notes.
    LinkId
);
object_id!(
    /// A direction label attached to a link.
    LabelId
);
object_id!(
    /// A 2D panel that notes attach to.
    PanelId
);
