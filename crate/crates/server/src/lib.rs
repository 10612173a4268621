//! Websocket server hosting shared mind-map rooms.
//!
//! Each room runs as one task owning a [`mindmap_core::room::Room`];
//! connections talk to it over channels. Snapshots are written atomically
//! to `<data-dir>/<roomId>.snapshot` and restored on start.

pub mod config;
pub mod metrics;
pub mod persist;
pub mod rooms;
pub mod ws;

use std::future::Future;
use std::sync::Arc;

pub use config::{RoomConfig, ServerConfig};
pub use rooms::{Registry, RoomHandle};

/// Serve until `shutdown` resolves, then save every room.
pub async fn serve(
    listener: tokio::net::TcpListener,
    registry: Arc<Registry>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let app = ws::router(registry.clone());
    let result = axum::serve(listener, app).with_graceful_shutdown(shutdown).await;
    registry.shutdown().await;
    result
}
