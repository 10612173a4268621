use std::net::SocketAddr;
use std::path::PathBuf;

use anyhow::Context;
use clap::Parser;
use mindmap_server::{serve, Registry, ServerConfig};

#[derive(Debug, Parser)]
#[command(name = "mindmap-server", about = "Shared mind-map workspace server")]
struct Args {
    /// Address to listen on.
    #[arg(long, default_value = "0.0.0.0:8080")]
    listen: SocketAddr,
    /// Directory for room snapshots and metrics logs.
    #[arg(long, default_value = "data")]
    data_dir: PathBuf,
    /// Room configuration file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// One of error, warn, info, debug, trace.
    #[arg(long, default_value = "info")]
    log_level: tracing::Level,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let args = Args::parse();
    tracing_subscriber::fmt().with_max_level(args.log_level).init();

    let config = match &args.config {
        Some(path) => ServerConfig::load(path)?,
        None => ServerConfig::default(),
    };
    for room in config.rooms.values() {
        if let Some(path) = &room.clipboard_source {
            mindmap_server::config::load_clipboard(path)?;
        }
    }
    std::fs::create_dir_all(&args.data_dir)
        .with_context(|| format!("creating {}", args.data_dir.display()))?;

    let registry = Registry::new(config, args.data_dir.clone());
    let loaded = registry.load_existing().context("scanning data directory")?;
    tracing::info!(rooms = loaded.len(), "rooms loaded");

    let listener = tokio::net::TcpListener::bind(args.listen)
        .await
        .with_context(|| format!("binding {}", args.listen))?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    serve(listener, registry, async {
        let _ = tokio::signal::ctrl_c().await;
        tracing::info!("shutting down");
    })
    .await?;
    Ok(())
}
