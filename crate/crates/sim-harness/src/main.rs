use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use simharness::scenario::Scenario;
use simharness::{inprocess, loopback};

#[derive(Parser)]
#[command(name = "simharness", about = "Scripted multi-agent runs against a mind-map room")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and print a summary.
    Run {
        /// Scenario TOML file.
        #[arg(long)]
        scenario: PathBuf,
        /// Drive a room in this process on a virtual clock (the default).
        #[arg(long, conflicts_with = "connect")]
        inprocess: bool,
        /// Connect to a running server instead, e.g. 127.0.0.1:8080.
        #[arg(long, value_name = "ADDR")]
        connect: Option<String>,
        /// Room id used with --connect.
        #[arg(long, default_value = "sim", requires = "connect")]
        room: String,
        /// Override the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Write the JSON report here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    let Command::Run {
        scenario,
        inprocess: _,
        connect,
        room,
        seed,
        report: report_path,
    } = cli.command;
    let mut s = Scenario::load(&scenario)?;
    if let Some(seed) = seed {
        s.seed = seed;
    }
    let report = match connect {
        None => inprocess::run(s),
        Some(addr) => {
            if !valid_room_id(&room) {
                bail!("room id {room:?} must be 1-64 characters of [A-Za-z0-9_-]");
            }
            let rt = tokio::runtime::Runtime::new().context("starting runtime")?;
            rt.block_on(loopback::run(s, &addr, &room))?
        }
    };
    if let Some(path) = report_path {
        std::fs::write(&path, report.to_json()).with_context(|| format!("writing {}", path.display()))?;
    }
    println!("{report}");
    Ok(report.passed)
}

fn valid_room_id(id: &str) -> bool {
    (1..=64).contains(&id.len()) && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}
