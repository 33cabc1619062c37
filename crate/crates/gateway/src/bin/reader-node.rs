// SPDX-License-Identifier: Apache-2.0

use std::io::BufRead;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::mpsc;
use std::time::Duration;

use clap::Parser;
use log::{error, info};

use roomtrack_core::model::{normalize_node_id, validate_tag_id, Name, RoomId, Timestamp};
use roomtrack_core::node::{parse_trace, DetectionModel, NodeConfig, NodeIdentity, ReaderNode, DEFAULT_HEARTBEAT_S, DEFAULT_WINDOW_S};
use roomtrack_gateway::client::TcpTransport;

/// Checkpoint reader agent. Without --trace, reads one tag id per line from
/// stdin and reports each as a passage at the current time.
#[derive(Parser)]
#[command(name = "reader-node")]
struct Cli {
    #[arg(long)]
    node_id: String,
    #[arg(long)]
    name: String,
    #[arg(long)]
    room: String,
    /// Gateway TCP ingest address.
    #[arg(long, default_value = "127.0.0.1:7070")]
    gateway: String,
    #[arg(long, default_value_t = DetectionModel::default().p_detect)]
    p_detect: f64,
    #[arg(long, default_value_t = DEFAULT_WINDOW_S)]
    window_s: i64,
    #[arg(long, default_value_t = DEFAULT_HEARTBEAT_S)]
    heartbeat_s: i64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Replay passages from a `TAG TIMESTAMP` trace file on a simulated clock.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Simulated seconds per real second when replaying a trace.
    #[arg(long, default_value_t = 1.0, conflicts_with = "as_fast_as_possible")]
    speed: f64,
    #[arg(long)]
    as_fast_as_possible: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let identity = match (|| {
        Ok::<_, String>(NodeIdentity {
            node: normalize_node_id(&cli.node_id).map_err(|e| e.to_string())?,
            name: Name::new(&cli.name).map_err(|e| e.to_string())?,
            room: RoomId::new(&cli.room).map_err(|e| e.to_string())?,
        })
    })() {
        Ok(i) => i,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    let model = DetectionModel {
        p_detect: cli.p_detect,
        ..DetectionModel::default()
    };
    if let Err(e) = model.validate() {
        eprintln!("error: {e}");
        return ExitCode::FAILURE;
    }
    if cli.window_s < 1 || !(cli.speed.is_finite() && cli.speed > 0.0) {
        eprintln!("error: --window-s must be at least 1 and --speed positive");
        return ExitCode::FAILURE;
    }
    let mut cfg = NodeConfig::new(identity);
    cfg.model = model;
    cfg.window_s = cli.window_s;
    cfg.heartbeat_s = cli.heartbeat_s;
    cfg.seed = cli.seed;
    let mut node = ReaderNode::new(cfg);
    let mut transport = TcpTransport::new(cli.gateway.clone());

    match &cli.trace {
        Some(path) => {
            let entries = match std::fs::read_to_string(path)
                .map_err(|e| e.to_string())
                .and_then(|t| parse_trace(&t).map_err(|e| e.to_string()))
            {
                Ok(e) => e,
                Err(e) => {
                    eprintln!("error: {}: {e}", path.display());
                    return ExitCode::FAILURE;
                }
            };
            let Some(&(_, mut now)) = entries.first() else {
                info!("empty trace");
                return ExitCode::SUCCESS;
            };
            let step = Duration::from_secs_f64(1.0 / cli.speed);
            let mut i = 0;
            let mut idle_for = 0;
            while !node.is_halted() {
                while i < entries.len() && entries[i].1 <= now {
                    node.passage(entries[i].0, entries[i].1);
                    i += 1;
                }
                node.tick(now, &mut transport);
                if i == entries.len() && node.is_idle() {
                    break;
                }
                if i == entries.len() {
                    idle_for += 1;
                    if idle_for > 3600 {
                        break;
                    }
                }
                if !cli.as_fast_as_possible {
                    std::thread::sleep(step);
                }
                now = now.plus_seconds(1);
            }
        }
        None => {
            let (tx, rx) = mpsc::channel();
            std::thread::spawn(move || {
                for line in std::io::stdin().lock().lines() {
                    let Ok(line) = line else { break };
                    let line = line.trim().to_string();
                    if !line.is_empty() && tx.send(line).is_err() {
                        break;
                    }
                }
            });
            loop {
                match rx.recv_timeout(Duration::from_secs(1)) {
                    Ok(text) => match validate_tag_id(&text) {
                        Ok(tag) => node.passage(tag, Timestamp::now()),
                        Err(e) => error!("ignoring {text:?}: {e}"),
                    },
                    Err(mpsc::RecvTimeoutError::Timeout) => {}
                    Err(mpsc::RecvTimeoutError::Disconnected) => break,
                }
                node.tick(Timestamp::now(), &mut transport);
                if node.is_halted() {
                    break;
                }
            }
            node.flush_now(Timestamp::now(), &mut transport);
        }
    }
    let s = node.stats();
    println!(
        "passages: {}\nobservations: {}\nacked: {}\nunacked: {}\nretries: {}\nheartbeats: {}",
        s.passages,
        s.observations,
        s.observations_acked,
        node.unacked(),
        s.retries,
        s.heartbeats_sent
    );
    if node.is_halted() {
        eprintln!("error: the gateway does not know this checkpoint; register it and restart");
        return ExitCode::FAILURE;
    }
    if node.unacked() > 0 {
        return ExitCode::FAILURE;
    }
    ExitCode::SUCCESS
}
