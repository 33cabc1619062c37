// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::Parser;

use roomtrack_core::graph::DEFAULT_SCENARIO;
use roomtrack_core::node::{render_trace, DetectionModel};
use roomtrack_core::service::{register_plan_checkpoints, LocalLink, Role, Service, ServiceConfig};
use roomtrack_core::sim::{feed, generate, make_nodes, parse_scenario, FeedReport, GroundTruth};
use roomtrack_core::store::StoreConfig;
use roomtrack_gateway::client::{HttpClient, RemoteDesk, TcpTransport};

/// Generates visitor movement for a scenario and plays it through reader
/// nodes into a gateway (in-process unless --gateway is given).
#[derive(Parser)]
#[command(name = "simulate")]
struct Cli {
    /// Floor plan with optional `SIM <key> <value>` settings.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    visitors: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    p_detect: f64,
    /// Simulated seconds per real second.
    #[arg(long, conflicts_with = "as_fast_as_possible")]
    speed: Option<f64>,
    /// The default when --speed is not given.
    #[arg(long)]
    as_fast_as_possible: bool,
    /// Write the `TAG ROOM ENTER_TS LEAVE_TS` truth file here.
    #[arg(long)]
    emit_truth: Option<PathBuf>,
    /// Write one `reader-node --trace` file per checkpoint into this directory.
    #[arg(long)]
    emit_traces: Option<PathBuf>,
    /// Only generate and emit; do not run readers or a gateway.
    #[arg(long)]
    generate_only: bool,
    /// Data directory for the in-process gateway (default: a temporary one).
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// HTTP address of a running gateway.
    #[arg(long, requires = "ingest")]
    gateway: Option<String>,
    /// TCP ingest address of that gateway.
    #[arg(long)]
    ingest: Option<String>,
    #[arg(long, env = "ROOMTRACK_TOKEN")]
    token: Option<String>,
}

fn fail(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::FAILURE
}

fn summary(gt: &GroundTruth, r: &FeedReport) {
    println!(
        "visitors: {}\npassages: {}\nregistered: {}\nreturned: {}\nundelivered_observations: {}\nfinished_at: {}",
        gt.visitors.len(),
        r.passages,
        r.registered,
        r.returned,
        r.undelivered,
        r.finished_at.map_or("-".to_string(), |t| t.to_string())
    );
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let text = match &cli.scenario {
        Some(p) => match std::fs::read_to_string(p) {
            Ok(t) => t,
            Err(e) => return fail(format!("{}: {e}", p.display())),
        },
        None => DEFAULT_SCENARIO.to_string(),
    };
    let mut params = match parse_scenario(&text) {
        Ok(p) => p,
        Err(e) => return fail(e),
    };
    if let Some(s) = cli.seed {
        params.seed = s;
    }
    if let Some(n) = cli.visitors {
        params.n_visitors = n;
    }
    let gt = match generate(&params) {
        Ok(g) => g,
        Err(e) => return fail(e),
    };
    if let Some(path) = &cli.emit_truth {
        if let Err(e) = std::fs::write(path, gt.render()) {
            return fail(format!("{}: {e}", path.display()));
        }
    }
    if let Some(dir) = &cli.emit_traces {
        if let Err(e) = std::fs::create_dir_all(dir) {
            return fail(format!("{}: {e}", dir.display()));
        }
        for (node, list) in &gt.passages {
            let path = dir.join(format!("{node}.trace").replace(':', "-"));
            if let Err(e) = std::fs::write(&path, render_trace(list)) {
                return fail(format!("{}: {e}", path.display()));
            }
        }
    }
    if cli.generate_only {
        println!("visitors: {}\ntransitions: {}", gt.visitors.len(), gt.transitions());
        return ExitCode::SUCCESS;
    }

    let model = DetectionModel {
        p_detect: cli.p_detect,
        ..DetectionModel::default()
    };
    if let Err(e) = model.validate() {
        return fail(e);
    }
    let mut nodes = make_nodes(&params.graph, model, params.seed);
    let step = cli.speed.map(|s| Duration::from_secs_f64(1.0 / s.max(1e-6)));
    let mut pace = |_| {
        if let Some(d) = step {
            std::thread::sleep(d);
        }
    };

    if let (Some(http), Some(ingest)) = (&cli.gateway, &cli.ingest) {
        let client = HttpClient::new(http, cli.token.clone());
        for (node, cp) in params.graph.checkpoints() {
            let body = format!("node: {node}\nname: {}\nroom: {}\nat: {}\n", cp.name, cp.room, params.start);
            match client.post("/v1/checkpoints", &body) {
                Ok((s, _)) if s == 201 || s == 409 => {}
                Ok((s, b)) => return fail(format!("registering {node}: HTTP {s}: {}", b.trim())),
                Err(e) => return fail(e),
            }
        }
        let mut desk = RemoteDesk {
            http: client,
            ingest: TcpTransport::new(ingest.clone()),
        };
        return match feed(&gt, &mut nodes, &mut desk, &mut pace) {
            Ok(r) => {
                summary(&gt, &r);
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        };
    }

    let (dir, temporary) = match &cli.data_dir {
        Some(d) => (d.clone(), false),
        None => (
            std::env::temp_dir().join(format!("roomtrack-sim-{}", std::process::id())),
            true,
        ),
    };
    let cfg = ServiceConfig {
        store: StoreConfig {
            sync: false,
            ..StoreConfig::default()
        },
        ..ServiceConfig::default()
    };
    let code = (|| {
        let (svc, _) = Service::open(Arc::new(params.graph.clone()), cfg, &dir).map_err(|e| e.to_string())?;
        register_plan_checkpoints(&svc, Role::Manager, params.start).map_err(|e| e.to_string())?;
        let mut link = LocalLink {
            service: &svc,
            role: Role::Manager,
        };
        let report = feed(&gt, &mut nodes, &mut link, &mut pace).map_err(|e| e.to_string())?;
        summary(&gt, &report);
        let engine = svc.snapshot();
        let times = gt.event_times();
        let mismatched = times
            .iter()
            .filter(|t| engine.occupancy(Some(**t)).map(|o| o.per_room) != Ok(gt.occupancy(**t)))
            .count();
        println!(
            "truth_transitions: {}\nobserved_transitions: {}\noccupancy_mismatches: {mismatched}/{}",
            gt.transitions(),
            engine.observed_transitions(),
            times.len()
        );
        Ok::<_, String>(())
    })();
    if temporary {
        let _ = std::fs::remove_dir_all(&dir);
    }
    match code {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e),
    }
}
