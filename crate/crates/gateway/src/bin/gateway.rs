// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use roomtrack_core::service::{audit, render_audit};
use roomtrack_gateway::client::{query_value, HttpClient};
use roomtrack_gateway::config::{load_graph, GatewayConfig};

#[derive(Parser)]
#[command(name = "gateway", about = "Visitor tracking gateway and its command-line client")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Remote {
    /// Gateway HTTP address.
    #[arg(long, default_value = "127.0.0.1:8080", env = "ROOMTRACK_URL")]
    url: String,
    #[arg(long, env = "ROOMTRACK_TOKEN")]
    token: Option<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the service.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        /// HTTP listen address (overrides the config file).
        #[arg(long)]
        listen: Option<String>,
        /// TCP frame ingest address (overrides the config file).
        #[arg(long)]
        ingest_listen: Option<String>,
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long)]
        floor_plan: Option<PathBuf>,
    },
    RegisterCheckpoint {
        #[command(flatten)]
        remote: Remote,
        #[arg(long)]
        node: String,
        #[arg(long)]
        name: String,
        #[arg(long)]
        room: String,
        #[arg(long)]
        at: Option<String>,
    },
    RegisterVisitor {
        #[command(flatten)]
        remote: Remote,
        #[arg(long)]
        tag: String,
        #[arg(long)]
        name: String,
        #[arg(long, default_value = "unspecified")]
        demographic: String,
        #[arg(long)]
        at: Option<String>,
    },
    ReturnTag {
        #[command(flatten)]
        remote: Remote,
        #[arg(long)]
        tag: String,
        #[arg(long)]
        at: Option<String>,
    },
    Occupancy {
        #[command(flatten)]
        remote: Remote,
        #[arg(long)]
        at: Option<String>,
    },
    EvacReport {
        #[command(flatten)]
        remote: Remote,
        #[arg(long)]
        at: Option<String>,
    },
    /// Rebuild state from a data directory's log and report on it.
    Replay {
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long)]
        floor_plan: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn with_at(mut body: String, at: &Option<String>) -> String {
    if let Some(at) = at {
        body.push_str(&format!("at: {at}\n"));
    }
    body
}

fn at_query(at: &Option<String>) -> String {
    at.as_ref().map_or(String::new(), |a| format!("?at={}", query_value(a)))
}

fn print_response(r: Result<(u16, String), String>) -> ExitCode {
    match r {
        Ok((status, body)) => {
            print!("{body}");
            if (200..300).contains(&status) {
                ExitCode::SUCCESS
            } else {
                eprintln!("HTTP {status}");
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Serve {
            config,
            listen,
            ingest_listen,
            data_dir,
            floor_plan,
        } => {
            let mut cfg = match config {
                Some(p) => match GatewayConfig::load(&p) {
                    Ok(c) => c,
                    Err(e) => {
                        eprintln!("error: {e}");
                        return ExitCode::FAILURE;
                    }
                },
                None => GatewayConfig::default(),
            };
            if let Some(l) = listen {
                cfg.listen = l;
            }
            if let Some(l) = ingest_listen {
                cfg.ingest_listen = Some(l);
            }
            if let Some(d) = data_dir {
                cfg.data_dir = d;
            }
            if let Some(f) = floor_plan {
                cfg.floor_plan = Some(f);
            }
            match roomtrack_gateway::server::run(cfg) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::FAILURE
                }
            }
        }
        Cmd::RegisterCheckpoint {
            remote,
            node,
            name,
            room,
            at,
        } => {
            let c = HttpClient::new(&remote.url, remote.token);
            let body = with_at(format!("node: {node}\nname: {name}\nroom: {room}\n"), &at);
            print_response(c.post("/v1/checkpoints", &body))
        }
        Cmd::RegisterVisitor {
            remote,
            tag,
            name,
            demographic,
            at,
        } => {
            let c = HttpClient::new(&remote.url, remote.token);
            let body = with_at(format!("tag: {tag}\nname: {name}\ndemographic: {demographic}\n"), &at);
            print_response(c.post("/v1/visitors", &body))
        }
        Cmd::ReturnTag { remote, tag, at } => {
            let c = HttpClient::new(&remote.url, remote.token);
            print_response(c.post(&format!("/v1/visitors/{tag}/return"), &with_at(String::new(), &at)))
        }
        Cmd::Occupancy { remote, at } => {
            let c = HttpClient::new(&remote.url, remote.token);
            print_response(c.get(&format!("/v1/occupancy{}", at_query(&at))))
        }
        Cmd::EvacReport { remote, at } => {
            let c = HttpClient::new(&remote.url, remote.token);
            print_response(c.get(&format!("/v1/evac/report{}", at_query(&at))))
        }
        Cmd::Replay {
            data_dir,
            floor_plan,
            config,
        } => {
            let cfg = match config.map(|p| GatewayConfig::load(&p)).transpose() {
                Ok(c) => c.unwrap_or_default(),
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::FAILURE;
                }
            };
            let graph = match load_graph(floor_plan.as_deref().or(cfg.floor_plan.as_deref())) {
                Ok(g) => g,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::FAILURE;
                }
            };
            match audit(graph, cfg.engine(), &data_dir) {
                Ok(a) => {
                    print!("{}", render_audit(&a));
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::FAILURE
                }
            }
        }
    }
}
