// SPDX-License-Identifier: Apache-2.0

use std::sync::Arc;

use log::{info, warn};
use tokio::net::TcpListener;

use roomtrack_core::service::Service;
use roomtrack_core::store::RestoreSource;

use crate::config::GatewayConfig;
use crate::http::{router, App};

/// Opens the data directory and serves HTTP (and TCP ingest, if configured)
/// until interrupted. Bound addresses are printed on stdout, one per line,
/// as `http <addr>` and `ingest <addr>`.
pub fn run(cfg: GatewayConfig) -> Result<(), Box<dyn std::error::Error>> {
    let graph = cfg.graph()?;
    let (service, opened) = Service::open(graph, cfg.service(), &cfg.data_dir)?;
    match &opened.source {
        RestoreSource::Snapshot(seq) => info!("restored snapshot at seq {seq}, log at seq {}", opened.last_seq),
        RestoreSource::FullReplay => info!("replayed {} records", opened.last_seq),
        RestoreSource::FallbackReplay(why) => warn!("{why}; replayed {} records", opened.last_seq),
    }
    if opened.store.torn_bytes_truncated > 0 {
        warn!("dropped {} bytes of an unfinished write", opened.store.torn_bytes_truncated);
    }
    let app = Arc::new(App {
        service,
        auth: cfg.auth(),
    });
    let rt = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .max_blocking_threads(8)
        .enable_all()
        .build()?;
    rt.block_on(async {
        let http = TcpListener::bind(&cfg.listen).await?;
        println!("http {}", http.local_addr()?);
        if let Some(addr) = &cfg.ingest_listen {
            let ingest = TcpListener::bind(addr).await?;
            println!("ingest {}", ingest.local_addr()?);
            let app = app.clone();
            tokio::spawn(async move {
                if let Err(e) = crate::tcp::serve(ingest, app).await {
                    warn!("ingest listener stopped: {e}");
                }
            });
        }
        use std::io::Write;
        std::io::stdout().flush()?;
        axum::serve(http, router(app.clone()))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok::<_, Box<dyn std::error::Error>>(())
    })?;
    app.service.wait_for_snapshot();
    Ok(())
}
