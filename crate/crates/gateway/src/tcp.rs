// SPDX-License-Identifier: Apache-2.0

//! Persistent-connection frame ingest: a node writes frames back to back and
//! reads one reply line per frame, in order.

use std::sync::Arc;

use log::{debug, warn};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};

use roomtrack_core::wire::{split_frame, Reply};

use crate::http::App;

pub async fn serve(listener: TcpListener, app: Arc<App>) -> std::io::Result<()> {
    loop {
        let (sock, peer) = listener.accept().await?;
        let app = app.clone();
        tokio::spawn(async move {
            if let Err(e) = connection(sock, app).await {
                debug!("{peer}: {e}");
            }
        });
    }
}

async fn connection(mut sock: TcpStream, app: Arc<App>) -> std::io::Result<()> {
    sock.set_nodelay(true)?;
    let mut buf: Vec<u8> = Vec::new();
    let mut chunk = vec![0u8; 64 * 1024];
    loop {
        loop {
            match split_frame(&buf) {
                Ok(Some((_, used))) => {
                    let frame: Vec<u8> = buf.drain(..used).collect();
                    let app = app.clone();
                    let reply = tokio::task::spawn_blocking(move || app.service.ingest(&frame).reply)
                        .await
                        .expect("ingest panicked");
                    sock.write_all(reply.encode().as_bytes()).await?;
                }
                Ok(None) => break,
                Err(e) => {
                    // The stream cannot be resynchronised reliably; answer
                    // and hang up so the node reconnects.
                    warn!("closing ingest connection: {e}");
                    let reply = Reply::Err {
                        status: 400,
                        message: e.to_string(),
                    };
                    sock.write_all(reply.encode().as_bytes()).await?;
                    return Ok(());
                }
            }
        }
        let n = sock.read(&mut chunk).await?;
        if n == 0 {
            return Ok(());
        }
        buf.extend_from_slice(&chunk[..n]);
    }
}
