// SPDX-License-Identifier: Apache-2.0

//! Blocking clients for the gateway: frame transport for reader nodes and a
//! small HTTP client for the command line and the simulator.

use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::time::Duration;

use roomtrack_core::model::{TagId, Timestamp};
use roomtrack_core::node::{Transport, TransportError};
use roomtrack_core::sim::{Desk, VisitorTruth};
use roomtrack_core::wire::Reply;

/// Frame transport over one persistent TCP connection, re-established on
/// the next send after any failure.
pub struct TcpTransport {
    addr: String,
    timeout: Duration,
    conn: Option<BufReader<TcpStream>>,
}

impl TcpTransport {
    pub fn new(addr: impl Into<String>) -> Self {
        Self {
            addr: addr.into(),
            timeout: Duration::from_secs(10),
            conn: None,
        }
    }

    fn exchange(&mut self, frame: &[u8]) -> std::io::Result<String> {
        if self.conn.is_none() {
            let s = TcpStream::connect(&self.addr)?;
            s.set_read_timeout(Some(self.timeout))?;
            s.set_write_timeout(Some(self.timeout))?;
            s.set_nodelay(true)?;
            self.conn = Some(BufReader::new(s));
        }
        let conn = self.conn.as_mut().expect("connected");
        conn.get_mut().write_all(frame)?;
        let mut line = String::new();
        if conn.read_line(&mut line)? == 0 {
            return Err(std::io::Error::new(std::io::ErrorKind::UnexpectedEof, "connection closed"));
        }
        Ok(line)
    }
}

impl Transport for TcpTransport {
    fn send(&mut self, frame: &[u8]) -> Result<Reply, TransportError> {
        match self.exchange(frame) {
            Ok(line) => Reply::decode(&line).ok_or(TransportError::BadReply(line)),
            Err(e) => {
                self.conn = None;
                Err(TransportError::Unreachable(format!("{}: {e}", self.addr)))
            }
        }
    }
}

/// Minimal text HTTP client with bearer-token auth.
pub struct HttpClient {
    agent: ureq::Agent,
    base: String,
    token: Option<String>,
}

impl HttpClient {
    pub fn new(base: &str, token: Option<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(30)))
            .build()
            .into();
        let base = if base.starts_with("http://") || base.starts_with("https://") {
            base.trim_end_matches('/').to_string()
        } else {
            format!("http://{}", base.trim_end_matches('/'))
        };
        Self { agent, base, token }
    }

    fn auth(&self) -> Option<String> {
        self.token.as_ref().map(|t| format!("Bearer {t}"))
    }

    /// `(status, body)`; transport failures come back as `Err`.
    pub fn get(&self, path: &str) -> Result<(u16, String), String> {
        let mut req = self.agent.get(format!("{}{path}", self.base));
        if let Some(a) = self.auth() {
            req = req.header("Authorization", a);
        }
        let mut resp = req.call().map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_string().map_err(|e| e.to_string())?;
        Ok((status, body))
    }

    pub fn post(&self, path: &str, body: &str) -> Result<(u16, String), String> {
        let mut req = self.agent.post(format!("{}{path}", self.base));
        if let Some(a) = self.auth() {
            req = req.header("Authorization", a);
        }
        let mut resp = req
            .header("Content-Type", "text/plain; charset=utf-8")
            .send(body)
            .map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_string().map_err(|e| e.to_string())?;
        Ok((status, body))
    }
}

/// Encodes a query-string value (timestamps contain `:`).
pub fn query_value(s: &str) -> String {
    s.bytes()
        .map(|b| match b {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'_' | b'.' | b'~' => (b as char).to_string(),
            _ => format!("%{b:02X}"),
        })
        .collect()
}

/// Drives a running gateway: desk actions over HTTP, node frames over the
/// TCP ingest port.
pub struct RemoteDesk {
    pub http: HttpClient,
    pub ingest: TcpTransport,
}

fn expect_ok(what: &str, r: Result<(u16, String), String>) -> Result<(), String> {
    match r {
        Ok((s, _)) if (200..300).contains(&s) => Ok(()),
        Ok((s, body)) => Err(format!("{what}: HTTP {s}: {}", body.trim())),
        Err(e) => Err(format!("{what}: {e}")),
    }
}

impl Desk for RemoteDesk {
    fn register(&mut self, v: &VisitorTruth) -> Result<(), String> {
        let body = format!(
            "tag: {}\nname: {}\ndemographic: {}\nat: {}\n",
            v.tag,
            v.name,
            v.demographic,
            v.arrive()
        );
        expect_ok("register", self.http.post("/v1/visitors", &body))
    }

    fn return_tag(&mut self, tag: TagId, at: Timestamp) -> Result<(), String> {
        expect_ok("return", self.http.post(&format!("/v1/visitors/{tag}/return"), &format!("at: {at}\n")))
    }

    fn transport(&mut self) -> &mut dyn Transport {
        &mut self.ingest
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn query_values_are_escaped() {
        assert_eq!(query_value("28-09-2017T11:08:15"), "28-09-2017T11%3A08%3A15");
    }

    #[test]
    fn unreachable_gateway_is_a_transport_error() {
        // port 9 (discard) is essentially never listening on loopback
        let mut t = TcpTransport::new("127.0.0.1:9");
        assert!(matches!(t.send(b"heartbeat\nx\n\n"), Err(TransportError::Unreachable(_))));
    }
}
