// SPDX-License-Identifier: Apache-2.0

//! HTTP API under `/v1/`. Request and response bodies are plain text:
//! `key: value` lines, then tab-separated tables after a blank line.

// Handlers short-circuit with a ready `Response` as the error value.
#![allow(clippy::result_large_err)]

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;

use roomtrack_core::evac::Channel;
use roomtrack_core::model::{normalize_node_id, parse_timestamp, validate_tag_id, Demographic, Name, RoomId, Timestamp};
use roomtrack_core::service::{
    render_alert, render_checkpoint, render_checkpoints, render_flow, render_last_position, render_occupancy,
    render_visitor, Auth, Role, Service, ServiceError,
};
use roomtrack_core::wire::Reply;

pub struct App {
    pub service: Service,
    pub auth: Auth,
}

type Shared = Arc<App>;

pub fn router(app: Shared) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/occupancy", get(occupancy))
        .route("/v1/visitors", post(register_visitor))
        .route("/v1/visitors/{tag}/last-position", get(last_position))
        .route("/v1/visitors/{tag}/return", post(return_tag))
        .route("/v1/rooms/{room}/flow", get(flow))
        .route("/v1/checkpoints", get(checkpoints).post(register_checkpoint))
        .route("/v1/evac/report", get(evac_report))
        .route("/v1/evac/alert", post(evac_alert))
        .route("/v1/ingest", post(ingest))
        .with_state(app)
}

fn text(status: u16, body: String) -> Response {
    let code = StatusCode::from_u16(status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    (code, [(header::CONTENT_TYPE, "text/plain; charset=utf-8")], body).into_response()
}

fn fail(e: ServiceError) -> Response {
    text(e.status(), e.render())
}

fn bad(msg: impl Into<String>) -> Response {
    fail(ServiceError::BadRequest(msg.into()))
}

fn role(app: &App, headers: &HeaderMap) -> Result<Role, Response> {
    let token = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(str::trim);
    app.auth.role(token).ok_or_else(|| fail(ServiceError::Unauthenticated))
}

/// Parses a `key: value` request body. Keys may not repeat.
pub fn parse_fields(body: &str) -> Result<BTreeMap<String, String>, String> {
    let mut out = BTreeMap::new();
    for (i, line) in body.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once(':')
            .ok_or_else(|| format!("line {}: expected `key: value`", i + 1))?;
        let k = k.trim().to_string();
        if out.insert(k.clone(), v.trim().to_string()).is_some() {
            return Err(format!("field {k:?} given twice"));
        }
    }
    Ok(out)
}

fn fields(body: &Bytes) -> Result<BTreeMap<String, String>, Response> {
    let s = std::str::from_utf8(body).map_err(|_| bad("body is not UTF-8"))?;
    parse_fields(s).map_err(bad)
}

fn required<'a>(f: &'a BTreeMap<String, String>, key: &str) -> Result<&'a str, Response> {
    f.get(key).map(String::as_str).ok_or_else(|| bad(format!("missing field {key:?}")))
}

fn opt_time(v: Option<&String>) -> Result<Option<Timestamp>, Response> {
    v.map(|s| parse_timestamp(s).map_err(|e| bad(e.to_string()))).transpose()
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> T {
    tokio::task::spawn_blocking(f).await.expect("handler panicked")
}

async fn health() -> Response {
    text(200, "status: ok\n".into())
}

async fn occupancy(State(app): State<Shared>, headers: HeaderMap, Query(q): Query<HashMap<String, String>>) -> Response {
    if let Err(r) = role(&app, &headers) {
        return r;
    }
    let at = match opt_time(q.get("at")) {
        Ok(t) => t,
        Err(r) => return r,
    };
    blocking(move || match app.service.occupancy(at) {
        Ok(s) => text(200, render_occupancy(&s)),
        Err(e) => fail(e),
    })
    .await
}

async fn last_position(State(app): State<Shared>, headers: HeaderMap, Path(tag): Path<String>) -> Response {
    if let Err(r) = role(&app, &headers) {
        return r;
    }
    let tag = match validate_tag_id(&tag) {
        Ok(t) => t,
        Err(e) => return bad(e.to_string()),
    };
    blocking(move || match app.service.last_position(&tag) {
        Ok(p) => text(200, render_last_position(&p)),
        Err(e) => fail(e),
    })
    .await
}

async fn flow(
    State(app): State<Shared>,
    headers: HeaderMap,
    Path(room): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> Response {
    if let Err(r) = role(&app, &headers) {
        return r;
    }
    let room = match RoomId::new(&room) {
        Ok(r) => r,
        Err(e) => return bad(e.to_string()),
    };
    let (from, to) = match (opt_time(q.get("from")), opt_time(q.get("to"))) {
        (Ok(Some(f)), Ok(Some(t))) => (f, t),
        (Err(r), _) | (_, Err(r)) => return r,
        _ => return bad("from and to are required"),
    };
    blocking(move || {
        let at = app.service.snapshot().latest().unwrap_or(to);
        match app.service.flow(&room, from, to) {
            Ok(f) => text(200, render_flow(at, &f)),
            Err(e) => fail(e),
        }
    })
    .await
}

async fn checkpoints(State(app): State<Shared>, headers: HeaderMap) -> Response {
    if let Err(r) = role(&app, &headers) {
        return r;
    }
    blocking(move || text(200, render_checkpoints(&app.service.checkpoints()))).await
}

async fn evac_report(State(app): State<Shared>, headers: HeaderMap, Query(q): Query<HashMap<String, String>>) -> Response {
    if let Err(r) = role(&app, &headers) {
        return r;
    }
    let at = match opt_time(q.get("at")) {
        Ok(t) => t,
        Err(r) => return r,
    };
    blocking(move || match app.service.evac_report(at) {
        Ok(rep) => text(200, rep.render()),
        Err(e) => fail(e),
    })
    .await
}

fn list(v: &str) -> Vec<String> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
}

async fn evac_alert(State(app): State<Shared>, headers: HeaderMap, body: Bytes) -> Response {
    let role = match role(&app, &headers) {
        Ok(r) => r,
        Err(r) => return r,
    };
    let f = match fields(&body) {
        Ok(f) => f,
        Err(r) => return r,
    };
    let channels: Result<Vec<Channel>, String> = list(f.get("channels").map_or("", String::as_str))
        .iter()
        .map(|c| c.parse())
        .collect();
    let channels = match channels {
        Ok(c) => c,
        Err(e) => return bad(e),
    };
    let recipients = list(f.get("recipients").map_or("", String::as_str));
    let now = match opt_time(f.get("at")) {
        Ok(t) => t.unwrap_or_else(Timestamp::now),
        Err(r) => return r,
    };
    blocking(move || match app.service.evac_alert(role, &channels, &recipients, now) {
        Ok((report, outcome)) => text(200, render_alert(&report, &outcome, app.service.outbox_len())),
        Err(e) => fail(e),
    })
    .await
}

async fn register_checkpoint(State(app): State<Shared>, headers: HeaderMap, body: Bytes) -> Response {
    let role = match role(&app, &headers) {
        Ok(r) => r,
        Err(r) => return r,
    };
    let parsed = (|| {
        let f = fields(&body)?;
        let node = normalize_node_id(required(&f, "node")?).map_err(|e| bad(e.to_string()))?;
        let name = Name::new(required(&f, "name")?).map_err(|e| bad(e.to_string()))?;
        let room = RoomId::new(required(&f, "room")?).map_err(|e| bad(e.to_string()))?;
        let at = opt_time(f.get("at"))?.unwrap_or_else(Timestamp::now);
        Ok::<_, Response>((node, name, room, at))
    })();
    let (node, name, room, at) = match parsed {
        Ok(p) => p,
        Err(r) => return r,
    };
    blocking(move || match app.service.register_checkpoint(role, node, name, room, at) {
        Ok(c) => text(201, render_checkpoint(&c)),
        Err(e) => fail(e),
    })
    .await
}

async fn register_visitor(State(app): State<Shared>, headers: HeaderMap, body: Bytes) -> Response {
    let role = match role(&app, &headers) {
        Ok(r) => r,
        Err(r) => return r,
    };
    let parsed = (|| {
        let f = fields(&body)?;
        let tag = validate_tag_id(required(&f, "tag")?).map_err(|e| bad(e.to_string()))?;
        let name = Name::new(required(&f, "name")?).map_err(|e| bad(e.to_string()))?;
        let demographic: Demographic = f
            .get("demographic")
            .map_or(Ok(Demographic::Unspecified), |d| d.parse())
            .map_err(|e: roomtrack_core::model::ModelError| bad(e.to_string()))?;
        let at = opt_time(f.get("at"))?.unwrap_or_else(Timestamp::now);
        Ok::<_, Response>((tag, name, demographic, at))
    })();
    let (tag, name, demographic, at) = match parsed {
        Ok(p) => p,
        Err(r) => return r,
    };
    blocking(move || match app.service.register_visitor(role, tag, name, demographic, at) {
        Ok(v) => text(201, render_visitor(&v)),
        Err(e) => fail(e),
    })
    .await
}

async fn return_tag(State(app): State<Shared>, headers: HeaderMap, Path(tag): Path<String>, body: Bytes) -> Response {
    let role = match role(&app, &headers) {
        Ok(r) => r,
        Err(r) => return r,
    };
    let parsed = (|| {
        let tag = validate_tag_id(&tag).map_err(|e| bad(e.to_string()))?;
        let f = fields(&body)?;
        let at = opt_time(f.get("at"))?.unwrap_or_else(Timestamp::now);
        Ok::<_, Response>((tag, at))
    })();
    let (tag, at) = match parsed {
        Ok(p) => p,
        Err(r) => return r,
    };
    blocking(move || match app.service.return_tag(role, tag, at) {
        Ok(v) => text(200, render_visitor(&v)),
        Err(e) => fail(e),
    })
    .await
}

/// Same frames as the TCP ingest port; the body of the answer is the reply
/// line, and the HTTP status mirrors it.
async fn ingest(State(app): State<Shared>, body: Bytes) -> Response {
    blocking(move || {
        let reply = app.service.ingest(&body).reply;
        let status = match &reply {
            Reply::Ok(_) => 200,
            Reply::Err { status, .. } => *status,
        };
        text(status, reply.encode())
    })
    .await
}
