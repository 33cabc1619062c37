// SPDX-License-Identifier: Apache-2.0

//! Gateway configuration file (TOML).
//!
//! ```toml
//! floor_plan = "scenarios/default.plan"   # omitted: built-in reference building
//! data_dir = "data"
//! outbox = "data/outbox.tsv"
//! manager_token = "change-me"
//! viewer_token = "look-only"
//! dedup_window_s = 2
//! heartbeat_period_s = 10
//! listen = "127.0.0.1:8080"
//! ingest_listen = "127.0.0.1:7070"
//! snapshot_every = 10000
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use roomtrack_core::engine::EngineConfig;
use roomtrack_core::graph::BuildingGraph;
use roomtrack_core::service::{Auth, ServiceConfig};
use roomtrack_core::store::StoreConfig;

#[derive(Debug, Clone, Deserialize, PartialEq, Eq)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    pub floor_plan: Option<PathBuf>,
    pub data_dir: PathBuf,
    pub outbox: Option<PathBuf>,
    pub manager_token: String,
    pub viewer_token: Option<String>,
    pub dedup_window_s: i64,
    pub heartbeat_period_s: i64,
    pub listen: String,
    pub ingest_listen: Option<String>,
    pub snapshot_every: u64,
    /// fsync each append group; turning this off trades durability for speed.
    pub sync: bool,
    pub alert_cooldown_s: i64,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        let engine = EngineConfig::default();
        let service = ServiceConfig::default();
        Self {
            floor_plan: None,
            data_dir: PathBuf::from("data"),
            outbox: None,
            manager_token: "manager".into(),
            viewer_token: None,
            dedup_window_s: engine.dedup_window_s,
            heartbeat_period_s: engine.heartbeat_period_s,
            listen: "127.0.0.1:8080".into(),
            ingest_listen: Some("127.0.0.1:7070".into()),
            snapshot_every: service.snapshot_every,
            sync: true,
            alert_cooldown_s: service.alert_cooldown_s,
        }
    }
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

impl GatewayConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))
    }

    pub fn graph(&self) -> Result<Arc<BuildingGraph>, ConfigError> {
        load_graph(self.floor_plan.as_deref())
    }

    pub fn engine(&self) -> EngineConfig {
        EngineConfig {
            dedup_window_s: self.dedup_window_s,
            heartbeat_period_s: self.heartbeat_period_s,
        }
    }

    pub fn service(&self) -> ServiceConfig {
        ServiceConfig {
            engine: self.engine(),
            store: StoreConfig {
                sync: self.sync,
                ..StoreConfig::default()
            },
            snapshot_every: self.snapshot_every,
            outbox_path: self.outbox.clone(),
            alert_cooldown_s: self.alert_cooldown_s,
        }
    }

    pub fn auth(&self) -> Auth {
        Auth {
            manager_token: self.manager_token.clone(),
            viewer_token: self.viewer_token.clone(),
        }
    }
}

pub fn load_graph(path: Option<&Path>) -> Result<Arc<BuildingGraph>, ConfigError> {
    let g = match path {
        None => BuildingGraph::default_scenario(),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| ConfigError(format!("{}: {e}", p.display())))?;
            BuildingGraph::parse(&text).map_err(|e| ConfigError(format!("{}: {e}", p.display())))?
        }
    };
    Ok(Arc::new(g))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let c: GatewayConfig = toml::from_str("manager_token = \"s3cret\"\ndedup_window_s = 3\n").unwrap();
        assert_eq!(c.manager_token, "s3cret");
        assert_eq!(c.engine().dedup_window_s, 3);
        assert_eq!(c.heartbeat_period_s, 10);
        assert!(toml::from_str::<GatewayConfig>("tokens = 1").is_err());
    }
}
