//! The `--config` file: a single flat TOML table whose keys are the field
//! names of `SimConfig` and `TopologyParams`. A `seed` key sets both seeds.

use std::path::Path;

use serde_json::{Map, Value};
use shpcn_core::topology::{scaled_europe_params, TopologyParams};
use shpcn_core::{Money, SimConfig};

use crate::CliError;

#[derive(Debug, Clone, Default)]
pub struct FileConfig {
    sim: Map<String, Value>,
    topology: Map<String, Value>,
    source: String,
}

fn keys_of<T: serde::Serialize>(value: &T) -> Map<String, Value> {
    match serde_json::to_value(value) {
        Ok(Value::Object(m)) => m,
        _ => unreachable!("config structs serialize to objects"),
    }
}

fn merge<T: serde::Serialize + serde::de::DeserializeOwned>(
    base: &T,
    overrides: &Map<String, Value>,
    source: &str,
) -> Result<T, CliError> {
    let mut obj = keys_of(base);
    for (k, v) in overrides {
        obj.insert(k.clone(), v.clone());
    }
    serde_json::from_value(Value::Object(obj)).map_err(|e| CliError::Input(format!("{source}: {e}")))
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(FileConfig::default()) };
        let source = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{source}: {e}")))?;
        Self::parse(&text, source)
    }

    pub fn parse(text: &str, source: String) -> Result<Self, CliError> {
        let table: toml::Table = text.parse().map_err(|e| CliError::Input(format!("{source}: {e}")))?;
        let sim_keys = keys_of(&SimConfig::default());
        let topo_keys = keys_of(&scaled_europe_params(Money::ZERO, Money::ZERO));
        let mut cfg = FileConfig { source: source.clone(), ..FileConfig::default() };
        for (k, v) in table {
            if v.is_table() {
                return Err(CliError::Input(format!("{source}: [{k}]: nested tables are not supported")));
            }
            let v = serde_json::to_value(&v).map_err(|e| CliError::Input(format!("{source}: {k}: {e}")))?;
            let (in_sim, in_topo) = (sim_keys.contains_key(&k), topo_keys.contains_key(&k));
            if !in_sim && !in_topo {
                return Err(CliError::Input(format!("{source}: unknown key {k:?}")));
            }
            if in_sim {
                cfg.sim.insert(k.clone(), v.clone());
            }
            if in_topo {
                cfg.topology.insert(k, v);
            }
        }
        Ok(cfg)
    }

    pub fn sim(&self, base: &SimConfig) -> Result<SimConfig, CliError> {
        merge(base, &self.sim, &self.source)
    }

    pub fn topology(&self, base: &TopologyParams) -> Result<TopologyParams, CliError> {
        merge(base, &self.topology, &self.source)
    }
}
