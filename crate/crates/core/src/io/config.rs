//! JSON scenario configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::tntp::read_tntp;
use crate::kernel::{Scenario, TimeGrid};
use crate::mfg::OmdSchedule;
use crate::net::{Network, NodeId, RoadSpec};
use crate::scenarios::{assemble, NodeDemand};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkSource {
    Inline { links: Vec<RoadSpec> },
    /// Path to a TNTP net file, relative to the configuration file.
    Tntp(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandEntry {
    pub origin: NodeId,
    pub destination: NodeId,
    pub departure_time: f64,
    pub count: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub network_source: NetworkSource,
    pub dt: f64,
    pub horizon: f64,
    pub n0: f64,
    pub demand: Vec<DemandEntry>,
    #[serde(default)]
    pub omd_schedule: OmdSchedule,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("scenario file: {e}")))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// A configuration together with the directory its relative paths start from.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub config: ScenarioConfig,
    pub base_dir: PathBuf,
}

pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path)?;
    Ok(LoadedConfig {
        config: ScenarioConfig::from_json(&text)?,
        base_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
    })
}

/// Builds the network (TNTP rows become BPR links with capacity shares of
/// `n0`), adds origin/destination links and turns demand into atoms.
pub fn build_scenario(config: &ScenarioConfig, base_dir: &Path) -> Result<Scenario> {
    let grid = TimeGrid::new(config.dt, config.horizon)?;
    if !(config.n0 > 0.0) {
        return Err(Error::Config(format!("n0 must be positive, got {}", config.n0)));
    }
    let total: f64 = config.demand.iter().map(|d| d.count).sum();
    if (total - config.n0).abs() > 1e-9 * config.n0 {
        return Err(Error::Config(format!(
            "demand counts sum to {total}, expected n0 = {}",
            config.n0
        )));
    }
    let roads = match &config.network_source {
        NetworkSource::Inline { links } => Network::from_roads(links.clone())?,
        NetworkSource::Tntp(path) => read_tntp(&base_dir.join(path))?.to_network(config.n0)?,
    };
    for d in &config.demand {
        for node in [d.origin, d.destination] {
            if !roads.nodes().contains(&node) {
                return Err(Error::Config(format!("demand node {node} is not in the network")));
            }
        }
    }
    let demand: Vec<NodeDemand> = config
        .demand
        .iter()
        .map(|d| NodeDemand {
            origin: d.origin,
            destination: d.destination,
            departure_time: d.departure_time,
            count: d.count,
        })
        .collect();
    assemble(roads, grid, &demand, config.n0)
}
