//! File formats: TNTP networks, JSON scenario configuration and CSV results.

pub mod config;
pub mod csv;
pub mod tntp;

pub use config::{build_scenario, load_config, DemandEntry, LoadedConfig, NetworkSource, ScenarioConfig};
pub use csv::{fmt_sig9, EstimateRow, TimingRow};
pub use tntp::{parse_tntp, read_tntp, serialize_tntp, TntpMetadata, TntpNetworkFile, TntpRow};
