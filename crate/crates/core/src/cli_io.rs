//! Configuration files, run manifests and result files.

pub mod config;
pub mod output;

pub use config::{parse_config, parse_json_str, parse_toml_str, to_toml, ConfigFile, DEFAULT_CONFIG_TOML};
pub use output::{execute, Experiment, OutputFormat, PurifyDemo, RunManifest, WallClock};
