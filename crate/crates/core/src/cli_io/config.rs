//! The on-disk configuration: TOML (or JSON) with one section per module.
//!
//! ```toml
//! [sim]
//! phi_true = 0.3
//! seed = 7
//! ```
//!
//! is a complete file; everything else takes the documented defaults. All
//! rates are in units of the measurement strength (`kappa = 1`).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bayes::PhaseGrid;
use crate::error::{Error, Result};
use crate::noise::NoiseModel;
use crate::protocol::{ProtocolConfig, DEFAULT_EPSILON, DEFAULT_MAX_BLOCKS};
use crate::qubit::{Bloch, PauliAxis};
use crate::sme::{self, SimConfig};

/// The canonical default configuration shipped with the crate.
pub const DEFAULT_CONFIG_TOML: &str = include_str!("../../configs/default.toml");

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub measurement: MeasurementSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub protocol: ProtocolSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    /// Required.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi_true: Option<f64>,
    pub seed: u64,
    /// Omitted: derived from the rates so that the total rate times `dt`
    /// stays below 0.01 (at most 1e-3).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub steps_per_block: usize,
    pub g_axis: [f64; 3],
    pub initial_bloch: [f64; 3],
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection {
            phi_true: None,
            seed: 0,
            dt: None,
            steps_per_block: 2000,
            g_axis: [1.0, 0.0, 0.0],
            initial_bloch: [0.0, 1.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    #[default]
    Thermal,
    Generic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    pub model: NoiseKind,
    /// Thermal only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nbar: Option<f64>,
    /// Generic only: Pauli rates `[γx, γy, γz]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rates: Option<[f64; 3]>,
}

impl Default for NoiseSection {
    fn default() -> Self {
        NoiseSection {
            model: NoiseKind::Thermal,
            gamma: None,
            nbar: None,
            rates: None,
        }
    }
}

const DEFAULT_GAMMA: f64 = 0.01;
const DEFAULT_NBAR: f64 = 0.1;

impl NoiseSection {
    fn resolve(&self) -> Result<NoiseModel> {
        match self.model {
            NoiseKind::Thermal => {
                if self.rates.is_some() {
                    return Err(Error::validation(
                        "noise.rates only with model = \"generic\"",
                        "rates given for the thermal model",
                    ));
                }
                NoiseModel::thermal(self.gamma.unwrap_or(DEFAULT_GAMMA), self.nbar.unwrap_or(DEFAULT_NBAR))
            }
            NoiseKind::Generic => {
                if self.gamma.is_some() || self.nbar.is_some() {
                    return Err(Error::validation(
                        "noise.gamma/noise.nbar only with model = \"thermal\"",
                        "thermal parameters given for the generic model",
                    ));
                }
                NoiseModel::generic(self.rates.unwrap_or([0.0; 3]))
            }
        }
    }

    fn from_model(m: &NoiseModel) -> Self {
        match *m {
            NoiseModel::Thermal { gamma, nbar } => NoiseSection {
                model: NoiseKind::Thermal,
                gamma: Some(gamma),
                nbar: Some(nbar),
                rates: None,
            },
            NoiseModel::Generic { rates } => NoiseSection {
                model: NoiseKind::Generic,
                gamma: None,
                nbar: None,
                rates: Some(rates),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeasurementSection {
    pub kappa: f64,
    pub eta: f64,
}

impl Default for MeasurementSection {
    fn default() -> Self {
        MeasurementSection { kappa: 1.0, eta: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub phi_min: f64,
    pub phi_max: f64,
    pub n_points: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        let g = PhaseGrid::default();
        GridSection {
            phi_min: g.phi_min,
            phi_max: g.phi_max,
            n_points: g.n_points,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolSection {
    /// Stop when the posterior standard deviation drops below this
    /// (`inf` stops after the first block).
    #[serde(with = "float_or_inf")]
    pub epsilon: f64,
    pub max_blocks: usize,
    pub latency_steps: usize,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        ProtocolSection {
            epsilon: DEFAULT_EPSILON,
            max_blocks: DEFAULT_MAX_BLOCKS,
            latency_steps: 0,
        }
    }
}

impl ConfigFile {
    /// Fills in defaults and validates.
    pub fn resolve(&self) -> Result<ProtocolConfig> {
        let phi_true = self.sim.phi_true.ok_or_else(|| Error::Parse {
            line: None,
            key: Some("sim.phi_true".into()),
            message: "missing required key".into(),
        })?;
        let noise = self.noise.resolve()?;
        let kappa = self.measurement.kappa;
        let g_axis = PauliAxis::new(Bloch::from(self.sim.g_axis))
            .map_err(|_| Error::validation("|sim.g_axis| > 0", format!("g_axis = {:?}", self.sim.g_axis)))?;
        let cfg = ProtocolConfig {
            sim: SimConfig {
                phi_true,
                g_axis,
                noise,
                dt: self.sim.dt.unwrap_or_else(|| sme::default_dt(kappa, &noise, phi_true)),
                steps_per_block: self.sim.steps_per_block,
                seed: self.sim.seed,
            },
            grid: PhaseGrid {
                phi_min: self.grid.phi_min,
                phi_max: self.grid.phi_max,
                n_points: self.grid.n_points,
            },
            kappa,
            eta: self.measurement.eta,
            epsilon: self.protocol.epsilon,
            max_blocks: self.protocol.max_blocks,
            latency_steps: self.protocol.latency_steps,
            initial_bloch: self.sim.initial_bloch,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The fully explicit form of a resolved configuration.
    pub fn from_config(cfg: &ProtocolConfig) -> Self {
        let g = cfg.sim.g_axis.vector();
        ConfigFile {
            sim: SimSection {
                phi_true: Some(cfg.sim.phi_true),
                seed: cfg.sim.seed,
                dt: Some(cfg.sim.dt),
                steps_per_block: cfg.sim.steps_per_block,
                g_axis: [g.x, g.y, g.z],
                initial_bloch: cfg.initial_bloch,
            },
            noise: NoiseSection::from_model(&cfg.sim.noise),
            measurement: MeasurementSection {
                kappa: cfg.kappa,
                eta: cfg.eta,
            },
            grid: GridSection {
                phi_min: cfg.grid.phi_min,
                phi_max: cfg.grid.phi_max,
                n_points: cfg.grid.n_points,
            },
            protocol: ProtocolSection {
                epsilon: cfg.epsilon,
                max_blocks: cfg.max_blocks,
                latency_steps: cfg.latency_steps,
            },
        }
    }
}

/// JSON has no infinity; write it as the string `"inf"`.
mod float_or_inf {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if *v == f64::INFINITY {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("expected a number or \"inf\", got \"{t}\""))),
        }
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// The first backtick-quoted word of a serde message, which names the
/// offending key for unknown/missing field errors.
fn quoted_key(message: &str) -> Option<String> {
    if !(message.contains("unknown field") || message.contains("missing field")) {
        return None;
    }
    let start = message.find('`')? + 1;
    let end = start + message[start..].find('`')?;
    Some(message[start..end].to_string())
}

pub fn parse_toml_str(text: &str) -> Result<ProtocolConfig> {
    let file: ConfigFile = toml::from_str(text).map_err(|e| {
        let message = e.message().to_string();
        Error::Parse {
            line: e.span().map(|s| line_of(text, s.start)),
            key: quoted_key(&message),
            message,
        }
    })?;
    file.resolve()
}

pub fn parse_json_str(text: &str) -> Result<ProtocolConfig> {
    let file: ConfigFile = serde_json::from_str(text).map_err(|e| {
        let message = e.to_string();
        Error::Parse {
            line: Some(e.line()),
            key: quoted_key(&message),
            message,
        }
    })?;
    file.resolve()
}

/// Reads a configuration file; `.json` files are parsed as JSON, anything
/// else as TOML.
pub fn parse_config(path: &Path) -> Result<ProtocolConfig> {
    let text = std::fs::read_to_string(path)?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        parse_json_str(&text)
    } else {
        parse_toml_str(&text)
    }
}

/// Every key written out explicitly; parsing the result gives back `cfg`.
pub fn to_toml(cfg: &ProtocolConfig) -> String {
    toml::to_string(&ConfigFile::from_config(cfg)).expect("config serializes")
}
