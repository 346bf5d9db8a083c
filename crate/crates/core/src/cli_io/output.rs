//! Run manifests and the files each experiment writes.
//!
//! Every output directory starts with `manifest.json`, written before any
//! result. It holds the fully resolved configuration and master seed, so
//! [`execute`] on the same manifest reproduces the directory byte for byte.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::ConfigFile;
use crate::error::{Error, Result};
use crate::feedback::track_purification;
use crate::noise::NoiseModel;
use crate::protocol::{self, EnsembleSummary, ProtocolResult, Quantiles, Termination};
use crate::qubit::{linear_entropy, Bloch, PauliAxis, QubitState};
use crate::sme::{SimConfig, TrajectoryRecord};

pub const TOOL_NAME: &str = "selfstab";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    /// CSV tables plus a compact `result.json`.
    #[default]
    Csv,
    /// A single self-contained JSON document.
    Json,
}

/// Parameters of the known-phase purification trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PurifyDemo {
    pub kappa: f64,
    pub phi: f64,
    pub dt: f64,
    pub steps: usize,
    pub initial_bloch: [f64; 3],
    pub g_axis: [f64; 3],
}

impl Default for PurifyDemo {
    fn default() -> Self {
        PurifyDemo {
            kappa: 1.0,
            phi: 0.3,
            dt: 1e-3,
            steps: 3000,
            initial_bloch: [0.0, 0.0, 0.8],
            g_axis: [1.0, 0.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Experiment {
    Run { config: ConfigFile },
    Ensemble { config: ConfigFile, n_traj: usize },
    PurifyDemo { demo: PurifyDemo },
}

/// Opt-in; a manifest with wall-clock data differs between otherwise
/// identical runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WallClock {
    pub started_unix_s: f64,
}

impl WallClock {
    pub fn now() -> Self {
        let t = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs_f64())
            .unwrap_or(0.0);
        WallClock { started_unix_s: t }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub master_seed: u64,
    pub format: OutputFormat,
    #[serde(flatten)]
    pub experiment: Experiment,
    pub outputs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock: Option<WallClock>,
}

impl RunManifest {
    pub fn new(experiment: Experiment, master_seed: u64, format: OutputFormat) -> Self {
        let outputs = output_files(&experiment, format).iter().map(|s| s.to_string()).collect();
        RunManifest {
            tool: TOOL_NAME.into(),
            version: VERSION.into(),
            master_seed,
            format,
            experiment,
            outputs,
            wall_clock: None,
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            line: Some(e.line()),
            key: None,
            message: e.to_string(),
        })
    }
}

fn output_files(e: &Experiment, format: OutputFormat) -> &'static [&'static str] {
    use OutputFormat::*;
    match (e, format) {
        (Experiment::Run { .. }, Csv) => &[
            "manifest.json",
            "result.json",
            "summary.csv",
            "record.csv",
            "posterior.csv",
            "purity.csv",
        ],
        (Experiment::Run { .. }, Json) => &["manifest.json", "result.json"],
        (Experiment::Ensemble { .. }, Csv) => &[
            "manifest.json",
            "ensemble.json",
            "summary.csv",
            "quantiles.csv",
            "trajectories.csv",
        ],
        (Experiment::Ensemble { .. }, Json) => &["manifest.json", "ensemble.json"],
        (Experiment::PurifyDemo { .. }, Csv) => &["manifest.json", "purify.csv", "record.csv"],
        (Experiment::PurifyDemo { .. }, Json) => &["manifest.json", "purify.json"],
    }
}

/// Runs the experiment described by `manifest`, writing the manifest and then
/// every result file into `out_dir`. Returns the text to print on stdout.
pub fn execute(manifest: &RunManifest, out_dir: &Path) -> Result<String> {
    fs::create_dir_all(out_dir)?;
    write_json(&out_dir.join("manifest.json"), manifest)?;
    let seed = manifest.master_seed;
    match &manifest.experiment {
        Experiment::Run { config } => {
            let cfg = config.resolve()?;
            let result = protocol::run(&cfg, seed)?;
            write_run(out_dir, &result, cfg.sim.phi_true, seed, manifest.format)
        }
        Experiment::Ensemble { config, n_traj } => {
            let cfg = config.resolve()?;
            let summary = protocol::run_ensemble(&cfg, *n_traj, seed)?;
            write_ensemble(out_dir, &summary, manifest.format)
        }
        Experiment::PurifyDemo { demo } => write_purify(out_dir, demo, seed, manifest.format),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    Ok(csv::Writer::from_path(path)?)
}

#[derive(Serialize)]
struct EstimateDoc {
    phi_est: f64,
    variance: f64,
    std: f64,
}

#[derive(Serialize)]
struct PosteriorDoc<'a> {
    phi: &'a [f64],
    weight: &'a [f64],
}

#[derive(Serialize)]
struct RecordDoc {
    t: Vec<f64>,
    dy: Vec<f64>,
    axis: Vec<[f64; 3]>,
}

impl RecordDoc {
    fn of(r: &TrajectoryRecord) -> Self {
        RecordDoc {
            t: r.times.clone(),
            dy: r.dy.clone(),
            axis: r.axes.iter().map(|a| <[f64; 3]>::from(*a)).collect(),
        }
    }
}

#[derive(Serialize)]
struct BlockDoc<'a> {
    block: usize,
    phi_est: f64,
    variance: f64,
    std: f64,
    steps: usize,
    degenerate_steps: usize,
    end_purity: f64,
    purity_median: f64,
    belief_purity: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    posterior: Option<PosteriorDoc<'a>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    purity: Option<&'a [f64]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    record: Option<RecordDoc>,
}

#[derive(Serialize)]
struct RunDoc<'a> {
    phi_true: f64,
    master_seed: u64,
    termination: Termination,
    blocks_run: usize,
    final_estimate: EstimateDoc,
    blocks: Vec<BlockDoc<'a>>,
}

fn median(values: &[f64]) -> f64 {
    Quantiles::of(values).map_or(f64::NAN, |q| q.median)
}

#[derive(Serialize)]
struct SummaryRow {
    block: usize,
    phi_est: f64,
    std: f64,
    purity_median: f64,
}

fn write_run(dir: &Path, res: &ProtocolResult, phi_true: f64, seed: u64, format: OutputFormat) -> Result<String> {
    let full = format == OutputFormat::Json;
    let doc = RunDoc {
        phi_true,
        master_seed: seed,
        termination: res.termination,
        blocks_run: res.blocks.len(),
        final_estimate: EstimateDoc {
            phi_est: res.final_estimate.phi_est,
            variance: res.final_estimate.variance,
            std: res.final_estimate.std(),
        },
        blocks: res
            .blocks
            .iter()
            .map(|b| BlockDoc {
                block: b.index,
                phi_est: b.estimate.phi_est,
                variance: b.estimate.variance,
                std: b.estimate.std(),
                steps: b.record.len(),
                degenerate_steps: b.schedule.degenerate_count(),
                end_purity: b.final_purity(),
                purity_median: median(&b.purity_trace),
                belief_purity: b.belief_purity,
                posterior: full.then(|| PosteriorDoc {
                    phi: &b.posterior.nodes,
                    weight: &b.posterior.weights,
                }),
                purity: full.then_some(b.purity_trace.as_slice()),
                record: full.then(|| RecordDoc::of(&b.record)),
            })
            .collect(),
    };
    write_json(&dir.join("result.json"), &doc)?;
    if full {
        return Ok(serde_json::to_string_pretty(&doc)? + "\n");
    }

    let mut summary = csv_writer(&dir.join("summary.csv"))?;
    let mut text = csv::Writer::from_writer(Vec::new());
    for b in &res.blocks {
        let row = SummaryRow {
            block: b.index,
            phi_est: b.estimate.phi_est,
            std: b.estimate.std(),
            purity_median: median(&b.purity_trace),
        };
        summary.serialize(&row)?;
        text.serialize(&row)?;
    }
    summary.flush()?;

    let mut record = TrajectoryRecord::new(res.blocks.first().map_or(0.0, |b| b.record.dt));
    for b in &res.blocks {
        record.append(b.record.clone());
    }
    record.write_csv(BufWriter::new(File::create(dir.join("record.csv"))?))?;

    let mut post = csv_writer(&dir.join("posterior.csv"))?;
    post.write_record(["block", "phi", "weight"])?;
    for b in &res.blocks {
        for (phi, w) in b.posterior.nodes.iter().zip(&b.posterior.weights) {
            post.serialize((b.index, phi, w))?;
        }
    }
    post.flush()?;

    let mut purity = csv_writer(&dir.join("purity.csv"))?;
    purity.write_record(["block", "t", "purity"])?;
    for b in &res.blocks {
        for (t, p) in b.record.times.iter().zip(&b.purity_trace) {
            purity.serialize((b.index, t, p))?;
        }
    }
    purity.flush()?;

    Ok(String::from_utf8(text.into_inner().map_err(|e| Error::Io(e.into_error()))?).expect("csv is utf-8"))
}

#[derive(Serialize)]
struct QuantileRow {
    block: usize,
    count: usize,
    quantity: &'static str,
    q25: f64,
    median: f64,
    q75: f64,
}

#[derive(Serialize)]
struct TrajectoryRow<'a> {
    traj: usize,
    seed: u64,
    block: Option<usize>,
    phi_est: Option<f64>,
    std: Option<f64>,
    abs_error: Option<f64>,
    purity: Option<f64>,
    belief_purity: Option<f64>,
    status: &'a str,
}

fn write_ensemble(dir: &Path, s: &EnsembleSummary, format: OutputFormat) -> Result<String> {
    write_json(&dir.join("ensemble.json"), s)?;
    if format == OutputFormat::Json {
        return Ok(serde_json::to_string_pretty(s)? + "\n");
    }

    let mut summary = csv_writer(&dir.join("summary.csv"))?;
    let mut text = csv::Writer::from_writer(Vec::new());
    for b in &s.blocks {
        let row = SummaryRow {
            block: b.block,
            phi_est: b.phi_est.median,
            std: b.std.median,
            purity_median: b.purity.median,
        };
        summary.serialize(&row)?;
        text.serialize(&row)?;
    }
    summary.flush()?;

    let mut q = csv_writer(&dir.join("quantiles.csv"))?;
    for b in &s.blocks {
        for (name, v) in [
            ("phi_est", b.phi_est),
            ("abs_error", b.abs_error),
            ("std", b.std),
            ("purity", b.purity),
        ] {
            q.serialize(QuantileRow {
                block: b.block,
                count: b.count,
                quantity: name,
                q25: v.q25,
                median: v.median,
                q75: v.q75,
            })?;
        }
    }
    if s.blocks.is_empty() {
        q.write_record(["block", "count", "quantity", "q25", "median", "q75"])?;
    }
    q.flush()?;

    let mut tr = csv_writer(&dir.join("trajectories.csv"))?;
    for t in &s.trajectories {
        let status = match (&t.error, t.termination) {
            (Some(_), _) => "failed",
            (None, Some(Termination::ToleranceReached)) => "tolerance_reached",
            _ => "max_blocks",
        };
        if t.blocks.is_empty() {
            tr.serialize(TrajectoryRow {
                traj: t.index,
                seed: t.seed,
                block: None,
                phi_est: None,
                std: None,
                abs_error: None,
                purity: None,
                belief_purity: None,
                status,
            })?;
        }
        for (b, stat) in t.blocks.iter().enumerate() {
            tr.serialize(TrajectoryRow {
                traj: t.index,
                seed: t.seed,
                block: Some(b),
                phi_est: Some(stat.phi_est),
                std: Some(stat.std),
                abs_error: Some(stat.abs_error),
                purity: Some(stat.purity),
                belief_purity: Some(stat.belief_purity),
                status,
            })?;
        }
    }
    tr.flush()?;

    Ok(String::from_utf8(text.into_inner().map_err(|e| Error::Io(e.into_error()))?).expect("csv is utf-8"))
}

#[derive(Serialize)]
struct PurifyRow {
    t: f64,
    linear_entropy: f64,
    predicted: f64,
    ax: f64,
    ay: f64,
    az: f64,
}

#[derive(Serialize)]
struct PurifyDoc<'a> {
    demo: &'a PurifyDemo,
    master_seed: u64,
    t: Vec<f64>,
    linear_entropy: Vec<f64>,
    predicted: Vec<f64>,
    record: RecordDoc,
}

/// Known-phase, noiseless closed-loop purification. `predicted` is the
/// deterministic law `S_L(0) exp(-2 κ t)`.
fn write_purify(dir: &Path, demo: &PurifyDemo, seed: u64, format: OutputFormat) -> Result<String> {
    let g_axis = PauliAxis::new(Bloch::from(demo.g_axis))?;
    let cfg = SimConfig {
        phi_true: demo.phi,
        g_axis,
        noise: NoiseModel::noiseless(),
        dt: demo.dt,
        steps_per_block: demo.steps.max(1),
        seed,
    };
    cfg.validate(demo.kappa)?;
    let rho0 = QubitState::from_bloch(Bloch::from(demo.initial_bloch))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let run = track_purification(&rho0, &cfg, demo.kappa, 1.0, demo.steps, &mut rng)?;
    let s0 = linear_entropy(&rho0);
    let states = run.record.states.as_deref().unwrap_or_default();
    let entropy: Vec<f64> = states.iter().map(linear_entropy).collect();
    let predicted: Vec<f64> = run.record.times.iter().map(|t| s0 * (-2.0 * demo.kappa * t).exp()).collect();

    if format == OutputFormat::Json {
        let doc = PurifyDoc {
            demo,
            master_seed: seed,
            t: run.record.times.clone(),
            linear_entropy: entropy,
            predicted,
            record: RecordDoc::of(&run.record),
        };
        write_json(&dir.join("purify.json"), &doc)?;
        return Ok(serde_json::to_string_pretty(&doc)? + "\n");
    }

    let mut w = csv_writer(&dir.join("purify.csv"))?;
    let mut text = csv::Writer::from_writer(Vec::new());
    text.write_record(["t", "linear_entropy", "predicted"])?;
    for i in 0..run.record.len() {
        let a = run.record.axes[i].vector();
        w.serialize(PurifyRow {
            t: run.record.times[i],
            linear_entropy: entropy[i],
            predicted: predicted[i],
            ax: a.x,
            ay: a.y,
            az: a.z,
        })?;
    }
    if run.record.is_empty() {
        w.write_record(["t", "linear_entropy", "predicted", "ax", "ay", "az"])?;
    }
    w.flush()?;
    // Thin the stdout table to about 20 rows.
    let stride = (run.record.len() / 20).max(1);
    for i in (stride - 1..run.record.len()).step_by(stride) {
        text.serialize((run.record.times[i], entropy[i], predicted[i]))?;
    }
    run.record
        .clone()
        .without_states()
        .write_csv(BufWriter::new(File::create(dir.join("record.csv"))?))?;
    Ok(String::from_utf8(text.into_inner().map_err(|e| Error::Io(e.into_error()))?).expect("csv is utf-8"))
}
