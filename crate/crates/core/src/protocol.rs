//! The self-stabilizing loop: plan a block, let the (hidden) qubit evolve
//! under it, fold the record into the Bayesian bank, re-estimate, repeat.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bayes::{HypothesisBank, PhaseEstimate, PhaseGrid, Posterior};
use crate::error::{Error, Result};
use crate::feedback::{plan_block, MeasurementSchedule};
use crate::noise::NoiseModel;
use crate::qubit::{Bloch, PauliAxis, QubitState};
use crate::sme::{self, ControlModel, MeasurementOp, SimConfig, TrajectoryRecord};

/// Stopping tolerance on the posterior standard deviation used when none is
/// configured.
pub const DEFAULT_EPSILON: f64 = 0.2;
pub const DEFAULT_MAX_BLOCKS: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub sim: SimConfig,
    pub grid: PhaseGrid,
    pub kappa: f64,
    pub eta: f64,
    /// Stop once the posterior standard deviation drops below this.
    pub epsilon: f64,
    pub max_blocks: usize,
    /// Steps after a block boundary during which the previous axis is held.
    pub latency_steps: usize,
    /// Prepared state. The default `+ŷ` makes the block-0 axis `ẑ`
    /// perpendicular to both the state and `G = x̂`.
    pub initial_bloch: [f64; 3],
}

impl ProtocolConfig {
    /// Defaults in units of κ = 1: weak thermal noise (γ = 0.01, n̄ = 0.1),
    /// unit efficiency, 2000 steps of 1e-3 per block, grid [0, 1] x 512.
    pub fn with_phi(phi_true: f64) -> Self {
        let noise = NoiseModel::Thermal {
            gamma: 0.01,
            nbar: 0.1,
        };
        let kappa = 1.0;
        ProtocolConfig {
            sim: SimConfig {
                phi_true,
                g_axis: PauliAxis::x(),
                noise,
                dt: sme::default_dt(kappa, &noise, phi_true),
                steps_per_block: 2000,
                seed: 0,
            },
            grid: PhaseGrid::default(),
            kappa,
            eta: 1.0,
            epsilon: DEFAULT_EPSILON,
            max_blocks: DEFAULT_MAX_BLOCKS,
            latency_steps: 0,
            initial_bloch: [0.0, 1.0, 0.0],
        }
    }

    /// Checks every invariant. Returns non-fatal warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        MeasurementOp::new(PauliAxis::z(), self.kappa, self.eta)?;
        self.sim.validate(self.kappa)?;
        self.grid.validate()?;
        if !(self.epsilon > 0.0) {
            return Err(Error::validation("epsilon > 0", format!("epsilon = {}", self.epsilon)));
        }
        if self.max_blocks < 1 {
            return Err(Error::validation("max_blocks >= 1", "max_blocks = 0"));
        }
        let r = Bloch::from(self.initial_bloch);
        QubitState::from_bloch(r).map_err(|_| {
            Error::validation("|initial_bloch| <= 1", format!("|initial_bloch| = {}", r.norm()))
        })?;
        let mut warnings = Vec::new();
        if !self.grid.contains(self.sim.phi_true) {
            warnings.push(format!(
                "phi_true = {} lies outside the grid [{}, {}]; the estimate cannot converge to it",
                self.sim.phi_true, self.grid.phi_min, self.grid.phi_max
            ));
        }
        Ok(warnings)
    }

    pub fn initial_state(&self) -> Result<QubitState> {
        QubitState::from_bloch(Bloch::from(self.initial_bloch))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ToleranceReached,
    MaxBlocks,
}

#[derive(Debug, Clone)]
pub struct BlockReport {
    pub index: usize,
    pub estimate: PhaseEstimate,
    pub posterior: Posterior,
    pub schedule: MeasurementSchedule,
    /// The block's record, without state snapshots.
    pub record: TrajectoryRecord,
    /// `tr ρ²` of the true conditional state after every step.
    pub purity_trace: Vec<f64>,
    /// Purity of the controller's posterior-mixture state at block end.
    pub belief_purity: f64,
}

impl BlockReport {
    pub fn final_purity(&self) -> f64 {
        self.purity_trace.last().copied().unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone)]
pub struct ProtocolResult {
    pub blocks: Vec<BlockReport>,
    pub termination: Termination,
    pub final_estimate: PhaseEstimate,
}

impl ProtocolResult {
    pub fn stds(&self) -> Vec<f64> {
        self.blocks.iter().map(|b| b.estimate.std()).collect()
    }
}

/// The observer side of the loop. It is built from a [`ControlModel`], so it
/// has no access to the true phase; it sees only its own schedules and the
/// record increments it is fed.
#[derive(Debug, Clone)]
pub struct Controller {
    model: ControlModel,
    kappa: f64,
    eta: f64,
    latency_steps: usize,
    bank: HypothesisBank,
    estimate: PhaseEstimate,
    last_axis: Option<PauliAxis>,
}

impl Controller {
    pub fn new(model: ControlModel, grid: PhaseGrid, kappa: f64, eta: f64, latency_steps: usize, rho0: &QubitState) -> Result<Self> {
        let bank = HypothesisBank::new(grid, rho0)?;
        let estimate = bank.estimate()?;
        Ok(Controller {
            model,
            kappa,
            eta,
            latency_steps,
            bank,
            estimate,
            last_axis: None,
        })
    }

    pub fn from_config(cfg: &ProtocolConfig) -> Result<Self> {
        Controller::new(
            cfg.sim.control_model(),
            cfg.grid,
            cfg.kappa,
            cfg.eta,
            cfg.latency_steps,
            &cfg.initial_state()?,
        )
    }

    pub fn plan(&mut self, block_index: usize) -> Result<MeasurementSchedule> {
        let rho_est = if block_index == 0 {
            QubitState::maximally_mixed()
        } else {
            self.bank.mean_state()?
        };
        let mut schedule = plan_block(block_index, self.estimate.phi_est, &rho_est, &self.model, self.kappa, self.eta)?;
        if let Some(prev) = self.last_axis {
            schedule = schedule.with_latency(prev, self.latency_steps);
        }
        self.last_axis = schedule.last_axis().or(self.last_axis);
        Ok(schedule)
    }

    pub fn observe(&mut self, dy: f64, meas: &MeasurementOp) -> Result<()> {
        self.bank
            .assimilate(dy, meas, &self.model.noise, &self.model.g_axis, self.model.dt)
    }

    /// Recomputes the estimate from the posterior.
    pub fn update_estimate(&mut self) -> Result<PhaseEstimate> {
        self.estimate = self.bank.estimate()?;
        Ok(self.estimate)
    }

    pub fn estimate(&self) -> PhaseEstimate {
        self.estimate
    }

    pub fn bank(&self) -> &HypothesisBank {
        &self.bank
    }
}

/// Runs the protocol once. The simulator draws its noise from a ChaCha8
/// stream seeded by `master_seed`.
pub fn run(cfg: &ProtocolConfig, master_seed: u64) -> Result<ProtocolResult> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    let mut truth = cfg.initial_state()?;
    let mut controller = Controller::from_config(cfg)?;
    let m = cfg.sim.steps_per_block;
    let mut blocks = Vec::new();
    let mut termination = Termination::MaxBlocks;

    for b in 0..cfg.max_blocks {
        let at_block = |e: Error| e.at(|loc| loc.block = Some(b));
        let schedule = controller.plan(b).map_err(at_block)?;
        let ops = schedule.ops();
        let (next, record) = sme::simulate_block_from(&truth, &ops, &cfg.sim, &mut rng, b * m).map_err(at_block)?;
        truth = next;
        for (i, (dy, meas)) in record.dy.iter().zip(&ops).enumerate() {
            controller.observe(*dy, meas).map_err(|e| {
                e.at(|loc| {
                    loc.block = Some(b);
                    loc.step = Some(b * m + i);
                })
            })?;
        }
        let estimate = controller.update_estimate()?;
        let posterior = controller.bank().posterior()?;
        let belief_purity = controller.bank().mean_state()?.purity();
        let purity_trace = record
            .states
            .as_ref()
            .map(|s| s.iter().map(QubitState::purity).collect())
            .unwrap_or_default();
        blocks.push(BlockReport {
            index: b,
            estimate,
            posterior,
            schedule,
            record: record.without_states(),
            purity_trace,
            belief_purity,
        });
        if estimate.std() < cfg.epsilon {
            termination = Termination::ToleranceReached;
            break;
        }
    }

    Ok(ProtocolResult {
        final_estimate: controller.estimate(),
        blocks,
        termination,
    })
}

/// Seed of trajectory `index` within an ensemble.
pub fn derive_seed(master_seed: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng.next_u64()
}

/// Number of blocks after which the posterior standard deviation first fell
/// below `epsilon`, if it did.
pub fn blocks_to_tolerance(stds: &[f64], epsilon: f64) -> Option<usize> {
    stds.iter().position(|s| *s < epsilon).map(|i| i + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockStat {
    pub phi_est: f64,
    pub std: f64,
    pub abs_error: f64,
    pub purity: f64,
    pub belief_purity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryOutcome {
    pub index: usize,
    pub seed: u64,
    pub blocks: Vec<BlockStat>,
    pub termination: Option<Termination>,
    /// Set when the run aborted; such trajectories count as non-converged.
    pub error: Option<String>,
}

impl TrajectoryOutcome {
    pub fn blocks_to_tolerance(&self) -> Option<usize> {
        match self.termination {
            Some(Termination::ToleranceReached) => Some(self.blocks.len()),
            _ => None,
        }
    }

    pub fn stds(&self) -> Vec<f64> {
        self.blocks.iter().map(|b| b.std).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
}

impl Quantiles {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Quantiles {
            q25: quantile_sorted(&v, 0.25),
            median: quantile_sorted(&v, 0.5),
            q75: quantile_sorted(&v, 0.75),
        })
    }
}

/// Linear interpolation between order statistics.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSummary {
    pub block: usize,
    /// Trajectories that reached this block.
    pub count: usize,
    pub phi_est: Quantiles,
    pub abs_error: Quantiles,
    pub std: Quantiles,
    pub purity: Quantiles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub phi_true: f64,
    pub master_seed: u64,
    pub n_traj: usize,
    pub blocks: Vec<BlockSummary>,
    /// Median blocks-to-tolerance; `None` when the median trajectory never
    /// reached it.
    pub median_blocks_to_tolerance: Option<f64>,
    pub failures: usize,
    pub trajectories: Vec<TrajectoryOutcome>,
}

impl EnsembleSummary {
    /// Median blocks-to-tolerance with non-converged runs counted as
    /// infinitely many blocks.
    pub fn median_blocks(&self) -> f64 {
        self.median_blocks_to_tolerance.unwrap_or(f64::INFINITY)
    }
}

fn outcome(cfg: &ProtocolConfig, index: usize, seed: u64) -> TrajectoryOutcome {
    match run(cfg, seed) {
        Ok(res) => TrajectoryOutcome {
            index,
            seed,
            blocks: res
                .blocks
                .iter()
                .map(|b| BlockStat {
                    phi_est: b.estimate.phi_est,
                    std: b.estimate.std(),
                    abs_error: (b.estimate.phi_est - cfg.sim.phi_true).abs(),
                    purity: b.final_purity(),
                    belief_purity: b.belief_purity,
                })
                .collect(),
            termination: Some(res.termination),
            error: None,
        },
        Err(e) => TrajectoryOutcome {
            index,
            seed,
            blocks: Vec::new(),
            termination: None,
            error: Some(e.to_string()),
        },
    }
}

/// Runs `n_traj` independent protocols in parallel. Trajectory `i` uses
/// `derive_seed(master_seed, i)`; failures are recorded, not propagated.
pub fn run_ensemble(cfg: &ProtocolConfig, n_traj: usize, master_seed: u64) -> Result<EnsembleSummary> {
    if n_traj < 1 {
        return Err(Error::InvalidArgument("n_traj must be at least 1".into()));
    }
    cfg.validate()?;
    let trajectories: Vec<TrajectoryOutcome> = (0..n_traj)
        .into_par_iter()
        .map(|i| outcome(cfg, i, derive_seed(master_seed, i as u64)))
        .collect();
    Ok(summarize(cfg, master_seed, trajectories))
}

fn summarize(cfg: &ProtocolConfig, master_seed: u64, trajectories: Vec<TrajectoryOutcome>) -> EnsembleSummary {
    let mut blocks = Vec::new();
    for b in 0..cfg.max_blocks {
        let stats: Vec<&BlockStat> = trajectories.iter().filter_map(|t| t.blocks.get(b)).collect();
        if stats.is_empty() {
            break;
        }
        let col = |f: fn(&BlockStat) -> f64| Quantiles::of(&stats.iter().map(|s| f(s)).collect::<Vec<_>>()).expect("non-empty");
        blocks.push(BlockSummary {
            block: b,
            count: stats.len(),
            phi_est: col(|s| s.phi_est),
            abs_error: col(|s| s.abs_error),
            std: col(|s| s.std),
            purity: col(|s| s.purity),
        });
    }
    let mut to_tol: Vec<f64> = trajectories
        .iter()
        .map(|t| t.blocks_to_tolerance().map_or(f64::INFINITY, |b| b as f64))
        .collect();
    to_tol.sort_by(f64::total_cmp);
    let median = if to_tol.len() % 2 == 1 {
        to_tol[to_tol.len() / 2]
    } else {
        let hi = to_tol[to_tol.len() / 2];
        let lo = to_tol[to_tol.len() / 2 - 1];
        if hi.is_finite() { 0.5 * (lo + hi) } else { f64::INFINITY }
    };
    EnsembleSummary {
        phi_true: cfg.sim.phi_true,
        master_seed,
        n_traj: trajectories.len(),
        blocks,
        median_blocks_to_tolerance: median.is_finite().then_some(median),
        failures: trajectories.iter().filter(|t| t.error.is_some()).count(),
        trajectories,
    }
}
