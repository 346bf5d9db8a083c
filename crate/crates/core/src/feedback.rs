//! Rapid-purification planning of measurement axes.
//!
//! The first block measures the fixed axis `ẑ`. Later blocks measure along
//! `G × r`, perpendicular to both the generator and the Bloch vector, where
//! `r` follows the ensemble-average evolution in the frame of the current
//! phase estimate.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::qubit::{Bloch, PauliAxis, QubitState};
use crate::sme::{self, ControlModel, MeasurementOp, SimConfig, TrajectoryRecord};

/// `|G × r|` below this counts as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisChoice {
    pub axis: PauliAxis,
    /// Set when `G × r` vanished and the fallback `ẑ` was used.
    pub degenerate: bool,
}

/// The axis perpendicular to `g` and `r`, or `ẑ` when they are parallel
/// (or `r` vanishes). `ẑ` is still perpendicular to the default `G = x̂`.
pub fn purification_axis(r: &Bloch, g: &PauliAxis) -> AxisChoice {
    let cross = g.vector().cross(r);
    let norm = cross.norm();
    if norm >= DEGENERACY_TOL {
        AxisChoice {
            axis: PauliAxis::new(cross / norm).expect("nonzero cross product"),
            degenerate: false,
        }
    } else {
        AxisChoice {
            axis: PauliAxis::z(),
            degenerate: true,
        }
    }
}

/// Per-step measurement axes for one block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSchedule {
    pub axes: Vec<PauliAxis>,
    pub degenerate: Vec<bool>,
    pub kappa: f64,
    pub eta: f64,
}

impl MeasurementSchedule {
    pub fn constant(axis: PauliAxis, len: usize, kappa: f64, eta: f64) -> Self {
        MeasurementSchedule {
            axes: vec![axis; len],
            degenerate: vec![false; len],
            kappa,
            eta,
        }
    }

    pub fn len(&self) -> usize {
        self.axes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.axes.is_empty()
    }

    pub fn op(&self, i: usize) -> MeasurementOp {
        MeasurementOp {
            axis: self.axes[i],
            kappa: self.kappa,
            eta: self.eta,
        }
    }

    pub fn ops(&self) -> Vec<MeasurementOp> {
        (0..self.len()).map(|i| self.op(i)).collect()
    }

    pub fn degenerate_count(&self) -> usize {
        self.degenerate.iter().filter(|d| **d).count()
    }

    pub fn last_axis(&self) -> Option<PauliAxis> {
        self.axes.last().copied()
    }

    /// Holds `previous` for the first `steps` entries, modelling the time
    /// the controller needs before a new schedule takes effect.
    pub fn with_latency(mut self, previous: PauliAxis, steps: usize) -> Self {
        let n = steps.min(self.len());
        for i in 0..n {
            self.axes[i] = previous;
            self.degenerate[i] = false;
        }
        self
    }
}

/// Plans the schedule for block `block_index`.
///
/// Block 0 is the static `ẑ` measurement. Afterwards the mean trajectory is
/// integrated from `rho_est` at rate `phi_est`, choosing each step's axis from
/// the current mean Bloch vector and then advancing the mean under that axis.
pub fn plan_block(
    block_index: usize,
    phi_est: f64,
    rho_est: &QubitState,
    model: &ControlModel,
    kappa: f64,
    eta: f64,
) -> Result<MeasurementSchedule> {
    let m = model.steps_per_block;
    if block_index == 0 {
        return Ok(MeasurementSchedule::constant(PauliAxis::z(), m, kappa, eta));
    }
    let prop = model.propagator(phi_est);
    let mut schedule = MeasurementSchedule {
        axes: Vec::with_capacity(m),
        degenerate: Vec::with_capacity(m),
        kappa,
        eta,
    };
    let mut r = rho_est.bloch();
    for i in 0..m {
        let choice = purification_axis(&r, &model.g_axis);
        schedule.axes.push(choice.axis);
        schedule.degenerate.push(choice.degenerate);
        let meas = MeasurementOp {
            axis: choice.axis,
            kappa,
            eta,
        };
        r = prop
            .advance_mean(&r, &meas)
            .map_err(|e| e.at(|loc| loc.step = Some(i)))?;
    }
    Ok(schedule)
}

/// Closed-loop rapid purification with a known phase: every step measures
/// perpendicular to the current conditional Bloch vector and `G`.
#[derive(Debug, Clone)]
pub struct PurificationRun {
    pub initial: QubitState,
    /// Record with state snapshots after every step.
    pub record: TrajectoryRecord,
    pub degenerate: Vec<bool>,
}

pub fn track_purification<R: Rng + ?Sized>(
    rho0: &QubitState,
    cfg: &SimConfig,
    kappa: f64,
    eta: f64,
    steps: usize,
    rng: &mut R,
) -> Result<PurificationRun> {
    let mut record = TrajectoryRecord::with_capacity(cfg.dt, steps, true);
    let mut degenerate = Vec::with_capacity(steps);
    let sqrt_dt = cfg.dt.sqrt();
    let mut rho = rho0.clone();
    for i in 0..steps {
        let choice = purification_axis(&rho.bloch(), &cfg.g_axis);
        let meas = MeasurementOp::new(choice.axis, kappa, eta)?;
        let z: f64 = rng.sample(StandardNormal);
        let (next, dy) = sme::step(&rho, &meas, cfg, z * sqrt_dt).map_err(|e| e.at(|loc| loc.step = Some(i)))?;
        record.push(i + 1, dy, choice.axis, Some(next.clone()));
        degenerate.push(choice.degenerate);
        rho = next;
    }
    Ok(PurificationRun {
        initial: rho0.clone(),
        record,
        degenerate,
    })
}
