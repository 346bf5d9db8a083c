//! Grid-based Bayesian inference of the phase rate from a measurement record.
//!
//! Every grid node `φ_k` carries the conditional state the observer would
//! hold if `φ_k` were the truth, plus the log-likelihood ratio of the record
//! so far against the reference ("ostensible") measure under which the
//! scaled increments `√(4η) dy` are zero-mean Gaussian with variance `dt`.
//! Under hypothesis `k` the increment is `N(m_k dt/2, dt/(4η))`, with
//! `m_k = tr[(c + c†)ρ_k]`, so the log-likelihood ratio advances by
//!
//! `dℓ_k = 2η (m_k dy - m_k² dt / 4)`,
//!
//! which is `log tr ρ̃_k` for the unnormalized linear filter. The states
//! themselves are kept normalized and advanced with the hypothesis-consistent
//! innovation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::NoiseModel;
use crate::qubit::{Bloch, PauliAxis, QubitState};
use crate::sme::{scaled_increment, MeasurementOp, Propagator};

/// Uniform grid of candidate phase rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseGrid {
    pub phi_min: f64,
    pub phi_max: f64,
    pub n_points: usize,
}

impl Default for PhaseGrid {
    fn default() -> Self {
        PhaseGrid {
            phi_min: 0.0,
            phi_max: 1.0,
            n_points: 512,
        }
    }
}

impl PhaseGrid {
    pub fn new(phi_min: f64, phi_max: f64, n_points: usize) -> Result<Self> {
        let g = PhaseGrid {
            phi_min,
            phi_max,
            n_points,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.phi_min.is_finite() && self.phi_max.is_finite() && self.phi_min < self.phi_max) {
            return Err(Error::validation(
                "phi_min < phi_max",
                format!("phi_min = {}, phi_max = {}", self.phi_min, self.phi_max),
            ));
        }
        if self.n_points < 2 {
            return Err(Error::validation("n_points >= 2", format!("n_points = {}", self.n_points)));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.phi_max - self.phi_min
    }

    pub fn spacing(&self) -> f64 {
        self.width() / (self.n_points - 1) as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        if k + 1 == self.n_points {
            self.phi_max
        } else {
            self.phi_min + self.width() * (k as f64 / (self.n_points - 1) as f64)
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_points).map(|k| self.node(k)).collect()
    }

    pub fn contains(&self, phi: f64) -> bool {
        phi >= self.phi_min && phi <= self.phi_max
    }

    /// Trapezoid-rule weights.
    pub fn quadrature_weights(&self) -> Vec<f64> {
        let h = self.spacing();
        let mut w = vec![h; self.n_points];
        w[0] = 0.5 * h;
        w[self.n_points - 1] = 0.5 * h;
        w
    }
}

/// Posterior mean and variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseEstimate {
    pub phi_est: f64,
    pub variance: f64,
}

impl PhaseEstimate {
    pub fn std(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// Posterior on the grid: `density` integrates to one under the trapezoid
/// rule and `weights` are the matching quadrature masses (they sum to one).
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub nodes: Vec<f64>,
    pub density: Vec<f64>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone)]
struct PropagatorCache {
    dt: f64,
    g: PauliAxis,
    noise: NoiseModel,
    props: Vec<Propagator>,
}

/// The bank of conditional states, one per candidate phase.
#[derive(Debug, Clone)]
pub struct HypothesisBank {
    grid: PhaseGrid,
    states: Vec<QubitState>,
    log_like: Vec<f64>,
    log_prior: Vec<f64>,
    /// Total subtracted from `log_like` by the per-sweep renormalization.
    log_offset: f64,
    cache: Option<PropagatorCache>,
}

impl HypothesisBank {
    /// Flat prior, every hypothesis starting in `rho0`.
    pub fn new(grid: PhaseGrid, rho0: &QubitState) -> Result<Self> {
        grid.validate()?;
        let n = grid.n_points;
        Ok(HypothesisBank {
            grid,
            states: vec![rho0.clone(); n],
            log_like: vec![0.0; n],
            log_prior: vec![-grid.width().ln(); n],
            log_offset: 0.0,
            cache: None,
        })
    }

    pub fn grid(&self) -> &PhaseGrid {
        &self.grid
    }

    pub fn states(&self) -> &[QubitState] {
        &self.states
    }

    pub fn log_likelihood(&self) -> &[f64] {
        &self.log_like
    }

    /// Unshifted log-likelihoods: `log_likelihood()` plus the offset removed
    /// by renormalization.
    pub fn raw_log_likelihood(&self) -> Vec<f64> {
        self.log_like.iter().map(|l| l + self.log_offset).collect()
    }

    pub fn log_prior(&self) -> &[f64] {
        &self.log_prior
    }

    /// Overrides the log-likelihoods (`-inf` marks an excluded node).
    pub fn set_log_likelihood(&mut self, log_like: Vec<f64>) -> Result<()> {
        if log_like.len() != self.grid.n_points {
            return Err(Error::InvalidArgument(format!(
                "expected {} log-likelihoods, got {}",
                self.grid.n_points,
                log_like.len()
            )));
        }
        self.log_like = log_like;
        self.log_offset = 0.0;
        Ok(())
    }

    fn propagators(&mut self, noise: &NoiseModel, g_axis: &PauliAxis, dt: f64) -> &[Propagator] {
        let stale = match &self.cache {
            Some(c) => c.dt != dt || c.g != *g_axis || c.noise != *noise,
            None => true,
        };
        if stale {
            let props = (0..self.grid.n_points)
                .map(|k| Propagator::new(self.grid.node(k), g_axis, *noise, dt))
                .collect();
            self.cache = Some(PropagatorCache {
                dt,
                g: *g_axis,
                noise: *noise,
                props,
            });
        }
        &self.cache.as_ref().expect("cache just filled").props
    }

    /// Folds one record increment into every hypothesis.
    pub fn assimilate(&mut self, dy: f64, meas: &MeasurementOp, noise: &NoiseModel, g_axis: &PauliAxis, dt: f64) -> Result<()> {
        let big_dy = scaled_increment(dy, meas.eta);
        let eta = meas.eta;
        // Detach the cache so the sweep can borrow states mutably.
        self.propagators(noise, g_axis, dt);
        let cache = self.cache.take().expect("cache filled");
        let result = (|| -> Result<()> {
            for (k, prop) in cache.props.iter().enumerate() {
                let r = self.states[k].bloch();
                let m = meas.record_mean(&r);
                self.log_like[k] += 2.0 * eta * (m * dy - 0.25 * m * m * dt);
                let next = prop
                    .advance(&r, meas, big_dy)
                    .map_err(|e| e.at(|loc| loc.node = Some(k)))?;
                self.states[k] = QubitState::from_bloch_unchecked(&next);
            }
            Ok(())
        })();
        self.cache = Some(cache);
        result?;

        let top = self
            .log_like
            .iter()
            .copied()
            .filter(|v| v.is_finite())
            .fold(f64::NEG_INFINITY, f64::max);
        if top.is_finite() {
            for l in &mut self.log_like {
                *l -= top;
            }
            self.log_offset += top;
        }
        Ok(())
    }

    pub fn posterior(&self) -> Result<Posterior> {
        let scores: Vec<f64> = self
            .log_like
            .iter()
            .zip(&self.log_prior)
            .map(|(l, p)| l + p)
            .collect();
        if scores.iter().any(|s| s.is_nan()) {
            return Err(Error::AllZeroLikelihood);
        }
        let top = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !top.is_finite() {
            return Err(Error::AllZeroLikelihood);
        }
        let q = self.grid.quadrature_weights();
        let unnorm: Vec<f64> = scores.iter().map(|s| (s - top).exp()).collect();
        let z: f64 = unnorm.iter().zip(&q).map(|(u, q)| u * q).sum();
        if !(z > 0.0 && z.is_finite()) {
            return Err(Error::AllZeroLikelihood);
        }
        Ok(Posterior {
            nodes: self.grid.nodes(),
            density: unnorm.iter().map(|u| u / z).collect(),
            weights: unnorm.iter().zip(&q).map(|(u, q)| u * q / z).collect(),
        })
    }

    pub fn estimate(&self) -> Result<PhaseEstimate> {
        Ok(estimate_from(&self.posterior()?, &self.grid))
    }

    /// Posterior-weighted mixture of the hypothesis states: the controller's
    /// best single description of the qubit.
    pub fn mean_state(&self) -> Result<QubitState> {
        let post = self.posterior()?;
        let r = self
            .states
            .iter()
            .zip(&post.weights)
            .fold(Bloch::zeros(), |acc, (s, w)| acc + s.bloch() * *w);
        // A convex combination of physical states stays in the ball up to rounding.
        let norm = r.norm();
        Ok(QubitState::from_bloch_unchecked(&if norm > 1.0 { r / norm } else { r }))
    }
}

/// Mean and variance of a grid posterior.
pub fn estimate_from(post: &Posterior, grid: &PhaseGrid) -> PhaseEstimate {
    let mean: f64 = post.weights.iter().zip(&post.nodes).map(|(w, p)| w * p).sum();
    let mean = mean.clamp(grid.phi_min, grid.phi_max);
    let variance = post
        .weights
        .iter()
        .zip(&post.nodes)
        .map(|(w, p)| w * (p - mean) * (p - mean))
        .sum::<f64>()
        .max(0.0);
    PhaseEstimate {
        phi_est: mean,
        variance,
    }
}
