use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qubit::{sigma_minus, sigma_plus, sigma_x, sigma_y, sigma_z, Bloch, Operator, C64};

/// Decoherence acting on the qubit alongside the measurement.
///
/// `Thermal` is a bath at mean occupation `nbar`:
/// `γ n̄ D[σ+] + γ (1 + n̄) D[σ-]`. `Generic` applies independent Pauli
/// channels `Σ_j (γ_j / 2) D[σ_j]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseModel {
    Thermal { gamma: f64, nbar: f64 },
    Generic { rates: [f64; 3] },
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel::Thermal {
            gamma: 0.0,
            nbar: 0.0,
        }
    }
}

fn check_rate(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::validation(
            &format!("{name} >= 0"),
            format!("{name} = {v}"),
        ))
    }
}

impl NoiseModel {
    pub fn thermal(gamma: f64, nbar: f64) -> Result<Self> {
        let m = NoiseModel::Thermal { gamma, nbar };
        m.validate()?;
        Ok(m)
    }

    pub fn generic(rates: [f64; 3]) -> Result<Self> {
        let m = NoiseModel::Generic { rates };
        m.validate()?;
        Ok(m)
    }

    pub fn noiseless() -> Self {
        NoiseModel::default()
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseModel::Thermal { gamma, nbar } => {
                check_rate("gamma", gamma)?;
                check_rate("nbar", nbar)
            }
            NoiseModel::Generic { rates } => {
                for (j, r) in rates.iter().enumerate() {
                    check_rate(&format!("rates[{j}]"), *r)?;
                }
                Ok(())
            }
        }
    }

    /// Jump operators `L` such that the noise generator is `Σ D[L]`.
    pub fn jump_operators(&self) -> Vec<Operator> {
        match *self {
            NoiseModel::Thermal { gamma, nbar } => vec![
                sigma_plus() * C64::from((gamma * nbar).sqrt()),
                sigma_minus() * C64::from((gamma * (1.0 + nbar)).sqrt()),
            ],
            NoiseModel::Generic { rates } => [sigma_x(), sigma_y(), sigma_z()]
                .into_iter()
                .zip(rates)
                .map(|(s, g)| s * C64::from((0.5 * g).sqrt()))
                .collect(),
        }
    }

    /// Bloch-vector velocity `dr/dt` generated by the noise alone.
    pub fn bloch_drift(&self, r: &Bloch) -> Bloch {
        match *self {
            NoiseModel::Thermal { gamma, nbar } => {
                let g1 = gamma * (2.0 * nbar + 1.0);
                let g2 = 0.5 * g1;
                Bloch::new(-g2 * r.x, -g2 * r.y, -g1 * r.z - gamma)
            }
            NoiseModel::Generic { rates: [gx, gy, gz] } => {
                Bloch::new(-(gy + gz) * r.x, -(gx + gz) * r.y, -(gx + gy) * r.z)
            }
        }
    }

    /// Largest single channel rate, used by the step-size guard.
    pub fn max_rate(&self) -> f64 {
        match *self {
            NoiseModel::Thermal { gamma, nbar } => gamma * (1.0 + nbar),
            NoiseModel::Generic { rates } => rates.iter().copied().fold(0.0, f64::max),
        }
    }

    /// Total decay rate, used when choosing a default time step.
    pub fn total_rate(&self) -> f64 {
        match *self {
            NoiseModel::Thermal { gamma, nbar } => gamma * (2.0 * nbar + 1.0),
            NoiseModel::Generic { rates } => rates.iter().sum(),
        }
    }

    pub fn is_noiseless(&self) -> bool {
        self.total_rate() == 0.0
    }

    /// Unmonitored steady state, when the noise alone fixes one.
    pub fn fixed_point(&self) -> Option<Bloch> {
        match *self {
            NoiseModel::Thermal { gamma, nbar } if gamma > 0.0 => {
                Some(Bloch::new(0.0, 0.0, -1.0 / (2.0 * nbar + 1.0)))
            }
            NoiseModel::Generic { rates } if rates.iter().filter(|r| **r > 0.0).count() >= 2 => {
                Some(Bloch::zeros())
            }
            _ => None,
        }
    }
}
