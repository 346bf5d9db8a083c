//! Two-level algebra: density operators, Pauli axes, Lindblad and innovation
//! superoperators, purity measures and quantum Fisher information.
//!
//! Basis convention: index 0 is the excited state `|e>`, index 1 the ground
//! state `|g>`, so `σz = |e><e| - |g><g|`, `σ+ = |e><g|` and `σ- = |g><e|`.
//! A state is `ρ = (I + r·σ)/2` with Bloch vector `r`.

use nalgebra::{Complex, Matrix2, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
/// A 2x2 complex operator.
pub type Operator = Matrix2<C64>;
/// A Bloch vector.
pub type Bloch = Vector3<f64>;

/// Largest allowed violation of positivity for a state to count as physical.
pub const PHYSICAL_TOL: f64 = 1e-8;
const HERMITIAN_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-9;
/// Eigenvalue pairs whose sum falls below this are dropped from the QFI sum.
const QFI_DEGENERATE_TOL: f64 = 1e-12;

const ZERO: C64 = Complex { re: 0.0, im: 0.0 };
const ONE: C64 = Complex { re: 1.0, im: 0.0 };
const I: C64 = Complex { re: 0.0, im: 1.0 };

pub fn identity() -> Operator {
    Operator::new(ONE, ZERO, ZERO, ONE)
}

pub fn sigma_x() -> Operator {
    Operator::new(ZERO, ONE, ONE, ZERO)
}

pub fn sigma_y() -> Operator {
    Operator::new(ZERO, -I, I, ZERO)
}

pub fn sigma_z() -> Operator {
    Operator::new(ONE, ZERO, ZERO, -ONE)
}

/// Raising operator `|e><g|`.
pub fn sigma_plus() -> Operator {
    Operator::new(ZERO, ONE, ZERO, ZERO)
}

/// Lowering operator `|g><e|`.
pub fn sigma_minus() -> Operator {
    Operator::new(ZERO, ZERO, ONE, ZERO)
}

/// `v·σ` for a real 3-vector.
pub fn pauli_dot(v: &Bloch) -> Operator {
    Operator::new(
        C64::new(v.z, 0.0),
        C64::new(v.x, -v.y),
        C64::new(v.x, v.y),
        C64::new(-v.z, 0.0),
    )
}

/// A unit vector on the Bloch sphere, used both for the phase generator `G`
/// and for measurement axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct PauliAxis(Bloch);

impl PauliAxis {
    /// Normalizes `v`. Fails for zero or non-finite input.
    pub fn new(v: Bloch) -> Result<Self> {
        let norm = v.norm();
        if !norm.is_finite() || norm < 1e-300 {
            return Err(Error::InvalidArgument(format!(
                "axis must be a finite nonzero vector, got {v:?}"
            )));
        }
        // Already-unit input is kept bit-for-bit so stored axes reload exactly.
        if (norm - 1.0).abs() <= 4.0 * f64::EPSILON {
            return Ok(PauliAxis(v));
        }
        Ok(PauliAxis(v / norm))
    }

    pub fn x() -> Self {
        PauliAxis(Bloch::x())
    }

    pub fn y() -> Self {
        PauliAxis(Bloch::y())
    }

    pub fn z() -> Self {
        PauliAxis(Bloch::z())
    }

    pub fn vector(&self) -> &Bloch {
        &self.0
    }

    /// The operator `n·σ`.
    pub fn operator(&self) -> Operator {
        pauli_dot(&self.0)
    }
}

impl TryFrom<[f64; 3]> for PauliAxis {
    type Error = Error;

    fn try_from(v: [f64; 3]) -> Result<Self> {
        PauliAxis::new(Bloch::new(v[0], v[1], v[2]))
    }
}

impl From<PauliAxis> for [f64; 3] {
    fn from(a: PauliAxis) -> Self {
        [a.0.x, a.0.y, a.0.z]
    }
}

/// A qubit density operator.
#[derive(Debug, Clone, PartialEq)]
pub struct QubitState {
    matrix: Operator,
}

impl QubitState {
    /// `ρ = (I + r·σ)/2`, rejecting `|r| > 1 + 1e-8`.
    pub fn from_bloch(r: Bloch) -> Result<Self> {
        let norm = r.norm();
        if !(norm <= 1.0 + PHYSICAL_TOL) {
            return Err(Error::NonPhysical { norm });
        }
        Ok(Self::from_bloch_unchecked(&r))
    }

    pub(crate) fn from_bloch_unchecked(r: &Bloch) -> Self {
        let m = Operator::new(
            C64::new(0.5 * (1.0 + r.z), 0.0),
            C64::new(0.5 * r.x, -0.5 * r.y),
            C64::new(0.5 * r.x, 0.5 * r.y),
            C64::new(0.5 * (1.0 - r.z), 0.0),
        );
        QubitState { matrix: m }
    }

    /// Validates Hermiticity, unit trace and positivity.
    pub fn from_matrix(matrix: Operator) -> Result<Self> {
        let herm_err = (matrix - matrix.adjoint()).iter().map(|c| c.norm()).fold(0.0, |a: f64, b| if b.is_nan() { b } else { a.max(b) });
        if !(herm_err <= HERMITIAN_TOL) {
            return Err(Error::InvalidOperator(format!(
                "density matrix is not Hermitian (deviation {herm_err:e})"
            )));
        }
        let tr = matrix.trace();
        if !((tr - ONE).norm() <= TRACE_TOL) {
            return Err(Error::InvalidOperator(format!(
                "density matrix has trace {tr}, expected 1"
            )));
        }
        let (vals, _) = hermitian_eigen(&matrix);
        if vals[1] < -PHYSICAL_TOL {
            return Err(Error::NonPhysical {
                norm: 1.0 - 2.0 * vals[1],
            });
        }
        Ok(QubitState { matrix })
    }

    pub fn maximally_mixed() -> Self {
        Self::from_bloch_unchecked(&Bloch::zeros())
    }

    /// `|e><e|`, the `σz = +1` eigenstate.
    pub fn excited() -> Self {
        Self::from_bloch_unchecked(&Bloch::z())
    }

    /// `|g><g|`.
    pub fn ground() -> Self {
        Self::from_bloch_unchecked(&-Bloch::z())
    }

    pub fn matrix(&self) -> &Operator {
        &self.matrix
    }

    pub fn bloch(&self) -> Bloch {
        let m = &self.matrix;
        Bloch::new(
            2.0 * m[(0, 1)].re,
            -2.0 * m[(0, 1)].im,
            m[(0, 0)].re - m[(1, 1)].re,
        )
    }

    /// `tr ρ²`.
    pub fn purity(&self) -> f64 {
        0.5 * (1.0 + self.bloch().norm_squared())
    }

    /// Eigenvalues in descending order.
    pub fn eigenvalues(&self) -> [f64; 2] {
        hermitian_eigen(&self.matrix).0
    }

    /// `tr(Aρ)`.
    pub fn expectation(&self, op: &Operator) -> C64 {
        (op * self.matrix).trace()
    }

    /// Convex combination `p·self + (1-p)·other`.
    pub fn mix(&self, other: &QubitState, p: f64) -> QubitState {
        QubitState {
            matrix: self.matrix * C64::from(p) + other.matrix * C64::from(1.0 - p),
        }
    }
}

/// Eigen-decomposition of a 2x2 Hermitian matrix: eigenvalues in descending
/// order and the matching orthonormal eigenvectors.
pub fn hermitian_eigen(m: &Operator) -> ([f64; 2], [Vector2<C64>; 2]) {
    let a = m[(0, 0)].re;
    let d = m[(1, 1)].re;
    let b = 0.5 * (m[(0, 1)] + m[(1, 0)].conj());
    let mean = 0.5 * (a + d);
    let half = 0.5 * (a - d);
    let disc = (half * half + b.norm_sqr()).sqrt();
    let hi = mean + disc;
    let lo = mean - disc;

    // Two candidate eigenvectors for `hi`; take the better conditioned one.
    let u = Vector2::new(b, C64::from(hi - a));
    let w = Vector2::new(C64::from(hi - d), b.conj());
    let (nu, nw) = (u.norm(), w.norm());
    let top = if nu.max(nw) < 1e-300 {
        // Proportional to the identity: any basis diagonalizes it.
        Vector2::new(ONE, ZERO)
    } else if nu >= nw {
        u / C64::from(nu)
    } else {
        w / C64::from(nw)
    };
    let bottom = Vector2::new(-top[1].conj(), top[0].conj());
    ([hi, lo], [top, bottom])
}

/// Lindblad dissipator `D[c]ρ = cρc† - (c†cρ + ρc†c)/2`.
pub fn dissipator(c: &Operator, rho: &QubitState) -> Operator {
    let r = rho.matrix();
    let cd = c.adjoint();
    let cdc = cd * c;
    c * r * cd - (cdc * r + r * cdc) * C64::from(0.5)
}

/// Measurement innovation `H[c]ρ = cρ + ρc† - <c + c†>ρ`.
pub fn innovation_term(c: &Operator, rho: &QubitState) -> Operator {
    let r = rho.matrix();
    let cd = c.adjoint();
    let mean = ((c + cd) * r).trace();
    c * r + r * cd - r * mean
}

/// Linear entropy `1 - tr ρ²`.
pub fn linear_entropy(rho: &QubitState) -> f64 {
    let m = rho.matrix();
    1.0 - (m * m).trace().re
}

/// Quantum Fisher information of `ρ` for the phase generator `G = g·σ`:
///
/// `F_Q = Σ_{j,k} (λ_j - λ_k)² / (λ_j + λ_k) |<Ψ_j|G|Ψ_k>|²`
///
/// summed over ordered pairs of eigenvectors, with this prefactor (a pure
/// state with `G` orthogonal to its Bloch vector gives `F_Q = 2`, half the
/// common `4 Var(G)` normalization). Pairs with `λ_j + λ_k < 1e-12` are
/// dropped.
pub fn qfi(rho: &QubitState, g: &PauliAxis) -> f64 {
    let (vals, vecs) = hermitian_eigen(rho.matrix());
    let gen = g.operator();
    let mut total = 0.0;
    for j in 0..2 {
        for k in 0..2 {
            let sum = vals[j] + vals[k];
            if sum < QFI_DEGENERATE_TOL {
                continue;
            }
            let diff = vals[j] - vals[k];
            let elem = (vecs[j].adjoint() * gen * vecs[k])[(0, 0)];
            total += diff * diff / sum * elem.norm_sqr();
        }
    }
    total.max(0.0)
}

/// Cramér-Rao lower bound `1/(ν F_Q)` on the variance of an unbiased phase
/// estimator after `nu` repetitions.
pub fn cramer_rao_bound(fq: f64, nu: u64) -> Result<f64> {
    if !(fq > 0.0) || !fq.is_finite() {
        return Err(Error::DegenerateBound { fq });
    }
    if nu == 0 {
        return Err(Error::InvalidArgument(
            "repetition count must be at least 1".into(),
        ));
    }
    Ok(1.0 / (nu as f64 * fq))
}
