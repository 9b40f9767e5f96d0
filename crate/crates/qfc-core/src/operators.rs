//! Quantum-state data model: density matrices, coupling sets, the trace
//! pairing, and the state repair routine used after every integrator step.
//!
//! Conventions used across the crate:
//! * states ς are dim×dim complex matrices, Hermitian, PSD, trace one;
//! * coupling operators Ľ_i are given directly in the Schrödinger picture;
//! * ⟨ς|X⟩ = tr[ςX] is the only pairing anywhere.

use num_complex::Complex64;
use thiserror::Error;

use crate::linalg::{
    all_finite, herm_eigen, hermiticity_defect, is_exactly_hermitian, trace_of_product,
    unitarity_defect, CMatrix,
};

/// Hermiticity tolerance for validated types.
pub const HERMITICITY_TOL: f64 = 1e-12;
/// Trace-one tolerance for density matrices.
pub const TRACE_TOL: f64 = 1e-9;
/// Most-negative eigenvalue a valid density matrix may carry.
pub const EIGENVALUE_TOL: f64 = 1e-10;
/// Unitarity tolerance for scattering operators.
pub const UNITARITY_TOL: f64 = 1e-10;

/// Eigenvalues at or above `-CLIP_FIXED_POINT_EPS` count as already clipped:
/// reconstructing a clipped state reintroduces rounding at this scale, and
/// accepting it unchanged is what makes [`normalize_and_clip`] bitwise
/// idempotent.
const CLIP_FIXED_POINT_EPS: f64 = 1e-14;

/// How far the trace of an accepted state may sit from 1 in the bitwise
/// fixed-point test (a few ulp per dimension).
const TRACE_FIXED_POINT_EPS: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum OperatorError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("matrix is not Hermitian: defect {defect:.3e} exceeds {tol:.1e}")]
    NotHermitian { defect: f64, tol: f64 },
    #[error("state is not positive: eigenvalue {min_eig:.6e} is below -{clip_tol:.1e} (integrator step too large?)")]
    NotPositive { min_eig: f64, clip_tol: f64 },
    #[error("state trace {trace:.3e} vanishes")]
    TraceVanishing { trace: f64 },
    #[error("state trace {trace:.6} is not within {tol:.1e} of 1")]
    TraceNotOne { trace: f64, tol: f64 },
    #[error("scattering operator is not unitary: defect {defect:.3e} exceeds {tol:.1e}")]
    NotUnitary { defect: f64, tol: f64 },
}

/// Hermitian, PSD (up to `EIGENVALUE_TOL`), trace-one conditional state.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    dim: usize,
    matrix: CMatrix,
}

impl DensityMatrix {
    /// Validates every invariant; use [`normalize_and_clip`] to repair raw
    /// integrator output instead of fighting these checks.
    pub fn new(matrix: CMatrix) -> Result<Self, OperatorError> {
        if !matrix.is_square() {
            return Err(OperatorError::DimensionMismatch(format!(
                "density matrix must be square, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if !all_finite(&matrix) {
            return Err(OperatorError::NonFinite);
        }
        let defect = hermiticity_defect(&matrix);
        if defect > HERMITICITY_TOL {
            return Err(OperatorError::NotHermitian { defect, tol: HERMITICITY_TOL });
        }
        let trace = matrix.trace().re;
        if (trace - 1.0).abs() > TRACE_TOL {
            return Err(OperatorError::TraceNotOne { trace, tol: TRACE_TOL });
        }
        let min_eig = herm_eigen(&matrix).values[0];
        if min_eig < -EIGENVALUE_TOL {
            return Err(OperatorError::NotPositive { min_eig, clip_tol: EIGENVALUE_TOL });
        }
        Ok(DensityMatrix { dim: matrix.nrows(), matrix })
    }

    /// |ψ⟩⟨ψ| from an unnormalized ket.
    pub fn pure(ket: &[Complex64]) -> Result<Self, OperatorError> {
        let norm2: f64 = ket.iter().map(|z| z.norm_sqr()).sum();
        if norm2 < 1e-300 {
            return Err(OperatorError::TraceVanishing { trace: norm2 });
        }
        let dim = ket.len();
        let mut m = CMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..dim {
                m[(i, j)] = ket[i] * ket[j].conj() / norm2;
            }
        }
        // Make the diagonal exactly real so the value-level Hermitian check holds.
        for i in 0..dim {
            m[(i, i)] = Complex64::new(m[(i, i)].re, 0.0);
        }
        Self::new(m)
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        let m = CMatrix::identity(dim, dim).scale(1.0 / dim as f64);
        DensityMatrix { dim, matrix: m }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    /// ⟨ς|X⟩ for this state.
    pub fn expect(&self, x: &CMatrix) -> Result<Complex64, OperatorError> {
        pair(self, x)
    }
}

/// Schrödinger-picture model data: Hamiltonian, jump operators Ľ_i (channel
/// i = 0..d-1), optional unitary per-channel scattering, and ħ.
#[derive(Clone, Debug)]
pub struct CouplingSet {
    pub dim: usize,
    pub hbar: f64,
    pub hamiltonian: CMatrix,
    pub jump_ops: Vec<CMatrix>,
    /// One unitary per channel; `None` means identity scattering throughout.
    pub scattering: Option<Vec<CMatrix>>,
}

impl CouplingSet {
    pub fn new(
        hamiltonian: CMatrix,
        jump_ops: Vec<CMatrix>,
        scattering: Option<Vec<CMatrix>>,
        hbar: f64,
    ) -> Result<Self, OperatorError> {
        if !hamiltonian.is_square() {
            return Err(OperatorError::DimensionMismatch("hamiltonian must be square".into()));
        }
        let dim = hamiltonian.nrows();
        if !(hbar > 0.0) || !hbar.is_finite() {
            return Err(OperatorError::NonFinite);
        }
        if !all_finite(&hamiltonian) {
            return Err(OperatorError::NonFinite);
        }
        let defect = hermiticity_defect(&hamiltonian);
        if defect > HERMITICITY_TOL {
            return Err(OperatorError::NotHermitian { defect, tol: HERMITICITY_TOL });
        }
        for l in &jump_ops {
            if l.nrows() != dim || l.ncols() != dim {
                return Err(OperatorError::DimensionMismatch(format!(
                    "jump operator is {}x{}, expected {dim}x{dim}",
                    l.nrows(),
                    l.ncols()
                )));
            }
            if !all_finite(l) {
                return Err(OperatorError::NonFinite);
            }
        }
        if let Some(ss) = &scattering {
            if ss.len() != jump_ops.len() {
                return Err(OperatorError::DimensionMismatch(format!(
                    "{} scattering operators for {} channels",
                    ss.len(),
                    jump_ops.len()
                )));
            }
            for s in ss {
                if s.nrows() != dim || s.ncols() != dim {
                    return Err(OperatorError::DimensionMismatch("scattering dimension".into()));
                }
                let defect = unitarity_defect(s);
                if defect > UNITARITY_TOL {
                    return Err(OperatorError::NotUnitary { defect, tol: UNITARITY_TOL });
                }
            }
        }
        Ok(CouplingSet { dim, hbar, hamiltonian, jump_ops, scattering })
    }

    pub fn channels(&self) -> usize {
        self.jump_ops.len()
    }

    /// Scattering unitary for one channel (identity when unset).
    pub fn scattering_for(&self, channel: usize) -> CMatrix {
        match &self.scattering {
            Some(ss) => ss[channel].clone(),
            None => CMatrix::identity(self.dim, self.dim),
        }
    }
}

/// Tracial pairing ⟨ς|X⟩ = tr[ς·X].
pub fn pair(state: &DensityMatrix, x: &CMatrix) -> Result<Complex64, OperatorError> {
    if x.nrows() != state.dim || x.ncols() != state.dim {
        return Err(OperatorError::DimensionMismatch(format!(
            "pairing a dim-{} state with a {}x{} operator",
            state.dim,
            x.nrows(),
            x.ncols()
        )));
    }
    Ok(trace_of_product(&state.matrix, x))
}

/// XY − YX.
pub fn commutator(x: &CMatrix, y: &CMatrix) -> Result<CMatrix, OperatorError> {
    if !x.is_square() || x.shape() != y.shape() {
        return Err(OperatorError::DimensionMismatch(format!(
            "commutator of {}x{} with {}x{}",
            x.nrows(),
            x.ncols(),
            y.nrows(),
            y.ncols()
        )));
    }
    Ok(x * y - y * x)
}

/// Repairs raw integrator output into a valid [`DensityMatrix`]:
/// symmetrize, zero eigenvalues in `[-clip_tol, 0)`, renormalize the trace.
///
/// Eigenvalues below `-clip_tol` are an integrator failure and return
/// [`OperatorError::NotPositive`]. The routine is bitwise idempotent: output
/// that already satisfies the repaired form (value-level Hermitian, spectrum
/// ≥ −1e-14, trace within a few ulp of 1) is returned unchanged, so applying
/// it twice gives the identical bit pattern.
pub fn normalize_and_clip(raw: &CMatrix, clip_tol: f64) -> Result<DensityMatrix, OperatorError> {
    if !raw.is_square() {
        return Err(OperatorError::DimensionMismatch("state must be square".into()));
    }
    if !all_finite(raw) {
        return Err(OperatorError::NonFinite);
    }
    let defect = hermiticity_defect(raw);
    if defect >= 1e-6 {
        return Err(OperatorError::NotHermitian { defect, tol: 1e-6 });
    }
    let dim = raw.nrows();
    let sym = (raw + raw.adjoint()).scale(0.5);
    let eig = herm_eigen(&sym);
    let min_eig = eig.values[0];
    if min_eig < -clip_tol {
        return Err(OperatorError::NotPositive { min_eig, clip_tol });
    }

    // Fixed point: already Hermitian at value level, spectrum clipped, trace 1.
    let fp_eps = CLIP_FIXED_POINT_EPS.min(clip_tol);
    if is_exactly_hermitian(raw)
        && min_eig >= -fp_eps
        && (raw.trace().re - 1.0).abs() <= TRACE_FIXED_POINT_EPS * dim as f64
    {
        return Ok(DensityMatrix { dim, matrix: raw.clone() });
    }

    let clipped: Vec<f64> = eig.values.iter().map(|&v| if v < 0.0 { 0.0 } else { v }).collect();
    let total: f64 = clipped.iter().sum();
    if total < 1e-12 {
        return Err(OperatorError::TraceVanishing { trace: total });
    }
    let d = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        dim,
        clipped.iter().map(|&v| Complex64::new(v / total, 0.0)),
    ));
    let mut m = &eig.vectors * d * eig.vectors.adjoint();

    // Exact hermitization: copy conjugates across the diagonal.
    for i in 0..dim {
        m[(i, i)] = Complex64::new(m[(i, i)].re, 0.0);
        for j in (i + 1)..dim {
            let a = m[(i, j)];
            m[(j, i)] = a.conj();
        }
    }
    // Pull the trace onto 1.0 exactly (within one ulp of the diagonal sum) by
    // absorbing the residual into the largest diagonal entry.
    for _ in 0..4 {
        let t: f64 = (0..dim).map(|i| m[(i, i)].re).sum();
        let resid = 1.0 - t;
        if resid == 0.0 {
            break;
        }
        let k = (0..dim).max_by(|&a, &b| m[(a, a)].re.total_cmp(&m[(b, b)].re)).unwrap();
        m[(k, k)] = Complex64::new(m[(k, k)].re + resid, 0.0);
    }
    Ok(DensityMatrix { dim, matrix: m })
}
