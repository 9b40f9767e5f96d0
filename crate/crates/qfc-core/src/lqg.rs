//! Linear-Gaussian specialization: Kalman filtering, the forward (filtering)
//! and backward (control) Riccati flows, the optimal feedback gain, minimal
//! cost, closed-loop Monte Carlo, Heisenberg admissibility, and the duality
//! transform that swaps the two Riccati problems.
//!
//! Convention table (the one transposition, applied everywhere): the theory
//! is written for row vectors x̂_•; internally vectors are columns, so each
//! formula appears transposed once:
//!
//! | theory (rows)                      | here (columns)                 |
//! |------------------------------------|--------------------------------|
//! | dx̂ = −(x̂Aᵀ + uC_fᵀ)dt + dŴKᵀ     | dx̂ = −(Ax̂ + C_f u)dt + K dŴ   |
//! | dŴ = dY − x̂B_eᵀdt                 | dŴ = dY − B_e x̂ dt            |
//! | u = x̂Lᵀ                           | u = L x̂                       |
//! | ž = x̌E_fᵀ                         | ž = E_f x̌                     |
//!
//! A model can be built two ways: the quantum route [`derive_matrices`]
//! produces every coefficient from (J, Λ_e, Λ_f, M⁻¹, ħ), and the direct
//! route [`LinearModel::from_coefficients`] accepts the coefficient matrices
//! themselves (the classical Kalman/LQR case, where J may be zero or
//! degenerate).

use nalgebra::DVector;
use thiserror::Error;

use crate::linalg::{c, cr, herm_eigen, CMatrix, RMatrix};
use crate::rng::Key;

/// Riccati trajectories are aborted once ‖·‖_max exceeds this.
pub const BLOWUP_NORM: f64 = 1e12;

/// Heisenberg admissibility floor: min eig(Σ + (iħ/2)J) ≥ −`HEISENBERG_TOL`.
pub const HEISENBERG_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum LqgError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("{what} is not symmetric: defect {defect:.3e}")]
    NotSymmetric { what: &'static str, defect: f64 },
    #[error("J is not antisymmetric: defect {defect:.3e}")]
    NotAntisymmetric { defect: f64 },
    #[error("{what} is not positive semidefinite: min eigenvalue {min_eig:.3e}")]
    NotPsd { what: &'static str, min_eig: f64 },
    #[error("coupling rows of Λ_e and Λ_f overlap at row {row}")]
    RowOverlap { row: usize },
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error("Riccati blow-up: ‖matrix‖ = {norm:.3e} at t = {t:.6}")]
    BlowUp { norm: f64, t: f64 },
    #[error("paths live on different grids")]
    GridMismatch,
    #[error("belief violates the Heisenberg bound: min eigenvalue {min_eig:.3e}")]
    NotAdmissible { min_eig: f64 },
    #[error("duality needs an orthogonal antisymmetric J: defect {defect:.3e}")]
    NotSymplectic { defect: f64 },
}

fn sym_defect(m: &RMatrix) -> f64 {
    crate::linalg::max_abs_real(&(m - m.transpose()))
}

fn min_sym_eig(m: &RMatrix) -> f64 {
    m.clone().symmetric_eigen().eigenvalues.min()
}

fn tr_prod(a: &RMatrix, b: &RMatrix) -> f64 {
    // tr(AB) without forming AB
    let mut s = 0.0;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            s += a[(i, j)] * b[(j, i)];
        }
    }
    s
}

/// Linear input-output model in phase space. `a` is the drift of the
/// row-convention Langevin equation dx̌ = −x̌Aᵀdt + …; `g` and `h` are the
/// diffusion and canonical state-cost matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    pub m: usize,
    pub hbar: f64,
    /// CCR matrix; zero for classical models.
    pub j: RMatrix,
    pub a: RMatrix,
    /// Estimation output matrix, d_e×m.
    pub b_e: RMatrix,
    /// Actuation matrix, m×d_f.
    pub c_f: RMatrix,
    /// Estimation cross matrix (back-action of the monitored channels), m×d_e.
    pub f_e: RMatrix,
    /// Canonical feedback output ž = E_f x̌, d_f×m.
    pub e_f: RMatrix,
    /// Diffusion matrix of the error covariance, m×m PSD.
    pub g: RMatrix,
    /// Canonical running state cost, m×m PSD.
    pub h: RMatrix,
}

impl LinearModel {
    /// Direct-coefficient construction (the classical/test route). J may be
    /// zero; shapes and symmetry are validated, PSD of G and H at 1e-10.
    #[allow(clippy::too_many_arguments)]
    pub fn from_coefficients(
        a: RMatrix,
        b_e: RMatrix,
        c_f: RMatrix,
        f_e: RMatrix,
        e_f: RMatrix,
        g: RMatrix,
        h: RMatrix,
        j: RMatrix,
        hbar: f64,
    ) -> Result<Self, LqgError> {
        let m = a.nrows();
        if !a.is_square() {
            return Err(LqgError::Shape("A must be square".into()));
        }
        for (name, rows, cols) in [
            ("B_e", b_e.ncols(), m),
            ("C_f", c_f.nrows(), m),
            ("F_e", f_e.nrows(), m),
            ("E_f", e_f.ncols(), m),
            ("G", g.nrows(), m),
            ("H", h.nrows(), m),
            ("J", j.nrows(), m),
        ] {
            if rows != cols {
                return Err(LqgError::Shape(format!("{name} does not match m = {m}")));
            }
        }
        if b_e.nrows() != f_e.ncols() {
            return Err(LqgError::Shape("F_e must be m×d_e".into()));
        }
        if c_f.ncols() != e_f.nrows() {
            return Err(LqgError::Shape("E_f must be d_f×m".into()));
        }
        if !(hbar >= 0.0 && hbar.is_finite()) {
            return Err(LqgError::BadParameter(format!("hbar = {hbar}")));
        }
        for (what, mat) in [("G", &g), ("H", &h)] {
            let defect = sym_defect(mat);
            if defect > 1e-10 {
                return Err(LqgError::NotSymmetric { what, defect });
            }
            let min_eig = min_sym_eig(mat);
            if min_eig < -1e-10 {
                return Err(LqgError::NotPsd { what, min_eig });
            }
        }
        let defect = crate::linalg::max_abs_real(&(&j + j.transpose()));
        if defect > 1e-12 {
            return Err(LqgError::NotAntisymmetric { defect });
        }
        Ok(LinearModel { m, hbar, j, a, b_e, c_f, f_e, e_f, g, h })
    }

    pub fn d_e(&self) -> usize {
        self.b_e.nrows()
    }
    pub fn d_f(&self) -> usize {
        self.c_f.ncols()
    }
}

/// Builds the model matrices from the quantum data:
///
///   Aᵀ  = (M⁻¹ + ħ·Im(ΛᵀΛ*))·J          with Λ = Λ_e + Λ_f,
///   B_e = 2·Re Λ_e,        C_fᵀ = B_f·J  with B_f = 2·Re Λ_f,
///   F_eᵀ = ħ·Im(Λ_e)·J,    E_f  = ħ·Im Λ_f,
///   G = (ħ²/4)·C_eC_eᵀ + ħ²·Jᵀ·Re(Λ_f†Λ_f)·J   with C_eᵀ = B_e·J,
///   H = (ħ/2)²·B_fᵀB_f + ħ²·Re(Λ_e†Λ_e).
///
/// Λ_e and Λ_f are full d×m matrices whose nonzero rows are disjoint (each
/// channel is either monitored or actuated); zero rows drop out of every
/// contraction. Deterministic: identical inputs give bitwise-equal models.
pub fn derive_matrices(
    j: &RMatrix,
    lambda_e: &CMatrix,
    lambda_f: &CMatrix,
    minv: &RMatrix,
    hbar: f64,
) -> Result<LinearModel, LqgError> {
    let m = j.nrows();
    if !j.is_square() || minv.shape() != (m, m) {
        return Err(LqgError::Shape("J and M⁻¹ must be square of equal size".into()));
    }
    if lambda_e.ncols() != m || lambda_f.ncols() != m || lambda_e.nrows() != lambda_f.nrows() {
        return Err(LqgError::Shape("Λ_e, Λ_f must be d×m with a common d".into()));
    }
    if !(hbar > 0.0 && hbar.is_finite()) {
        return Err(LqgError::BadParameter(format!("hbar = {hbar}")));
    }
    let defect = crate::linalg::max_abs_real(&(j + j.transpose()));
    if defect > 1e-12 {
        return Err(LqgError::NotAntisymmetric { defect });
    }
    let defect = sym_defect(minv);
    if defect > 1e-12 {
        return Err(LqgError::NotSymmetric { what: "Minv", defect });
    }
    for row in 0..lambda_e.nrows() {
        let live = |l: &CMatrix| (0..m).any(|k| l[(row, k)] != c(0.0, 0.0));
        if live(lambda_e) && live(lambda_f) {
            return Err(LqgError::RowOverlap { row });
        }
    }

    let lambda = lambda_e + lambda_f;
    let im_ltl = (lambda.transpose() * lambda.conjugate()).map(|z| z.im);
    let a_t = (minv + im_ltl.scale(hbar)) * j;

    let b_e = lambda_e.map(|z| 2.0 * z.re);
    let b_f = lambda_f.map(|z| 2.0 * z.re);
    let c_f = (&b_f * j).transpose();
    let f_e = (lambda_e.map(|z| hbar * z.im) * j).transpose();
    let e_f = lambda_f.map(|z| hbar * z.im);

    let c_e = (&b_e * j).transpose();
    let re_ff = (lambda_f.adjoint() * lambda_f).map(|z| z.re);
    let g = (&c_e * c_e.transpose()).scale(hbar * hbar / 4.0)
        + (j.transpose() * re_ff * j).scale(hbar * hbar);
    let re_ee = (lambda_e.adjoint() * lambda_e).map(|z| z.re);
    let h = (b_f.transpose() * &b_f).scale(hbar * hbar / 4.0) + re_ee.scale(hbar * hbar);

    LinearModel::from_coefficients(a_t.transpose(), b_e, c_f, f_e, e_f, g, h, j.clone(), hbar)
}

/// Gaussian conditional state: posterior mean (column, phase-space units)
/// and symmetric covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianBelief {
    pub mean: DVector<f64>,
    pub cov: RMatrix,
}

impl GaussianBelief {
    /// Validates symmetry (1e-12) and Heisenberg admissibility against the
    /// model's CCR matrix: min eig(Σ + (iħ/2)J) ≥ −1e-9. With J = 0 this
    /// reduces to plain positive semidefiniteness.
    pub fn new(mean: DVector<f64>, cov: RMatrix, j: &RMatrix, hbar: f64) -> Result<Self, LqgError> {
        if cov.nrows() != mean.len() || !cov.is_square() {
            return Err(LqgError::Shape("covariance must be m×m".into()));
        }
        let defect = sym_defect(&cov);
        if defect > 1e-12 {
            return Err(LqgError::NotSymmetric { what: "Σ", defect });
        }
        let check = heisenberg_check(&cov, j, hbar);
        if !check.ok {
            return Err(LqgError::NotAdmissible { min_eig: check.min_eig });
        }
        Ok(GaussianBelief { mean, cov })
    }
}

/// Running or terminal quadratic cost in canonical form: output matrix E_f
/// (the cross term between u and the state), running state cost H, and the
/// terminal weight Ω_T. For quantum-route models the canonical (E_f, H)
/// are the model's own derived matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct CostSpec {
    pub e_f: RMatrix,
    pub h: RMatrix,
    pub omega_t: RMatrix,
}

impl CostSpec {
    pub fn new(e_f: RMatrix, h: RMatrix, omega_t: RMatrix) -> Result<Self, LqgError> {
        if h.nrows() != e_f.ncols() || omega_t.nrows() != e_f.ncols() {
            return Err(LqgError::Shape("H and Ω_T must be m×m matching E_f".into()));
        }
        for (what, mat) in [("H", &h), ("Ω_T", &omega_t)] {
            let defect = sym_defect(mat);
            if defect > 1e-10 {
                return Err(LqgError::NotSymmetric { what, defect });
            }
            let min_eig = min_sym_eig(mat);
            if min_eig < -1e-10 {
                return Err(LqgError::NotPsd { what, min_eig });
            }
        }
        Ok(CostSpec { e_f, h, omega_t })
    }

    /// The canonical cost induced by a quantum-route model: the model's own
    /// (E_f, H) with a chosen terminal weight.
    pub fn canonical(model: &LinearModel, omega_t: RMatrix) -> Result<Self, LqgError> {
        Self::new(model.e_f.clone(), model.h.clone(), omega_t)
    }
}

/// Symmetric-matrix path sampled on the uniform grid t_k = k·dt.
#[derive(Clone, Debug, PartialEq)]
pub struct RiccatiPath {
    pub times: Vec<f64>,
    pub values: Vec<RMatrix>,
}

impl RiccatiPath {
    pub fn last(&self) -> &RMatrix {
        self.values.last().expect("paths are never empty")
    }
}

fn rk4_sym<F: Fn(&RMatrix) -> RMatrix>(x: &RMatrix, dt: f64, rhs: F) -> RMatrix {
    let k1 = rhs(x);
    let k2 = rhs(&(x + k1.scale(0.5 * dt)));
    let k3 = rhs(&(x + k2.scale(0.5 * dt)));
    let k4 = rhs(&(x + k3.scale(dt)));
    let next = x + (k1 + k2.scale(2.0) + k3.scale(2.0) + k4).scale(dt / 6.0);
    (&next + next.transpose()).scale(0.5)
}

/// Forward filtering Riccati flow
/// dΣ/dt = G − ΣA_eᵀ − A_eΣ − ΣB_eᵀB_eΣ with A_e = A + F_eB_e,
/// RK4 with per-step symmetrization.
pub fn filter_riccati_solve(
    model: &LinearModel,
    sigma0: &RMatrix,
    horizon: f64,
    dt: f64,
) -> Result<RiccatiPath, LqgError> {
    if sigma0.shape() != (model.m, model.m) {
        return Err(LqgError::Shape("Σ0 must be m×m".into()));
    }
    if !(dt > 0.0 && dt.is_finite() && horizon >= 0.0) {
        return Err(LqgError::BadParameter(format!("dt = {dt}, T = {horizon}")));
    }
    let a_e = &model.a + &model.f_e * &model.b_e;
    let btb = model.b_e.transpose() * &model.b_e;
    let rhs = |s: &RMatrix| &model.g - s * a_e.transpose() - &a_e * s - s * &btb * s;

    let steps = (horizon / dt).round() as usize;
    let mut values = Vec::with_capacity(steps + 1);
    let mut times = Vec::with_capacity(steps + 1);
    values.push((sigma0 + sigma0.transpose()).scale(0.5));
    times.push(0.0);
    for k in 0..steps {
        let next = rk4_sym(&values[k], dt, rhs);
        let norm = crate::linalg::max_abs_real(&next);
        if !norm.is_finite() || norm > BLOWUP_NORM {
            return Err(LqgError::BlowUp { norm, t: (k + 1) as f64 * dt });
        }
        values.push(next);
        times.push((k + 1) as f64 * dt);
    }
    Ok(RiccatiPath { times, values })
}

/// Backward control Riccati flow
/// −dΩ/dt = H − ΩA_f − A_fᵀΩ − ΩC_fC_fᵀΩ with A_f = A + C_fE_f, Ω(T) = Ω_T.
/// Integrated forward in τ = T − t (so the flow is the exact mirror of the
/// filtering one) and reported on the ascending t grid.
pub fn control_riccati_solve(
    model: &LinearModel,
    cost: &CostSpec,
    horizon: f64,
    dt: f64,
) -> Result<RiccatiPath, LqgError> {
    if cost.h.nrows() != model.m || cost.e_f.nrows() != model.d_f() {
        return Err(LqgError::Shape("cost matrices must match the model".into()));
    }
    if !(dt > 0.0 && dt.is_finite() && horizon >= 0.0) {
        return Err(LqgError::BadParameter(format!("dt = {dt}, T = {horizon}")));
    }
    let a_f = &model.a + &model.c_f * &cost.e_f;
    let cct = &model.c_f * model.c_f.transpose();
    let rhs = |w: &RMatrix| &cost.h - w * &a_f - a_f.transpose() * w - w * &cct * w;

    let steps = (horizon / dt).round() as usize;
    let mut tau_values = Vec::with_capacity(steps + 1);
    tau_values.push((&cost.omega_t + cost.omega_t.transpose()).scale(0.5));
    for k in 0..steps {
        let next = rk4_sym(&tau_values[k], dt, rhs);
        let norm = crate::linalg::max_abs_real(&next);
        if !norm.is_finite() || norm > BLOWUP_NORM {
            return Err(LqgError::BlowUp { norm, t: horizon - (k + 1) as f64 * dt });
        }
        tau_values.push(next);
    }
    tau_values.reverse();
    let times = (0..=steps).map(|k| k as f64 * dt).collect();
    Ok(RiccatiPath { times, values: tau_values })
}

/// Kalman gain at covariance Σ: K = ΣB_eᵀ + F_e (m×d_e).
pub fn kalman_gain(model: &LinearModel, sigma: &RMatrix) -> RMatrix {
    sigma * model.b_e.transpose() + &model.f_e
}

/// One Euler step of the Kalman mean update driven by a recorded output:
/// innovation dŴ = dY − B_e x̂ dt, then dx̂ = −(Ax̂ + C_f u)dt + K dŴ with
/// K built from the supplied covariance. Covariance propagation is data
/// independent and lives in [`filter_riccati_solve`]; the returned belief
/// carries the covariance it was given.
pub fn kalman_step(
    model: &LinearModel,
    belief: &GaussianBelief,
    sigma_t: &RMatrix,
    u: &DVector<f64>,
    dy: &DVector<f64>,
    dt: f64,
) -> Result<GaussianBelief, LqgError> {
    if belief.mean.len() != model.m
        || sigma_t.shape() != (model.m, model.m)
        || u.len() != model.d_f()
        || dy.len() != model.d_e()
    {
        return Err(LqgError::Shape("kalman_step operand shapes".into()));
    }
    let gain = kalman_gain(model, sigma_t);
    let innovation = dy - (&model.b_e * &belief.mean).scale(dt);
    let mean = &belief.mean - (&model.a * &belief.mean + &model.c_f * u).scale(dt)
        + gain * innovation;
    Ok(GaussianBelief { mean, cov: sigma_t.clone() })
}

/// Optimal feedback gain at Ω: Lᵀ = ΩC_f + E_fᵀ; the control law is u = Lx̂.
pub fn optimal_gain(omega: &RMatrix, model: &LinearModel, cost: &CostSpec) -> RMatrix {
    (omega * &model.c_f + cost.e_f.transpose()).transpose()
}

/// Gains along a whole Ω path.
pub fn optimal_gain_path(
    omega_path: &RiccatiPath,
    model: &LinearModel,
    cost: &CostSpec,
) -> Vec<RMatrix> {
    omega_path.values.iter().map(|w| optimal_gain(w, model, cost)).collect()
}

/// Total minimal expected cost from (x0, Σ0):
///
///   S(0) = x0ᵀΩ(0)x0 + Tr[Ω(0)Σ(0)]
///        + ∫ Tr[Ω(t)G] dt
///        + ∫ Tr[(Ω(t)C_f + E_fᵀ)ᵀ Σ(t) (Ω(t)C_f + E_fᵀ)] dt,
///
/// trapezoidal quadrature on the shared grid.
pub fn min_cost(
    model: &LinearModel,
    cost: &CostSpec,
    sigma_path: &RiccatiPath,
    omega_path: &RiccatiPath,
    x0: &DVector<f64>,
) -> Result<f64, LqgError> {
    if sigma_path.times != omega_path.times {
        return Err(LqgError::GridMismatch);
    }
    if x0.len() != model.m {
        return Err(LqgError::Shape("x0 must have length m".into()));
    }
    let omega0 = &omega_path.values[0];
    let mut total = (x0.transpose() * omega0 * x0)[(0, 0)] + tr_prod(omega0, &sigma_path.values[0]);

    let integrand: Vec<f64> = omega_path
        .values
        .iter()
        .zip(&sigma_path.values)
        .map(|(w, s)| {
            let lt = w * &model.c_f + cost.e_f.transpose(); // m×d_f
            tr_prod(w, &model.g) + tr_prod(&(lt.transpose() * s), &lt)
        })
        .collect();
    total += trapezoid(&sigma_path.times, &integrand);
    Ok(total)
}

fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 1..times.len() {
        s += 0.5 * (values[k] + values[k - 1]) * (times[k] - times[k - 1]);
    }
    s
}

/// Result of the Heisenberg admissibility test on Σ + (iħ/2)J.
#[derive(Clone, Copy, Debug)]
pub struct HeisenbergReport {
    pub ok: bool,
    pub min_eig: f64,
}

/// Minimum eigenvalue of the Hermitian matrix Σ + (iħ/2)J; a belief is
/// physical iff it is ≥ −1e-9.
pub fn heisenberg_check(sigma: &RMatrix, j: &RMatrix, hbar: f64) -> HeisenbergReport {
    let m = sigma.nrows();
    let herm = CMatrix::from_fn(m, m, |r, q| {
        c(0.5 * (sigma[(r, q)] + sigma[(q, r)]), 0.5 * hbar * j[(r, q)])
    });
    let min_eig = herm_eigen(&herm).values[0];
    HeisenbergReport { ok: min_eig >= -HEISENBERG_TOL, min_eig }
}

/// The duality transform: swaps the filtering data (A, B_e, F_e, G, Σ0) with
/// the control data (A_c, C_c, E_c, H_c, Ω_T) through J-conjugation and time
/// reversal,
///
///   A_c = JᵀAᵀJ,  C_c = (B_eJ)ᵀ,  E_c = F_eᵀJ,  H_c = JGJᵀ,  Ω_T^c = JΣ0Jᵀ,
///
/// and rebuilds the dual's own filtering side from the primal control data
/// with the inverse substitutions, so dualizing twice is the identity.
/// Requires J orthogonal and antisymmetric (JJᵀ = 1, Jᵀ = −J); with the
/// standard block-J this is an exact (±1-permutation) rearrangement.
pub fn dualize(
    model: &LinearModel,
    cost: &CostSpec,
    sigma0: &RMatrix,
) -> Result<(LinearModel, CostSpec, RMatrix), LqgError> {
    let j = &model.j;
    let defect = crate::linalg::max_abs_real(&(j * j.transpose() - RMatrix::identity(model.m, model.m)))
        .max(crate::linalg::max_abs_real(&(j + j.transpose())));
    if defect > 1e-12 {
        return Err(LqgError::NotSymplectic { defect });
    }
    let jt = j.transpose();

    let dual_model = LinearModel::from_coefficients(
        &jt * model.a.transpose() * j,     // A′  = JᵀAᵀJ
        model.c_f.transpose() * &jt,       // B_e′ from the primal actuation
        (&model.b_e * j).transpose(),      // C_f′ = C_c
        j * cost.e_f.transpose(),          // F_e′ from the primal cost cross term
        model.f_e.transpose() * j,         // E_f′ = E_c
        &jt * &cost.h * j,                 // G′  from the primal state cost
        j * &model.g * &jt,                // H′  = H_c
        j.clone(),
        model.hbar,
    )?;
    let dual_cost = CostSpec::new(
        model.f_e.transpose() * j, // E_c
        j * &model.g * &jt,        // H_c
        j * sigma0 * &jt,          // Ω_T^c = JΣ0Jᵀ
    )?;
    let dual_sigma0 = &jt * &cost.omega_t * j;
    Ok((dual_model, dual_cost, dual_sigma0))
}

/// Monte-Carlo summary of closed-loop running + terminal cost.
#[derive(Clone, Debug)]
pub struct ClosedLoopOutcome {
    pub costs: Vec<f64>,
    pub mean: f64,
    pub stderr: f64,
}

/// Simulates `n` innovation-driven Kalman trajectories under the feedback
/// u(t) = L(t)x̂(t) given by `gain_path` (one gain per grid point — the
/// optimal one from [`optimal_gain_path`], or any perturbed policy), and
/// accumulates the Gaussian-moment running cost
///
///   |u − E_f x̂|² + x̂ᵀHx̂ + Tr[(H + E_fᵀE_f)Σ(t)]
///
/// by trapezoidal quadrature, plus the terminal x̂ᵀΩ_Tx̂ + Tr[Ω_TΣ(T)].
/// Innovations come from the counter-based key (seed, trajectory, step,
/// channel): two runs with equal seeds see identical noise (common random
/// numbers), which makes policy comparisons pairwise.
pub fn simulate_closed_loop(
    model: &LinearModel,
    cost: &CostSpec,
    belief0: &GaussianBelief,
    sigma_path: &RiccatiPath,
    gain_path: &[RMatrix],
    dt: f64,
    seed: u64,
    n: usize,
) -> Result<ClosedLoopOutcome, LqgError> {
    if gain_path.len() != sigma_path.values.len() {
        return Err(LqgError::GridMismatch);
    }
    if belief0.mean.len() != model.m {
        return Err(LqgError::Shape("belief dimension".into()));
    }
    if n == 0 {
        return Err(LqgError::BadParameter("n = 0".into()));
    }
    let steps = sigma_path.values.len() - 1;
    let d_e = model.d_e();
    let sqrt_dt = dt.sqrt();
    let h_sigma: Vec<f64> = sigma_path
        .values
        .iter()
        .map(|s| tr_prod(&(&cost.h + cost.e_f.transpose() * &cost.e_f), s))
        .collect();
    let gains: Vec<RMatrix> = sigma_path.values.iter().map(|s| kalman_gain(model, s)).collect();

    let mut costs = Vec::with_capacity(n);
    for traj in 0..n {
        let mut x = belief0.mean.clone();
        let mut quad = 0.0;
        let mut prev = 0.0;
        for k in 0..=steps {
            let u = &gain_path[k] * &x;
            let resid = &u - &cost.e_f * &x;
            let phi = resid.norm_squared() + (x.transpose() * &cost.h * &x)[(0, 0)] + h_sigma[k];
            if k > 0 {
                quad += 0.5 * (prev + phi) * dt;
            }
            prev = phi;
            if k == steps {
                break;
            }
            let key = Key::new(seed, traj as u64, k as u64, 0);
            let dw = DVector::from_fn(d_e, |i, _| sqrt_dt * key.normal(i as u64));
            x = &x - (&model.a * &x + &model.c_f * u).scale(dt) + &gains[k] * dw;
        }
        let terminal = (x.transpose() * &cost.omega_t * &x)[(0, 0)]
            + tr_prod(&cost.omega_t, sigma_path.last());
        costs.push(quad + terminal);
    }
    let mean = costs.iter().sum::<f64>() / n as f64;
    let var = costs.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / (n as f64 - 1.0).max(1.0);
    let stderr = if n > 1 { (var / n as f64).sqrt() } else { 0.0 };
    Ok(ClosedLoopOutcome { costs, mean, stderr })
}

/// Named scalar view of the free-particle family: drift rates λ, δ and the
/// noise/cost weights ζ_q, ζ_p, η_q, η_p.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FreeParticleView {
    pub lambda: f64,
    pub delta: f64,
    pub zeta_q: f64,
    pub zeta_p: f64,
    pub eta_q: f64,
    pub eta_p: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub mu: f64,
    pub hbar: f64,
}

/// The monitored, actuated particle of mass μ: position is observed through
/// a channel of strength α (with momentum back-action ε) and momentum is
/// steered through a channel of strength β (with position cost weight γ).
/// Built on phase space (q, p) with the standard J = [[0,1],[−1,0]]:
/// Λ_e has the single live row (α/2, iε/ħ), Λ_f the row (β/2, iγ/ħ),
/// M⁻¹ = diag(0, 1/μ). The scalar view satisfies λ = ½(αε+βγ),
/// δ = ½(αε−βγ), ζ_q = γ², ζ_p = (ħ/2)²(α²+β²) = η_q, η_p = ε².
pub fn free_particle_model(
    alpha: f64,
    beta: f64,
    gamma: f64,
    epsilon: f64,
    mu: f64,
    hbar: f64,
) -> Result<(LinearModel, FreeParticleView), LqgError> {
    if !(mu > 0.0) || !(hbar > 0.0) {
        return Err(LqgError::BadParameter(format!("mu = {mu}, hbar = {hbar}")));
    }
    let j = RMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
    let mut lambda_e = CMatrix::zeros(2, 2);
    lambda_e[(0, 0)] = cr(alpha / 2.0);
    lambda_e[(0, 1)] = c(0.0, epsilon / hbar);
    let mut lambda_f = CMatrix::zeros(2, 2);
    lambda_f[(1, 0)] = cr(beta / 2.0);
    lambda_f[(1, 1)] = c(0.0, gamma / hbar);
    let minv = RMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0 / mu]);
    let model = derive_matrices(&j, &lambda_e, &lambda_f, &minv, hbar)?;
    let view = FreeParticleView {
        lambda: 0.5 * (alpha * epsilon + beta * gamma),
        delta: 0.5 * (alpha * epsilon - gamma * beta),
        zeta_q: gamma * gamma,
        zeta_p: (hbar / 2.0) * (hbar / 2.0) * (alpha * alpha + beta * beta),
        eta_q: (hbar / 2.0) * (hbar / 2.0) * (alpha * alpha + beta * beta),
        eta_p: epsilon * epsilon,
        alpha,
        beta,
        gamma,
        epsilon,
        mu,
        hbar,
    };
    Ok((model, view))
}

/// Componentwise residuals of the free-particle Riccati flows: how far the
/// solved matrix paths sit from the scalar component equations.
///
/// `filter`/`control` hold the max residual of each component equation of
/// the generic matrix flow written out for (σ_q, σ_qp, σ_p) and
/// (ω_q, ω_qp, ω_p). `alt_sigma_p` is the residual of the variant σ_p
/// equation with the (ασ_p)² quadratic term in place of (ασ_qp)² — reported
/// because the two forms disagree whenever σ_qp ≠ σ_p, and only the generic
/// matrix flow is treated as normative.
#[derive(Clone, Copy, Debug)]
pub struct FreeParticleCheck {
    pub filter: [f64; 3],
    pub control: [f64; 3],
    pub alt_sigma_p: f64,
}

/// Central-difference check of the componentwise free-particle equations on
/// solved Σ and Ω paths (both on the same grid).
pub fn free_particle_component_check(
    view: &FreeParticleView,
    sigma_path: &RiccatiPath,
    omega_path: &RiccatiPath,
) -> Result<FreeParticleCheck, LqgError> {
    if sigma_path.times != omega_path.times {
        return Err(LqgError::GridMismatch);
    }
    let n = sigma_path.times.len();
    if n < 3 {
        return Err(LqgError::BadParameter("need at least 3 grid points".into()));
    }
    let (l, d) = (view.lambda, view.delta);
    let (a2, b2) = (view.alpha * view.alpha, view.beta * view.beta);
    let mut filter = [0.0f64; 3];
    let mut control = [0.0f64; 3];
    let mut alt = 0.0f64;
    for k in 1..n - 1 {
        let dt2 = sigma_path.times[k + 1] - sigma_path.times[k - 1];
        let s = &sigma_path.values[k];
        let (sq, sqp, sp) = (s[(0, 0)], s[(0, 1)], s[(1, 1)]);
        let ds = |i: usize, j: usize| {
            (sigma_path.values[k + 1][(i, j)] - sigma_path.values[k - 1][(i, j)]) / dt2
        };
        filter[0] = filter[0]
            .max((ds(0, 0) - (view.zeta_q + 2.0 * (sqp / view.mu + d * sq) - a2 * sq * sq)).abs());
        filter[1] = filter[1]
            .max((ds(0, 1) - (sp / view.mu - (l - d) * sqp - a2 * sq * sqp)).abs());
        filter[2] =
            filter[2].max((ds(1, 1) - (view.zeta_p - 2.0 * l * sp - a2 * sqp * sqp)).abs());
        alt = alt.max((ds(1, 1) - (view.zeta_p - 2.0 * l * sp - a2 * sp * sp)).abs());

        let w = &omega_path.values[k];
        let (wq, wqp, wp) = (w[(0, 0)], w[(0, 1)], w[(1, 1)]);
        let dw = |i: usize, j: usize| {
            (omega_path.values[k + 1][(i, j)] - omega_path.values[k - 1][(i, j)]) / dt2
        };
        let bg = view.beta * view.gamma;
        control[0] = control[0].max((-dw(0, 0) - (view.eta_q - 2.0 * l * wq - b2 * wqp * wqp)).abs());
        control[1] = control[1]
            .max((-dw(0, 1) - (wq / view.mu - (2.0 * l + bg) * wqp - b2 * wqp * wp)).abs());
        control[2] = control[2].max(
            (-dw(1, 1) - (view.eta_p + 2.0 * wqp / view.mu - 2.0 * (l + bg) * wp - b2 * wp * wp))
                .abs(),
        );
    }
    Ok(FreeParticleCheck { filter, control, alt_sigma_p: alt })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_real;
    use crate::sample::Stream;

    fn standard_j2() -> RMatrix {
        RMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0])
    }

    fn quantum_limit_model() -> LinearModel {
        free_particle_model(1.0, 0.0, 0.0, 0.0, 1.0, 1.0).unwrap().0
    }

    #[test]
    fn free_particle_matrices_match_the_scalar_map() {
        let (model, view) = free_particle_model(1.3, 0.7, 0.4, 0.2, 2.0, 1.0).unwrap();
        let l = view.lambda;
        // Aᵀ = [[λ, 0], [−1/μ, λ]]  ⇒  A = [[λ, −1/μ], [0, λ]]
        let want_a = RMatrix::from_row_slice(2, 2, &[l, -0.5, 0.0, l]);
        assert!(max_abs_real(&(&model.a - want_a)) < 1e-14);
        assert!(max_abs_real(&(&model.b_e - RMatrix::from_row_slice(2, 2, &[1.3, 0.0, 0.0, 0.0])))
            < 1e-15);
        let want_cf = RMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 0.7]);
        assert!(max_abs_real(&(&model.c_f - want_cf)) < 1e-15);
        let want_fe = RMatrix::from_row_slice(2, 2, &[-0.2, 0.0, 0.0, 0.0]);
        assert!(max_abs_real(&(&model.f_e - want_fe)) < 1e-15);
        let want_ef = RMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 0.4]);
        assert!(max_abs_real(&(&model.e_f - want_ef)) < 1e-15);
        let want_g = RMatrix::from_row_slice(2, 2, &[view.zeta_q, 0.0, 0.0, view.zeta_p]);
        assert!(max_abs_real(&(&model.g - want_g)) < 1e-14);
        let want_h = RMatrix::from_row_slice(2, 2, &[view.eta_q, 0.0, 0.0, view.eta_p]);
        assert!(max_abs_real(&(&model.h - want_h)) < 1e-14);

        assert_eq!(view.lambda, 0.5 * (1.3 * 0.2 + 0.7 * 0.4));
        assert_eq!(view.delta, 0.5 * (1.3 * 0.2 - 0.7 * 0.4));

        // the named α=1 case
        let (m1, _) = free_particle_model(1.0, 0.0, 0.0, 0.0, 1.0, 1.0).unwrap();
        assert!(max_abs_real(&(&m1.g - RMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 0.25])))
            < 1e-15);
        assert!(max_abs_real(&(&m1.h - RMatrix::from_row_slice(2, 2, &[0.25, 0.0, 0.0, 0.0])))
            < 1e-15);
        assert!(max_abs_real(&m1.a) == 0.0 || max_abs_real(&(&m1.a
            - RMatrix::from_row_slice(2, 2, &[0.0, -1.0, 0.0, 0.0]))) < 1e-15);
    }

    #[test]
    fn zero_couplings_leave_the_hamiltonian_flow() {
        let j = standard_j2();
        let minv = RMatrix::from_row_slice(2, 2, &[0.3, 0.1, 0.1, 0.9]);
        let zero = CMatrix::zeros(1, 2);
        let model = derive_matrices(&j, &zero, &zero, &minv, 1.0).unwrap();
        assert_eq!(max_abs_real(&model.g), 0.0);
        assert_eq!(max_abs_real(&model.h), 0.0);
        assert!(max_abs_real(&(model.a.transpose() - minv * j)) < 1e-15);
    }

    #[test]
    fn overlapping_rows_are_rejected() {
        let j = standard_j2();
        let mut le = CMatrix::zeros(1, 2);
        le[(0, 0)] = cr(1.0);
        let mut lf = CMatrix::zeros(1, 2);
        lf[(0, 1)] = c(0.0, 1.0);
        let err =
            derive_matrices(&j, &le, &lf, &RMatrix::zeros(2, 2), 1.0).unwrap_err();
        assert!(matches!(err, LqgError::RowOverlap { row: 0 }));
    }

    #[test]
    fn filter_riccati_trivial_and_quantum_limit() {
        // G = 0, B_e = 0, A = 0: constant covariance
        let model = LinearModel::from_coefficients(
            RMatrix::zeros(2, 2),
            RMatrix::zeros(1, 2),
            RMatrix::zeros(2, 1),
            RMatrix::zeros(2, 1),
            RMatrix::zeros(1, 2),
            RMatrix::zeros(2, 2),
            RMatrix::zeros(2, 2),
            standard_j2(),
            1.0,
        )
        .unwrap();
        let s0 = RMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.7]);
        let path = filter_riccati_solve(&model, &s0, 1.0, 1e-2).unwrap();
        for s in &path.values {
            assert!(max_abs_real(&(s - &s0)) < 1e-15);
        }

        // position monitoring saturates the Heisenberg limit
        let model = quantum_limit_model();
        let s0 = RMatrix::identity(2, 2).scale(0.5); // coherent state, ħ = 1
        let path = filter_riccati_solve(&model, &s0, 30.0, 1e-3).unwrap();
        let inf = path.last();
        let want = RMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 0.5]);
        assert!(max_abs_real(&(inf - want)) < 1e-6, "Σ∞ = {inf}");
        let det = inf[(0, 0)] * inf[(1, 1)] - inf[(0, 1)] * inf[(1, 0)];
        assert!((det - 0.25).abs() < 1e-6, "det Σ∞ = {det}");

        // admissibility holds along the whole path
        for s in &path.values {
            assert!(heisenberg_check(s, &model.j, model.hbar).ok);
        }
    }

    #[test]
    fn componentwise_free_particle_equations_match_the_matrix_flow() {
        let (model, view) = free_particle_model(1.1, 0.6, 0.35, 0.15, 1.4, 1.0).unwrap();
        let s0 = RMatrix::identity(2, 2).scale(0.5);
        let dt = 1e-3;
        let sigma = filter_riccati_solve(&model, &s0, 2.0, dt).unwrap();

        // independent scalar RK4 on (σ_q, σ_qp, σ_p)
        let (l, d, mu, a2) =
            (view.lambda, view.delta, view.mu, view.alpha * view.alpha);
        let rhs = |s: [f64; 3]| {
            [
                view.zeta_q + 2.0 * (s[1] / mu + d * s[0]) - a2 * s[0] * s[0],
                s[2] / mu - (l - d) * s[1] - a2 * s[0] * s[1],
                view.zeta_p - 2.0 * l * s[2] - a2 * s[1] * s[1],
            ]
        };
        let mut s = [0.5, 0.0, 0.5];
        let mut worst = 0.0f64;
        for k in 0..sigma.values.len() {
            let m = &sigma.values[k];
            worst = worst
                .max((m[(0, 0)] - s[0]).abs())
                .max((m[(0, 1)] - s[1]).abs())
                .max((m[(1, 1)] - s[2]).abs());
            let add = |x: [f64; 3], k: [f64; 3], w: f64| {
                [x[0] + w * k[0], x[1] + w * k[1], x[2] + w * k[2]]
            };
            let k1 = rhs(s);
            let k2 = rhs(add(s, k1, 0.5 * dt));
            let k3 = rhs(add(s, k2, 0.5 * dt));
            let k4 = rhs(add(s, k3, dt));
            for i in 0..3 {
                s[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        assert!(worst < 1e-10, "componentwise filter gap {worst}");

        // control side through the component check report
        let cost = CostSpec::canonical(&model, RMatrix::zeros(2, 2)).unwrap();
        let omega = control_riccati_solve(&model, &cost, 2.0, dt).unwrap();
        let check = free_particle_component_check(&view, &sigma, &omega).unwrap();
        // central differences on an RK4 path carry O(dt²) truncation
        for r in check.filter.iter().chain(check.control.iter()) {
            assert!(*r < 5e-6, "component residual {r}");
        }
        // the (ασ_p)² variant is inconsistent with the matrix flow here
        assert!(check.alt_sigma_p > 1e-2, "variant σ_p form should disagree");
    }

    #[test]
    fn kalman_step_reference_values() {
        // zero innovation, A = 0, u = 0: mean unchanged
        let model = quantum_limit_model();
        let mut a0 = model.clone();
        a0.a = RMatrix::zeros(2, 2);
        let belief = GaussianBelief::new(
            DVector::from_vec(vec![0.4, -0.2]),
            RMatrix::identity(2, 2).scale(0.5),
            &a0.j,
            1.0,
        )
        .unwrap();
        let dt = 0.01;
        let dy = (&a0.b_e * &belief.mean).scale(dt);
        let out = kalman_step(&a0, &belief, &belief.cov, &DVector::zeros(2), &dy, dt).unwrap();
        assert!(max_abs_real(&RMatrix::from_column_slice(2, 1, (out.mean - &belief.mean).as_slice()))
            < 1e-15);

        // scalar classical model: σ* = 1, dY = 0.1 ⇒ dx̂ = 0.1
        let scalar = LinearModel::from_coefficients(
            RMatrix::zeros(1, 1),
            RMatrix::identity(1, 1),
            RMatrix::zeros(1, 0),
            RMatrix::zeros(1, 1),
            RMatrix::zeros(0, 1),
            RMatrix::identity(1, 1),
            RMatrix::zeros(1, 1),
            RMatrix::zeros(1, 1),
            0.0,
        )
        .unwrap();
        let belief = GaussianBelief::new(
            DVector::zeros(1),
            RMatrix::identity(1, 1),
            &scalar.j,
            0.0,
        )
        .unwrap();
        let out = kalman_step(
            &scalar,
            &belief,
            &belief.cov,
            &DVector::zeros(0),
            &DVector::from_vec(vec![0.1]),
            0.01,
        )
        .unwrap();
        assert!((out.mean[0] - 0.1).abs() < 1e-15);

        // free particle: actuation shifts the momentum mean by −βu·dt exactly
        let (fp, view) = free_particle_model(0.9, 0.8, 0.3, 0.1, 1.0, 1.0).unwrap();
        let belief = GaussianBelief::new(
            DVector::from_vec(vec![0.3, 0.5]),
            RMatrix::identity(2, 2).scale(0.5),
            &fp.j,
            1.0,
        )
        .unwrap();
        let dy = DVector::from_vec(vec![0.02, -0.01]);
        let u1 = 0.7;
        let quiet =
            kalman_step(&fp, &belief, &belief.cov, &DVector::zeros(2), &dy, 0.01).unwrap();
        let driven = kalman_step(
            &fp,
            &belief,
            &belief.cov,
            &DVector::from_vec(vec![0.0, u1]),
            &dy,
            0.01,
        )
        .unwrap();
        assert_eq!(driven.mean[0], quiet.mean[0]);
        let shift = driven.mean[1] - quiet.mean[1];
        assert!((shift - (-view.beta * u1 * 0.01)).abs() < 1e-15, "shift {shift}");
    }

    #[test]
    fn control_riccati_trivial_and_classical_fixed_points() {
        // H = 0, Ω_T = 0 ⇒ Ω ≡ 0
        let model = quantum_limit_model();
        let cost = CostSpec::new(
            RMatrix::zeros(2, 2),
            RMatrix::zeros(2, 2),
            RMatrix::zeros(2, 2),
        )
        .unwrap();
        let path = control_riccati_solve(&model, &cost, 1.0, 1e-2).unwrap();
        for w in &path.values {
            assert_eq!(max_abs_real(w), 0.0);
        }

        // classical scalar: 0 = h − c²Ω² with h = c = 1 ⇒ Ω∞ = 1;
        // and the filter side 0 = g − b²σ² ⇒ σ* = 1
        let scalar = LinearModel::from_coefficients(
            RMatrix::zeros(1, 1),
            RMatrix::identity(1, 1),
            RMatrix::identity(1, 1),
            RMatrix::zeros(1, 1),
            RMatrix::zeros(1, 1),
            RMatrix::identity(1, 1),
            RMatrix::identity(1, 1),
            RMatrix::zeros(1, 1),
            0.0,
        )
        .unwrap();
        let cost = CostSpec::new(
            RMatrix::zeros(1, 1),
            RMatrix::identity(1, 1),
            RMatrix::zeros(1, 1),
        )
        .unwrap();
        let omega = control_riccati_solve(&scalar, &cost, 20.0, 1e-3).unwrap();
        assert!((omega.values[0][(0, 0)] - 1.0).abs() < 1e-8, "Ω∞ = {}", omega.values[0]);
        let sigma = filter_riccati_solve(&scalar, &RMatrix::zeros(1, 1), 20.0, 1e-3).unwrap();
        assert!((sigma.last()[(0, 0)] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn optimal_gain_reference_values() {
        let model = quantum_limit_model();
        let zero_cost = CostSpec::new(
            RMatrix::zeros(2, 2),
            RMatrix::zeros(2, 2),
            RMatrix::zeros(2, 2),
        )
        .unwrap();
        let l = optimal_gain(&RMatrix::zeros(2, 2), &model, &zero_cost);
        assert_eq!(max_abs_real(&l), 0.0);

        // Ω = 1, C_f column (0,1)ᵀ, E_f = 0 ⇒ u = p̂
        let (fp, _) = free_particle_model(0.0, 1.0, 0.0, 0.0, 1.0, 1.0).unwrap();
        let l = optimal_gain(&RMatrix::identity(2, 2), &fp, &zero_cost);
        // gain row of the live channel (channel 1) is (0, β) = (0, 1)
        assert_eq!(l[(1, 0)], 0.0);
        assert_eq!(l[(1, 1)], 1.0);
        assert_eq!(l.row(0).iter().map(|v| v.abs()).fold(0.0, f64::max), 0.0);
    }

    #[test]
    fn min_cost_trivial_cases() {
        let model = quantum_limit_model();
        let omega_t = RMatrix::from_row_slice(2, 2, &[0.8, 0.1, 0.1, 0.5]);
        let cost = CostSpec::new(RMatrix::zeros(2, 2), RMatrix::zeros(2, 2), omega_t.clone())
            .unwrap();
        let s0 = RMatrix::identity(2, 2).scale(0.5);
        // T = 0: only the boundary terms
        let sigma = RiccatiPath { times: vec![0.0], values: vec![s0.clone()] };
        let omega = RiccatiPath { times: vec![0.0], values: vec![omega_t.clone()] };
        let x0 = DVector::from_vec(vec![1.0, -2.0]);
        let got = min_cost(&model, &cost, &sigma, &omega, &x0).unwrap();
        let want = (x0.transpose() * &omega_t * &x0)[(0, 0)] + tr_prod(&omega_t, &s0);
        assert!((got - want).abs() < 1e-14);

        // H = 0, Ω_T = 0 ⇒ zero cost
        let zero = CostSpec::new(RMatrix::zeros(2, 2), RMatrix::zeros(2, 2), RMatrix::zeros(2, 2))
            .unwrap();
        let sig = filter_riccati_solve(&model, &s0, 1.0, 1e-2).unwrap();
        let om = control_riccati_solve(&model, &zero, 1.0, 1e-2).unwrap();
        assert_eq!(min_cost(&model, &zero, &sig, &om, &x0).unwrap(), 0.0);
    }

    #[test]
    fn free_particle_total_cost_agrees_with_the_scalar_coding() {
        let (model, view) = free_particle_model(1.0, 0.8, 0.5, 0.0, 1.0, 1.0).unwrap();
        let cost = CostSpec::canonical(&model, RMatrix::identity(2, 2).scale(0.3)).unwrap();
        let s0 = RMatrix::identity(2, 2).scale(0.5);
        let dt = 1e-3;
        let sigma = filter_riccati_solve(&model, &s0, 1.5, dt).unwrap();
        let omega = control_riccati_solve(&model, &cost, 1.5, dt).unwrap();
        let x0 = DVector::from_vec(vec![0.7, -0.4]);
        let got = min_cost(&model, &cost, &sigma, &omega, &x0).unwrap();

        // scalar coding of the same quadrature
        let w0 = &omega.values[0];
        let mut want = w0[(0, 0)] * x0[0] * x0[0]
            + 2.0 * w0[(0, 1)] * x0[0] * x0[1]
            + w0[(1, 1)] * x0[1] * x0[1]
            + w0[(0, 0)] * 0.5
            + w0[(1, 1)] * 0.5;
        let vals: Vec<f64> = sigma
            .values
            .iter()
            .zip(&omega.values)
            .map(|(s, w)| {
                let (sq, sqp, sp) = (s[(0, 0)], s[(0, 1)], s[(1, 1)]);
                let (wq, wqp, wp) = (w[(0, 0)], w[(0, 1)], w[(1, 1)]);
                let v = (view.beta * wqp, view.beta * wp + view.gamma);
                view.zeta_q * wq
                    + view.zeta_p * wp
                    + sq * v.0 * v.0
                    + 2.0 * sqp * v.0 * v.1
                    + sp * v.1 * v.1
            })
            .collect();
        want += trapezoid(&sigma.times, &vals);
        assert!((got - want).abs() < 1e-6, "matrix {got} vs scalar {want}");
    }

    #[test]
    fn duality_is_an_exact_involution() {
        let (model, _) = free_particle_model(1.2, 0.5, 0.3, 0.4, 1.5, 1.0).unwrap();
        let cost = CostSpec::canonical(&model, RMatrix::from_row_slice(2, 2, &[0.4, 0.1, 0.1, 0.9]))
            .unwrap();
        let s0 = RMatrix::from_row_slice(2, 2, &[0.6, 0.1, 0.1, 0.8]);
        let (dm, dc, ds0) = dualize(&model, &cost, &s0).unwrap();
        let (ddm, ddc, dds0) = dualize(&dm, &dc, &ds0).unwrap();
        assert_eq!(ddm, model);
        assert_eq!(ddc, cost);
        assert_eq!(dds0, s0);

        // the free-particle dual swaps (α, ε) estimation for (β, γ) feedback:
        // B_e of the dual is the J-conjugated primal actuation
        assert_eq!(dm.b_e, model.c_f.transpose() * model.j.transpose());

        // non-symplectic J is refused
        let classical = LinearModel::from_coefficients(
            RMatrix::zeros(1, 1),
            RMatrix::identity(1, 1),
            RMatrix::zeros(1, 1),
            RMatrix::zeros(1, 1),
            RMatrix::zeros(1, 1),
            RMatrix::identity(1, 1),
            RMatrix::zeros(1, 1),
            RMatrix::zeros(1, 1),
            0.0,
        )
        .unwrap();
        let c0 = CostSpec::new(RMatrix::zeros(1, 1), RMatrix::zeros(1, 1), RMatrix::zeros(1, 1))
            .unwrap();
        assert!(matches!(
            dualize(&classical, &c0, &RMatrix::identity(1, 1)),
            Err(LqgError::NotSymplectic { .. })
        ));
    }

    #[test]
    fn duality_identifies_the_two_riccati_flows() {
        let (model, _) = free_particle_model(1.1, 0.7, 0.25, 0.15, 1.2, 1.0).unwrap();
        let cost = CostSpec::canonical(&model, RMatrix::identity(2, 2).scale(0.4)).unwrap();
        let s0 = RMatrix::identity(2, 2).scale(0.5);
        let horizon = 2.0;
        let dt = 1e-3;

        let sigma = filter_riccati_solve(&model, &s0, horizon, dt).unwrap();
        let (dm, dc, _) = dualize(&model, &cost, &s0).unwrap();
        let omega_dual = control_riccati_solve(&dm, &dc, horizon, dt).unwrap();

        // JΩ′(t)Jᵀ = Σ(T−t), compared by grid index
        let j = &model.j;
        let k_last = sigma.values.len() - 1;
        let mut worst = 0.0f64;
        for k in 0..=k_last {
            let lhs = j * &omega_dual.values[k] * j.transpose();
            let gap = max_abs_real(&(lhs - &sigma.values[k_last - k]));
            worst = worst.max(gap);
        }
        assert!(worst < 1e-8, "duality Riccati gap {worst}");

        // gain correspondence: JL′ᵀ(t) = K(T−t)
        let gains_dual = optimal_gain_path(&omega_dual, &dm, &dc);
        let mut worst_gain = 0.0f64;
        for k in 0..=k_last {
            let lhs = j * gains_dual[k].transpose();
            let rhs = kalman_gain(&model, &sigma.values[k_last - k]);
            worst_gain = worst_gain.max(max_abs_real(&(lhs - rhs)));
        }
        assert!(worst_gain < 1e-8, "duality gain gap {worst_gain}");
    }

    #[test]
    fn heisenberg_check_reference_values() {
        let j = standard_j2();
        let r = heisenberg_check(&RMatrix::identity(2, 2).scale(0.5), &j, 1.0);
        assert!(r.ok && r.min_eig.abs() < 1e-12, "coherent boundary: {}", r.min_eig);
        let r = heisenberg_check(&RMatrix::identity(2, 2), &j, 1.0);
        assert!(r.ok && (r.min_eig - 0.5).abs() < 1e-12);
        let r = heisenberg_check(&RMatrix::identity(2, 2).scale(0.25), &j, 1.0);
        assert!(!r.ok && (r.min_eig + 0.25).abs() < 1e-12);
    }

    #[test]
    fn closed_loop_mean_matches_min_cost() {
        // ε = 0 so that the literal quadrature equals the closed-loop mean
        let (model, _) = free_particle_model(1.0, 0.8, 0.5, 0.0, 1.0, 1.0).unwrap();
        let cost = CostSpec::canonical(&model, RMatrix::identity(2, 2).scale(0.2)).unwrap();
        let s0 = RMatrix::identity(2, 2).scale(0.5);
        let dt = 2e-3;
        let horizon = 1.0;
        let sigma = filter_riccati_solve(&model, &s0, horizon, dt).unwrap();
        let omega = control_riccati_solve(&model, &cost, horizon, dt).unwrap();
        let gains = optimal_gain_path(&omega, &model, &cost);
        let x0 = DVector::from_vec(vec![0.5, -0.3]);
        let belief0 = GaussianBelief::new(x0.clone(), s0, &model.j, 1.0).unwrap();

        let want = min_cost(&model, &cost, &sigma, &omega, &x0).unwrap();
        let out =
            simulate_closed_loop(&model, &cost, &belief0, &sigma, &gains, dt, 811, 2000).unwrap();
        let gap = (out.mean - want).abs();
        assert!(gap < 3.0 * out.stderr, "MC mean {} vs S(0) {want}, SE {}", out.mean, out.stderr);

        // perturbed policies cannot beat the optimum (common random numbers)
        for scale in [1.2, 0.8, 0.0] {
            let perturbed: Vec<RMatrix> = gains.iter().map(|l| l.scale(scale)).collect();
            let other = simulate_closed_loop(
                &model, &cost, &belief0, &sigma, &perturbed, dt, 811, 2000,
            )
            .unwrap();
            let diffs: Vec<f64> =
                other.costs.iter().zip(&out.costs).map(|(a, b)| a - b).collect();
            let dm = diffs.iter().sum::<f64>() / diffs.len() as f64;
            let dv = diffs.iter().map(|d| (d - dm) * (d - dm)).sum::<f64>()
                / (diffs.len() - 1) as f64;
            let dse = (dv / diffs.len() as f64).sqrt();
            assert!(dm > -3.0 * dse, "scale {scale}: paired mean {dm}, SE {dse}");
        }
    }

    #[test]
    fn closed_loop_trivial_zero_cost() {
        let (model, _) = free_particle_model(1.0, 0.5, 0.0, 0.0, 1.0, 1.0).unwrap();
        let zero = CostSpec::new(RMatrix::zeros(2, 2), RMatrix::zeros(2, 2), RMatrix::zeros(2, 2))
            .unwrap();
        let s0 = RMatrix::identity(2, 2).scale(0.5);
        let sigma = filter_riccati_solve(&model, &s0, 0.5, 1e-2).unwrap();
        let omega = control_riccati_solve(&model, &zero, 0.5, 1e-2).unwrap();
        let gains = optimal_gain_path(&omega, &model, &zero);
        let belief0 =
            GaussianBelief::new(DVector::from_vec(vec![1.0, 1.0]), s0, &model.j, 1.0).unwrap();
        let out = simulate_closed_loop(&model, &zero, &belief0, &sigma, &gains, 1e-2, 5, 50)
            .unwrap();
        assert!(out.costs.iter().all(|&c| c == 0.0));
        assert_eq!(out.mean, 0.0);
    }

    #[test]
    fn closed_loop_innovations_are_reproducible() {
        let (model, _) = free_particle_model(1.0, 0.6, 0.3, 0.0, 1.0, 1.0).unwrap();
        let cost = CostSpec::canonical(&model, RMatrix::identity(2, 2).scale(0.2)).unwrap();
        let s0 = RMatrix::identity(2, 2).scale(0.5);
        let sigma = filter_riccati_solve(&model, &s0, 0.5, 1e-2).unwrap();
        let omega = control_riccati_solve(&model, &cost, 0.5, 1e-2).unwrap();
        let gains = optimal_gain_path(&omega, &model, &cost);
        let belief0 =
            GaussianBelief::new(DVector::zeros(2), s0, &model.j, 1.0).unwrap();
        let a = simulate_closed_loop(&model, &cost, &belief0, &sigma, &gains, 1e-2, 17, 100)
            .unwrap();
        let b = simulate_closed_loop(&model, &cost, &belief0, &sigma, &gains, 1e-2, 17, 100)
            .unwrap();
        assert_eq!(a.costs, b.costs);
    }

    #[test]
    fn belief_validation() {
        let j = standard_j2();
        // sub-Heisenberg covariance is rejected
        let err = GaussianBelief::new(
            DVector::zeros(2),
            RMatrix::identity(2, 2).scale(0.25),
            &j,
            1.0,
        )
        .unwrap_err();
        assert!(matches!(err, LqgError::NotAdmissible { .. }));
        // classical: plain PSD with J = 0
        GaussianBelief::new(
            DVector::zeros(2),
            RMatrix::identity(2, 2).scale(0.25),
            &RMatrix::zeros(2, 2),
            0.0,
        )
        .unwrap();
    }

    #[test]
    fn riccati_blowup_is_detected() {
        // dΣ/dt = −2aΣ with a < 0 grows exponentially; H large accelerates it
        let model = LinearModel::from_coefficients(
            RMatrix::from_row_slice(1, 1, &[-40.0]),
            RMatrix::zeros(1, 1),
            RMatrix::zeros(1, 1),
            RMatrix::zeros(1, 1),
            RMatrix::zeros(1, 1),
            RMatrix::identity(1, 1),
            RMatrix::zeros(1, 1),
            RMatrix::zeros(1, 1),
            0.0,
        )
        .unwrap();
        let err = filter_riccati_solve(&model, &RMatrix::identity(1, 1), 2.0, 1e-2).unwrap_err();
        assert!(matches!(err, LqgError::BlowUp { .. }));
    }

    #[test]
    fn derived_matrices_are_recomputable_bitwise() {
        let mut s = Stream::new(61, 4);
        let j = standard_j2();
        let minv = {
            let x = crate::sample::random_hermitian(2, &mut s).map(|z| z.re);
            (&x + x.transpose()).scale(0.5)
        };
        let mut le = CMatrix::zeros(2, 2);
        let mut lf = CMatrix::zeros(2, 2);
        for k in 0..2 {
            le[(0, k)] = c(s.uniform() - 0.5, s.uniform() - 0.5);
            lf[(1, k)] = c(s.uniform() - 0.5, s.uniform() - 0.5);
        }
        let a = derive_matrices(&j, &le, &lf, &minv, 1.0).unwrap();
        let b = derive_matrices(&j, &le, &lf, &minv, 1.0).unwrap();
        assert_eq!(a, b);
    }
}
