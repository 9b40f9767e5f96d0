//! Dynamic-programming verification layer.
//!
//! Rather than solving the Bellman equation on the density-matrix simplex
//! (hopeless beyond toy dimensions), this module checks the equations that
//! the rest of the crate claims to solve:
//!
//! * [`hjb_residual_lqg`] evaluates the diffusive Hamilton–Jacobi–Bellman
//!   residual of the quadratic candidate value on the linear-Gaussian model,
//!   term group by term group;
//! * [`bellman_residual_counting`] assembles the counting-measurement
//!   Bellman–Feller residual from Fréchet derivatives and jump differences;
//! * [`pontryagin_hamiltonian`] is the Legendre–Fenchel transform over a
//!   finite control grid;
//! * [`policy_cost_mc`] / [`policy_cost_mc_lqg`] compare policies on common
//!   random numbers, the empirical side of the verification theorem.

use nalgebra::DVector;
use thiserror::Error;

use crate::filtering::{
    simulate_trajectory, ControlLaw, FilterError, FilterModel, ZERO_INTENSITY,
};
use crate::linalg::{c, CMatrix, RMatrix};
use crate::lqg::{kalman_gain, simulate_closed_loop, CostSpec, GaussianBelief, LinearModel, LqgError, RiccatiPath};
use crate::master::{coherent_control_apply, lindblad_apply_raw, MasterError};
use crate::operators::{DensityMatrix, OperatorError};

/// Weight of the jump-difference (Feller) term in the counting residual.
/// Kept as a named constant so the sensitivity of the residual to this
/// factor is directly measurable.
pub const FELLER_JUMP_FACTOR: f64 = 0.5;

/// Default central-difference step for Fréchet derivatives.
pub const DEFAULT_FRECHET_STEP: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum BellmanError {
    #[error("time {0} is not on the value grid")]
    GridMismatch(f64),
    #[error("paths live on different grids")]
    PathMismatch,
    #[error("control grid is empty")]
    EmptyControls,
    #[error("non-finite evaluation in {0}")]
    NonFinite(&'static str),
    #[error("finite-difference step {0} outside [1e-6, 1e-3]")]
    BadStep(f64),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Lqg(#[from] LqgError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Master(#[from] MasterError),
    #[error(transparent)]
    State(#[from] OperatorError),
}

/// Quadratic candidate value S(t, x, Σ) = xᵀΩ(t)x + (Ω(t), Σ) + α(t) on a
/// uniform grid, together with the frozen right sides of the Ω and α ODEs
/// captured at construction. The live fields `omega`/`alpha` may be
/// perturbed afterwards; the frozen side keeps claiming the original time
/// derivative, which is exactly what makes [`hjb_residual_lqg`] sensitive
/// to such perturbations.
#[derive(Clone, Debug)]
pub struct QuadraticValue {
    pub times: Vec<f64>,
    pub omega: Vec<RMatrix>,
    pub alpha: Vec<f64>,
    omega_dot: Vec<RMatrix>,
    /// (ΩC_f + E_fᵀ)(ΩC_f + E_fᵀ)ᵀ per grid point, frozen.
    gain_square: Vec<RMatrix>,
    /// Tr[Ω(G + F_eF_eᵀ)] per grid point, frozen.
    noise_trace: Vec<f64>,
}

impl QuadraticValue {
    /// Builds the candidate from a solved control Riccati path and the
    /// reference covariance path that α is integrated against (backward
    /// trapezoid from α(T) = 0).
    pub fn from_riccati(
        model: &LinearModel,
        cost: &CostSpec,
        omega_path: &RiccatiPath,
        sigma_ref: &RiccatiPath,
    ) -> Result<Self, BellmanError> {
        if omega_path.times != sigma_ref.times {
            return Err(BellmanError::PathMismatch);
        }
        let n = omega_path.times.len();
        let a_f = &model.a + &model.c_f * &cost.e_f;
        let cct = &model.c_f * model.c_f.transpose();
        let g_plus = &model.g + &model.f_e * model.f_e.transpose();

        let mut omega_dot = Vec::with_capacity(n);
        let mut gain_square = Vec::with_capacity(n);
        let mut noise_trace = Vec::with_capacity(n);
        for w in &omega_path.values {
            let defect = crate::linalg::max_abs_real(&(w - w.transpose()));
            if defect > 1e-10 {
                return Err(BellmanError::Shape(format!("Ω not symmetric, defect {defect:.3e}")));
            }
            omega_dot.push(-&cost.h + w * &a_f + a_f.transpose() * w + w * &cct * w);
            let lt = w * &model.c_f + cost.e_f.transpose();
            gain_square.push(&lt * lt.transpose());
            noise_trace.push((w * &g_plus).trace());
        }
        let integrand: Vec<f64> = (0..n)
            .map(|k| (&gain_square[k] * &sigma_ref.values[k]).trace() + noise_trace[k])
            .collect();
        let mut alpha = vec![0.0; n];
        for k in (0..n - 1).rev() {
            let dt = omega_path.times[k + 1] - omega_path.times[k];
            alpha[k] = alpha[k + 1] + 0.5 * (integrand[k] + integrand[k + 1]) * dt;
        }
        Ok(QuadraticValue {
            times: omega_path.times.clone(),
            omega: omega_path.values.clone(),
            alpha,
            omega_dot,
            gain_square,
            noise_trace,
        })
    }

    pub fn grid_index(&self, t: f64) -> Result<usize, BellmanError> {
        self.times
            .iter()
            .position(|&tk| (tk - t).abs() <= 1e-9 * t.abs().max(1.0))
            .ok_or(BellmanError::GridMismatch(t))
    }

    /// S(t_k, x, Σ).
    pub fn evaluate(&self, k: usize, x: &DVector<f64>, sigma: &RMatrix) -> f64 {
        (x.transpose() * &self.omega[k] * x)[(0, 0)]
            + (&self.omega[k] * sigma).trace()
            + self.alpha[k]
    }
}

/// u = ½(∂ₓS)C_f + x̂E_fᵀ for the quadratic candidate (column convention:
/// u = C_fᵀΩx̂ + E_f x̂); algebraically identical to the optimal-gain law.
pub fn optimal_control_quadratic(
    omega: &RMatrix,
    model: &LinearModel,
    cost: &CostSpec,
    x: &DVector<f64>,
) -> DVector<f64> {
    model.c_f.transpose() * (omega * x) + &cost.e_f * x
}

/// Signed residual of the diffusive HJB equation at (t, x, Σ):
/// −∂S/∂t minus the right side assembled from its five term groups —
/// running cost at the minimizing u, belief drift, covariance flow,
/// innovation quadratic — all evaluated from the (possibly perturbed) live
/// Ω(t), while ∂S/∂t comes from the frozen Riccati/α right sides, so no
/// finite differencing in t enters.
pub fn hjb_residual_lqg(
    value: &QuadraticValue,
    model: &LinearModel,
    cost: &CostSpec,
    t: f64,
    x: &DVector<f64>,
    sigma: &RMatrix,
) -> Result<f64, BellmanError> {
    let k = value.grid_index(t)?;
    if x.len() != model.m || sigma.shape() != (model.m, model.m) {
        return Err(BellmanError::Shape("(x, Σ) must match the model dimension".into()));
    }
    let w = &value.omega[k];

    // minimizing control and running cost
    let u = optimal_control_quadratic(w, model, cost, x);
    let tracking = &u - &cost.e_f * x;
    let h_plus = &cost.h + cost.e_f.transpose() * &cost.e_f;
    let running = tracking.norm_squared()
        + (x.transpose() * &cost.h * x)[(0, 0)]
        + (&h_plus * sigma).trace();

    // drift of the conditional mean against ∂ₓS = 2Ωx
    let drift = -2.0 * (w * x).dot(&(&model.a * x + &model.c_f * &u));

    // covariance flow against ∂S/∂Σ = Ω
    let a_e = &model.a + &model.f_e * &model.b_e;
    let btb = model.b_e.transpose() * &model.b_e;
    let flow_rhs = &model.g - sigma * a_e.transpose() - &a_e * sigma - sigma * &btb * sigma;
    let flow = (w * flow_rhs).trace();

    // innovation quadratic ½(KKᵀ, ∂ₓᵀ∂ₓS) = Tr[ΩKKᵀ]
    let gain = kalman_gain(model, sigma);
    let innovation = (w * &gain * gain.transpose()).trace();

    let rhs = running + drift + flow + innovation;
    let dsdt = (x.transpose() * &value.omega_dot[k] * x)[(0, 0)]
        + (&value.omega_dot[k] * sigma).trace()
        - (&value.gain_square[k] * sigma).trace()
        - value.noise_trace[k];
    Ok(-dsdt - rhs)
}

/// Generalized Gell-Mann basis of traceless Hermitian dim×dim matrices,
/// orthonormal in the Frobenius inner product (dim² − 1 elements).
pub fn traceless_hermitian_basis(dim: usize) -> Vec<CMatrix> {
    let mut basis = Vec::with_capacity(dim * dim - 1);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for j in 0..dim {
        for k in j + 1..dim {
            let mut sym = CMatrix::zeros(dim, dim);
            sym[(j, k)] = c(s, 0.0);
            sym[(k, j)] = c(s, 0.0);
            basis.push(sym);
            let mut asym = CMatrix::zeros(dim, dim);
            asym[(j, k)] = c(0.0, -s);
            asym[(k, j)] = c(0.0, s);
            basis.push(asym);
        }
    }
    for l in 1..dim {
        let norm = 1.0 / ((l * (l + 1)) as f64).sqrt();
        let mut diag = CMatrix::zeros(dim, dim);
        for i in 0..l {
            diag[(i, i)] = c(norm, 0.0);
        }
        diag[(l, l)] = c(-(l as f64) * norm, 0.0);
        basis.push(diag);
    }
    basis
}

/// Central-difference Fréchet gradient of a real functional of the state,
/// assembled in the traceless Hermitian basis under the trace pairing.
/// Perturbed arguments ς ± hτ keep unit trace and Hermiticity but may sit
/// just outside the state cone, so the functional is evaluated on the raw
/// matrix. The returned representative is traceless, which pairs exactly
/// with state differences (themselves traceless).
pub fn frechet_gradient(
    f: &dyn Fn(&CMatrix) -> f64,
    varsigma: &CMatrix,
    h: f64,
) -> Result<CMatrix, BellmanError> {
    if !(1e-6..=1e-3).contains(&h) {
        return Err(BellmanError::BadStep(h));
    }
    let dim = varsigma.nrows();
    let mut grad = CMatrix::zeros(dim, dim);
    for tau in traceless_hermitian_basis(dim) {
        let up = f(&(varsigma + tau.scale(h)));
        let down = f(&(varsigma - tau.scale(h)));
        if !up.is_finite() || !down.is_finite() {
            return Err(BellmanError::NonFinite("frechet_gradient"));
        }
        grad += tau.scale((up - down) / (2.0 * h));
    }
    Ok(grad)
}

/// Second directional derivative ⟨δ⊗δ, ∇⊗∇F⟩ by nested central differences:
/// (F(ς+hδ) − 2F(ς) + F(ς−hδ))/h², exact for quadratic functionals up to
/// rounding and otherwise accurate to O(h²) with an O(ε/h²) rounding floor.
pub fn frechet_hessian_contract(
    f: &dyn Fn(&CMatrix) -> f64,
    varsigma: &CMatrix,
    direction: &CMatrix,
    h: f64,
) -> Result<f64, BellmanError> {
    if !(1e-6..=1e-3).contains(&h) {
        return Err(BellmanError::BadStep(h));
    }
    let up = f(&(varsigma + direction.scale(h)));
    let mid = f(varsigma);
    let down = f(&(varsigma - direction.scale(h)));
    let out = (up - 2.0 * mid + down) / (h * h);
    if !out.is_finite() {
        return Err(BellmanError::NonFinite("frechet_hessian_contract"));
    }
    Ok(out)
}

/// Real trace pairing of two Hermitian matrices.
fn pairing(a: &CMatrix, b: &CMatrix) -> f64 {
    crate::linalg::trace_of_product(a, b).re
}

/// Pontryagin Hamiltonian over a finite control grid:
/// H(q̌, p̌) = max over u ∈ U of ⟨λ_u[q̌], p̌⟩ − ⟨ϱ − q̌, č(u)⟩, with the
/// stationary element ϱ defaulting to 0 and ties resolved toward the lowest
/// control index. Returns (value, argmax index).
#[allow(clippy::too_many_arguments)]
pub fn pontryagin_hamiltonian(
    coupling: &crate::operators::CouplingSet,
    control_channels: &[usize],
    cost_rate: &dyn Fn(&[f64]) -> CMatrix,
    stationary: Option<&CMatrix>,
    q: &CMatrix,
    p: &CMatrix,
    controls: &[Vec<f64>],
) -> Result<(f64, usize), BellmanError> {
    if controls.is_empty() {
        return Err(BellmanError::EmptyControls);
    }
    let dim = coupling.dim;
    if q.shape() != (dim, dim) || p.shape() != (dim, dim) {
        return Err(BellmanError::Shape("q̌ and p̌ must be dim×dim".into()));
    }
    let zero = CMatrix::zeros(dim, dim);
    let rho = stationary.unwrap_or(&zero);
    let mut best = f64::NEG_INFINITY;
    let mut arg = 0;
    for (idx, u) in controls.iter().enumerate() {
        let driven;
        let generator = if u.iter().all(|&v| v == 0.0) {
            coupling
        } else {
            driven = coherent_control_apply(coupling, u, control_channels)?;
            &driven
        };
        let lagrangian = pairing(&(rho - q), &cost_rate(u));
        let val = pairing(&lindblad_apply_raw(generator, q), p) - lagrangian;
        if !val.is_finite() {
            return Err(BellmanError::NonFinite("pontryagin_hamiltonian"));
        }
        if val > best {
            best = val;
            arg = idx;
        }
    }
    Ok((best, arg))
}

/// A real functional of (t, state) with its admissible control grid.
/// Perturbed evaluation points keep unit trace but may leave the cone.
pub struct StateFunctional<'a> {
    pub eval: &'a (dyn Fn(f64, &CMatrix) -> f64 + Sync),
    pub controls: Vec<Vec<f64>>,
}

/// Residual of the counting-measurement Bellman–Feller equation at (t, ς):
///
///   −∂S/∂t + H(q̌(ς), ∇_ςS) − w·Σ_i ν_i(ς)·△ⁱS,
///   △ⁱS = 2(S(αⁱ(ς)) − S(ς) − ⟨αⁱ(ς) − ς, ∇_ςS⟩),
///
/// with q̌(ς) = ϱ − ς, post-jump states αⁱ = ĽςĽ†/ν_i, jump weight
/// w = `feller_factor` (pass [`FELLER_JUMP_FACTOR`] for the printed
/// equation), ∂S/∂t by central differences and ∇_ςS by
/// [`frechet_gradient`]. Channels with ν_i below the intensity floor are
/// skipped — their terms carry the factor ν_i anyway.
#[allow(clippy::too_many_arguments)]
pub fn bellman_residual_counting(
    s: &StateFunctional<'_>,
    model: &FilterModel,
    cost_rate: &dyn Fn(&[f64]) -> CMatrix,
    stationary: Option<&CMatrix>,
    t: f64,
    varsigma: &DensityMatrix,
    h: f64,
    feller_factor: f64,
) -> Result<f64, BellmanError> {
    if !model.diffusive_channels().is_empty() {
        return Err(BellmanError::Shape("counting channels only".into()));
    }
    let coupling = &model.coupling;
    let m = varsigma.matrix();

    let dsdt = ((s.eval)(t + h, m) - (s.eval)(t - h, m)) / (2.0 * h);
    if !dsdt.is_finite() {
        return Err(BellmanError::NonFinite("time derivative"));
    }
    let grad = frechet_gradient(&|x| (s.eval)(t, x), m, h)?;

    let dim = coupling.dim;
    let zero = CMatrix::zeros(dim, dim);
    let rho = stationary.unwrap_or(&zero);
    let q = rho - m;
    if s.controls.is_empty() {
        return Err(BellmanError::EmptyControls);
    }
    let (hamiltonian, _) = pontryagin_hamiltonian(
        coupling,
        model.feedback_channels(),
        cost_rate,
        Some(rho),
        &q,
        &grad,
        &s.controls,
    )?;

    let s_here = (s.eval)(t, m);
    let mut feller = 0.0;
    for &ch in model.counting_channels() {
        let l = &coupling.jump_ops[ch];
        let lrl = l * m * l.adjoint();
        let nu = lrl.trace().re;
        if nu <= ZERO_INTENSITY {
            continue;
        }
        let post = lrl.scale(1.0 / nu);
        let jump_diff = 2.0 * ((s.eval)(t, &post) - s_here - pairing(&(&post - m), &grad));
        feller += nu * jump_diff;
    }
    Ok(-dsdt + hamiltonian - feller_factor * feller)
}

/// Per-policy means and standard errors plus all pairwise differences
/// (entry [i][j] is policy i minus policy j) with their paired standard
/// errors — variance-reduced because every policy saw identical noise.
#[derive(Clone, Debug)]
pub struct PolicyComparison {
    pub means: Vec<f64>,
    pub stderrs: Vec<f64>,
    pub diff_means: Vec<Vec<f64>>,
    pub diff_stderrs: Vec<Vec<f64>>,
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn compare(costs: &[Vec<f64>]) -> PolicyComparison {
    let stats: Vec<(f64, f64)> = costs.iter().map(|c| mean_se(c)).collect();
    let p = costs.len();
    let mut diff_means = vec![vec![0.0; p]; p];
    let mut diff_stderrs = vec![vec![0.0; p]; p];
    for i in 0..p {
        for jj in 0..p {
            let diffs: Vec<f64> =
                costs[i].iter().zip(&costs[jj]).map(|(a, b)| a - b).collect();
            let (dm, dse) = mean_se(&diffs);
            diff_means[i][jj] = dm;
            diff_stderrs[i][jj] = dse;
        }
    }
    PolicyComparison {
        means: stats.iter().map(|s| s.0).collect(),
        stderrs: stats.iter().map(|s| s.1).collect(),
        diff_means,
        diff_stderrs,
    }
}

/// Monte-Carlo cost comparison of feedback policies on a quantum filtering
/// model. Every policy is run on the same trajectory keys (common random
/// numbers); the running cost is accumulated by a left Riemann sum over the
/// recorded grid and the terminal cost evaluated on the final state.
#[allow(clippy::too_many_arguments)]
pub fn policy_cost_mc(
    model: &FilterModel,
    policies: &[&ControlLaw<'_>],
    running: &dyn Fn(f64, &DensityMatrix, &[f64]) -> f64,
    terminal: &dyn Fn(&DensityMatrix) -> f64,
    state0: &DensityMatrix,
    horizon: f64,
    dt: f64,
    seed: u64,
    n: usize,
) -> Result<PolicyComparison, BellmanError> {
    if policies.is_empty() {
        return Err(BellmanError::EmptyControls);
    }
    let mut costs = vec![Vec::with_capacity(n); policies.len()];
    for (p, law) in policies.iter().enumerate() {
        for traj in 0..n {
            let record = simulate_trajectory(model, law, state0, horizon, dt, seed, traj as u64)?;
            let mut total = 0.0;
            for k in 0..record.steps() {
                let u_k: Vec<f64> = record.controls.iter().map(|ch| ch[k]).collect();
                total += running(record.times[k], &record.states[k], &u_k) * dt;
            }
            total += terminal(record.last_state());
            costs[p].push(total);
        }
    }
    Ok(compare(&costs))
}

/// The linear-Gaussian counterpart: one closed-loop run per gain path, all
/// on the same seed.
#[allow(clippy::too_many_arguments)]
pub fn policy_cost_mc_lqg(
    model: &LinearModel,
    cost: &CostSpec,
    belief0: &GaussianBelief,
    sigma_path: &RiccatiPath,
    gain_paths: &[Vec<RMatrix>],
    dt: f64,
    seed: u64,
    n: usize,
) -> Result<PolicyComparison, BellmanError> {
    if gain_paths.is_empty() {
        return Err(BellmanError::EmptyControls);
    }
    let mut costs = Vec::with_capacity(gain_paths.len());
    for gains in gain_paths {
        let out = simulate_closed_loop(model, cost, belief0, sigma_path, gains, dt, seed, n)?;
        costs.push(out.costs);
    }
    Ok(compare(&costs))
}
