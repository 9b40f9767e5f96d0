//! Deterministic Lindblad master-equation evolution.
//!
//! This module is the deterministic backbone of the toolkit: the generator
//! λ(ς) evaluated from a [`CouplingSet`], a fixed-step RK4 integrator whose
//! grid is shared with the stochastic integrators (so ensemble-vs-master
//! comparisons are exact in dt), a vectorized-superoperator route with a
//! matrix exponential for oracle use, and coherent control, which enters the
//! dynamics purely as a modification of (H, Ľ).

use num_complex::Complex64;
use thiserror::Error;

use crate::linalg::{cr, CMatrix};
use crate::operators::{commutator, normalize_and_clip, CouplingSet, DensityMatrix, OperatorError};

/// Fixed-step integrators require dt ≤ `STABILITY_FACTOR` / ‖generator‖₂.
pub const STABILITY_FACTOR: f64 = 0.1;

/// Eigenvalue clip tolerance used between integrator steps. Dips below zero
/// by more than this indicate a step far beyond the stability bound.
pub const INTEGRATOR_CLIP_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum MasterError {
    #[error("state dimension {state} does not match coupling dimension {coupling}")]
    DimensionMismatch { state: usize, coupling: usize },
    #[error("step size must be positive and finite, got {0}")]
    BadStep(f64),
    #[error(
        "dt = {dt:.3e} exceeds the stability bound {bound:.3e} = 0.1/‖generator‖₂; \
         shrink dt or set StepPolicy::override_stability_bound"
    )]
    StepExceedsStabilityBound { dt: f64, bound: f64 },
    #[error("control row has {values} values for {channels} feedback channels")]
    ControlShape { values: usize, channels: usize },
    #[error("feedback channel {0} out of range or repeated")]
    ControlChannel(usize),
    #[error("step {step} (t = {t:.6}): {source}")]
    AtStep { step: usize, t: f64, source: Box<MasterError> },
    #[error(transparent)]
    State(#[from] OperatorError),
}

/// Open-loop control law: a real row u(t), one entry per feedback channel.
/// Sample paths are expected to be piecewise continuous (càdlàg); the
/// integrators only ever evaluate it at grid points.
pub struct ControlSignal {
    channels: Vec<usize>,
    values: Box<dyn Fn(f64) -> Vec<f64> + Send + Sync>,
}

impl ControlSignal {
    pub fn new(
        channels: Vec<usize>,
        values: impl Fn(f64) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        ControlSignal { channels, values: Box::new(values) }
    }

    /// Constant row on the given channels.
    pub fn constant(channels: Vec<usize>, u: Vec<f64>) -> Self {
        assert_eq!(channels.len(), u.len(), "one control value per channel");
        Self::new(channels, move |_| u.clone())
    }

    /// No actuation at all.
    pub fn off() -> Self {
        Self::new(Vec::new(), |_| Vec::new())
    }

    pub fn channels(&self) -> &[usize] {
        &self.channels
    }

    /// The control row at time t; length always matches `channels()`.
    pub fn at(&self, t: f64) -> Vec<f64> {
        let u = (self.values)(t);
        assert_eq!(u.len(), self.channels.len(), "control row length changed over time");
        u
    }
}

impl std::fmt::Debug for ControlSignal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ControlSignal").field("channels", &self.channels).finish_non_exhaustive()
    }
}

/// λ(ς) = Σ_i Ľ_iςĽ_i† − ½{Ľ_i†Ľ_i, ς} − (i/ħ)[H, ς]. Hermitian and
/// traceless (within 1e-11) for any state.
pub fn lindblad_apply(c: &CouplingSet, state: &DensityMatrix) -> Result<CMatrix, MasterError> {
    if state.dim() != c.dim {
        return Err(MasterError::DimensionMismatch { state: state.dim(), coupling: c.dim });
    }
    Ok(lindblad_apply_raw(c, state.matrix()))
}

/// The same drift on a raw matrix; used by the integrators between
/// normalization points, where intermediate stage values are not states.
/// Panics on shape mismatch (callers validate dimensions).
pub fn lindblad_apply_raw(c: &CouplingSet, m: &CMatrix) -> CMatrix {
    let comm = commutator(&c.hamiltonian, m).expect("dimension checked by caller");
    let mut out = comm * Complex64::new(0.0, -1.0 / c.hbar);
    for l in &c.jump_ops {
        let ld = l.adjoint();
        let ldl = &ld * l;
        out += l * m * ld - (&ldl * m + m * ldl).scale(0.5);
    }
    out
}

/// States sampled on the uniform grid t_k = k·dt.
#[derive(Clone, Debug)]
pub struct StatePath {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
}

impl StatePath {
    pub fn last(&self) -> &DensityMatrix {
        self.states.last().expect("paths contain at least the initial state")
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct StepPolicy {
    /// Accept dt beyond 0.1/‖generator‖₂. The integrator then degrades
    /// gracefully until clipping fails with NotPositive.
    pub override_stability_bound: bool,
}

/// Classical RK4 on the matrix ODE dς/dt = λ(ς), with [`normalize_and_clip`]
/// after every step. The horizon is rounded to a whole number of steps.
pub fn integrate_master(
    c: &CouplingSet,
    s0: &DensityMatrix,
    horizon: f64,
    dt: f64,
) -> Result<StatePath, MasterError> {
    integrate_master_with(c, s0, horizon, dt, StepPolicy::default())
}

pub fn integrate_master_with(
    c: &CouplingSet,
    s0: &DensityMatrix,
    horizon: f64,
    dt: f64,
    policy: StepPolicy,
) -> Result<StatePath, MasterError> {
    if s0.dim() != c.dim {
        return Err(MasterError::DimensionMismatch { state: s0.dim(), coupling: c.dim });
    }
    if !(dt > 0.0 && dt.is_finite() && horizon >= 0.0) {
        return Err(MasterError::BadStep(dt));
    }
    if !policy.override_stability_bound {
        let bound = STABILITY_FACTOR / generator_norm(c).max(f64::MIN_POSITIVE);
        if dt > bound {
            return Err(MasterError::StepExceedsStabilityBound { dt, bound });
        }
    }

    let steps = (horizon / dt).round() as usize;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    times.push(0.0);
    states.push(s0.clone());
    let mut m = s0.matrix().clone();
    for k in 0..steps {
        m = rk4_step(c, &m, dt);
        let state = normalize_and_clip(&m, INTEGRATOR_CLIP_TOL).map_err(|e| {
            MasterError::AtStep { step: k, t: k as f64 * dt, source: Box::new(e.into()) }
        })?;
        m = state.matrix().clone();
        times.push((k + 1) as f64 * dt);
        states.push(state);
    }
    Ok(StatePath { times, states })
}

fn rk4_step(c: &CouplingSet, m: &CMatrix, dt: f64) -> CMatrix {
    let k1 = lindblad_apply_raw(c, m);
    let k2 = lindblad_apply_raw(c, &(m + k1.scale(0.5 * dt)));
    let k3 = lindblad_apply_raw(c, &(m + k2.scale(0.5 * dt)));
    let k4 = lindblad_apply_raw(c, &(m + k3.scale(dt)));
    m + (k1 + k2.scale(2.0) + k3.scale(2.0) + k4).scale(dt / 6.0)
}

/// Matrix of the generator acting on column-major vectorized states, built
/// from vec(AXB) = (Bᵀ ⊗ A)vec(X).
pub fn superoperator(c: &CouplingSet) -> CMatrix {
    let n = c.dim;
    let id = CMatrix::identity(n, n);
    let mut m = (id.kronecker(&c.hamiltonian) - c.hamiltonian.transpose().kronecker(&id))
        * Complex64::new(0.0, -1.0 / c.hbar);
    for l in &c.jump_ops {
        let ldl = l.adjoint() * l;
        m += l.conjugate().kronecker(l);
        m -= (id.kronecker(&ldl) + ldl.transpose().kronecker(&id)).scale(0.5);
    }
    m
}

/// Spectral norm of the vectorized generator; the integrator stability bound
/// is 0.1 over this.
pub fn generator_norm(c: &CouplingSet) -> f64 {
    superoperator(c).singular_values().max()
}

/// exp(t·generator) applied to ς0 through the vectorized superoperator.
/// Dense O(dim⁶) — an oracle for integrator tests, not an integrator.
pub fn propagate_exact(
    c: &CouplingSet,
    s0: &DensityMatrix,
    t: f64,
) -> Result<DensityMatrix, MasterError> {
    if s0.dim() != c.dim {
        return Err(MasterError::DimensionMismatch { state: s0.dim(), coupling: c.dim });
    }
    let n = c.dim;
    let prop = (superoperator(c) * cr(t)).exp();
    let v = nalgebra::DVector::from_column_slice(s0.matrix().as_slice());
    let w = prop * v;
    let m = CMatrix::from_column_slice(n, n, w.as_slice());
    Ok(normalize_and_clip(&m, INTEGRATOR_CLIP_TOL)?)
}

/// Coherent actuation on the feedback channels: the controlled couplings are
///
///   H_u = H₀ − Σ_{i∈I_f} u_i (Ľ_i + Ľ_i†)/2,   Ľ_u^i = Ľ₀^i − (i/ħ)u_i.
///
/// In the adjoint-coupling convention K = −Ľ this is the substitution
/// H_u = H₀ + Σ u_i·Re K₀^i, K_u^i = K₀^i + (i/ħ)u_i: a drive enters as a
/// Hamiltonian tilt plus a constant shift of the jump operator. Channels not
/// listed — and every channel when its u_i is zero — are bitwise unchanged.
pub fn coherent_control_apply(
    c: &CouplingSet,
    u: &[f64],
    feedback_channels: &[usize],
) -> Result<CouplingSet, MasterError> {
    if u.len() != feedback_channels.len() {
        return Err(MasterError::ControlShape {
            values: u.len(),
            channels: feedback_channels.len(),
        });
    }
    let mut h = c.hamiltonian.clone();
    let mut jumps = c.jump_ops.clone();
    let mut seen = vec![false; c.channels()];
    for (&i, &ui) in feedback_channels.iter().zip(u) {
        if i >= c.channels() || seen[i] {
            return Err(MasterError::ControlChannel(i));
        }
        seen[i] = true;
        if ui == 0.0 {
            continue;
        }
        let l = &c.jump_ops[i];
        h -= (l + l.adjoint()).scale(0.5 * ui);
        let shift = CMatrix::identity(c.dim, c.dim) * Complex64::new(0.0, ui / c.hbar);
        jumps[i] = l - shift;
    }
    CouplingSet::new(h, jumps, c.scattering.clone(), c.hbar).map_err(Into::into)
}
