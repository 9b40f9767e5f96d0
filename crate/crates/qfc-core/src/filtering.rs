//! Stochastic integration of the diffusive and counting filtering equations.
//!
//! A [`FilterModel`] splits the noise channels of a [`CouplingSet`] into
//! diffusive estimation channels I_W (homodyne-type records), counting
//! estimation channels I_N (photodetection-type records), and feedback
//! channels I_f reserved for coherent actuation — pairwise disjoint.
//!
//! Records are synthesized through the innovation representation of the
//! output: for a diffusive channel the physical record increment is
//! dY = ⟨Ľ+Ľ†⟩dt + dŴ with dŴ a standard Wiener increment; for a counting
//! channel dN is Bernoulli at the conditional intensity ν(ς)dt. This is
//! exactly the filter's own output statistics, so no field simulation is
//! needed. The innovation stored in the record is *recomputed* as
//! dŴ = dY − ⟨Ľ+Ľ†⟩dt, which makes that identity hold bitwise.
//!
//! The scheme is Euler–Maruyama (strong order ½) with [`normalize_and_clip`]
//! after every step; dt refinement is the convergence knob. All randomness
//! comes from the counter-based [`Key`] stream keyed by
//! (seed, trajectory, step, channel), so every trajectory is a pure function
//! of its key material: ensembles are bit-identical for any worker count,
//! batch size, or execution order.

use rayon::prelude::*;
use thiserror::Error;

use crate::linalg::{CMatrix, RMatrix};
use crate::master::{
    coherent_control_apply, lindblad_apply_raw, ControlSignal, MasterError, INTEGRATOR_CLIP_TOL,
};
use crate::operators::{normalize_and_clip, pair, CouplingSet, DensityMatrix, OperatorError};
use crate::rng::Key;

/// Hard ceiling on ν·dt per counting channel per step; beyond it the
/// Bernoulli thinning stops being a faithful discretization.
pub const MAX_RATE_STEP: f64 = 0.1;

/// A recorded jump on a channel whose intensity is below this is treated as
/// an inconsistent record rather than an event.
pub const ZERO_INTENSITY: f64 = 1e-14;

/// Clip tolerance for the stochastic steps. An Euler–Maruyama update pushes
/// an eigenvalue of a near-pure state negative by ~ξ²·dt, where ξ is the
/// unit normal behind the increment (the linear term vanishes exactly on the
/// kernel of the state, so the dip is second order). Ensembles of 10⁷ steps
/// routinely see |ξ| beyond 5, so legitimate dips reach tens of dt; the
/// tolerance follows that scale, with a √dt floor that keeps headroom for
/// strongly coupled models at small dt, and is capped at half the trace —
/// losing more than that in one step is a blow-up at any dt and surfaces as
/// NotPositive.
pub fn stochastic_clip_tol(dt: f64) -> f64 {
    (50.0 * dt).max(0.5 * dt.sqrt()).max(INTEGRATOR_CLIP_TOL).min(0.5)
}

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("bad channel assignment: {0}")]
    BadChannels(String),
    #[error("increment row has {got} entries for {want} channels")]
    IncrementShape { got: usize, want: usize },
    #[error("jump recorded on channel {channel} with intensity {intensity:.3e} below 1e-14")]
    ZeroIntensityJump { channel: usize, intensity: f64 },
    #[error("ν·dt = {nu_dt:.3e} on channel {channel} exceeds 0.1; shrink dt")]
    RateStepTooLarge { channel: usize, nu_dt: f64 },
    #[error("step size must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("step {step} (t = {t:.6}): {source}")]
    AtStep { step: usize, t: f64, source: Box<FilterError> },
    #[error("records have mismatched time grids")]
    GridMismatch,
    #[error("cannot average an empty ensemble")]
    EmptyEnsemble,
    #[error(transparent)]
    Master(#[from] MasterError),
    #[error(transparent)]
    State(#[from] OperatorError),
}

/// A coupling set with its channels assigned to measurement and actuation
/// roles. I_W, I_N and I_f are pairwise disjoint.
#[derive(Clone, Debug)]
pub struct FilterModel {
    pub coupling: CouplingSet,
    diffusive: Vec<usize>,
    counting: Vec<usize>,
    feedback: Vec<usize>,
}

impl FilterModel {
    pub fn new(
        coupling: CouplingSet,
        diffusive: Vec<usize>,
        counting: Vec<usize>,
        feedback: Vec<usize>,
    ) -> Result<Self, FilterError> {
        let d = coupling.channels();
        let mut roles = vec![None::<&str>; d];
        for (name, set) in
            [("diffusive", &diffusive), ("counting", &counting), ("feedback", &feedback)]
        {
            for &i in set {
                if i >= d {
                    return Err(FilterError::BadChannels(format!(
                        "{name} channel {i} out of range for {d} channels"
                    )));
                }
                if let Some(prev) = roles[i] {
                    return Err(FilterError::BadChannels(format!(
                        "channel {i} assigned both {prev} and {name}"
                    )));
                }
                roles[i] = Some(name);
            }
        }
        Ok(FilterModel { coupling, diffusive, counting, feedback })
    }

    pub fn diffusive_channels(&self) -> &[usize] {
        &self.diffusive
    }
    pub fn counting_channels(&self) -> &[usize] {
        &self.counting
    }
    pub fn feedback_channels(&self) -> &[usize] {
        &self.feedback
    }
}

/// One simulated trajectory: the grid, the filter states along it, and the
/// per-channel record columns (length = number of steps = times.len() − 1).
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    pub diffusive_channels: Vec<usize>,
    pub counting_channels: Vec<usize>,
    pub feedback_channels: Vec<usize>,
    /// Measurement increments dY, indexed [diffusive position][step].
    pub outputs: Vec<Vec<f64>>,
    /// Innovations dŴ = dY − ⟨Ľ+Ľ†⟩dt (bitwise, by construction).
    pub innovations: Vec<Vec<f64>>,
    /// Event indicators dN ∈ {0,1}, indexed [counting position][step].
    pub events: Vec<Vec<u8>>,
    /// Actuation rows applied on [t_k, t_{k+1}), indexed [feedback pos][step].
    pub controls: Vec<Vec<f64>>,
    pub seed: u64,
    pub trajectory_index: u64,
}

impl TrajectoryRecord {
    fn empty(model: &FilterModel, s0: &DensityMatrix, seed: u64, index: u64) -> Self {
        TrajectoryRecord {
            times: vec![0.0],
            states: vec![s0.clone()],
            diffusive_channels: model.diffusive.clone(),
            counting_channels: model.counting.clone(),
            feedback_channels: model.feedback.clone(),
            outputs: vec![Vec::new(); model.diffusive.len()],
            innovations: vec![Vec::new(); model.diffusive.len()],
            events: vec![Vec::new(); model.counting.len()],
            controls: vec![Vec::new(); model.feedback.len()],
            seed,
            trajectory_index: index,
        }
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn last_state(&self) -> &DensityMatrix {
        self.states.last().expect("records contain the initial state")
    }

    /// Grid times of the events on the given counting-channel position.
    pub fn jump_times(&self, counting_pos: usize) -> Vec<f64> {
        self.events[counting_pos]
            .iter()
            .enumerate()
            .filter(|(_, &e)| e == 1)
            .map(|(k, _)| self.times[k + 1])
            .collect()
    }
}

/// What the filter sees when a feedback law is evaluated at a grid point:
/// the current (past-measurable) filter state and the record strictly
/// before it. Nothing from the future of the trajectory is reachable here.
pub struct StepContext<'a> {
    pub t: f64,
    pub step: usize,
    pub state: &'a DensityMatrix,
    pub past: &'a TrajectoryRecord,
}

/// Actuation supplied to [`simulate_trajectory`].
pub enum ControlLaw<'a> {
    /// No actuation (u ≡ 0); any feedback channels idle.
    Off,
    /// Open-loop signal; its channels must equal the model's I_f.
    Signal(&'a ControlSignal),
    /// Causal feedback: one value per feedback channel, computed from the
    /// past record only.
    Feedback(&'a (dyn Fn(&StepContext<'_>) -> Vec<f64> + Sync)),
}

/// The nonlinear fluctuation coefficient of a diffusive channel:
/// δ(ς) = ςĽ† + Ľς − ⟨Ľ+Ľ†⟩ς. Traceless for any state.
pub fn fluctuation(state: &DensityMatrix, l: &CMatrix) -> CMatrix {
    let mean = pair(state, &(l + l.adjoint())).expect("dimension checked by caller").re;
    let m = state.matrix();
    m * l.adjoint() + l * m - m.scale(mean)
}

/// Shared Euler–Maruyama core: ς + λ(ς)dt + diffusive innovation terms +
/// counting branch terms, then normalize. `diffusive`/`counting` carry
/// (channel, increment) pairs; the increments are innovations dŴ and event
/// flags respectively.
fn filter_update(
    c: &CouplingSet,
    state: &DensityMatrix,
    diffusive: &[(usize, f64)],
    counting: &[(usize, bool)],
    dt: f64,
) -> Result<DensityMatrix, FilterError> {
    let s = state.matrix();
    let mut m = s + lindblad_apply_raw(c, s).scale(dt);
    for &(i, dw) in diffusive {
        let fluct = fluctuation(state, &c.jump_ops[i]);
        debug_assert!(fluct.trace().norm() < 1e-12, "fluctuation coefficient must be traceless");
        m += fluct.scale(dw);
    }
    for &(i, fired) in counting {
        let l = &c.jump_ops[i];
        let jumped = l * s * l.adjoint();
        let nu = jumped.trace().re;
        if fired {
            // (α(ς) − ς)(1 − ν dt) with α = ĽςĽ†/ν
            if nu < ZERO_INTENSITY {
                return Err(FilterError::ZeroIntensityJump { channel: i, intensity: nu });
            }
            m += (jumped.scale(1.0 / nu) - s).scale(1.0 - nu * dt);
        } else {
            // (α(ς) − ς)(−ν dt), multiplied through so ν = 0 needs no branch
            m -= (jumped - s.scale(nu)).scale(dt);
        }
    }
    Ok(normalize_and_clip(&m, stochastic_clip_tol(dt))?)
}

fn check_channels(c: &CouplingSet, channels: &[usize], n_inc: usize) -> Result<(), FilterError> {
    if n_inc != channels.len() {
        return Err(FilterError::IncrementShape { got: n_inc, want: channels.len() });
    }
    for &i in channels {
        if i >= c.channels() {
            return Err(FilterError::BadChannels(format!(
                "channel {i} out of range for {} channels",
                c.channels()
            )));
        }
    }
    Ok(())
}

/// One Euler–Maruyama step of the diffusive filtering equation
/// ς′ = ς + λ(ς)dt + Σ_i δ^i(ς)dŴ_i, normalized and clipped.
pub fn diffusive_step(
    state: &DensityMatrix,
    c: &CouplingSet,
    channels: &[usize],
    dw: &[f64],
    dt: f64,
) -> Result<DensityMatrix, FilterError> {
    check_channels(c, channels, dw.len())?;
    if !(dt > 0.0 && dt.is_finite()) || dw.iter().any(|w| !w.is_finite()) {
        return Err(FilterError::BadStep(dt));
    }
    let pairs: Vec<(usize, f64)> = channels.iter().copied().zip(dw.iter().copied()).collect();
    filter_update(c, state, &pairs, &[], dt)
}

/// One step of the counting filtering equation
/// ς′ = ς + λ(ς)dt + Σ_i (α^i(ς) − ς)(dN_i − ν_i(ς)dt), normalized.
pub fn counting_step(
    state: &DensityMatrix,
    c: &CouplingSet,
    channels: &[usize],
    dn: &[bool],
    dt: f64,
) -> Result<DensityMatrix, FilterError> {
    check_channels(c, channels, dn.len())?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(FilterError::BadStep(dt));
    }
    let pairs: Vec<(usize, bool)> = channels.iter().copied().zip(dn.iter().copied()).collect();
    filter_update(c, state, &[], &pairs, dt)
}

/// Simulates one trajectory of the controlled filter over [0, T] on the
/// uniform dt grid, synthesizing the record through the innovation
/// representation. The trajectory is a pure function of
/// (model, law, ς0, T, dt, seed, index).
pub fn simulate_trajectory(
    model: &FilterModel,
    law: &ControlLaw<'_>,
    s0: &DensityMatrix,
    horizon: f64,
    dt: f64,
    seed: u64,
    index: u64,
) -> Result<TrajectoryRecord, FilterError> {
    if s0.dim() != model.coupling.dim {
        return Err(FilterError::Master(MasterError::DimensionMismatch {
            state: s0.dim(),
            coupling: model.coupling.dim,
        }));
    }
    if !(dt > 0.0 && dt.is_finite() && horizon >= 0.0) {
        return Err(FilterError::BadStep(dt));
    }
    if let ControlLaw::Signal(sig) = law {
        if sig.channels() != model.feedback {
            return Err(FilterError::BadChannels(format!(
                "signal channels {:?} differ from feedback channels {:?}",
                sig.channels(),
                model.feedback
            )));
        }
    }

    let steps = (horizon / dt).round() as usize;
    let mut rec = TrajectoryRecord::empty(model, s0, seed, index);
    let mut state = s0.clone();
    // tag every state-dependent failure with the step it happened on
    let at_step = |k: usize, e: FilterError| FilterError::AtStep {
        step: k,
        t: k as f64 * dt,
        source: Box::new(e),
    };
    for k in 0..steps {
        let t = k as f64 * dt;

        // causal actuation: the law sees the state at t_k and the record so far
        let u = match law {
            ControlLaw::Off => Vec::new(),
            ControlLaw::Signal(sig) => sig.at(t),
            ControlLaw::Feedback(f) => {
                let u = f(&StepContext { t, step: k, state: &state, past: &rec });
                if u.len() != model.feedback.len() {
                    return Err(FilterError::IncrementShape {
                        got: u.len(),
                        want: model.feedback.len(),
                    });
                }
                u
            }
        };
        let controlled;
        let c_step = if u.is_empty() {
            &model.coupling
        } else {
            controlled = coherent_control_apply(&model.coupling, &u, &model.feedback)
                .map_err(|e| at_step(k, e.into()))?;
            &controlled
        };

        // synthesize the record increments for this step
        let sqrt_dt = dt.sqrt();
        let mut diff_inc = Vec::with_capacity(model.diffusive.len());
        for (pos, &i) in model.diffusive.iter().enumerate() {
            let key = Key::new(seed, index, k as u64, i as u64);
            let l = &c_step.jump_ops[i];
            let mean = pair(&state, &(l + l.adjoint()))?.re;
            let dy = mean * dt + sqrt_dt * key.normal(0);
            let dw = dy - mean * dt; // recomputed: the record identity is bitwise
            rec.outputs[pos].push(dy);
            rec.innovations[pos].push(dw);
            diff_inc.push((i, dw));
        }
        let mut count_inc = Vec::with_capacity(model.counting.len());
        for (pos, &i) in model.counting.iter().enumerate() {
            let key = Key::new(seed, index, k as u64, i as u64);
            let l = &c_step.jump_ops[i];
            let nu = (l * state.matrix() * l.adjoint()).trace().re.max(0.0);
            if nu * dt > MAX_RATE_STEP {
                return Err(at_step(k, FilterError::RateStepTooLarge { channel: i, nu_dt: nu * dt }));
            }
            let fired = key.bernoulli(nu * dt, 0);
            rec.events[pos].push(u8::from(fired));
            count_inc.push((i, fired));
        }
        for (pos, &ui) in u.iter().enumerate() {
            rec.controls[pos].push(ui);
        }

        state = filter_update(c_step, &state, &diff_inc, &count_inc, dt)
            .map_err(|e| at_step(k, e))?;
        rec.times.push((k + 1) as f64 * dt);
        rec.states.push(state.clone());
    }
    Ok(rec)
}

/// Pointwise ensemble statistics of the state path.
#[derive(Clone, Debug)]
pub struct EnsembleSummary {
    pub times: Vec<f64>,
    pub n: usize,
    pub seed: u64,
    pub mean: Vec<CMatrix>,
    /// Per-entry standard error of the real parts (zero when n < 2).
    pub stderr_re: Vec<RMatrix>,
    /// Per-entry standard error of the imaginary parts.
    pub stderr_im: Vec<RMatrix>,
}

impl EnsembleSummary {
    /// Largest per-entry standard error anywhere on the path.
    pub fn max_stderr(&self) -> f64 {
        self.stderr_re
            .iter()
            .chain(self.stderr_im.iter())
            .map(|m| m.max())
            .fold(0.0, f64::max)
    }
}

/// Streaming Welford accumulator over a state path, entrywise on re and im.
struct PathMoments {
    n: u64,
    mean_re: Vec<RMatrix>,
    mean_im: Vec<RMatrix>,
    m2_re: Vec<RMatrix>,
    m2_im: Vec<RMatrix>,
}

impl PathMoments {
    fn new(grid_len: usize, dim: usize) -> Self {
        let zeros = vec![RMatrix::zeros(dim, dim); grid_len];
        PathMoments {
            n: 0,
            mean_re: zeros.clone(),
            mean_im: zeros.clone(),
            m2_re: zeros.clone(),
            m2_im: zeros,
        }
    }

    fn update(&mut self, states: &[DensityMatrix]) {
        self.n += 1;
        let n = self.n as f64;
        for (k, s) in states.iter().enumerate() {
            let m = s.matrix();
            for r in 0..m.nrows() {
                for c in 0..m.ncols() {
                    let (re, im) = (m[(r, c)].re, m[(r, c)].im);
                    let d_re = re - self.mean_re[k][(r, c)];
                    let d_im = im - self.mean_im[k][(r, c)];
                    self.mean_re[k][(r, c)] += d_re / n;
                    self.mean_im[k][(r, c)] += d_im / n;
                    self.m2_re[k][(r, c)] += d_re * (re - self.mean_re[k][(r, c)]);
                    self.m2_im[k][(r, c)] += d_im * (im - self.mean_im[k][(r, c)]);
                }
            }
        }
    }

    fn finish(self, times: Vec<f64>, seed: u64) -> EnsembleSummary {
        let n = self.n as usize;
        let sem = |m2: &RMatrix| {
            if n < 2 {
                RMatrix::zeros(m2.nrows(), m2.ncols())
            } else {
                m2.map(|v| (v / (self.n * (self.n - 1)) as f64).sqrt())
            }
        };
        let stderr_re = self.m2_re.iter().map(&sem).collect();
        let stderr_im = self.m2_im.iter().map(&sem).collect();
        let mean = self
            .mean_re
            .iter()
            .zip(&self.mean_im)
            .map(|(re, im)| {
                CMatrix::from_fn(re.nrows(), re.ncols(), |r, c| {
                    num_complex::Complex64::new(re[(r, c)], im[(r, c)])
                })
            })
            .collect();
        EnsembleSummary { times, n, seed, mean, stderr_re, stderr_im }
    }
}

/// Pointwise matrix mean and per-entry standard errors of finished records.
pub fn ensemble_average(records: &[TrajectoryRecord]) -> Result<EnsembleSummary, FilterError> {
    let first = records.first().ok_or(FilterError::EmptyEnsemble)?;
    let mut acc = PathMoments::new(first.times.len(), first.states[0].dim());
    for rec in records {
        if rec.times != first.times {
            return Err(FilterError::GridMismatch);
        }
        acc.update(&rec.states);
    }
    Ok(acc.finish(first.times.clone(), first.seed))
}

#[derive(Clone, Copy, Debug)]
pub struct EnsembleOptions {
    /// Trajectories simulated (possibly in parallel) before being folded
    /// into the running statistics and dropped. Affects memory only.
    pub batch_size: usize,
}

impl Default for EnsembleOptions {
    fn default() -> Self {
        EnsembleOptions { batch_size: 256 }
    }
}

/// Runs `n_traj` trajectories with indices 0..n_traj, streaming them through
/// the ensemble statistics in index order (bit-identical results for any
/// worker count or batch size) and keeping only `project`'s view of each
/// record. Trajectories within a batch run on the rayon pool.
pub fn run_ensemble<P, F>(
    model: &FilterModel,
    law: &ControlLaw<'_>,
    s0: &DensityMatrix,
    horizon: f64,
    dt: f64,
    seed: u64,
    n_traj: usize,
    project: F,
    opts: EnsembleOptions,
) -> Result<(EnsembleSummary, Vec<P>), FilterError>
where
    F: Fn(&TrajectoryRecord) -> P + Sync,
    P: Send,
{
    if n_traj == 0 {
        return Err(FilterError::EmptyEnsemble);
    }
    let steps = (horizon / dt).round() as usize;
    let mut acc = PathMoments::new(steps + 1, s0.dim());
    let mut times = None;
    let mut projections = Vec::with_capacity(n_traj);
    let batch = opts.batch_size.max(1);
    let mut start = 0usize;
    while start < n_traj {
        let end = (start + batch).min(n_traj);
        let results: Vec<Result<(Vec<DensityMatrix>, Vec<f64>, P), FilterError>> = (start..end)
            .into_par_iter()
            .map(|i| {
                let rec = simulate_trajectory(model, law, s0, horizon, dt, seed, i as u64)?;
                let p = project(&rec);
                Ok((rec.states, rec.times, p))
            })
            .collect();
        for r in results {
            let (states, rec_times, p) = r?;
            match &times {
                None => times = Some(rec_times),
                Some(t) => {
                    if *t != rec_times {
                        return Err(FilterError::GridMismatch);
                    }
                }
            }
            acc.update(&states);
            projections.push(p);
        }
        start = end;
    }
    let times = times.expect("n_traj > 0");
    Ok((acc.finish(times, seed), projections))
}
