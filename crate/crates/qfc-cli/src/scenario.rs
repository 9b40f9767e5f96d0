//! Scenario files: the key–value schema, parsing, and validation.
//!
//! A scenario is a TOML document with a `kind` and up to five blocks:
//! `model`, `numerics`, `cost`, `initial`, `output`. Unknown keys are hard
//! errors — a typo in a physics parameter must never run silently. All
//! semantic problems are collected and reported together, each with the
//! key path it concerns.
//!
//! Matrices are written as arrays of rows; an entry is either a plain
//! number or a `[re, im]` pair:
//!
//! ```toml
//! hamiltonian = [[0.0, [0.0, -0.5]], [[0.0, 0.5], 0.0]]
//! ```

use std::fmt;

use nalgebra::DVector;
use serde::Deserialize;

use qfc_core::filtering::FilterModel;
use qfc_core::linalg::{c, CMatrix, RMatrix};
use qfc_core::lqg::{derive_matrices, free_particle_model, CostSpec, GaussianBelief, LinearModel};
use qfc_core::operators::{normalize_and_clip, CouplingSet, DensityMatrix};

pub const DEFAULT_HBAR: f64 = 1.0;
pub const DEFAULT_CLIP_TOL: f64 = 1e-10;
pub const DEFAULT_GAP_TOL: f64 = 1e-8;
pub const DEFAULT_RESIDUAL_TOL: f64 = 1e-6;
pub const DEFAULT_UNITARITY_TOL: f64 = 1e-10;
pub const DEFAULT_CHECK_POINTS: usize = 100;
pub const DEFAULT_SAMPLE_TRAJECTORIES: usize = 3;

/// One validation problem: the key path it concerns plus the reason.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScenarioError {
    pub path: String,
    pub reason: String,
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.reason)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Master,
    FilterDiffusive,
    FilterJump,
    LqgRun,
    DualityCheck,
    BellmanCheck,
    ItoCheck,
}

pub const KIND_NAMES: [&str; 7] = [
    "master",
    "filter-diffusive",
    "filter-jump",
    "lqg-run",
    "duality-check",
    "bellman-check",
    "ito-check",
];

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Master => "master",
            Kind::FilterDiffusive => "filter-diffusive",
            Kind::FilterJump => "filter-jump",
            Kind::LqgRun => "lqg-run",
            Kind::DualityCheck => "duality-check",
            Kind::BellmanCheck => "bellman-check",
            Kind::ItoCheck => "ito-check",
        }
    }

    pub fn from_name(name: &str) -> Option<Kind> {
        match name {
            "master" => Some(Kind::Master),
            "filter-diffusive" => Some(Kind::FilterDiffusive),
            "filter-jump" => Some(Kind::FilterJump),
            "lqg-run" => Some(Kind::LqgRun),
            "duality-check" => Some(Kind::DualityCheck),
            "bellman-check" => Some(Kind::BellmanCheck),
            "ito-check" => Some(Kind::ItoCheck),
            _ => None,
        }
    }

    /// Kinds whose pipeline ends in a pass/fail verdict (exit code 4 on fail).
    pub fn is_check(self) -> bool {
        matches!(self, Kind::DualityCheck | Kind::BellmanCheck | Kind::ItoCheck)
    }

    fn uses_coupling(self) -> bool {
        matches!(
            self,
            Kind::Master | Kind::FilterDiffusive | Kind::FilterJump | Kind::ItoCheck
        )
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The model a pipeline runs on, fully constructed and validated.
#[derive(Clone, Debug)]
pub enum ModelData {
    /// master, ito-check: the bare coupling set.
    Coupling(CouplingSet),
    /// filter kinds: coupling set with measurement roles assigned.
    Filter(FilterModel),
    /// lqg kinds.
    Linear(Box<LinearModel>),
}

#[derive(Clone, Copy, Debug)]
pub struct Numerics {
    pub horizon: f64,
    pub dt: f64,
    pub n: usize,
    pub seed: u64,
    pub clip_tol: f64,
    pub gap_tol: f64,
    pub residual_tol: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct Formats {
    pub csv: bool,
    pub json: bool,
}

impl Default for Formats {
    fn default() -> Self {
        Formats { csv: true, json: true }
    }
}

/// A validated scenario, ready to run.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub kind: Kind,
    pub model: ModelData,
    pub numerics: Numerics,
    pub cost: Option<CostSpec>,
    /// Initial density matrix (master and filter kinds).
    pub state0: Option<DensityMatrix>,
    /// Initial mean (lqg-run; zero unless configured).
    pub mean0: Option<DVector<f64>>,
    /// Initial/reference covariance (lqg kinds).
    pub cov0: Option<RMatrix>,
    pub out_dir: Option<String>,
    pub formats: Formats,
    pub sample_trajectories: usize,
}

// ---------------------------------------------------------------------------
// wire format

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
enum EntrySpec {
    Real(f64),
    Complex([f64; 2]),
}

type MatrixSpec = Vec<Vec<EntrySpec>>;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    kind: String,
    model: Option<ModelFile>,
    numerics: Option<NumericsFile>,
    cost: Option<CostFile>,
    initial: Option<InitialFile>,
    output: Option<OutputFile>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    hbar: Option<f64>,
    // coupling route
    hamiltonian: Option<MatrixSpec>,
    jump_ops: Option<Vec<MatrixSpec>>,
    scattering: Option<Vec<MatrixSpec>>,
    diffusive: Option<Vec<usize>>,
    counting: Option<Vec<usize>>,
    // linear route, free-particle scalars
    alpha: Option<f64>,
    beta: Option<f64>,
    gamma: Option<f64>,
    epsilon: Option<f64>,
    mu: Option<f64>,
    // linear route, explicit real coefficients
    a: Option<MatrixSpec>,
    b_e: Option<MatrixSpec>,
    c_f: Option<MatrixSpec>,
    f_e: Option<MatrixSpec>,
    e_f: Option<MatrixSpec>,
    g: Option<MatrixSpec>,
    h: Option<MatrixSpec>,
    j: Option<MatrixSpec>,
    // linear route, coupling rows (J, Λ_e, Λ_f, M⁻¹)
    lambda_e: Option<MatrixSpec>,
    lambda_f: Option<MatrixSpec>,
    minv: Option<MatrixSpec>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct NumericsFile {
    #[serde(rename = "T")]
    horizon: Option<f64>,
    dt: Option<f64>,
    #[serde(rename = "N")]
    n: Option<u64>,
    seed: Option<u64>,
    clip_tol: Option<f64>,
    gap_tol: Option<f64>,
    residual_tol: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CostFile {
    omega_t: Option<MatrixSpec>,
    e_f: Option<MatrixSpec>,
    h: Option<MatrixSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InitialFile {
    state: Option<MatrixSpec>,
    mean: Option<Vec<f64>>,
    cov: Option<MatrixSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputFile {
    dir: Option<String>,
    formats: Option<Vec<String>>,
    trajectories: Option<usize>,
}

// ---------------------------------------------------------------------------
// validation

struct Check {
    errs: Vec<ScenarioError>,
}

impl Check {
    fn push(&mut self, path: impl Into<String>, reason: impl Into<String>) {
        self.errs.push(ScenarioError { path: path.into(), reason: reason.into() });
    }

    fn forbid<T>(&mut self, kind: Kind, path: &str, value: &Option<T>) {
        if value.is_some() {
            self.push(path, format!("not used by kind \"{kind}\""));
        }
    }

    fn require<'v, T>(&mut self, path: &str, value: &'v Option<T>) -> Option<&'v T> {
        match value {
            Some(v) => Some(v),
            None => {
                self.push(path, "required key missing");
                None
            }
        }
    }

    fn complex_matrix(&mut self, path: &str, spec: &MatrixSpec) -> Option<CMatrix> {
        let rows = spec.len();
        if rows == 0 {
            self.push(path, "matrix has no rows");
            return None;
        }
        let cols = spec[0].len();
        if cols == 0 || spec.iter().any(|r| r.len() != cols) {
            self.push(path, "rows must be non-empty and of equal length");
            return None;
        }
        Some(CMatrix::from_fn(rows, cols, |r, q| match spec[r][q] {
            EntrySpec::Real(v) => c(v, 0.0),
            EntrySpec::Complex([re, im]) => c(re, im),
        }))
    }

    fn real_matrix(&mut self, path: &str, spec: &MatrixSpec) -> Option<RMatrix> {
        let m = self.complex_matrix(path, spec)?;
        if m.iter().any(|z| z.im != 0.0) {
            self.push(path, "entries must be real");
            return None;
        }
        Some(m.map(|z| z.re))
    }

    fn positive(&mut self, path: &str, value: Option<f64>) {
        if let Some(v) = value {
            if !(v > 0.0 && v.is_finite()) {
                self.push(path, format!("must be positive and finite, got {v}"));
            }
        }
    }
}

/// Parses and validates scenario text. On failure every detected problem is
/// returned, each naming the key path it concerns.
pub fn parse_scenario(text: &str) -> Result<Scenario, Vec<ScenarioError>> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| {
        vec![ScenarioError { path: "scenario".into(), reason: e.to_string().trim().replace('\n', " ") }]
    })?;
    validate(file)
}

fn validate(file: ScenarioFile) -> Result<Scenario, Vec<ScenarioError>> {
    let mut ck = Check { errs: Vec::new() };

    let Some(kind) = Kind::from_name(&file.kind) else {
        ck.push(
            "kind",
            format!("unknown scenario kind \"{}\"; expected one of {}", file.kind, KIND_NAMES.join(", ")),
        );
        return Err(ck.errs);
    };

    let model_file = file.model.unwrap_or_else(|| {
        ck.push("model", "required block missing");
        ModelFile::default()
    });
    let numerics_file = file.numerics.unwrap_or_default();

    let numerics = validate_numerics(&mut ck, kind, &numerics_file);
    let model = validate_model(&mut ck, kind, &model_file);
    let cost = validate_cost(&mut ck, kind, file.cost.as_ref(), model.as_ref());
    let (state0, mean0, cov0) =
        validate_initial(&mut ck, kind, file.initial.as_ref(), model.as_ref(), &numerics);
    let (out_dir, formats, sample_trajectories) =
        validate_output(&mut ck, kind, file.output.as_ref());

    let (Some(model), true) = (model, ck.errs.is_empty()) else {
        return Err(ck.errs);
    };
    Ok(Scenario {
        kind,
        model,
        numerics,
        cost,
        state0,
        mean0,
        cov0,
        out_dir,
        formats,
        sample_trajectories,
    })
}

fn validate_numerics(ck: &mut Check, kind: Kind, n: &NumericsFile) -> Numerics {
    // tolerances must be positive wherever they are legal at all
    ck.positive("numerics.clip_tol", n.clip_tol);
    ck.positive("numerics.gap_tol", n.gap_tol);
    ck.positive("numerics.residual_tol", n.residual_tol);

    // which keys each kind consumes; everything else is a misconfiguration
    match kind {
        Kind::Master => {
            ck.forbid(kind, "numerics.N", &n.n);
            ck.forbid(kind, "numerics.gap_tol", &n.gap_tol);
            ck.forbid(kind, "numerics.residual_tol", &n.residual_tol);
        }
        Kind::FilterDiffusive | Kind::FilterJump => {
            ck.forbid(kind, "numerics.gap_tol", &n.gap_tol);
            ck.forbid(kind, "numerics.residual_tol", &n.residual_tol);
            match n.n {
                None => ck.push("numerics.N", "required key missing"),
                Some(0) => ck.push("numerics.N", "ensemble must contain at least one trajectory"),
                Some(_) => {}
            }
        }
        Kind::LqgRun => {
            ck.forbid(kind, "numerics.clip_tol", &n.clip_tol);
            ck.forbid(kind, "numerics.gap_tol", &n.gap_tol);
            ck.forbid(kind, "numerics.residual_tol", &n.residual_tol);
        }
        Kind::DualityCheck => {
            ck.forbid(kind, "numerics.N", &n.n);
            ck.forbid(kind, "numerics.clip_tol", &n.clip_tol);
            ck.forbid(kind, "numerics.residual_tol", &n.residual_tol);
        }
        Kind::BellmanCheck => {
            ck.forbid(kind, "numerics.clip_tol", &n.clip_tol);
            ck.forbid(kind, "numerics.gap_tol", &n.gap_tol);
        }
        Kind::ItoCheck => {
            ck.forbid(kind, "numerics.T", &n.horizon);
            ck.forbid(kind, "numerics.dt", &n.dt);
            ck.forbid(kind, "numerics.N", &n.n);
            ck.forbid(kind, "numerics.seed", &n.seed);
            ck.forbid(kind, "numerics.clip_tol", &n.clip_tol);
            ck.forbid(kind, "numerics.gap_tol", &n.gap_tol);
        }
    }

    let (horizon, dt) = if kind == Kind::ItoCheck {
        (0.0, 0.0)
    } else {
        let horizon = match ck.require("numerics.T", &n.horizon) {
            Some(&t) if t > 0.0 && t.is_finite() => t,
            Some(&t) => {
                ck.push("numerics.T", format!("must be positive and finite, got {t}"));
                0.0
            }
            None => 0.0,
        };
        let dt = match ck.require("numerics.dt", &n.dt) {
            Some(&v) if v > 0.0 && v.is_finite() => v,
            Some(&v) => {
                ck.push("numerics.dt", format!("must be positive and finite, got {v}"));
                0.0
            }
            None => 0.0,
        };
        if horizon > 0.0 && dt > 0.0 && dt >= horizon {
            ck.push(
                "numerics.dt",
                format!("numerics.dt = {dt} must be smaller than numerics.T = {horizon}"),
            );
        }
        (horizon, dt)
    };

    let n_default = if kind == Kind::BellmanCheck { DEFAULT_CHECK_POINTS } else { 0 };
    Numerics {
        horizon,
        dt,
        n: n.n.map(|v| v as usize).unwrap_or(n_default),
        seed: n.seed.unwrap_or(0),
        clip_tol: n.clip_tol.unwrap_or(DEFAULT_CLIP_TOL),
        gap_tol: n.gap_tol.unwrap_or(DEFAULT_GAP_TOL),
        residual_tol: n.residual_tol.unwrap_or(if kind == Kind::ItoCheck {
            DEFAULT_UNITARITY_TOL
        } else {
            DEFAULT_RESIDUAL_TOL
        }),
    }
}

fn validate_model(ck: &mut Check, kind: Kind, m: &ModelFile) -> Option<ModelData> {
    let hbar = m.hbar.unwrap_or(DEFAULT_HBAR);
    if !(hbar >= 0.0 && hbar.is_finite()) {
        ck.push("model.hbar", format!("must be a finite non-negative number, got {hbar}"));
        return None;
    }

    if kind.uses_coupling() {
        for (path, gone) in [
            ("model.alpha", m.alpha.is_some()),
            ("model.beta", m.beta.is_some()),
            ("model.gamma", m.gamma.is_some()),
            ("model.epsilon", m.epsilon.is_some()),
            ("model.mu", m.mu.is_some()),
            ("model.a", m.a.is_some()),
            ("model.b_e", m.b_e.is_some()),
            ("model.c_f", m.c_f.is_some()),
            ("model.f_e", m.f_e.is_some()),
            ("model.e_f", m.e_f.is_some()),
            ("model.g", m.g.is_some()),
            ("model.h", m.h.is_some()),
            ("model.j", m.j.is_some()),
            ("model.lambda_e", m.lambda_e.is_some()),
            ("model.lambda_f", m.lambda_f.is_some()),
            ("model.minv", m.minv.is_some()),
        ] {
            if gone {
                ck.push(path, format!("linear-model key; not used by kind \"{kind}\""));
            }
        }
        validate_coupling_model(ck, kind, m, hbar)
    } else {
        for (path, gone) in [
            ("model.hamiltonian", m.hamiltonian.is_some()),
            ("model.jump_ops", m.jump_ops.is_some()),
            ("model.scattering", m.scattering.is_some()),
            ("model.diffusive", m.diffusive.is_some()),
            ("model.counting", m.counting.is_some()),
        ] {
            if gone {
                ck.push(path, format!("coupling-set key; not used by kind \"{kind}\""));
            }
        }
        validate_linear_model(ck, kind, m, hbar)
    }
}

fn validate_coupling_model(
    ck: &mut Check,
    kind: Kind,
    m: &ModelFile,
    hbar: f64,
) -> Option<ModelData> {
    if hbar == 0.0 {
        ck.push("model.hbar", "must be positive for quantum kinds");
        return None;
    }
    if kind != Kind::ItoCheck {
        ck.forbid(kind, "model.scattering", &m.scattering);
    }
    match kind {
        Kind::Master | Kind::ItoCheck => {
            ck.forbid(kind, "model.diffusive", &m.diffusive);
            ck.forbid(kind, "model.counting", &m.counting);
        }
        Kind::FilterDiffusive => ck.forbid(kind, "model.counting", &m.counting),
        Kind::FilterJump => ck.forbid(kind, "model.diffusive", &m.diffusive),
        _ => unreachable!("coupling kinds only"),
    }

    let h_spec = ck.require("model.hamiltonian", &m.hamiltonian)?;
    let jump_specs = ck.require("model.jump_ops", &m.jump_ops)?;
    let hamiltonian = ck.complex_matrix("model.hamiltonian", h_spec)?;
    let mut jump_ops = Vec::with_capacity(jump_specs.len());
    for (i, spec) in jump_specs.iter().enumerate() {
        jump_ops.push(ck.complex_matrix(&format!("model.jump_ops[{i}]"), spec)?);
    }
    let scattering = match &m.scattering {
        None => None,
        Some(specs) => {
            let mut out = Vec::with_capacity(specs.len());
            for (i, spec) in specs.iter().enumerate() {
                out.push(ck.complex_matrix(&format!("model.scattering[{i}]"), spec)?);
            }
            Some(out)
        }
    };

    let coupling = match CouplingSet::new(hamiltonian, jump_ops, scattering, hbar) {
        Ok(c) => c,
        Err(e) => {
            ck.push("model", e.to_string());
            return None;
        }
    };

    match kind {
        Kind::Master | Kind::ItoCheck => Some(ModelData::Coupling(coupling)),
        Kind::FilterDiffusive | Kind::FilterJump => {
            let path = if kind == Kind::FilterDiffusive { "model.diffusive" } else { "model.counting" };
            let spec = if kind == Kind::FilterDiffusive { &m.diffusive } else { &m.counting };
            let channels = ck.require(path, spec)?.clone();
            if channels.is_empty() {
                ck.push(path, "at least one measured channel required");
                return None;
            }
            let (diffusive, counting) = if kind == Kind::FilterDiffusive {
                (channels, Vec::new())
            } else {
                (Vec::new(), channels)
            };
            match FilterModel::new(coupling, diffusive, counting, Vec::new()) {
                Ok(f) => Some(ModelData::Filter(f)),
                Err(e) => {
                    ck.push(path, e.to_string());
                    None
                }
            }
        }
        _ => unreachable!("coupling kinds only"),
    }
}

fn validate_linear_model(
    ck: &mut Check,
    _kind: Kind,
    m: &ModelFile,
    hbar: f64,
) -> Option<ModelData> {
    let scalars =
        [&m.alpha, &m.beta, &m.gamma, &m.epsilon, &m.mu].iter().any(|v| v.is_some());
    let coeffs = [&m.a, &m.b_e, &m.c_f, &m.f_e, &m.e_f, &m.g, &m.h]
        .iter()
        .any(|v| v.is_some());
    let derive = [&m.lambda_e, &m.lambda_f, &m.minv].iter().any(|v| v.is_some());

    match (scalars, coeffs, derive) {
        (true, false, false) => {
            let alpha = *ck.require("model.alpha", &m.alpha)?;
            let beta = *ck.require("model.beta", &m.beta)?;
            let gamma = *ck.require("model.gamma", &m.gamma)?;
            let epsilon = *ck.require("model.epsilon", &m.epsilon)?;
            let mu = *ck.require("model.mu", &m.mu)?;
            if m.j.is_some() {
                ck.push("model.j", "the free-particle route fixes J; drop this key");
            }
            match free_particle_model(alpha, beta, gamma, epsilon, mu, hbar) {
                Ok((model, _view)) => Some(ModelData::Linear(Box::new(model))),
                Err(e) => {
                    ck.push("model", e.to_string());
                    None
                }
            }
        }
        (false, true, false) => {
            let mut get = |path: &str, spec: &Option<MatrixSpec>| -> Option<RMatrix> {
                let s = ck.require(path, spec)?;
                ck.real_matrix(path, s)
            };
            let a = get("model.a", &m.a);
            let b_e = get("model.b_e", &m.b_e);
            let c_f = get("model.c_f", &m.c_f);
            let f_e = get("model.f_e", &m.f_e);
            let e_f = get("model.e_f", &m.e_f);
            let g = get("model.g", &m.g);
            let h = get("model.h", &m.h);
            let j = get("model.j", &m.j);
            match LinearModel::from_coefficients(
                a?, b_e?, c_f?, f_e?, e_f?, g?, h?, j?, hbar,
            ) {
                Ok(model) => Some(ModelData::Linear(Box::new(model))),
                Err(e) => {
                    ck.push("model", e.to_string());
                    None
                }
            }
        }
        (false, false, true) => {
            let le_spec = ck.require("model.lambda_e", &m.lambda_e)?;
            let lf_spec = ck.require("model.lambda_f", &m.lambda_f)?;
            let minv_spec = ck.require("model.minv", &m.minv)?;
            let j_spec = ck.require("model.j", &m.j)?;
            let lambda_e = ck.complex_matrix("model.lambda_e", le_spec)?;
            let lambda_f = ck.complex_matrix("model.lambda_f", lf_spec)?;
            let minv = ck.real_matrix("model.minv", minv_spec)?;
            let j = ck.real_matrix("model.j", j_spec)?;
            match derive_matrices(&j, &lambda_e, &lambda_f, &minv, hbar) {
                Ok(model) => Some(ModelData::Linear(Box::new(model))),
                Err(e) => {
                    ck.push("model", e.to_string());
                    None
                }
            }
        }
        (false, false, false) => {
            ck.push(
                "model",
                "provide free-particle scalars (alpha, beta, gamma, epsilon, mu), explicit \
                 coefficients (a, b_e, c_f, f_e, e_f, g, h, j), or coupling rows (lambda_e, \
                 lambda_f, minv, j)",
            );
            None
        }
        _ => {
            ck.push("model", "mixes keys from more than one model route; pick one");
            None
        }
    }
}

fn validate_cost(
    ck: &mut Check,
    kind: Kind,
    cost: Option<&CostFile>,
    model: Option<&ModelData>,
) -> Option<CostSpec> {
    if kind.uses_coupling() {
        if cost.is_some() {
            ck.push("cost", format!("not used by kind \"{kind}\""));
        }
        return None;
    }
    let Some(cost) = cost else {
        ck.push("cost", "required block missing");
        return None;
    };
    let omega_spec = ck.require("cost.omega_t", &cost.omega_t)?;
    let omega_t = ck.real_matrix("cost.omega_t", omega_spec)?;
    let explicit = match (&cost.e_f, &cost.h) {
        (None, None) => None,
        (Some(e_spec), Some(h_spec)) => {
            let e_f = ck.real_matrix("cost.e_f", e_spec)?;
            let h = ck.real_matrix("cost.h", h_spec)?;
            Some((e_f, h))
        }
        _ => {
            ck.push("cost", "give both cost.e_f and cost.h, or neither");
            return None;
        }
    };
    let Some(ModelData::Linear(model)) = model else {
        return None;
    };
    let built = match explicit {
        Some((e_f, h)) => CostSpec::new(e_f, h, omega_t),
        None => CostSpec::canonical(model, omega_t),
    };
    match built {
        Ok(c) => {
            if c.h.nrows() != model.m || c.e_f.nrows() != model.d_f() {
                ck.push("cost", format!(
                    "cost matrices sized for {} states / {} controls do not match the model ({} states / {} controls)",
                    c.h.nrows(), c.e_f.nrows(), model.m, model.d_f(),
                ));
                return None;
            }
            Some(c)
        }
        Err(e) => {
            ck.push("cost", e.to_string());
            None
        }
    }
}

#[allow(clippy::type_complexity)]
fn validate_initial(
    ck: &mut Check,
    kind: Kind,
    initial: Option<&InitialFile>,
    model: Option<&ModelData>,
    numerics: &Numerics,
) -> (Option<DensityMatrix>, Option<DVector<f64>>, Option<RMatrix>) {
    match kind {
        Kind::ItoCheck => {
            if initial.is_some() {
                ck.push("initial", format!("not used by kind \"{kind}\""));
            }
            (None, None, None)
        }
        Kind::Master | Kind::FilterDiffusive | Kind::FilterJump => {
            let Some(init) = initial else {
                ck.push("initial", "required block missing");
                return (None, None, None);
            };
            ck.forbid(kind, "initial.mean", &init.mean);
            ck.forbid(kind, "initial.cov", &init.cov);
            let Some(spec) = ck.require("initial.state", &init.state) else {
                return (None, None, None);
            };
            let Some(raw) = ck.complex_matrix("initial.state", spec) else {
                return (None, None, None);
            };
            let dim = match model {
                Some(ModelData::Coupling(c)) => Some(c.dim),
                Some(ModelData::Filter(f)) => Some(f.coupling.dim),
                _ => None,
            };
            if let Some(dim) = dim {
                if raw.nrows() != dim || raw.ncols() != dim {
                    ck.push(
                        "initial.state",
                        format!("is {}x{}, model dimension is {dim}", raw.nrows(), raw.ncols()),
                    );
                    return (None, None, None);
                }
            }
            match normalize_and_clip(&raw, numerics.clip_tol) {
                Ok(state) => (Some(state), None, None),
                Err(e) => {
                    ck.push("initial.state", e.to_string());
                    (None, None, None)
                }
            }
        }
        Kind::LqgRun | Kind::DualityCheck | Kind::BellmanCheck => {
            let Some(init) = initial else {
                ck.push("initial", "required block missing");
                return (None, None, None);
            };
            ck.forbid(kind, "initial.state", &init.state);
            if kind != Kind::LqgRun {
                ck.forbid(kind, "initial.mean", &init.mean);
            }
            let Some(spec) = ck.require("initial.cov", &init.cov) else {
                return (None, None, None);
            };
            let Some(cov) = ck.real_matrix("initial.cov", spec) else {
                return (None, None, None);
            };
            let Some(ModelData::Linear(model)) = model else {
                return (None, None, None);
            };
            let mean = match &init.mean {
                Some(v) if v.len() != model.m => {
                    ck.push(
                        "initial.mean",
                        format!("has {} entries, model dimension is {}", v.len(), model.m),
                    );
                    return (None, None, None);
                }
                Some(v) => DVector::from_column_slice(v),
                None => DVector::zeros(model.m),
            };
            // admissibility (symmetry + uncertainty floor) in one go
            match GaussianBelief::new(mean, cov, &model.j, model.hbar) {
                Ok(belief) => (None, Some(belief.mean), Some(belief.cov)),
                Err(e) => {
                    ck.push("initial.cov", e.to_string());
                    (None, None, None)
                }
            }
        }
    }
}

fn validate_output(
    ck: &mut Check,
    kind: Kind,
    output: Option<&OutputFile>,
) -> (Option<String>, Formats, usize) {
    let Some(out) = output else {
        return (None, Formats::default(), DEFAULT_SAMPLE_TRAJECTORIES);
    };
    if !matches!(kind, Kind::FilterDiffusive | Kind::FilterJump) {
        ck.forbid(kind, "output.trajectories", &out.trajectories);
    }
    let formats = match &out.formats {
        None => Formats::default(),
        Some(list) => {
            let mut f = Formats { csv: false, json: false };
            for item in list {
                match item.as_str() {
                    "csv" => f.csv = true,
                    "json" => f.json = true,
                    other => ck.push(
                        "output.formats",
                        format!("unknown format \"{other}\"; expected csv and/or json"),
                    ),
                }
            }
            if !f.csv && !f.json {
                ck.push("output.formats", "must include csv and/or json");
            }
            f
        }
    };
    (
        out.dir.clone(),
        formats,
        out.trajectories.unwrap_or(DEFAULT_SAMPLE_TRAJECTORIES),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL_MASTER: &str = r#"
        kind = "master"

        [model]
        hamiltonian = [[0.0, 0.0], [0.0, 0.0]]
        jump_ops = [[[0.0, 1.0], [0.0, 0.0]]]

        [initial]
        state = [[0.0, 0.0], [0.0, 1.0]]

        [numerics]
        T = 1.0
        dt = 1e-3
    "#;

    #[test]
    fn minimal_master_scenario_fills_defaults() {
        let s = parse_scenario(MINIMAL_MASTER).unwrap();
        assert_eq!(s.kind, Kind::Master);
        assert_eq!(s.numerics.clip_tol, DEFAULT_CLIP_TOL);
        assert_eq!(s.numerics.seed, 0);
        let ModelData::Coupling(c) = &s.model else { panic!("expected a coupling set") };
        assert_eq!(c.hbar, DEFAULT_HBAR);
        assert_eq!(c.dim, 2);
        assert!(s.state0.is_some());
        assert!(s.formats.csv && s.formats.json);
    }

    #[test]
    fn dt_larger_than_horizon_names_both_keys() {
        let text = MINIMAL_MASTER.replace("dt = 1e-3", "dt = 2.0");
        let errs = parse_scenario(&text).unwrap_err();
        let msg = errs.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; ");
        assert!(msg.contains("numerics.dt"), "{msg}");
        assert!(msg.contains("numerics.T"), "{msg}");
    }

    #[test]
    fn unknown_keys_are_hard_errors() {
        let text = MINIMAL_MASTER.replace("T = 1.0", "T = 1.0\n        rate = 3.0");
        let errs = parse_scenario(&text).unwrap_err();
        assert_eq!(errs.len(), 1);
        assert!(errs[0].reason.contains("rate"), "{}", errs[0]);
    }

    #[test]
    fn free_particle_scalars_build_a_linear_model() {
        let text = r#"
            kind = "lqg-run"

            [model]
            alpha = 1.0
            beta = 0.5
            gamma = 0.2
            epsilon = 0.0
            mu = 1.0

            [cost]
            omega_t = [[0.4, 0.0], [0.0, 0.4]]

            [initial]
            cov = [[1.0, 0.0], [0.0, 1.0]]

            [numerics]
            T = 1.0
            dt = 1e-3
            N = 10
            seed = 3
        "#;
        let s = parse_scenario(text).unwrap();
        let ModelData::Linear(model) = &s.model else { panic!("expected a linear model") };
        assert_eq!(model.m, 2);
        assert_eq!(model.hbar, 1.0);
        // the position-sensing row feeds B_e = 2 Re Λ: b_e[0][0] = alpha
        assert!((model.b_e[(0, 0)] - 1.0).abs() < 1e-15);
        assert!(s.cost.is_some());
        assert_eq!(s.mean0.as_ref().unwrap().len(), 2);
        assert_eq!(s.numerics.n, 10);
    }

    #[test]
    fn filter_requires_a_nonempty_ensemble() {
        let text = r#"
            kind = "filter-diffusive"

            [model]
            hamiltonian = [[0.0, 0.0], [0.0, 0.0]]
            jump_ops = [[[0.0, 1.0], [0.0, 0.0]]]
            diffusive = [0]

            [initial]
            state = [[0.5, 0.0], [0.0, 0.5]]

            [numerics]
            T = 0.5
            dt = 1e-3
            N = 0
        "#;
        let errs = parse_scenario(text).unwrap_err();
        assert!(errs.iter().any(|e| e.path == "numerics.N"), "{errs:?}");
    }

    #[test]
    fn misplaced_keys_are_reported_with_paths() {
        // a linear-model key and a cost block on a coupling kind
        let text = MINIMAL_MASTER.replace(
            "[initial]",
            "alpha = 1.0\n\n        [cost]\n        omega_t = [[1.0]]\n\n        [initial]",
        );
        let errs = parse_scenario(&text).unwrap_err();
        let paths: Vec<&str> = errs.iter().map(|e| e.path.as_str()).collect();
        assert!(paths.contains(&"model.alpha"), "{paths:?}");
        assert!(paths.contains(&"cost"), "{paths:?}");
    }

    #[test]
    fn inadmissible_covariance_is_rejected() {
        let text = r#"
            kind = "duality-check"

            [model]
            alpha = 1.0
            beta = 0.0
            gamma = 0.0
            epsilon = 0.0
            mu = 1.0

            [cost]
            omega_t = [[0.4, 0.0], [0.0, 0.4]]

            [initial]
            cov = [[0.1, 0.0], [0.0, 0.1]]

            [numerics]
            T = 1.0
            dt = 1e-3
        "#;
        let errs = parse_scenario(text).unwrap_err();
        assert!(errs.iter().any(|e| e.path == "initial.cov"), "{errs:?}");
        // the same covariance passes once hbar is small enough
        let ok = text.replace("mu = 1.0", "mu = 1.0\n            hbar = 0.1");
        assert!(parse_scenario(&ok).is_ok());
    }

    #[test]
    fn complex_entries_parse_as_pairs() {
        let text = r#"
            kind = "ito-check"

            [model]
            hamiltonian = [[0.0, [0.0, -0.5]], [[0.0, 0.5], 0.0]]
            jump_ops = [[[0.0, 1.0], [0.0, 0.0]]]
        "#;
        let s = parse_scenario(text).unwrap();
        let ModelData::Coupling(c) = &s.model else { panic!("expected a coupling set") };
        assert_eq!(c.hamiltonian[(0, 1)], qfc_core::linalg::c(0.0, -0.5));
        assert_eq!(s.numerics.residual_tol, DEFAULT_UNITARITY_TOL);
    }

    #[test]
    fn kind_specific_blocks_are_enforced() {
        // lqg-run without cost or initial blocks
        let text = r#"
            kind = "lqg-run"

            [model]
            alpha = 1.0
            beta = 0.0
            gamma = 0.0
            epsilon = 0.0
            mu = 1.0

            [numerics]
            T = 1.0
            dt = 1e-3
        "#;
        let errs = parse_scenario(text).unwrap_err();
        let paths: Vec<&str> = errs.iter().map(|e| e.path.as_str()).collect();
        assert!(paths.contains(&"cost"), "{paths:?}");
        assert!(paths.contains(&"initial"), "{paths:?}");
    }

    #[test]
    fn mixed_model_routes_are_rejected() {
        let text = r#"
            kind = "lqg-run"

            [model]
            alpha = 1.0
            beta = 0.0
            gamma = 0.0
            epsilon = 0.0
            mu = 1.0
            a = [[0.0]]

            [cost]
            omega_t = [[0.4]]

            [initial]
            cov = [[1.0]]

            [numerics]
            T = 1.0
            dt = 1e-3
        "#;
        let errs = parse_scenario(text).unwrap_err();
        assert!(errs.iter().any(|e| e.path == "model" && e.reason.contains("route")), "{errs:?}");
    }
}
