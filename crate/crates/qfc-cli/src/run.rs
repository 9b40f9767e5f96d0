//! Scenario execution: one pipeline per kind, artifacts plus a manifest.
//!
//! Every run writes its files into the output directory and finishes with
//! `manifest.json`, a sorted listing of every emitted file with its SHA-256.
//! All content is rendered through shortest-round-trip float formatting, so
//! a rerun with the same scenario and seed is byte-identical regardless of
//! worker count.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::Serialize;
use thiserror::Error;

use qfc_core::bellman::{hjb_residual_lqg, BellmanError, QuadraticValue};
use qfc_core::filtering::{
    run_ensemble, ControlLaw, EnsembleOptions, FilterError, TrajectoryRecord,
};
use qfc_core::io::{
    ensemble_to_json, germ_to_json, riccati_csv, state_path_csv, trajectory_csv, Manifest,
    MatrixJson,
};
use qfc_core::ito::{check_pseudo_unitarity, germ_from_coupling};
use qfc_core::linalg::max_abs_real;
use qfc_core::lqg::{
    control_riccati_solve, dualize, filter_riccati_solve, heisenberg_check, kalman_gain, min_cost,
    optimal_gain, optimal_gain_path, simulate_closed_loop, GaussianBelief, LinearModel, LqgError,
};
use qfc_core::master::{integrate_master, MasterError};
use qfc_core::operators::{CouplingSet, OperatorError};
use qfc_core::rng::Key;

use crate::scenario::{Kind, ModelData, Scenario};

#[derive(Debug, Error)]
pub enum RunError {
    /// Problems a fixed scenario file would avoid (exit code 2).
    #[error("{0}")]
    Validation(String),
    /// The pipeline started but the numerics gave out (exit code 3).
    #[error("numerical failure in {module}: {detail}{}", hint_suffix(.hint))]
    Numerical { module: &'static str, detail: String, hint: Option<String> },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

fn hint_suffix(hint: &Option<String>) -> String {
    match hint {
        Some(h) => format!("\nhint: {h}"),
        None => String::new(),
    }
}

/// What a finished run hands back to the caller.
#[derive(Debug)]
pub struct RunOutcome {
    pub manifest: Manifest,
    pub out_dir: PathBuf,
    /// For *-check kinds: the failure summary when the verdict is "fail".
    pub check_failed: Option<String>,
}

fn map_master(e: MasterError) -> RunError {
    let detail = e.to_string();
    let hint = match innermost_master(&e) {
        MasterError::StepExceedsStabilityBound { bound, .. } => {
            Some(format!("reduce numerics.dt to at most {bound:.3e}"))
        }
        MasterError::State(OperatorError::NotPositive { .. }) => {
            Some("reduce numerics.dt (positivity clipping failed)".to_string())
        }
        _ => None,
    };
    RunError::Numerical { module: "master", detail, hint }
}

fn innermost_master(e: &MasterError) -> &MasterError {
    match e {
        MasterError::AtStep { source, .. } => innermost_master(source),
        other => other,
    }
}

fn map_filter(e: FilterError) -> RunError {
    let detail = e.to_string();
    let hint = match innermost_filter(&e) {
        FilterError::RateStepTooLarge { nu_dt, .. } => {
            Some(format!("reduce numerics.dt by at least a factor of {:.1}", nu_dt / 0.1))
        }
        FilterError::State(OperatorError::NotPositive { .. }) => Some(
            "reduce numerics.dt (Euler–Maruyama positivity dips shrink with the step)".to_string(),
        ),
        FilterError::Master(m) => {
            if let MasterError::StepExceedsStabilityBound { bound, .. } = m {
                Some(format!("reduce numerics.dt to at most {bound:.3e}"))
            } else {
                None
            }
        }
        _ => None,
    };
    RunError::Numerical { module: "filtering", detail, hint }
}

fn innermost_filter(e: &FilterError) -> &FilterError {
    match e {
        FilterError::AtStep { source, .. } => innermost_filter(source),
        other => other,
    }
}

fn map_lqg(e: LqgError) -> RunError {
    match e {
        LqgError::BlowUp { norm, t } => RunError::Numerical {
            module: "lqg",
            detail: format!("Riccati solution norm reached {norm:.3e} at t = {t:.6}"),
            hint: Some("reduce numerics.dt or the horizon; the flow is escaping".to_string()),
        },
        other => RunError::Validation(format!("lqg setup: {other}")),
    }
}

fn map_bellman(e: BellmanError) -> RunError {
    match e {
        BellmanError::Lqg(inner) => map_lqg(inner),
        other => RunError::Validation(format!("bellman setup: {other}")),
    }
}

// ---------------------------------------------------------------------------
// artifact collection

struct Artifacts {
    files: Vec<(String, String)>,
}

impl Artifacts {
    fn new() -> Self {
        Artifacts { files: Vec::new() }
    }

    fn add(&mut self, name: impl Into<String>, contents: String) {
        self.files.push((name.into(), contents));
    }

    fn add_json<T: Serialize>(&mut self, name: impl Into<String>, value: &T) {
        let text = serde_json::to_string_pretty(value).expect("plain data cannot fail");
        self.add(name, text);
    }

    /// Writes everything the format filter admits, then the manifest.
    fn write(self, out_dir: &Path, scenario: &Scenario) -> Result<Manifest, RunError> {
        fs::create_dir_all(out_dir)?;
        let mut manifest = Manifest::default();
        for (name, contents) in &self.files {
            let admitted = (name.ends_with(".csv") && scenario.formats.csv)
                || (name.ends_with(".json") && scenario.formats.json);
            if !admitted {
                continue;
            }
            fs::write(out_dir.join(name), contents.as_bytes())?;
            manifest.record(name, contents.as_bytes());
        }
        fs::write(out_dir.join("manifest.json"), manifest.to_json().as_bytes())?;
        Ok(manifest)
    }
}

/// Executes a validated scenario, writing artifacts into `out_dir`.
pub fn run_scenario(scenario: &Scenario, out_dir: &Path) -> Result<RunOutcome, RunError> {
    let (arts, check_failed) = match scenario.kind {
        Kind::Master => (run_master(scenario)?, None),
        Kind::FilterDiffusive | Kind::FilterJump => (run_filter(scenario)?, None),
        Kind::LqgRun => (run_lqg(scenario)?, None),
        Kind::DualityCheck => run_duality(scenario)?,
        Kind::BellmanCheck => run_bellman(scenario)?,
        Kind::ItoCheck => run_ito(scenario)?,
    };
    let manifest = arts.write(out_dir, scenario)?;
    Ok(RunOutcome { manifest, out_dir: out_dir.to_path_buf(), check_failed })
}

fn coupling_of(scenario: &Scenario) -> &CouplingSet {
    match &scenario.model {
        ModelData::Coupling(c) => c,
        ModelData::Filter(f) => &f.coupling,
        ModelData::Linear(_) => unreachable!("validated per kind"),
    }
}

fn linear_of(scenario: &Scenario) -> &LinearModel {
    match &scenario.model {
        ModelData::Linear(m) => m,
        _ => unreachable!("validated per kind"),
    }
}

fn run_master(scenario: &Scenario) -> Result<Artifacts, RunError> {
    let coupling = coupling_of(scenario);
    let state0 = scenario.state0.as_ref().expect("validated");
    let path = integrate_master(coupling, state0, scenario.numerics.horizon, scenario.numerics.dt)
        .map_err(map_master)?;
    let mut arts = Artifacts::new();
    arts.add("state_path.csv", state_path_csv(&path));
    arts.add_json("final_state.json", &MatrixJson::from_complex(path.last().matrix()));
    Ok(arts)
}

fn run_filter(scenario: &Scenario) -> Result<Artifacts, RunError> {
    let ModelData::Filter(model) = &scenario.model else { unreachable!("validated per kind") };
    let state0 = scenario.state0.as_ref().expect("validated");
    let n = scenario.numerics.n;
    let keep = scenario.sample_trajectories.min(n) as u64;
    let (summary, kept) = run_ensemble(
        model,
        &ControlLaw::Off,
        state0,
        scenario.numerics.horizon,
        scenario.numerics.dt,
        scenario.numerics.seed,
        n,
        |rec: &TrajectoryRecord| (rec.trajectory_index < keep).then(|| rec.clone()),
        EnsembleOptions::default(),
    )
    .map_err(map_filter)?;

    let mut arts = Artifacts::new();
    arts.add("ensemble.json", ensemble_to_json(&summary));
    for rec in kept.into_iter().flatten() {
        arts.add(format!("trajectory_{}.csv", rec.trajectory_index), trajectory_csv(&rec));
    }
    Ok(arts)
}

#[derive(Serialize)]
struct CostSummary {
    horizon: f64,
    dt: f64,
    seed: u64,
    n: usize,
    min_cost: f64,
    mc_mean: Option<f64>,
    mc_stderr: Option<f64>,
    /// Smallest eigenvalue of Σ + (iħ/2)J seen anywhere along the filter path.
    min_heisenberg_eig: f64,
}

fn run_lqg(scenario: &Scenario) -> Result<Artifacts, RunError> {
    let model = linear_of(scenario);
    let cost = scenario.cost.as_ref().expect("validated");
    let sigma0 = scenario.cov0.as_ref().expect("validated");
    let mean0 = scenario.mean0.as_ref().expect("validated");
    let (horizon, dt) = (scenario.numerics.horizon, scenario.numerics.dt);

    let sigma_path = filter_riccati_solve(model, sigma0, horizon, dt).map_err(map_lqg)?;
    let omega_path = control_riccati_solve(model, cost, horizon, dt).map_err(map_lqg)?;
    let gains = optimal_gain_path(&omega_path, model, cost);
    let jmin = min_cost(model, cost, &sigma_path, &omega_path, mean0).map_err(map_lqg)?;
    let min_heisenberg_eig = sigma_path
        .values
        .iter()
        .map(|s| heisenberg_check(s, &model.j, model.hbar).min_eig)
        .fold(f64::INFINITY, f64::min);

    let (mc_mean, mc_stderr) = if scenario.numerics.n > 0 {
        let belief0 = GaussianBelief::new(mean0.clone(), sigma0.clone(), &model.j, model.hbar)
            .map_err(map_lqg)?;
        let outcome = simulate_closed_loop(
            model,
            cost,
            &belief0,
            &sigma_path,
            &gains,
            dt,
            scenario.numerics.seed,
            scenario.numerics.n,
        )
        .map_err(map_lqg)?;
        (Some(outcome.mean), Some(outcome.stderr))
    } else {
        (None, None)
    };

    let mut arts = Artifacts::new();
    arts.add("sigma.csv", riccati_csv(&sigma_path));
    arts.add("omega.csv", riccati_csv(&omega_path));
    arts.add_json(
        "cost_summary.json",
        &CostSummary {
            horizon,
            dt,
            seed: scenario.numerics.seed,
            n: scenario.numerics.n,
            min_cost: jmin,
            mc_mean,
            mc_stderr,
            min_heisenberg_eig,
        },
    );
    Ok(arts)
}

#[derive(Serialize)]
struct DualityReport {
    horizon: f64,
    dt: f64,
    /// Largest entry of |JΩ′(t)Jᵀ − Σ(T−t)| over the whole grid.
    max_gap_sigma: f64,
    /// Largest entry of |J·L′(t)ᵀ − K(T−t)| over the whole grid.
    max_gap_gain: f64,
    /// The duality gap: max of the two, the quantity checked against `tol`.
    max_gap: f64,
    tol: f64,
    ok: bool,
}

fn run_duality(scenario: &Scenario) -> Result<(Artifacts, Option<String>), RunError> {
    let model = linear_of(scenario);
    let cost = scenario.cost.as_ref().expect("validated");
    let sigma0 = scenario.cov0.as_ref().expect("validated");
    let (horizon, dt) = (scenario.numerics.horizon, scenario.numerics.dt);

    let (dual_model, dual_cost, _dual_sigma0) =
        dualize(model, cost, sigma0).map_err(map_lqg)?;
    let sigma_path = filter_riccati_solve(model, sigma0, horizon, dt).map_err(map_lqg)?;
    let dual_omega = control_riccati_solve(&dual_model, &dual_cost, horizon, dt).map_err(map_lqg)?;

    let j = &model.j;
    let steps = sigma_path.values.len();
    let mut max_gap_sigma: f64 = 0.0;
    let mut max_gap_gain: f64 = 0.0;
    for k in 0..steps {
        let sigma = &sigma_path.values[steps - 1 - k];
        let swapped = j * &dual_omega.values[k] * j.transpose();
        max_gap_sigma = max_gap_sigma.max(max_abs_real(&(&swapped - sigma)));

        let gain = kalman_gain(model, sigma);
        let dual_l = optimal_gain(&dual_omega.values[k], &dual_model, &dual_cost);
        max_gap_gain = max_gap_gain.max(max_abs_real(&(j * dual_l.transpose() - gain)));
    }
    let max_gap = max_gap_sigma.max(max_gap_gain);
    let tol = scenario.numerics.gap_tol;
    let ok = max_gap <= tol;

    let mut arts = Artifacts::new();
    arts.add("sigma.csv", riccati_csv(&sigma_path));
    arts.add("omega_dual.csv", riccati_csv(&dual_omega));
    arts.add_json(
        "duality_report.json",
        &DualityReport { horizon, dt, max_gap_sigma, max_gap_gain, max_gap, tol, ok },
    );
    let verdict =
        (!ok).then(|| format!("duality gap {max_gap:.3e} exceeds numerics.gap_tol = {tol:.1e}"));
    Ok((arts, verdict))
}

#[derive(Serialize)]
struct BellmanReport {
    horizon: f64,
    dt: f64,
    seed: u64,
    points: usize,
    times_checked: usize,
    max_residual: f64,
    tol: f64,
    ok: bool,
}

fn run_bellman(scenario: &Scenario) -> Result<(Artifacts, Option<String>), RunError> {
    let model = linear_of(scenario);
    let cost = scenario.cost.as_ref().expect("validated");
    let sigma0 = scenario.cov0.as_ref().expect("validated");
    let numerics = &scenario.numerics;

    let omega_path =
        control_riccati_solve(model, cost, numerics.horizon, numerics.dt).map_err(map_lqg)?;
    let sigma_path =
        filter_riccati_solve(model, sigma0, numerics.horizon, numerics.dt).map_err(map_lqg)?;
    let value =
        QuadraticValue::from_riccati(model, cost, &omega_path, &sigma_path).map_err(map_bellman)?;

    // evaluation grid: a handful of times spread over the horizon
    let last = omega_path.times.len() - 1;
    let mut time_idx: Vec<usize> = (0..8).map(|i| i * last / 7).collect();
    time_idx.dedup();

    // random admissible test points: Gaussian mean, PSD bump on top of Σ0
    let m = model.m;
    let mut sweep = String::from("t,point,residual\n");
    let mut max_residual: f64 = 0.0;
    for point in 0..numerics.n {
        let key = Key::new(numerics.seed, point as u64, 0, 0);
        let x = DVector::from_fn(m, |i, _| 2.0 * key.normal(i as u64));
        let bump = nalgebra::DMatrix::from_fn(m, m, |r, q| {
            0.3 * key.normal((m + r * m + q) as u64)
        });
        let sigma = sigma0 + &bump * bump.transpose();
        for &k in &time_idx {
            let t = omega_path.times[k];
            let r = hjb_residual_lqg(&value, model, cost, t, &x, &sigma).map_err(map_bellman)?;
            max_residual = max_residual.max(r.abs());
            sweep.push_str(&format!("{t},{point},{r}\n"));
        }
    }
    let tol = numerics.residual_tol;
    let ok = max_residual <= tol;

    let mut arts = Artifacts::new();
    arts.add("residuals.csv", sweep);
    arts.add_json(
        "bellman_report.json",
        &BellmanReport {
            horizon: numerics.horizon,
            dt: numerics.dt,
            seed: numerics.seed,
            points: numerics.n,
            times_checked: time_idx.len(),
            max_residual,
            tol,
            ok,
        },
    );
    let verdict = (!ok).then(|| {
        format!("largest residual {max_residual:.3e} exceeds numerics.residual_tol = {tol:.1e}")
    });
    Ok((arts, verdict))
}

#[derive(Serialize)]
struct ItoReport {
    dim: usize,
    channels: usize,
    /// Unitary-scattering, row-coupling, and drift-balance residuals.
    residuals: [f64; 3],
    tol: f64,
    ok: bool,
}

fn run_ito(scenario: &Scenario) -> Result<(Artifacts, Option<String>), RunError> {
    let coupling = coupling_of(scenario);
    let germ = germ_from_coupling(coupling);
    let tol = scenario.numerics.residual_tol;
    let report = check_pseudo_unitarity(&germ, tol);

    let mut arts = Artifacts::new();
    arts.add("germ.json", germ_to_json(&germ));
    arts.add_json(
        "ito_report.json",
        &ItoReport {
            dim: germ.dim(),
            channels: germ.channels(),
            residuals: report.residuals,
            tol,
            ok: report.ok,
        },
    );
    let verdict = (!report.ok).then(|| {
        format!(
            "pseudo-unitarity residuals ({:.3e}, {:.3e}, {:.3e}) exceed numerics.residual_tol = {tol:.1e}",
            report.residuals[0], report.residuals[1], report.residuals[2]
        )
    });
    Ok((arts, verdict))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::parse_scenario;

    fn run_in_temp(text: &str) -> (RunOutcome, tempfile::TempDir) {
        let scenario = parse_scenario(text).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let outcome = run_scenario(&scenario, dir.path()).unwrap();
        (outcome, dir)
    }

    #[test]
    fn master_run_writes_path_and_manifest() {
        let text = r#"
            kind = "master"

            [model]
            hamiltonian = [[0.0, 0.0], [0.0, 0.0]]
            jump_ops = [[[0.0, 1.0], [0.0, 0.0]]]

            [initial]
            state = [[0.0, 0.0], [0.0, 1.0]]

            [numerics]
            T = 0.2
            dt = 1e-2
        "#;
        let (outcome, dir) = run_in_temp(text);
        assert!(outcome.check_failed.is_none());
        assert_eq!(outcome.manifest.files.len(), 2);
        assert!(dir.path().join("state_path.csv").exists());
        assert!(dir.path().join("final_state.json").exists());
        assert!(dir.path().join("manifest.json").exists());
    }

    #[test]
    fn ito_check_reports_exact_residuals_for_the_damped_qubit() {
        let text = r#"
            kind = "ito-check"

            [model]
            hamiltonian = [[0.0, 0.0], [0.0, 0.0]]
            jump_ops = [[[0.0, 1.0], [0.0, 0.0]]]
        "#;
        let (outcome, dir) = run_in_temp(text);
        assert!(outcome.check_failed.is_none());
        let report: serde_json::Value = serde_json::from_str(
            &fs::read_to_string(dir.path().join("ito_report.json")).unwrap(),
        )
        .unwrap();
        // σ₋ with S = 1: every residual is a bitwise cancellation
        for r in report["residuals"].as_array().unwrap() {
            assert_eq!(r.as_f64().unwrap(), 0.0);
        }
        assert!(dir.path().join("germ.json").exists());
    }

    #[test]
    fn numerical_failures_carry_module_and_hint() {
        let text = r#"
            kind = "master"

            [model]
            hamiltonian = [[0.0, 0.0], [0.0, 0.0]]
            jump_ops = [[[0.0, 10.0], [0.0, 0.0]]]

            [initial]
            state = [[0.0, 0.0], [0.0, 1.0]]

            [numerics]
            T = 1.0
            dt = 0.5
        "#;
        let scenario = parse_scenario(text).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let err = run_scenario(&scenario, dir.path()).unwrap_err();
        match err {
            RunError::Numerical { module, hint, .. } => {
                assert_eq!(module, "master");
                assert!(hint.unwrap().contains("numerics.dt"));
            }
            other => panic!("expected a numerical failure, got {other:?}"),
        }
    }

    #[test]
    fn reruns_are_byte_identical() {
        let text = r#"
            kind = "filter-diffusive"

            [model]
            hamiltonian = [[0.0, 0.0], [0.0, 0.0]]
            jump_ops = [[[0.0, 1.0], [0.0, 0.0]]]
            diffusive = [0]

            [initial]
            state = [[0.0, 0.0], [0.0, 1.0]]

            [numerics]
            T = 0.1
            dt = 1e-3
            N = 8
            seed = 42

            [output]
            trajectories = 2
        "#;
        let scenario = parse_scenario(text).unwrap();
        let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let o1 = run_scenario(&scenario, d1.path()).unwrap();
        let o2 = run_scenario(&scenario, d2.path()).unwrap();
        assert_eq!(o1.manifest, o2.manifest);
        for name in o1.manifest.files.keys() {
            let a = fs::read(d1.path().join(name)).unwrap();
            let b = fs::read(d2.path().join(name)).unwrap();
            assert_eq!(a, b, "artifact {name} differs between reruns");
        }
        assert!(o1.manifest.files.contains_key("trajectory_0.csv"));
        assert!(o1.manifest.files.contains_key("trajectory_1.csv"));
        assert!(!o1.manifest.files.contains_key("trajectory_2.csv"));
    }

    #[test]
    fn format_filter_gates_artifacts_and_manifest_stays_consistent() {
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
            T = 0.5
            dt = 1e-3

            [output]
            formats = ["json"]
        "#;
        let (outcome, dir) = run_in_temp(text);
        assert!(outcome.manifest.files.contains_key("cost_summary.json"));
        assert!(!outcome.manifest.files.contains_key("sigma.csv"));
        assert!(!dir.path().join("sigma.csv").exists());
        // every listed file exists; nothing else but manifest.json is present
        for name in outcome.manifest.files.keys() {
            assert!(dir.path().join(name).exists(), "{name} listed but missing");
        }
        let on_disk: Vec<String> = fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        for name in on_disk {
            assert!(
                name == "manifest.json" || outcome.manifest.files.contains_key(&name),
                "orphan output {name}"
            );
        }
    }

    #[test]
    fn duality_check_reports_a_tiny_gap_for_the_free_particle() {
        let text = r#"
            kind = "duality-check"

            [model]
            alpha = 1.0
            beta = 0.5
            gamma = 0.2
            epsilon = 0.3
            mu = 1.0

            [cost]
            omega_t = [[0.4, 0.0], [0.0, 0.4]]

            [initial]
            cov = [[1.0, 0.0], [0.0, 1.0]]

            [numerics]
            T = 1.0
            dt = 1e-3
        "#;
        let (outcome, dir) = run_in_temp(text);
        assert!(outcome.check_failed.is_none(), "{:?}", outcome.check_failed);
        let report: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("duality_report.json")).unwrap())
                .unwrap();
        assert!(report["max_gap"].as_f64().unwrap() <= 1e-8);
        assert_eq!(report["ok"], serde_json::Value::Bool(true));
    }

    #[test]
    fn bellman_check_residuals_vanish_on_riccati_values() {
        let text = r#"
            kind = "bellman-check"

            [model]
            alpha = 1.0
            beta = 0.5
            gamma = 0.2
            epsilon = 0.3
            mu = 1.0

            [cost]
            omega_t = [[0.4, 0.0], [0.0, 0.4]]

            [initial]
            cov = [[1.0, 0.0], [0.0, 1.0]]

            [numerics]
            T = 1.0
            dt = 1e-3
            N = 20
            seed = 5
        "#;
        let (outcome, dir) = run_in_temp(text);
        assert!(outcome.check_failed.is_none(), "{:?}", outcome.check_failed);
        let report: serde_json::Value = serde_json::from_str(
            &fs::read_to_string(dir.path().join("bellman_report.json")).unwrap(),
        )
        .unwrap();
        assert!(report["max_residual"].as_f64().unwrap() <= 1e-6);
        let sweep = fs::read_to_string(dir.path().join("residuals.csv")).unwrap();
        assert!(sweep.lines().count() > 20);

        // an unreachable tolerance flips the verdict but still writes artifacts
        let strict = text.replace("seed = 5", "seed = 5\n            residual_tol = 1e-18");
        let scenario = parse_scenario(&strict).unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        let outcome2 = run_scenario(&scenario, dir2.path()).unwrap();
        assert!(outcome2.check_failed.is_some());
        assert!(dir2.path().join("bellman_report.json").exists());
    }
}
