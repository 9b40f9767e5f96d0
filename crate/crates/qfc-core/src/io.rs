//! Artifact serialization: the JSON/CSV formats shared by the library and
//! the scenario runner, plus content hashing for output manifests.
//!
//! Floating-point values are written in shortest round-trip decimal form
//! (both serde_json and Rust's `Display` guarantee re-parsing yields the
//! identical bits), so equal inputs always produce byte-identical files.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::filtering::{EnsembleSummary, TrajectoryRecord};
use crate::ito::GermMatrix;
use crate::linalg::{c, CMatrix, RMatrix};
use crate::lqg::RiccatiPath;
use crate::master::StatePath;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
    #[error("matrix payload is inconsistent: {0}")]
    BadShape(String),
}

/// Wire form of a complex matrix: dimensions plus the real and imaginary
/// parts of every entry in row-major order.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl MatrixJson {
    pub fn from_complex(m: &CMatrix) -> Self {
        let mut re = Vec::with_capacity(m.len());
        let mut im = Vec::with_capacity(m.len());
        for r in 0..m.nrows() {
            for q in 0..m.ncols() {
                re.push(m[(r, q)].re);
                im.push(m[(r, q)].im);
            }
        }
        MatrixJson { rows: m.nrows(), cols: m.ncols(), re, im }
    }

    pub fn from_real(m: &RMatrix) -> Self {
        let mut re = Vec::with_capacity(m.len());
        for r in 0..m.nrows() {
            for q in 0..m.ncols() {
                re.push(m[(r, q)]);
            }
        }
        MatrixJson { rows: m.nrows(), cols: m.ncols(), im: vec![0.0; re.len()], re }
    }

    pub fn to_complex(&self) -> Result<CMatrix, IoError> {
        let n = self.rows * self.cols;
        if self.re.len() != n || self.im.len() != n {
            return Err(IoError::BadShape(format!(
                "{}x{} matrix with {} re / {} im entries",
                self.rows,
                self.cols,
                self.re.len(),
                self.im.len()
            )));
        }
        Ok(CMatrix::from_fn(self.rows, self.cols, |r, q| {
            let k = r * self.cols + q;
            c(self.re[k], self.im[k])
        }))
    }

    pub fn to_real(&self) -> Result<RMatrix, IoError> {
        let m = self.to_complex()?;
        if m.iter().any(|z| z.im != 0.0) {
            return Err(IoError::BadShape("expected a real matrix".into()));
        }
        Ok(m.map(|z| z.re))
    }
}

pub fn matrix_to_json(m: &CMatrix) -> String {
    serde_json::to_string(&MatrixJson::from_complex(m)).expect("plain data cannot fail")
}

pub fn matrix_from_json(text: &str) -> Result<CMatrix, IoError> {
    serde_json::from_str::<MatrixJson>(text)?.to_complex()
}

/// Germ matrices serialize as an array-of-arrays of matrix blocks with the
/// index labels spelled out: "-", "1".."d", "+".
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GermJson {
    pub dim: usize,
    pub channels: usize,
    pub labels: Vec<String>,
    pub blocks: Vec<Vec<MatrixJson>>,
}

pub fn germ_labels(channels: usize) -> Vec<String> {
    let mut labels = vec!["-".to_string()];
    labels.extend((1..=channels).map(|i| i.to_string()));
    labels.push("+".to_string());
    labels
}

pub fn germ_to_json(germ: &GermMatrix) -> String {
    let side = germ.channels() + 2;
    let blocks: Vec<Vec<MatrixJson>> = (0..side)
        .map(|r| (0..side).map(|q| MatrixJson::from_complex(germ.block(r, q))).collect())
        .collect();
    let wire = GermJson {
        dim: germ.dim(),
        channels: germ.channels(),
        labels: germ_labels(germ.channels()),
        blocks,
    };
    serde_json::to_string_pretty(&wire).expect("plain data cannot fail")
}

fn push_f64(out: &mut String, v: f64) {
    // shortest round-trip decimal; keeps artifacts byte-stable
    write!(out, "{v}").expect("writing to String cannot fail");
}

fn state_header(out: &mut String, dim: usize) {
    for r in 0..dim {
        for q in 0..dim {
            write!(out, ",re_{r}_{q},im_{r}_{q}").expect("writing to String cannot fail");
        }
    }
}

fn push_state(out: &mut String, m: &CMatrix) {
    for r in 0..m.nrows() {
        for q in 0..m.ncols() {
            out.push(',');
            push_f64(out, m[(r, q)].re);
            out.push(',');
            push_f64(out, m[(r, q)].im);
        }
    }
}

/// Deterministic-path CSV: `t` then re/im of every entry in row-major order.
pub fn state_path_csv(path: &StatePath) -> String {
    let dim = path.states.first().map_or(0, |s| s.dim());
    let mut out = String::from("t");
    state_header(&mut out, dim);
    out.push('\n');
    for (t, state) in path.times.iter().zip(&path.states) {
        push_f64(&mut out, *t);
        push_state(&mut out, state.matrix());
        out.push('\n');
    }
    out
}

/// Trajectory CSV: `t`, dY per diffusive channel, dN per counting channel,
/// u per control channel, then the conditional state entries. Row k ≥ 1
/// carries the increments of step k−1 together with the post-step state;
/// row 0 is the initial state with zero increments.
pub fn trajectory_csv(record: &TrajectoryRecord) -> String {
    let dim = record.states.first().map_or(0, |s| s.dim());
    let mut out = String::from("t");
    for ch in &record.diffusive_channels {
        write!(out, ",dY_{ch}").expect("writing to String cannot fail");
    }
    for ch in &record.counting_channels {
        write!(out, ",dN_{ch}").expect("writing to String cannot fail");
    }
    for ch in &record.feedback_channels {
        write!(out, ",u_{ch}").expect("writing to String cannot fail");
    }
    state_header(&mut out, dim);
    out.push('\n');
    for k in 0..record.states.len() {
        push_f64(&mut out, record.times[k]);
        for pos in 0..record.diffusive_channels.len() {
            out.push(',');
            push_f64(&mut out, if k == 0 { 0.0 } else { record.outputs[pos][k - 1] });
        }
        for pos in 0..record.counting_channels.len() {
            out.push(',');
            let ev = if k == 0 { 0 } else { record.events[pos][k - 1] };
            write!(out, "{ev}").expect("writing to String cannot fail");
        }
        for pos in 0..record.feedback_channels.len() {
            out.push(',');
            push_f64(&mut out, if k == 0 { 0.0 } else { record.controls[pos][k - 1] });
        }
        push_state(&mut out, record.states[k].matrix());
        out.push('\n');
    }
    out
}

/// Symmetric-path CSV: `t` then the upper triangle (row-major, diagonal
/// included) of each matrix.
pub fn riccati_csv(path: &RiccatiPath) -> String {
    let m = path.values.first().map_or(0, |v| v.nrows());
    let mut out = String::from("t");
    for r in 0..m {
        for q in r..m {
            write!(out, ",s_{r}_{q}").expect("writing to String cannot fail");
        }
    }
    out.push('\n');
    for (t, value) in path.times.iter().zip(&path.values) {
        push_f64(&mut out, *t);
        for r in 0..m {
            for q in r..m {
                out.push(',');
                push_f64(&mut out, value[(r, q)]);
            }
        }
        out.push('\n');
    }
    out
}

/// Wire form of an ensemble summary: grid, seed, trajectory count, mean
/// matrices and entrywise standard errors.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnsembleJson {
    pub times: Vec<f64>,
    pub n: usize,
    pub seed: u64,
    pub mean: Vec<MatrixJson>,
    pub stderr_re: Vec<MatrixJson>,
    pub stderr_im: Vec<MatrixJson>,
}

pub fn ensemble_to_json(summary: &EnsembleSummary) -> String {
    let wire = EnsembleJson {
        times: summary.times.clone(),
        n: summary.n,
        seed: summary.seed,
        mean: summary.mean.iter().map(MatrixJson::from_complex).collect(),
        stderr_re: summary.stderr_re.iter().map(MatrixJson::from_real).collect(),
        stderr_im: summary.stderr_im.iter().map(MatrixJson::from_real).collect(),
    };
    serde_json::to_string_pretty(&wire).expect("plain data cannot fail")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for byte in digest {
        write!(out, "{byte:02x}").expect("writing to String cannot fail");
    }
    out
}

/// Output manifest: relative file name → SHA-256 of the file contents.
/// BTreeMap keeps the listing sorted, hence byte-stable.
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct Manifest {
    pub files: BTreeMap<String, String>,
}

impl Manifest {
    pub fn record(&mut self, name: &str, contents: &[u8]) {
        self.files.insert(name.to_string(), sha256_hex(contents));
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data cannot fail")
    }
}
