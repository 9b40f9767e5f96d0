//! Finite matrix realization of the quantum Itô ⋆-algebra.
//!
//! A quantum stochastic differential with d noise channels is represented by
//! its *germ*: a (2+d)×(2+d) grid of dim×dim operator blocks, triangular in
//! the index order `− < ∘ < +` (rows/columns 0, 1..d, d+1). All d channels
//! share the middle rank ∘, so the channel sector is a full d×d block square
//! (scattering mixes channels both ways); only blocks with row rank strictly
//! above the column rank are forced to zero.
//! Block (μ,ν) multiplies the fundamental increment with subscript μ and
//! superscript ν, so the Itô correction table
//! `dA_μ^ι dA_κ^ν = δ_κ^ι dA_μ^ν` becomes plain block-matrix multiplication,
//! and the adjoint of a differential becomes the involution
//! `(K⋆)(μ,ν) = K(−ν,−μ)†` with `−` and `+` swapped by negation.
//!
//! Two germ shapes appear:
//! * *increment* germs (zero corner blocks), e.g. [`wiener_germ`]; products of
//!   these realize the Itô table directly;
//! * *transition* germs (identity (−,−) and (+,+) blocks), e.g.
//!   [`germ_from_coupling`]; these are the 1+K objects whose pseudo-unitarity
//!   S⋆ = S⁻¹ encodes unitarity of the underlying evolution.

use num_complex::Complex64;
use thiserror::Error;

use crate::linalg::{max_abs, CMatrix};
use crate::operators::CouplingSet;

#[derive(Debug, Error)]
pub enum GermError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("block ({row},{col}) below the −/∘/+ triangle must be zero")]
    NotTriangular { row: usize, col: usize },
    #[error("germ is not pseudo-unitary: residuals {residuals:?} exceed {tol:.1e}")]
    PseudoUnitarityViolated { residuals: [f64; 3], tol: f64 },
}

/// Triangular operator-block matrix over the index set {−, 1..d, +}.
#[derive(Clone, Debug, PartialEq)]
pub struct GermMatrix {
    dim: usize,
    channels: usize,
    /// (2+d)² blocks, row-major; each block dim×dim.
    blocks: Vec<CMatrix>,
}

impl GermMatrix {
    /// Grid side length 2+d.
    fn side(&self) -> usize {
        self.channels + 2
    }

    /// Grid index of the `−` row/column.
    pub const MINUS: usize = 0;

    /// Grid index of the `+` row/column.
    pub fn plus(&self) -> usize {
        self.channels + 1
    }

    /// Grid index of channel `c` (0-based channel id).
    pub fn channel(&self, c: usize) -> usize {
        c + 1
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// All blocks zero.
    pub fn zero(dim: usize, channels: usize) -> Self {
        let side = channels + 2;
        GermMatrix {
            dim,
            channels,
            blocks: vec![CMatrix::zeros(dim, dim); side * side],
        }
    }

    /// Transition-normalized identity: identity blocks on the whole diagonal.
    pub fn identity(dim: usize, channels: usize) -> Self {
        let mut g = Self::zero(dim, channels);
        let side = g.side();
        for k in 0..side {
            g.blocks[k * side + k] = CMatrix::identity(dim, dim);
        }
        g
    }

    /// Builds a germ from explicit (row, col, block) entries; everything else
    /// is zero. Rejects entries below the −/∘/+ rank triangle.
    pub fn from_blocks(
        dim: usize,
        channels: usize,
        entries: Vec<(usize, usize, CMatrix)>,
    ) -> Result<Self, GermError> {
        let mut g = Self::zero(dim, channels);
        let side = g.side();
        for (row, col, m) in entries {
            if row >= side || col >= side {
                return Err(GermError::DimensionMismatch(format!(
                    "block index ({row},{col}) outside {side}x{side} grid"
                )));
            }
            if rank(row, side) > rank(col, side) {
                return Err(GermError::NotTriangular { row, col });
            }
            if m.nrows() != dim || m.ncols() != dim {
                return Err(GermError::DimensionMismatch(format!(
                    "block ({row},{col}) is {}x{}, expected {dim}x{dim}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            g.blocks[row * side + col] = m;
        }
        Ok(g)
    }

    pub fn block(&self, row: usize, col: usize) -> &CMatrix {
        &self.blocks[row * self.side() + col]
    }

    fn block_mut(&mut self, row: usize, col: usize) -> &mut CMatrix {
        let side = self.side();
        &mut self.blocks[row * side + col]
    }

    /// True when the (−,−) and (+,+) corners are identity blocks.
    pub fn is_transition_normalized(&self) -> bool {
        let id = CMatrix::identity(self.dim, self.dim);
        let p = self.plus();
        max_abs(&(self.block(Self::MINUS, Self::MINUS) - &id)) == 0.0
            && max_abs(&(self.block(p, p) - &id)) == 0.0
    }

    /// diag(x, …, x): a system operator acting identically on every germ slot.
    pub fn embed_operator(x: &CMatrix, channels: usize) -> Self {
        let dim = x.nrows();
        let mut g = Self::zero(dim, channels);
        let side = g.side();
        for k in 0..side {
            g.blocks[k * side + k] = x.clone();
        }
        g
    }

    /// Largest entrywise modulus over all blocks.
    pub fn max_abs(&self) -> f64 {
        self.blocks.iter().map(max_abs).fold(0.0, f64::max)
    }
}

/// Index negation: − ↔ +, channels fixed.
fn negate(idx: usize, side: usize) -> usize {
    if idx == 0 {
        side - 1
    } else if idx == side - 1 {
        0
    } else {
        idx
    }
}

/// Rank in the order − < ∘ < +; all channels share the middle rank, so the
/// channel sector is a full (not triangular) d×d block square.
fn rank(idx: usize, side: usize) -> u8 {
    if idx == 0 {
        0
    } else if idx == side - 1 {
        2
    } else {
        1
    }
}

/// The ⋆-involution `(K⋆)(μ,ν) = K(−ν,−μ)†`. Involutive exactly.
pub fn involution(k: &GermMatrix) -> GermMatrix {
    let side = k.side();
    let mut out = GermMatrix::zero(k.dim, k.channels);
    for r in 0..side {
        for c in 0..side {
            if rank(r, side) <= rank(c, side) {
                *out.block_mut(r, c) = k.block(negate(c, side), negate(r, side)).adjoint();
            }
        }
    }
    out
}

/// Pseudo-Poisson product: plain block-matrix multiplication of the
/// triangular representations, realizing `dA_μ^ι dA_κ^ν = δ_κ^ι dA_μ^ν`.
pub fn germ_product(a: &GermMatrix, b: &GermMatrix) -> Result<GermMatrix, GermError> {
    if a.dim != b.dim || a.channels != b.channels {
        return Err(GermError::DimensionMismatch(format!(
            "germ product of (dim {}, d {}) with (dim {}, d {})",
            a.dim, a.channels, b.dim, b.channels
        )));
    }
    let side = a.side();
    let mut out = GermMatrix::zero(a.dim, a.channels);
    for r in 0..side {
        for c in 0..side {
            // triangularity: only columns of rank ≥ the row rank can be nonzero
            if rank(r, side) > rank(c, side) {
                continue;
            }
            let mut acc = CMatrix::zeros(a.dim, a.dim);
            for m in 0..side {
                acc += a.block(r, m) * b.block(m, c);
            }
            *out.block_mut(r, c) = acc;
        }
    }
    Ok(out)
}

/// Wiener increment germ on one channel: blocks (−,∘) = (∘,+) = 1, so that
/// K_W·K_W is the time germ ((dW)² = dt).
pub fn wiener_germ(dim: usize) -> GermMatrix {
    wiener_germ_on(dim, 1, 0)
}

/// Wiener germ embedded at channel `c` of a d-channel germ.
pub fn wiener_germ_on(dim: usize, channels: usize, c: usize) -> GermMatrix {
    let id = CMatrix::identity(dim, dim);
    GermMatrix::from_blocks(
        dim,
        channels,
        vec![(0, c + 1, id.clone()), (c + 1, channels + 1, id)],
    )
    .expect("static wiener germ")
}

/// Poisson increment germ on one channel: blocks (−,∘), (∘,∘), (∘,+), (−,+)
/// all = 1, so that K_N·K_N = K_N ((dN)² = dN).
pub fn poisson_germ(dim: usize) -> GermMatrix {
    poisson_germ_on(dim, 1, 0)
}

pub fn poisson_germ_on(dim: usize, channels: usize, c: usize) -> GermMatrix {
    let id = CMatrix::identity(dim, dim);
    GermMatrix::from_blocks(
        dim,
        channels,
        vec![
            (0, c + 1, id.clone()),
            (c + 1, c + 1, id.clone()),
            (c + 1, channels + 1, id.clone()),
            (0, channels + 1, id),
        ],
    )
    .expect("static poisson germ")
}

/// Deterministic time germ: single (−,+) identity block (the germ of dt).
pub fn time_germ(dim: usize) -> GermMatrix {
    time_germ_on(dim, 1)
}

pub fn time_germ_on(dim: usize, channels: usize) -> GermMatrix {
    let id = CMatrix::identity(dim, dim);
    GermMatrix::from_blocks(dim, channels, vec![(0, channels + 1, id)]).expect("static time germ")
}

#[derive(Clone, Copy, Debug)]
pub struct PseudoUnitarityReport {
    pub ok: bool,
    /// (‖S_∘∘†S_∘∘ − 1‖, ‖R^− + R_+†S_∘∘‖, ‖R_+^− + (R_+^−)† + R_+†R_+‖), max norms.
    pub residuals: [f64; 3],
}

/// Checks the three unitarity conditions on a transition-normalized germ:
/// unitary scattering block, creation/annihilation rows tied through S, and
/// drift real part balancing the quantum Itô correction. Equivalent to
/// `germ_product(involution(S), S) == identity` for triangular germs.
pub fn check_pseudo_unitarity(s: &GermMatrix, tol: f64) -> PseudoUnitarityReport {
    let d = s.channels;
    let n = s.dim;
    let plus = s.plus();

    // Assemble the scattering block S_∘∘ (d·n square), the creation column
    // R_+ (d·n × n) and the annihilation row R^- (n × d·n).
    let mut s_oo = CMatrix::zeros(d * n, d * n);
    let mut r_plus = CMatrix::zeros(d * n, n);
    let mut r_minus = CMatrix::zeros(n, d * n);
    for i in 0..d {
        for j in 0..d {
            s_oo.view_mut((i * n, j * n), (n, n)).copy_from(s.block(i + 1, j + 1));
        }
        r_plus.view_mut((i * n, 0), (n, n)).copy_from(s.block(i + 1, plus));
        r_minus.view_mut((0, i * n), (n, n)).copy_from(s.block(0, i + 1));
    }
    let drift = s.block(0, plus);

    let r1 = max_abs(&(s_oo.adjoint() * &s_oo - CMatrix::identity(d * n, d * n)));
    let r2 = max_abs(&(&r_minus + r_plus.adjoint() * &s_oo));
    let r3 = max_abs(&(drift + drift.adjoint() + r_plus.adjoint() * &r_plus));
    let residuals = [r1, r2, r3];
    PseudoUnitarityReport { ok: residuals.iter().all(|&r| r <= tol), residuals }
}

/// Builds the transition germ of a coupling set:
/// scattering on the channel diagonal, Ľ_i in the creation column,
/// −Ľ_j†S_j in the annihilation row, drift −(i/ħ)H − ½ΣĽ_i†Ľ_i.
/// The output passes [`check_pseudo_unitarity`] at 1e-10 by construction
/// (the coupling set already guarantees Hermitian H and unitary scattering).
pub fn germ_from_coupling(c: &CouplingSet) -> GermMatrix {
    let dim = c.dim;
    let d = c.channels();
    let mut g = GermMatrix::identity(dim, d);
    let plus = d + 1;
    let mut quad = CMatrix::zeros(dim, dim);
    for (i, l) in c.jump_ops.iter().enumerate() {
        let s_i = c.scattering_for(i);
        *g.block_mut(i + 1, i + 1) = s_i.clone();
        *g.block_mut(i + 1, plus) = l.clone();
        *g.block_mut(0, i + 1) = -(l.adjoint() * s_i);
        quad += l.adjoint() * l;
    }
    let drift = c.hamiltonian.scale(1.0 / c.hbar) * Complex64::new(0.0, -1.0) - quad.scale(0.5);
    *g.block_mut(0, plus) = drift;
    g
}

/// Schrödinger-picture Lindblad generator extracted from a germ.
#[derive(Clone, Debug)]
pub struct LindbladGenerator {
    /// Drift block (−,+): −(i/ħ)H − ½ΣĽ_i†Ľ_i.
    pub drift: CMatrix,
    /// Creation column blocks Ľ_i.
    pub jumps: Vec<CMatrix>,
}

impl LindbladGenerator {
    /// λ(ς) = Σ_i Ľ_i ς Ľ_i† + Dς + ςD†. Traceless for pseudo-unitary germs.
    pub fn apply(&self, state: &CMatrix) -> CMatrix {
        let mut out = &self.drift * state + state * self.drift.adjoint();
        for l in &self.jumps {
            out += l * state * l.adjoint();
        }
        out
    }
}

/// Reads the generator off a transition germ, after verifying
/// pseudo-unitarity at 1e-8 (a germ that fails it does not conserve trace).
pub fn lindblad_from_germ(s: &GermMatrix) -> Result<LindbladGenerator, GermError> {
    let tol = 1e-8;
    let report = check_pseudo_unitarity(s, tol);
    if !report.ok {
        return Err(GermError::PseudoUnitarityViolated { residuals: report.residuals, tol });
    }
    let plus = s.plus();
    Ok(LindbladGenerator {
        drift: s.block(0, plus).clone(),
        jumps: (0..s.channels).map(|i| s.block(i + 1, plus).clone()).collect(),
    })
}
