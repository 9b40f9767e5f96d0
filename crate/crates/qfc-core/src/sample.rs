//! Seeded random matrices and models, used by the self-check scenarios and
//! the test zoo. Everything is keyed through [`crate::rng`], so a (seed, tag)
//! pair always regenerates the identical model.

use num_complex::Complex64;

use crate::linalg::{hermitian_part, CMatrix};
use crate::operators::{CouplingSet, DensityMatrix};
use crate::rng::Key;

/// Cursor over one key's draws.
pub struct Stream {
    key: Key,
    draw: u64,
}

impl Stream {
    pub fn new(seed: u64, tag: u64) -> Self {
        Stream { key: Key::new(seed, tag, 0, 0), draw: 0 }
    }

    pub fn uniform(&mut self) -> f64 {
        let u = self.key.uniform(self.draw);
        self.draw += 1;
        u
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn complex_normal(&mut self) -> Complex64 {
        Complex64::new(self.normal(), self.normal()) * std::f64::consts::FRAC_1_SQRT_2
    }
}

/// Ginibre matrix: i.i.d. standard complex normal entries, scaled by 1/√dim.
pub fn random_complex(dim: usize, s: &mut Stream) -> CMatrix {
    let scale = 1.0 / (dim as f64).sqrt();
    CMatrix::from_fn(dim, dim, |_, _| s.complex_normal() * scale)
}

pub fn random_hermitian(dim: usize, s: &mut Stream) -> CMatrix {
    let g = random_complex(dim, s);
    let mut h = hermitian_part(&g);
    for i in 0..dim {
        h[(i, i)] = Complex64::new(h[(i, i)].re, 0.0);
    }
    h
}

/// Haar-ish unitary: QR of a Ginibre matrix with the R-diagonal phases pulled
/// out (enough uniformity for test models; exactly unitary up to rounding).
pub fn random_unitary(dim: usize, s: &mut Stream) -> CMatrix {
    let g = random_complex(dim, s);
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..dim {
        let d = r[(j, j)];
        let phase = if d.norm() > 1e-300 { d / d.norm() } else { Complex64::new(1.0, 0.0) };
        let col = q.column(j) * phase.conj();
        q.set_column(j, &col);
    }
    q
}

/// Full-rank random density matrix GG†/tr[GG†].
pub fn random_density(dim: usize, s: &mut Stream) -> DensityMatrix {
    let g = random_complex(dim, s);
    let w = &g * g.adjoint();
    let t = w.trace().re;
    let mut m = w.scale(1.0 / t);
    for i in 0..dim {
        m[(i, i)] = Complex64::new(m[(i, i)].re, 0.0);
        for j in (i + 1)..dim {
            m[(j, i)] = m[(i, j)].conj();
        }
    }
    DensityMatrix::new(m).expect("GG†/tr is a valid state")
}

/// Random model: Hermitian H, `channels` Ginibre jump operators, optional
/// random unitary scattering per channel.
pub fn random_coupling_set(
    dim: usize,
    channels: usize,
    with_scattering: bool,
    hbar: f64,
    s: &mut Stream,
) -> CouplingSet {
    let h = random_hermitian(dim, s);
    let jumps: Vec<CMatrix> = (0..channels).map(|_| random_complex(dim, s)).collect();
    let scattering = if with_scattering {
        Some((0..channels).map(|_| random_unitary(dim, s)).collect())
    } else {
        None
    };
    CouplingSet::new(h, jumps, scattering, hbar).expect("sampled couplings are valid")
}
