//! Shared dense-matrix helpers. Everything downstream works with
//! `nalgebra::DMatrix` over double-precision complex or real scalars.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;
pub type RMatrix = DMatrix<f64>;

#[inline]
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[inline]
pub fn cr(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Largest entrywise modulus — the `max` norm behind every tolerance here.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn max_abs_real(m: &RMatrix) -> f64 {
    m.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

pub fn all_finite(m: &CMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// ‖m − m†‖_max.
pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    max_abs(&(m - m.adjoint()))
}

/// ‖m†m − 1‖_max.
pub fn unitarity_defect(m: &CMatrix) -> f64 {
    let n = m.nrows();
    max_abs(&(m.adjoint() * m - CMatrix::identity(n, n)))
}

/// Exact (value-level) Hermitian symmetry: `m[(j,i)] == conj(m[(i,j)])` for
/// every pair. Uses numeric equality so `±0.0` imaginary parts both count.
pub fn is_exactly_hermitian(m: &CMatrix) -> bool {
    if !m.is_square() {
        return false;
    }
    let n = m.nrows();
    for i in 0..n {
        for j in i..n {
            let a = m[(i, j)];
            let b = m[(j, i)];
            if !(a.re == b.re && a.im == -b.im) {
                return false;
            }
        }
    }
    true
}

pub struct HermEigen {
    /// Real eigenvalues, ascending.
    pub values: DVector<f64>,
    /// Columns are the matching orthonormal eigenvectors.
    pub vectors: CMatrix,
}

/// Eigendecomposition of a Hermitian matrix (the caller guarantees symmetry;
/// only the Hermitian part of the input influences the result).
pub fn herm_eigen(m: &CMatrix) -> HermEigen {
    let eig = nalgebra::SymmetricEigen::new(m.clone());
    // nalgebra returns unsorted eigenvalues; sort ascending with vectors.
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    HermEigen { values, vectors }
}

/// tr[a·b] without forming the product.
pub fn trace_of_product(a: &CMatrix, b: &CMatrix) -> Complex64 {
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(b.ncols(), a.nrows());
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

/// Hermitian part (m + m†)/2.
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}
