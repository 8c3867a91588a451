//! Dense complex linear algebra used across the crate.
//!
//! Storage is nalgebra's column-major `DMatrix`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

#[inline]
pub fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Largest entry of `|A − A†|`.
pub fn hermiticity_error(a: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in 0..=j {
            let d = (a[(i, j)] - a[(j, i)].conj()).norm();
            worst = worst.max(d);
        }
    }
    worst
}

/// `out ← a†`.
pub fn adjoint_into(a: &CMatrix, out: &mut CMatrix) {
    let n = a.nrows();
    for j in 0..n {
        for i in 0..n {
            out[(i, j)] = a[(j, i)].conj();
        }
    }
}

/// Eigen-decomposition of a Hermitian matrix with eigenvalues sorted in
/// ascending order; column `i` of the returned matrix is the eigenvector of
/// eigenvalue `i`.
pub fn eigh(a: &CMatrix) -> (Vec<f64>, CMatrix) {
    let eig = SymmetricEigen::new(a.clone());
    let mut order: Vec<usize> = (0..a.nrows()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMatrix::zeros(a.nrows(), a.ncols());
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn eigvalsh(a: &CMatrix) -> Vec<f64> {
    let mut v: Vec<f64> = SymmetricEigen::new(a.clone()).eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

/// `⟨u|v⟩`.
pub fn inner(u: &CVector, v: &CVector) -> C64 {
    u.dotc(v)
}

/// Real-valued helper: embed a real matrix into a complex one.
pub fn complexify(m: &DMatrix<f64>) -> CMatrix {
    m.map(re)
}
