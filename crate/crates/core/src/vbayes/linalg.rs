//! Small dense helpers around nalgebra for the `h × h` factor matrices.

use nalgebra::DMatrix;

/// Eigenvalue floor used when a scale matrix loses definiteness.
pub const SPD_FLOOR: f64 = 1e-8;

pub(crate) fn to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    DMatrix::from_fn(n, n, |i, j| rows[i][j])
}

pub(crate) fn from_matrix(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Inverse through Cholesky, symmetrized; `None` when not positive definite.
pub(crate) fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let inv = m.clone().cholesky()?.inverse();
    Some((&inv + inv.transpose()) * 0.5)
}

/// `ln|m|` through Cholesky.
pub(crate) fn log_det_spd(m: &DMatrix<f64>) -> Option<f64> {
    let l = m.clone().cholesky()?;
    Some(2.0 * l.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// Symmetrizes `m` and lifts eigenvalues below [`SPD_FLOOR`] up to it.
/// The flag reports whether any eigenvalue was lifted.
pub fn repair_spd(m: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let sym = (m + m.transpose()) * 0.5;
    if let Some(c) = sym.clone().cholesky() {
        let min_diag = c.l_dirty().diagonal().min();
        if min_diag * min_diag > SPD_FLOOR {
            return (sym, false);
        }
    }
    let eig = sym.clone().symmetric_eigen();
    if eig.eigenvalues.iter().all(|v| *v >= SPD_FLOOR) {
        return (sym, false);
    }
    let floored = eig.eigenvalues.map(|v| v.max(SPD_FLOOR));
    let q = &eig.eigenvectors;
    let out = q * DMatrix::from_diagonal(&floored) * q.transpose();
    ((&out + out.transpose()) * 0.5, true)
}
