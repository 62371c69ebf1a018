//! Small dense helpers. Plain indexed loops keep summation order fixed, so
//! every caller gets bit-identical results regardless of thread count.

use nalgebra::DMatrix;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// x' M x for a square matrix in row-major nested vecs.
pub(crate) fn quad_form(m: &[Vec<f64>], x: &[f64]) -> f64 {
    debug_assert_eq!(m.len(), x.len());
    let mut s = 0.0;
    for i in 0..x.len() {
        let row = &m[i];
        let mut ri = 0.0;
        for j in 0..x.len() {
            ri += row[j] * x[j];
        }
        s += x[i] * ri;
    }
    s
}

pub(crate) fn mat_vec(m: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    m.iter().map(|row| dot(row, x)).collect()
}

/// (min, max) eigenvalue of a symmetric matrix.
pub(crate) fn sym_eig_range(m: &[Vec<f64>]) -> (f64, f64) {
    let n = m.len();
    let dm = DMatrix::from_fn(n, n, |i, j| m[i][j]);
    let eig = dm.symmetric_eigen();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in eig.eigenvalues.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}

pub(crate) fn max_abs_entry(m: &[Vec<f64>]) -> f64 {
    m.iter()
        .flat_map(|row| row.iter())
        .fold(0.0f64, |acc, &v| acc.max(v.abs()))
}
