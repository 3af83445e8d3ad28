use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Bound matrices above this condition estimate are refused.
pub const MAX_BOUND_CONDITION: f64 = 1e12;

/// Inverse of a real symmetric (possibly indefinite) matrix.
///
/// The matrix is first equilibrated by `1/√|m_ii|` so that the ω row, which
/// scales like N³, does not dominate the condition estimate; the scaled
/// matrix is then inverted through its eigendecomposition. Returns the
/// inverse and the condition estimate of the equilibrated matrix.
pub(crate) fn symmetric_inverse(m: &DMatrix<f64>, what: &'static str) -> Result<(DMatrix<f64>, f64)> {
    let n = m.nrows();
    let scale: Vec<f64> = (0..n)
        .map(|i| {
            let d = m[(i, i)].abs();
            if d > 0.0 { 1.0 / d.sqrt() } else { 1.0 }
        })
        .collect();
    let scaled = DMatrix::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]) * scale[i] * scale[j]);
    let eig = scaled.symmetric_eigen();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for &l in eig.eigenvalues.iter() {
        lo = lo.min(l.abs());
        hi = hi.max(l.abs());
    }
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition <= MAX_BOUND_CONDITION) {
        return Err(Error::IllConditioned { what, condition });
    }
    let v = &eig.eigenvectors;
    let inv_scaled = DMatrix::from_fn(n, n, |i, j| {
        (0..n).map(|k| v[(i, k)] * v[(j, k)] / eig.eigenvalues[k]).sum::<f64>()
    });
    let inv = DMatrix::from_fn(n, n, |i, j| inv_scaled[(i, j)] * scale[i] * scale[j]);
    Ok((inv, condition))
}

/// Diagonal of `(JᵀJ)⁻¹` for a tall real `J`, via QR of the column-normalised
/// matrix, so accuracy degrades with the condition of `J` rather than of
/// `JᵀJ`. Returns the diagonal and the condition estimate of normalised `J`.
pub(crate) fn normal_inverse_diagonal(j: DMatrix<f64>, what: &'static str) -> Result<(Vec<f64>, f64)> {
    let cols = j.ncols();
    let mut j = j;
    let mut scale = vec![1.0; cols];
    for (c, s) in scale.iter_mut().enumerate() {
        let norm = j.column(c).norm();
        if norm > 0.0 {
            *s = 1.0 / norm;
            j.column_mut(c).scale_mut(*s);
        }
    }
    let r = j.qr().r();
    let sv = r.singular_values();
    let (lo, hi) = sv.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition <= MAX_BOUND_CONDITION) {
        return Err(Error::IllConditioned { what, condition });
    }
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(cols, cols))
        .ok_or(Error::IllConditioned { what, condition: f64::INFINITY })?;
    let diag = (0..cols).map(|i| r_inv.row(i).norm_squared() * scale[i] * scale[i]).collect();
    Ok((diag, condition))
}
