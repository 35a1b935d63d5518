use nalgebra::DMatrix;

pub(crate) fn submatrix(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])])
}

/// Determinant by full-pivot LU.
pub(crate) fn det(m: &DMatrix<f64>) -> f64 {
    match m.nrows() {
        0 => 1.0,
        1 => m[(0, 0)],
        2 => m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)],
        _ => m.clone().full_piv_lu().determinant(),
    }
}

/// Principal minor of a PSD matrix; round-off negatives are clamped to 0.
pub(crate) fn psd_minor(m: &DMatrix<f64>, idx: &[usize]) -> f64 {
    let d = det(&submatrix(m, idx));
    if d < 0.0 {
        0.0
    } else {
        d
    }
}

/// `log det` of a symmetric positive-definite matrix, `None` when the
/// Cholesky factorisation breaks down.
pub(crate) fn log_det_pd(m: &DMatrix<f64>) -> Option<f64> {
    if m.nrows() == 0 {
        return Some(0.0);
    }
    let chol = m.clone().cholesky()?;
    let l = chol.l_dirty();
    let mut acc = 0.0;
    for i in 0..m.nrows() {
        let d = l[(i, i)];
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        acc += 2.0 * d.ln();
    }
    Some(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_determinants() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 2.0, 1.0, 0.0, 1.0, 2.0]);
        assert!((det(&m) - 4.0).abs() < 1e-12);
        assert!((log_det_pd(&m).unwrap() - 4f64.ln()).abs() < 1e-12);
        assert!((psd_minor(&m, &[0, 2]) - 4.0).abs() < 1e-12);
        let singular = DMatrix::from_element(2, 2, 1.0);
        assert!(log_det_pd(&singular).is_none());
    }
}
