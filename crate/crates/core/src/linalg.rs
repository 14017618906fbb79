use alloc::format;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::math;

pub fn is_symmetric(m: &DMatrix<f64>) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let (a, b) = (m[(i, j)], m[(j, i)]);
            if !(a.is_finite() && b.is_finite()) {
                return false;
            }
            if math::abs(a - b) > 1e-10 * (1.0 + math::abs(a).max(math::abs(b))) {
                return false;
            }
        }
    }
    true
}

/// Cholesky factor, adding `1e-10 * trace / dim` to the diagonal on failure
/// (up to three times).
pub fn cholesky_jitter(m: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if !is_symmetric(m) {
        return Err(Error::MatrixDomain("matrix is not symmetric".into()));
    }
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok(c);
    }
    let n = m.nrows().max(1);
    let jitter = 1e-10 * math::abs(m.trace()) / n as f64;
    let mut a = m.clone();
    for _ in 0..3 {
        for i in 0..m.nrows() {
            a[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(a.clone()) {
            return Ok(c);
        }
    }
    Err(Error::Decomposition(format!(
        "{}x{} matrix not positive definite after jitter",
        m.nrows(),
        m.ncols()
    )))
}

pub fn ln_det_chol(c: &Cholesky<f64, Dyn>) -> f64 {
    let l = c.l_dirty();
    (0..l.nrows()).map(|i| 2.0 * math::ln(l[(i, i)])).sum()
}

/// Symmetric inverse via Cholesky.
pub fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let c = cholesky_jitter(m)?;
    let mut inv = c.inverse();
    symmetrize(&mut inv);
    Ok(inv)
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Solve `L' x = b` for lower-triangular `L`.
pub fn solve_upper_transpose(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = l.nrows();
    let mut x = b.clone();
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    x
}
