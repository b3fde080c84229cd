//! Small dense linear-algebra helpers on top of nalgebra's Cholesky.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Cholesky factorization with a single jittered retry.
pub fn cholesky_jittered(
    m: &DMatrix<f64>,
    jitter: f64,
    what: &str,
) -> Result<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok(c);
    }
    if jitter > 0.0 {
        let scale = m.diagonal().iter().fold(0.0f64, |a, &d| a.max(d.abs())).max(1.0);
        let mut j = m.clone();
        for i in 0..j.nrows() {
            j[(i, i)] += jitter * scale;
        }
        if let Some(c) = Cholesky::new(j) {
            return Ok(c);
        }
    }
    Err(Error::NotPositiveDefinite(what.to_string()))
}

/// log-determinant from a Cholesky factor: 2 * sum(log diag(L)).
pub fn chol_logdet(c: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * c.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

pub fn logdet_spd(m: &DMatrix<f64>, jitter: f64, what: &str) -> Result<f64> {
    Ok(chol_logdet(&cholesky_jittered(m, jitter, what)?))
}

pub fn inverse_spd(m: &DMatrix<f64>, jitter: f64, what: &str) -> Result<DMatrix<f64>> {
    let inv = cholesky_jittered(m, jitter, what)?.inverse();
    Ok(symmetrize(inv))
}

pub fn symmetrize(mut m: DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let a = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = a;
            m[(j, i)] = a;
        }
    }
    m
}

/// Quadratic form x^T M x.
pub fn quad_form(m: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    x.dot(&(m * x))
}

/// Row-wise quadratic forms a_i^T M a_i for the rows a_i of `a`.
pub fn row_quad_forms(a: &DMatrix<f64>, m: &DMatrix<f64>) -> DVector<f64> {
    let am = a * m;
    DVector::from_iterator(
        a.nrows(),
        (0..a.nrows()).map(|i| am.row(i).dot(&a.row(i))),
    )
}

/// Least-squares fit of `y` on `x`, falling back to a ridge penalty when
/// `x^T x` is singular or `x` has at least as many columns as rows.
///
/// Returns the coefficients and `(x^T x + ridge I)^{-1}`.
pub fn least_squares(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    ridge: f64,
) -> (DVector<f64>, DMatrix<f64>) {
    let k = x.ncols();
    let xtx = x.transpose() * x;
    let xty = x.transpose() * y;
    if x.nrows() > k {
        if let Some(c) = Cholesky::new(xtx.clone()) {
            let rcond = c.l_dirty().diagonal().iter().fold((f64::MAX, 0.0f64), |(lo, hi), &d| {
                (lo.min(d.abs()), hi.max(d.abs()))
            });
            if rcond.0 > 1e-7 * rcond.1 {
                return (c.solve(&xty), symmetrize(c.inverse()));
            }
        }
    }
    let mut pen = xtx;
    for i in 0..k {
        pen[(i, i)] += ridge.max(f64::MIN_POSITIVE);
    }
    let c = Cholesky::new(pen).expect("ridge-penalized normal equations are positive definite");
    (c.solve(&xty), symmetrize(c.inverse()))
}

/// Copy of `m` with row and column `k` removed.
pub fn delete_row_col(m: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    m.clone().remove_row(k).remove_column(k)
}

pub fn delete_entry(v: &DVector<f64>, k: usize) -> DVector<f64> {
    v.clone().remove_row(k)
}

pub fn select_columns(m: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), cols.len(), |i, j| m[(i, cols[j])])
}
