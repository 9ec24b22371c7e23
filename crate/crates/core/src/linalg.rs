//! Dense least squares and matrix utilities on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative pivot tolerance for declaring a column collinear with the ones
/// before it.
const RANK_TOL: f64 = 1e-10;

/// Cholesky factor of a symmetric positive-definite Gram matrix that reports
/// every column whose pivot collapses instead of failing blindly.
pub fn checked_cholesky(gram: &DMatrix<f64>, names: &[String]) -> Result<DMatrix<f64>> {
    let k = gram.nrows();
    let mut l = DMatrix::<f64>::zeros(k, k);
    let mut bad = Vec::new();
    for j in 0..k {
        let mut d = gram[(j, j)];
        for p in 0..j {
            d -= l[(j, p)] * l[(j, p)];
        }
        let scale = gram[(j, j)].abs().max(f64::MIN_POSITIVE);
        if !(d > RANK_TOL * scale) || gram[(j, j)] == 0.0 {
            bad.push(names.get(j).cloned().unwrap_or_else(|| format!("col{j}")));
            // Keep factoring the remaining columns so every offender is listed.
            l[(j, j)] = 1.0;
            continue;
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..k {
            let mut s = gram[(i, j)];
            for p in 0..j {
                s -= l[(i, p)] * l[(j, p)];
            }
            l[(i, j)] = s / djj;
        }
    }
    if !bad.is_empty() {
        return Err(Error::RankDeficient { columns: bad });
    }
    Ok(l)
}

/// Inverse of `L Lᵀ` from its lower factor.
pub fn cholesky_inverse(l: &DMatrix<f64>) -> DMatrix<f64> {
    let k = l.nrows();
    let linv = l
        .clone()
        .solve_lower_triangular(&DMatrix::identity(k, k))
        .expect("nonzero diagonal");
    linv.transpose() * linv
}

#[derive(Debug, Clone)]
pub struct OlsFit {
    pub coef: DVector<f64>,
    pub residuals: DVector<f64>,
    /// (XᵀX)⁻¹
    pub xtx_inv: DMatrix<f64>,
}

/// Ordinary least squares with an explicit rank check.
pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>, names: &[String]) -> Result<OlsFit> {
    if x.nrows() != y.len() {
        return Err(Error::Dimension {
            expected: x.nrows(),
            got: y.len(),
        });
    }
    if x.nrows() < x.ncols() {
        return Err(Error::numeric(format!(
            "{} observations for {} regressors",
            x.nrows(),
            x.ncols()
        )));
    }
    let xt = x.transpose();
    let gram = &xt * x;
    let l = checked_cholesky(&gram, names)?;
    let xtx_inv = cholesky_inverse(&l);
    let coef = &xtx_inv * (&xt * y);
    let residuals = y - x * &coef;
    Ok(OlsFit {
        coef,
        residuals,
        xtx_inv,
    })
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Entrywise max-abs norm.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, v| a.max(v.abs()))
}

/// Induced 1-norm (max column absolute sum).
pub fn norm1(m: &DMatrix<f64>) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}
