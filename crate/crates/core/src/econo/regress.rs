//! Pooled regression machinery: design assembly from a panel, removal of
//! sector and year effects, and sector-clustered Bartlett HAC covariance.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::panel::Panel;
use crate::error::{Error, Result};
use crate::linalg::ols;

/// How year effects common to all sectors are removed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CrossSection {
    /// Sector fixed effects only.
    None,
    /// Deviation from the yearly cross-sectional mean before lags are taken.
    #[default]
    TimeDemean,
    /// Explicit year indicator columns.
    YearDummies,
    /// Cross-sectional averages with sector-specific coefficients.
    Cce,
}

/// Newey–West rule of thumb `⌊4 (T/100)^(2/9)⌋`.
pub fn default_bandwidth(periods: usize) -> usize {
    (4.0 * (periods as f64 / 100.0).powf(2.0 / 9.0)).floor() as usize
}

/// Rows of a regression with every listed column present.
#[derive(Debug, Clone)]
pub struct Design {
    pub y: Vec<f64>,
    /// Column-major regressors.
    pub x: Vec<Vec<f64>>,
    pub names: Vec<String>,
    pub sector: Vec<usize>,
    pub year: Vec<usize>,
    /// Cross-sectional average columns partialled out sector by sector.
    pub csa: Vec<Vec<f64>>,
}

impl Design {
    /// Collect the complete-case rows of `dep` on `cols`, plus `csa` columns
    /// kept apart for sector-specific partialling.
    pub fn from_panel(panel: &Panel, dep: &str, cols: &[String], csa: &[String]) -> Result<Design> {
        let yv = panel.column(dep)?;
        let xs: Vec<&[f64]> = cols
            .iter()
            .map(|c| panel.column(c))
            .collect::<Result<_>>()?;
        let zs: Vec<&[f64]> = csa.iter().map(|c| panel.column(c)).collect::<Result<_>>()?;
        let mut d = Design {
            y: Vec::new(),
            x: vec![Vec::new(); cols.len()],
            names: cols.to_vec(),
            sector: Vec::new(),
            year: Vec::new(),
            csa: vec![Vec::new(); csa.len()],
        };
        for i in 0..panel.n_sectors() {
            for t in 0..panel.n_years() {
                let p = panel.idx(i, t);
                if yv[p].is_nan()
                    || xs.iter().any(|c| c[p].is_nan())
                    || zs.iter().any(|c| c[p].is_nan())
                {
                    continue;
                }
                d.y.push(yv[p]);
                for (k, c) in xs.iter().enumerate() {
                    d.x[k].push(c[p]);
                }
                for (k, c) in zs.iter().enumerate() {
                    d.csa[k].push(c[p]);
                }
                d.sector.push(i);
                d.year.push(t);
            }
        }
        Ok(d)
    }

    pub fn n_obs(&self) -> usize {
        self.y.len()
    }

    pub fn distinct_years(&self) -> usize {
        let mut ys = self.year.clone();
        ys.sort_unstable();
        ys.dedup();
        ys.len()
    }

    /// Append one indicator per sample year except the first.
    pub fn add_year_dummies(&mut self, years: &[i32]) {
        let mut present: Vec<usize> = self.year.clone();
        present.sort_unstable();
        present.dedup();
        for &t in present.iter().skip(1) {
            self.x.push(
                self.year
                    .iter()
                    .map(|&y| if y == t { 1.0 } else { 0.0 })
                    .collect(),
            );
            self.names.push(format!("year{}", years[t]));
        }
    }

    /// Rows grouped by sector, in row order.
    pub fn groups(&self) -> Vec<(usize, Vec<usize>)> {
        let mut order: Vec<usize> = Vec::new();
        let mut map: HashMap<usize, Vec<usize>> = HashMap::new();
        for (r, &s) in self.sector.iter().enumerate() {
            map.entry(s)
                .or_insert_with(|| {
                    order.push(s);
                    Vec::new()
                })
                .push(r);
        }
        order
            .into_iter()
            .map(|s| (s, map.remove(&s).unwrap()))
            .collect()
    }

    /// Subtract sector means from `y` and every regressor.
    pub fn within(&mut self) {
        for (_, rows) in self.groups() {
            demean_rows(&mut self.y, &rows);
            for col in &mut self.x {
                demean_rows(col, &rows);
            }
        }
    }

    /// Residualize `y` and every regressor on `[1, csa]` sector by sector.
    /// The projection uses a least-squares solve so collinear averages within
    /// a sector do not break it.
    pub fn partial_out_csa(&mut self) -> Result<()> {
        for (s, rows) in self.groups() {
            let k = self.csa.len() + 1;
            if rows.len() <= k {
                return Err(Error::numeric(format!(
                    "sector index {s} has {} observations for {k} cross-sectional terms",
                    rows.len()
                )));
            }
            let z = DMatrix::from_fn(rows.len(), k, |r, c| {
                if c == 0 {
                    1.0
                } else {
                    self.csa[c - 1][rows[r]]
                }
            });
            let svd = z.clone().svd(true, true);
            let residualize = |col: &mut Vec<f64>| -> Result<()> {
                let v = DVector::from_iterator(rows.len(), rows.iter().map(|&r| col[r]));
                let b = svd
                    .solve(&v, 1e-12)
                    .map_err(|e| Error::numeric(e.to_string()))?;
                let fitted = &z * b;
                for (j, &r) in rows.iter().enumerate() {
                    col[r] -= fitted[j];
                }
                Ok(())
            };
            residualize(&mut self.y)?;
            for col in &mut self.x {
                residualize(col)?;
            }
        }
        Ok(())
    }

    pub fn x_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_obs(), self.x.len(), |r, c| self.x[c][r])
    }
}

fn demean_rows(col: &mut [f64], rows: &[usize]) {
    let m = rows.iter().map(|&r| col[r]).sum::<f64>() / rows.len() as f64;
    for &r in rows {
        col[r] -= m;
    }
}

/// Pooled OLS on a transformed design with clustered HAC covariance.
#[derive(Debug, Clone)]
pub struct PooledFit {
    pub names: Vec<String>,
    pub coef: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub residuals: Vec<f64>,
    pub sector: Vec<usize>,
    pub year: Vec<usize>,
    pub n_obs: usize,
    /// R² of the transformed regression.
    pub r2: f64,
    pub bandwidth: usize,
}

impl PooledFit {
    pub fn se(&self, k: usize) -> f64 {
        self.cov[(k, k)].max(0.0).sqrt()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Residuals per sector in year order.
    pub fn residual_groups(&self) -> Vec<Vec<f64>> {
        let mut by: std::collections::BTreeMap<usize, Vec<(usize, f64)>> = Default::default();
        for ((&s, &t), &e) in self.sector.iter().zip(&self.year).zip(&self.residuals) {
            by.entry(s).or_default().push((t, e));
        }
        by.into_values()
            .map(|mut v| {
                v.sort_by_key(|p| p.0);
                v.into_iter().map(|p| p.1).collect()
            })
            .collect()
    }
}

/// Fit an already transformed design.
pub fn pooled_ols(d: &Design, bandwidth: usize) -> Result<PooledFit> {
    let x = d.x_matrix();
    let y = DVector::from_column_slice(&d.y);
    let fit = ols(&x, &y, &d.names)?;
    let cov = hac_covariance(
        &x,
        &fit.residuals,
        &fit.xtx_inv,
        &d.sector,
        &d.year,
        bandwidth,
    );
    let ybar = d.y.iter().sum::<f64>() / d.n_obs() as f64;
    let sst: f64 = d.y.iter().map(|v| (v - ybar).powi(2)).sum();
    let ssr = fit.residuals.norm_squared();
    Ok(PooledFit {
        names: d.names.clone(),
        coef: fit.coef,
        cov,
        residuals: fit.residuals.as_slice().to_vec(),
        sector: d.sector.clone(),
        year: d.year.clone(),
        n_obs: d.n_obs(),
        r2: if sst > 0.0 { 1.0 - ssr / sst } else { f64::NAN },
        bandwidth,
    })
}

/// `(XᵀX)⁻¹ S (XᵀX)⁻¹` with
/// `S = Σ_i Σ_{|l|≤L} (1 - |l|/(L+1)) Σ_t x_it e_it e_{i,t-l} x_{i,t-l}ᵀ`,
/// pairs matched on calendar distance within a sector.
pub fn hac_covariance(
    x: &DMatrix<f64>,
    e: &DVector<f64>,
    xtx_inv: &DMatrix<f64>,
    sector: &[usize],
    year: &[usize],
    bandwidth: usize,
) -> DMatrix<f64> {
    let k = x.ncols();
    let mut s = DMatrix::<f64>::zeros(k, k);
    let mut by: HashMap<usize, Vec<usize>> = HashMap::new();
    for (r, &g) in sector.iter().enumerate() {
        by.entry(g).or_default().push(r);
    }
    let mut sectors: Vec<_> = by.into_iter().collect();
    sectors.sort_by_key(|p| p.0);
    for (_, rows) in sectors {
        let scores: Vec<DVector<f64>> = rows.iter().map(|&r| x.row(r).transpose() * e[r]).collect();
        let at: HashMap<usize, usize> = rows
            .iter()
            .enumerate()
            .map(|(j, &r)| (year[r], j))
            .collect();
        for (j, &r) in rows.iter().enumerate() {
            s += &scores[j] * scores[j].transpose();
            for l in 1..=bandwidth {
                let Some(t) = year[r].checked_sub(l) else {
                    continue;
                };
                let Some(&jl) = at.get(&t) else { continue };
                let w = 1.0 - l as f64 / (bandwidth as f64 + 1.0);
                let cross = &scores[j] * scores[jl].transpose();
                s += (&cross + cross.transpose()) * w;
            }
        }
    }
    let v = xtx_inv * s * xtx_inv;
    (&v + v.transpose()) * 0.5
}
