use log::{info, warn};
use nalgebra::{DMatrix, DVector};

use super::panel::{lag_name, Panel};
use super::regress::{default_bandwidth, pooled_ols, CrossSection, Design, PooledFit};
use super::serial::{serial_corr_test, SerialCorrTest};
use super::{Coefficient, EstimationResult, EstimatorSpec, ModelKind, ModelVars};
use crate::error::{Error, Result};
use crate::linalg::ols;

/// Highest regressor lag order tried by [`select_lag_order`].
pub const MAX_AUTO_Q: usize = 4;
/// Serial-correlation p-value above which a lag order is accepted.
pub const ACCEPT_P: f64 = 0.10;
/// Fewest sectors a mean-group estimate is reported for.
pub const MIN_MG_SECTORS: usize = 10;

fn cce_lags(spec: &EstimatorSpec, periods: usize) -> usize {
    spec.cce_lags
        .unwrap_or_else(|| (periods as f64).cbrt().floor() as usize)
}

/// Copy the panel and apply the level-stage cross-section handling: time
/// demeaning of the model variables, or cross-sectional averages (and their
/// lags) for CCE. Returns the working panel and the CSA column names.
fn prepare(panel: &Panel, vars: &ModelVars, spec: &EstimatorSpec) -> Result<(Panel, Vec<String>)> {
    let mut work = panel.clone();
    let mut base = vec![vars.dep.clone()];
    base.extend(vars.regressors.iter().cloned());
    let mut csa = Vec::new();
    match spec.cross_section {
        CrossSection::TimeDemean => work.demean_time(&base)?,
        CrossSection::Cce => {
            let lags = cce_lags(spec, panel.n_years());
            for c in work.cce_augment(&base)? {
                for l in 0..=lags {
                    csa.push(work.add_lag(&c, l)?);
                }
            }
        }
        CrossSection::None | CrossSection::YearDummies => {}
    }
    Ok((work, csa))
}

/// Regressor columns of ARDL(p, q): dependent-variable lags 1..p, then each
/// regressor at lags 0..q.
fn ardl_columns(
    work: &mut Panel,
    vars: &ModelVars,
    p: usize,
    q: usize,
) -> Result<(Vec<String>, Vec<String>)> {
    let mut dep_lags = Vec::with_capacity(p);
    for l in 1..=p {
        dep_lags.push(work.add_lag(&vars.dep, l)?);
    }
    let mut cols = dep_lags.clone();
    for r in &vars.regressors {
        for l in 0..=q {
            cols.push(work.add_lag(r, l)?);
        }
    }
    Ok((cols, dep_lags))
}

fn pooled(
    work: &Panel,
    dep: &str,
    cols: &[String],
    csa: &[String],
    spec: &EstimatorSpec,
) -> Result<PooledFit> {
    let mut d = Design::from_panel(work, dep, cols, csa)?;
    if d.n_obs() == 0 {
        return Err(Error::input(
            "no complete observations for the requested lag structure",
        ));
    }
    match spec.cross_section {
        CrossSection::Cce => d.partial_out_csa()?,
        CrossSection::YearDummies => {
            d.add_year_dummies(&work.years);
            d.within();
        }
        CrossSection::None | CrossSection::TimeDemean => d.within(),
    }
    let bw = spec
        .hac_bandwidth
        .unwrap_or_else(|| default_bandwidth(d.distinct_years()));
    pooled_ols(&d, bw)
}

fn serial(groups: &[Vec<f64>]) -> Option<SerialCorrTest> {
    match serial_corr_test(groups) {
        Ok(t) => Some(t),
        Err(e) => {
            warn!("serial correlation test skipped: {e}");
            None
        }
    }
}

/// Long-run effect `Σ b / (1 - Σ a)` with delta-method standard error.
/// `a` and `b` index into `coef`/`cov`.
pub fn long_run(coef: &DVector<f64>, cov: &DMatrix<f64>, a: &[usize], b: &[usize]) -> (f64, f64) {
    let sa: f64 = a.iter().map(|&k| coef[k]).sum();
    let sb: f64 = b.iter().map(|&k| coef[k]).sum();
    let denom = 1.0 - sa;
    let est = sb / denom;
    let mut g = DVector::<f64>::zeros(coef.len());
    for &k in b {
        g[k] += 1.0 / denom;
    }
    for &k in a {
        g[k] += sb / (denom * denom);
    }
    let var = (g.transpose() * cov * &g)[(0, 0)];
    (est, var.max(0.0).sqrt())
}

/// Adjustment parameter `-(1 - Σ a)` with its standard error.
pub fn adjustment(coef: &DVector<f64>, cov: &DMatrix<f64>, a: &[usize]) -> (f64, f64) {
    let sa: f64 = a.iter().map(|&k| coef[k]).sum();
    let var: f64 = a
        .iter()
        .flat_map(|&i| a.iter().map(move |&j| (i, j)))
        .map(|(i, j)| cov[(i, j)])
        .sum();
    (-(1.0 - sa), var.max(0.0).sqrt())
}

fn short_run(fit: &PooledFit) -> Vec<Coefficient> {
    fit.names
        .iter()
        .enumerate()
        .map(|(k, n)| Coefficient {
            term: n.clone(),
            estimate: fit.coef[k],
            se: fit.se(k),
        })
        .collect()
}

/// Pooled within ARDL(p, q) with long-run effects for every regressor.
pub fn ardl_fit(panel: &Panel, vars: &ModelVars, spec: &EstimatorSpec) -> Result<EstimationResult> {
    spec.validate()?;
    let (mut work, csa) = prepare(panel, vars, spec)?;
    let (cols, dep_lags) = ardl_columns(&mut work, vars, spec.p, spec.q)?;
    let fit = pooled(&work, &vars.dep, &cols, &csa, spec)?;
    let a: Vec<usize> = dep_lags.iter().map(|n| fit.position(n).unwrap()).collect();
    let long = vars
        .regressors
        .iter()
        .map(|r| {
            let b: Vec<usize> = (0..=spec.q)
                .map(|l| fit.position(&lag_name(r, l)).unwrap())
                .collect();
            let (estimate, se) = long_run(&fit.coef, &fit.cov, &a, &b);
            Coefficient {
                term: r.clone(),
                estimate,
                se,
            }
        })
        .collect();
    let (adj, adj_se) = adjustment(&fit.coef, &fit.cov, &a);
    let groups = fit.residual_groups();
    Ok(EstimationResult {
        model: spec.label(),
        kind: spec.kind,
        cross_section: spec.cross_section,
        short_run: short_run(&fit),
        long_run: long,
        adjustment: Some(Coefficient {
            term: "adjustment".into(),
            estimate: adj,
            se: adj_se,
        }),
        serial_corr: serial(&groups),
        n_obs: fit.n_obs,
        n_sectors: groups.len(),
        r2: Some(fit.r2),
        rmse: None,
        bandwidth: fit.bandwidth,
        cov: Some(fit.cov.clone()),
        dispersion: Vec::new(),
        dropped_sectors: Vec::new(),
        residuals: groups,
    })
}

/// Distributed-lag level regression: `y` on each regressor's level plus its
/// first differences at lags `0..=P` (`spec.p`). The level coefficient is the
/// long-run effect.
pub fn csdl_fit(panel: &Panel, vars: &ModelVars, spec: &EstimatorSpec) -> Result<EstimationResult> {
    spec.validate()?;
    let (mut work, csa) = prepare(panel, vars, spec)?;
    let mut cols = vars.regressors.clone();
    for r in &vars.regressors {
        let d = work.add_diff(r)?;
        for l in 0..=spec.p {
            cols.push(work.add_lag(&d, l)?);
        }
    }
    let fit = pooled(&work, &vars.dep, &cols, &csa, spec)?;
    let long = vars
        .regressors
        .iter()
        .map(|r| {
            let k = fit.position(r).unwrap();
            Coefficient {
                term: r.clone(),
                estimate: fit.coef[k],
                se: fit.se(k),
            }
        })
        .collect();
    let groups = fit.residual_groups();
    Ok(EstimationResult {
        model: spec.label(),
        kind: spec.kind,
        cross_section: spec.cross_section,
        short_run: short_run(&fit),
        long_run: long,
        adjustment: None,
        serial_corr: serial(&groups),
        n_obs: fit.n_obs,
        n_sectors: groups.len(),
        r2: Some(fit.r2),
        rmse: None,
        bandwidth: fit.bandwidth,
        cov: Some(fit.cov.clone()),
        dispersion: Vec::new(),
        dropped_sectors: Vec::new(),
        residuals: groups,
    })
}

/// Outlier-robust mean: drop the `2k` values farthest from the median,
/// `k = ⌈trim · n⌉`, and average the rest.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustMean {
    pub mean: f64,
    /// 1 for kept values, 0 for trimmed ones, aligned with the input.
    pub weights: Vec<f64>,
    /// Standard deviation of the kept values.
    pub dispersion: f64,
}

impl RobustMean {
    pub fn kept(&self) -> usize {
        self.weights.iter().filter(|&&w| w > 0.0).count()
    }

    pub fn se(&self) -> f64 {
        self.dispersion / (self.kept() as f64).sqrt()
    }
}

pub fn robust_mean(values: &[f64], trim: f64) -> RobustMean {
    let n = values.len();
    let median = crate::stats::percentile(values, 0.5);
    let k = (trim.max(0.0) * n as f64).ceil() as usize;
    let drop = (2 * k).min(n.saturating_sub(1));
    let mut order: Vec<usize> = (0..n).collect();
    // Stable on ties: the earlier of two equally distant values is kept.
    order.sort_by(|&a, &b| {
        (values[b] - median)
            .abs()
            .total_cmp(&(values[a] - median).abs())
            .then(b.cmp(&a))
    });
    let mut weights = vec![1.0; n];
    for &i in order.iter().take(drop) {
        weights[i] = 0.0;
    }
    let kept: Vec<f64> = values
        .iter()
        .zip(&weights)
        .filter(|(_, &w)| w > 0.0)
        .map(|(&v, _)| v)
        .collect();
    RobustMean {
        mean: crate::stats::mean(&kept),
        dispersion: crate::stats::sd(&kept),
        weights,
    }
}

struct SectorFit {
    long_run: Vec<f64>,
    adjustment: f64,
    short: Vec<f64>,
    residuals: Vec<f64>,
}

/// Sector-by-sector ARDL(p, q) with an intercept (plus sector-specific
/// cross-sectional averages under CCE); long-run effects are combined with
/// [`robust_mean`].
pub fn mean_group_fit(
    panel: &Panel,
    vars: &ModelVars,
    spec: &EstimatorSpec,
) -> Result<EstimationResult> {
    spec.validate()?;
    let (mut work, csa) = prepare(panel, vars, spec)?;
    let (cols, dep_lags) = ardl_columns(&mut work, vars, spec.p, spec.q)?;
    let d = Design::from_panel(&work, &vars.dep, &cols, &csa)?;
    let mut names = vec!["const".to_string()];
    names.extend(cols.iter().cloned());
    names.extend(csa.iter().cloned());
    let a: Vec<usize> = (1..=dep_lags.len()).collect();
    let groups = d.groups();
    let fits: Vec<(usize, Result<SectorFit>)> = {
        use rayon::prelude::*;
        groups
            .par_iter()
            .map(|(s, rows)| {
                let k = names.len();
                let fit = (|| {
                    if rows.len() <= k {
                        return Err(Error::numeric(format!(
                            "{} observations for {k} coefficients",
                            rows.len()
                        )));
                    }
                    let x = DMatrix::from_fn(rows.len(), k, |r, c| match c {
                        0 => 1.0,
                        c if c <= cols.len() => d.x[c - 1][rows[r]],
                        c => d.csa[c - 1 - cols.len()][rows[r]],
                    });
                    let y = DVector::from_iterator(rows.len(), rows.iter().map(|&r| d.y[r]));
                    let f = ols(&x, &y, &names)?;
                    let sa: f64 = a.iter().map(|&j| f.coef[j]).sum();
                    let long_run: Vec<f64> = (0..vars.regressors.len())
                        .map(|ri| {
                            let first = 1 + dep_lags.len() + ri * (spec.q + 1);
                            (first..=first + spec.q).map(|j| f.coef[j]).sum::<f64>() / (1.0 - sa)
                        })
                        .collect();
                    if long_run.iter().any(|v| !v.is_finite()) {
                        return Err(Error::numeric("unit root in sector dynamics"));
                    }
                    Ok(SectorFit {
                        long_run,
                        adjustment: -(1.0 - sa),
                        short: f.coef.iter().skip(1).take(cols.len()).copied().collect(),
                        residuals: f.residuals.as_slice().to_vec(),
                    })
                })();
                (*s, fit)
            })
            .collect()
    };
    let mut ok = Vec::new();
    let mut dropped = Vec::new();
    for (s, f) in fits {
        match f {
            Ok(f) => ok.push(f),
            Err(e) => {
                info!("mean group: dropping sector {}: {e}", work.sectors[s]);
                dropped.push(work.sectors[s].clone());
            }
        }
    }
    if ok.len() < MIN_MG_SECTORS {
        return Err(Error::numeric(format!(
            "only {} estimable sectors; mean group needs at least {MIN_MG_SECTORS}",
            ok.len()
        )));
    }
    let combine = |vals: Vec<f64>, term: &str| -> (Coefficient, f64) {
        let rm = robust_mean(&vals, spec.trim);
        (
            Coefficient {
                term: term.to_string(),
                estimate: rm.mean,
                se: rm.se(),
            },
            rm.dispersion,
        )
    };
    let mut long = Vec::new();
    let mut dispersion = Vec::new();
    for (ri, r) in vars.regressors.iter().enumerate() {
        let (c, disp) = combine(ok.iter().map(|f| f.long_run[ri]).collect(), r);
        long.push(c);
        dispersion.push(disp);
    }
    let short = cols
        .iter()
        .enumerate()
        .map(|(j, n)| combine(ok.iter().map(|f| f.short[j]).collect(), n).0)
        .collect();
    let (adj, _) = combine(ok.iter().map(|f| f.adjustment).collect(), "adjustment");
    let residuals: Vec<Vec<f64>> = ok.iter().map(|f| f.residuals.clone()).collect();
    let n_obs: usize = residuals.iter().map(Vec::len).sum();
    let ssr: f64 = residuals.iter().flatten().map(|e| e * e).sum();
    Ok(EstimationResult {
        model: spec.label(),
        kind: spec.kind,
        cross_section: spec.cross_section,
        short_run: short,
        long_run: long,
        adjustment: Some(adj),
        serial_corr: serial(&residuals),
        n_obs,
        n_sectors: ok.len(),
        r2: None,
        rmse: Some((ssr / n_obs as f64).sqrt()),
        bandwidth: 0,
        cov: None,
        dispersion,
        dropped_sectors: dropped,
        residuals,
    })
}

/// Dispatch on `spec.kind`.
pub fn fit(panel: &Panel, vars: &ModelVars, spec: &EstimatorSpec) -> Result<EstimationResult> {
    match spec.kind {
        ModelKind::Ardl => ardl_fit(panel, vars, spec),
        ModelKind::CsDl => csdl_fit(panel, vars, spec),
        ModelKind::MeanGroupArdl | ModelKind::MeanGroupCceArdl => mean_group_fit(panel, vars, spec),
    }
}

/// `(q, p-value)` for each lag order tried.
pub type LagTrail = Vec<(usize, Option<f64>)>;

/// Raise the regressor lag order from `spec.q` until the residual
/// serial-correlation p-value exceeds [`ACCEPT_P`], up to [`MAX_AUTO_Q`].
/// Returns the accepted (or last) fit and the `(q, p-value)` sequence.
pub fn select_lag_order(
    panel: &Panel,
    vars: &ModelVars,
    spec: &EstimatorSpec,
) -> Result<(EstimationResult, LagTrail)> {
    let mut trail = Vec::new();
    let mut s = spec.clone();
    loop {
        let res = fit(panel, vars, &s)?;
        let p = res.serial_corr.map(|t| t.p_value);
        trail.push((s.q, p));
        if p.is_some_and(|p| p > ACCEPT_P) || s.q >= MAX_AUTO_Q {
            if !p.is_some_and(|p| p > ACCEPT_P) {
                warn!(
                    "lag selection stopped at q = {} without clearing the serial correlation test",
                    s.q
                );
            }
            return Ok((res, trail));
        }
        s.q += 1;
    }
}
