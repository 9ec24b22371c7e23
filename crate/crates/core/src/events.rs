//! Peak-increase events and local projections of innovation output on them.
//!
//! A sector's event year is the year its shock series rose the most. The
//! response of `ΔN` at horizon `k` is the coefficient on the event dummy in
//!
//! ```text
//! ΔN_{i,t+k} = Σ_{l=1,2} ρ_l ΔN_{i,t-l} + a E_it + b E_{i,t-1} + c X_it + d X_{i,t-1}
//!              + Σ_{h=1..min(k,cap)} (e_h E_{i,t+h} + f_h X_{i,t+h}) + α_i + τ_t + u
//! ```
//!
//! The contemporaneous lead terms coincide with `E_it` and `X_it` and are not
//! duplicated. By default each horizon uses event rows plus rows whose whole
//! horizon ends before the sector's event; on that sample the event lag and
//! leads are identically zero and drop out.

use std::io::{Read, Write};

use log::{info, warn};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::econo::{Design, Panel};
use crate::error::{Error, Result};
use crate::linalg::ols;
use crate::stats::normal_quantile;

/// Number of lags of the outcome on the right-hand side.
pub const OUTCOME_LAGS: usize = 2;
pub const DEFAULT_HORIZONS: usize = 10;
pub const DEFAULT_LEAD_CAP: usize = 2;
/// Name of the event dummy column added to the working panel.
pub const EVENT_COLUMN: &str = "E";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShockKind {
    /// Peak increase in direct linkage.
    Direct,
    /// Peak increase in the network latent factor.
    Latent,
}

impl ShockKind {
    pub fn tag(self) -> &'static str {
        match self {
            ShockKind::Direct => "direct",
            ShockKind::Latent => "latent",
        }
    }
}

impl std::str::FromStr for ShockKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(ShockKind::Direct),
            "latent" => Ok(ShockKind::Latent),
            _ => Err(Error::input(format!("unknown shock {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorEvent {
    pub sector: String,
    pub year: i32,
    pub increase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSet {
    pub shock: ShockKind,
    /// Inclusive year window the increases were taken from.
    pub window: (i32, i32),
    pub events: Vec<SectorEvent>,
    /// Sectors whose series never rose inside the window.
    pub decreasing: Vec<String>,
    /// Sectors where the maximal increase occurred more than once.
    pub tied: Vec<String>,
    /// Sectors without two consecutive observations in the window.
    pub excluded: Vec<String>,
}

impl EventSet {
    pub fn year_of(&self, sector: &str) -> Option<i32> {
        self.events
            .iter()
            .find(|e| e.sector == sector)
            .map(|e| e.year)
    }

    /// Dummy that is 1 in a sector's event year and 0 otherwise. Sectors
    /// without an event are missing throughout so they leave the sample.
    pub fn dummy(&self, panel: &Panel) -> Vec<f64> {
        let mut v = vec![f64::NAN; panel.len()];
        for (i, s) in panel.sectors.iter().enumerate() {
            let Some(ey) = self.year_of(s) else { continue };
            for (t, &y) in panel.years.iter().enumerate() {
                v[panel.idx(i, t)] = if y == ey { 1.0 } else { 0.0 };
            }
        }
        v
    }
}

/// Event year per sector: the year `t` in `window` maximizing
/// `L_t - L_{t-1}` with both years observed and inside the window. The
/// earliest year wins ties.
pub fn detect_events(
    panel: &Panel,
    column: &str,
    shock: ShockKind,
    window: (i32, i32),
) -> Result<EventSet> {
    if window.0 >= window.1 {
        return Err(Error::input(format!(
            "event window {}-{} is empty",
            window.0, window.1
        )));
    }
    let mut set = EventSet {
        shock,
        window,
        events: Vec::new(),
        decreasing: Vec::new(),
        tied: Vec::new(),
        excluded: Vec::new(),
    };
    for (i, sector) in panel.sectors.iter().enumerate() {
        let series = panel.sector_series(column, i)?;
        let mut best: Option<(i32, f64)> = None;
        let mut tie = false;
        for t in 1..panel.n_years() {
            let (y0, y1) = (panel.years[t - 1], panel.years[t]);
            if y0 < window.0 || y1 > window.1 || series[t].is_nan() || series[t - 1].is_nan() {
                continue;
            }
            let d = series[t] - series[t - 1];
            match best {
                Some((_, b)) if d < b => {}
                Some((_, b)) if d == b => tie = true,
                _ => {
                    best = Some((y1, d));
                    tie = false;
                }
            }
        }
        match best {
            None => {
                info!("sector {sector}: no consecutive observations of {column} in the window; excluded");
                set.excluded.push(sector.clone());
            }
            Some((year, increase)) => {
                if tie {
                    info!("sector {sector}: tied peak increase, earliest year {year} kept");
                    set.tied.push(sector.clone());
                }
                if increase < 0.0 {
                    set.decreasing.push(sector.clone());
                }
                set.events.push(SectorEvent {
                    sector: sector.clone(),
                    year,
                    increase,
                });
            }
        }
    }
    if set.events.is_empty() {
        return Err(Error::input(format!(
            "no sector has an event in {}-{}",
            window.0, window.1
        )));
    }
    Ok(set)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LpErrors {
    /// Heteroskedasticity-robust with the HC1 degrees-of-freedom scaling.
    #[default]
    Hc1,
    /// Clustered by sector.
    ClusterSector,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LpSpec {
    pub horizons: usize,
    pub lead_cap: usize,
    pub errors: LpErrors,
    /// Keep only event rows and rows whose whole horizon precedes the
    /// sector's event, so later responses do not leak into the sector and
    /// year effects. Regressors that become identically zero are dropped.
    pub clean_controls: bool,
}

impl Default for LpSpec {
    fn default() -> Self {
        LpSpec {
            horizons: DEFAULT_HORIZONS,
            lead_cap: DEFAULT_LEAD_CAP,
            errors: LpErrors::Hc1,
            clean_controls: true,
        }
    }
}

/// Outcome (already differenced) and control columns of a projection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LpVars {
    pub outcome: String,
    pub control: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpPoint {
    pub horizon: usize,
    pub coef: f64,
    pub se: f64,
    pub lo90: f64,
    pub hi90: f64,
    pub lo95: f64,
    pub hi95: f64,
    pub n_obs: usize,
}

impl LpPoint {
    fn new(horizon: usize, coef: f64, se: f64, n_obs: usize) -> Self {
        let (z90, z95) = (normal_quantile(0.95), normal_quantile(0.975));
        LpPoint {
            horizon,
            coef,
            se,
            lo90: coef - z90 * se,
            hi90: coef + z90 * se,
            lo95: coef - z95 * se,
            hi95: coef + z95 * se,
            n_obs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpResult {
    pub shock: ShockKind,
    pub subperiod: String,
    pub points: Vec<LpPoint>,
    /// Regressor names per horizon, year dummies left out.
    pub columns: Vec<Vec<String>>,
    /// Requested horizon count when it had to be cut back.
    pub truncated_from: Option<usize>,
}

impl LpResult {
    pub fn coefficients(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.coef).collect()
    }
}

/// Largest horizon that leaves two usable years per sector after taking
/// outcome lags; a single year has no within-sector variation.
fn max_horizon(years: usize) -> usize {
    years.saturating_sub(OUTCOME_LAGS + 2)
}

/// Local projection of the outcome on the event dummy for horizons
/// `1..=spec.horizons`, one regression per horizon.
pub fn local_projection(
    panel: &Panel,
    events: &EventSet,
    vars: &LpVars,
    spec: &LpSpec,
    subperiod: &str,
) -> Result<LpResult> {
    if spec.horizons == 0 {
        return Err(Error::input("local projection horizons start at 1"));
    }
    let avail = max_horizon(panel.n_years());
    if avail == 0 {
        return Err(Error::input(format!(
            "{} years leave no forward horizon",
            panel.n_years()
        )));
    }
    let mut truncated_from = None;
    let horizons = if spec.horizons > avail {
        warn!(
            "{} shock, {subperiod}: horizons cut from {} to {avail} by the sample length",
            events.shock.tag(),
            spec.horizons
        );
        truncated_from = Some(spec.horizons);
        avail
    } else {
        spec.horizons
    };

    let mut work = panel.clone();
    work.set(EVENT_COLUMN, events.dummy(panel))?;
    let max_lead = spec.lead_cap.min(horizons);
    let mut base = Vec::new();
    for l in 1..=OUTCOME_LAGS {
        base.push(work.add_lag(&vars.outcome, l)?);
    }
    for v in [EVENT_COLUMN, vars.control.as_str()] {
        base.push(v.to_string());
        base.push(work.add_lag(v, 1)?);
    }
    let mut leads = Vec::new();
    for h in 1..=max_lead {
        leads.push((
            h,
            work.add_lead(EVENT_COLUMN, h)?,
            work.add_lead(&vars.control, h)?,
        ));
    }
    let mut targets = Vec::with_capacity(horizons);
    for k in 1..=horizons {
        targets.push(work.add_lead(&vars.outcome, k)?);
    }

    let fits: Vec<(LpPoint, Vec<String>)> = (1..=horizons)
        .into_par_iter()
        .map(|k| {
            let mut cols = base.clone();
            for (h, e, x) in &leads {
                if *h <= k.min(spec.lead_cap) {
                    cols.push(e.clone());
                    cols.push(x.clone());
                }
            }
            let event_year = |i: usize| -> Option<usize> {
                let y = events.year_of(&work.sectors[i])?;
                work.years.iter().position(|&w| w == y)
            };
            let keep = |i: usize, t: usize| match event_year(i) {
                Some(e) => !spec.clean_controls || t == e || t + k < e,
                None => true,
            };
            match horizon_fit(&work, &targets[k - 1], &cols, spec.errors, keep)? {
                Fitted::Event { coef, se, n, used } => Ok((LpPoint::new(k, coef, se, n), used)),
                Fitted::Unidentified { n, reason } => {
                    warn!(
                        "{} shock, {subperiod}: horizon {k}: effect not identified ({reason})",
                        events.shock.tag()
                    );
                    Ok((LpPoint::new(k, f64::NAN, f64::NAN, n), cols))
                }
            }
        })
        .collect::<Result<_>>()?;
    if let Some((_, cols)) = fits.last() {
        info!("{subperiod}: projection columns {}", cols.join(" "));
    }
    let (points, columns) = fits.into_iter().unzip();
    Ok(LpResult {
        shock: events.shock,
        subperiod: subperiod.to_string(),
        points,
        columns,
        truncated_from,
    })
}

enum Fitted {
    Event {
        coef: f64,
        se: f64,
        n: usize,
        used: Vec<String>,
    },
    /// Too few rows, no event rows, or an event dummy collinear with the
    /// year effects.
    Unidentified { n: usize, reason: String },
}

/// Coefficient and standard error on the event dummy with sector and year
/// effects removed.
fn horizon_fit(
    work: &Panel,
    target: &str,
    cols: &[String],
    errors: LpErrors,
    keep: impl Fn(usize, usize) -> bool,
) -> Result<Fitted> {
    let mut d = Design::from_panel(work, target, cols, &[])?;
    retain_rows(&mut d, keep);
    if d.n_obs() == 0 {
        return Ok(Fitted::Unidentified {
            n: 0,
            reason: format!("no complete rows for {target}"),
        });
    }
    // Event lags and leads vanish on a clean-control sample.
    let zero: Vec<bool> = d.x.iter().map(|c| c.iter().all(|&v| v == 0.0)).collect();
    if zero.iter().any(|&z| z) {
        let nonzero: Vec<bool> = zero.iter().map(|z| !z).collect();
        d.x = masked(&d.x, &nonzero);
        d.names = masked(&d.names, &nonzero);
    }
    let used = d.names.clone();
    if !used.iter().any(|c| c == EVENT_COLUMN) {
        return Ok(Fitted::Unidentified {
            n: d.n_obs(),
            reason: "no event rows in the sample".into(),
        });
    }
    // A sector with a single row carries no within variation.
    let groups = d.groups();
    let singles: Vec<usize> = groups
        .iter()
        .filter(|g| g.1.len() == 1)
        .map(|g| g.0)
        .collect();
    if !singles.is_empty() {
        retain_rows(&mut d, |i, _| !singles.contains(&i));
    }

    let base: Vec<String> = d.names.clone();
    d.add_year_dummies(&work.years);
    // Year dummies go first so that a regressor collinear with the year
    // effects is the column the rank check flags.
    d.x.rotate_left(base.len());
    d.names.rotate_left(base.len());
    d.within();
    let y = DVector::from_column_slice(&d.y);
    let (x, fit) = loop {
        let x = d.x_matrix();
        if x.nrows() < x.ncols() {
            let reason = format!(
                "{} rows with within variation for {} columns",
                x.nrows(),
                x.ncols()
            );
            return Ok(Fitted::Unidentified {
                n: x.nrows(),
                reason,
            });
        }
        match ols(&x, &y, &d.names) {
            Ok(fit) => break (x, fit),
            // Year dummies absorbed by the sector effects on a thin sample
            // are nuisance columns; drop them and refit.
            Err(Error::RankDeficient { columns }) if columns.iter().all(|c| !base.contains(c)) => {
                let keep: Vec<bool> = d.names.iter().map(|n| !columns.contains(n)).collect();
                d.x = masked(&d.x, &keep);
                d.names = masked(&d.names, &keep);
            }
            Err(Error::RankDeficient { columns }) if columns.iter().any(|c| c == EVENT_COLUMN) => {
                let reason = format!(
                    "{} collinear with the year effects and earlier columns",
                    columns.join(", ")
                );
                return Ok(Fitted::Unidentified {
                    n: d.n_obs(),
                    reason,
                });
            }
            Err(e) => return Err(e),
        }
    };
    let groups = d.groups();
    let (n, k, g) = (d.n_obs(), x.ncols(), groups.len());
    let mut meat = DMatrix::<f64>::zeros(k, k);
    let scale = match errors {
        LpErrors::Hc1 => {
            for r in 0..n {
                let s = x.row(r).transpose() * fit.residuals[r];
                meat += &s * s.transpose();
            }
            let dof = n as f64 - (k + g) as f64;
            if dof <= 0.0 {
                return Ok(Fitted::Unidentified {
                    n,
                    reason: format!("{n} observations for {} parameters", k + g),
                });
            }
            n as f64 / dof
        }
        LpErrors::ClusterSector => {
            for (_, rows) in &groups {
                let mut s = DVector::<f64>::zeros(k);
                for &r in rows {
                    s += x.row(r).transpose() * fit.residuals[r];
                }
                meat += &s * s.transpose();
            }
            if g < 2 || n <= k {
                let reason = format!("{g} clusters and {n} rows for {k} columns");
                return Ok(Fitted::Unidentified { n, reason });
            }
            (g as f64 / (g - 1) as f64) * ((n - 1) as f64 / (n - k) as f64)
        }
    };
    let cov = &fit.xtx_inv * meat * &fit.xtx_inv * scale;
    let e = d
        .names
        .iter()
        .position(|c| c == EVENT_COLUMN)
        .expect("event column kept");
    Ok(Fitted::Event {
        coef: fit.coef[e],
        se: cov[(e, e)].max(0.0).sqrt(),
        n,
        used,
    })
}

fn retain_rows(d: &mut Design, keep: impl Fn(usize, usize) -> bool) {
    let mask: Vec<bool> = d
        .sector
        .iter()
        .zip(&d.year)
        .map(|(&i, &t)| keep(i, t))
        .collect();
    if mask.iter().all(|&m| m) {
        return;
    }
    d.y = masked(&d.y, &mask);
    d.x = d.x.iter().map(|c| masked(c, &mask)).collect();
    d.sector = masked(&d.sector, &mask);
    d.year = masked(&d.year, &mask);
}

fn masked<T: Clone>(v: &[T], mask: &[bool]) -> Vec<T> {
    v.iter()
        .zip(mask)
        .filter(|p| *p.1)
        .map(|p| p.0.clone())
        .collect()
}

/// Full-sample projection followed by one per `(label, from, to)` split.
pub fn subperiod_compare(
    panel: &Panel,
    events: &EventSet,
    vars: &LpVars,
    spec: &LpSpec,
    splits: &[(String, i32, i32)],
) -> Result<Vec<LpResult>> {
    for (label, from, to) in splits {
        let years = panel
            .years
            .iter()
            .filter(|y| (*from..=*to).contains(*y))
            .count();
        if years < spec.horizons + 3 {
            return Err(Error::input(format!(
                "split {label} ({from}-{to}) has {years} years, {} needed for {} horizons",
                spec.horizons + 3,
                spec.horizons
            )));
        }
    }
    let mut out = vec![local_projection(panel, events, vars, spec, "full")?];
    let runs: Vec<LpResult> = splits
        .par_iter()
        .map(|(label, from, to)| {
            local_projection(&panel.slice_years(*from, *to)?, events, vars, spec, label)
        })
        .collect::<Result<_>>()?;
    out.extend(runs);
    Ok(out)
}

pub const IRF_HEADER: &str = "shock,subperiod,horizon,coef,se,lo90,hi90,lo95,hi95";

pub fn write_irf_csv<W: Write>(results: &[LpResult], mut out: W) -> Result<()> {
    writeln!(out, "{IRF_HEADER}")?;
    for r in results {
        for p in &r.points {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.shock.tag(),
                r.subperiod,
                p.horizon,
                p.coef,
                p.se,
                p.lo90,
                p.hi90,
                p.lo95,
                p.hi95
            )?;
        }
    }
    Ok(())
}

/// One IRF CSV row.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct IrfRow {
    pub shock: String,
    pub subperiod: String,
    pub horizon: usize,
    pub coef: f64,
    pub se: f64,
    pub lo90: f64,
    pub hi90: f64,
    pub lo95: f64,
    pub hi95: f64,
}

pub fn read_irf_csv<R: Read>(input: R) -> Result<Vec<IrfRow>> {
    let mut rdr = csv::Reader::from_reader(input);
    if rdr
        .headers()
        .map_err(|e| Error::input(e.to_string()))?
        .iter()
        .collect::<Vec<_>>()
        .join(",")
        != IRF_HEADER
    {
        return Err(Error::input("unexpected IRF header"));
    }
    rdr.deserialize()
        .map(|r| r.map_err(|e| Error::input(e.to_string())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series_panel(rows: &[&[f64]]) -> Panel {
        let t = rows[0].len();
        let mut p = Panel::new(
            (0..rows.len()).map(|i| format!("S{i}")).collect(),
            (0..t as i32).map(|y| 2000 + y).collect(),
        )
        .unwrap();
        p.set_by_sector("L", &rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>())
            .unwrap();
        p
    }

    #[test]
    fn detection_examples() {
        let nan = f64::NAN;
        let p = series_panel(&[
            &[1.0, 1.0, 5.0, 5.0],
            &[4.0, 3.0, 2.5, 1.0],
            &[0.0, 2.0, 2.0, 4.0],
            &[nan; 4],
        ]);
        let ev = detect_events(&p, "L", ShockKind::Direct, (2000, 2003)).unwrap();
        assert_eq!(ev.year_of("S0"), Some(2002));
        assert_eq!(ev.year_of("S1"), Some(2002));
        assert_eq!(ev.decreasing, vec!["S1"]);
        assert_eq!(ev.year_of("S2"), Some(2001));
        assert_eq!(ev.tied, vec!["S2"]);
        assert_eq!(ev.excluded, vec!["S3"]);
        let d = ev.dummy(&p);
        assert_eq!(&d[..4], &[0.0, 0.0, 1.0, 0.0]);
        assert!(d[12..].iter().all(|v| v.is_nan()));
    }

    #[test]
    fn window_restricts_candidates() {
        let p = series_panel(&[&[0.0, 10.0, 11.0, 13.0, 13.5]]);
        let ev = detect_events(&p, "L", ShockKind::Latent, (2001, 2004)).unwrap();
        assert_eq!(ev.year_of("S0"), Some(2003));
        assert!(detect_events(&p, "L", ShockKind::Latent, (2003, 2003)).is_err());
    }

    #[test]
    fn bands_nest() {
        let p = LpPoint::new(1, 0.3, 0.1, 10);
        assert!(p.lo95 < p.lo90 && p.lo90 < p.coef && p.coef < p.hi90 && p.hi90 < p.hi95);
    }
}
