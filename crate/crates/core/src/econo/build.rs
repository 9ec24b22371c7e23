//! Estimation panel from sector-year cells and linkage series.

use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::panel::{initial_stock, perpetual_inventory, Panel, Transform, DEPRECIATION};
use crate::corpus::{CellTable, SectorYearCell};
use crate::error::{Error, Result};
use crate::linkage::{LinkageSeries, LinkageVariant, OutcomeMeasure};

/// Transformed patent outcome.
pub const DEP: &str = "dn";
/// Untransformed outcome flow.
pub const FLOW: &str = "flow";
pub const CONTROL_STOCK: &str = "stock";
pub const CONTROL_INVENTORS: &str = "effort";
pub const CONTROL_APPLICANTS: &str = "diversification";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PanelSpec {
    pub outcome: OutcomeMeasure,
    pub transform: Transform,
    pub depreciation: f64,
    /// Add log stock, inventor effort and applicant count controls.
    pub controls: bool,
}

impl Default for PanelSpec {
    fn default() -> Self {
        PanelSpec {
            outcome: OutcomeMeasure::ForwardCites,
            transform: Transform::Log1p,
            depreciation: DEPRECIATION,
            controls: true,
        }
    }
}

/// Names of the columns [`build_panel`] produced.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelColumns {
    pub dep: String,
    pub linkage: Vec<String>,
    pub controls: Vec<String>,
}

impl PanelColumns {
    pub fn regressors(&self) -> Vec<String> {
        self.linkage.iter().chain(&self.controls).cloned().collect()
    }
}

pub fn outcome_value(cell: &SectorYearCell, m: OutcomeMeasure) -> f64 {
    match m {
        OutcomeMeasure::Counts => cell.count,
        OutcomeMeasure::BackwardCites => cell.bwd_cites,
        OutcomeMeasure::ForwardCites => cell.fwd_cites,
    }
}

/// Assemble the panel: transformed outcome, one column per linkage variant
/// (named by its tag) and, optionally, the controls. Sector-years without a
/// linkage value are left missing.
///
/// Linkage and count controls use the configured transform. A series with
/// negative values (latent factor scores) cannot take `ln(1 + x)` and enters
/// in levels under `Log1p`. The stock uses plain `ln` when strictly positive.
pub fn build_panel(
    cells: &CellTable,
    linkage: &[LinkageSeries],
    spec: &PanelSpec,
) -> Result<(Panel, PanelColumns)> {
    let mut panel = Panel::new(cells.sectors.clone(), cells.years.clone())?;
    let (n, t) = (cells.sectors.len(), cells.years.len());
    let flow: Vec<f64> = cells
        .cells
        .iter()
        .map(|c| outcome_value(c, spec.outcome))
        .collect();
    panel.set(FLOW, flow.clone())?;
    panel.set(DEP, spec.transform.apply_all(&flow)?)?;

    let mut variants: Vec<LinkageVariant> = linkage.iter().map(|s| s.variant).collect();
    variants.sort();
    variants.dedup();
    let mut link_cols = Vec::new();
    for v in variants {
        let mut raw = vec![f64::NAN; n * t];
        for s in linkage.iter().filter(|s| s.variant == v) {
            let Some(y) = cells.years.iter().position(|&y| y == s.year) else {
                continue;
            };
            for (sector, &val) in s.sectors.iter().zip(&s.values) {
                let i = cells
                    .sectors
                    .iter()
                    .position(|c| c == sector)
                    .ok_or_else(|| {
                        Error::input(format!("linkage sector {sector:?} not in the cell table"))
                    })?;
                raw[i * t + y] = val;
            }
        }
        let col = if spec.transform == Transform::Log1p && raw.iter().any(|&x| x < 0.0) {
            info!("{v} has negative values; entering in levels");
            raw
        } else {
            spec.transform.apply_all(&raw)?
        };
        panel.set(v.tag(), col)?;
        link_cols.push(v.tag().to_string());
    }

    let mut controls = Vec::new();
    if spec.controls {
        let mut stock = Vec::with_capacity(n * t);
        for i in 0..n {
            let f = &flow[i * t..(i + 1) * t];
            stock.extend(perpetual_inventory(
                f,
                spec.depreciation,
                initial_stock(f, spec.depreciation),
            ));
        }
        let stock = if stock.iter().all(|&s| s > 0.0) {
            stock.iter().map(|s| s.ln()).collect()
        } else {
            spec.transform.apply_all(&stock)?
        };
        panel.set(CONTROL_STOCK, stock)?;
        let effort: Vec<f64> = cells.cells.iter().map(|c| c.inventors_sum).collect();
        panel.set(CONTROL_INVENTORS, spec.transform.apply_all(&effort)?)?;
        let apps: Vec<f64> = cells.cells.iter().map(|c| c.applicants).collect();
        panel.set(CONTROL_APPLICANTS, spec.transform.apply_all(&apps)?)?;
        for name in [CONTROL_STOCK, CONTROL_INVENTORS, CONTROL_APPLICANTS] {
            // Sector effects absorb a control that never moves within a sector.
            if varies_within_sectors(&panel, name)? {
                controls.push(name.to_string());
            } else {
                warn!("control {name} is constant within every sector; dropped");
            }
        }
    }
    Ok((
        panel,
        PanelColumns {
            dep: DEP.into(),
            linkage: link_cols,
            controls,
        },
    ))
}

fn varies_within_sectors(panel: &Panel, name: &str) -> Result<bool> {
    for i in 0..panel.n_sectors() {
        let mut seen = panel.sector_series(name, i)?.iter().filter(|v| !v.is_nan());
        if let Some(first) = seen.next() {
            if seen.any(|v| v != first) {
                return Ok(true);
            }
        }
    }
    Ok(false)
}
