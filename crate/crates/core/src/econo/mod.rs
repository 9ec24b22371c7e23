//! Dynamic panel estimation of the knowledge production function.
//!
//! The panel holds the (transformed) patent outcome, linkage regressors and
//! controls for every sector-year. Estimators:
//!
//! * pooled within ARDL(p, q) with long-run effects `Σ b / (1 - Σ a)`,
//! * a distributed-lag level regression with first-difference controls,
//! * mean-group ARDL with an outlier-robust average of sector estimates,
//!
//! each with year effects removed by time demeaning, year dummies or common
//! correlated effects. Standard errors are Bartlett HAC clustered by sector.

mod build;
mod estimators;
mod panel;
mod regress;
mod serial;

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use build::{
    build_panel, outcome_value, PanelColumns, PanelSpec, CONTROL_APPLICANTS, CONTROL_INVENTORS,
    CONTROL_STOCK, DEP, FLOW,
};
pub use estimators::{
    adjustment, ardl_fit, csdl_fit, fit, long_run, mean_group_fit, robust_mean, select_lag_order,
    RobustMean, ACCEPT_P, MAX_AUTO_Q, MIN_MG_SECTORS,
};
pub use panel::{
    csa_name, diff_name, initial_stock, lag_name, lead_name, perpetual_inventory, Panel, Transform,
    DEPRECIATION, SEED_GROWTH_YEARS,
};
pub use regress::{default_bandwidth, hac_covariance, pooled_ols, CrossSection, Design, PooledFit};
pub use serial::{serial_corr_test, SerialCorrTest, MIN_PERIODS};

use crate::error::{Error, Result};
use crate::stats::two_sided_p;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[default]
    Ardl,
    CsDl,
    MeanGroupArdl,
    MeanGroupCceArdl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorSpec {
    pub kind: ModelKind,
    /// Dependent-variable lags for ARDL kinds; first-difference lag order
    /// for CS-DL.
    pub p: usize,
    /// Regressor lags (ARDL kinds).
    pub q: usize,
    pub cross_section: CrossSection,
    pub transform: Transform,
    /// Bartlett bandwidth; `None` applies [`default_bandwidth`].
    pub hac_bandwidth: Option<usize>,
    /// Lags of the cross-sectional averages under CCE; `None` uses `⌊T^(1/3)⌋`.
    pub cce_lags: Option<usize>,
    /// Mean-group trimming fraction per tail.
    pub trim: f64,
}

impl Default for EstimatorSpec {
    fn default() -> Self {
        EstimatorSpec {
            kind: ModelKind::Ardl,
            p: 2,
            q: 1,
            cross_section: CrossSection::TimeDemean,
            transform: Transform::Log1p,
            hac_bandwidth: None,
            cce_lags: None,
            trim: 0.01,
        }
    }
}

impl EstimatorSpec {
    pub fn ardl(p: usize, q: usize) -> Self {
        EstimatorSpec {
            p,
            q,
            ..Default::default()
        }
    }

    pub fn csdl(p: usize) -> Self {
        EstimatorSpec {
            kind: ModelKind::CsDl,
            p,
            q: 0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ardl = matches!(
            self.kind,
            ModelKind::Ardl | ModelKind::MeanGroupArdl | ModelKind::MeanGroupCceArdl
        );
        if ardl && self.p < 1 {
            return Err(Error::input(
                "ARDL needs at least one dependent-variable lag (p >= 1)",
            ));
        }
        if self.kind == ModelKind::MeanGroupCceArdl && self.cross_section != CrossSection::Cce {
            return Err(Error::input(
                "mean-group CCE ARDL requires cross_section = \"cce\"",
            ));
        }
        if !(0.0..0.5).contains(&self.trim) {
            return Err(Error::input(format!(
                "trim fraction {} outside [0, 0.5)",
                self.trim
            )));
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        match self.kind {
            ModelKind::Ardl => format!("ARDL({},{})", self.p, self.q),
            ModelKind::CsDl => format!("CS-DL({})", self.p),
            ModelKind::MeanGroupArdl => format!("MG-ARDL({},{})", self.p, self.q),
            ModelKind::MeanGroupCceArdl => format!("MG-CCE-ARDL({},{})", self.p, self.q),
        }
    }
}

/// Dependent variable and regressors (panel column names).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelVars {
    pub dep: String,
    pub regressors: Vec<String>,
}

impl ModelVars {
    pub fn new(dep: impl Into<String>, regressors: &[&str]) -> Self {
        ModelVars {
            dep: dep.into(),
            regressors: regressors.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub term: String,
    pub estimate: f64,
    pub se: f64,
}

impl Coefficient {
    pub fn p_value(&self) -> f64 {
        if self.se > 0.0 {
            two_sided_p(self.estimate / self.se)
        } else {
            f64::NAN
        }
    }

    pub fn stars(&self) -> &'static str {
        stars(self.p_value())
    }
}

/// Significance marks for the 1%, 5% and 10% levels.
pub fn stars(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.1 {
        "*"
    } else {
        ""
    }
}

#[derive(Debug, Clone)]
pub struct EstimationResult {
    pub model: String,
    pub kind: ModelKind,
    pub cross_section: CrossSection,
    /// Pooled short-run coefficients (robust means for mean group).
    pub short_run: Vec<Coefficient>,
    pub long_run: Vec<Coefficient>,
    pub adjustment: Option<Coefficient>,
    pub serial_corr: Option<SerialCorrTest>,
    pub n_obs: usize,
    pub n_sectors: usize,
    pub r2: Option<f64>,
    pub rmse: Option<f64>,
    pub bandwidth: usize,
    /// HAC covariance of the short-run coefficients (pooled fits).
    pub cov: Option<DMatrix<f64>>,
    /// Cross-sector standard deviation of the kept long-run estimates
    /// (mean group).
    pub dispersion: Vec<f64>,
    pub dropped_sectors: Vec<String>,
    /// Residuals per sector in year order.
    pub residuals: Vec<Vec<f64>>,
}

impl EstimationResult {
    pub fn long_run_of(&self, term: &str) -> Option<&Coefficient> {
        self.long_run.iter().find(|c| c.term == term)
    }

    pub fn short_run_of(&self, term: &str) -> Option<&Coefficient> {
        self.short_run.iter().find(|c| c.term == term)
    }

    /// Sum of the dependent-variable lag coefficients.
    pub fn dep_lag_sum(&self) -> f64 {
        self.adjustment.as_ref().map_or(0.0, |a| 1.0 + a.estimate)
    }
}

pub const TABLE_HEADER: &str =
    "fit,model,csd,term,estimate,se,p_value,stars,adjustment,adjustment_se,serial_corr_p,n_obs,r2,rmse";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Coefficient table: one row per long-run term of each labelled fit, with
/// the fit-level statistics repeated on every row.
pub fn write_table<W: Write>(fits: &[(String, EstimationResult)], mut out: W) -> Result<()> {
    writeln!(out, "{TABLE_HEADER}")?;
    for (label, r) in fits {
        let csd = serde_json::to_value(r.cross_section).map_err(|e| Error::input(e.to_string()))?;
        for c in &r.long_run {
            writeln!(
                out,
                "{label},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.model,
                csd.as_str().unwrap_or_default(),
                c.term,
                c.estimate,
                c.se,
                c.p_value(),
                c.stars(),
                opt(r.adjustment.as_ref().map(|a| a.estimate)),
                opt(r.adjustment.as_ref().map(|a| a.se)),
                opt(r.serial_corr.map(|t| t.p_value)),
                r.n_obs,
                opt(r.r2),
                opt(r.rmse),
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_validation_and_labels() {
        assert!(EstimatorSpec::ardl(0, 1).validate().is_err());
        assert!(EstimatorSpec::csdl(0).validate().is_ok());
        assert_eq!(EstimatorSpec::default().label(), "ARDL(2,1)");
        let mg = EstimatorSpec {
            kind: ModelKind::MeanGroupCceArdl,
            ..Default::default()
        };
        assert!(mg.validate().is_err());
        let spec: EstimatorSpec = serde_json::from_str(
            r#"{"kind":"cs_dl","p":1,"cross_section":"cce","transform":"ihs"}"#,
        )
        .unwrap();
        assert_eq!(spec.label(), "CS-DL(1)");
        assert_eq!(spec.transform, Transform::Ihs);
    }

    #[test]
    fn star_thresholds() {
        assert_eq!(stars(0.001), "***");
        assert_eq!(stars(0.03), "**");
        assert_eq!(stars(0.07), "*");
        assert_eq!(stars(0.2), "");
    }

    #[test]
    fn robust_mean_trims_outlier() {
        let base: Vec<f64> = (0..50).map(|i| 0.3 + 0.001 * i as f64).collect();
        let mut moved = base.clone();
        moved[7] = 10.0 * base[7];
        let plain = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let dt = (robust_mean(&moved, 0.01).mean - robust_mean(&base, 0.01).mean).abs();
        let du = (plain(&moved) - plain(&base)).abs();
        assert!(dt < du, "{dt} vs {du}");
        let rm = robust_mean(&moved, 0.01);
        assert_eq!(rm.weights[7], 0.0);
        assert_eq!(rm.kept(), 48);
    }
}
