//! Direct and indirect linkage regressors.
//!
//! A weight-based variant pairs a weight matrix source (text cosine or
//! citation share) with an outcome measure and either weights the other
//! sectors' outcomes directly or propagates them through the Leontief inverse
//! `H = (I - W)⁻¹`. Network variants re-tag centrality scores as regressors.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use log::info;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::centrality::{CentralityScores, LatentFactor};
use crate::error::{Error, Result};
use crate::linalg::{max_abs, norm1, spectral_radius};
use crate::simnet::{row_normalize, WeightKind, WeightMatrix};

/// Matrices with spectral radius at or above `1 - RADIUS_MARGIN` are
/// row-normalized and scaled by [`RESCALE_FACTOR`] before inversion.
pub const RADIUS_MARGIN: f64 = 1e-6;
pub const RESCALE_FACTOR: f64 = 0.9;
/// Largest admissible 1-norm condition estimate of `I - W`.
pub const MAX_CONDITION: f64 = 1e12;
/// Largest admissible `‖H(I - W) - I‖_max`.
pub const MAX_RESIDUAL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LinkageVariant {
    #[serde(rename = "CWC")]
    Cwc,
    #[serde(rename = "TWC")]
    Twc,
    #[serde(rename = "TWB")]
    Twb,
    #[serde(rename = "TWF")]
    Twf,
    #[serde(rename = "CWF")]
    Cwf,
    #[serde(rename = "ITWF")]
    Itwf,
    #[serde(rename = "ICWF")]
    Icwf,
    #[serde(rename = "DegreeND")]
    DegreeNd,
    #[serde(rename = "BetwNB")]
    BetwNb,
    #[serde(rename = "ClosNC")]
    ClosNc,
    #[serde(rename = "DistND")]
    DistNd,
    #[serde(rename = "LatentFactor")]
    LatentFactor,
}

/// Which matrix a weight-based variant uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightSource {
    Text,
    Citation,
}

/// Which per-sector measure a weight-based variant aggregates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeMeasure {
    Counts,
    BackwardCites,
    ForwardCites,
}

impl LinkageVariant {
    pub const ALL: [LinkageVariant; 12] = [
        LinkageVariant::Cwc,
        LinkageVariant::Twc,
        LinkageVariant::Twb,
        LinkageVariant::Twf,
        LinkageVariant::Cwf,
        LinkageVariant::Itwf,
        LinkageVariant::Icwf,
        LinkageVariant::DegreeNd,
        LinkageVariant::BetwNb,
        LinkageVariant::ClosNc,
        LinkageVariant::DistNd,
        LinkageVariant::LatentFactor,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            LinkageVariant::Cwc => "CWC",
            LinkageVariant::Twc => "TWC",
            LinkageVariant::Twb => "TWB",
            LinkageVariant::Twf => "TWF",
            LinkageVariant::Cwf => "CWF",
            LinkageVariant::Itwf => "ITWF",
            LinkageVariant::Icwf => "ICWF",
            LinkageVariant::DegreeNd => "DegreeND",
            LinkageVariant::BetwNb => "BetwNB",
            LinkageVariant::ClosNc => "ClosNC",
            LinkageVariant::DistNd => "DistND",
            LinkageVariant::LatentFactor => "LatentFactor",
        }
    }

    /// Weight source and outcome for matrix-based variants; `None` for the
    /// centrality-based ones.
    pub fn weighting(self) -> Option<(WeightSource, OutcomeMeasure)> {
        use LinkageVariant::*;
        use OutcomeMeasure::*;
        use WeightSource::*;
        Some(match self {
            Cwc => (Citation, Counts),
            Twc => (Text, Counts),
            Twb => (Text, BackwardCites),
            Twf | Itwf => (Text, ForwardCites),
            Cwf | Icwf => (Citation, ForwardCites),
            DegreeNd | BetwNb | ClosNc | DistNd | LatentFactor => return None,
        })
    }

    /// True for the variants propagated through the Leontief inverse.
    pub fn is_indirect(self) -> bool {
        matches!(self, LinkageVariant::Itwf | LinkageVariant::Icwf)
    }
}

impl fmt::Display for LinkageVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for LinkageVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LinkageVariant::ALL
            .into_iter()
            .find(|v| v.tag().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::input(format!("unknown linkage variant {s:?}")))
    }
}

/// One year of one regressor, aligned on `sectors`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkageSeries {
    pub variant: LinkageVariant,
    pub year: i32,
    pub sectors: Vec<String>,
    pub values: Vec<f64>,
}

impl LinkageSeries {
    fn checked(self) -> Result<Self> {
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::numeric(format!(
                "{} linkage for sector {} in {} is not finite",
                self.variant, self.sectors[i], self.year
            )));
        }
        Ok(self)
    }
}

fn check_outcome(wm: &WeightMatrix, outcome: &[f64]) -> Result<()> {
    if outcome.len() != wm.n() {
        return Err(Error::Dimension {
            expected: wm.n(),
            got: outcome.len(),
        });
    }
    Ok(())
}

/// `L_i = Σ_{j≠i} w_ij ΔN_j`. The diagonal is ignored whatever the matrix's
/// diagonal policy.
pub fn direct_linkage(
    wm: &WeightMatrix,
    outcome: &[f64],
    variant: LinkageVariant,
) -> Result<LinkageSeries> {
    check_outcome(wm, outcome)?;
    let n = wm.n();
    let values = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i)
                .map(|j| wm.w[(i, j)] * outcome[j])
                .sum()
        })
        .collect();
    LinkageSeries {
        variant,
        year: wm.year,
        sectors: wm.sectors.clone(),
        values,
    }
    .checked()
}

/// Record of the rescaling applied to a matrix whose spectral radius was too
/// close to (or above) one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rescaling {
    pub original_radius: f64,
    pub factor: f64,
}

#[derive(Debug, Clone)]
pub struct LeontiefOperator {
    pub year: i32,
    pub sectors: Vec<String>,
    pub source_kind: WeightKind,
    /// `(I - W)⁻¹` for the matrix actually inverted.
    pub h: DMatrix<f64>,
    /// Spectral radius of the matrix actually inverted.
    pub spectral_radius: f64,
    pub rescaling: Option<Rescaling>,
    /// 1-norm condition estimate of `I - W`.
    pub condition: f64,
    pub residual: f64,
}

/// Invert `I - W`, rescaling `W` first when its spectral radius is not safely
/// below one.
pub fn leontief(wm: &WeightMatrix) -> Result<LeontiefOperator> {
    let n = wm.n();
    let radius = spectral_radius(&wm.w);
    let (w, radius, rescaling) = if radius >= 1.0 - RADIUS_MARGIN || !radius.is_finite() {
        let w = row_normalize(wm).w * RESCALE_FACTOR;
        let r = spectral_radius(&w);
        info!(
            "year {}: spectral radius {radius:.4} >= 1, row-normalized and scaled by {RESCALE_FACTOR} (new radius {r:.4})",
            wm.year
        );
        (
            w,
            r,
            Some(Rescaling {
                original_radius: radius,
                factor: RESCALE_FACTOR,
            }),
        )
    } else {
        (wm.w.clone(), radius, None)
    };
    let a = DMatrix::<f64>::identity(n, n) - &w;
    let singular = |detail: String| Error::Singular {
        year: wm.year,
        detail,
    };
    let h = a
        .clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| singular("I - W has no inverse".into()))?;
    let condition = norm1(&a) * norm1(&h);
    if !(condition <= MAX_CONDITION) {
        return Err(singular(format!(
            "condition estimate {condition:.3e} exceeds {MAX_CONDITION:e}"
        )));
    }
    let residual = max_abs(&(&h * &a - DMatrix::<f64>::identity(n, n)));
    if !(residual <= MAX_RESIDUAL) {
        return Err(singular(format!(
            "inverse residual {residual:.3e} exceeds {MAX_RESIDUAL:e}"
        )));
    }
    Ok(LeontiefOperator {
        year: wm.year,
        sectors: wm.sectors.clone(),
        source_kind: wm.kind,
        h,
        spectral_radius: radius,
        rescaling,
        condition,
        residual,
    })
}

/// `L_i = Σ_j (h_ij - [i=j]) ΔN_j`, the contribution of every path of length
/// one or more.
pub fn indirect_linkage(
    op: &LeontiefOperator,
    outcome: &[f64],
    variant: LinkageVariant,
) -> Result<LinkageSeries> {
    let n = op.sectors.len();
    if outcome.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: outcome.len(),
        });
    }
    let values = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| (op.h[(i, j)] - if i == j { 1.0 } else { 0.0 }) * outcome[j])
                .sum()
        })
        .collect();
    LinkageSeries {
        variant,
        year: op.year,
        sectors: op.sectors.clone(),
        values,
    }
    .checked()
}

/// Build a weight-based variant from its matrix and outcome vector. Returns
/// the Leontief operator too for indirect variants so callers can report the
/// spectral radius and any rescaling.
pub fn weighted_linkage(
    variant: LinkageVariant,
    wm: &WeightMatrix,
    outcome: &[f64],
) -> Result<(LinkageSeries, Option<LeontiefOperator>)> {
    if variant.weighting().is_none() {
        return Err(Error::input(format!(
            "{variant} is not a weight-based linkage"
        )));
    }
    if variant.is_indirect() {
        check_outcome(wm, outcome)?;
        let op = leontief(wm)?;
        let s = indirect_linkage(&op, outcome, variant)?;
        Ok((s, Some(op)))
    } else {
        Ok((direct_linkage(wm, outcome, variant)?, None))
    }
}

/// Source for a centrality-based regressor.
#[derive(Debug, Clone, Copy)]
pub enum NetworkScores<'a> {
    Centrality(&'a CentralityScores),
    Latent {
        factor: &'a LatentFactor,
        sectors: &'a [String],
    },
}

/// Re-tag centrality values as a regressor series; values are copied
/// unchanged.
pub fn network_linkage(src: NetworkScores<'_>, variant: LinkageVariant) -> Result<LinkageSeries> {
    let (year, sectors, values) = match (src, variant) {
        (NetworkScores::Latent { factor, sectors }, LinkageVariant::LatentFactor) => {
            if factor.scores.len() != sectors.len() {
                return Err(Error::Dimension {
                    expected: sectors.len(),
                    got: factor.scores.len(),
                });
            }
            (factor.year, sectors.to_vec(), factor.scores.clone())
        }
        (NetworkScores::Centrality(s), v) => {
            let col = match v {
                LinkageVariant::DegreeNd => &s.degree,
                LinkageVariant::BetwNb => &s.betweenness,
                LinkageVariant::ClosNc => &s.closeness,
                LinkageVariant::DistNd => &s.distinctiveness,
                _ => return Err(Error::input(format!("{v} is not a centrality linkage"))),
            };
            (s.year, s.sectors.clone(), col.clone())
        }
        (NetworkScores::Latent { .. }, v) => {
            return Err(Error::input(format!(
                "latent factor scores cannot produce {v}"
            )));
        }
    };
    if values.is_empty() {
        return Err(Error::input(format!("no centrality scores for {year}")));
    }
    LinkageSeries {
        variant,
        year,
        sectors,
        values,
    }
    .checked()
}

/// Pick the scores for `year` out of a yearly collection.
pub fn scores_for_year(all: &[CentralityScores], year: i32) -> Result<&CentralityScores> {
    all.iter()
        .find(|s| s.year == year)
        .ok_or_else(|| Error::input(format!("no centrality scores for year {year}")))
}

pub const CSV_HEADER: &str = "variant,sector,year,value";

/// Long-format CSV, one row per (variant, sector, year).
pub fn write_csv<W: Write>(series: &[LinkageSeries], mut out: W) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for s in series {
        for (sector, v) in s.sectors.iter().zip(&s.values) {
            writeln!(out, "{},{},{},{}", s.variant, sector, s.year, v)?;
        }
    }
    Ok(())
}

/// Inverse of [`write_csv`]: rows are regrouped by (variant, year) in file
/// order.
pub fn read_csv<R: Read>(input: R) -> Result<Vec<LinkageSeries>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut out: Vec<LinkageSeries> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::input(e.to_string()))?;
        let bad = |m: &str| Error::Parse {
            line: line + 2,
            message: m.to_string(),
        };
        if rec.len() != 4 {
            return Err(bad("expected 4 columns"));
        }
        let variant: LinkageVariant = rec[0].parse()?;
        let year: i32 = rec[2].parse().map_err(|_| bad("bad year"))?;
        let value: f64 = rec[3].parse().map_err(|_| bad("bad value"))?;
        match out
            .iter_mut()
            .find(|s| s.variant == variant && s.year == year)
        {
            Some(s) => {
                s.sectors.push(rec[1].to_string());
                s.values.push(value);
            }
            None => out.push(LinkageSeries {
                variant,
                year,
                sectors: vec![rec[1].to_string()],
                values: vec![value],
            }),
        }
    }
    Ok(out)
}
