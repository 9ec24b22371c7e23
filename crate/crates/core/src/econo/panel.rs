//! Balanced sector × year panel with named columns.
//!
//! Values are stored sector-major (`i * T + t`). Missing cells are `NaN` and
//! every derived column (lags, differences, means) propagates them.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    /// `ln(1 + x)`, defined for `x ≥ 0`.
    #[default]
    Log1p,
    /// Inverse hyperbolic sine `ln(x + √(x² + 1))`.
    Ihs,
}

impl Transform {
    pub fn apply(self, x: f64) -> Result<f64> {
        match self {
            Transform::Log1p if x < 0.0 => {
                Err(Error::input(format!("ln(1 + x) of negative value {x}")))
            }
            Transform::Log1p => Ok(x.ln_1p()),
            Transform::Ihs => Ok(x.asinh()),
        }
    }

    /// Transform a whole series; `NaN` passes through.
    pub fn apply_all(self, xs: &[f64]) -> Result<Vec<f64>> {
        xs.iter()
            .map(|&x| if x.is_nan() { Ok(x) } else { self.apply(x) })
            .collect()
    }
}

/// Depreciation rate used for knowledge stocks.
pub const DEPRECIATION: f64 = 0.15;
/// Years used to estimate the pre-sample growth rate of the initial stock.
pub const SEED_GROWTH_YEARS: usize = 5;

/// Initial stock `flow₀ / (δ + g)`, where `g` is the mean year-on-year growth
/// of the flow over the first [`SEED_GROWTH_YEARS`] years (pairs with a zero
/// base are skipped; `g` is clamped so that `δ + g` stays positive).
pub fn initial_stock(flows: &[f64], delta: f64) -> f64 {
    let Some(&first) = flows.first() else {
        return 0.0;
    };
    if first <= 0.0 {
        return 0.0;
    }
    let window = &flows[..flows.len().min(SEED_GROWTH_YEARS)];
    let growth: Vec<f64> = window
        .windows(2)
        .filter(|p| p[0] > 0.0)
        .map(|p| p[1] / p[0] - 1.0)
        .collect();
    let g = if growth.is_empty() {
        0.0
    } else {
        growth.iter().sum::<f64>() / growth.len() as f64
    };
    let denom = (delta + g).max(delta * 0.5);
    first / denom
}

/// `N_t = (1 - δ) N_{t-1} + flow_t`, starting from `n0` before the first
/// flow.
pub fn perpetual_inventory(flows: &[f64], delta: f64, n0: f64) -> Vec<f64> {
    let mut stock = n0;
    flows
        .iter()
        .map(|&f| {
            stock = (1.0 - delta) * stock + f;
            stock
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub sectors: Vec<String>,
    /// Consecutive years.
    pub years: Vec<i32>,
    names: Vec<String>,
    data: Vec<Vec<f64>>,
    pub time_demeaned: bool,
    pub cce: bool,
}

pub fn lag_name(name: &str, k: usize) -> String {
    if k == 0 {
        name.to_string()
    } else {
        format!("L{k}.{name}")
    }
}

pub fn lead_name(name: &str, k: usize) -> String {
    if k == 0 {
        name.to_string()
    } else {
        format!("F{k}.{name}")
    }
}

pub fn diff_name(name: &str) -> String {
    format!("D.{name}")
}

pub fn csa_name(name: &str) -> String {
    format!("CSA.{name}")
}

impl Panel {
    pub fn new(sectors: Vec<String>, years: Vec<i32>) -> Result<Self> {
        if years.windows(2).any(|w| w[1] != w[0] + 1) {
            return Err(Error::input("panel years must be consecutive"));
        }
        Ok(Panel {
            sectors,
            years,
            names: Vec::new(),
            data: Vec::new(),
            time_demeaned: false,
            cce: false,
        })
    }

    pub fn n_sectors(&self) -> usize {
        self.sectors.len()
    }

    pub fn n_years(&self) -> usize {
        self.years.len()
    }

    pub fn len(&self) -> usize {
        self.n_sectors() * self.n_years()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn has(&self, name: &str) -> bool {
        self.names.iter().any(|n| n == name)
    }

    #[inline]
    pub fn idx(&self, sector: usize, year: usize) -> usize {
        sector * self.n_years() + year
    }

    /// Insert or replace a column.
    pub fn set(&mut self, name: &str, values: Vec<f64>) -> Result<()> {
        if values.len() != self.len() {
            return Err(Error::Dimension {
                expected: self.len(),
                got: values.len(),
            });
        }
        match self.names.iter().position(|n| n == name) {
            Some(p) => self.data[p] = values,
            None => {
                self.names.push(name.to_string());
                self.data.push(values);
            }
        }
        Ok(())
    }

    /// Insert a column from per-sector series.
    pub fn set_by_sector(&mut self, name: &str, rows: &[Vec<f64>]) -> Result<()> {
        if rows.len() != self.n_sectors() {
            return Err(Error::Dimension {
                expected: self.n_sectors(),
                got: rows.len(),
            });
        }
        let mut v = Vec::with_capacity(self.len());
        for r in rows {
            if r.len() != self.n_years() {
                return Err(Error::Dimension {
                    expected: self.n_years(),
                    got: r.len(),
                });
            }
            v.extend_from_slice(r);
        }
        self.set(name, v)
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|p| self.data[p].as_slice())
            .ok_or_else(|| Error::input(format!("panel has no column {name:?}")))
    }

    pub fn get(&self, name: &str, sector: usize, year: usize) -> Result<f64> {
        Ok(self.column(name)?[self.idx(sector, year)])
    }

    pub fn sector_series(&self, name: &str, sector: usize) -> Result<&[f64]> {
        let t = self.n_years();
        Ok(&self.column(name)?[sector * t..(sector + 1) * t])
    }

    /// Materialize `L{k}.name`: the raw value at `t - k`, missing for the
    /// first `k` years.
    pub fn add_lag(&mut self, name: &str, k: usize) -> Result<String> {
        let out = lag_name(name, k);
        if k == 0 || self.has(&out) {
            return Ok(out);
        }
        let src = self.column(name)?.to_vec();
        let t = self.n_years();
        let v = (0..self.len())
            .map(|p| if p % t >= k { src[p - k] } else { f64::NAN })
            .collect();
        self.set(&out, v)?;
        Ok(out)
    }

    /// Materialize `F{k}.name = x_{t+k}`; missing past the last year.
    pub fn add_lead(&mut self, name: &str, k: usize) -> Result<String> {
        let out = lead_name(name, k);
        if k == 0 || self.has(&out) {
            return Ok(out);
        }
        let src = self.column(name)?.to_vec();
        let t = self.n_years();
        let v = (0..self.len())
            .map(|p| if p % t + k < t { src[p + k] } else { f64::NAN })
            .collect();
        self.set(&out, v)?;
        Ok(out)
    }

    /// Sub-panel restricted to the years `from..=to`, every column kept.
    pub fn slice_years(&self, from: i32, to: i32) -> Result<Panel> {
        let keep: Vec<usize> = (0..self.n_years())
            .filter(|&y| (from..=to).contains(&self.years[y]))
            .collect();
        if keep.is_empty() {
            return Err(Error::input(format!("no panel years inside {from}-{to}")));
        }
        let mut p = Panel::new(
            self.sectors.clone(),
            keep.iter().map(|&y| self.years[y]).collect(),
        )?;
        for (name, col) in self.names.iter().zip(&self.data) {
            let v = (0..self.n_sectors())
                .flat_map(|i| keep.iter().map(move |&y| col[self.idx(i, y)]))
                .collect();
            p.set(name, v)?;
        }
        p.time_demeaned = self.time_demeaned;
        p.cce = self.cce;
        Ok(p)
    }

    /// Materialize `D.name = x_t - x_{t-1}`.
    pub fn add_diff(&mut self, name: &str) -> Result<String> {
        let out = diff_name(name);
        if self.has(&out) {
            return Ok(out);
        }
        let src = self.column(name)?.to_vec();
        let t = self.n_years();
        let v = (0..self.len())
            .map(|p| {
                if p % t >= 1 {
                    src[p] - src[p - 1]
                } else {
                    f64::NAN
                }
            })
            .collect();
        self.set(&out, v)?;
        Ok(out)
    }

    /// Cross-sectional mean of a column per year over the non-missing cells.
    pub fn year_means(&self, name: &str) -> Result<Vec<f64>> {
        let col = self.column(name)?;
        let (n, t) = (self.n_sectors(), self.n_years());
        Ok((0..t)
            .map(|y| {
                let vals: Vec<f64> = (0..n)
                    .map(|i| col[i * t + y])
                    .filter(|v| !v.is_nan())
                    .collect();
                if vals.is_empty() {
                    f64::NAN
                } else {
                    vals.iter().sum::<f64>() / vals.len() as f64
                }
            })
            .collect())
    }

    /// Subtract the yearly cross-sectional mean from every listed column.
    pub fn demean_time(&mut self, names: &[String]) -> Result<()> {
        let t = self.n_years();
        for name in names {
            let means = self.year_means(name)?;
            let col = self.column(name)?;
            let v = col
                .iter()
                .enumerate()
                .map(|(p, &x)| x - means[p % t])
                .collect();
            self.set(name, v)?;
        }
        self.time_demeaned = true;
        Ok(())
    }

    /// Append `CSA.name`, the yearly cross-sectional mean repeated for every
    /// sector, for each listed column. Existing columns are untouched.
    pub fn cce_augment(&mut self, names: &[String]) -> Result<Vec<String>> {
        if self.time_demeaned {
            return Err(Error::input(
                "cross-sectional averages need the panel before time demeaning",
            ));
        }
        let t = self.n_years();
        let mut out = Vec::with_capacity(names.len());
        for name in names {
            let means = self.year_means(name)?;
            let v = (0..self.len()).map(|p| means[p % t]).collect();
            let csa = csa_name(name);
            self.set(&csa, v)?;
            out.push(csa);
        }
        self.cce = true;
        Ok(out)
    }

    /// Long CSV `sector,year,<columns...>`; missing cells are empty.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        write!(out, "sector,year")?;
        for n in &self.names {
            write!(out, ",{n}")?;
        }
        writeln!(out)?;
        for (i, s) in self.sectors.iter().enumerate() {
            for (y, year) in self.years.iter().enumerate() {
                write!(out, "{s},{year}")?;
                for col in &self.data {
                    let v = col[self.idx(i, y)];
                    if v.is_nan() {
                        write!(out, ",")?;
                    } else {
                        write!(out, ",{v}")?;
                    }
                }
                writeln!(out)?;
            }
        }
        Ok(())
    }

    /// Inverse of [`Panel::write_csv`]. Rows must form the full grid, sector
    /// major.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| Error::input(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        if header.len() < 2 || header[0] != "sector" || header[1] != "year" {
            return Err(Error::input("panel CSV must start with sector,year"));
        }
        let mut sectors: Vec<String> = Vec::new();
        let mut years: Vec<i32> = Vec::new();
        let mut cols: Vec<Vec<f64>> = vec![Vec::new(); header.len() - 2];
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::input(e.to_string()))?;
            let bad = |m: String| Error::Parse {
                line: line + 2,
                message: m,
            };
            if sectors.last().map(String::as_str) != Some(&rec[0]) {
                sectors.push(rec[0].to_string());
            }
            let year: i32 = rec[1].parse().map_err(|_| bad("bad year".into()))?;
            if sectors.len() == 1 {
                years.push(year);
            }
            for (c, col) in cols.iter_mut().enumerate() {
                let f = &rec[c + 2];
                col.push(if f.is_empty() {
                    f64::NAN
                } else {
                    f.parse().map_err(|_| bad(format!("bad value {f:?}")))?
                });
            }
        }
        let mut p = Panel::new(sectors, years)?;
        for (name, col) in header[2..].iter().zip(cols) {
            p.set(name, col)?;
        }
        Ok(p)
    }
}
