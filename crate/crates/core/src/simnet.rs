//! Yearly inter-sector weight matrices and pruned networks.
//!
//! Text weights are cosine similarities of TfidfL2 rows; citation weights are
//! bilateral citation shares. Both feed the linkage regressors directly and,
//! after lower-quartile pruning, the centrality measures.

use std::collections::HashMap;
use std::io::{Read, Write};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::FlowTable;
use crate::error::{Error, Result};
use crate::stats::percentile_sorted;
use crate::textproc::{DocTermMatrix, MatrixState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightKind {
    TextCosine,
    CitationShare,
    RandomCounterfactual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiagonalPolicy {
    Zeroed,
    Kept,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    pub year: i32,
    pub sectors: Vec<String>,
    pub w: DMatrix<f64>,
    pub kind: WeightKind,
    pub diagonal_policy: DiagonalPolicy,
    /// Sector indices with an all-zero row (or column, for receiver-normalized
    /// citation shares) that could not be normalized.
    pub flagged: Vec<usize>,
    pub seed: Option<u64>,
}

impl WeightMatrix {
    pub fn n(&self) -> usize {
        self.sectors.len()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let n = self.n();
        (0..n).all(|i| (0..i).all(|j| (self.w[(i, j)] - self.w[(j, i)]).abs() <= tol))
    }

    pub fn zero_diagonal(&mut self) {
        for i in 0..self.n() {
            self.w[(i, i)] = 0.0;
        }
        self.diagonal_policy = DiagonalPolicy::Zeroed;
    }

    /// Strictly positive off-diagonal weights; one per unordered pair when
    /// the matrix is symmetric, one per ordered pair otherwise.
    pub fn candidate_arcs(&self) -> Vec<f64> {
        let n = self.n();
        let sym = self.is_symmetric(1e-12);
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i != j && (!sym || j > i) && self.w[(i, j)] > 0.0 {
                    out.push(self.w[(i, j)]);
                }
            }
        }
        out
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        write!(out, "sector")?;
        for s in &self.sectors {
            write!(out, ",{s}")?;
        }
        writeln!(out)?;
        for (i, s) in self.sectors.iter().enumerate() {
            write!(out, "{s}")?;
            for j in 0..self.n() {
                write!(out, ",{}", self.w[(i, j)])?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn sidecar(&self, prune_threshold: Option<f64>) -> MatrixSidecar {
        MatrixSidecar {
            year: self.year,
            kind: self.kind,
            diagonal_policy: self.diagonal_policy,
            threshold: prune_threshold,
            seed: self.seed,
            flagged: self.flagged.clone(),
        }
    }

    pub fn read_csv<R: Read>(input: R, side: &MatrixSidecar) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let header = rdr
            .headers()
            .map_err(|e| Error::input(e.to_string()))?
            .clone();
        let sectors: Vec<String> = header.iter().skip(1).map(String::from).collect();
        let n = sectors.len();
        let mut w = DMatrix::zeros(n, n);
        let mut i = 0;
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::input(e.to_string()))?;
            if i >= n || rec.get(0) != Some(sectors[i].as_str()) || rec.len() != n + 1 {
                return Err(Error::input("weight matrix rows do not match the header"));
            }
            for j in 0..n {
                w[(i, j)] = rec[j + 1]
                    .parse()
                    .map_err(|_| Error::input("bad matrix value"))?;
            }
            i += 1;
        }
        if i != n {
            return Err(Error::Dimension {
                expected: n,
                got: i,
            });
        }
        Ok(WeightMatrix {
            year: side.year,
            sectors,
            w,
            kind: side.kind,
            diagonal_policy: side.diagonal_policy,
            flagged: side.flagged.clone(),
            seed: side.seed,
        })
    }
}

/// Metadata stored next to a dense matrix CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixSidecar {
    pub year: i32,
    pub kind: WeightKind,
    pub diagonal_policy: DiagonalPolicy,
    pub threshold: Option<f64>,
    pub seed: Option<u64>,
    pub flagged: Vec<usize>,
}

fn sparse_dot(a: (&[u32], &[f64]), b: (&[u32], &[f64])) -> f64 {
    let (mut p, mut q, mut s) = (0, 0, 0.0);
    while p < a.0.len() && q < b.0.len() {
        match a.0[p].cmp(&b.0[q]) {
            std::cmp::Ordering::Less => p += 1,
            std::cmp::Ordering::Greater => q += 1,
            std::cmp::Ordering::Equal => {
                s += a.1[p] * b.1[q];
                p += 1;
                q += 1;
            }
        }
    }
    s
}

/// Cosine similarity between the sectors' rows for one year. Rows are unit
/// vectors, so the cosine is the plain dot product. The upper triangle is
/// computed once and mirrored so the result is exactly symmetric.
pub fn cosine_matrix(v: &DocTermMatrix, year: i32) -> Result<WeightMatrix> {
    if v.state != MatrixState::TfidfL2 {
        return Err(Error::input(format!(
            "cosine_matrix expects TfidfL2 rows, got {:?}",
            v.state
        )));
    }
    let rows = v.rows_for_year(year);
    if rows.is_empty() {
        return Err(Error::input(format!("no rows for year {year}")));
    }
    let n = rows.len();
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|a| {
            ((a + 1)..n)
                .map(|b| sparse_dot(v.row(rows[a]), v.row(rows[b])))
                .collect()
        })
        .collect();
    let mut w = DMatrix::zeros(n, n);
    for a in 0..n {
        for (off, &s) in upper[a].iter().enumerate() {
            let b = a + 1 + off;
            w[(a, b)] = s;
            w[(b, a)] = s;
        }
    }
    let flagged = rows
        .iter()
        .enumerate()
        .filter(|(_, r)| v.zero_rows.contains(r))
        .map(|(k, _)| k)
        .collect();
    Ok(WeightMatrix {
        year,
        sectors: rows.iter().map(|&r| v.rows[r].sector.clone()).collect(),
        w,
        kind: WeightKind::TextCosine,
        diagonal_policy: DiagonalPolicy::Zeroed,
        flagged,
        seed: None,
    })
}

/// Divide every row by its off-diagonal sum; the diagonal is zeroed.
/// All-zero rows pass through and are flagged.
pub fn row_normalize(wm: &WeightMatrix) -> WeightMatrix {
    let mut out = wm.clone();
    out.zero_diagonal();
    out.flagged.clear();
    for i in 0..out.n() {
        let s: f64 = out.w.row(i).sum();
        if s > 0.0 {
            for j in 0..out.n() {
                out.w[(i, j)] /= s;
            }
        } else {
            out.flagged.push(i);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CitationNormalizer {
    /// `c_ij / Σ_k c_kj`: share of all citations received by sector j.
    #[default]
    Received,
    /// `c_ij / Σ_k c_ik`: share of all citations made by sector i.
    Made,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "type", content = "years")]
pub enum FlowWindow {
    Single,
    /// Flows from the `k` years ending at the target year.
    Trailing(u32),
    /// Every year up to and including the target year.
    Cumulative,
}

impl Default for FlowWindow {
    fn default() -> Self {
        FlowWindow::Trailing(5)
    }
}

impl FlowWindow {
    pub fn contains(&self, target: i32, year: i32) -> bool {
        match *self {
            FlowWindow::Single => year == target,
            FlowWindow::Trailing(k) => year <= target && year > target - k as i32,
            FlowWindow::Cumulative => year <= target,
        }
    }
}

/// Citation-share weights for `year` from the flows falling in `window`.
/// Self-sector flows are excluded from both numerator and normalizer.
pub fn citation_share_matrix(
    flows: &FlowTable,
    sectors: &[String],
    year: i32,
    window: FlowWindow,
    normalizer: CitationNormalizer,
) -> WeightMatrix {
    let n = sectors.len();
    let idx: HashMap<&str, usize> = sectors
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let mut c = DMatrix::<f64>::zeros(n, n);
    for f in &flows.flows {
        if !window.contains(year, f.year) || f.from_sector == f.to_sector {
            continue;
        }
        if let (Some(&i), Some(&j)) = (
            idx.get(f.from_sector.as_str()),
            idx.get(f.to_sector.as_str()),
        ) {
            c[(i, j)] += f.count;
        }
    }
    let mut w = DMatrix::zeros(n, n);
    let mut flagged = Vec::new();
    match normalizer {
        CitationNormalizer::Received => {
            for j in 0..n {
                let total: f64 = c.column(j).sum();
                if total > 0.0 {
                    for i in 0..n {
                        w[(i, j)] = c[(i, j)] / total;
                    }
                } else {
                    flagged.push(j);
                }
            }
        }
        CitationNormalizer::Made => {
            for i in 0..n {
                let total: f64 = c.row(i).sum();
                if total > 0.0 {
                    for j in 0..n {
                        w[(i, j)] = c[(i, j)] / total;
                    }
                } else {
                    flagged.push(i);
                }
            }
        }
    }
    WeightMatrix {
        year,
        sectors: sectors.to_vec(),
        w,
        kind: WeightKind::CitationShare,
        diagonal_policy: DiagonalPolicy::Zeroed,
        flagged,
        seed: None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct YearNetwork {
    pub weights: WeightMatrix,
    pub prune_threshold: f64,
    pub directed: bool,
    pub removed_arcs: usize,
    /// Fewer than four candidate arcs: nothing was pruned.
    pub too_few_arcs: bool,
}

impl YearNetwork {
    /// Network without pruning, keeping every positive off-diagonal arc.
    pub fn unpruned(wm: &WeightMatrix) -> Self {
        let mut weights = wm.clone();
        weights.zero_diagonal();
        let directed = !weights.is_symmetric(1e-12);
        YearNetwork {
            weights,
            prune_threshold: 0.0,
            directed,
            removed_arcs: 0,
            too_few_arcs: false,
        }
    }

    pub fn n(&self) -> usize {
        self.weights.n()
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights.w[(i, j)]
    }

    /// Number of retained arcs (ordered pairs).
    pub fn arc_count(&self) -> usize {
        let n = self.n();
        (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j && self.weight(i, j) > 0.0)
            .count()
    }

    /// Re-apply the stored threshold. A network is already closed under its
    /// own threshold, so this returns an identical network.
    pub fn reprune(&self) -> YearNetwork {
        let mut again = apply_threshold(&self.weights, self.prune_threshold, self.too_few_arcs);
        again.removed_arcs += self.removed_arcs;
        again
    }
}

fn apply_threshold(wm: &WeightMatrix, threshold: f64, too_few: bool) -> YearNetwork {
    let mut weights = wm.clone();
    weights.zero_diagonal();
    let directed = !weights.is_symmetric(1e-12);
    let mut removed = 0;
    for v in weights.w.iter_mut() {
        if *v > 0.0 && *v < threshold {
            *v = 0.0;
            removed += 1;
        }
    }
    YearNetwork {
        weights,
        prune_threshold: threshold,
        directed,
        removed_arcs: removed,
        too_few_arcs: too_few,
    }
}

/// Drop arcs below the 25th percentile of the year's positive off-diagonal
/// weights (linear-interpolation rule). Ties at the threshold stay.
pub fn prune_lower_quartile(wm: &WeightMatrix) -> YearNetwork {
    let mut arcs = wm.candidate_arcs();
    if arcs.len() < 4 {
        return apply_threshold(wm, 0.0, true);
    }
    arcs.sort_by(|a, b| a.total_cmp(b));
    apply_threshold(wm, percentile_sorted(&arcs, 0.25), false)
}

/// Replace the off-diagonal text similarities by a seeded random permutation
/// of themselves. The upper triangle is shuffled and mirrored.
pub fn random_counterfactual(wm: &WeightMatrix, seed: u64) -> Result<WeightMatrix> {
    if wm.kind != WeightKind::TextCosine {
        return Err(Error::input(
            "random counterfactual requires a text-cosine matrix",
        ));
    }
    let n = wm.n();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect();
    let mut values: Vec<f64> = pairs.iter().map(|&(i, j)| wm.w[(i, j)]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    values.shuffle(&mut rng);
    let mut out = wm.clone();
    for (&(i, j), v) in pairs.iter().zip(values) {
        out.w[(i, j)] = v;
        out.w[(j, i)] = v;
    }
    out.kind = WeightKind::RandomCounterfactual;
    out.seed = Some(seed);
    Ok(out)
}

/// Sum arc weights across years on a common sector order.
pub fn merge_networks(nets: &[YearNetwork]) -> Result<WeightMatrix> {
    let first = nets
        .first()
        .ok_or_else(|| Error::input("no networks to merge"))?;
    let mut out = first.weights.clone();
    for net in &nets[1..] {
        if net.weights.sectors != out.sectors {
            return Err(Error::input("networks have different sector orders"));
        }
        out.w += &net.weights.w;
    }
    out.flagged.clear();
    Ok(out)
}
