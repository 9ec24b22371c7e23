//! Weighted centrality on yearly networks and the first-principal-component
//! latent factor.
//!
//! Path lengths use the inverse-weight metric: an arc of weight `w` has
//! length `1/w`, so strong similarity means short distance. Shortest paths
//! are counted with an absolute tie tolerance on accumulated lengths.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::simnet::YearNetwork;

/// Two accumulated path lengths closer than this count as tied.
pub const TIE_TOL: f64 = 1e-12;

/// Weighted degree: row sums, plus column sums for directed networks.
pub fn degree(net: &YearNetwork) -> (Vec<f64>, Option<Vec<f64>>) {
    let n = net.n();
    let out: Vec<f64> = (0..n)
        .map(|i| (0..n).filter(|&j| j != i).map(|j| net.weight(i, j)).sum())
        .collect();
    let inn = net.directed.then(|| {
        (0..n)
            .map(|j| (0..n).filter(|&i| i != j).map(|i| net.weight(i, j)).sum())
            .collect()
    });
    (out, inn)
}

/// Unweighted arc counts (out, in). Equal for undirected networks.
pub fn arc_degrees(net: &YearNetwork) -> (Vec<usize>, Vec<usize>) {
    let n = net.n();
    let out = (0..n)
        .map(|i| (0..n).filter(|&j| j != i && net.weight(i, j) > 0.0).count())
        .collect();
    let inn = (0..n)
        .map(|j| (0..n).filter(|&i| i != j && net.weight(i, j) > 0.0).count())
        .collect();
    (out, inn)
}

struct Sssp {
    dist: Vec<f64>,
    sigma: Vec<f64>,
    preds: Vec<Vec<usize>>,
    /// Nodes in order of settlement.
    order: Vec<usize>,
}

/// Dense Dijkstra from `src` on the 1/w metric. With `reverse`, arcs are
/// followed backwards, giving distances *to* `src`.
fn dijkstra(net: &YearNetwork, src: usize, reverse: bool) -> Sssp {
    let n = net.n();
    let mut dist = vec![f64::INFINITY; n];
    let mut sigma = vec![0.0; n];
    let mut preds = vec![Vec::new(); n];
    let mut done = vec![false; n];
    let mut order = Vec::with_capacity(n);
    dist[src] = 0.0;
    sigma[src] = 1.0;
    loop {
        let mut u = usize::MAX;
        for v in 0..n {
            if !done[v] && dist[v].is_finite() && (u == usize::MAX || dist[v] < dist[u]) {
                u = v;
            }
        }
        if u == usize::MAX {
            break;
        }
        done[u] = true;
        order.push(u);
        for v in 0..n {
            if v == u || done[v] {
                continue;
            }
            let w = if reverse {
                net.weight(v, u)
            } else {
                net.weight(u, v)
            };
            if w <= 0.0 {
                continue;
            }
            let alt = dist[u] + 1.0 / w;
            if alt < dist[v] - TIE_TOL {
                dist[v] = alt;
                sigma[v] = sigma[u];
                preds[v].clear();
                preds[v].push(u);
            } else if (alt - dist[v]).abs() <= TIE_TOL {
                sigma[v] += sigma[u];
                preds[v].push(u);
            }
        }
    }
    Sssp {
        dist,
        sigma,
        preds,
        order,
    }
}

/// Normalized betweenness (Brandes accumulation, endpoints excluded).
/// Divides by (n-1)(n-2)/2 for undirected and (n-1)(n-2) for directed
/// networks, so every value lies in [0, 1].
pub fn betweenness(net: &YearNetwork) -> Vec<f64> {
    let n = net.n();
    if n < 3 {
        return vec![0.0; n];
    }
    let partial: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|s| {
            let sp = dijkstra(net, s, false);
            let mut delta = vec![0.0; n];
            let mut acc = vec![0.0; n];
            for &w in sp.order.iter().rev() {
                for &v in &sp.preds[w] {
                    delta[v] += sp.sigma[v] / sp.sigma[w] * (1.0 + delta[w]);
                }
                if w != s {
                    acc[w] += delta[w];
                }
            }
            acc
        })
        .collect();
    let mut b = vec![0.0; n];
    for acc in partial {
        for (bi, a) in b.iter_mut().zip(acc) {
            *bi += a;
        }
    }
    // Undirected accumulation visits each unordered pair from both ends, so
    // halving the raw sum and dividing by (n-1)(n-2)/2 is a single division.
    let scale = ((n - 1) * (n - 2)) as f64;
    b.iter().map(|v| v / scale).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Closeness {
    pub values: Vec<f64>,
    /// Nodes that are not reached from every other node.
    pub disconnected: Vec<bool>,
}

/// Closeness `(r - 1) / Σ_j d(j, i)` over the `r` nodes that can reach `i`
/// (including itself). Equals `(n - 1) / Σ_j d(j, i)` on connected networks.
pub fn closeness(net: &YearNetwork) -> Closeness {
    let n = net.n();
    let rows: Vec<(f64, bool)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let sp = dijkstra(net, i, true);
            let reach: Vec<f64> = sp.dist.iter().copied().filter(|d| d.is_finite()).collect();
            let r = reach.len();
            let total: f64 = reach.iter().sum();
            let c = if r <= 1 || total <= 0.0 {
                0.0
            } else {
                (r - 1) as f64 / total
            };
            (c, r < n)
        })
        .collect();
    Closeness {
        values: rows.iter().map(|r| r.0).collect(),
        disconnected: rows.iter().map(|r| r.1).collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Distinctiveness {
    /// Σ over out-neighbours j of log10((n-1)/g_j); g_j is the in-degree of j
    /// for directed networks.
    pub out: Vec<f64>,
    /// Directed networks only: Σ over in-neighbours j of log10((n-1)/g_j^out).
    pub inn: Option<Vec<f64>>,
    /// Upper bound (n-1)·log10(n-1) used for normalization.
    pub bound: f64,
}

impl Distinctiveness {
    pub fn normalized(&self) -> Vec<f64> {
        self.out
            .iter()
            .map(|v| {
                if self.bound > 0.0 {
                    v / self.bound
                } else {
                    0.0
                }
            })
            .collect()
    }
}

pub fn distinctiveness(net: &YearNetwork) -> Distinctiveness {
    let n = net.n();
    let (g_out, g_in) = arc_degrees(net);
    let nm1 = n.saturating_sub(1) as f64;
    let term = |g: usize| {
        if g == 0 {
            0.0
        } else {
            (nm1 / g as f64).log10()
        }
    };
    let out = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i && net.weight(i, j) > 0.0)
                .map(|j| term(g_in[j]))
                .sum()
        })
        .collect();
    let inn = net.directed.then(|| {
        (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&j| j != i && net.weight(j, i) > 0.0)
                    .map(|j| term(g_out[j]))
                    .sum()
            })
            .collect()
    });
    let bound = if n > 2 { nm1 * nm1.log10() } else { 0.0 };
    Distinctiveness { out, inn, bound }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CentralityScores {
    pub year: i32,
    pub sectors: Vec<String>,
    pub degree: Vec<f64>,
    pub in_degree: Option<Vec<f64>>,
    /// Normalized to [0, 1].
    pub betweenness: Vec<f64>,
    pub closeness: Vec<f64>,
    /// Raw (unnormalized) distinctiveness.
    pub distinctiveness: Vec<f64>,
    pub distinctiveness_norm: Vec<f64>,
    pub in_distinctiveness: Option<Vec<f64>>,
    pub disconnected: Vec<bool>,
    pub directed: bool,
}

impl CentralityScores {
    /// Columns fed to the latent factor, in fixed order.
    pub const MEASURES: [&'static str; 4] =
        ["degree", "betweenness", "closeness", "distinctiveness"];

    pub fn measure_columns(&self) -> [&[f64]; 4] {
        [
            &self.degree,
            &self.betweenness,
            &self.closeness,
            &self.distinctiveness,
        ]
    }

    pub const CSV_HEADER: &'static str =
        "year,sector,degree,betweenness,closeness,distinctiveness,latent,flags";

    /// One CSV row per sector. `latent` may be absent (empty cell).
    pub fn write_csv_rows<W: Write>(
        &self,
        mut out: W,
        latent: Option<&LatentFactor>,
    ) -> Result<()> {
        for (i, s) in self.sectors.iter().enumerate() {
            let lat = latent.map(|l| l.scores[i].to_string()).unwrap_or_default();
            let mut flags = Vec::new();
            if self.disconnected[i] {
                flags.push("disconnected");
            }
            if self.directed {
                flags.push("directed");
            }
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                self.year,
                s,
                self.degree[i],
                self.betweenness[i],
                self.closeness[i],
                self.distinctiveness[i],
                lat,
                flags.join("|")
            )?;
        }
        Ok(())
    }
}

pub fn centrality_scores(net: &YearNetwork) -> CentralityScores {
    let (deg, in_deg) = degree(net);
    let clo = closeness(net);
    let dist = distinctiveness(net);
    CentralityScores {
        year: net.weights.year,
        sectors: net.weights.sectors.clone(),
        degree: deg,
        in_degree: in_deg,
        betweenness: betweenness(net),
        closeness: clo.values,
        distinctiveness_norm: dist.normalized(),
        distinctiveness: dist.out,
        in_distinctiveness: dist.inn,
        disconnected: clo.disconnected,
        directed: net.directed,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatentFactor {
    pub year: i32,
    pub scores: Vec<f64>,
    /// Unit-norm loadings over [`CentralityScores::MEASURES`]; dropped
    /// measures get loading 0.
    pub loadings: [f64; 4],
    pub variance_explained: f64,
    /// Measures left out because they were constant across sectors.
    pub dropped: Vec<&'static str>,
}

/// First principal component of the yearly centrality measures.
///
/// With `standardize` the component comes from the correlation matrix
/// (every measure centered and scaled to unit variance); otherwise from the
/// covariance of the centered raw measures. The sign is fixed so the first
/// retained measure (degree, normally) loads nonnegatively.
pub fn latent_factor(scores: &CentralityScores, standardize: bool) -> Result<LatentFactor> {
    let n = scores.sectors.len();
    if n < 2 {
        return Err(Error::input("latent factor needs at least two sectors"));
    }
    let cols = scores.measure_columns();
    if cols.iter().any(|c| c.iter().any(|v| !v.is_finite())) {
        return Err(Error::input(format!(
            "non-finite centrality values in year {}",
            scores.year
        )));
    }
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    let mut z_cols: Vec<Vec<f64>> = Vec::new();
    for (k, col) in cols.iter().enumerate() {
        let m = col.iter().sum::<f64>() / n as f64;
        let centered: Vec<f64> = col.iter().map(|v| v - m).collect();
        let ss: f64 = centered.iter().map(|v| v * v).sum();
        let sd = (ss / (n - 1) as f64).sqrt();
        if sd <= 1e-12 * m.abs().max(1.0) {
            dropped.push(CentralityScores::MEASURES[k]);
            continue;
        }
        kept.push(k);
        z_cols.push(if standardize {
            centered.iter().map(|v| v / sd).collect()
        } else {
            centered
        });
    }
    if kept.is_empty() {
        return Err(Error::input(format!(
            "every centrality measure is constant in year {}",
            scores.year
        )));
    }
    let k = kept.len();
    let z = DMatrix::from_fn(n, k, |i, j| z_cols[j][i]);
    let cov = z.transpose() * &z / (n - 1) as f64;
    let trace = cov.trace();
    let eig = SymmetricEigen::new(cov);
    let top = (0..k)
        .max_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]))
        .expect("k >= 1");
    let mut v: Vec<f64> = eig.eigenvectors.column(top).iter().copied().collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    if v[0] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    let mut ve = eig.eigenvalues[top] / trace;
    // Round-off from the eigen solver can push a rank-one share a few ulps
    // past or short of 1.
    if (ve - 1.0).abs() < 1e-12 {
        ve = 1.0;
    }
    let mut loadings = [0.0; 4];
    for (slot, &m) in kept.iter().enumerate() {
        loadings[m] = v[slot];
    }
    let scores_out = (0..n)
        .map(|i| (0..k).map(|j| z[(i, j)] * v[j]).sum())
        .collect();
    Ok(LatentFactor {
        year: scores.year,
        scores: scores_out,
        loadings,
        variance_explained: ve,
        dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simnet::{DiagonalPolicy, WeightKind, WeightMatrix};

    pub(crate) fn net(n: usize, arcs: &[(usize, usize, f64)], directed: bool) -> YearNetwork {
        let mut w = DMatrix::zeros(n, n);
        for &(i, j, v) in arcs {
            w[(i, j)] = v;
            if !directed {
                w[(j, i)] = v;
            }
        }
        YearNetwork::unpruned(&WeightMatrix {
            year: 2000,
            sectors: (0..n).map(|i| format!("S{i}")).collect(),
            w,
            kind: if directed {
                WeightKind::CitationShare
            } else {
                WeightKind::TextCosine
            },
            diagonal_policy: DiagonalPolicy::Zeroed,
            flagged: vec![],
            seed: None,
        })
    }

    #[test]
    fn degree_examples() {
        let tri = net(3, &[(0, 1, 0.5), (1, 2, 0.5), (0, 2, 0.5)], false);
        assert_eq!(degree(&tri).0, vec![1.0; 3]);
        let iso = net(3, &[(0, 1, 1.0)], false);
        assert_eq!(degree(&iso).0[2], 0.0);
        // A cited 100 times by three sectors.
        let cited = net(4, &[(1, 0, 30.0), (2, 0, 50.0), (3, 0, 20.0)], true);
        let (_, inn) = degree(&cited);
        assert_eq!(inn.unwrap()[0], 100.0);
        assert_eq!(arc_degrees(&cited).1[0], 3);
    }

    #[test]
    fn path_and_star_betweenness() {
        let path = net(3, &[(0, 1, 1.0), (1, 2, 1.0)], false);
        assert_eq!(betweenness(&path), vec![0.0, 1.0, 0.0]);
        let star = net(
            5,
            &[(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0), (0, 4, 1.0)],
            false,
        );
        let b = betweenness(&star);
        assert!((b[0] - 1.0).abs() < 1e-15);
        assert!(b[1..].iter().all(|&v| v == 0.0));
        assert_eq!(betweenness(&net(2, &[(0, 1, 1.0)], false)), vec![0.0, 0.0]);
    }

    #[test]
    fn complete_graph_betweenness_zero() {
        let arcs: Vec<_> = (0..4)
            .flat_map(|i| ((i + 1)..4).map(move |j| (i, j, 0.7)))
            .collect();
        assert!(betweenness(&net(4, &arcs, false)).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn closeness_examples() {
        assert_eq!(
            closeness(&net(2, &[(0, 1, 1.0)], false)).values,
            vec![1.0, 1.0]
        );
        let path = closeness(&net(3, &[(0, 1, 1.0), (1, 2, 1.0)], false));
        assert!((path.values[0] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(path.values[1], 1.0);
        let doubled = closeness(&net(3, &[(0, 1, 2.0), (1, 2, 2.0)], false));
        assert!((doubled.values[0] - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(closeness(&net(1, &[], false)).values, vec![0.0]);
    }

    #[test]
    fn closeness_on_reachable_component() {
        let c = closeness(&net(4, &[(0, 1, 1.0), (2, 3, 0.5)], false));
        assert_eq!(c.values, vec![1.0, 1.0, 0.5, 0.5]);
        assert!(c.disconnected.iter().all(|&d| d));
    }

    #[test]
    fn distinctiveness_examples() {
        let one = net(11, &[(0, 1, 1.0)], false);
        assert!((distinctiveness(&one).out[0] - 1.0).abs() < 1e-15);

        let arcs: Vec<_> = (0..5)
            .flat_map(|i| ((i + 1)..5).map(move |j| (i, j, 1.0)))
            .collect();
        assert!(distinctiveness(&net(5, &arcs, false))
            .out
            .iter()
            .all(|&v| v == 0.0));

        let star: Vec<_> = (1..11).map(|j| (0, j, 1.0)).collect();
        let d = distinctiveness(&net(11, &star, false));
        assert!((d.out[0] - 10.0).abs() < 1e-12);
        assert!((d.normalized()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn directed_distinctiveness_uses_opposite_degree() {
        // 1 -> 0, 2 -> 0, 0 -> 3 on n = 4.
        let g = net(4, &[(1, 0, 1.0), (2, 0, 1.0), (0, 3, 1.0)], true);
        let d = distinctiveness(&g);
        let l3 = 3f64.log10();
        // Out of 0 reaches 3 whose in-degree is 1.
        assert!((d.out[0] - l3).abs() < 1e-15);
        // Out of 1 reaches 0 whose in-degree is 2.
        assert!((d.out[1] - (1.5f64).log10()).abs() < 1e-15);
        // In of 0 comes from 1 and 2, each with out-degree 1.
        assert!((d.inn.unwrap()[0] - 2.0 * l3).abs() < 1e-15);
    }

    fn scores_from(cols: [Vec<f64>; 4]) -> CentralityScores {
        let n = cols[0].len();
        let [degree, betweenness, closeness, distinctiveness] = cols;
        CentralityScores {
            year: 2000,
            sectors: (0..n).map(|i| format!("S{i}")).collect(),
            degree,
            in_degree: None,
            betweenness,
            closeness,
            distinctiveness_norm: distinctiveness.clone(),
            distinctiveness,
            in_distinctiveness: None,
            disconnected: vec![false; n],
            directed: false,
        }
    }

    #[test]
    fn perfectly_correlated_measures() {
        let x: Vec<f64> = (0..12)
            .map(|i| (i as f64 * 0.37).sin() + i as f64 * 0.1)
            .collect();
        let s = scores_from([
            x.clone(),
            x.iter().map(|v| 2.0 * v + 1.0).collect(),
            x.iter().map(|v| 0.5 * v - 3.0).collect(),
            x.iter().map(|v| 10.0 * v).collect(),
        ]);
        let lf = latent_factor(&s, true).unwrap();
        assert_eq!(lf.variance_explained, 1.0);
        for l in lf.loadings {
            assert!((l - 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_measure_is_dropped() {
        let x: Vec<f64> = (0..6).map(|i| i as f64).collect();
        let y: Vec<f64> = vec![1.0, 3.0, 2.0, 5.0, 4.0, 6.0];
        let s = scores_from([x.clone(), vec![0.0; 6], y, x]);
        let lf = latent_factor(&s, true).unwrap();
        assert_eq!(lf.dropped, vec!["betweenness"]);
        assert_eq!(lf.loadings[1], 0.0);
        let norm: f64 = lf.loadings.iter().map(|l| l * l).sum();
        assert!((norm - 1.0).abs() < 1e-12);
        assert!(lf.variance_explained > 0.0 && lf.variance_explained <= 1.0);
    }
}
