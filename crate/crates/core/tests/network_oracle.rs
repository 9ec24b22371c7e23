//! Similarity networks and centrality against brute-force oracles.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use technet::centrality::{betweenness, closeness, distinctiveness, latent_factor};
use technet::simnet::{
    cosine_matrix, prune_lower_quartile, random_counterfactual, DiagonalPolicy, WeightKind,
    WeightMatrix, YearNetwork,
};
use technet::synth::{one_factor_scores, sector_documents};
use technet::textproc::{vectorize, PipelineConfig, RowKey};

fn matrix(w: DMatrix<f64>, kind: WeightKind) -> WeightMatrix {
    WeightMatrix {
        year: 2000,
        sectors: (0..w.nrows()).map(|i| format!("S{i}")).collect(),
        w,
        kind,
        diagonal_policy: DiagonalPolicy::Zeroed,
        flagged: vec![],
        seed: None,
    }
}

fn random_graph(rng: &mut ChaCha8Rng, n: usize, directed: bool) -> YearNetwork {
    let density = rng.random_range(0.3..1.0);
    // Dyadic weights produce exact ties between path lengths.
    let dyadic = rng.random::<bool>();
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i == j || (!directed && j < i) || rng.random::<f64>() > density {
                continue;
            }
            let v = if dyadic {
                [0.25, 0.5, 1.0, 2.0][rng.random_range(0..4)]
            } else {
                rng.random_range(0.05..1.0)
            };
            w[(i, j)] = v;
            if !directed {
                w[(j, i)] = v;
            }
        }
    }
    let kind = if directed {
        WeightKind::CitationShare
    } else {
        WeightKind::TextCosine
    };
    let mut net = YearNetwork::unpruned(&matrix(w, kind));
    // A sparse draw can come out symmetric by accident; keep the flag honest.
    net.directed = directed;
    net
}

/// All simple paths from `s` to `t` with their lengths on the 1/w metric.
fn simple_paths(net: &YearNetwork, s: usize, t: usize) -> Vec<(f64, Vec<usize>)> {
    fn walk(
        net: &YearNetwork,
        t: usize,
        path: &mut Vec<usize>,
        len: f64,
        out: &mut Vec<(f64, Vec<usize>)>,
    ) {
        let u = *path.last().unwrap();
        if u == t {
            out.push((len, path.clone()));
            return;
        }
        for v in 0..net.n() {
            let w = net.weight(u, v);
            if v != u && w > 0.0 && !path.contains(&v) {
                path.push(v);
                walk(net, t, path, len + 1.0 / w, out);
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    walk(net, t, &mut vec![s], 0.0, &mut out);
    out
}

fn oracle_betweenness(net: &YearNetwork) -> Vec<f64> {
    let n = net.n();
    let mut b = vec![0.0; n];
    if n < 3 {
        return b;
    }
    for s in 0..n {
        for t in 0..n {
            if s == t || (!net.directed && t < s) {
                continue;
            }
            let paths = simple_paths(net, s, t);
            let Some(best) = paths.iter().map(|p| p.0).min_by(|a, b| a.total_cmp(b)) else {
                continue;
            };
            let shortest: Vec<&Vec<usize>> = paths
                .iter()
                .filter(|p| (p.0 - best).abs() <= 1e-12)
                .map(|p| &p.1)
                .collect();
            for (v, bv) in b.iter_mut().enumerate() {
                if v != s && v != t {
                    let through = shortest.iter().filter(|p| p.contains(&v)).count();
                    *bv += through as f64 / shortest.len() as f64;
                }
            }
        }
    }
    let pairs = ((n - 1) * (n - 2)) as f64 / if net.directed { 1.0 } else { 2.0 };
    b.iter().map(|v| v / pairs).collect()
}

fn oracle_closeness(net: &YearNetwork) -> Vec<f64> {
    let n = net.n();
    let mut d = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else if net.weight(i, j) > 0.0 {
            1.0 / net.weight(i, j)
        } else {
            f64::INFINITY
        }
    });
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[(i, k)] + d[(k, j)];
                if via < d[(i, j)] {
                    d[(i, j)] = via;
                }
            }
        }
    }
    (0..n)
        .map(|i| {
            let reach: Vec<f64> = (0..n)
                .map(|j| d[(j, i)])
                .filter(|v| v.is_finite())
                .collect();
            let total: f64 = reach.iter().sum();
            if reach.len() <= 1 || total == 0.0 {
                0.0
            } else {
                (reach.len() - 1) as f64 / total
            }
        })
        .collect()
}

#[test]
fn centrality_matches_exhaustive_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for case in 0..500 {
        let n = rng.random_range(2..=8);
        let net = random_graph(&mut rng, n, case % 3 == 0);
        let (b, ob) = (betweenness(&net), oracle_betweenness(&net));
        let (c, oc) = (closeness(&net).values, oracle_closeness(&net));
        for i in 0..n {
            assert!(
                (b[i] - ob[i]).abs() <= 1e-9,
                "case {case}: betweenness {i}: {} vs {}",
                b[i],
                ob[i]
            );
            assert!(
                (c[i] - oc[i]).abs() <= 1e-9,
                "case {case}: closeness {i}: {} vs {}",
                c[i],
                oc[i]
            );
            assert!((0.0..=1.0).contains(&b[i]));
        }
    }
}

#[test]
fn closed_form_graphs() {
    let n = 7;
    let mut star = DMatrix::zeros(n, n);
    for j in 1..n {
        star[(0, j)] = 0.4;
        star[(j, 0)] = 0.4;
    }
    let star = YearNetwork::unpruned(&matrix(star, WeightKind::TextCosine));
    let b = betweenness(&star);
    assert_eq!(b[0], 1.0);
    assert!(b[1..].iter().all(|&v| v == 0.0));

    let mut path = DMatrix::zeros(n, n);
    for i in 0..n - 1 {
        path[(i, i + 1)] = 1.0;
        path[(i + 1, i)] = 1.0;
    }
    let path = YearNetwork::unpruned(&matrix(path, WeightKind::TextCosine));
    let b = betweenness(&path);
    let pairs = ((n - 1) * (n - 2) / 2) as f64;
    for (i, v) in b.iter().enumerate() {
        assert!((v - (i * (n - 1 - i)) as f64 / pairs).abs() < 1e-15);
    }

    let complete = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { 0.3 });
    let complete = YearNetwork::unpruned(&matrix(complete, WeightKind::TextCosine));
    assert!(betweenness(&complete).iter().all(|&v| v == 0.0));
    assert!(distinctiveness(&complete).out.iter().all(|&v| v == 0.0));
    let c = closeness(&complete).values;
    assert!(c.iter().all(|&v| (v - 0.3).abs() < 1e-15));
}

#[test]
fn latent_factor_tracks_one_factor_panel() {
    let (scores, truth) = one_factor_scores(128, 0.3, 5);
    let lf = latent_factor(&scores, true).unwrap();
    let r = technet::stats::correlation(&lf.scores, &truth);
    assert!(r.abs() > 0.95, "{r}");

    let (exact, _) = one_factor_scores(40, 0.0, 6);
    assert_eq!(latent_factor(&exact, true).unwrap().variance_explained, 1.0);
}

#[test]
fn cosine_network_from_sector_documents() {
    let years = [2001, 2002];
    let docs = sector_documents(8, &years, 400, 3);
    let v = vectorize(&docs, &PipelineConfig::default()).unwrap();
    let wm = cosine_matrix(&v, 2001).unwrap();
    assert!(wm.is_symmetric(0.0));
    for i in 0..8 {
        assert_eq!(wm.w[(i, i)], 0.0);
        for j in 0..8 {
            assert!((0.0..=1.0 + 1e-12).contains(&wm.w[(i, j)]));
        }
        // Ring neighbours share vocabulary, sectors further away do not.
        assert!(wm.w[(i, (i + 1) % 8)] > wm.w[(i, (i + 4) % 8)]);
    }

    // Disjoint vocabularies give zero similarity, identical ones give one.
    let mut toy = BTreeMap::new();
    toy.insert(
        RowKey::new("A", 2000),
        vec!["alpha".to_string(), "beta".into(), "shared".into()],
    );
    toy.insert(
        RowKey::new("B", 2000),
        vec!["gamma".to_string(), "delta".into(), "shared".into()],
    );
    toy.insert(
        RowKey::new("C", 2000),
        vec!["alpha".to_string(), "beta".into(), "shared".into()],
    );
    toy.insert(RowKey::new("D", 2000), vec!["omega".to_string()]);
    let cfg = PipelineConfig {
        df_cutoff: 0.7,
        ..PipelineConfig::default()
    };
    let wm = cosine_matrix(&vectorize(&toy, &cfg).unwrap(), 2000).unwrap();
    assert_eq!(wm.w[(0, 1)], 0.0);
    assert!((wm.w[(0, 2)] - 1.0).abs() < 1e-12);
    assert_eq!(wm.w[(0, 3)], 0.0);
}

fn symmetric_strategy() -> impl Strategy<Value = DMatrix<f64>> {
    (3usize..12).prop_flat_map(|n| {
        prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..1.0], n * (n - 1) / 2).prop_map(
            move |vals| {
                let mut w = DMatrix::zeros(n, n);
                let mut k = 0;
                for i in 0..n {
                    for j in (i + 1)..n {
                        w[(i, j)] = vals[k];
                        w[(j, i)] = vals[k];
                        k += 1;
                    }
                }
                w
            },
        )
    })
}

fn upper(w: &DMatrix<f64>) -> Vec<f64> {
    let n = w.nrows();
    let mut v: Vec<f64> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .map(|(i, j)| w[(i, j)])
        .collect();
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

proptest! {
    #[test]
    fn counterfactual_preserves_the_value_multiset(w in symmetric_strategy(), seed in any::<u64>()) {
        let wm = matrix(w, WeightKind::TextCosine);
        let cf = random_counterfactual(&wm, seed).unwrap();
        prop_assert!(cf.is_symmetric(0.0));
        prop_assert_eq!(upper(&cf.w), upper(&wm.w));
        prop_assert_eq!(random_counterfactual(&wm, seed).unwrap(), cf);
    }

    #[test]
    fn pruning_keeps_exactly_the_arcs_at_or_above_threshold(w in symmetric_strategy()) {
        let wm = matrix(w, WeightKind::TextCosine);
        let net = prune_lower_quartile(&wm);
        let n = wm.n();
        for i in 0..n {
            for j in 0..n {
                let orig = if i == j { 0.0 } else { wm.w[(i, j)] };
                let kept = orig > 0.0 && (net.too_few_arcs || orig >= net.prune_threshold);
                prop_assert_eq!(net.weight(i, j), if kept { orig } else { 0.0 });
            }
        }
        prop_assert_eq!(net.reprune(), net.clone());
    }

    #[test]
    fn centrality_is_permutation_equivariant(w in symmetric_strategy(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let n = w.nrows();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let pw = DMatrix::from_fn(n, n, |i, j| w[(perm[i], perm[j])]);
        let a = YearNetwork::unpruned(&matrix(w, WeightKind::TextCosine));
        let b = YearNetwork::unpruned(&matrix(pw, WeightKind::TextCosine));
        let (ba, bb) = (betweenness(&a), betweenness(&b));
        let (ca, cb) = (closeness(&a).values, closeness(&b).values);
        for i in 0..n {
            prop_assert!((bb[i] - ba[perm[i]]).abs() < 1e-9);
            prop_assert!((cb[i] - ca[perm[i]]).abs() < 1e-9);
        }
    }
}
