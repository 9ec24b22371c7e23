//! Abstract text to L2-normalized TF-IDF sector-year vectors.
//!
//! The pipeline is `tokenize_stem` per abstract, then [`build_dtm`] over
//! pooled sector-year documents, [`tfidf`] with a strict document-frequency
//! cutoff, and finally [`l2_rows`]. Each matrix carries its [`MatrixState`]
//! so a transformation can refuse input in the wrong state.

pub mod porter;
mod store;

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use store::{read_binary, read_triplets, write_binary, write_triplets};

const DEFAULT_STOPWORDS: &str = include_str!("stopwords_en.txt");

/// Version tag of the bundled stopword list.
pub const STOPWORD_LIST_VERSION: &str = "en-v1";

pub fn default_stopwords() -> BTreeSet<String> {
    parse_stopwords(DEFAULT_STOPWORDS)
}

/// One token per line; `#` starts a comment line.
pub fn parse_stopwords(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CellMode {
    /// 1 if the term occurs at least once in the row.
    #[default]
    Binary,
    /// Raw occurrence count.
    Frequency,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub stopwords: BTreeSet<String>,
    pub df_cutoff: f64,
    pub cell_mode: CellMode,
    pub min_token_len: usize,
    /// Use `ln(1 + n/df)` instead of `ln(n/df)`.
    pub smooth_idf: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            stopwords: default_stopwords(),
            df_cutoff: 0.75,
            cell_mode: CellMode::Binary,
            min_token_len: 2,
            smooth_idf: false,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.df_cutoff > 0.0 && self.df_cutoff <= 1.0) {
            return Err(Error::input(format!(
                "df_cutoff must lie in (0, 1], got {}",
                self.df_cutoff
            )));
        }
        Ok(())
    }

    /// Short stable digest of every setting that affects matrix values.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for w in &self.stopwords {
            h.update(w.as_bytes());
            h.update([0u8]);
        }
        h.update(self.df_cutoff.to_bits().to_le_bytes());
        h.update([self.cell_mode as u8, self.smooth_idf as u8]);
        h.update((self.min_token_len as u64).to_le_bytes());
        hex::encode(&h.finalize()[..8])
    }
}

/// Lowercase, split on anything that is not alphanumeric, drop digit-only
/// tokens and stopwords, Porter-stem, then drop stems shorter than
/// `min_token_len`.
pub fn tokenize_stem(text: &str, cfg: &PipelineConfig) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .filter(|t| !t.chars().all(|c| c.is_numeric()))
        .filter(|t| !cfg.stopwords.contains(*t))
        .map(porter::stem)
        .filter(|s| s.chars().count() >= cfg.min_token_len)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RowKey {
    pub sector: String,
    pub year: i32,
}

impl RowKey {
    pub fn new(sector: impl Into<String>, year: i32) -> Self {
        RowKey {
            sector: sector.into(),
            year,
        }
    }
}

impl std::fmt::Display for RowKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.sector, self.year)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatrixState {
    RawCounts,
    Binary,
    Tfidf,
    TfidfL2,
}

impl MatrixState {
    pub fn code(self) -> u8 {
        match self {
            MatrixState::RawCounts => 0,
            MatrixState::Binary => 1,
            MatrixState::Tfidf => 2,
            MatrixState::TfidfL2 => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => MatrixState::RawCounts,
            1 => MatrixState::Binary,
            2 => MatrixState::Tfidf,
            3 => MatrixState::TfidfL2,
            _ => return None,
        })
    }
}

/// Sector-year by stem matrix in compressed sparse row form. Column indices
/// within a row are strictly increasing and only nonzero values are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct DocTermMatrix {
    pub rows: Vec<RowKey>,
    /// Lexicographically sorted vocabulary.
    pub terms: Vec<String>,
    pub indptr: Vec<usize>,
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
    pub state: MatrixState,
    /// Rows with no stored value after the last transformation.
    pub zero_rows: Vec<usize>,
    pub config_digest: String,
}

impl DocTermMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    /// Value at (row, term), zero when absent.
    pub fn get(&self, i: usize, term: &str) -> f64 {
        let Ok(col) = self.terms.binary_search_by(|t| t.as_str().cmp(term)) else {
            return 0.0;
        };
        let (idx, vals) = self.row(i);
        idx.binary_search(&(col as u32)).map_or(0.0, |k| vals[k])
    }

    pub fn row_index(&self, key: &RowKey) -> Option<usize> {
        self.rows.iter().position(|r| r == key)
    }

    pub fn row_norm(&self, i: usize) -> f64 {
        self.row(i).1.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Number of rows in which each term has a nonzero value.
    pub fn document_frequencies(&self) -> Vec<usize> {
        let mut df = vec![0usize; self.n_terms()];
        for &c in &self.indices {
            df[c as usize] += 1;
        }
        df
    }

    /// Row indices for one year, in row order.
    pub fn rows_for_year(&self, year: i32) -> Vec<usize> {
        (0..self.n_rows())
            .filter(|&i| self.rows[i].year == year)
            .collect()
    }

    pub fn years(&self) -> Vec<i32> {
        self.rows
            .iter()
            .map(|r| r.year)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    fn recompute_zero_rows(&mut self) {
        self.zero_rows = (0..self.n_rows())
            .filter(|&i| self.indptr[i] == self.indptr[i + 1])
            .collect();
    }
}

/// Tokenize a set of abstracts per row key in parallel. Output order follows
/// the input map, so results do not depend on the thread count.
pub fn tokenize_documents(
    abstracts: &BTreeMap<RowKey, Vec<&str>>,
    cfg: &PipelineConfig,
) -> BTreeMap<RowKey, Vec<String>> {
    let keys: Vec<&RowKey> = abstracts.keys().collect();
    let stems: Vec<Vec<String>> = keys
        .par_iter()
        .map(|k| {
            abstracts[*k]
                .iter()
                .flat_map(|t| tokenize_stem(t, cfg))
                .collect()
        })
        .collect();
    keys.into_iter().cloned().zip(stems).collect()
}

/// Assemble the document-term matrix in Binary or RawCounts state.
pub fn build_dtm(
    docs: &BTreeMap<RowKey, Vec<String>>,
    cfg: &PipelineConfig,
) -> Result<DocTermMatrix> {
    cfg.validate()?;
    if docs.is_empty() {
        return Err(Error::input("empty corpus: no documents"));
    }
    let vocab: BTreeSet<&str> = docs.values().flatten().map(String::as_str).collect();
    if vocab.is_empty() {
        return Err(Error::input(
            "empty corpus: no tokens survive preprocessing",
        ));
    }
    let terms: Vec<String> = vocab.iter().map(|s| s.to_string()).collect();

    let per_row: Vec<Vec<(u32, f64)>> = docs
        .par_iter()
        .map(|(_, stems)| {
            let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
            for s in stems {
                let col = terms
                    .binary_search_by(|t| t.as_str().cmp(s))
                    .expect("term in vocabulary") as u32;
                *counts.entry(col).or_default() += 1.0;
            }
            counts
                .into_iter()
                .map(|(c, v)| {
                    (
                        c,
                        if cfg.cell_mode == CellMode::Binary {
                            1.0
                        } else {
                            v
                        },
                    )
                })
                .collect()
        })
        .collect();

    let mut m = DocTermMatrix {
        rows: docs.keys().cloned().collect(),
        terms,
        indptr: Vec::with_capacity(docs.len() + 1),
        indices: Vec::new(),
        values: Vec::new(),
        state: match cfg.cell_mode {
            CellMode::Binary => MatrixState::Binary,
            CellMode::Frequency => MatrixState::RawCounts,
        },
        zero_rows: Vec::new(),
        config_digest: cfg.digest(),
    };
    m.indptr.push(0);
    for row in per_row {
        for (c, v) in row {
            m.indices.push(c);
            m.values.push(v);
        }
        m.indptr.push(m.indices.len());
    }
    m.recompute_zero_rows();
    Ok(m)
}

/// TF-IDF weighting with the document-frequency cutoff applied first.
///
/// Terms whose row frequency is strictly greater than `df_cutoff * n_rows`
/// are removed from the vocabulary.
pub fn tfidf(dtm: &DocTermMatrix, cfg: &PipelineConfig) -> Result<DocTermMatrix> {
    cfg.validate()?;
    if !matches!(dtm.state, MatrixState::Binary | MatrixState::RawCounts) {
        return Err(Error::input(format!(
            "tfidf expects Binary or RawCounts input, got {:?}",
            dtm.state
        )));
    }
    let n = dtm.n_rows() as f64;
    let df = dtm.document_frequencies();
    let limit = cfg.df_cutoff * n;
    let keep: Vec<bool> = df.iter().map(|&d| d > 0 && (d as f64) <= limit).collect();
    let mut remap = vec![u32::MAX; dtm.n_terms()];
    let mut terms = Vec::new();
    let mut idf = Vec::new();
    for (c, term) in dtm.terms.iter().enumerate() {
        if keep[c] {
            remap[c] = terms.len() as u32;
            terms.push(term.clone());
            let ratio = n / df[c] as f64;
            idf.push(if cfg.smooth_idf {
                (1.0 + ratio).ln()
            } else {
                ratio.ln()
            });
        }
    }
    if terms.is_empty() {
        return Err(Error::input(
            "document-frequency cutoff removes the entire vocabulary",
        ));
    }

    let mut out = DocTermMatrix {
        rows: dtm.rows.clone(),
        terms,
        indptr: vec![0],
        indices: Vec::new(),
        values: Vec::new(),
        state: MatrixState::Tfidf,
        zero_rows: Vec::new(),
        config_digest: dtm.config_digest.clone(),
    };
    for i in 0..dtm.n_rows() {
        let (idx, vals) = dtm.row(i);
        for (&c, &v) in idx.iter().zip(vals) {
            let nc = remap[c as usize];
            if nc != u32::MAX {
                let w = v * idf[nc as usize];
                if w != 0.0 {
                    out.indices.push(nc);
                    out.values.push(w);
                }
            }
        }
        out.indptr.push(out.indices.len());
    }
    out.recompute_zero_rows();
    Ok(out)
}

/// Scale every nonzero row to unit Euclidean norm. Zero rows stay zero and
/// are listed in `zero_rows`.
pub fn l2_rows(dtm: &DocTermMatrix) -> Result<DocTermMatrix> {
    if !matches!(dtm.state, MatrixState::Tfidf | MatrixState::TfidfL2) {
        return Err(Error::input(format!(
            "l2_rows expects Tfidf input, got {:?}",
            dtm.state
        )));
    }
    let mut out = dtm.clone();
    for i in 0..out.n_rows() {
        let norm = dtm.row_norm(i);
        if norm > 0.0 {
            let (a, b) = (out.indptr[i], out.indptr[i + 1]);
            for v in &mut out.values[a..b] {
                *v /= norm;
            }
        }
    }
    out.state = MatrixState::TfidfL2;
    out.recompute_zero_rows();
    Ok(out)
}

/// Full text pipeline from pooled stems to TfidfL2 rows.
pub fn vectorize(
    docs: &BTreeMap<RowKey, Vec<String>>,
    cfg: &PipelineConfig,
) -> Result<DocTermMatrix> {
    l2_rows(&tfidf(&build_dtm(docs, cfg)?, cfg)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs(items: &[(&str, i32, &[&str])]) -> BTreeMap<RowKey, Vec<String>> {
        items
            .iter()
            .map(|(s, y, stems)| {
                (
                    RowKey::new(*s, *y),
                    stems.iter().map(|t| t.to_string()).collect(),
                )
            })
            .collect()
    }

    #[test]
    fn tokenize_examples() {
        let cfg = PipelineConfig::default();
        assert_eq!(
            tokenize_stem("Connecting connected CONNECTION!", &cfg),
            vec!["connect"; 3]
        );
        assert!(tokenize_stem("", &cfg).is_empty());
        assert!(tokenize_stem("the of and", &cfg).is_empty());
        assert_eq!(
            tokenize_stem("2021 batteries, x-ray 42nd", &cfg),
            vec!["batteri", "rai", "42nd"]
        );
    }

    #[test]
    fn bundled_stopword_list_size() {
        assert_eq!(default_stopwords().len(), 170);
    }

    #[test]
    fn binary_and_frequency_cells() {
        let d = docs(&[("A", 1, &["x", "x", "y"])]);
        let mut cfg = PipelineConfig::default();
        let m = build_dtm(&d, &cfg).unwrap();
        assert_eq!(m.state, MatrixState::Binary);
        assert_eq!((m.get(0, "x"), m.get(0, "y")), (1.0, 1.0));
        cfg.cell_mode = CellMode::Frequency;
        let m = build_dtm(&d, &cfg).unwrap();
        assert_eq!(m.state, MatrixState::RawCounts);
        assert_eq!((m.get(0, "x"), m.get(0, "y")), (2.0, 1.0));
    }

    #[test]
    fn disjoint_documents_have_disjoint_supports() {
        let d = docs(&[("A", 1, &["x"]), ("B", 1, &["y"])]);
        let m = build_dtm(&d, &PipelineConfig::default()).unwrap();
        assert_eq!(m.row(0).0, &[0]);
        assert_eq!(m.row(1).0, &[1]);
    }

    #[test]
    fn empty_corpus_errors() {
        assert!(build_dtm(&BTreeMap::new(), &PipelineConfig::default()).is_err());
    }

    #[test]
    fn df_cutoff_boundary_is_strict() {
        // u in all 4 rows (dropped), t in 3 rows (kept: 3 > 3 is false), r in 1 row.
        let d = docs(&[
            ("A", 1, &["u", "t", "r"]),
            ("B", 1, &["u", "t"]),
            ("C", 1, &["u", "t"]),
            ("D", 1, &["u", "z"]),
        ]);
        let cfg = PipelineConfig::default();
        let m = tfidf(&build_dtm(&d, &cfg).unwrap(), &cfg).unwrap();
        assert_eq!(m.terms, vec!["r", "t", "z"]);
        assert!((m.get(0, "r") - 4f64.ln()).abs() < 1e-15);
        assert!((m.get(0, "r") - 1.3862943611198906).abs() < 1e-12);
        assert!((m.get(1, "t") - (4.0f64 / 3.0).ln()).abs() < 1e-15);
    }

    #[test]
    fn smooth_idf_switch() {
        let d = docs(&[("A", 1, &["a"]), ("B", 1, &["b"])]);
        let cfg = PipelineConfig {
            smooth_idf: true,
            ..Default::default()
        };
        let m = tfidf(&build_dtm(&d, &cfg).unwrap(), &cfg).unwrap();
        assert!((m.get(0, "a") - 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn cutoff_removing_everything_errors() {
        let d = docs(&[("A", 1, &["u"]), ("B", 1, &["u"])]);
        let cfg = PipelineConfig::default();
        assert!(tfidf(&build_dtm(&d, &cfg).unwrap(), &cfg).is_err());
    }

    #[test]
    fn tfidf_rejects_wrong_state() {
        let d = docs(&[("A", 1, &["a"]), ("B", 1, &["b"])]);
        let cfg = PipelineConfig::default();
        let t = tfidf(&build_dtm(&d, &cfg).unwrap(), &cfg).unwrap();
        assert!(tfidf(&t, &cfg).is_err());
        let raw = build_dtm(&d, &cfg).unwrap();
        assert!(l2_rows(&raw).is_err());
    }

    fn tfidf_matrix(rows: &[&[f64]]) -> DocTermMatrix {
        let mut m = DocTermMatrix {
            rows: (0..rows.len())
                .map(|i| RowKey::new(format!("S{i}"), 1))
                .collect(),
            terms: (0..rows[0].len()).map(|j| format!("t{j}")).collect(),
            indptr: vec![0],
            indices: vec![],
            values: vec![],
            state: MatrixState::Tfidf,
            zero_rows: vec![],
            config_digest: String::new(),
        };
        for r in rows {
            for (j, &v) in r.iter().enumerate() {
                if v != 0.0 {
                    m.indices.push(j as u32);
                    m.values.push(v);
                }
            }
            m.indptr.push(m.indices.len());
        }
        m
    }

    #[test]
    fn l2_examples() {
        let m = l2_rows(&tfidf_matrix(&[&[3.0, 4.0], &[0.0, 0.0]])).unwrap();
        assert_eq!(m.get(0, "t0"), 0.6);
        assert_eq!(m.get(0, "t1"), 0.8);
        assert_eq!(m.row(1).1.len(), 0);
        assert_eq!(m.zero_rows, vec![1]);
        assert_eq!(m.state, MatrixState::TfidfL2);
    }

    #[test]
    fn l2_idempotent() {
        let m = l2_rows(&tfidf_matrix(&[&[0.3, 1.7, 2.2], &[5.0, 0.0, 1e-3]])).unwrap();
        let again = l2_rows(&m).unwrap();
        for (a, b) in m.values.iter().zip(&again.values) {
            assert!((a - b).abs() <= 1e-12);
        }
    }
}
