//! Synthetic patent corpora with sector-specific vocabularies.
//!
//! Every sector owns a block of pseudo-words; abstracts mix words from the
//! sector's own block, its ring neighbours' blocks and a shared pool, so
//! cosine similarity is highest between neighbouring sectors. Pseudo-words
//! end in `q`, which no stemming rule touches, so tokens survive the text
//! pipeline unchanged.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::PatentRecord;
use crate::textproc::RowKey;

const ONSETS: &[&str] = &[
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u"];
const FILLER: &[&str] = &[
    "the", "a", "of", "and", "to", "in", "is", "for", "with", "wherein",
];

/// Deterministic pseudo-word for an index.
pub fn pseudo_word(mut idx: usize) -> String {
    let mut w = String::new();
    loop {
        w.push_str(ONSETS[idx % ONSETS.len()]);
        idx /= ONSETS.len();
        w.push_str(VOWELS[idx % VOWELS.len()]);
        idx /= VOWELS.len();
        if idx == 0 {
            break;
        }
        idx -= 1;
    }
    w.push('q');
    w
}

/// Sector code for an index: a letter and two digits.
pub fn sector_code(i: usize) -> String {
    format!("{}{:02}", (b'A' + (i / 100) as u8) as char, i % 100)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSpec {
    pub patents: usize,
    pub sectors: usize,
    pub first_year: i32,
    pub years: usize,
    pub words_per_abstract: usize,
    pub vocab_per_sector: usize,
    pub shared_vocab: usize,
    /// Probability that a word comes from a neighbouring sector's block.
    pub neighbour_share: f64,
    /// Probability that a word comes from the shared pool.
    pub shared_share: f64,
    pub mean_citations: f64,
    pub secondary_class_prob: f64,
    /// Yearly growth of the number of patents.
    pub growth: f64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            patents: 5_000,
            sectors: 20,
            first_year: 2000,
            years: 10,
            words_per_abstract: 40,
            vocab_per_sector: 60,
            shared_vocab: 80,
            neighbour_share: 0.25,
            shared_share: 0.15,
            mean_citations: 4.0,
            secondary_class_prob: 0.3,
            growth: 0.05,
        }
    }
}

struct Vocab {
    blocks: Vec<Vec<String>>,
    shared: Vec<String>,
}

impl Vocab {
    fn new(spec: &CorpusSpec) -> Self {
        let mut next = 0;
        let mut take = |k: usize| {
            let v: Vec<String> = (next..next + k).map(pseudo_word).collect();
            next += k;
            v
        };
        let blocks = (0..spec.sectors)
            .map(|_| take(spec.vocab_per_sector))
            .collect();
        let shared = take(spec.shared_vocab);
        Vocab { blocks, shared }
    }

    fn word(&self, sector: usize, spec: &CorpusSpec, rng: &mut ChaCha8Rng) -> String {
        let n = self.blocks.len();
        let u: f64 = rng.random();
        let pool = if u < spec.shared_share && !self.shared.is_empty() {
            &self.shared
        } else if u < spec.shared_share + spec.neighbour_share && n > 1 {
            let side = if rng.random::<bool>() { 1 } else { n - 1 };
            &self.blocks[(sector + side) % n]
        } else {
            &self.blocks[sector]
        };
        // Zipf-like skew inside a block.
        let r: f64 = rng.random();
        pool[((r * r) * pool.len() as f64) as usize % pool.len()].clone()
    }
}

/// Generate `spec.patents` records spread over sectors and years.
pub fn generate_corpus(spec: &CorpusSpec, seed: u64) -> Vec<PatentRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = Vocab::new(spec);
    let codes: Vec<String> = (0..spec.sectors).map(sector_code).collect();
    let size: Vec<f64> = (0..spec.sectors)
        .map(|_| (0.8 * rng.random::<f64>()).exp() * (1.0 + rng.random::<f64>()))
        .collect();
    let year_w: Vec<f64> = (0..spec.years)
        .map(|t| (1.0 + spec.growth).powi(t as i32))
        .collect();
    let year_total: f64 = year_w.iter().sum();
    let size_total: f64 = size.iter().sum();
    // Firm pools grow with a sector's yearly volume so applicant counts do
    // not saturate on large corpora.
    let firms: Vec<usize> = size
        .iter()
        .map(|w| {
            ((spec.patents as f64 * w / size_total / spec.years.max(1) as f64).ceil() as usize)
                .max(25)
        })
        .collect();

    let mut records: Vec<PatentRecord> = Vec::with_capacity(spec.patents);
    let mut by_sector: Vec<Vec<usize>> = vec![Vec::new(); spec.sectors];
    let mut id = 0usize;
    for (t, yw) in year_w.iter().enumerate() {
        let year = spec.first_year + t as i32;
        let in_year = if t + 1 == spec.years {
            spec.patents - records.len()
        } else {
            (spec.patents as f64 * yw / year_total).round() as usize
        };
        let year_start = records.len();
        for k in 0..in_year {
            // Deterministic proportional allocation with a random offset.
            let target = (k as f64 + rng.random::<f64>()) / in_year as f64 * size_total;
            let mut acc = 0.0;
            let mut s = spec.sectors - 1;
            for (j, w) in size.iter().enumerate() {
                acc += w;
                if target < acc {
                    s = j;
                    break;
                }
            }
            let mut classes = vec![codes[s].clone()];
            if spec.sectors > 1 && rng.random::<f64>() < spec.secondary_class_prob {
                let other = (s + 1 + rng.random_range(0..spec.sectors - 1)) % spec.sectors;
                classes.push(codes[other].clone());
            }
            let mut words = Vec::with_capacity(spec.words_per_abstract + 4);
            for w in 0..spec.words_per_abstract {
                if w % 8 == 0 {
                    words.push(FILLER.choose(&mut rng).unwrap().to_string());
                }
                words.push(vocab.word(s, spec, &mut rng));
            }
            let n_cites = rng.random_range(0..=(2.0 * spec.mean_citations) as usize);
            let mut cited = Vec::with_capacity(n_cites);
            for _ in 0..n_cites {
                let u: f64 = rng.random();
                let cs = if u < 0.5 {
                    s
                } else if u < 0.8 {
                    (s + 1) % spec.sectors
                } else {
                    rng.random_range(0..spec.sectors)
                };
                // Only patents from earlier years.
                let earlier = by_sector[cs].partition_point(|&r| r < year_start);
                if earlier > 0 {
                    let r = by_sector[cs][rng.random_range(0..earlier)];
                    let pid: &String = &records[r].patent_id;
                    if !cited.contains(pid) {
                        cited.push(pid.clone());
                    }
                }
            }
            let inventors = (0..rng.random_range(1..=4))
                .map(|_| format!("I{}", rng.random_range(0..spec.patents)))
                .collect();
            let applicants = (0..rng.random_range(1..=2))
                .map(|_| format!("F{}-{}", s, rng.random_range(0..firms[s])))
                .collect();
            by_sector[s].push(records.len());
            records.push(PatentRecord {
                patent_id: format!("P{id:07}"),
                app_year: year,
                classes,
                abstract_text: words.join(" "),
                cited_ids: cited,
                inventor_ids: inventors,
                applicant_ids: applicants,
            });
            id += 1;
        }
    }
    records
}

/// Sector-year documents (already stems) with the same block structure,
/// for building text weight matrices without going through patents.
pub fn sector_documents(
    sectors: usize,
    years: &[i32],
    words: usize,
    seed: u64,
) -> BTreeMap<RowKey, Vec<String>> {
    let spec = CorpusSpec {
        sectors,
        ..Default::default()
    };
    let vocab = Vocab::new(&spec);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = BTreeMap::new();
    for &y in years {
        for s in 0..sectors {
            let doc = (0..words).map(|_| vocab.word(s, &spec, &mut rng)).collect();
            out.insert(RowKey::new(sector_code(s), y), doc);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textproc::porter::stem;

    #[test]
    fn pseudo_words_are_distinct_and_stem_invariant() {
        let words: Vec<String> = (0..5000).map(pseudo_word).collect();
        let mut sorted = words.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), words.len());
        for w in &words {
            assert_eq!(&stem(w), w);
        }
    }

    #[test]
    fn corpus_shape() {
        let spec = CorpusSpec {
            patents: 600,
            sectors: 6,
            years: 4,
            ..Default::default()
        };
        let recs = generate_corpus(&spec, 1);
        assert_eq!(recs.len(), 600);
        assert!(recs.iter().all(|r| (2000..2004).contains(&r.app_year)));
        let ids: std::collections::HashSet<&str> =
            recs.iter().map(|r| r.patent_id.as_str()).collect();
        assert_eq!(ids.len(), 600);
        assert_eq!(generate_corpus(&spec, 1), recs);
        // Citations point to earlier-year patents only.
        let year: std::collections::HashMap<&str, i32> = recs
            .iter()
            .map(|r| (r.patent_id.as_str(), r.app_year))
            .collect();
        for r in &recs {
            for c in &r.cited_ids {
                assert!(year[c.as_str()] < r.app_year);
            }
        }
    }
}
