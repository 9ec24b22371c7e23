//! Synthetic corpora and panels with planted structure, used by the CLI's
//! `synth` stage and by Monte Carlo checks of the estimators.

mod corpus;
mod panel;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use corpus::{generate_corpus, pseudo_word, sector_code, sector_documents, CorpusSpec};
pub use panel::{ar1_groups, one_factor_scores, ArdlDgp, EventDgp};

use crate::econo::Panel;
use crate::error::{Error, Result};

/// Outcomes that respond to proximity-weighted output of other sectors:
///
/// ```text
/// y_it = α_i + τ_t + a · y_{i,t-1} + β · ln L_it + ε_it,
/// L_it = Σ_{j≠i} w_ij exp(y_jt)
/// ```
///
/// `L` and `y` are solved jointly each year by fixed-point iteration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinkageDgp {
    pub periods: usize,
    pub burn_in: usize,
    pub a: f64,
    pub beta: f64,
    pub noise_sd: f64,
    pub year_sd: f64,
    pub fe_sd: f64,
    pub first_year: i32,
}

impl Default for LinkageDgp {
    fn default() -> Self {
        LinkageDgp {
            periods: 46,
            burn_in: 30,
            a: 0.5,
            beta: 0.15,
            noise_sd: 0.3,
            year_sd: 0.2,
            fe_sd: 0.5,
            first_year: 1976,
        }
    }
}

impl LinkageDgp {
    pub fn long_run(&self) -> f64 {
        self.beta / (1.0 - self.a)
    }

    /// Panel with `y` (log outcome) and `flow` (`exp(y)`) for the sectors of
    /// `w`. The diagonal of `w` is ignored.
    pub fn generate(&self, sectors: &[String], w: &DMatrix<f64>, seed: u64) -> Result<Panel> {
        let n = sectors.len();
        if w.nrows() != n || w.ncols() != n {
            return Err(Error::Dimension {
                expected: n,
                got: w.nrows(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = || -> f64 { StandardNormal.sample(&mut rng) };
        let alpha: Vec<f64> = (0..n).map(|_| 2.0 + self.fe_sd * g()).collect();
        let total = self.burn_in + self.periods;
        let mut y = vec![vec![0.0; total]; n];
        let mut prev: Vec<f64> = alpha.iter().map(|a| a / (1.0 - self.a)).collect();
        for t in 0..total {
            let tau = self.year_sd * g();
            let base: Vec<f64> = (0..n)
                .map(|i| alpha[i] + tau + self.a * prev[i] + self.noise_sd * g())
                .collect();
            let mut cur = base.clone();
            for _ in 0..200 {
                let flows: Vec<f64> = cur.iter().map(|v| v.exp()).collect();
                let mut delta = 0.0f64;
                let next: Vec<f64> = (0..n)
                    .map(|i| {
                        let l: f64 = (0..n)
                            .filter(|&j| j != i)
                            .map(|j| w[(i, j)] * flows[j])
                            .sum();
                        let v = base[i] + if l > 0.0 { self.beta * l.ln() } else { 0.0 };
                        delta = delta.max((v - cur[i]).abs());
                        v
                    })
                    .collect();
                cur = next;
                if delta < 1e-12 {
                    break;
                }
            }
            for i in 0..n {
                y[i][t] = cur[i];
            }
            prev = cur;
        }
        let ys: Vec<Vec<f64>> = y.iter().map(|r| r[self.burn_in..].to_vec()).collect();
        let flows: Vec<Vec<f64>> = ys
            .iter()
            .map(|r| r.iter().map(|v| v.exp()).collect())
            .collect();
        let years = (0..self.periods as i32)
            .map(|t| self.first_year + t)
            .collect();
        let mut p = Panel::new(sectors.to_vec(), years)?;
        p.set_by_sector("y", &ys)?;
        p.set_by_sector("flow", &flows)?;
        Ok(p)
    }
}
