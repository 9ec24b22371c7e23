//! Panel data-generating processes with known parameters.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::centrality::CentralityScores;
use crate::econo::Panel;
use crate::error::Result;

fn sectors(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("S{i:03}")).collect()
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// `y_it = α_i + Σ a_l y_{i,t-l} + Σ_l b_il x_{i,t-l} + λ_i f_t + e_it`,
/// `x_it = μ_i + ρ x_{i,t-1} + γ_i f_t + u_it`, `e_it = ρ_e e_{i,t-1} + ε_it`.
///
/// Sector slopes `b_il = b_l · θ_i / θ` where `θ = Σ b / (1 - Σ a)` and
/// `θ_i ~ N(θ, slope_sd²)`; `slope_sd = 0` gives homogeneous slopes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArdlDgp {
    pub sectors: usize,
    pub periods: usize,
    pub burn_in: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub x_rho: f64,
    pub x_sd: f64,
    pub noise_sd: f64,
    pub error_rho: f64,
    pub fe_sd: f64,
    /// Scale of a common AR(1) factor loading on both `x` and `y`.
    pub factor_sd: f64,
    pub slope_sd: f64,
    pub first_year: i32,
}

impl Default for ArdlDgp {
    fn default() -> Self {
        ArdlDgp {
            sectors: 128,
            periods: 46,
            burn_in: 50,
            a: vec![0.5],
            b: vec![0.1, 0.05],
            x_rho: 0.5,
            x_sd: 1.0,
            noise_sd: 0.2,
            error_rho: 0.0,
            fe_sd: 1.0,
            factor_sd: 0.0,
            slope_sd: 0.0,
            first_year: 1976,
        }
    }
}

impl ArdlDgp {
    pub fn long_run(&self) -> f64 {
        self.b.iter().sum::<f64>() / (1.0 - self.a.iter().sum::<f64>())
    }

    /// Columns `y` and `x`; the per-sector long-run slopes are returned too.
    pub fn generate(&self, seed: u64) -> Result<(Panel, Vec<f64>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let total = self.burn_in + self.periods;
        let theta = self.long_run();
        let slope_dist = Normal::new(theta, self.slope_sd.max(0.0)).expect("finite sd");
        let mut f = vec![0.0; total];
        for t in 1..total {
            f[t] = 0.7 * f[t - 1] + self.factor_sd * gauss(&mut rng);
        }
        let mut ys = Vec::with_capacity(self.sectors);
        let mut xs = Vec::with_capacity(self.sectors);
        let mut slopes = Vec::with_capacity(self.sectors);
        for _ in 0..self.sectors {
            let alpha = self.fe_sd * gauss(&mut rng);
            let mu = self.fe_sd * gauss(&mut rng);
            let (lam, gam) = (1.0 + 0.5 * gauss(&mut rng), 1.0 + 0.5 * gauss(&mut rng));
            let theta_i = if self.slope_sd > 0.0 {
                slope_dist.sample(&mut rng)
            } else {
                theta
            };
            let scale = if theta != 0.0 { theta_i / theta } else { 1.0 };
            slopes.push(theta_i);
            let mut x = vec![0.0; total];
            let mut y = vec![0.0; total];
            let mut e_prev = 0.0;
            for t in 0..total {
                let prev_x = if t > 0 {
                    x[t - 1]
                } else {
                    mu / (1.0 - self.x_rho)
                };
                x[t] = mu + self.x_rho * prev_x + gam * f[t] + self.x_sd * gauss(&mut rng);
                let e = self.error_rho * e_prev + self.noise_sd * gauss(&mut rng);
                e_prev = e;
                let mut v = alpha + lam * f[t] + e;
                for (l, a) in self.a.iter().enumerate() {
                    if t > l {
                        v += a * y[t - l - 1];
                    }
                }
                for (l, b) in self.b.iter().enumerate() {
                    if t >= l {
                        v += scale * b * x[t - l];
                    }
                }
                y[t] = v;
            }
            ys.push(y[self.burn_in..].to_vec());
            xs.push(x[self.burn_in..].to_vec());
        }
        let years = (0..self.periods as i32)
            .map(|t| self.first_year + t)
            .collect();
        let mut p = Panel::new(sectors(self.sectors), years)?;
        p.set_by_sector("y", &ys)?;
        p.set_by_sector("x", &xs)?;
        Ok((p, slopes))
    }
}

/// Residual groups for serial-correlation calibration: AR(1) with
/// coefficient `rho` plus a sector effect, one group per sector.
pub fn ar1_groups(sectors: usize, periods: usize, rho: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..sectors)
        .map(|_| {
            let fe = gauss(&mut rng);
            // Stationary start.
            let mut e = gauss(&mut rng) / (1.0 - rho * rho).max(1e-12).sqrt();
            (0..periods)
                .map(|_| {
                    let v = fe + e;
                    e = rho * e + gauss(&mut rng);
                    v
                })
                .collect()
        })
        .collect()
}

/// Event-study panel: one event year per sector drawn inside the window,
/// outcome `dn_it = α_i + τ_t + step · 1[t ≥ e_i + onset] + ε_it`, event
/// dummy `E`, control `X` (an unrelated AR(1)), and the raw linkage level
/// `L` whose peak increase falls in the event year.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EventDgp {
    pub sectors: usize,
    pub periods: usize,
    pub step: f64,
    pub onset: usize,
    pub noise_sd: f64,
    /// Earliest and latest admissible event offsets from the first year.
    pub event_window: (usize, usize),
    pub first_year: i32,
}

impl Default for EventDgp {
    fn default() -> Self {
        EventDgp {
            sectors: 128,
            periods: 46,
            step: 0.2,
            onset: 3,
            noise_sd: 0.3,
            event_window: (5, 30),
            first_year: 1976,
        }
    }
}

impl EventDgp {
    /// Columns `dn`, `E`, `X`, `L`; returns the event offsets too.
    pub fn generate(&self, seed: u64) -> Result<(Panel, Vec<usize>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tau: Vec<f64> = (0..self.periods).map(|_| 0.3 * gauss(&mut rng)).collect();
        let (mut dn, mut ev, mut xs, mut ls, mut events) = (vec![], vec![], vec![], vec![], vec![]);
        for _ in 0..self.sectors {
            let alpha = gauss(&mut rng);
            let e = rng.random_range(self.event_window.0..=self.event_window.1);
            events.push(e);
            let mut x = 0.0;
            let mut level = 10.0;
            let (mut d, mut evs, mut xv, mut lv) = (vec![], vec![], vec![], vec![]);
            for t in 0..self.periods {
                let stepped = if t >= e + self.onset { self.step } else { 0.0 };
                d.push(alpha + tau[t] + stepped + self.noise_sd * gauss(&mut rng));
                evs.push(if t == e { 1.0 } else { 0.0 });
                x = 0.5 * x + gauss(&mut rng);
                xv.push(x);
                // Increments below 1 except the jump of 5 in the event year.
                level += if t == e { 5.0 } else { rng.random::<f64>() };
                lv.push(level);
            }
            dn.push(d);
            ev.push(evs);
            xs.push(xv);
            ls.push(lv);
        }
        let years = (0..self.periods as i32)
            .map(|t| self.first_year + t)
            .collect();
        let mut p = Panel::new(sectors(self.sectors), years)?;
        p.set_by_sector("dn", &dn)?;
        p.set_by_sector("E", &ev)?;
        p.set_by_sector("X", &xs)?;
        p.set_by_sector("L", &ls)?;
        Ok((p, events))
    }
}

/// Centrality scores driven by one latent factor: measure `m` for sector `i`
/// is `μ_m + s_m (f_i + noise · ε_im)`. Returns the scores and the factor.
pub fn one_factor_scores(n: usize, noise: f64, seed: u64) -> (CentralityScores, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f: Vec<f64> = (0..n).map(|_| gauss(&mut rng)).collect();
    let params = [(50.0, 10.0), (0.05, 0.02), (0.6, 0.05), (20.0, 3.0)];
    let mut cols: Vec<Vec<f64>> = Vec::new();
    for (mu, s) in params {
        cols.push(
            f.iter()
                .map(|fi| mu + s * (fi + noise * gauss(&mut rng)))
                .collect(),
        );
    }
    let scores = CentralityScores {
        year: 2000,
        sectors: sectors(n),
        degree: cols[0].clone(),
        in_degree: None,
        betweenness: cols[1].clone(),
        closeness: cols[2].clone(),
        distinctiveness: cols[3].clone(),
        distinctiveness_norm: cols[3].clone(),
        in_distinctiveness: None,
        disconnected: vec![false; n],
        directed: false,
    };
    (scores, f)
}
