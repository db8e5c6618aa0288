//! Expected tree dissimilarity of a predicted item under level-by-level
//! (hierarchical) and independent decoding, in closed form and by
//! Monte Carlo over a complete `V`-ary tree of depth `K`.
//!
//! Dissimilarity between two leaves is `K` minus the length of their common
//! prefix.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_p(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Domain(format!("p = {p} outside [0, 1]")))
    }
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Domain("K must be ≥ 1".into()));
    }
    Ok(())
}

fn power_sum(x: f64, k: usize) -> f64 {
    let mut term = 1.0;
    let mut s = 0.0;
    for _ in 0..k {
        term *= x;
        s += term;
    }
    s
}

/// `K − Σ_{k=1..K} p^k`.
pub fn e_hier(p: f64, k: usize) -> Result<f64> {
    check_p(p)?;
    check_k(k)?;
    Ok(k as f64 - power_sum(p, k))
}

/// `(K − Σ V^{−k}) (1 − p^K) / (1 − V^{−K})`, and 0 at `p = 1`.
pub fn e_indep(p: f64, v: usize, k: usize) -> Result<f64> {
    check_p(p)?;
    check_k(k)?;
    if v < 2 {
        return Err(Error::Domain(format!("V = {v} must be ≥ 2")));
    }
    if p == 1.0 {
        return Ok(0.0);
    }
    let inv = 1.0 / v as f64;
    let miss = 1.0 - p.powi(k as i32);
    Ok((k as f64 - power_sum(inv, k)) * miss / (1.0 - inv.powi(k as i32)))
}

/// `(K − Σ p^k) / (1 − p^K)` for `0 ≤ p < 1`.
pub fn psi(p: f64, k: usize) -> Result<f64> {
    check_k(k)?;
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Domain(format!("psi needs 0 ≤ p < 1, got {p}")));
    }
    Ok((k as f64 - power_sum(p, k)) / (1.0 - p.powi(k as i32)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    Hier,
    Indep,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryConfig {
    pub p: f64,
    pub v: usize,
    pub k: usize,
    pub trials: u64,
    pub seed: u64,
}

impl TheoryConfig {
    pub fn validate(&self) -> Result<()> {
        check_p(self.p)?;
        check_k(self.k)?;
        if self.v < 2 {
            return Err(Error::Domain(format!("V = {} must be ≥ 2", self.v)));
        }
        if self.trials == 0 {
            return Err(Error::Domain("trials must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// Number of leading levels where a uniform non-target leaf agrees with
/// the target, drawn digit by digit and rejecting the target itself.
fn non_target_prefix<R: Rng>(v: usize, k: usize, rng: &mut R) -> usize {
    loop {
        let mut depth = 0;
        while depth < k && rng.gen_range(0..v) == 0 {
            depth += 1;
        }
        if depth < k {
            return depth;
        }
    }
}

fn trial<R: Rng>(cfg: &TheoryConfig, mode: DecodeMode, rng: &mut R) -> usize {
    match mode {
        DecodeMode::Hier => {
            let mut depth = 0;
            while depth < cfg.k && rng.gen_bool(cfg.p) {
                depth += 1;
            }
            cfg.k - depth
        }
        DecodeMode::Indep => {
            if rng.gen_bool(cfg.p.powi(cfg.k as i32)) {
                0
            } else {
                cfg.k - non_target_prefix(cfg.v, cfg.k, rng)
            }
        }
    }
}

/// Sample mean and its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: f64,
}

impl Estimate {
    /// Whether `value` lies within `sigmas` standard errors (exact match
    /// when the error is zero).
    pub fn agrees_with(&self, value: f64, sigmas: f64) -> bool {
        (self.mean - value).abs() <= sigmas * self.std_err + 1e-12
    }
}

/// Runs `trials` split over `shards` streams seeded `seed + shard`.
pub fn simulate(cfg: &TheoryConfig, mode: DecodeMode, shards: usize) -> Result<Estimate> {
    cfg.validate()?;
    let shards = shards.max(1) as u64;
    let sums: Vec<(u64, f64, f64)> = (0..shards)
        .into_par_iter()
        .map(|s| {
            let n = cfg.trials / shards + u64::from(s < cfg.trials % shards);
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(s));
            let (mut sum, mut sq) = (0.0, 0.0);
            for _ in 0..n {
                let d = trial(cfg, mode, &mut rng) as f64;
                sum += d;
                sq += d * d;
            }
            (n, sum, sq)
        })
        .collect();
    let (n, sum, sq) = sums.iter().fold((0u64, 0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
    let nf = n as f64;
    let mean = sum / nf;
    let var = if n > 1 { ((sq - nf * mean * mean) / (nf - 1.0)).max(0.0) } else { 0.0 };
    Ok(Estimate {
        mean,
        std_err: (var / nf).sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TheoryGrid {
    pub p: Vec<f64>,
    pub v: Vec<usize>,
    pub k: Vec<usize>,
    pub trials: u64,
    pub seed: u64,
    pub shards: usize,
    /// Depth at which ψ monotonicity is checked.
    pub psi_k: usize,
    pub psi_p: Vec<f64>,
    /// Monte Carlo agreement band in standard errors.
    pub sigmas: f64,
}

impl Default for TheoryGrid {
    fn default() -> Self {
        Self {
            p: vec![0.3, 0.5, 0.9],
            v: vec![4, 16, 256],
            k: vec![2, 4, 8],
            trials: 100_000,
            seed: 5,
            shards: 4,
            psi_k: 4,
            psi_p: (0..20).map(|i| i as f64 * 0.05).collect(),
            sigmas: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoryRow {
    pub p: f64,
    pub v: usize,
    pub k: usize,
    pub e_hier_cf: f64,
    pub e_indep_cf: f64,
    pub e_hier_mc: Estimate,
    pub e_indep_mc: Estimate,
    pub strict_ok: bool,
}

impl TheoryRow {
    pub fn mc_agrees(&self, sigmas: f64) -> bool {
        self.e_hier_mc.agrees_with(self.e_hier_cf, sigmas) && self.e_indep_mc.agrees_with(self.e_indep_cf, sigmas)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoryReport {
    pub rows: Vec<TheoryRow>,
    pub psi: Vec<(f64, f64)>,
    pub psi_decreasing: bool,
    pub sigmas: f64,
}

impl TheoryReport {
    /// Points where the closed-form strict inequality fails.
    pub fn failures(&self) -> Vec<String> {
        self.rows
            .iter()
            .filter(|r| !r.strict_ok)
            .map(|r| format!("p={} V={} K={}", r.p, r.v, r.k))
            .collect()
    }

    pub fn all_ok(&self) -> bool {
        self.psi_decreasing && self.rows.iter().all(|r| r.strict_ok && r.mc_agrees(self.sigmas))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("p,V,K,e_hier_cf,e_indep_cf,e_hier_mc,e_hier_se,e_indep_mc,e_indep_se,strict_ok\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                r.p,
                r.v,
                r.k,
                r.e_hier_cf,
                r.e_indep_cf,
                r.e_hier_mc.mean,
                r.e_hier_mc.std_err,
                r.e_indep_mc.mean,
                r.e_indep_mc.std_err,
                r.strict_ok
            ));
        }
        out
    }
}

/// Whether `values` strictly decrease (K ≥ 2) or stay constant (K = 1).
pub fn psi_is_monotone(values: &[f64], k: usize) -> bool {
    if k == 1 {
        values.windows(2).all(|w| (w[0] - w[1]).abs() < 1e-12)
    } else {
        values.windows(2).all(|w| w[0] > w[1])
    }
}

/// Closed forms and simulations at every grid point, plus the ψ check.
/// Every point must satisfy `p > 1/V`.
pub fn verify_proposition(grid: &TheoryGrid) -> Result<TheoryReport> {
    let mut rows = Vec::new();
    for &p in &grid.p {
        for &v in &grid.v {
            for &k in &grid.k {
                if v < 2 || p <= 1.0 / v as f64 {
                    return Err(Error::Domain(format!("grid point p={p} V={v} K={k} needs p > 1/V")));
                }
                let cfg = TheoryConfig {
                    p,
                    v,
                    k,
                    trials: grid.trials,
                    seed: grid.seed,
                };
                let (h, i) = (e_hier(p, k)?, e_indep(p, v, k)?);
                rows.push(TheoryRow {
                    p,
                    v,
                    k,
                    e_hier_cf: h,
                    e_indep_cf: i,
                    e_hier_mc: simulate(&cfg, DecodeMode::Hier, grid.shards)?,
                    e_indep_mc: simulate(&cfg, DecodeMode::Indep, grid.shards)?,
                    strict_ok: h < i,
                });
            }
        }
    }
    let psi_vals = grid
        .psi_p
        .iter()
        .map(|&p| psi(p, grid.psi_k).map(|v| (p, v)))
        .collect::<Result<Vec<_>>>()?;
    let ys: Vec<f64> = psi_vals.iter().map(|x| x.1).collect();
    Ok(TheoryReport {
        rows,
        psi_decreasing: psi_is_monotone(&ys, grid.psi_k),
        psi: psi_vals,
        sigmas: grid.sigmas,
    })
}
