//! Bias and RMSE of the squared-density U-statistic along `k_n = n^{1/(2β+½)}`.

use serde::{Deserialize, Serialize};

use super::generators::{haar_series_truncated_square, Design, DesignSampler};
use super::{par_reps, stats};
use crate::error::{invalid, Result};
use crate::estimators::rate_k;
use crate::kernels::{basis_kernel, OrthoBasis};
use crate::measure::{Domain, MeasureModel};
use crate::ustat::{pair_sum_abs, u_stat, u_stat_brute, Sample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateConfig {
    pub schedule: Vec<usize>,
    pub beta: f64,
    /// `uniform` or `haar_series`.
    pub design: Design,
    pub reps: usize,
    pub seed: u64,
    #[serde(default)]
    pub spot_check: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub n: usize,
    pub k: usize,
    /// `E U_n = Σ_{i<k} θ_i²`.
    pub expected: f64,
    pub mc_mean: f64,
    /// MC mean minus `∫ g²`.
    pub bias: f64,
    pub bias_se: f64,
    pub rmse: f64,
    pub sd: f64,
    pub max_spot_check_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateTable {
    pub beta: f64,
    pub truth: f64,
    pub rows: Vec<RateRow>,
    pub slope: f64,
    pub slope_se: f64,
    /// `−2β/(2β+½)`.
    pub theory_slope: f64,
}

fn truths(design: &Design, k: usize) -> Result<(f64, f64)> {
    match *design {
        Design::Uniform => Ok((1.0, 1.0)),
        Design::HaarSeries { c, beta, levels } => Ok((
            haar_series_truncated_square(c, beta, levels, k),
            haar_series_truncated_square(c, beta, levels, usize::MAX),
        )),
        _ => Err(invalid("rate experiment needs a uniform or haar_series design")),
    }
}

pub fn run_rate_experiment(cfg: &RateConfig) -> Result<RateTable> {
    if cfg.schedule.len() < 3 {
        return Err(invalid("rate schedule needs at least 3 sample sizes"));
    }
    if !(cfg.beta > 0.0) || cfg.reps == 0 {
        return Err(invalid("rate experiment needs beta > 0 and reps ≥ 1"));
    }
    cfg.design.validate()?;
    // Only the domain of this measure matters for the exact sampler.
    let g = MeasureModel::uniform(Domain::UNIT, 64)?;
    let sampler = DesignSampler::new(&cfg.design, &g);
    let truth = truths(&cfg.design, 1)?.1;
    let mut rows = Vec::with_capacity(cfg.schedule.len());
    for (idx, &n) in cfg.schedule.iter().enumerate() {
        if n < 2 {
            return Err(invalid("rate schedule sizes must be at least 2"));
        }
        let k = rate_k(n, cfg.beta);
        let kernel = basis_kernel(OrthoBasis::HaarWavelets, k)?;
        let expected = truths(&cfg.design, k)?.0;
        let seed = cfg.seed.wrapping_add(idx as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        let out = par_reps(seed, cfg.reps, |rep, rng| {
            let mut x = vec![0.0; n];
            for v in x.iter_mut() {
                sampler.draw(&g, rng, std::slice::from_mut(v));
            }
            let s = Sample::ones(1, x)?;
            let u = u_stat(&kernel, &s)?;
            let err = if cfg.spot_check && rep % 100 == 0 {
                let nf = n as f64;
                let brute = u_stat_brute(&kernel, &s)?;
                let scale = pair_sum_abs(&kernel, &s)? / (nf * (nf - 1.0));
                (u - brute).abs() / scale
            } else {
                0.0
            };
            Ok((u, err))
        })?;
        let u: Vec<f64> = out.iter().map(|o| o.0).collect();
        let m = stats::moments(&u);
        let mse: Vec<f64> = u.iter().map(|v| (v - truth).powi(2)).collect();
        rows.push(RateRow {
            n,
            k,
            expected,
            mc_mean: m.mean,
            bias: m.mean - truth,
            bias_se: (m.var / cfg.reps as f64).sqrt(),
            rmse: (crate::sum::pairwise_sum(&mse) / cfg.reps as f64).sqrt(),
            sd: m.var.sqrt(),
            max_spot_check_error: out.iter().map(|o| o.1).fold(0.0, f64::max),
        });
    }
    let lx: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
    let ly: Vec<f64> = rows.iter().map(|r| r.rmse.ln()).collect();
    let fit = stats::ols(&lx, &ly)?;
    Ok(RateTable {
        beta: cfg.beta,
        truth,
        rows,
        slope: fit.slope,
        slope_se: fit.slope_se,
        theory_slope: -2.0 * cfg.beta / (2.0 * cfg.beta + 0.5),
    })
}
