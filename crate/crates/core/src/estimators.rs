//! Squared-density, squared-regression and mean-response estimators.
//!
//! The two split-sample estimators fit cell-wise nuisance functions
//! (regressogram, histogram, inverse observation rate) on an independent
//! sample at a dyadic resolution `L ≤ k`, then evaluate the estimator on the
//! main sample with a `G`-weighted Haar kernel of dimension `k`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernels::{basis_kernel, haar_uniform, KernelSpec, OrthoBasis};
use crate::measure::{half_open_index, StepFunction};
use crate::sum::{pairwise_sum, pairwise_sum_by};
use crate::ustat::{cross_pair_sum, pair_sum, Sample};

/// Default floor for estimated design densities.
pub const DEFAULT_G_MIN: f64 = 0.05;
/// Default lower bound for the estimated observation probability `1/â`.
pub const DEFAULT_P_MIN: f64 = 0.05;

/// `k = n^{1/(2β+1/2)}`, rounded to the nearest integer.
pub fn rate_k(n: usize, beta: f64) -> usize {
    ((n as f64).powf(1.0 / (2.0 * beta + 0.5)).round() as usize).max(1)
}

/// Nuisance resolution `2^⌈log₂ n^{1/(2β+1)}⌉`, capped at `k`.
pub fn nuisance_resolution(n_nuisance: usize, beta: f64, k: usize) -> usize {
    let target = (n_nuisance.max(1) as f64).powf(1.0 / (2.0 * beta + 1.0));
    let l = target.max(1.0).log2().ceil() as u32;
    (1usize << l.min(40)).min(k).max(1)
}

fn log2_exact(k: usize) -> Result<u32> {
    if k == 0 || !k.is_power_of_two() {
        return Err(invalid(format!("Haar dimension must be a power of two, got {k}")));
    }
    Ok(k.trailing_zeros())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SqDensityConfig {
    pub basis: OrthoBasis,
    pub k: usize,
    #[serde(default = "default_beta")]
    pub beta: f64,
}

fn default_beta() -> f64 {
    0.125
}

/// Smoothness assumed for `b` (and `a`) when choosing the nuisance resolution.
pub const DEFAULT_NUISANCE_BETA: f64 = 1.0;

fn default_nuisance_beta() -> f64 {
    DEFAULT_NUISANCE_BETA
}

impl SqDensityConfig {
    /// Configuration with `k` from the rate schedule.
    pub fn scheduled(basis: OrthoBasis, n: usize, beta: f64) -> Self {
        SqDensityConfig {
            basis,
            k: rate_k(n, beta),
            beta,
        }
    }
}

/// Unbiased estimate of `Σ_{i<k} θ_i²` from x-values on `[0,1]`.
pub fn sq_density_estimate(x: &[f64], cfg: &SqDensityConfig) -> Result<f64> {
    if !(cfg.beta > 0.0) {
        return Err(invalid("beta must be positive"));
    }
    let kernel = basis_kernel(cfg.basis, cfg.k)?;
    let s = Sample::ones(1, x.to_vec())?;
    crate::ustat::u_stat(&kernel, &s)
}

/// Cell-wise nuisance estimates on `L` equal cells of `[0,1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFit {
    /// Regressogram `b̂` per cell.
    pub b: Vec<f64>,
    /// Histogram density `ĝ` per cell (floored).
    pub g: Vec<f64>,
    /// Inverse observation rate `â` per cell (missing-data model only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<f64>>,
    /// Cells that had no usable nuisance data and borrow a neighbour's value.
    #[serde(default)]
    pub merged: Vec<usize>,
    /// Cells whose `ĝ` hit the floor.
    #[serde(default)]
    pub floored: Vec<usize>,
    /// Cells whose `â` was clamped.
    #[serde(default)]
    pub clamped: Vec<usize>,
    /// Mean squared residual per cell on the nuisance sample.
    #[serde(default)]
    pub resid2: Vec<f64>,
}

impl CellFit {
    /// Fit with given cell values (no flags).
    pub fn given(b: Vec<f64>, g: Vec<f64>, a: Option<Vec<f64>>) -> Result<Self> {
        let l = b.len();
        if l == 0 || !l.is_power_of_two() || g.len() != l || a.as_ref().is_some_and(|a| a.len() != l) {
            return Err(invalid("cell fits need 2^j cells of matching length"));
        }
        Ok(CellFit {
            b,
            g,
            a,
            merged: Vec::new(),
            floored: Vec::new(),
            clamped: Vec::new(),
            resid2: vec![0.0; l],
        })
    }

    pub fn cells(&self) -> usize {
        self.b.len()
    }

    fn cell(&self, x: f64) -> usize {
        half_open_index(x, 0.0, 1.0, self.cells())
    }

    pub fn b_at(&self, x: f64) -> f64 {
        self.b[self.cell(x)]
    }
}

/// Groups of consecutive cells: every cell failing `usable` joins the nearest
/// usable cell on its left (or on its right at the start).
fn merge_groups(usable: &[bool]) -> Result<(Vec<usize>, Vec<usize>)> {
    let l = usable.len();
    let first = usable
        .iter()
        .position(|&u| u)
        .ok_or_else(|| Error::Data("no cell of the nuisance sample holds usable data".into()))?;
    let mut owner = vec![0; l];
    let mut merged = Vec::new();
    let mut cur = first;
    for c in 0..l {
        if usable[c] {
            cur = c;
        } else {
            merged.push(c);
        }
        owner[c] = if c < first { first } else { cur };
    }
    Ok((owner, merged))
}

fn check_unit(s: &Sample) -> Result<()> {
    if s.dim() != 1 {
        return Err(Error::Data("estimators need one-dimensional designs".into()));
    }
    for &x in s.x() {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::Domain {
                point: vec![x],
                lo: 0.0,
                hi: 1.0,
                dim: 1,
            });
        }
    }
    Ok(())
}

/// Regressogram and floored histogram at `l` cells.
pub fn fit_regression(nuisance: &Sample, l: usize, g_min: f64) -> Result<CellFit> {
    check_unit(nuisance)?;
    log2_exact(l)?;
    if nuisance.is_empty() {
        return Err(Error::InsufficientData(0));
    }
    let mut count = vec![0usize; l];
    let mut ys = vec![Vec::new(); l];
    for (r, &x) in nuisance.x().iter().enumerate() {
        let c = half_open_index(x, 0.0, 1.0, l);
        count[c] += 1;
        ys[c].push(nuisance.y()[r]);
    }
    let usable: Vec<bool> = count.iter().map(|&c| c > 0).collect();
    let (owner, merged) = merge_groups(&usable)?;
    let n = nuisance.len() as f64;
    let mut b = vec![0.0; l];
    let mut g = vec![0.0; l];
    let mut floored = Vec::new();
    for c in 0..l {
        let o = owner[c];
        let members: Vec<usize> = (0..l).filter(|&j| owner[j] == o).collect();
        let cnt: usize = members.iter().map(|&j| count[j]).sum();
        let vals: Vec<f64> = members.iter().flat_map(|&j| ys[j].iter().copied()).collect();
        b[c] = pairwise_sum(&vals) / cnt as f64;
        let width = members.len() as f64 / l as f64;
        let dens = cnt as f64 / (n * width);
        if dens < g_min {
            floored.push(c);
        }
        g[c] = dens.max(g_min);
    }
    let mut resid = vec![Vec::new(); l];
    for (r, &x) in nuisance.x().iter().enumerate() {
        let c = half_open_index(x, 0.0, 1.0, l);
        let e = nuisance.y()[r] - b[c];
        resid[c].push(e * e);
    }
    let resid2 = resid
        .iter()
        .map(|v| if v.is_empty() { 0.0 } else { pairwise_sum(v) / v.len() as f64 })
        .collect();
    Ok(CellFit {
        b,
        g,
        a: None,
        merged,
        floored,
        clamped: Vec::new(),
        resid2,
    })
}

/// Split-sample estimate with its plug-in variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitEstimate {
    pub value: f64,
    /// The average over single observations.
    pub linear: f64,
    /// The pair term (with its sign in the estimator).
    pub quadratic: f64,
    pub var_hat: f64,
    pub var_quadratic: f64,
    pub var_linear: f64,
    /// `(value − reference)/√var_hat` when a reference is supplied and the
    /// variance estimate is positive.
    pub std_stat: Option<f64>,
    pub k: usize,
    pub nuisance: CellFit,
}

fn sample_var(v: &[f64]) -> f64 {
    let n = v.len();
    if n < 2 {
        return 0.0;
    }
    let m = pairwise_sum(v) / n as f64;
    pairwise_sum_by(n, |i| (v[i] - m) * (v[i] - m)) / (n as f64 - 1.0)
}

fn weighted_haar(k: usize, w: &[f64]) -> Result<KernelSpec> {
    haar_uniform(log2_exact(k)?).with_weight(StepFunction::new(0.0, 1.0, w.to_vec())?)
}

/// `K²` for the weighted Haar kernel: coefficient `k²` on each fine cell,
/// weight density `w²`.
fn squared_weighted_haar(k: usize, w: &[f64]) -> Result<KernelSpec> {
    let mut spec = haar_uniform(log2_exact(k)?);
    if let crate::kernels::KernelForm::Haar(h) = &mut spec.form {
        h.diag = vec![k as f64; k];
    }
    spec.with_weight(StepFunction::new(0.0, 1.0, w.iter().map(|v| v * v).collect())?)
}

fn finish(
    value: f64,
    linear: f64,
    quadratic: f64,
    var_quadratic: f64,
    var_linear: f64,
    reference: Option<f64>,
    k: usize,
    nuisance: CellFit,
) -> SplitEstimate {
    let var_hat = var_quadratic + var_linear;
    let std_stat = reference
        .filter(|_| var_hat > 0.0)
        .map(|r| (value - r) / var_hat.sqrt());
    SplitEstimate {
        value,
        linear,
        quadratic,
        var_hat,
        var_quadratic,
        var_linear,
        std_stat,
        k,
        nuisance,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressionConfig {
    /// Haar dimension of the pair term (power of two).
    pub k: usize,
    /// Smoothness used for the nuisance resolution.
    #[serde(default = "default_nuisance_beta")]
    pub beta: f64,
    #[serde(default = "default_g_min")]
    pub g_min: f64,
    /// Fixed nuisance resolution; overrides the `β` rule.
    #[serde(default)]
    pub resolution: Option<usize>,
}

fn default_g_min() -> f64 {
    DEFAULT_G_MIN
}

impl RegressionConfig {
    pub fn new(k: usize) -> Self {
        RegressionConfig {
            k,
            beta: default_nuisance_beta(),
            g_min: DEFAULT_G_MIN,
            resolution: None,
        }
    }

    fn resolution_for(&self, n_nuisance: usize) -> Result<usize> {
        log2_exact(self.k)?;
        let l = match self.resolution {
            Some(l) => l,
            None => nuisance_resolution(n_nuisance, self.beta, self.k),
        };
        log2_exact(l)?;
        if l > self.k {
            return Err(invalid(format!("nuisance resolution {l} exceeds k = {}", self.k)));
        }
        Ok(l)
    }
}

/// Estimate of `∫ b² dG` with nuisance fits from an independent sample.
pub fn sq_regression_estimate(
    main: &Sample,
    nuisance: &Sample,
    cfg: &RegressionConfig,
    reference: Option<f64>,
) -> Result<SplitEstimate> {
    let l = cfg.resolution_for(nuisance.len())?;
    let fit = fit_regression(nuisance, l, cfg.g_min)?;
    sq_regression_with_fit(main, fit, cfg.k, reference)
}

/// The squared-regression estimator for a given nuisance fit.
pub fn sq_regression_with_fit(
    main: &Sample,
    fit: CellFit,
    k: usize,
    reference: Option<f64>,
) -> Result<SplitEstimate> {
    check_unit(main)?;
    let n = main.len();
    if n < 2 {
        return Err(Error::InsufficientData(n));
    }
    let l = fit.cells();
    if l > k || k % l != 0 {
        return Err(invalid(format!("nuisance cells {l} must divide k = {k}")));
    }
    if fit.g.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::DegenerateMeasure("estimated density must be positive".into()));
    }
    let x = main.x();
    let y = main.y();
    let bh: Vec<f64> = x.iter().map(|&v| fit.b_at(v)).collect();
    let resid: Vec<f64> = (0..n).map(|r| y[r] - bh[r]).collect();
    let phi: Vec<f64> = (0..n).map(|r| bh[r] * bh[r] + 2.0 * bh[r] * resid[r]).collect();
    let linear = pairwise_sum(&phi) / n as f64;
    let kernel = weighted_haar(k, &fit.g)?;
    let nf = n as f64;
    let quadratic = pair_sum(&kernel, &main.with_y(resid.clone())?)? / (nf * (nf - 1.0));

    let mut r2 = vec![Vec::new(); l];
    for r in 0..n {
        r2[fit.cell(x[r])].push(resid[r] * resid[r]);
    }
    let mu2: Vec<f64> = (0..l)
        .map(|c| {
            if r2[c].is_empty() {
                fit.resid2[c]
            } else {
                pairwise_sum(&r2[c]) / r2[c].len() as f64
            }
        })
        .collect();
    let var_quadratic =
        2.0 / (nf * nf) * (k / l) as f64 * pairwise_sum_by(l, |c| mu2[c] * mu2[c]);
    let var_linear = sample_var(&phi) / nf;
    Ok(finish(
        linear + quadratic,
        linear,
        quadratic,
        var_quadratic,
        var_linear,
        reference,
        k,
        fit,
    ))
}

/// Observations `(Y·A, A, Z)` with `A ∈ {0,1}` and `Z ∈ [0,1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingSample {
    pub z: Vec<f64>,
    pub a: Vec<f64>,
    pub ya: Vec<f64>,
}

impl MissingSample {
    pub fn new(z: Vec<f64>, a: Vec<f64>, ya: Vec<f64>) -> Result<Self> {
        if z.len() != a.len() || z.len() != ya.len() {
            return Err(Error::Data("columns z, a, ya must have equal length".into()));
        }
        for (i, (&ai, &yi)) in a.iter().zip(&ya).enumerate() {
            if ai != 0.0 && ai != 1.0 {
                return Err(Error::Data(format!("row {i}: a must be 0 or 1, got {ai}")));
            }
            if ai == 0.0 && yi != 0.0 {
                return Err(Error::Data(format!("row {i}: ya must be 0 when a = 0")));
            }
            if !yi.is_finite() {
                return Err(Error::Data(format!("row {i}: non-finite ya")));
            }
        }
        for &v in &z {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Domain {
                    point: vec![v],
                    lo: 0.0,
                    hi: 1.0,
                    dim: 1,
                });
            }
        }
        Ok(MissingSample { z, a, ya })
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeanResponseConfig {
    pub k: usize,
    #[serde(default = "default_nuisance_beta")]
    pub beta: f64,
    #[serde(default = "default_g_min")]
    pub g_min: f64,
    #[serde(default = "default_p_min")]
    pub p_min: f64,
    #[serde(default)]
    pub resolution: Option<usize>,
}

fn default_p_min() -> f64 {
    DEFAULT_P_MIN
}

impl MeanResponseConfig {
    pub fn new(k: usize) -> Self {
        MeanResponseConfig {
            k,
            beta: default_nuisance_beta(),
            g_min: DEFAULT_G_MIN,
            p_min: DEFAULT_P_MIN,
            resolution: None,
        }
    }
}

/// `â` (inverse observed fraction), `b̂` from complete cases and `ĝ`.
pub fn fit_missing(nuisance: &MissingSample, l: usize, cfg: &MeanResponseConfig) -> Result<CellFit> {
    log2_exact(l)?;
    if nuisance.is_empty() {
        return Err(Error::InsufficientData(0));
    }
    let mut count = vec![0usize; l];
    let mut obs = vec![0usize; l];
    let mut ys = vec![Vec::new(); l];
    for i in 0..nuisance.len() {
        let c = half_open_index(nuisance.z[i], 0.0, 1.0, l);
        count[c] += 1;
        if nuisance.a[i] == 1.0 {
            obs[c] += 1;
            ys[c].push(nuisance.ya[i]);
        }
    }
    let usable: Vec<bool> = obs.iter().map(|&c| c > 0).collect();
    let (owner, merged) = merge_groups(&usable)?;
    let n = nuisance.len() as f64;
    let mut b = vec![0.0; l];
    let mut g = vec![0.0; l];
    let mut a = vec![0.0; l];
    let mut floored = Vec::new();
    for c in 0..l {
        let o = owner[c];
        let members: Vec<usize> = (0..l).filter(|&j| owner[j] == o).collect();
        let cnt: usize = members.iter().map(|&j| count[j]).sum();
        let ob: usize = members.iter().map(|&j| obs[j]).sum();
        let vals: Vec<f64> = members.iter().flat_map(|&j| ys[j].iter().copied()).collect();
        b[c] = pairwise_sum(&vals) / ob as f64;
        a[c] = cnt as f64 / ob as f64;
        let dens = cnt as f64 / (n * members.len() as f64 / l as f64);
        if dens < cfg.g_min {
            floored.push(c);
        }
        g[c] = dens.max(cfg.g_min);
    }
    let mut fit = CellFit {
        b,
        g,
        a: Some(a),
        merged,
        floored,
        clamped: Vec::new(),
        resid2: vec![0.0; l],
    };
    validate_a(&mut fit, cfg)?;
    Ok(fit)
}

/// Clamps impossible `â < 1` to `1 + g_min` and rejects `1/â < p_min`.
fn validate_a(fit: &mut CellFit, cfg: &MeanResponseConfig) -> Result<()> {
    let a = fit
        .a
        .as_mut()
        .ok_or_else(|| invalid("mean-response fit needs â"))?;
    for (c, v) in a.iter_mut().enumerate() {
        if !(v.is_finite()) {
            return Err(Error::Data(format!("cell {c}: â is not finite")));
        }
        if *v < 1.0 {
            *v = 1.0 + cfg.g_min;
            fit.clamped.push(c);
        }
        if 1.0 / *v < cfg.p_min {
            return Err(Error::Data(format!(
                "cell {c}: estimated observation probability {} is below {}",
                1.0 / *v,
                cfg.p_min
            )));
        }
    }
    Ok(())
}

/// Estimate of `E Y` under missingness at random given `Z`.
pub fn mean_response_estimate(
    main: &MissingSample,
    nuisance: &MissingSample,
    cfg: &MeanResponseConfig,
    reference: Option<f64>,
) -> Result<SplitEstimate> {
    log2_exact(cfg.k)?;
    let l = match cfg.resolution {
        Some(l) => l,
        None => nuisance_resolution(nuisance.len(), cfg.beta, cfg.k),
    };
    let fit = fit_missing(nuisance, l, cfg)?;
    mean_response_with_fit(main, fit, cfg, reference)
}

/// The mean-response estimator for a given nuisance fit.
pub fn mean_response_with_fit(
    main: &MissingSample,
    mut fit: CellFit,
    cfg: &MeanResponseConfig,
    reference: Option<f64>,
) -> Result<SplitEstimate> {
    validate_a(&mut fit, cfg)?;
    let k = cfg.k;
    let l = fit.cells();
    if l > k || k % l != 0 {
        return Err(invalid(format!("nuisance cells {l} must divide k = {k}")));
    }
    let n = main.len();
    if n < 2 {
        return Err(Error::InsufficientData(n));
    }
    let ahat = fit.a.clone().expect("validated");
    let cell = |z: f64| half_open_index(z, 0.0, 1.0, l);
    let mut phi = Vec::with_capacity(n);
    let mut u = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    for i in 0..n {
        let c = cell(main.z[i]);
        let (ai, bi) = (ahat[c], fit.b[c]);
        let resid = main.ya[i] - main.a[i] * bi;
        phi.push(ai * resid + bi);
        u.push(resid);
        v.push(main.a[i] * ai - 1.0);
    }
    let w: Vec<f64> = (0..l).map(|c| fit.g[c] / ahat[c]).collect();
    if w.iter().any(|x| !(*x > 0.0)) {
        return Err(Error::DegenerateMeasure("weight ĝ/â must be positive".into()));
    }
    let kernel = weighted_haar(k, &w)?;
    let s = Sample::new(main.z.clone(), vec![0.0; n])?;
    let nf = n as f64;
    let d = nf * (nf - 1.0);
    let quadratic = -cross_pair_sum(&kernel, &s, &u, &v)? / d;
    let linear = pairwise_sum(&phi) / nf;

    let k2 = squared_weighted_haar(k, &w)?;
    let uu: Vec<f64> = u.iter().map(|x| x * x).collect();
    let vv: Vec<f64> = v.iter().map(|x| x * x).collect();
    let uv: Vec<f64> = (0..n).map(|i| u[i] * v[i]).collect();
    let t1 = cross_pair_sum(&k2, &s, &uu, &vv)?;
    let t2 = cross_pair_sum(&k2, &s, &uv, &uv)?;
    let var_quadratic = ((t1 + t2) / (d * d)).max(0.0);
    let var_linear = sample_var(&phi) / nf;
    Ok(finish(
        linear + quadratic,
        linear,
        quadratic,
        var_quadratic,
        var_linear,
        reference,
        k,
        fit,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rate_schedule() {
        assert_eq!(rate_k(512, 0.125), 4096);
        assert_eq!(nuisance_resolution(2000, 0.5, 256), 64);
        assert_eq!(nuisance_resolution(2000, 0.5, 32), 32);
    }

    #[test]
    fn sq_density_two_points() {
        let cfg = SqDensityConfig {
            basis: OrthoBasis::Trig,
            k: 5,
            beta: 0.2,
        };
        let v = sq_density_estimate(&[0.1, 0.35], &cfg).unwrap();
        let kern = basis_kernel(OrthoBasis::Trig, 5).unwrap();
        assert!((v - kern.value(&[0.1], &[0.35])).abs() < 1e-13);
    }

    #[test]
    fn constant_nuisance_collapses() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = 1.75;
        let xs: Vec<f64> = (0..300).map(|_| rng.random()).collect();
        let main = Sample::new(xs[..150].to_vec(), vec![c; 150]).unwrap();
        let nuis = Sample::new(xs[150..].to_vec(), vec![c; 150]).unwrap();
        let est = sq_regression_estimate(&main, &nuis, &RegressionConfig::new(64), None).unwrap();
        assert!((est.value - c * c).abs() <= 1e-12 * c * c);
        assert_eq!(est.quadratic, 0.0);
    }

    #[test]
    fn zero_regressogram_gives_pure_pair_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 100;
        let x: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        let main = Sample::new(x, y).unwrap();
        let fit = CellFit::given(vec![0.0; 4], vec![1.0; 4], None).unwrap();
        let est = sq_regression_with_fit(&main, fit, 16, None).unwrap();
        assert_eq!(est.linear, 0.0);
        let u = crate::ustat::u_stat(&haar_uniform(4), &main).unwrap();
        assert!((est.value - u).abs() < 1e-14);
    }

    #[test]
    fn scale_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 80;
        let x: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let y: Vec<f64> = x.iter().map(|v| v + rng.random::<f64>() - 0.5).collect();
        let main = Sample::new(x, y.clone()).unwrap();
        let b = vec![0.1, 0.4, 0.6, 0.9];
        let g = vec![0.8, 1.1, 1.0, 1.1];
        let a = sq_regression_with_fit(&main, CellFit::given(b.clone(), g.clone(), None).unwrap(), 32, None)
            .unwrap();
        let c = 4.0;
        let main2 = main.with_y(y.iter().map(|v| c * v).collect()).unwrap();
        let b2 = b.iter().map(|v| c * v).collect();
        let a2 = sq_regression_with_fit(&main2, CellFit::given(b2, g, None).unwrap(), 32, None).unwrap();
        assert!((a2.value - c * c * a.value).abs() <= 1e-12 * a2.value.abs());
    }

    #[test]
    fn empty_nuisance_cells_are_merged() {
        let nuis = Sample::new(vec![0.1, 0.2, 0.9], vec![1.0, 3.0, 5.0]).unwrap();
        let fit = fit_regression(&nuis, 4, 0.05).unwrap();
        assert_eq!(fit.merged, vec![1, 2]);
        assert_eq!(fit.b, vec![2.0, 2.0, 2.0, 5.0]);
        let gsum: f64 = fit.g.iter().sum::<f64>() / 4.0;
        assert!((gsum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn full_observation_gives_sample_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 200;
        let z: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let y: Vec<f64> = z.iter().map(|v| v * 2.0 + rng.random::<f64>()).collect();
        let main = MissingSample::new(z, vec![1.0; n], y.clone()).unwrap();
        let fit = CellFit::given(vec![0.3, 0.7, 1.1, 1.9], vec![1.0; 4], Some(vec![1.0; 4])).unwrap();
        let est = mean_response_with_fit(&main, fit, &MeanResponseConfig::new(64), None).unwrap();
        let mean = y.iter().sum::<f64>() / n as f64;
        assert_eq!(est.quadratic, 0.0);
        assert!((est.value - mean).abs() <= 1e-12 * mean.abs());
    }

    #[test]
    fn constant_response_gives_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100;
        let z: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let a: Vec<f64> = (0..n).map(|_| if rng.random::<f64>() < 0.7 { 1.0 } else { 0.0 }).collect();
        let main = MissingSample::new(z, a.clone(), a).unwrap();
        let fit = CellFit::given(vec![1.0; 2], vec![1.0; 2], Some(vec![1.4, 1.5])).unwrap();
        let est = mean_response_with_fit(&main, fit, &MeanResponseConfig::new(8), None).unwrap();
        assert_eq!(est.value, 1.0);
    }

    #[test]
    fn impossible_inverse_rate_is_clamped() {
        let main = MissingSample::new(vec![0.2, 0.7, 0.9], vec![1.0; 3], vec![1.0, 0.0, 1.0]).unwrap();
        let fit = CellFit::given(vec![0.5; 2], vec![1.0; 2], Some(vec![0.5, 2.0])).unwrap();
        let est = mean_response_with_fit(&main, fit, &MeanResponseConfig::new(4), None).unwrap();
        assert_eq!(est.nuisance.clamped, vec![0]);
        assert_eq!(est.nuisance.a.as_ref().unwrap()[0], 1.0 + DEFAULT_G_MIN);
    }

    #[test]
    fn low_observation_rate_rejected() {
        let main = MissingSample::new(vec![0.2, 0.7], vec![1.0; 2], vec![1.0, 0.0]).unwrap();
        let fit = CellFit::given(vec![0.5; 2], vec![1.0; 2], Some(vec![50.0, 2.0])).unwrap();
        assert!(mean_response_with_fit(&main, fit, &MeanResponseConfig::new(4), None).is_err());
    }

    #[test]
    fn missing_sample_validation() {
        assert!(MissingSample::new(vec![0.1], vec![0.0], vec![1.0]).is_err());
        assert!(MissingSample::new(vec![0.1], vec![0.5], vec![0.0]).is_err());
        assert!(MissingSample::new(vec![1.1], vec![1.0], vec![0.0]).is_err());
    }
}
