//! Monte Carlo experiments: normality of `U_n` (plain and given bin counts),
//! the estimators of the squared functionals, the multinomial quadratic form
//! and the rate experiment.

pub mod generators;
pub mod multinomial;
pub mod rate;
pub mod stats;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimators::{
    mean_response_estimate, sq_regression_estimate, MeanResponseConfig, MissingSample,
    RegressionConfig, SplitEstimate,
};
use crate::kernels::{
    basis_kernel, constant_kernel, convolution_kernel, fourier_projection, haar_kernel,
    spline_gram_kernel, twice, wavelet_kernel_with_depth, KernelSpec, Mother, OrthoBasis,
    SplineSpace, WaveletFamily, wavelet::DEFAULT_DEPTH,
};
use crate::measure::{Domain, MeasureModel, DEFAULT_GRID};
use crate::partitions::{
    build_partition, default_cell_count, multinomial_counts, variance_restricted, BinAssignment,
    CellMoments, ConditionalSampler, Partition,
};
use crate::ustat::{pair_sum_abs, u_stat, u_stat_brute, v_stat, Hoeffding, Sample};

use generators::{draw_xy, Design, DesignSampler, Propensity, Response};
pub use multinomial::{run_multinomial_form, MultinomialConfig, MultinomialSummary};
pub use rate::{run_rate_experiment, RateConfig, RateRow, RateTable};

/// Stream used for the frozen count vector of a conditional run.
const COUNTS_STREAM: u64 = u64::MAX;

/// RNG for replication `rep`: one root seed, one ChaCha stream per replication.
pub fn rep_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

/// Runs `f` for every replication in parallel; results come back in index order.
pub fn par_reps<T, F>(seed: u64, reps: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &mut ChaCha8Rng) -> Result<T> + Sync,
{
    (0..reps)
        .into_par_iter()
        .map(|r| f(r, &mut rep_rng(seed, r as u64)))
        .collect()
}

/// Runs `f` on a pool with `threads` workers (all cores when `None`).
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        if t == 0 {
            return Err(invalid("thread count must be at least 1"));
        }
        b = b.num_threads(t);
    }
    let pool = b
        .build()
        .map_err(|e| invalid(format!("cannot start thread pool: {e}")))?;
    Ok(pool.install(f))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    RawUstat,
    SqDensity,
    SqRegression,
    MeanResponse,
    MultinomialForm,
    Rate,
}

/// Kernel family and size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelConfig {
    /// Haar projection in `L₂(G)` with `k = 2^level` cells.
    Haar { k: usize },
    Wavelet {
        level: u32,
        #[serde(default = "one_dim")]
        dim: usize,
        #[serde(default)]
        wavelet: WaveletFamily,
        #[serde(default = "default_depth")]
        depth: u32,
    },
    /// Fourier projection in `L₂(G)` on `[−π, π]`, dimension `2k+1`.
    Fourier { k: usize },
    Convolution {
        sigma: f64,
        #[serde(default)]
        mother: Mother,
    },
    /// Uniform B-splines of the given order with `interior` knots.
    Spline { order: usize, interior: usize },
    Basis { basis: OrthoBasis, k: usize },
    Constant { value: f64 },
}

fn one_dim() -> usize {
    1
}
fn default_depth() -> u32 {
    DEFAULT_DEPTH
}

impl KernelConfig {
    pub fn domain(&self) -> Domain {
        match self {
            KernelConfig::Fourier { .. } => Domain::circle(),
            KernelConfig::Wavelet { dim, .. } => Domain::unit_cube(*dim),
            _ => Domain::UNIT,
        }
    }

    /// Nodes per axis of the quadrature grid used by default.
    pub fn default_grid(&self) -> usize {
        let base = DEFAULT_GRID;
        match *self {
            KernelConfig::Haar { k } => base.max(k),
            KernelConfig::Fourier { k } => base.max((4 * (2 * k + 1)).next_power_of_two()),
            KernelConfig::Wavelet {
                level, dim, depth, ..
            } => {
                if dim == 1 {
                    base.max(1usize << (level + depth).min(24))
                } else {
                    (1usize << (level + 2)).clamp(32, 128)
                }
            }
            KernelConfig::Convolution { sigma, .. } => {
                base.max(((16.0 / sigma).ceil().min(1e7) as usize).next_power_of_two())
            }
            KernelConfig::Spline { interior, .. } => base.max((16 * (interior + 1)).next_power_of_two()),
            KernelConfig::Basis { k, .. } => base.max((8 * k).next_power_of_two()),
            KernelConfig::Constant { .. } => base,
        }
    }

    pub fn build(&self, g: &MeasureModel) -> Result<KernelSpec> {
        match self {
            KernelConfig::Haar { k } => {
                if !k.is_power_of_two() {
                    return Err(invalid(format!("Haar k = {k} is not a power of two")));
                }
                haar_kernel(k.trailing_zeros(), g)
            }
            KernelConfig::Wavelet {
                level,
                dim,
                wavelet,
                depth,
            } => wavelet_kernel_with_depth(*level, *dim, *wavelet, *depth),
            KernelConfig::Fourier { k } => fourier_projection(*k, g),
            KernelConfig::Convolution { sigma, mother } => convolution_kernel(*sigma, *mother),
            KernelConfig::Spline { order, interior } => {
                spline_gram_kernel(SplineSpace::uniform(*order, *interior)?, g)
            }
            KernelConfig::Basis { basis, k } => basis_kernel(*basis, *k),
            KernelConfig::Constant { value } => Ok(constant_kernel(*value, g.domain())),
        }
    }

    /// The `k` of a Haar kernel, as needed by the split estimators.
    fn haar_k(&self) -> Result<usize> {
        match *self {
            KernelConfig::Haar { k } => Ok(k),
            _ => Err(invalid("estimator scenarios need a haar kernel")),
        }
    }
}

/// Conditioning on bin counts: `cells` defaults to the kernel's schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionConfig {
    #[serde(default)]
    pub cells: Option<usize>,
}

/// A simulation run described as a JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    #[serde(default)]
    pub n: usize,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub kernel: Option<KernelConfig>,
    #[serde(default)]
    pub twice: bool,
    #[serde(default)]
    pub design: Design,
    #[serde(default)]
    pub response: Response,
    #[serde(default)]
    pub propensity: Propensity,
    /// Quadrature nodes per axis.
    #[serde(default)]
    pub grid: Option<usize>,
    /// Present for a run conditional on bin counts.
    #[serde(default)]
    pub partition: Option<PartitionConfig>,
    #[serde(default)]
    pub nuisance_n: Option<usize>,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub g_min: Option<f64>,
    #[serde(default)]
    pub p_min: Option<f64>,
    #[serde(default)]
    pub resolution: Option<usize>,
    /// Multinomial form: number of cells, `α` rule and cell probabilities.
    #[serde(default)]
    pub cells: Option<usize>,
    #[serde(default)]
    pub alpha: Option<multinomial::AlphaRule>,
    #[serde(default)]
    pub probs: Option<Vec<f64>>,
    /// Rate experiment: sample sizes.
    #[serde(default)]
    pub schedule: Option<Vec<usize>>,
    /// Compare the fast pair sum against the brute-force sum on every 100th replication.
    #[serde(default = "yes")]
    pub spot_check: bool,
}

fn default_reps() -> usize {
    1000
}
fn yes() -> bool {
    true
}

impl ExperimentConfig {
    pub fn new(scenario: Scenario) -> Self {
        ExperimentConfig {
            scenario,
            n: 0,
            reps: default_reps(),
            seed: 0,
            kernel: None,
            twice: false,
            design: Design::Uniform,
            response: Response::One,
            propensity: Propensity::default(),
            grid: None,
            partition: None,
            nuisance_n: None,
            beta: None,
            g_min: None,
            p_min: None,
            resolution: None,
            cells: None,
            alpha: None,
            probs: None,
            schedule: None,
            spot_check: true,
        }
    }

    fn kernel_cfg(&self) -> Result<&KernelConfig> {
        self.kernel
            .as_ref()
            .ok_or_else(|| invalid(format!("scenario {:?} needs a kernel", self.scenario)))
    }

    /// Checks the configuration and fills in every default, so that the
    /// result fully determines the run.
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut c = self.clone();
        if c.reps == 0 {
            return Err(invalid("reps must be at least 1"));
        }
        c.design.validate()?;
        c.propensity.validate()?;
        match c.scenario {
            Scenario::Rate => {
                let s = c.schedule.get_or_insert_with(|| (9..=14).map(|e| 1usize << e).collect());
                if s.len() < 3 {
                    return Err(invalid("rate schedule needs at least 3 sample sizes"));
                }
                if s.iter().any(|&n| n < 2) {
                    return Err(invalid("rate schedule sizes must be at least 2"));
                }
                c.beta.get_or_insert(0.125);
                if !matches!(c.design, Design::Uniform | Design::HaarSeries { .. }) {
                    return Err(invalid("rate experiment needs a uniform or haar_series design"));
                }
                return Ok(c);
            }
            Scenario::MultinomialForm => {
                if c.n < 2 {
                    return Err(invalid("n must be at least 2"));
                }
                c.cells.get_or_insert(c.n);
                c.alpha.get_or_insert(multinomial::AlphaRule::Uniform);
                return Ok(c);
            }
            _ => {}
        }
        if c.n < 2 {
            return Err(Error::InsufficientData(c.n));
        }
        let kc = c.kernel_cfg()?.clone();
        c.grid.get_or_insert(kc.default_grid());
        match c.scenario {
            Scenario::SqDensity if !matches!(c.response, Response::One) => {
                return Err(invalid("sq_density uses Y ≡ 1"));
            }
            Scenario::SqRegression | Scenario::MeanResponse => {
                kc.haar_k()?;
                c.nuisance_n.get_or_insert(c.n);
                c.beta.get_or_insert(crate::estimators::DEFAULT_NUISANCE_BETA);
                c.g_min.get_or_insert(crate::estimators::DEFAULT_G_MIN);
                if c.scenario == Scenario::MeanResponse {
                    c.p_min.get_or_insert(crate::estimators::DEFAULT_P_MIN);
                }
                if c.partition.is_some() {
                    return Err(invalid("estimator scenarios do not condition on bin counts"));
                }
            }
            _ => {}
        }
        if let Some(p) = &mut c.partition {
            if p.cells.is_none() {
                let g = Design::Uniform.measure(kc.domain(), c.grid.unwrap())?;
                p.cells = Some(default_cell_count(&kc.build(&g)?, c.n));
            }
        }
        Ok(c)
    }
}

/// One replication, as written to CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub rep: usize,
    pub statistic: f64,
    /// `U_n`, or the estimate in the estimator scenarios.
    pub u: f64,
    /// `V_n` in a conditional run, else equal to `u`.
    pub v: f64,
    pub linear: f64,
    pub quadratic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalityReport {
    pub ks_distance: f64,
    /// Monte Carlo variance of the standardized statistic.
    pub empirical_var_ratio: f64,
    pub skew: f64,
    pub excess_kurtosis: f64,
    pub reps: usize,
    pub conditional: bool,
    pub n: usize,
    pub k_n: f64,
    pub center: f64,
    pub scale: f64,
    pub mc_mean: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth: Option<f64>,
    pub corr_linear_quadratic: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cells: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frozen_counts: Option<Vec<usize>>,
    pub spot_checks: usize,
    pub max_spot_check_error: f64,
}

/// Result of [`run_experiment`].
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Normality {
        report: NormalityReport,
        replications: Vec<Replication>,
    },
    Multinomial(MultinomialSummary),
    Rate(RateTable),
}

/// Runs the experiment described by `cfg` (resolved first).
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Outcome> {
    let c = cfg.resolve()?;
    match c.scenario {
        Scenario::RawUstat | Scenario::SqDensity => {
            let (report, replications) = if c.partition.is_some() {
                run_conditional_normality(&c)?
            } else {
                run_normality(&c)?
            };
            Ok(Outcome::Normality {
                report,
                replications,
            })
        }
        Scenario::SqRegression | Scenario::MeanResponse => {
            let (report, replications) = run_estimator(&c)?;
            Ok(Outcome::Normality {
                report,
                replications,
            })
        }
        Scenario::MultinomialForm => Ok(Outcome::Multinomial(run_multinomial_form(
            &MultinomialConfig {
                n: c.n,
                cells: c.cells,
                alpha: c.alpha.clone().unwrap_or_default(),
                probs: c.probs.clone(),
                reps: c.reps,
                seed: c.seed,
            },
        )?)),
        Scenario::Rate => Ok(Outcome::Rate(run_rate_experiment(&RateConfig {
            schedule: c.schedule.clone().unwrap_or_default(),
            beta: c.beta.unwrap_or(0.125),
            design: c.design.clone(),
            reps: c.reps,
            seed: c.seed,
            spot_check: c.spot_check,
        })?)),
    }
}

/// Measure, kernel and sampler shared by the replications.
pub struct Setup {
    pub g: MeasureModel,
    pub kernel: KernelSpec,
    pub sampler: DesignSampler,
}

impl Setup {
    pub fn new(c: &ExperimentConfig) -> Result<Self> {
        let kc = c.kernel_cfg()?;
        let grid = c.grid.unwrap_or_else(|| kc.default_grid());
        let g = c.response.attach(c.design.measure(kc.domain(), grid)?)?;
        let mut kernel = kc.build(&g)?;
        if c.twice {
            kernel = twice(&kernel, &g)?;
        }
        let sampler = DesignSampler::new(&c.design, &g);
        Ok(Setup {
            g,
            kernel,
            sampler,
        })
    }

    fn sample(&self, response: &Response, n: usize, rng: &mut ChaCha8Rng) -> Result<Sample> {
        let (x, y) = draw_xy(&self.sampler, &self.g, response, n, rng);
        Sample::with_dim(self.g.dim(), x, y)
    }

    /// `∫ g² dλ = ∫ g dG`, the squared-density target.
    pub fn sq_density_truth(&self) -> f64 {
        self.g.integrate(self.g.density())
    }
}

/// Relative error of the fast `U_n` against the brute-force sum, scaled by
/// the absolute pair mass.
fn spot_check(kernel: &KernelSpec, sample: &Sample, u: f64) -> Result<f64> {
    let n = sample.len() as f64;
    let brute = u_stat_brute(kernel, sample)?;
    let scale = pair_sum_abs(kernel, sample)? / (n * (n - 1.0));
    Ok(if scale > 0.0 { (u - brute).abs() / scale } else { (u - brute).abs() })
}

fn is_spot(c: &ExperimentConfig, rep: usize) -> bool {
    c.spot_check && rep % 100 == 0
}

struct RepOut {
    rec: Replication,
    check: Option<f64>,
    extra: f64,
}

#[allow(clippy::too_many_arguments)]
fn summarize(
    c: &ExperimentConfig,
    outs: Vec<RepOut>,
    conditional: bool,
    k_n: f64,
    center: f64,
    scale: f64,
    truth: Option<f64>,
    cells: Option<usize>,
    frozen_counts: Option<Vec<usize>>,
) -> (NormalityReport, Vec<Replication>) {
    let stat: Vec<f64> = outs.iter().map(|o| o.rec.statistic).collect();
    let value: Vec<f64> = outs
        .iter()
        .map(|o| if conditional { o.rec.v } else { o.rec.u })
        .collect();
    let lin: Vec<f64> = outs.iter().map(|o| o.rec.linear).collect();
    let quad: Vec<f64> = outs.iter().map(|o| o.rec.quadratic).collect();
    let m = stats::moments(&stat);
    let checks: Vec<f64> = outs.iter().filter_map(|o| o.check).collect();
    let report = NormalityReport {
        ks_distance: stats::ks_normal(&stat),
        empirical_var_ratio: m.var,
        skew: m.skew,
        excess_kurtosis: m.excess_kurtosis,
        reps: c.reps,
        conditional,
        n: c.n,
        k_n,
        center,
        scale,
        mc_mean: stats::moments(&value).mean,
        truth,
        corr_linear_quadratic: stats::correlation(&lin, &quad),
        cells,
        frozen_counts,
        spot_checks: checks.len(),
        max_spot_check_error: checks.iter().cloned().fold(0.0, f64::max),
    };
    (report, outs.into_iter().map(|o| o.rec).collect())
}

fn standardize(value: f64, center: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        (value - center) / scale
    } else {
        0.0
    }
}

/// Unconditional normality of `(U_n − E U_n)/√(2k_n/n²)`.
pub fn run_normality(cfg: &ExperimentConfig) -> Result<(NormalityReport, Vec<Replication>)> {
    let c = cfg.resolve()?;
    let s = Setup::new(&c)?;
    let h = Hoeffding::new(&s.kernel, &s.g)?;
    let center = h.mean();
    let k_n = crate::ustat::k_n_weighted(&s.kernel, &s.g)?;
    let scale = (2.0 * k_n).sqrt() / c.n as f64;
    let outs = par_reps(c.seed, c.reps, |rep, rng| {
        let sample = s.sample(&c.response, c.n, rng)?;
        let u = u_stat(&s.kernel, &sample)?;
        let parts = h.decompose_with_total(&sample, u);
        let check = if is_spot(&c, rep) {
            Some(spot_check(&s.kernel, &sample, u)?)
        } else {
            None
        };
        Ok(RepOut {
            rec: Replication {
                rep,
                statistic: standardize(u, center, scale),
                u,
                v: u,
                linear: parts.linear,
                quadratic: parts.quadratic,
            },
            check,
            extra: 0.0,
        })
    })?;
    let truth = (c.scenario == Scenario::SqDensity).then(|| s.sq_density_truth());
    Ok(summarize(&c, outs, false, k_n, center, scale, truth, None, None))
}

fn partition_for(c: &ExperimentConfig, s: &Setup) -> Result<Partition> {
    let m = c
        .partition
        .and_then(|p| p.cells)
        .ok_or_else(|| invalid("conditional run needs a partition"))?;
    if m == 1 {
        Partition::whole(&s.g)
    } else {
        build_partition(&s.kernel, m, &s.g)
    }
}

/// Normality of `(V_n − E(V_n|I_n))/sd(V_n|I_n)` with one frozen count vector.
pub fn run_conditional_normality(
    cfg: &ExperimentConfig,
) -> Result<(NormalityReport, Vec<Replication>)> {
    let c = cfg.resolve()?;
    let s = Setup::new(&c)?;
    let partition = partition_for(&c, &s)?;
    let counts = multinomial_counts(c.n, &partition.probs, &mut rep_rng(c.seed, COUNTS_STREAM));
    let cm = CellMoments::compute(&s.kernel, &partition, &s.g)?;
    let center = cm.conditional_mean(&counts)?;
    let scale = cm.conditional_variance(&counts)?.sqrt();
    let bins = BinAssignment::from_counts(counts.clone());
    let cs = ConditionalSampler::new(&partition, &s.g)?;
    let h = Hoeffding::new(&s.kernel, &s.g)?;
    let dom = s.g.domain();
    let d = s.g.dim();
    let outs = par_reps(c.seed, c.reps, |rep, rng| {
        let x = cs.draw(&bins, &s.g, rng)?;
        let y = (0..c.n)
            .map(|r| c.response.draw((x[r * d] - dom.lo) / dom.width(), rng))
            .collect();
        let sample = Sample::with_dim(d, x, y)?;
        let v = v_stat(&s.kernel, &sample, &partition)?.total;
        let u = u_stat(&s.kernel, &sample)?;
        let parts = h.decompose_with_total(&sample, u);
        let check = if is_spot(&c, rep) {
            Some(spot_check(&s.kernel, &sample, u)?)
        } else {
            None
        };
        Ok(RepOut {
            rec: Replication {
                rep,
                statistic: standardize(v, center, scale),
                u,
                v,
                linear: parts.linear,
                quadratic: parts.quadratic,
            },
            check,
            extra: 0.0,
        })
    })?;
    let cells = partition.cells();
    Ok(summarize(
        &c,
        outs,
        true,
        cm.k_n,
        center,
        scale,
        None,
        Some(cells),
        Some(counts),
    ))
}

/// `var(V_n | I_n)/var(V_n)` for `draws` independent count vectors.
pub fn conditional_variance_ratios(cfg: &ExperimentConfig, draws: usize) -> Result<Vec<f64>> {
    let c = cfg.resolve()?;
    let s = Setup::new(&c)?;
    let partition = partition_for(&c, &s)?;
    let cm = CellMoments::compute(&s.kernel, &partition, &s.g)?;
    let full = variance_restricted(&s.kernel, &partition, &s.g, c.n)?.var_total;
    if !(full > 0.0) {
        return Err(Error::DegenerateMeasure("V_n has zero variance".into()));
    }
    (0..draws)
        .map(|i| {
            let mut rng = rep_rng(c.seed ^ 0x5eed_c0de, i as u64);
            let counts = multinomial_counts(c.n, &partition.probs, &mut rng);
            Ok(cm.conditional_variance(&counts)? / full)
        })
        .collect()
}

/// Split estimators with nuisance fits on an independent sample; the
/// statistic is `(T_n − truth)/√var_hat`.
pub fn run_estimator(cfg: &ExperimentConfig) -> Result<(NormalityReport, Vec<Replication>)> {
    let c = cfg.resolve()?;
    let s = Setup::new(&c)?;
    let k = c.kernel_cfg()?.haar_k()?;
    let n_nuis = c.nuisance_n.unwrap_or(c.n);
    let dom = s.g.domain();
    if dom != Domain::UNIT {
        return Err(invalid("estimator scenarios live on [0,1]"));
    }
    let mu: Vec<f64> = (0..s.g.len()).map(|i| c.response.moments(s.g.node(i)[0]).0).collect();
    let outs = match c.scenario {
        Scenario::SqRegression => {
            let truth = s.g.integrate(&mu.iter().map(|m| m * m).collect::<Vec<_>>());
            let rc = RegressionConfig {
                k,
                beta: c.beta.unwrap_or(crate::estimators::DEFAULT_NUISANCE_BETA),
                g_min: c.g_min.unwrap_or(crate::estimators::DEFAULT_G_MIN),
                resolution: c.resolution,
            };
            let outs = par_reps(c.seed, c.reps, |rep, rng| {
                let main = s.sample(&c.response, c.n, rng)?;
                let nuis = s.sample(&c.response, n_nuis, rng)?;
                let e = sq_regression_estimate(&main, &nuis, &rc, Some(truth))?;
                Ok(estimate_out(rep, &e))
            })?;
            (outs, truth)
        }
        Scenario::MeanResponse => {
            let truth = s.g.integrate(&mu);
            let mc = MeanResponseConfig {
                k,
                beta: c.beta.unwrap_or(crate::estimators::DEFAULT_NUISANCE_BETA),
                g_min: c.g_min.unwrap_or(crate::estimators::DEFAULT_G_MIN),
                p_min: c.p_min.unwrap_or(crate::estimators::DEFAULT_P_MIN),
                resolution: c.resolution,
            };
            let draw = |n: usize, rng: &mut ChaCha8Rng| -> Result<MissingSample> {
                let sample = s.sample(&c.response, n, rng)?;
                let z = sample.x().to_vec();
                let a: Vec<f64> = z
                    .iter()
                    .map(|&u| {
                        if rand::Rng::random::<f64>(rng) < c.propensity.eval(u) {
                            1.0
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let ya = a.iter().zip(sample.y()).map(|(a, y)| a * y).collect();
                MissingSample::new(z, a, ya)
            };
            let outs = par_reps(c.seed, c.reps, |rep, rng| {
                let main = draw(c.n, rng)?;
                let nuis = draw(n_nuis, rng)?;
                let e = mean_response_estimate(&main, &nuis, &mc, Some(truth))?;
                Ok(estimate_out(rep, &e))
            })?;
            (outs, truth)
        }
        _ => return Err(invalid("not an estimator scenario")),
    };
    let (outs, truth) = outs;
    let mean_var = stats::moments(&outs.iter().map(|o| o.extra).collect::<Vec<_>>()).mean;
    let values: Vec<f64> = outs.iter().map(|o| o.rec.u).collect();
    let mc_var = stats::moments(&values).var;
    let (mut report, reps) = summarize(
        &c,
        outs,
        false,
        k as f64,
        truth,
        mean_var.sqrt(),
        Some(truth),
        None,
        None,
    );
    report.empirical_var_ratio = if mean_var > 0.0 { mc_var / mean_var } else { 0.0 };
    Ok((report, reps))
}

fn estimate_out(rep: usize, e: &SplitEstimate) -> RepOut {
    RepOut {
        rec: Replication {
            rep,
            statistic: e.std_stat.unwrap_or(0.0),
            u: e.value,
            v: e.value,
            linear: e.linear,
            quadratic: e.quadratic,
        },
        check: None,
        extra: e.var_hat,
    }
}

#[cfg(test)]
mod tests;
