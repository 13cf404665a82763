//! Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use quadest_core::estimators::{
    mean_response_with_fit, sq_regression_with_fit, CellFit, MeanResponseConfig, MissingSample,
};
use quadest_core::kernels::{
    fourier_projection, haar_kernel, haar_uniform, operator_norm_estimate, spline_gram_kernel,
    squared_norm, wavelet_kernel, SplineSpace, WaveletFamily,
};
use quadest_core::partitions::{build_partition, check_conditions, default_cell_count};
use quadest_core::simulate::generators::{Design, MeanFn, Noise, Response};
use quadest_core::simulate::multinomial::{charlier1, charlier2, AlphaRule};
use quadest_core::simulate::{
    conditional_variance_ratios, run_conditional_normality, run_multinomial_form, run_normality,
    run_rate_experiment, stats, ExperimentConfig, KernelConfig, MultinomialConfig,
    PartitionConfig, RateConfig, Scenario, Setup,
};
use quadest_core::ustat::{
    pair_path, pair_sum, pair_sum_abs, pair_sum_brute, u_stat, variance_exact, Hoeffding, PairPath,
};
use quadest_core::{Domain, KernelSpec, MeasureModel, Sample};

type Check = Result<(bool, String), String>;

struct Criterion {
    id: u32,
    name: &'static str,
    limit: Duration,
    run: fn() -> Check,
}

fn main() {
    let criteria = [
        Criterion { id: 1, name: "Hoeffding reconstruction", limit: secs(10), run: c1_hoeffding },
        Criterion { id: 2, name: "fast pair sums vs brute force", limit: secs(30), run: c2_fast_paths },
        Criterion { id: 3, name: "projection norm identities", limit: secs(60), run: c3_norms },
        Criterion { id: 4, name: "variance of U_n", limit: secs(60), run: c4_variance },
        Criterion { id: 5, name: "normality at desk scale", limit: secs(300), run: c5_normality },
        Criterion { id: 6, name: "conditional normality", limit: secs(600), run: c6_conditional },
        Criterion { id: 7, name: "condition checker", limit: secs(120), run: c7_conditions },
        Criterion { id: 8, name: "rate experiment slope", limit: secs(900), run: c8_rate },
        Criterion { id: 9, name: "multinomial quadratic form", limit: secs(60), run: c9_multinomial },
        Criterion { id: 10, name: "estimator collapses", limit: secs(1), run: c10_collapses },
    ];
    let filter: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for c in &criteria {
        if !filter.is_empty() && !filter.contains(&c.id) {
            continue;
        }
        let t = Instant::now();
        let out = (c.run)();
        let el = t.elapsed();
        let (ok, detail) = match out {
            Ok(v) => v,
            Err(e) => (false, format!("error: {e}")),
        };
        let in_time = el <= c.limit;
        let pass = ok && in_time;
        if !pass {
            failed += 1;
        }
        println!(
            "[{:02}] {} {} ({:.1}s / limit {}s{}) {}",
            c.id,
            if pass { "PASS" } else { "FAIL" },
            c.name,
            el.as_secs_f64(),
            c.limit.as_secs(),
            if in_time { "" } else { ", over time" },
            detail
        );
    }
    println!("acceptance: {failed} failing");
    if failed > 0 {
        std::process::exit(1);
    }
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn e<T>(r: quadest_core::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn regression() -> Response {
    Response::Regression {
        mean: MeanFn::Linear {
            slope: 1.5,
            intercept: -0.4,
        },
        noise: Noise::Gaussian { sd: 0.7 },
    }
}

fn setup(kernel: KernelConfig, design: Design, response: Response) -> Result<Setup, String> {
    let mut c = ExperimentConfig::new(Scenario::RawUstat);
    c.n = 2;
    c.kernel = Some(kernel);
    c.design = design;
    c.response = response;
    e(Setup::new(&c))
}

fn draw(s: &Setup, n: usize, rng: &mut ChaCha8Rng) -> Result<Sample, String> {
    let sampler = quadest_core::simulate::generators::DesignSampler::new(&Design::Uniform, &s.g);
    let d = s.g.dim();
    let mut x = vec![0.0; n * d];
    for r in 0..n {
        sampler.draw(&s.g, rng, &mut x[r * d..(r + 1) * d]);
    }
    let y = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    e(Sample::with_dim(d, x, y))
}

fn c1_hoeffding() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cosine = Design::Cosine {
        coeffs: vec![0.3, -0.2],
        floor: 0.1,
    };
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let kc = match case % 5 {
            0 => KernelConfig::Haar {
                k: 1 << rng.random_range(1..=9),
            },
            1 => KernelConfig::Wavelet {
                level: rng.random_range(2..=5),
                dim: 1,
                wavelet: WaveletFamily::Daubechies4,
                depth: 6,
            },
            2 => KernelConfig::Fourier {
                k: rng.random_range(1..=64),
            },
            3 => KernelConfig::Convolution {
                sigma: rng.random_range(0.02..0.2),
                mother: quadest_core::kernels::Mother::Gaussian,
            },
            _ => KernelConfig::Spline {
                order: rng.random_range(1..=4),
                interior: rng.random_range(3..=30),
            },
        };
        let design = if case % 5 == 1 {
            Design::Uniform
        } else {
            cosine.clone()
        };
        let s = setup(kc, design, regression())?;
        let n = rng.random_range(2..=60);
        let sample = draw(&s, n, &mut rng)?;
        let h = e(Hoeffding::new(&s.kernel, &s.g))?;
        let u = e(u_stat(&s.kernel, &sample))?;
        let parts = h.decompose_with_total(&sample, u);
        // Independent quadratic part: the degenerate kernel summed pair by pair.
        let m = h.mean();
        let kmu: Vec<f64> = (0..n).map(|r| h.kmu(sample.point(r)) * sample.y()[r]).collect();
        let mut q = 0.0;
        for r in 0..n {
            for t in 0..n {
                if r != t {
                    let kv = s.kernel.value(sample.point(r), sample.point(t));
                    q += kv * sample.y()[r] * sample.y()[t] - kmu[r] - kmu[t] + m;
                }
            }
        }
        let nf = n as f64;
        q /= nf * (nf - 1.0);
        let brute = e(pair_sum_brute(&s.kernel, &sample))? / (nf * (nf - 1.0));
        let scale = (e(pair_sum_abs(&s.kernel, &sample))? / (nf * (nf - 1.0)))
            .max(m.abs())
            .max(parts.linear.abs());
        let err = ((parts.mean + parts.linear + q) - brute).abs() / scale;
        let err2 = (parts.quadratic - q).abs() / scale;
        worst = worst.max(err).max(err2);
    }
    Ok((worst <= 1e-12, format!("max relative error {worst:.2e} over 100 cases (tol 1e-12)")))
}

fn c2_fast_paths() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    let (mut haar, mut fourier) = (0, 0);
    for case in 0..100 {
        let n = rng.random_range(2..=512);
        let (kernel, dom): (KernelSpec, Domain) = if case % 2 == 0 {
            let level = rng.random_range(0..=12);
            let g = e(MeasureModel::uniform(Domain::UNIT, 4096.max(1 << level)))?;
            let g = e(Design::Cosine {
                coeffs: vec![0.4],
                floor: 0.1,
            }
            .measure(Domain::UNIT, g.per_axis()))?;
            haar += 1;
            (e(haar_kernel(level, &g))?, Domain::UNIT)
        } else {
            let k = rng.random_range(0..=300);
            let g = e(Design::Cosine {
                coeffs: vec![0.2, 0.1],
                floor: 0.1,
            }
            .measure(Domain::circle(), 4096))?;
            fourier += 1;
            (e(fourier_projection(k, &g))?, Domain::circle())
        };
        let path = pair_path(&kernel);
        if !matches!(path, PairPath::Cells | PairPath::Fourier) {
            return Err(format!("case {case}: unexpected path {path:?}"));
        }
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(dom.lo..dom.hi)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let s = e(Sample::new(x, y))?;
        let fast = e(pair_sum(&kernel, &s))?;
        let brute = e(pair_sum_brute(&kernel, &s))?;
        let scale = e(pair_sum_abs(&kernel, &s))?;
        worst = worst.max((fast - brute).abs() / scale);
    }
    Ok((
        worst <= 1e-12,
        format!("{haar} Haar + {fourier} Fourier cases, max relative error {worst:.2e} (tol 1e-12)"),
    ))
}

fn c3_norms() -> Check {
    let cosine = Design::Cosine {
        coeffs: vec![0.3],
        floor: 0.1,
    };
    let mut ok = true;
    let mut worst_op: f64 = 0.0;
    let mut worst_k: f64 = 0.0;
    let mut notes = Vec::new();
    for k in [8usize, 64, 512] {
        let level = k.trailing_zeros();
        let gh = e(cosine.measure(Domain::UNIT, 4096))?;
        let gu = e(MeasureModel::uniform(Domain::UNIT, 1 << (level + 6)))?;
        let gf = e(cosine.measure(Domain::circle(), (4 * (k + 1)).next_power_of_two().max(4096)))?;
        let kernels: Vec<(&str, KernelSpec, &MeasureModel)> = vec![
            ("haar", e(haar_kernel(level, &gh))?, &gh),
            ("fourier", e(fourier_projection(k / 2, &gf))?, &gf),
            ("wavelet", e(wavelet_kernel(level, 1, WaveletFamily::Daubechies4))?, &gu),
            ("spline", e(spline_gram_kernel(e(SplineSpace::uniform(4, k - 4))?, &gh))?, &gh),
        ];
        for (name, kern, g) in kernels {
            let op = e(operator_norm_estimate(&kern, g))?;
            let sq = e(squared_norm(&kern, g))?;
            let dim = kern.nominal_dimension().unwrap() as f64;
            let dop = (op.value - 1.0).abs();
            let dk = (sq / dim - 1.0).abs();
            worst_op = worst_op.max(dop);
            worst_k = worst_k.max(dk);
            if dop > 1e-3 || dk > 0.01 {
                ok = false;
                notes.push(format!("{name} k={k}: ‖K‖={:.6} ∫∫K²={sq:.3} vs {dim}", op.value));
            }
        }
    }
    Ok((
        ok,
        format!(
            "max |‖K‖−1| = {worst_op:.2e} (tol 1e-3), max |∫∫K²/dim − 1| = {worst_k:.2e} (tol 1e-2) {}",
            notes.join("; ")
        ),
    ))
}

fn c4_variance() -> Check {
    let mut worst: f64 = 0.0;
    for (n, level) in [(50usize, 3u32), (10, 1), (200, 6), (1000, 10)] {
        let g = e(MeasureModel::uniform(Domain::UNIT, 4096))?;
        let k = (1usize << level) as f64;
        let nf = n as f64;
        let exact = 2.0 * (k - 1.0) / (nf * (nf - 1.0));
        let v = e(variance_exact(&haar_uniform(level), &g, n))?.var_total;
        worst = worst.max((v - exact).abs() / exact);
    }
    let mut c = ExperimentConfig::new(Scenario::RawUstat);
    c.n = 50;
    c.reps = 20_000;
    c.seed = 4;
    c.kernel = Some(KernelConfig::Haar { k: 8 });
    let (_, reps) = e(run_normality(&c))?;
    let u: Vec<f64> = reps.iter().map(|r| r.u).collect();
    let m = stats::moments(&u);
    let n = u.len() as f64;
    let m4 = u.iter().map(|v| (v - m.mean).powi(4)).sum::<f64>() / n;
    let se = ((m4 - m.var * m.var) / n).sqrt();
    let exact = 2.0 * 7.0 / (50.0 * 49.0);
    let z = (m.var - exact) / se;
    Ok((
        worst <= 1e-10 && z.abs() <= 3.0,
        format!(
            "closed form vs variance_exact rel err {worst:.2e} (tol 1e-10); MC var {:.6e} vs {exact:.6e}, {z:+.2} SE (tol 3)",
            m.var
        ),
    ))
}

fn normality_cfg(kernel: KernelConfig, n: usize, reps: usize, seed: u64) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(Scenario::RawUstat);
    c.n = n;
    c.reps = reps;
    c.seed = seed;
    c.kernel = Some(kernel);
    c
}

fn c5_normality() -> Check {
    let (h, _) = e(run_normality(&normality_cfg(KernelConfig::Haar { k: 4096 }, 200, 2000, 5)))?;
    let (f, _) = e(run_normality(&normality_cfg(KernelConfig::Fourier { k: 2048 }, 128, 1000, 5)))?;
    let ok = h.ks_distance < 0.06 && h.skew.abs() < 0.25 && f.ks_distance < 0.08;
    Ok((
        ok,
        format!(
            "Haar KS {:.4} (<0.06) skew {:+.3} (|·|<0.25) var ratio {:.3}; Fourier KS {:.4} (<0.08) skew {:+.3}",
            h.ks_distance, h.skew, h.empirical_var_ratio, f.ks_distance, f.skew
        ),
    ))
}

fn c6_conditional() -> Check {
    let mut c = normality_cfg(KernelConfig::Haar { k: 4096 }, 200, 2000, 6);
    c.partition = Some(PartitionConfig { cells: Some(64) });
    let (r, _) = e(run_conditional_normality(&c))?;
    let ratios = e(conditional_variance_ratios(&c, 50))?;
    let inside = ratios.iter().filter(|v| (0.8..=1.2).contains(*v)).count();
    let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().cloned().fold(0.0, f64::max);
    Ok((
        r.ks_distance < 0.06 && inside >= 45,
        format!(
            "KS {:.4} (<0.06) skew {:+.3}; variance ratios in [0.8,1.2]: {inside}/50 (≥45), range [{lo:.3}, {hi:.3}]",
            r.ks_distance, r.skew
        ),
    ))
}

fn c7_conditions() -> Check {
    let g = e(Design::Cosine {
        coeffs: vec![0.3],
        floor: 0.1,
    }
    .measure(Domain::UNIT, 16384))?;
    let haar = e(haar_kernel(12, &g))?;
    let mut worst: f64 = 0.0;
    for m in [1usize, 2, 16, 64, 512, 2048] {
        let p = if m == 1 {
            e(quadest_core::Partition::whole(&g))?
        } else {
            e(build_partition(&haar, m, &g))?
        };
        let r = e(check_conditions(&haar, &p, &g, 200, 4.0))?;
        worst = worst.max((r.diag_ratio - 1.0).abs());
    }
    let mut diag = Vec::new();
    for e2 in 7..=12 {
        let k = 1usize << e2;
        let gf = e(MeasureModel::uniform(
            Domain::circle(),
            (4 * (2 * k + 1)).next_power_of_two(),
        ))?;
        let kern = e(fourier_projection(k, &gf))?;
        let m = default_cell_count(&kern, 200);
        let p = e(build_partition(&kern, m, &gf))?;
        diag.push((k, m, e(check_conditions(&kern, &p, &gf, 200, 4.0))?.diag_ratio));
    }
    let mono = diag.windows(2).all(|w| w[1].2 > w[0].2 - 1e-9);
    let below_one = diag.iter().all(|d| d.2 <= 1.0 + 1e-9);
    let list: Vec<String> = diag.iter().map(|(k, m, d)| format!("k={k},M={m}:{d:.4}")).collect();
    Ok((
        worst <= 1e-10 && mono && below_one,
        format!("Haar |diag−1| max {worst:.2e} (tol 1e-10); Fourier diag {}", list.join(" ")),
    ))
}

fn c8_rate() -> Check {
    let cfg = RateConfig {
        schedule: (9..=14).map(|e| 1usize << e).collect(),
        beta: 0.125,
        design: Design::HaarSeries {
            c: 0.07,
            beta: 0.125,
            levels: 22,
        },
        reps: 300,
        seed: 8,
        spot_check: true,
    };
    let t = e(run_rate_experiment(&cfg))?;
    let spot = t.rows.iter().map(|r| r.max_spot_check_error).fold(0.0, f64::max);
    let ok = (t.slope - t.theory_slope).abs() <= 0.10 && spot <= 1e-12;
    let rows: Vec<String> = t
        .rows
        .iter()
        .map(|r| format!("n={} k={} rmse={:.4}", r.n, r.k, r.rmse))
        .collect();
    Ok((
        ok,
        format!(
            "slope {:.3} ± {:.3} vs {:.3} (±0.10); spot check {spot:.1e}; {}",
            t.slope,
            t.slope_se,
            t.theory_slope,
            rows.join(", ")
        ),
    ))
}

fn c9_multinomial() -> Check {
    let mut sds = Vec::new();
    for n in [64usize, 256, 1024] {
        let s = e(run_multinomial_form(&MultinomialConfig {
            n,
            cells: Some(n),
            alpha: AlphaRule::Uniform,
            probs: None,
            reps: 4000,
            seed: 9,
        }))?;
        sds.push((n, s.sd, s.s_n));
    }
    let mono = sds.windows(2).all(|w| w[1].1 < w[0].1);
    let last = sds.last().unwrap().1;
    let mut units = true;
    for lam in [0.25, 1.0, 2.5, 10.0, 1234.5] {
        units &= charlier1(lam, lam) == 0.0;
        units &= charlier2(0.0, lam) == lam / std::f64::consts::SQRT_2;
    }
    let list: Vec<String> = sds
        .iter()
        .map(|(n, sd, sn)| format!("n={n}: sd {sd:.4} (s_n {sn:.4})"))
        .collect();
    Ok((
        mono && last < 0.05 && units,
        format!("{}; Charlier unit values exact: {units}", list.join(", ")),
    ))
}

fn c10_collapses() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let n = 500;
    let c = 1.7;
    let x: Vec<f64> = (0..n).map(|_| 1.0 - rng.random::<f64>()).collect();
    let main = e(Sample::new(x.clone(), vec![c; n]))?;
    let fit = e(CellFit::given(vec![c; 8], vec![1.0; 8], None))?;
    let t = e(sq_regression_with_fit(&main, fit, 64, None))?.value;
    let y: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
    let ms = e(MissingSample::new(x, vec![1.0; n], y.clone()))?;
    let fit = e(CellFit::given(
        (0..8).map(|i| i as f64 * 0.3).collect(),
        vec![1.0; 8],
        Some(vec![1.0; 8]),
    ))?;
    let m = e(mean_response_with_fit(&ms, fit, &MeanResponseConfig::new(64), None))?.value;
    let mean = y.iter().sum::<f64>() / n as f64;
    // Exact up to floating-point summation.
    let ok = (t - c * c).abs() <= 1e-14 * c * c && (m - mean).abs() <= 1e-14 * 3.0;
    Ok((
        ok,
        format!(
            "T_n − c² = {:.1e}; mean response − sample mean = {:.1e}",
            t - c * c,
            m - mean
        ),
    ))
}
