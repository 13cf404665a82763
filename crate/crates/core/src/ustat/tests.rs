use super::*;
use crate::kernels::*;
use crate::measure::Domain;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unif(n: usize) -> MeasureModel {
    MeasureModel::uniform(Domain::UNIT, n).unwrap()
}

fn random_sample(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Sample {
    let x = (0..n).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect();
    let y = (0..n).map(|_| rng.random::<f64>() * 4.0 - 1.5).collect();
    Sample::new(x, y).unwrap()
}

/// Difference relative to the absolute pair-term mass.
fn rel_err(kernel: &KernelSpec, s: &Sample, a: f64, b: f64) -> f64 {
    let scale = pair_sum_abs(kernel, s).unwrap().max(f64::MIN_POSITIVE);
    (a - b).abs() / scale
}

#[test]
fn constant_kernel_gives_constant() {
    let k = constant_kernel(2.5, Domain::UNIT);
    for n in [2, 3, 17, 200] {
        let s = Sample::ones(1, (0..n).map(|i| i as f64 / n as f64).collect()).unwrap();
        assert!((u_stat(&k, &s).unwrap() - 2.5).abs() < 1e-14);
    }
}

#[test]
fn haar_hand_example() {
    let k = haar_uniform(1);
    let s = Sample::new(vec![0.1, 0.2, 0.7], vec![1.0, 2.0, 3.0]).unwrap();
    assert!((u_stat(&k, &s).unwrap() - 4.0 / 3.0).abs() < 1e-15);
    assert!((u_stat_brute(&k, &s).unwrap() - 4.0 / 3.0).abs() < 1e-15);
}

#[test]
fn two_points_give_kernel_value() {
    let k = fourier_kernel(5, Domain::circle()).unwrap();
    let s = Sample::ones(1, vec![0.3, -1.2]).unwrap();
    let want = k.value(&[0.3], &[-1.2]);
    assert!((u_stat(&k, &s).unwrap() - want).abs() < 1e-13);
}

#[test]
fn needs_two_points() {
    let k = haar_uniform(2);
    let s = Sample::ones(1, vec![0.3]).unwrap();
    assert!(matches!(u_stat(&k, &s), Err(Error::InsufficientData(1))));
}

#[test]
fn out_of_domain_rejected() {
    let k = haar_uniform(2);
    let s = Sample::ones(1, vec![0.3, 1.5]).unwrap();
    assert!(matches!(u_stat(&k, &s), Err(Error::Domain { .. })));
}

#[test]
fn fast_paths_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let g = unif(1024).with_density(|x| 0.5 + x[0]).unwrap();
    for case in 0..100 {
        let n = rng.random_range(2..=256);
        let level = rng.random_range(0..=6u32);
        let k = 1usize << level;
        let kernels: Vec<KernelSpec> = vec![
            haar_uniform(level),
            haar_kernel(level, &g).unwrap(),
            fourier_kernel(k, Domain::circle()).unwrap(),
            fourier_projection(k, &unif(1024)).unwrap(),
            basis_kernel(OrthoBasis::HaarWavelets, rng.random_range(1..=64)).unwrap(),
            basis_kernel(OrthoBasis::Trig, rng.random_range(1..=64)).unwrap(),
            wavelet_kernel(level, 1, WaveletFamily::Haar).unwrap(),
            constant_kernel(1.7, Domain::UNIT),
        ];
        for kern in kernels {
            let d = kern.domain();
            let s = random_sample(&mut rng, n, d.lo, d.hi);
            let fast = pair_sum(&kern, &s).unwrap();
            let slow = pair_sum_brute(&kern, &s).unwrap();
            let e = rel_err(&kern, &s, fast, slow);
            assert!(e < 1e-12, "case {case} {:?} n={n}: {fast} vs {slow} ({e:e})", pair_path(&kern));
        }
    }
}

#[test]
fn spline_order_one_uses_cells() {
    let g = unif(512);
    let kern = spline_gram_kernel(SplineSpace::uniform(1, 7).unwrap(), &g).unwrap();
    assert_eq!(pair_path(&kern), PairPath::Cells);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let s = random_sample(&mut rng, 100, 0.0, 1.0);
    let e = rel_err(&kern, &s, pair_sum(&kern, &s).unwrap(), pair_sum_brute(&kern, &s).unwrap());
    assert!(e < 1e-12);
}

#[test]
fn cross_sum_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let g = unif(256).with_density(|x| 1.0 + 0.5 * x[0]).unwrap();
    for _ in 0..20 {
        let n = rng.random_range(2..=100);
        for kern in [
            haar_kernel(4, &g).unwrap(),
            fourier_kernel(9, Domain::UNIT).unwrap(),
            convolution_kernel(0.1, Mother::Box).unwrap(),
        ] {
            let s = random_sample(&mut rng, n, 0.0, 1.0);
            let u: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.3).collect();
            let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.1).collect();
            let a = cross_pair_sum(&kern, &s, &u, &v).unwrap();
            let b = cross_pair_sum_brute(&kern, &s, &u, &v).unwrap();
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} vs {b}");
        }
    }
}

#[test]
fn permutation_and_scaling() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let kern = convolution_kernel(0.2, Mother::Gaussian).unwrap();
    let s = random_sample(&mut rng, 60, 0.0, 1.0);
    let u = u_stat(&kern, &s).unwrap();
    let rev: Vec<usize> = (0..60).rev().collect();
    let p = s.select(&rev);
    assert!((u_stat(&kern, &p).unwrap() - u).abs() <= 1e-13 * u.abs());
    let scaled = s.with_y(s.y().iter().map(|v| 3.0 * v).collect()).unwrap();
    assert!((u_stat(&kern, &scaled).unwrap() - 9.0 * u).abs() <= 1e-12 * u.abs());
}

#[test]
fn hoeffding_projection_constants() {
    let g = unif(1024);
    for kern in [haar_kernel(4, &g).unwrap(), fourier_projection(6, &MeasureModel::uniform(Domain::circle(), 1024).unwrap()).unwrap()] {
        let gg = MeasureModel::uniform(kern.domain(), 1024).unwrap();
        let h = Hoeffding::new(&kern, &gg).unwrap();
        assert!((h.mean() - 1.0).abs() < 1e-10, "{}", h.mean());
        let d = kern.domain();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = (0..50).map(|_| d.lo + d.width() * rng.random::<f64>()).collect();
        let s = Sample::ones(1, x).unwrap();
        let parts = h.decompose(&s).unwrap();
        assert!(parts.linear.abs() < 1e-10, "{}", parts.linear);
    }
}

#[test]
fn hoeffding_reconstructs_total() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let g = unif(512).with_moments(|x| x[0], |x| 1.0 + x[0], |x| 2.0 + x[0], 4.0).unwrap();
    let kern = convolution_kernel(0.1, Mother::Box).unwrap();
    let h = Hoeffding::new(&kern, &g).unwrap();
    for _ in 0..20 {
        let s = random_sample(&mut rng, 40, 0.0, 1.0);
        let p = h.decompose(&s).unwrap();
        let sum = p.mean + p.linear + p.quadratic;
        let scale = p.total.abs().max(p.mean.abs()).max(p.linear.abs());
        assert!((sum - p.total).abs() <= 1e-12 * scale);
        assert_eq!(p.total, u_stat(&kern, &s).unwrap());
    }
}

#[test]
fn k_n_examples() {
    let g = unif(1024);
    let kern = haar_kernel(2, &g).unwrap();
    assert!((k_n_weighted(&kern, &g).unwrap() - 4.0).abs() < 1e-12);
    let g3 = unif(1024).with_moments(|_| 1.0, |_| 3.0, |_| 9.0, 4.0).unwrap();
    let a = k_n_weighted(&kern, &g3).unwrap();
    assert!((a - 36.0).abs() < 1e-10);
    let fk = fourier_projection(8, &MeasureModel::uniform(Domain::circle(), 2048).unwrap()).unwrap();
    let gc = MeasureModel::uniform(Domain::circle(), 2048).unwrap();
    let kn = k_n_weighted(&fk, &gc).unwrap();
    assert!((kn - 17.0).abs() < 0.17, "{kn}");
}

#[test]
fn haar_variance_closed_form() {
    let g = unif(4096);
    for (level, n) in [(3u32, 50usize), (6, 200), (10, 37)] {
        let kern = haar_kernel(level, &g).unwrap();
        let k = (1usize << level) as f64;
        let nf = n as f64;
        let want = 2.0 * (k - 1.0) / (nf * (nf - 1.0));
        let v = variance_exact(&kern, &g, n).unwrap();
        assert!((v.var_total - want).abs() <= 1e-10 * want, "{} vs {want}", v.var_total);
        let recombined = v.term_linear + v.term_cross + v.term_quadratic;
        assert!((recombined - v.var_total).abs() <= 1e-15 + 1e-12 * want);
    }
}

#[test]
fn centered_variance_is_quadratic_only() {
    let g = unif(1024).with_moments(|_| 0.0, |_| 0.25, |_| 0.1875, 4.0).unwrap();
    let kern = convolution_kernel(0.05, Mother::Box).unwrap();
    let v = variance_exact(&kern, &g, 100).unwrap();
    assert_eq!(v.term_linear, 0.0);
    assert_eq!(v.term_cross, 0.0);
    assert!((v.var_total - 2.0 * v.k_n / 9900.0).abs() < 1e-15);
}

#[test]
fn v_stat_single_cell_is_u_stat() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let g = unif(512);
    let kern = convolution_kernel(0.1, Mother::Box).unwrap();
    let s = random_sample(&mut rng, 80, 0.0, 1.0);
    let p = Partition::whole(&g).unwrap();
    let v = v_stat(&kern, &s, &p).unwrap();
    assert_eq!(v.per_cell.len(), 1);
    assert_eq!(v.total, u_stat(&kern, &s).unwrap());
}

#[test]
fn v_stat_haar_coarsening_equals_u() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let g = unif(1024);
    let kern = haar_kernel(6, &g).unwrap();
    let p = crate::partitions::build_partition(&kern, 16, &g).unwrap();
    let s = random_sample(&mut rng, 300, 0.0, 1.0);
    let v = v_stat(&kern, &s, &p).unwrap();
    let u = u_stat(&kern, &s).unwrap();
    assert!((v.total - u).abs() <= 1e-12 * u.abs().max(1.0));
    let sum: f64 = crate::sum::pairwise_sum(&v.per_cell);
    assert_eq!(sum, v.total);
}

#[test]
fn v_stat_fourier_matches_restricted_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let gc = MeasureModel::uniform(Domain::circle(), 1024).unwrap();
    let kern = fourier_kernel(8, Domain::circle()).unwrap();
    let p = crate::partitions::build_partition(&kern, 8, &gc).unwrap();
    let s = random_sample(&mut rng, 64, -std::f64::consts::PI, std::f64::consts::PI);
    let v = v_stat(&kern, &s, &p).unwrap();
    let mut brute = 0.0;
    let mut scale = 0.0;
    for r in 0..64 {
        for t in 0..64 {
            if r != t && p.cell_of(s.point(r)) == p.cell_of(s.point(t)) {
                let term = kern.value(s.point(r), s.point(t)) * s.y()[r] * s.y()[t];
                brute += term;
                scale += term.abs();
            }
        }
    }
    let d = 64.0 * 63.0;
    assert!((v.total - brute / d).abs() <= 1e-12 * scale / d);
}

#[test]
fn v_stat_drifts_from_u_as_cells_shrink() {
    // Nested partitions and a nonnegative kernel: each refinement drops more pairs.
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let g = unif(1024);
    let kern = convolution_kernel(0.1, Mother::Box).unwrap();
    for _ in 0..10 {
        let x = random_sample(&mut rng, 120, 0.0, 1.0).x().to_vec();
        let s = Sample::ones(1, x).unwrap();
        let u = u_stat(&kern, &s).unwrap();
        let mut last = 0.0;
        for m in [1usize, 2, 4, 8, 16, 64] {
            let p = if m == 1 {
                Partition::whole(&g).unwrap()
            } else {
                Partition::equal(m, &g).unwrap()
            };
            let gap = (u - v_stat(&kern, &s, &p).unwrap().total).abs();
            assert!(gap >= last - 1e-12, "M={m}: {gap} < {last}");
            last = gap;
        }
        assert!(last > 0.0);
    }
}
