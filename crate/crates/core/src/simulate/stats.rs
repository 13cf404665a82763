//! Summary statistics for Monte Carlo output.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{invalid, Result};
use crate::sum::pairwise_sum;

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// `sup_x |F_n(x) − Φ(x)|` for the empirical CDF of `values`.
pub fn ks_normal(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < v.len() {
        // Ties jump together.
        let mut j = i;
        while j + 1 < v.len() && v[j + 1] == v[i] {
            j += 1;
        }
        let f = normal_cdf(v[i]);
        d = d.max(f - i as f64 / n).max((j + 1) as f64 / n - f);
        i = j + 1;
    }
    d.clamp(0.0, 1.0)
}

/// Sample moments; `var` uses the `n − 1` divisor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub var: f64,
    pub skew: f64,
    pub excess_kurtosis: f64,
}

pub fn moments(values: &[f64]) -> Moments {
    let n = values.len() as f64;
    let mean = pairwise_sum(values) / n;
    let c: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let pow = |p: i32| pairwise_sum(&c.iter().map(|v| v.powi(p)).collect::<Vec<_>>()) / n;
    let (m2, m3, m4) = (pow(2), pow(3), pow(4));
    let var = if values.len() > 1 { m2 * n / (n - 1.0) } else { 0.0 };
    let (skew, excess_kurtosis) = if m2 > 0.0 {
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    } else {
        (0.0, 0.0)
    };
    Moments {
        mean,
        var,
        skew,
        excess_kurtosis,
    }
}

/// Pearson correlation (0 when either side is constant).
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let ma = moments(a);
    let mb = moments(b);
    if ma.var <= 0.0 || mb.var <= 0.0 {
        return 0.0;
    }
    let n = a.len() as f64;
    let cov: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - ma.mean) * (y - mb.mean)).collect();
    pairwise_sum(&cov) / (n - 1.0) / (ma.var * mb.var).sqrt()
}

/// Least-squares line `y = intercept + slope x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
}

pub fn ols(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(invalid("a slope fit needs at least 3 points"));
    }
    let n = x.len() as f64;
    let mx = pairwise_sum(x) / n;
    let my = pairwise_sum(y) / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(invalid("slope fit needs distinct x values"));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    Ok(LineFit {
        slope,
        intercept,
        slope_se: (rss / (n - 2.0) / sxx).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ks_of_point_mass_at_zero() {
        assert!((ks_normal(&[0.0; 10]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn ks_of_normal_quantiles_is_small() {
        let n = 1000;
        let q = statrs::distribution::Normal::standard();
        use statrs::distribution::ContinuousCDF;
        let v: Vec<f64> = (0..n).map(|i| q.inverse_cdf((i as f64 + 0.5) / n as f64)).collect();
        let d = ks_normal(&v);
        assert!((d - 0.5 / n as f64).abs() < 1e-9, "{d}");
    }

    #[test]
    fn moments_of_two_points() {
        let m = moments(&[-1.0, 1.0, -1.0, 1.0]);
        assert_eq!(m.mean, 0.0);
        assert!((m.var - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.skew, 0.0);
        assert!((m.excess_kurtosis + 2.0).abs() < 1e-15);
    }

    #[test]
    fn ols_recovers_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        let f = ols(&x, &y).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-14 && (f.intercept - 2.0).abs() < 1e-14);
        assert!(ols(&x[..2], &y[..2]).is_err());
    }
}
