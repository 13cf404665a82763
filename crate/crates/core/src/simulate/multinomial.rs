//! The multinomial quadratic form `Σ α_m (N_m(N_m−1)/(n(n−1)p_m²) − 1)`.

use serde::{Deserialize, Serialize};

use super::{par_reps, stats};
use crate::error::{invalid, Result};
use crate::partitions::multinomial_counts;

/// `C₁(x, λ) = (x − λ)/√λ`.
pub fn charlier1(x: f64, lambda: f64) -> f64 {
    (x - lambda) / lambda.sqrt()
}

/// `C₂(x, λ) = (x(x−1) − 2λx + λ²)/(√2 λ)`.
pub fn charlier2(x: f64, lambda: f64) -> f64 {
    (x * (x - 1.0) - 2.0 * lambda * x + lambda * lambda) / (std::f64::consts::SQRT_2 * lambda)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AlphaRule {
    /// `α_m = 1/M`.
    Uniform,
    Values { values: Vec<f64> },
}

impl Default for AlphaRule {
    fn default() -> Self {
        AlphaRule::Uniform
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultinomialConfig {
    pub n: usize,
    /// Number of cells; defaults to `n`.
    #[serde(default)]
    pub cells: Option<usize>,
    #[serde(default)]
    pub alpha: AlphaRule,
    /// Cell probabilities; uniform when absent.
    #[serde(default)]
    pub probs: Option<Vec<f64>>,
    pub reps: usize,
    pub seed: u64,
}

impl MultinomialConfig {
    fn resolve(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        if self.n < 2 || self.reps == 0 {
            return Err(invalid("multinomial form needs n ≥ 2 and reps ≥ 1"));
        }
        let m = self.cells.unwrap_or(self.n);
        let p = match &self.probs {
            Some(p) => {
                if p.len() != m && self.cells.is_some() {
                    return Err(invalid("probs length differs from cells"));
                }
                p.clone()
            }
            None => {
                if m == 0 {
                    return Err(invalid("need at least one cell"));
                }
                vec![1.0 / m as f64; m]
            }
        };
        if p.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(invalid("cell probabilities must be positive"));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("cell probabilities sum to {total}")));
        }
        let alpha = match &self.alpha {
            AlphaRule::Uniform => vec![1.0 / p.len() as f64; p.len()],
            AlphaRule::Values { values } => {
                if values.len() != p.len() {
                    return Err(invalid("alpha length differs from the number of cells"));
                }
                values.clone()
            }
        };
        Ok((p, alpha))
    }
}

/// Per-draw pieces of the form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FormValue {
    /// `Σ α(N(N−1)/(n(n−1)p²) − 1)`.
    pub form: f64,
    /// Same with `n²` in place of `n(n−1)`.
    pub form_n2: f64,
    /// `√2 Σ (α/λ) C₂(N, λ)`.
    pub quadratic: f64,
    /// `2 Σ √λ (α/λ − Σα/n) C₁(N, λ)`.
    pub linear: f64,
}

pub fn evaluate_form(counts: &[usize], p: &[f64], alpha: &[f64]) -> FormValue {
    let n: usize = counts.iter().sum();
    let nf = n as f64;
    let sa: f64 = alpha.iter().sum();
    let (mut form, mut form_n2, mut quad, mut lin) = (0.0, 0.0, 0.0, 0.0);
    for ((&c, &pm), &a) in counts.iter().zip(p).zip(alpha) {
        let x = c as f64;
        let lam = nf * pm;
        let pairs = x * (x - 1.0);
        form += a * (pairs / (nf * (nf - 1.0) * pm * pm) - 1.0);
        form_n2 += a * (pairs / (lam * lam) - 1.0);
        quad += a / lam * charlier2(x, lam);
        lin += lam.sqrt() * (a / lam - sa / nf) * charlier1(x, lam);
    }
    FormValue {
        form,
        form_n2,
        quadratic: std::f64::consts::SQRT_2 * quad,
        linear: 2.0 * lin,
    }
}

/// `s_n² = (2/n²) Σ α²/p² + (4/n) Σ p (α/p − Σα)²`.
pub fn s_n(n: usize, p: &[f64], alpha: &[f64]) -> f64 {
    let nf = n as f64;
    let sa: f64 = alpha.iter().sum();
    let a: f64 = alpha.iter().zip(p).map(|(a, p)| (a / p).powi(2)).sum();
    let b: f64 = alpha.iter().zip(p).map(|(a, p)| p * (a / p - sa).powi(2)).sum();
    (2.0 / (nf * nf) * a + 4.0 / nf * b).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultinomialSummary {
    pub n: usize,
    pub cells: usize,
    pub reps: usize,
    pub mean: f64,
    pub sd: f64,
    pub s_n: f64,
    pub mean_n2: f64,
    pub sd_n2: f64,
    pub mean_quadratic_part: f64,
    pub sd_quadratic_part: f64,
    pub mean_linear_part: f64,
    pub sd_linear_part: f64,
    /// `max |form_n2 − quadratic − linear|` over replications.
    pub max_decomposition_error: f64,
}

pub fn run_multinomial_form(cfg: &MultinomialConfig) -> Result<MultinomialSummary> {
    let (p, alpha) = cfg.resolve()?;
    let vals = par_reps(cfg.seed, cfg.reps, |_, rng| {
        Ok(evaluate_form(&multinomial_counts(cfg.n, &p, rng), &p, &alpha))
    })?;
    let col = |f: fn(&FormValue) -> f64| stats::moments(&vals.iter().map(f).collect::<Vec<_>>());
    let (f, f2, q, l) = (
        col(|v| v.form),
        col(|v| v.form_n2),
        col(|v| v.quadratic),
        col(|v| v.linear),
    );
    let max_err = vals
        .iter()
        .map(|v| (v.form_n2 - v.quadratic - v.linear).abs())
        .fold(0.0, f64::max);
    Ok(MultinomialSummary {
        n: cfg.n,
        cells: p.len(),
        reps: cfg.reps,
        mean: f.mean,
        sd: f.var.sqrt(),
        s_n: s_n(cfg.n, &p, &alpha),
        mean_n2: f2.mean,
        sd_n2: f2.var.sqrt(),
        mean_quadratic_part: q.mean,
        sd_quadratic_part: q.var.sqrt(),
        mean_linear_part: l.mean,
        sd_linear_part: l.var.sqrt(),
        max_decomposition_error: max_err,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charlier_units() {
        for lam in [0.5, 1.0, 3.0, 17.0] {
            assert_eq!(charlier1(lam, lam), 0.0);
            assert_eq!(charlier2(0.0, lam), lam / std::f64::consts::SQRT_2);
        }
    }

    #[test]
    fn form_vanishes_at_expected_pairs() {
        // One cell holds every observation: N(N−1) = n(n−1).
        let v = evaluate_form(&[5], &[1.0], &[0.7]);
        assert!(v.form.abs() < 1e-15);
    }

    #[test]
    fn decomposition_is_exact() {
        let p = [0.1, 0.2, 0.3, 0.4];
        let a = [0.5, -1.0, 2.0, 0.25];
        for counts in [[0, 0, 3, 7], [2, 2, 3, 3], [10, 0, 0, 0]] {
            let v = evaluate_form(&counts, &p, &a);
            assert!((v.form_n2 - v.quadratic - v.linear).abs() < 1e-12, "{v:?}");
        }
    }

    #[test]
    fn uniform_s_n() {
        let p = vec![1.0 / 64.0; 64];
        assert!((s_n(64, &p, &p) - (2.0f64 / 64.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn mc_mean_is_zero_and_sd_tracks_s_n() {
        let cfg = MultinomialConfig {
            n: 256,
            cells: None,
            alpha: AlphaRule::Uniform,
            probs: None,
            reps: 4000,
            seed: 3,
        };
        let s = run_multinomial_form(&cfg).unwrap();
        assert!(s.mean.abs() < 4.0 * s.sd / (cfg.reps as f64).sqrt(), "{s:?}");
        assert!((s.sd / s.s_n - 1.0).abs() < 0.1, "{s:?}");
        assert!(s.max_decomposition_error < 1e-10);
    }
}
