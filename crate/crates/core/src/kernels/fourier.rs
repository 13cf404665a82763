use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Below this `|sin(u/2)|` the Dirichlet kernel returns its limit.
pub const DIAGONAL_THRESHOLD: f64 = 1e-8;

/// `D_k(u) = sin((k+½)u) / (2π sin(u/2))`.
pub fn dirichlet(k: usize, u: f64) -> f64 {
    let s = (0.5 * u).sin();
    if s.abs() < DIAGONAL_THRESHOLD {
        (2 * k + 1) as f64 / (2.0 * PI)
    } else {
        ((k as f64 + 0.5) * u).sin() / (2.0 * PI * s)
    }
}

/// Dirichlet kernel on the periodic interval `[lo, hi]`, rescaled so that on
/// `[-π, π]` it is exactly `D_k(x₁ − x₂)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierKernel {
    pub k: usize,
    pub lo: f64,
    pub hi: f64,
}

impl FourierKernel {
    pub fn period(&self) -> f64 {
        self.hi - self.lo
    }

    /// Angle of `x` on the circle.
    pub fn angle(&self, x: f64) -> f64 {
        2.0 * PI * (x - self.lo) / self.period()
    }

    pub fn value_at_offset(&self, d: f64) -> f64 {
        let l = self.period();
        2.0 * PI / l * dirichlet(self.k, 2.0 * PI * d / l)
    }

    pub fn value(&self, x1: f64, x2: f64) -> f64 {
        self.value_at_offset(x1 - x2)
    }

    pub fn dimension(&self) -> usize {
        2 * self.k + 1
    }
}
