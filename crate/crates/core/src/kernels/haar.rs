use serde::{Deserialize, Serialize};

use crate::measure::half_open_index;

/// `k Σ_j A_jj 1_{cell_j}(x₁) 1_{cell_j}(x₂)` on the dyadic cells of `[0,1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HaarKernel {
    pub level: u32,
    /// `A_jj`, one per dyadic cell.
    pub diag: Vec<f64>,
}

impl HaarKernel {
    pub fn k(&self) -> usize {
        1usize << self.level
    }

    pub fn cell(&self, x: f64) -> usize {
        half_open_index(x, 0.0, 1.0, self.k())
    }

    /// Coefficient `k·A_jj` multiplying the indicator pair of cell `j`.
    pub fn coeff(&self, j: usize) -> f64 {
        self.k() as f64 * self.diag[j]
    }

    pub fn value(&self, x1: f64, x2: f64) -> f64 {
        let a = self.cell(x1);
        if a == self.cell(x2) {
            self.coeff(a)
        } else {
            0.0
        }
    }
}
