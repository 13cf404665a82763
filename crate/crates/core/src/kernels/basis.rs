use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, SQRT_2};

use crate::measure::half_open_index;

/// Orthonormal bases of `L₂[0,1]` (Lebesgue) whose first element is the constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrthoBasis {
    /// `1, √2 cos 2πx, √2 sin 2πx, √2 cos 4πx, …`
    Trig,
    /// `1, ψ₀₀, ψ₁₀, ψ₁₁, ψ₂₀, …` (Haar wavelets, level by level).
    HaarWavelets,
}

impl OrthoBasis {
    /// Element `i` (0-based) at `x`.
    pub fn element(self, i: usize, x: f64) -> f64 {
        if i == 0 {
            return 1.0;
        }
        match self {
            OrthoBasis::Trig => {
                let m = i.div_ceil(2) as f64;
                if i % 2 == 1 {
                    SQRT_2 * (2.0 * PI * m * x).cos()
                } else {
                    SQRT_2 * (2.0 * PI * m * x).sin()
                }
            }
            OrthoBasis::HaarWavelets => {
                let l = usize::BITS - 1 - i.leading_zeros();
                let j = i - (1usize << l);
                haar_wavelet(l, j, x)
            }
        }
    }
}

/// `ψ_{l,j}(x) = 2^{l/2}(1 on (j, j+½]·2^-l, −1 on (j+½, j+1]·2^-l)`.
pub fn haar_wavelet(l: u32, j: usize, x: f64) -> f64 {
    let half_cells = 1usize << (l + 1);
    let h = half_open_index(x, 0.0, 1.0, half_cells);
    if h / 2 != j {
        return 0.0;
    }
    let amp = ((1u64 << l) as f64).sqrt();
    if h % 2 == 0 {
        amp
    } else {
        -amp
    }
}

/// `K_k(x₁,x₂) = Σ_{i<k} e_i(x₁) e_i(x₂)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisKernel {
    pub basis: OrthoBasis,
    pub k: usize,
}

impl BasisKernel {
    pub fn value(&self, x1: f64, x2: f64) -> f64 {
        match self.basis {
            OrthoBasis::Trig => (0..self.k)
                .map(|i| self.basis.element(i, x1) * self.basis.element(i, x2))
                .sum(),
            // One wavelet per level is nonzero at a point, and once the two
            // points fall in different dyadic cells they never share one again.
            OrthoBasis::HaarWavelets => {
                if self.k <= 1 {
                    return self.k as f64;
                }
                let top = usize::BITS - 1 - (self.k - 1).leading_zeros();
                let fine = 1usize << (top + 1);
                let h1 = half_open_index(x1, 0.0, 1.0, fine);
                let h2 = half_open_index(x2, 0.0, 1.0, fine);
                let mut s = 1.0;
                for l in 0..=top {
                    let (a, b) = (h1 >> (top - l), h2 >> (top - l));
                    if a / 2 != b / 2 {
                        break;
                    }
                    if (1usize << l) + a / 2 < self.k {
                        let v = (1u64 << l) as f64;
                        s += if a % 2 == b % 2 { v } else { -v };
                    }
                }
                s
            }
        }
    }
}
