use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::measure::half_open_index;

/// Default number of cascade iterations for tabulating the father wavelet.
pub const DEFAULT_DEPTH: u32 = 6;

/// Orthonormal compactly supported wavelet families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaveletFamily {
    Haar,
    /// Daubechies with two vanishing moments (support length 3).
    #[default]
    Daubechies4,
    /// Daubechies with three vanishing moments (support length 5).
    Daubechies6,
}

impl WaveletFamily {
    pub fn from_id(id: &str) -> Result<Self> {
        match id {
            "haar" => Ok(Self::Haar),
            "daubechies4" | "db2" => Ok(Self::Daubechies4),
            "daubechies6" | "db3" => Ok(Self::Daubechies6),
            _ => Err(crate::Error::Unknown {
                what: "wavelet family",
                id: id.to_string(),
            }),
        }
    }

    /// Low-pass filter `h` with `Σh = √2`, `Σh² = 1`.
    pub fn filter(self) -> Vec<f64> {
        match self {
            WaveletFamily::Haar => vec![std::f64::consts::FRAC_1_SQRT_2; 2],
            WaveletFamily::Daubechies4 => {
                let s3 = 3f64.sqrt();
                let c = 4.0 * 2f64.sqrt();
                vec![(1.0 + s3) / c, (3.0 + s3) / c, (3.0 - s3) / c, (1.0 - s3) / c]
            }
            WaveletFamily::Daubechies6 => {
                let a = 10f64.sqrt();
                let b = (5.0 + 2.0 * a).sqrt();
                let c = 16.0 * 2f64.sqrt();
                vec![
                    (1.0 + a + b) / c,
                    (5.0 + a + 3.0 * b) / c,
                    (10.0 - 2.0 * a + 2.0 * b) / c,
                    (10.0 - 2.0 * a - 2.0 * b) / c,
                    (5.0 + a - 3.0 * b) / c,
                    (1.0 + a - b) / c,
                ]
            }
        }
    }

    /// Length of the support `(0, S]` of the father wavelet.
    pub fn support(self) -> usize {
        self.filter().len() - 1
    }
}

/// Father wavelet tabulated as a step function on `(m 2^-J, (m+1) 2^-J]`,
/// obtained from `J` cascade iterations started at the unit box. Integer
/// translates of the tabulated function are exactly orthonormal.
pub fn cascade(family: WaveletFamily, depth: u32) -> Vec<f64> {
    let h = family.filter();
    let s = family.support();
    let mut v = vec![1.0];
    for j in 0..depth {
        let step = 1usize << j;
        let len = s * (1usize << (j + 1));
        let mut next = vec![0.0; len.max(1)];
        for (m, out) in next.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (l, &hl) in h.iter().enumerate() {
                if let Some(idx) = m.checked_sub(l * step) {
                    if idx < v.len() {
                        acc += hl * v[idx];
                    }
                }
            }
            *out = std::f64::consts::SQRT_2 * acc;
        }
        v = next;
    }
    v.resize(s << depth, 0.0);
    v
}

/// Periodized single-level wavelet projection kernel on `[0,1]^d`. In one
/// dimension `K(x₁,x₂) = Σ_j φ_{I,j}(x₁) φ_{I,j}(x₂)`; in `d` dimensions the
/// tensor kernel is the product of the one-dimensional kernels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveletKernel {
    pub level: u32,
    pub dim: usize,
    pub family: WaveletFamily,
    pub depth: u32,
    #[serde(skip)]
    table: Vec<f64>,
}

impl WaveletKernel {
    pub fn new(level: u32, dim: usize, family: WaveletFamily, depth: u32) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("wavelet dimension must be positive"));
        }
        if level > 24 || depth > 20 {
            return Err(invalid("wavelet level or cascade depth too large"));
        }
        let depth = if family == WaveletFamily::Haar { 0 } else { depth };
        Ok(WaveletKernel {
            level,
            dim,
            family,
            depth,
            table: cascade(family, depth),
        })
    }

    pub(crate) fn ensure_table(&mut self) {
        if self.table.is_empty() {
            self.table = cascade(self.family, self.depth);
        }
    }

    /// Projection dimension `2^{I d}`.
    pub fn k(&self) -> usize {
        1usize << (self.level as usize * self.dim)
    }

    /// Tabulated father wavelet at `t` (zero outside `(0, S]`).
    pub fn phi(&self, t: f64) -> f64 {
        let s = self.family.support() as f64;
        if !(t > 0.0 && t <= s) {
            return 0.0;
        }
        let scale = (1u64 << self.depth) as f64;
        let m = ((t * scale).ceil() as usize).saturating_sub(1);
        self.table.get(m).copied().unwrap_or(0.0)
    }

    /// `2^I`, the factor between `φ_{I,j}(x)φ_{I,j}(y)` and the products of
    /// unscaled feature values.
    pub fn scale(&self) -> f64 {
        (1u64 << self.level) as f64
    }

    /// Calls `f(j, φ(2^I x − j))` (periodized, without the `2^{I/2}` factor)
    /// for every scaling function that may be nonzero at `x`. Cells follow the
    /// `(a, b]` convention with `x = 0` in the first cell. The same `j` may be
    /// reported more than once at coarse levels; summing products over
    /// matching `j` is still exact.
    pub fn for_each_feature(&self, x: f64, mut f: impl FnMut(usize, f64)) {
        let two_i = 1usize << self.level;
        let fine = half_open_index(x, 0.0, 1.0, two_i << self.depth);
        let base = fine >> self.depth;
        let r = fine & ((1usize << self.depth) - 1);
        for s in 0..self.family.support() {
            let v = self.table[r + (s << self.depth)];
            if v != 0.0 {
                f((base + two_i * s - s) % two_i, v);
            }
        }
    }

    pub fn features(&self, x: f64) -> Features {
        let mut out = Features::default();
        self.for_each_feature(x, |j, v| out.push(j, v));
        out
    }

    pub fn value_1d(&self, x1: f64, x2: f64) -> f64 {
        self.scale() * self.features(x1).dot(&self.features(x2))
    }

    pub fn value(&self, x1: &[f64], x2: &[f64]) -> f64 {
        x1.iter().zip(x2).map(|(&a, &b)| self.value_1d(a, b)).product()
    }
}

/// Small inline list of `(index, value)` pairs.
#[derive(Debug, Clone, Copy, Default)]
pub struct Features {
    len: usize,
    idx: [usize; 8],
    val: [f64; 8],
}

impl Features {
    fn push(&mut self, j: usize, v: f64) {
        self.idx[self.len] = j;
        self.val[self.len] = v;
        self.len += 1;
    }

    pub fn dot(&self, other: &Features) -> f64 {
        let mut s = 0.0;
        for a in 0..self.len {
            for b in 0..other.len {
                if self.idx[a] == other.idx[b] {
                    s += self.val[a] * other.val[b];
                }
            }
        }
        s
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..self.len).map(|i| (self.idx[i], self.val[i]))
    }
}
