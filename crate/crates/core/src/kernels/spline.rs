use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Schoenberg space of order `r` on `[0,1]`: breakpoints `0 < t₁ < … < t_l < 1`,
/// each repeated `multiplicity` times, boundary knots repeated `r` times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplineSpace {
    pub order: usize,
    pub breakpoints: Vec<f64>,
    #[serde(default = "one")]
    pub multiplicity: usize,
}

fn one() -> usize {
    1
}

impl SplineSpace {
    pub fn new(order: usize, breakpoints: Vec<f64>, multiplicity: usize) -> Result<Self> {
        let s = SplineSpace {
            order,
            breakpoints,
            multiplicity,
        };
        s.validate()?;
        Ok(s)
    }

    /// `l` equally spaced interior breakpoints, simple knots.
    pub fn uniform(order: usize, interior: usize) -> Result<Self> {
        let bp = (1..=interior)
            .map(|i| i as f64 / (interior + 1) as f64)
            .collect();
        Self::new(order, bp, 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.order == 0 {
            return Err(invalid("spline order must be at least 1"));
        }
        if self.multiplicity == 0 || self.multiplicity > self.order {
            return Err(invalid("knot multiplicity must lie in 1..=order"));
        }
        let mut prev = 0.0;
        for &t in &self.breakpoints {
            if !(t > prev && t < 1.0) {
                return Err(invalid("breakpoints must be strictly increasing inside (0,1)"));
            }
            prev = t;
        }
        Ok(())
    }

    /// Dimension `k = r + l·d`.
    pub fn dim(&self) -> usize {
        self.order + self.breakpoints.len() * self.multiplicity
    }

    /// Augmented knot sequence of length `k + r`.
    pub fn knots(&self) -> Vec<f64> {
        let mut t = vec![0.0; self.order];
        for &b in &self.breakpoints {
            t.extend(std::iter::repeat_n(b, self.multiplicity));
        }
        t.extend(std::iter::repeat_n(1.0, self.order));
        t
    }

    /// Distinct breakpoints including both ends.
    pub fn mesh(&self) -> Vec<f64> {
        let mut m = vec![0.0];
        m.extend_from_slice(&self.breakpoints);
        m.push(1.0);
        m
    }
}

/// Spline space with its knot vector cached for fast evaluation.
#[derive(Debug, Clone)]
pub struct BsplineBasis {
    order: usize,
    knots: Vec<f64>,
    dim: usize,
}

impl BsplineBasis {
    pub fn new(space: &SplineSpace) -> Self {
        BsplineBasis {
            order: space.order,
            knots: space.knots(),
            dim: space.dim(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Index `μ` of the knot span `(t_μ, t_{μ+1}]` containing `x`; `x = 0`
    /// belongs to the first span.
    pub fn span(&self, x: f64) -> usize {
        let p = self.knots.partition_point(|&t| t < x);
        p.saturating_sub(1).clamp(self.order - 1, self.dim - 1)
    }

    /// Values of the `r` B-splines `N_{μ-r+1}, …, N_μ` that may be nonzero at
    /// `x`, by the Cox–de Boor triangular scheme. Returns the first index.
    pub fn eval_nonzero(&self, x: f64, out: &mut [f64]) -> usize {
        let r = self.order;
        let mu = self.span(x);
        let t = &self.knots;
        let mut left = [0.0f64; 32];
        let mut right = [0.0f64; 32];
        out[0] = 1.0;
        for j in 1..r {
            left[j] = x - t[mu + 1 - j];
            right[j] = t[mu + j] - x;
            let mut saved = 0.0;
            for i in 0..j {
                let den = right[i + 1] + left[j - i];
                let term = if den != 0.0 { out[i] / den } else { 0.0 };
                out[i] = saved + right[i + 1] * term;
                saved = left[j - i] * term;
            }
            out[j] = saved;
        }
        mu + 1 - r
    }

    /// All basis values at `x` (dense, for tests and small problems).
    pub fn eval_all(&self, x: f64) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        let mut buf = vec![0.0; self.order];
        let first = self.eval_nonzero(x, &mut buf);
        v[first..first + self.order].copy_from_slice(&buf);
        v
    }

    pub fn order(&self) -> usize {
        self.order
    }
}

/// Cholesky factor of a symmetric positive definite band matrix with
/// half-bandwidth `b`, stored as `rows[i][b - (i - j)]` for `j ∈ [i-b, i]`.
pub(crate) struct BandCholesky {
    n: usize,
    b: usize,
    l: Vec<f64>,
}

impl BandCholesky {
    /// `a(i, j)` must return the lower band entries (`i - b ≤ j ≤ i`).
    pub fn factor(n: usize, b: usize, a: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let w = b + 1;
        let mut l = vec![0.0; n * w];
        let at = |i: usize, j: usize| i * w + (b + j - i);
        let mut scale: f64 = 0.0;
        for i in 0..n {
            scale = scale.max(a(i, i).abs());
        }
        for i in 0..n {
            let j0 = i.saturating_sub(b);
            for j in j0..=i {
                let mut s = a(i, j);
                let k0 = j0.max(j.saturating_sub(b));
                for k in k0..j {
                    s -= l[at(i, k)] * l[at(j, k)];
                }
                if i == j {
                    if !(s > 1e-13 * scale) {
                        return Err(Error::Conditioning(format!(
                            "Gram matrix not positive definite at row {i} (pivot {s:e})"
                        )));
                    }
                    l[at(i, i)] = s.sqrt();
                } else {
                    l[at(i, j)] = s / l[at(j, j)];
                }
            }
        }
        Ok(BandCholesky { n, b, l })
    }

    pub fn solve(&self, rhs: &mut [f64]) {
        let (n, b, w) = (self.n, self.b, self.b + 1);
        let at = |i: usize, j: usize| i * w + (b + j - i);
        for i in 0..n {
            let mut s = rhs[i];
            for k in i.saturating_sub(b)..i {
                s -= self.l[at(i, k)] * rhs[k];
            }
            rhs[i] = s / self.l[at(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = rhs[i];
            for k in i + 1..(i + b + 1).min(n) {
                s -= self.l[at(k, i)] * rhs[k];
            }
            rhs[i] = s / self.l[at(i, i)];
        }
    }
}

/// `K(x₁,x₂) = Σ_{ij} A_ij N_i(x₁) N_j(x₂)` with `A` the inverse Gram matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplineKernel {
    pub space: SplineSpace,
    /// Row-major `k × k` inverse Gram matrix.
    pub gram_inverse: Vec<f64>,
    #[serde(skip)]
    basis: Option<BsplineBasis>,
}

impl PartialEq for SplineKernel {
    fn eq(&self, other: &Self) -> bool {
        self.space == other.space && self.gram_inverse == other.gram_inverse
    }
}

impl SplineKernel {
    pub fn new(space: SplineSpace, gram_inverse: Vec<f64>) -> Result<Self> {
        space.validate()?;
        let k = space.dim();
        if gram_inverse.len() != k * k {
            return Err(invalid("inverse Gram matrix has the wrong size"));
        }
        let basis = Some(BsplineBasis::new(&space));
        Ok(SplineKernel {
            space,
            gram_inverse,
            basis,
        })
    }

    pub(crate) fn ensure_basis(&mut self) {
        if self.basis.is_none() {
            self.basis = Some(BsplineBasis::new(&self.space));
        }
    }

    pub fn basis(&self) -> &BsplineBasis {
        self.basis.as_ref().expect("spline basis initialized on construction")
    }

    pub fn k(&self) -> usize {
        self.space.dim()
    }

    pub fn a(&self, i: usize, j: usize) -> f64 {
        self.gram_inverse[i * self.k() + j]
    }

    /// `Σ_{ab} A[s₁+a, s₂+b] v₁[a] v₂[b]` for two local evaluations.
    pub fn contract(&self, s1: usize, v1: &[f64], s2: usize, v2: &[f64]) -> f64 {
        let k = self.k();
        let mut acc = 0.0;
        for (a, &va) in v1.iter().enumerate() {
            let row = &self.gram_inverse[(s1 + a) * k + s2..(s1 + a) * k + s2 + v2.len()];
            let mut inner = 0.0;
            for (b, &vb) in v2.iter().enumerate() {
                inner += row[b] * vb;
            }
            acc += va * inner;
        }
        acc
    }

    pub fn value(&self, x1: f64, x2: f64) -> f64 {
        let r = self.space.order;
        let mut v1 = [0.0; 32];
        let mut v2 = [0.0; 32];
        let s1 = self.basis().eval_nonzero(x1, &mut v1[..r]);
        let s2 = self.basis().eval_nonzero(x2, &mut v2[..r]);
        // Symmetrize the contraction order so eval(x1,x2) == eval(x2,x1) bit for bit.
        if (s1, x1) <= (s2, x2) {
            self.contract(s1, &v1[..r], s2, &v2[..r])
        } else {
            self.contract(s2, &v2[..r], s1, &v1[..r])
        }
    }

    /// Order-1 splines have disjoint supports, so the kernel is cell-diagonal.
    pub fn is_piecewise_constant(&self) -> bool {
        self.space.order == 1
    }
}
