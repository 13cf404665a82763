//! Second-order U-statistics `U_n = Σ_{r≠s} K(X_r,X_s) Y_r Y_s / (n(n−1))`,
//! their Hoeffding decomposition, exact variance and restricted versions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::kernels::grid::GridKernel;
use crate::kernels::{KernelForm, KernelSpec, OperatorImage, OrthoBasis};
use crate::measure::{half_open_index, MeasureModel};
use crate::partitions::Partition;
use crate::sum::{pairwise_sum, pairwise_sum_by};

/// Paired observations `(x_r, y_r)`; points are stored flat, `dim` per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    dim: usize,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Sample {
    /// One-dimensional sample.
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        Self::with_dim(1, x, y)
    }

    pub fn with_dim(dim: usize, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if dim == 0 || x.len() != dim * y.len() {
            return Err(Error::Data(format!(
                "{} coordinates do not form {} points of dimension {dim}",
                x.len(),
                y.len()
            )));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite value in sample".into()));
        }
        Ok(Sample { dim, x, y })
    }

    /// Sample with `y ≡ 1`.
    pub fn ones(dim: usize, x: Vec<f64>) -> Result<Self> {
        let n = x.len() / dim.max(1);
        Self::with_dim(dim, x, vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }
    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn point(&self, r: usize) -> &[f64] {
        &self.x[r * self.dim..(r + 1) * self.dim]
    }
    pub fn x(&self) -> &[f64] {
        &self.x
    }
    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Same points, new responses.
    pub fn with_y(&self, y: Vec<f64>) -> Result<Self> {
        Self::with_dim(self.dim, self.x.clone(), y)
    }

    /// Sub-sample with the given row indices.
    pub fn select(&self, rows: &[usize]) -> Sample {
        let mut x = Vec::with_capacity(rows.len() * self.dim);
        let mut y = Vec::with_capacity(rows.len());
        for &r in rows {
            x.extend_from_slice(self.point(r));
            y.push(self.y[r]);
        }
        Sample { dim: self.dim, x, y }
    }

    pub(crate) fn check_domain(&self, kernel: &KernelSpec) -> Result<()> {
        let d = kernel.domain();
        if d.dim != self.dim {
            return Err(Error::Data(format!(
                "sample dimension {} differs from kernel dimension {}",
                self.dim, d.dim
            )));
        }
        for r in 0..self.len() {
            d.check(self.point(r))?;
        }
        Ok(())
    }
}

fn need_pairs(n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::InsufficientData(n));
    }
    Ok(n as f64 * (n as f64 - 1.0))
}

/// `y_r h(x_r)` with `h = 1/√g` for weighted kernels.
fn scaled(kernel: &KernelSpec, sample: &Sample, v: &[f64]) -> Vec<f64> {
    if kernel.weight_density.is_none() {
        return v.to_vec();
    }
    (0..sample.len())
        .map(|r| v[r] * kernel.weight_scale(sample.point(r)))
        .collect()
}

/// Which evaluation strategy `pair_sum` uses for a kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairPath {
    Cells,
    Fourier,
    HaarLevels,
    TrigSums,
    Constant,
    Generic,
}

pub fn pair_path(kernel: &KernelSpec) -> PairPath {
    if kernel.twiced() {
        return PairPath::Generic;
    }
    if kernel.cell_structure().is_some() {
        return PairPath::Cells;
    }
    match &kernel.form {
        KernelForm::Fourier(_) => PairPath::Fourier,
        KernelForm::Basis(b) => match b.basis {
            OrthoBasis::HaarWavelets => PairPath::HaarLevels,
            OrthoBasis::Trig => PairPath::TrigSums,
        },
        KernelForm::Constant { .. } => PairPath::Constant,
        _ => PairPath::Generic,
    }
}

/// `Σ_{r≠s} K(x_r,x_s) y_r y_s`, using a fast path when one exists.
pub fn pair_sum(kernel: &KernelSpec, sample: &Sample) -> Result<f64> {
    sample.check_domain(kernel)?;
    Ok(pair_sum_unchecked(kernel, sample))
}

pub(crate) fn pair_sum_unchecked(kernel: &KernelSpec, sample: &Sample) -> f64 {
    let path = pair_path(kernel);
    if path == PairPath::Generic {
        return generic_pair_sum(kernel, sample);
    }
    let yt = scaled(kernel, sample, sample.y());
    let x = sample.x();
    match path {
        PairPath::Cells => {
            let cs = kernel.cell_structure().expect("cell kernel");
            let m = cs.cells();
            let mut s = vec![0.0; m];
            let mut q = vec![0.0; m];
            for (r, &y) in yt.iter().enumerate() {
                let c = cs.cell(x[r]);
                s[c] += y;
                q[c] += y * y;
            }
            pairwise_sum_by(m, |c| {
                if q[c] == 0.0 && s[c] == 0.0 {
                    0.0
                } else {
                    cs.coeff(c) * (s[c] * s[c] - q[c])
                }
            })
        }
        PairPath::Fourier => {
            let KernelForm::Fourier(f) = &kernel.form else {
                unreachable!()
            };
            let thetas: Vec<f64> = x.iter().map(|&v| f.angle(v)).collect();
            let (re, im) = fourier_sums(f.k, &thetas, &yt);
            let sq = pairwise_sum_by(f.k + 1, |m| {
                let t = re[m] * re[m] + im[m] * im[m];
                if m == 0 {
                    t
                } else {
                    2.0 * t
                }
            });
            let diag = pairwise_sum_by(yt.len(), |r| yt[r] * yt[r]);
            (sq - f.dimension() as f64 * diag) / f.period()
        }
        PairPath::HaarLevels => {
            let KernelForm::Basis(b) = &kernel.form else {
                unreachable!()
            };
            haar_levels_pair_sum(b.k, x, &yt)
        }
        PairPath::TrigSums => {
            let KernelForm::Basis(b) = &kernel.form else {
                unreachable!()
            };
            trig_pair_sum(b.k, x, &yt)
        }
        PairPath::Constant => {
            let KernelForm::Constant { value, .. } = &kernel.form else {
                unreachable!()
            };
            let s = pairwise_sum(&yt);
            let q = pairwise_sum_by(yt.len(), |r| yt[r] * yt[r]);
            value * (s * s - q)
        }
        PairPath::Generic => unreachable!(),
    }
}

/// `Σ_r a_r e^{imθ_r}` for `m = 0..=k`, returned as (real, imaginary) parts.
/// Rotations are re-anchored every 64 steps.
fn fourier_sums(k: usize, thetas: &[f64], a: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut re = vec![0.0; k + 1];
    let mut im = vec![0.0; k + 1];
    for (r, &th) in thetas.iter().enumerate() {
        let w = a[r];
        if w == 0.0 {
            continue;
        }
        let (s1, c1) = th.sin_cos();
        let (mut c, mut s) = (1.0, 0.0);
        re[0] += w;
        for m in 1..=k {
            if m % 64 == 0 {
                let t = (m as f64 * th).sin_cos();
                s = t.0;
                c = t.1;
            } else {
                let nc = c * c1 - s * s1;
                s = s * c1 + c * s1;
                c = nc;
            }
            re[m] += w * c;
            im[m] += w * s;
        }
    }
    (re, im)
}

fn haar_levels_pair_sum(k: usize, x: &[f64], y: &[f64]) -> f64 {
    let s0 = pairwise_sum(y);
    let q0 = pairwise_sum_by(y.len(), |r| y[r] * y[r]);
    let mut terms = vec![s0 * s0 - q0];
    if k > 1 {
        let top = usize::BITS - 1 - (k - 1).leading_zeros();
        // Half-cells of the finest level used.
        let fine = 1usize << (top + 1);
        let mut a = vec![0.0; fine];
        let mut b = vec![0.0; fine];
        for (r, &xv) in x.iter().enumerate() {
            let h = half_open_index(xv, 0.0, 1.0, fine);
            a[h] += y[r];
            b[h] += y[r] * y[r];
        }
        for l in (0..=top).rev() {
            let count = (1usize << l).min(k - (1usize << l));
            let amp = (1u64 << l) as f64;
            let lev = pairwise_sum_by(count, |j| {
                let d = a[2 * j] - a[2 * j + 1];
                amp * (d * d - (b[2 * j] + b[2 * j + 1]))
            });
            terms.push(lev);
            if l > 0 {
                let half = 1usize << (l + 1);
                for j in 0..half / 2 {
                    a[j] = a[2 * j] + a[2 * j + 1];
                    b[j] = b[2 * j] + b[2 * j + 1];
                }
            }
        }
    }
    pairwise_sum(&terms)
}

fn trig_pair_sum(k: usize, x: &[f64], y: &[f64]) -> f64 {
    let mmax = k / 2;
    let mut sc = vec![0.0; mmax + 1];
    let mut ss = vec![0.0; mmax + 1];
    let mut qc = vec![0.0; mmax + 1];
    let mut qs = vec![0.0; mmax + 1];
    for (r, &xv) in x.iter().enumerate() {
        let th = 2.0 * PI * xv;
        let (s1, c1) = th.sin_cos();
        let (mut c, mut s) = (1.0, 0.0);
        let w = y[r];
        for m in 1..=mmax {
            if m % 64 == 0 {
                let t = (m as f64 * th).sin_cos();
                s = t.0;
                c = t.1;
            } else {
                let nc = c * c1 - s * s1;
                s = s * c1 + c * s1;
                c = nc;
            }
            sc[m] += w * c;
            ss[m] += w * s;
            qc[m] += w * w * c * c;
            qs[m] += w * w * s * s;
        }
    }
    let s0 = pairwise_sum(y);
    let q0 = pairwise_sum_by(y.len(), |r| y[r] * y[r]);
    let mut terms = vec![s0 * s0 - q0];
    for m in 1..=mmax {
        if 2 * m - 1 < k {
            terms.push(2.0 * (sc[m] * sc[m] - qc[m]));
        }
        if 2 * m < k {
            terms.push(2.0 * (ss[m] * ss[m] - qs[m]));
        }
    }
    pairwise_sum(&terms)
}

fn generic_pair_sum(kernel: &KernelSpec, sample: &Sample) -> f64 {
    let n = sample.len();
    let y = sample.y();
    let rows: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|r| {
            let xr = sample.point(r);
            let mut s = 0.0;
            for t in r + 1..n {
                s += kernel.value(xr, sample.point(t)) * y[t];
            }
            y[r] * s
        })
        .collect();
    2.0 * pairwise_sum(&rows)
}

/// The O(n²) double loop, used as the oracle for every fast path.
pub fn pair_sum_brute(kernel: &KernelSpec, sample: &Sample) -> Result<f64> {
    sample.check_domain(kernel)?;
    Ok(generic_pair_sum(kernel, sample))
}

/// `Σ_{r,s} |K(x_r,x_s) y_r y_s|` over all ordered pairs, diagonal
/// included. The fast paths subtract the diagonal from a full sum, so this is
/// the scale their rounding error is measured against.
pub fn pair_sum_abs(kernel: &KernelSpec, sample: &Sample) -> Result<f64> {
    sample.check_domain(kernel)?;
    let n = sample.len();
    let y = sample.y();
    let rows: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|r| {
            let xr = sample.point(r);
            let off = (r + 1..n)
                .map(|t| (kernel.value(xr, sample.point(t)) * y[t] * y[r]).abs())
                .sum::<f64>();
            2.0 * off + (kernel.value(xr, xr) * y[r] * y[r]).abs()
        })
        .collect();
    Ok(pairwise_sum(&rows))
}

/// `U_n`.
pub fn u_stat(kernel: &KernelSpec, sample: &Sample) -> Result<f64> {
    let d = need_pairs(sample.len())?;
    Ok(pair_sum(kernel, sample)? / d)
}

/// `U_n` by the generic double loop.
pub fn u_stat_brute(kernel: &KernelSpec, sample: &Sample) -> Result<f64> {
    let d = need_pairs(sample.len())?;
    Ok(pair_sum_brute(kernel, sample)? / d)
}

/// `Σ_{r≠s} u_r K(x_r,x_s) v_s` (asymmetric weights).
pub fn cross_pair_sum(kernel: &KernelSpec, sample: &Sample, u: &[f64], v: &[f64]) -> Result<f64> {
    sample.check_domain(kernel)?;
    let n = sample.len();
    if u.len() != n || v.len() != n {
        return Err(Error::Data("weight vectors must match the sample".into()));
    }
    let path = pair_path(kernel);
    let x = sample.x();
    match path {
        PairPath::Cells => {
            let ut = scaled(kernel, sample, u);
            let vt = scaled(kernel, sample, v);
            let cs = kernel.cell_structure().expect("cell kernel");
            let m = cs.cells();
            let mut su = vec![0.0; m];
            let mut sv = vec![0.0; m];
            let mut q = vec![0.0; m];
            for r in 0..n {
                let c = cs.cell(x[r]);
                su[c] += ut[r];
                sv[c] += vt[r];
                q[c] += ut[r] * vt[r];
            }
            Ok(pairwise_sum_by(m, |c| {
                if su[c] == 0.0 && sv[c] == 0.0 && q[c] == 0.0 {
                    0.0
                } else {
                    cs.coeff(c) * (su[c] * sv[c] - q[c])
                }
            }))
        }
        PairPath::Fourier => {
            let KernelForm::Fourier(f) = &kernel.form else {
                unreachable!()
            };
            let ut = scaled(kernel, sample, u);
            let vt = scaled(kernel, sample, v);
            let thetas: Vec<f64> = x.iter().map(|&t| f.angle(t)).collect();
            let (ur, ui) = fourier_sums(f.k, &thetas, &ut);
            let (vr, vi) = fourier_sums(f.k, &thetas, &vt);
            let sq = pairwise_sum_by(f.k + 1, |m| {
                let t = ur[m] * vr[m] + ui[m] * vi[m];
                if m == 0 {
                    t
                } else {
                    2.0 * t
                }
            });
            let diag = pairwise_sum_by(n, |r| ut[r] * vt[r]);
            Ok((sq - f.dimension() as f64 * diag) / f.period())
        }
        _ => Ok(cross_pair_sum_brute_unchecked(kernel, sample, u, v)),
    }
}

fn cross_pair_sum_brute_unchecked(kernel: &KernelSpec, sample: &Sample, u: &[f64], v: &[f64]) -> f64 {
    let n = sample.len();
    let rows: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|r| {
            let xr = sample.point(r);
            let mut s = 0.0;
            for t in 0..n {
                if t != r {
                    s += kernel.value(xr, sample.point(t)) * v[t];
                }
            }
            u[r] * s
        })
        .collect();
    pairwise_sum(&rows)
}

/// Double-loop oracle for `cross_pair_sum`.
pub fn cross_pair_sum_brute(kernel: &KernelSpec, sample: &Sample, u: &[f64], v: &[f64]) -> Result<f64> {
    sample.check_domain(kernel)?;
    if u.len() != sample.len() || v.len() != sample.len() {
        return Err(Error::Data("weight vectors must match the sample".into()));
    }
    Ok(cross_pair_sum_brute_unchecked(kernel, sample, u, v))
}

/// `E U_n + U_n⁽¹⁾ + U_n⁽²⁾`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoeffdingParts {
    pub mean: f64,
    pub linear: f64,
    pub quadratic: f64,
    pub total: f64,
}

/// Precomputed `K μ` and `E U_n = ⟨Kμ, μ⟩_G` for repeated decompositions.
pub struct Hoeffding<'a> {
    kernel: &'a KernelSpec,
    image: OperatorImage<'a>,
    mean: f64,
}

impl<'a> Hoeffding<'a> {
    pub fn new(kernel: &'a KernelSpec, g: &'a MeasureModel) -> Result<Self> {
        let image = OperatorImage::new(kernel, g.mu(), g)?;
        let kmu = image.on_grid();
        let mean = pairwise_sum_by(g.len(), |i| g.weights()[i] * g.mu()[i] * kmu[i]);
        Ok(Hoeffding {
            kernel,
            image,
            mean,
        })
    }

    /// `E U_n = ⟨K μ, μ⟩_G`.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// `(K μ)(x)`.
    pub fn kmu(&self, x: &[f64]) -> f64 {
        self.image.eval(x)
    }

    pub fn decompose(&self, sample: &Sample) -> Result<HoeffdingParts> {
        let total = u_stat(self.kernel, sample)?;
        Ok(self.decompose_with_total(sample, total))
    }

    /// Decomposition given an already computed `U_n`.
    pub fn decompose_with_total(&self, sample: &Sample, total: f64) -> HoeffdingParts {
        let n = sample.len();
        let y = sample.y();
        let lin = pairwise_sum_by(n, |r| self.image.eval(sample.point(r)) * y[r] - self.mean);
        let linear = 2.0 / n as f64 * lin;
        HoeffdingParts {
            mean: self.mean,
            linear,
            quadratic: total - self.mean - linear,
            total,
        }
    }
}

/// Hoeffding decomposition of `U_n` for one sample.
pub fn hoeffding(kernel: &KernelSpec, sample: &Sample, g: &MeasureModel) -> Result<HoeffdingParts> {
    Hoeffding::new(kernel, g)?.decompose(sample)
}

/// `k_n = ∫∫ K² (μ₂×μ₂) d(G×G)`.
pub fn k_n_weighted(kernel: &KernelSpec, g: &MeasureModel) -> Result<f64> {
    let grid = GridKernel::new(kernel, g)?;
    Ok(masked_k_n(&grid, g, None))
}

pub(crate) fn masked_k_n(grid: &GridKernel<'_>, g: &MeasureModel, cells: Option<&[usize]>) -> f64 {
    let w = g.weights();
    let m2 = g.mu2();
    let rows = grid.map_rows(|i, row, range| {
        let mut s = 0.0;
        for j in range {
            if cells.is_none_or(|c| c[i] == c[j]) {
                s += w[j] * m2[j] * row[j] * row[j];
            }
        }
        w[i] * m2[i] * s
    });
    pairwise_sum(&rows)
}

/// The three terms of the exact finite-`n` variance of `U_n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub var_total: f64,
    /// `4(n−2)/(n(n−1)) ‖(Kμ)√μ₂‖²_G`
    pub term_linear: f64,
    /// `−(4(n−2)+2)/(n(n−1)) ⟨Kμ,μ⟩²_G`
    pub term_cross: f64,
    /// `2 k_n/(n(n−1))`
    pub term_quadratic: f64,
    pub k_n: f64,
}

impl VarianceReport {
    fn from_parts(n: usize, norm2: f64, mean: f64, k_n: f64) -> Self {
        let nf = n as f64;
        let d = nf * (nf - 1.0);
        let term_linear = 4.0 * (nf - 2.0) / d * norm2;
        let term_cross = -(4.0 * (nf - 2.0) + 2.0) / d * mean * mean;
        let term_quadratic = 2.0 * k_n / d;
        let var_total = (term_linear + term_cross + term_quadratic).max(0.0);
        VarianceReport {
            var_total,
            term_linear,
            term_cross,
            term_quadratic,
            k_n,
        }
    }
}

/// Exact variance of `U_n` by quadrature.
pub fn variance_exact(kernel: &KernelSpec, g: &MeasureModel, n: usize) -> Result<VarianceReport> {
    need_pairs(n)?;
    let kmu = OperatorImage::new(kernel, g.mu(), g)?.on_grid();
    let w = g.weights();
    let norm2 = pairwise_sum_by(g.len(), |i| w[i] * kmu[i] * kmu[i] * g.mu2()[i]);
    let mean = pairwise_sum_by(g.len(), |i| w[i] * kmu[i] * g.mu()[i]);
    let k_n = k_n_weighted(kernel, g)?;
    Ok(VarianceReport::from_parts(n, norm2, mean, k_n))
}

/// Exact variance of `V_n`, the U-statistic with kernel `K·1{same cell}`.
/// `cells[i]` is the partition cell of grid node `i`.
pub(crate) fn variance_exact_masked(
    grid: &GridKernel<'_>,
    g: &MeasureModel,
    n: usize,
    cells: &[usize],
) -> Result<VarianceReport> {
    need_pairs(n)?;
    let w = g.weights();
    let mu = g.mu();
    let kmu = grid.map_rows(|i, row, range| {
        let mut s = 0.0;
        for j in range {
            if cells[i] == cells[j] {
                s += row[j] * w[j] * mu[j];
            }
        }
        s
    });
    let norm2 = pairwise_sum_by(g.len(), |i| w[i] * kmu[i] * kmu[i] * g.mu2()[i]);
    let mean = pairwise_sum_by(g.len(), |i| w[i] * kmu[i] * mu[i]);
    let k_n = masked_k_n(grid, g, Some(cells));
    Ok(VarianceReport::from_parts(n, norm2, mean, k_n))
}

/// `V_n` and its per-cell pieces `V_{n,m}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VStat {
    pub total: f64,
    pub per_cell: Vec<f64>,
}

/// Pair sum restricted to pairs in the same partition cell, divided by `n(n−1)`.
pub fn v_stat(kernel: &KernelSpec, sample: &Sample, partition: &Partition) -> Result<VStat> {
    let d = need_pairs(sample.len())?;
    sample.check_domain(kernel)?;
    let assign = crate::partitions::assign(partition, sample)?;
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); partition.cells()];
    for (r, &m) in assign.indices.iter().enumerate() {
        rows[m].push(r);
    }
    let per_cell: Vec<f64> = rows
        .iter()
        .map(|idx| {
            if idx.len() < 2 {
                0.0
            } else {
                pair_sum_unchecked(kernel, &sample.select(idx)) / d
            }
        })
        .collect();
    Ok(VStat {
        total: pairwise_sum(&per_cell),
        per_cell,
    })
}

#[cfg(test)]
mod tests;
