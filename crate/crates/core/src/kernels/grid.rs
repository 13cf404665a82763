//! Kernels restricted to a measure's quadrature grid, and kernel images
//! `K f` evaluable at arbitrary points.

use rayon::prelude::*;
use std::f64::consts::PI;
use std::ops::Range;

use super::wavelet::Features;
use super::{KernelForm, KernelSpec};
use crate::error::{invalid, Error, Result};
use crate::measure::MeasureModel;
use crate::sum::pairwise_sum_by;

/// Largest grid for which twiced kernels are materialized densely.
const MAX_DENSE: usize = 2048;

enum Repr {
    /// `raw(x_i, x_j) = rev[j + n - 1 - i]`.
    Toeplitz { rev: Vec<f64> },
    /// Cell-diagonal: nonzero only within contiguous node ranges.
    Cells {
        cell: Vec<usize>,
        coeff: Vec<f64>,
        ranges: Vec<Range<usize>>,
    },
    /// Wavelet features per axis coordinate.
    Wavelet { feats: Vec<Features> },
    /// One-dimensional wavelets: features per node and, per scaling
    /// function, the nodes where it is nonzero.
    Wavelet1 {
        feats: Vec<Features>,
        cols: Vec<Vec<(usize, f64)>>,
    },
    /// Local B-spline values per node.
    Spline { first: Vec<usize>, vals: Vec<f64> },
    /// Precomputed full matrix (twiced kernels on small grids).
    Dense { m: Vec<f64> },
    Direct,
}

pub(crate) struct GridKernel<'a> {
    spec: &'a KernelSpec,
    g: &'a MeasureModel,
    scale: Option<Vec<f64>>,
    repr: Repr,
}

impl<'a> GridKernel<'a> {
    pub fn new(spec: &'a KernelSpec, g: &'a MeasureModel) -> Result<Self> {
        if spec.domain() != g.domain() {
            return Err(Error::GridMismatch(format!(
                "kernel domain {:?} differs from measure domain {:?}",
                spec.domain(),
                g.domain()
            )));
        }
        let n = g.len();
        let scale = spec
            .weight_density
            .as_ref()
            .map(|_| (0..n).map(|i| spec.weight_scale(g.node(i))).collect::<Vec<_>>());
        let repr = if spec.twiced() {
            if n > MAX_DENSE {
                return Err(invalid(format!(
                    "twiced kernels support grids of at most {MAX_DENSE} nodes in grid contractions"
                )));
            }
            Repr::Dense {
                m: dense_twiced(spec, g)?,
            }
        } else if let Some(cs) = spec.cell_structure() {
            let cell: Vec<usize> = (0..n).map(|i| cs.cell(g.node(i)[0])).collect();
            let coeff = (0..cs.cells()).map(|j| cs.coeff(j)).collect();
            let mut ranges = vec![0..0; cs.cells()];
            let mut i = 0;
            while i < n {
                let c = cell[i];
                let start = i;
                while i < n && cell[i] == c {
                    i += 1;
                }
                ranges[c] = start..i;
            }
            Repr::Cells {
                cell,
                coeff,
                ranges,
            }
        } else {
            match &spec.form {
                KernelForm::Fourier(f) => Repr::Toeplitz {
                    rev: toeplitz(n, g.spacing(), |d| f.value_at_offset(d)),
                },
                KernelForm::Convolution(c) => Repr::Toeplitz {
                    rev: toeplitz(n, g.spacing(), |d| c.value_at_offset(d)),
                },
                KernelForm::TensorWavelet(w) => {
                    let m = g.per_axis();
                    let feats: Vec<Features> = (0..m)
                        .map(|i| w.features(g.domain().lo + (i as f64 + 0.5) * g.spacing()))
                        .collect();
                    if w.dim == 1 {
                        let mut cols = vec![Vec::new(); w.k()];
                        for (i, f) in feats.iter().enumerate() {
                            for (j, v) in f.iter() {
                                cols[j].push((i, v));
                            }
                        }
                        Repr::Wavelet1 { feats, cols }
                    } else {
                        Repr::Wavelet { feats }
                    }
                }
                KernelForm::SplineGram(s) => {
                    let r = s.space.order;
                    let mut first = Vec::with_capacity(n);
                    let mut vals = vec![0.0; n * r];
                    for i in 0..n {
                        first.push(
                            s.basis()
                                .eval_nonzero(g.node(i)[0], &mut vals[i * r..(i + 1) * r]),
                        );
                    }
                    Repr::Spline { first, vals }
                }
                _ => Repr::Direct,
            }
        };
        Ok(GridKernel {
            spec,
            g,
            scale,
            repr,
        })
    }

    pub fn n(&self) -> usize {
        self.g.len()
    }

    /// Fills `out[range]` with row `i`; entries outside `range` are zero.
    pub fn row(&self, i: usize, out: &mut [f64]) -> Range<usize> {
        let n = self.n();
        let range = match &self.repr {
            Repr::Toeplitz { rev } => {
                out[..n].copy_from_slice(&rev[n - 1 - i..2 * n - 1 - i]);
                0..n
            }
            Repr::Cells {
                cell,
                coeff,
                ranges,
            } => {
                let c = cell[i];
                let r = ranges[c].clone();
                for o in &mut out[r.clone()] {
                    *o = coeff[c];
                }
                r
            }
            Repr::Wavelet { feats } => {
                let d = self.g.dim();
                let KernelForm::TensorWavelet(wk) = &self.spec.form else {
                    unreachable!()
                };
                let sc = wk.scale();
                for (j, o) in out[..n].iter_mut().enumerate() {
                    let mut v = 1.0;
                    for a in 0..d {
                        let fa = &feats[self.g.axis_index(i, a)];
                        let fb = &feats[self.g.axis_index(j, a)];
                        v *= sc * fa.dot(fb);
                        if v == 0.0 {
                            break;
                        }
                    }
                    *o = v;
                }
                0..n
            }
            Repr::Wavelet1 { feats, cols } => {
                let KernelForm::TensorWavelet(wk) = &self.spec.form else {
                    unreachable!()
                };
                let sc = wk.scale();
                let (mut lo, mut hi) = (n, 0);
                for (t, _) in feats[i].iter() {
                    if let (Some(a), Some(b)) = (cols[t].first(), cols[t].last()) {
                        // Nodes are listed in order unless the support wraps.
                        let wraps = cols[t].windows(2).any(|w| w[1].0 != w[0].0 + 1);
                        let (a, b) = if wraps { (0, n - 1) } else { (a.0, b.0) };
                        lo = lo.min(a);
                        hi = hi.max(b);
                    }
                }
                if lo > hi {
                    return 0..0;
                }
                for o in &mut out[lo..=hi] {
                    *o = 0.0;
                }
                for (t, a) in feats[i].iter() {
                    for &(j, b) in &cols[t] {
                        out[j] += sc * a * b;
                    }
                }
                lo..hi + 1
            }
            Repr::Spline { first, vals } => {
                let KernelForm::SplineGram(s) = &self.spec.form else {
                    unreachable!()
                };
                let r = s.space.order;
                let vi = &vals[i * r..(i + 1) * r];
                for (j, o) in out[..n].iter_mut().enumerate() {
                    *o = s.contract(first[i], vi, first[j], &vals[j * r..(j + 1) * r]);
                }
                0..n
            }
            Repr::Dense { m } => {
                out[..n].copy_from_slice(&m[i * n..(i + 1) * n]);
                return 0..n;
            }
            Repr::Direct => {
                let xi = self.g.node(i);
                for (j, o) in out[..n].iter_mut().enumerate() {
                    *o = self.spec.form_value(xi, self.g.node(j));
                }
                0..n
            }
        };
        if let Some(s) = &self.scale {
            let si = s[i];
            for j in range.clone() {
                out[j] *= si * s[j];
            }
        }
        range
    }

    /// Applies `f` to every row (in parallel), collecting results in row order.
    pub fn map_rows<T, F>(&self, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize, &[f64], Range<usize>) -> T + Sync,
    {
        let n = self.n();
        (0..n)
            .into_par_iter()
            .map_init(
                || vec![0.0; n],
                |buf, i| {
                    let r = self.row(i, buf);
                    f(i, buf, r)
                },
            )
            .collect()
    }

    /// `y_i = Σ_j K_ij x_j`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        self.map_rows(|_, row, range| {
            let mut s = 0.0;
            for j in range {
                s += row[j] * x[j];
            }
            s
        })
    }
}

fn toeplitz(n: usize, h: f64, raw: impl Fn(f64) -> f64 + Sync) -> Vec<f64> {
    // rev[t] holds offset x_i - x_j = (n - 1 - t) h.
    (0..2 * n - 1)
        .into_par_iter()
        .map(|t| raw((n as f64 - 1.0 - t as f64) * h))
        .collect()
}

fn dense_twiced(spec: &KernelSpec, g: &MeasureModel) -> Result<Vec<f64>> {
    let t = spec.twicing.as_ref().expect("twiced");
    let n = g.len();
    let mut base_spec = spec.clone();
    base_spec.twicing = None;
    let base = GridKernel::new(&base_spec, g)?;
    if same_grid(t, g) {
        let kb: Vec<Vec<f64>> = base.map_rows(|_, row, range| {
            let mut v = vec![0.0; n];
            v[range.clone()].copy_from_slice(&row[range]);
            v
        });
        let w = g.weights();
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let wi: Vec<f64> = (0..n).map(|z| kb[i][z] * w[z]).collect();
                (0..n)
                    .map(|j| {
                        let inner = pairwise_sum_by(n, |z| wi[z] * kb[j][z]);
                        kb[i][j] + kb[j][i] - inner
                    })
                    .collect()
            })
            .collect();
        Ok(rows.concat())
    } else {
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| (0..n).map(|j| spec.value(g.node(i), g.node(j))).collect())
            .collect();
        Ok(rows.concat())
    }
}

fn same_grid(t: &super::TwicingGrid, g: &MeasureModel) -> bool {
    t.dim == g.dim() && t.nodes == g.nodes() && t.weights == g.weights()
}

enum ImageRepr {
    Cells {
        sums: Vec<f64>,
    },
    Fourier {
        k: usize,
        lo: f64,
        period: f64,
        re: Vec<f64>,
        im: Vec<f64>,
    },
    Wavelet {
        coeffs: Vec<f64>,
    },
    Spline {
        coeffs: Vec<f64>,
    },
    /// `2 K f − K(K f)` for a kernel twiced on the same grid.
    Twiced {
        once: Box<OperatorImage<'static>>,
        twice: Box<OperatorImage<'static>>,
    },
    Direct {
        wf: Vec<f64>,
    },
}

/// `(K f)(x) = ∫ K(x, z) f(z) dG(z)` for a fixed grid function `f`,
/// evaluable at any `x` in the domain.
pub struct OperatorImage<'a> {
    spec: std::borrow::Cow<'a, KernelSpec>,
    g: std::borrow::Cow<'a, MeasureModel>,
    repr: ImageRepr,
}

impl<'a> OperatorImage<'a> {
    pub fn new(spec: &'a KernelSpec, f: &[f64], g: &'a MeasureModel) -> Result<Self> {
        if spec.domain() != g.domain() {
            return Err(Error::GridMismatch(
                "kernel and measure live on different domains".into(),
            ));
        }
        if f.len() != g.len() {
            return Err(Error::GridMismatch("grid function length differs from grid".into()));
        }
        let n = g.len();
        let w = g.weights();
        if let Some(t) = &spec.twicing {
            if same_grid(t, g) {
                let mut base = spec.clone();
                base.twicing = None;
                let once = OperatorImage::new(&base, f, g)?;
                let kf = once.on_grid();
                let once = once.into_owned();
                let twice = OperatorImage::new(&base, &kf, g)?.into_owned();
                return Ok(OperatorImage {
                    spec: std::borrow::Cow::Borrowed(spec),
                    g: std::borrow::Cow::Borrowed(g),
                    repr: ImageRepr::Twiced {
                        once: Box::new(once),
                        twice: Box::new(twice),
                    },
                });
            }
        }
        // g_j = s_j w_j f_j
        let gf: Vec<f64> = (0..n)
            .map(|j| spec.weight_scale(g.node(j)) * w[j] * f[j])
            .collect();
        let repr = if spec.twiced() {
            ImageRepr::Direct {
                wf: (0..n).map(|j| w[j] * f[j]).collect(),
            }
        } else if let Some(cs) = spec.cell_structure() {
            let mut sums = vec![0.0; cs.cells()];
            for j in 0..n {
                sums[cs.cell(g.node(j)[0])] += gf[j];
            }
            for (c, s) in sums.iter_mut().enumerate() {
                *s *= cs.coeff(c);
            }
            ImageRepr::Cells { sums }
        } else {
            match &spec.form {
                KernelForm::Fourier(fk) => {
                    let k = fk.k;
                    let mut re = vec![0.0; k + 1];
                    let mut im = vec![0.0; k + 1];
                    let thetas: Vec<f64> = (0..n).map(|j| fk.angle(g.node(j)[0])).collect();
                    let coeffs: Vec<(f64, f64)> = (0..=k)
                        .into_par_iter()
                        .map(|m| {
                            let c = pairwise_sum_by(n, |j| gf[j] * (m as f64 * thetas[j]).cos());
                            let s = pairwise_sum_by(n, |j| gf[j] * (m as f64 * thetas[j]).sin());
                            (c, s)
                        })
                        .collect();
                    for (m, (c, s)) in coeffs.into_iter().enumerate() {
                        re[m] = c;
                        im[m] = s;
                    }
                    ImageRepr::Fourier {
                        k,
                        lo: fk.lo,
                        period: fk.period(),
                        re,
                        im,
                    }
                }
                KernelForm::TensorWavelet(wk) if wk.dim == 1 => {
                    let mut coeffs = vec![0.0; 1usize << wk.level];
                    for j in 0..n {
                        wk.for_each_feature(g.node(j)[0], |idx, v| coeffs[idx] += gf[j] * v);
                    }
                    ImageRepr::Wavelet { coeffs }
                }
                KernelForm::SplineGram(s) => {
                    let k = s.k();
                    let r = s.space.order;
                    let mut b = vec![0.0; k];
                    let mut vals = vec![0.0; r];
                    for j in 0..n {
                        let first = s.basis().eval_nonzero(g.node(j)[0], &mut vals);
                        for a in 0..r {
                            b[first + a] += gf[j] * vals[a];
                        }
                    }
                    let coeffs = (0..k)
                        .map(|i| pairwise_sum_by(k, |j| s.a(i, j) * b[j]))
                        .collect();
                    ImageRepr::Spline { coeffs }
                }
                _ => ImageRepr::Direct {
                    wf: (0..n).map(|j| w[j] * f[j]).collect(),
                },
            }
        };
        Ok(OperatorImage {
            spec: std::borrow::Cow::Borrowed(spec),
            g: std::borrow::Cow::Borrowed(g),
            repr,
        })
    }

    fn into_owned(self) -> OperatorImage<'static> {
        OperatorImage {
            spec: std::borrow::Cow::Owned(self.spec.into_owned()),
            g: std::borrow::Cow::Owned(self.g.into_owned()),
            repr: self.repr,
        }
    }

    /// `(K f)(x)`; `x` must lie in the kernel's domain.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let spec = &*self.spec;
        match &self.repr {
            ImageRepr::Cells { sums } => {
                let cs = spec.cell_structure().expect("cell kernel");
                spec.weight_scale(x) * sums[cs.cell(x[0])]
            }
            ImageRepr::Fourier {
                k,
                lo,
                period,
                re,
                im,
            } => {
                let theta = 2.0 * PI * (x[0] - lo) / period;
                let (s1, c1) = theta.sin_cos();
                let (mut c, mut s) = (1.0, 0.0);
                let mut acc = re[0];
                for m in 1..=*k {
                    if m % 64 == 0 {
                        let t = (m as f64 * theta).sin_cos();
                        s = t.0;
                        c = t.1;
                    } else {
                        let nc = c * c1 - s * s1;
                        s = s * c1 + c * s1;
                        c = nc;
                    }
                    // Re(e^{imθ} conj(Σ g e^{imθ_j})) doubled for ±m.
                    acc += 2.0 * (c * re[m] + s * im[m]);
                }
                spec.weight_scale(x) * acc / period
            }
            ImageRepr::Wavelet { coeffs } => {
                let KernelForm::TensorWavelet(wk) = &spec.form else {
                    unreachable!()
                };
                let mut acc = 0.0;
                wk.for_each_feature(x[0], |j, v| acc += v * coeffs[j]);
                spec.weight_scale(x) * wk.scale() * acc
            }
            ImageRepr::Spline { coeffs } => {
                let KernelForm::SplineGram(s) = &spec.form else {
                    unreachable!()
                };
                let r = s.space.order;
                let mut vals = [0.0; 32];
                let first = s.basis().eval_nonzero(x[0], &mut vals[..r]);
                let acc: f64 = (0..r).map(|a| vals[a] * coeffs[first + a]).sum();
                spec.weight_scale(x) * acc
            }
            ImageRepr::Twiced { once, twice } => 2.0 * once.eval(x) - twice.eval(x),
            ImageRepr::Direct { wf } => {
                let g = &*self.g;
                pairwise_sum_by(g.len(), |j| spec.value(x, g.node(j)) * wf[j])
            }
        }
    }

    /// The image on the measure's grid.
    pub fn on_grid(&self) -> Vec<f64> {
        let g = &*self.g;
        (0..g.len())
            .into_par_iter()
            .map(|i| self.eval(g.node(i)))
            .collect()
    }
}
