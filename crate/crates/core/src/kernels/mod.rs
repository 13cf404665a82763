//! Projection kernels, their `G`-weighted and twiced variants, and their
//! action as integral operators on a quadrature grid.

pub mod basis;
pub mod convolution;
pub mod fourier;
pub(crate) mod grid;
pub mod haar;
pub mod spline;
pub mod wavelet;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::measure::{half_open_index, Domain, MeasureModel, StepFunction};

pub use basis::{BasisKernel, OrthoBasis};
pub use convolution::{ConvolutionKernel, Mother};
pub use fourier::{dirichlet, FourierKernel};
pub use grid::OperatorImage;
pub use haar::HaarKernel;
pub use spline::{BsplineBasis, SplineKernel, SplineSpace};
pub use wavelet::{WaveletFamily, WaveletKernel};

/// Kernel family tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Haar,
    TensorWavelet,
    Fourier,
    Convolution,
    SplineGram,
    Constant,
    Basis,
}

/// The unweighted, untwiced kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelForm {
    Haar(HaarKernel),
    TensorWavelet(WaveletKernel),
    Fourier(FourierKernel),
    Convolution(ConvolutionKernel),
    SplineGram(SplineKernel),
    Constant { value: f64, domain: Domain },
    Basis(BasisKernel),
}

/// Quadrature grid used for the inner integral of a twiced kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwicingGrid {
    pub dim: usize,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// A symmetric kernel: a base form, an optional weight density `g` turning
/// `K` into `K/√(g(x₁)g(x₂))`, and an optional twicing step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelSpecRaw")]
pub struct KernelSpec {
    pub form: KernelForm,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_density: Option<StepFunction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub twicing: Option<TwicingGrid>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelSpecRaw {
    form: KernelForm,
    #[serde(default)]
    weight_density: Option<StepFunction>,
    #[serde(default)]
    twicing: Option<TwicingGrid>,
}

impl TryFrom<KernelSpecRaw> for KernelSpec {
    type Error = Error;
    fn try_from(raw: KernelSpecRaw) -> Result<Self> {
        let mut form = raw.form;
        match &mut form {
            KernelForm::TensorWavelet(w) => w.ensure_table(),
            KernelForm::SplineGram(s) => {
                s.space.validate()?;
                if s.gram_inverse.len() != s.k() * s.k() {
                    return Err(invalid("inverse Gram matrix has the wrong size"));
                }
                s.ensure_basis()
            }
            KernelForm::Haar(h) => {
                if h.diag.len() != h.k() {
                    return Err(invalid("Haar diagonal must have 2^level entries"));
                }
            }
            _ => {}
        }
        let mut spec = KernelSpec::new(form);
        if let Some(w) = raw.weight_density {
            spec = spec.with_weight(w)?;
        }
        if let Some(t) = raw.twicing {
            if t.nodes.len() != t.dim * t.weights.len() || t.dim != spec.dim() {
                return Err(invalid("twicing grid shape does not match the kernel"));
            }
            spec.twicing = Some(t);
        }
        Ok(spec)
    }
}

impl KernelSpec {
    pub fn new(form: KernelForm) -> Self {
        KernelSpec {
            form,
            weight_density: None,
            twicing: None,
        }
    }

    pub fn kind(&self) -> KernelKind {
        match &self.form {
            KernelForm::Haar(_) => KernelKind::Haar,
            KernelForm::TensorWavelet(_) => KernelKind::TensorWavelet,
            KernelForm::Fourier(_) => KernelKind::Fourier,
            KernelForm::Convolution(_) => KernelKind::Convolution,
            KernelForm::SplineGram(_) => KernelKind::SplineGram,
            KernelForm::Constant { .. } => KernelKind::Constant,
            KernelForm::Basis(_) => KernelKind::Basis,
        }
    }

    pub fn domain(&self) -> Domain {
        match &self.form {
            KernelForm::Fourier(f) => Domain {
                lo: f.lo,
                hi: f.hi,
                dim: 1,
            },
            KernelForm::TensorWavelet(w) => Domain::unit_cube(w.dim),
            KernelForm::Constant { domain, .. } => *domain,
            _ => Domain::UNIT,
        }
    }

    pub fn dim(&self) -> usize {
        self.domain().dim
    }

    pub fn twiced(&self) -> bool {
        self.twicing.is_some()
    }

    /// Nominal projection dimension, when the base form is a projection.
    pub fn nominal_dimension(&self) -> Option<usize> {
        match &self.form {
            KernelForm::Haar(h) => Some(h.k()),
            KernelForm::TensorWavelet(w) => Some(w.k()),
            KernelForm::Fourier(f) => Some(f.dimension()),
            KernelForm::SplineGram(s) => Some(s.k()),
            KernelForm::Basis(b) => Some(b.k),
            _ => None,
        }
    }

    /// Use the `K_{k,g}` form with weight density `g`.
    pub fn with_weight(mut self, g: StepFunction) -> Result<Self> {
        let d = self.domain();
        if d.dim != 1 {
            return Err(invalid("weight densities are supported in one dimension only"));
        }
        if (g.lo - d.lo).abs() > 1e-12 || (g.hi - d.hi).abs() > 1e-12 {
            return Err(Error::GridMismatch("weight density domain differs from kernel domain".into()));
        }
        if g.values.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::DegenerateMeasure(
                "weight density must be positive and finite".into(),
            ));
        }
        if self.twiced() {
            return Err(invalid("apply the weight before twicing"));
        }
        self.weight_density = Some(g);
        Ok(self)
    }

    /// `1/√g(x)` for the weighted form, else 1.
    #[inline]
    pub fn weight_scale(&self, x: &[f64]) -> f64 {
        match &self.weight_density {
            Some(g) => 1.0 / g.eval(x[0]).sqrt(),
            None => 1.0,
        }
    }

    /// Unweighted base form at a pair of points.
    #[inline]
    pub fn form_value(&self, x1: &[f64], x2: &[f64]) -> f64 {
        match &self.form {
            KernelForm::Haar(h) => h.value(x1[0], x2[0]),
            KernelForm::TensorWavelet(w) => w.value(x1, x2),
            KernelForm::Fourier(f) => f.value(x1[0], x2[0]),
            KernelForm::Convolution(c) => c.value(x1[0], x2[0]),
            KernelForm::SplineGram(s) => s.value(x1[0], x2[0]),
            KernelForm::Constant { value, .. } => *value,
            KernelForm::Basis(b) => b.value(x1[0], x2[0]),
        }
    }

    /// Weighted, untwiced kernel value.
    #[inline]
    pub fn base_value(&self, x1: &[f64], x2: &[f64]) -> f64 {
        let v = self.form_value(x1, x2);
        if self.weight_density.is_some() {
            v * self.weight_scale(x1) * self.weight_scale(x2)
        } else {
            v
        }
    }

    /// Kernel value without domain checks.
    pub fn value(&self, x1: &[f64], x2: &[f64]) -> f64 {
        match &self.twicing {
            None => self.base_value(x1, x2),
            Some(t) => {
                let d = t.dim;
                let inner = crate::sum::pairwise_sum_by(t.weights.len(), |i| {
                    let z = &t.nodes[i * d..(i + 1) * d];
                    t.weights[i] * (self.base_value(x1, z) * self.base_value(x2, z))
                });
                self.base_value(x1, x2) + self.base_value(x2, x1) - inner
            }
        }
    }

    /// Kernel value at a pair of points in the domain.
    pub fn eval(&self, x1: &[f64], x2: &[f64]) -> Result<f64> {
        let d = self.domain();
        d.check(x1)?;
        d.check(x2)?;
        Ok(self.value(x1, x2))
    }

    /// Cell structure for piecewise-constant forms: returns the number of
    /// cells, the cell of `x` and the coefficient `c_j` with
    /// `K = Σ_j c_j 1_j(x₁) 1_j(x₂)` (before weighting).
    pub(crate) fn cell_structure(&self) -> Option<CellStructure<'_>> {
        if self.twiced() {
            return None;
        }
        match &self.form {
            KernelForm::Haar(h) => Some(CellStructure::Haar(h)),
            KernelForm::TensorWavelet(w) if w.family == WaveletFamily::Haar && w.dim == 1 => {
                Some(CellStructure::Uniform {
                    cells: 1usize << w.level,
                    coeff: (1usize << w.level) as f64,
                })
            }
            KernelForm::SplineGram(s) if s.is_piecewise_constant() => Some(CellStructure::Spline(s)),
            _ => None,
        }
    }
}

#[derive(Clone, Copy)]
pub(crate) enum CellStructure<'a> {
    Haar(&'a HaarKernel),
    Uniform { cells: usize, coeff: f64 },
    Spline(&'a SplineKernel),
}

impl CellStructure<'_> {
    pub fn cells(&self) -> usize {
        match self {
            CellStructure::Haar(h) => h.k(),
            CellStructure::Uniform { cells, .. } => *cells,
            CellStructure::Spline(s) => s.k(),
        }
    }

    #[inline]
    pub fn cell(&self, x: f64) -> usize {
        match self {
            CellStructure::Haar(h) => h.cell(x),
            CellStructure::Uniform { cells, .. } => half_open_index(x, 0.0, 1.0, *cells),
            CellStructure::Spline(s) => s.basis().span(x),
        }
    }

    pub fn coeff(&self, j: usize) -> f64 {
        match self {
            CellStructure::Haar(h) => h.coeff(j),
            CellStructure::Uniform { coeff, .. } => *coeff,
            CellStructure::Spline(s) => s.a(j, j),
        }
    }
}

fn require_unit(g: &MeasureModel, what: &str) -> Result<()> {
    if g.domain() != Domain::UNIT {
        return Err(Error::GridMismatch(format!("{what} needs G on [0,1]")));
    }
    Ok(())
}

/// Haar projection in `L₂(G)`: `A_jj = 1/(k G(cell_j))`.
pub fn haar_kernel(level: u32, g: &MeasureModel) -> Result<KernelSpec> {
    require_unit(g, "the Haar kernel")?;
    if level > 30 {
        return Err(invalid("Haar level too large"));
    }
    let k = 1usize << level;
    let mut mass = vec![0.0; k];
    for i in 0..g.len() {
        mass[half_open_index(g.node(i)[0], 0.0, 1.0, k)] += g.weights()[i];
    }
    if let Some(j) = mass.iter().position(|&m| m <= 0.0) {
        return Err(Error::DegenerateMeasure(format!(
            "dyadic cell {j} of level {level} has zero G-mass on the grid"
        )));
    }
    let diag = mass.iter().map(|m| 1.0 / (k as f64 * m)).collect();
    Ok(KernelSpec::new(KernelForm::Haar(HaarKernel { level, diag })))
}

/// Haar kernel with `A_jj = 1` (projection for Lebesgue measure on `[0,1]`).
pub fn haar_uniform(level: u32) -> KernelSpec {
    let k = 1usize << level;
    KernelSpec::new(KernelForm::Haar(HaarKernel {
        level,
        diag: vec![1.0; k],
    }))
}

/// Periodized wavelet projection at level `I` on `[0,1]^d`.
pub fn wavelet_kernel(level: u32, dim: usize, family: WaveletFamily) -> Result<KernelSpec> {
    wavelet_kernel_with_depth(level, dim, family, wavelet::DEFAULT_DEPTH)
}

pub fn wavelet_kernel_with_depth(
    level: u32,
    dim: usize,
    family: WaveletFamily,
    depth: u32,
) -> Result<KernelSpec> {
    Ok(KernelSpec::new(KernelForm::TensorWavelet(WaveletKernel::new(
        level, dim, family, depth,
    )?)))
}

/// Dirichlet kernel with parameter `k` (dimension `2k+1`) on `domain`.
pub fn fourier_kernel(k: usize, domain: Domain) -> Result<KernelSpec> {
    if domain.dim != 1 || !(domain.lo < domain.hi) {
        return Err(invalid("Fourier kernels are one-dimensional"));
    }
    Ok(KernelSpec::new(KernelForm::Fourier(FourierKernel {
        k,
        lo: domain.lo,
        hi: domain.hi,
    })))
}

/// Fourier projection in `L₂(G)`: the Dirichlet kernel weighted by `G`'s density.
pub fn fourier_projection(k: usize, g: &MeasureModel) -> Result<KernelSpec> {
    fourier_kernel(k, g.domain())?.with_weight(g.density_step()?)
}

/// `φ((x₁ − x₂)/σ)/σ` on `[0,1]`.
pub fn convolution_kernel(sigma: f64, mother: Mother) -> Result<KernelSpec> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(invalid(format!("bandwidth must be positive, got {sigma}")));
    }
    Ok(KernelSpec::new(KernelForm::Convolution(ConvolutionKernel {
        sigma,
        mother,
    })))
}

/// `K ≡ value`.
pub fn constant_kernel(value: f64, domain: Domain) -> KernelSpec {
    KernelSpec::new(KernelForm::Constant { value, domain })
}

/// `Σ_{i<k} e_i(x₁)e_i(x₂)` for an orthonormal basis of `L₂[0,1]`.
pub fn basis_kernel(basis: OrthoBasis, k: usize) -> Result<KernelSpec> {
    if k == 0 {
        return Err(invalid("basis kernel needs k ≥ 1"));
    }
    Ok(KernelSpec::new(KernelForm::Basis(BasisKernel { basis, k })))
}

/// Spline projection in `L₂(G)` with `A` the inverse Gram matrix.
pub fn spline_gram_kernel(space: SplineSpace, g: &MeasureModel) -> Result<KernelSpec> {
    require_unit(g, "the spline kernel")?;
    space.validate()?;
    let basis = BsplineBasis::new(&space);
    let k = basis.dim();
    let r = basis.order();
    let b = r - 1;
    let w = b + 1;
    // Lower band of the Gram matrix: band[i * w + (b + j - i)].
    let mut band = vec![0.0; k * w];
    let mut vals = vec![0.0; r];
    for i in 0..g.len() {
        let wt = g.weights()[i];
        let first = basis.eval_nonzero(g.node(i)[0], &mut vals);
        for a in 0..r {
            for c in 0..=a {
                band[(first + a) * w + (b + c - a)] += wt * vals[a] * vals[c];
            }
        }
    }
    let chol = spline::BandCholesky::factor(k, b, |i, j| band[i * w + (b + j - i)])?;
    let mut ainv = vec![0.0; k * k];
    let mut col = vec![0.0; k];
    for j in 0..k {
        col.iter_mut().for_each(|c| *c = 0.0);
        col[j] = 1.0;
        chol.solve(&mut col);
        for i in 0..k {
            ainv[i * k + j] = col[i];
        }
    }
    for i in 0..k {
        for j in 0..i {
            let s = 0.5 * (ainv[i * k + j] + ainv[j * k + i]);
            ainv[i * k + j] = s;
            ainv[j * k + i] = s;
        }
    }
    Ok(KernelSpec::new(KernelForm::SplineGram(SplineKernel::new(
        space, ainv,
    )?)))
}

/// `K(x₁,x₂) + K(x₂,x₁) − ∫K(x₁,z)K(x₂,z) dG(z)`.
pub fn twice(kernel: &KernelSpec, g: &MeasureModel) -> Result<KernelSpec> {
    if kernel.twiced() {
        return Err(invalid("kernel is already twiced"));
    }
    if kernel.domain() != g.domain() {
        return Err(Error::GridMismatch("twicing measure lives on another domain".into()));
    }
    let mut out = kernel.clone();
    out.twicing = Some(TwicingGrid {
        dim: g.dim(),
        nodes: g.nodes().to_vec(),
        weights: g.weights().to_vec(),
    });
    Ok(out)
}

/// `K_n f` on `G`'s grid.
pub fn apply_operator(kernel: &KernelSpec, f: &[f64], g: &MeasureModel) -> Result<Vec<f64>> {
    if f.len() != g.len() {
        return Err(Error::GridMismatch(format!(
            "grid function has {} values, grid has {} nodes",
            f.len(),
            g.len()
        )));
    }
    let img = OperatorImage::new(kernel, f, g)?;
    Ok(img.on_grid())
}

/// Result of power iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpNormEstimate {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub const OPNORM_MAX_ITER: usize = 500;
pub const OPNORM_TOL: f64 = 1e-10;

/// `‖K‖` as an operator on `L₂(G)`, by power iteration on the discretized
/// `K*K` from the start vector `1 + ½ sin(i)`.
pub fn operator_norm_estimate(kernel: &KernelSpec, g: &MeasureModel) -> Result<OpNormEstimate> {
    operator_norm_with(kernel, g, OPNORM_MAX_ITER, OPNORM_TOL)
}

pub fn operator_norm_with(
    kernel: &KernelSpec,
    g: &MeasureModel,
    max_iter: usize,
    tol: f64,
) -> Result<OpNormEstimate> {
    let grid = grid::GridKernel::new(kernel, g)?;
    let sw: Vec<f64> = g.weights().iter().map(|w| w.sqrt()).collect();
    let n = g.len();
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * (i as f64).sin()).collect();
    let norm = |x: &[f64]| crate::sum::pairwise_sum_by(x.len(), |i| x[i] * x[i]).sqrt();
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut prev = 0.0;
    let mut sigma = 0.0;
    for it in 1..=max_iter {
        // B = W^{1/2} K W^{1/2} is symmetric, so iterating B climbs the
        // Rayleigh quotient of B*B monotonically.
        let x: Vec<f64> = (0..n).map(|i| sw[i] * v[i]).collect();
        let kx = grid.matvec(&x);
        let u: Vec<f64> = (0..n).map(|i| sw[i] * kx[i]).collect();
        sigma = norm(&u);
        if sigma == 0.0 {
            return Ok(OpNormEstimate {
                value: 0.0,
                iterations: it,
                converged: true,
            });
        }
        v = u.iter().map(|x| x / sigma).collect();
        if it > 1 && (sigma - prev).abs() <= tol * sigma {
            return Ok(OpNormEstimate {
                value: sigma,
                iterations: it,
                converged: true,
            });
        }
        prev = sigma;
    }
    Ok(OpNormEstimate {
        value: sigma,
        iterations: max_iter,
        converged: false,
    })
}

/// `∫∫ K² d(G×G)` (no moment weights).
pub fn squared_norm(kernel: &KernelSpec, g: &MeasureModel) -> Result<f64> {
    let grid = grid::GridKernel::new(kernel, g)?;
    let w = g.weights();
    let rows = grid.map_rows(|i, row, range| {
        let mut s = 0.0;
        for j in range {
            s += w[j] * row[j] * row[j];
        }
        w[i] * s
    });
    Ok(crate::sum::pairwise_sum(&rows))
}

/// `∫ K(x,x) dG(x)`.
pub fn trace(kernel: &KernelSpec, g: &MeasureModel) -> f64 {
    crate::sum::pairwise_sum_by(g.len(), |i| {
        g.weights()[i] * kernel.value(g.node(i), g.node(i))
    })
}
