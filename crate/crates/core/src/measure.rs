//! Design law `G` with conditional moment functions, discretized on a
//! uniform midpoint grid.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};

/// Default number of grid nodes per axis in one dimension.
pub const DEFAULT_GRID: usize = 4096;

/// The cube `[lo, hi]^dim`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Domain {
    pub lo: f64,
    pub hi: f64,
    #[serde(default = "one")]
    pub dim: usize,
}

fn one() -> usize {
    1
}

impl Domain {
    pub const UNIT: Domain = Domain {
        lo: 0.0,
        hi: 1.0,
        dim: 1,
    };

    pub fn unit_cube(dim: usize) -> Domain {
        Domain {
            lo: 0.0,
            hi: 1.0,
            dim,
        }
    }

    /// `[-π, π]`, the Fourier domain.
    pub fn circle() -> Domain {
        Domain {
            lo: -PI,
            hi: PI,
            dim: 1,
        }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn volume(&self) -> f64 {
        self.width().powi(self.dim as i32)
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim && p.iter().all(|&v| v >= self.lo && v <= self.hi)
    }

    pub fn check(&self, p: &[f64]) -> Result<()> {
        if self.contains(p) {
            Ok(())
        } else {
            Err(Error::Domain {
                point: p.to_vec(),
                lo: self.lo,
                hi: self.hi,
                dim: self.dim,
            })
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) || self.dim == 0 {
            return Err(invalid(format!("bad domain {self:?}")));
        }
        Ok(())
    }
}

/// Index of the half-open cell `(a, b]` containing `x` among `m` equal cells
/// of `[lo, hi]`; `lo` itself goes to cell 0.
pub(crate) fn half_open_index(x: f64, lo: f64, hi: f64, m: usize) -> usize {
    let t = (x - lo) / (hi - lo) * m as f64;
    let j = t.ceil() - 1.0;
    if j <= 0.0 {
        0
    } else if j >= (m - 1) as f64 {
        m - 1
    } else {
        j as usize
    }
}

/// Piecewise-constant function on `m` equal half-open cells of `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepFunction {
    pub lo: f64,
    pub hi: f64,
    pub values: Vec<f64>,
}

impl StepFunction {
    pub fn new(lo: f64, hi: f64, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || !(lo < hi) {
            return Err(invalid("step function needs cells and lo < hi"));
        }
        Ok(StepFunction { lo, hi, values })
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.values[half_open_index(x, self.lo, self.hi, self.values.len())]
    }

    pub fn cells(&self) -> usize {
        self.values.len()
    }
}

/// Acceptance band for density and moment tables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds {
            lower: 1e-12,
            upper: 1e12,
        }
    }
}

/// `G` on a uniform midpoint grid together with `μ`, `μ₂` and `μ_q`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "MeasureRaw", into = "MeasureRaw")]
pub struct MeasureModel {
    domain: Domain,
    per_axis: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    density: Vec<f64>,
    mu: Vec<f64>,
    mu2: Vec<f64>,
    muq: Vec<f64>,
    q: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeasureRaw {
    domain: Domain,
    per_axis: usize,
    density: Vec<f64>,
    mu: Vec<f64>,
    mu2: Vec<f64>,
    muq: Vec<f64>,
    q: f64,
}

impl TryFrom<MeasureRaw> for MeasureModel {
    type Error = Error;
    fn try_from(r: MeasureRaw) -> Result<Self> {
        MeasureModel::uniform(r.domain, r.per_axis)?
            .with_density_values(r.density)?
            .with_moment_values(r.mu, r.mu2, r.muq, r.q)
    }
}

impl From<MeasureModel> for MeasureRaw {
    fn from(m: MeasureModel) -> Self {
        MeasureRaw {
            domain: m.domain,
            per_axis: m.per_axis,
            density: m.density,
            mu: m.mu,
            mu2: m.mu2,
            muq: m.muq,
            q: m.q,
        }
    }
}

impl MeasureModel {
    /// Uniform `G` on `domain` with `Y ≡ 1` moments (`μ = μ₂ = μ_q = 1`, `q = 4`).
    pub fn uniform(domain: Domain, per_axis: usize) -> Result<Self> {
        domain.validate()?;
        if per_axis == 0 {
            return Err(invalid("grid needs at least one node per axis"));
        }
        let n = per_axis
            .checked_pow(domain.dim as u32)
            .ok_or_else(|| invalid("grid too large"))?;
        let h = domain.width() / per_axis as f64;
        let mut nodes = Vec::with_capacity(n * domain.dim);
        let mut idx = vec![0usize; domain.dim];
        for _ in 0..n {
            for &i in &idx {
                nodes.push(domain.lo + (i as f64 + 0.5) * h);
            }
            for a in (0..domain.dim).rev() {
                idx[a] += 1;
                if idx[a] < per_axis {
                    break;
                }
                idx[a] = 0;
            }
        }
        let dens = 1.0 / domain.volume();
        Ok(MeasureModel {
            domain,
            per_axis,
            nodes,
            weights: vec![1.0 / n as f64; n],
            density: vec![dens; n],
            mu: vec![1.0; n],
            mu2: vec![1.0; n],
            muq: vec![1.0; n],
            q: 4.0,
        })
    }

    /// Replace the density by `f` evaluated at the nodes, renormalized.
    pub fn with_density(self, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let vals = (0..self.len()).map(|i| f(self.node(i))).collect();
        self.with_density_values(vals)
    }

    pub fn with_density_values(mut self, vals: Vec<f64>) -> Result<Self> {
        if vals.len() != self.len() {
            return Err(Error::GridMismatch(format!(
                "density has {} values, grid has {} nodes",
                vals.len(),
                self.len()
            )));
        }
        if vals.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::DegenerateMeasure(
                "density must be positive and finite at every node".into(),
            ));
        }
        let cell = self.cell_volume();
        let total: f64 = crate::sum::pairwise_sum(&vals) * cell;
        self.density = vals.iter().map(|v| v / total).collect();
        self.weights = self.density.iter().map(|d| d * cell).collect();
        Ok(self)
    }

    /// Replace `μ`, `μ₂` and `μ_q` by functions evaluated at the nodes.
    pub fn with_moments(
        self,
        mu: impl Fn(&[f64]) -> f64,
        mu2: impl Fn(&[f64]) -> f64,
        muq: impl Fn(&[f64]) -> f64,
        q: f64,
    ) -> Result<Self> {
        let n = self.len();
        let a = (0..n).map(|i| mu(self.node(i))).collect();
        let b = (0..n).map(|i| mu2(self.node(i))).collect();
        let c = (0..n).map(|i| muq(self.node(i))).collect();
        self.with_moment_values(a, b, c, q)
    }

    pub fn with_moment_values(
        mut self,
        mu: Vec<f64>,
        mu2: Vec<f64>,
        muq: Vec<f64>,
        q: f64,
    ) -> Result<Self> {
        let n = self.len();
        if mu.len() != n || mu2.len() != n || muq.len() != n {
            return Err(Error::GridMismatch("moment tables must match the grid".into()));
        }
        if !(q > 2.0) {
            return Err(invalid(format!("q must exceed 2, got {q}")));
        }
        if mu.iter().chain(&mu2).chain(&muq).any(|v| !v.is_finite()) {
            return Err(invalid("moment tables must be finite"));
        }
        self.mu = mu;
        self.mu2 = mu2;
        self.muq = muq;
        self.q = q;
        Ok(self)
    }

    /// Check density, `μ₂` and `μ_q` against `bounds`.
    pub fn validate(&self, bounds: Bounds) -> Result<()> {
        for (name, tab) in [("density", &self.density), ("mu2", &self.mu2), ("muq", &self.muq)] {
            if let Some(v) = tab.iter().find(|v| !(**v >= bounds.lower && **v <= bounds.upper)) {
                return Err(Error::DegenerateMeasure(format!(
                    "{name} value {v} outside [{}, {}]",
                    bounds.lower, bounds.upper
                )));
            }
        }
        Ok(())
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }
    pub fn dim(&self) -> usize {
        self.domain.dim
    }
    pub fn per_axis(&self) -> usize {
        self.per_axis
    }
    pub fn len(&self) -> usize {
        self.weights.len()
    }
    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
    /// Node spacing along each axis.
    pub fn spacing(&self) -> f64 {
        self.domain.width() / self.per_axis as f64
    }
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim() as i32)
    }
    pub fn node(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.nodes[i * d..(i + 1) * d]
    }
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn density(&self) -> &[f64] {
        &self.density
    }
    pub fn mu(&self) -> &[f64] {
        &self.mu
    }
    pub fn mu2(&self) -> &[f64] {
        &self.mu2
    }
    pub fn muq(&self) -> &[f64] {
        &self.muq
    }
    pub fn q(&self) -> f64 {
        self.q
    }

    /// Per-axis grid index of node `i` along axis `a`.
    pub fn axis_index(&self, i: usize, a: usize) -> usize {
        let d = self.dim();
        (i / self.per_axis.pow((d - 1 - a) as u32)) % self.per_axis
    }

    /// The density as a step function on the grid cells (one dimension only).
    pub fn density_step(&self) -> Result<StepFunction> {
        if self.dim() != 1 {
            return Err(invalid("density step function needs a one-dimensional grid"));
        }
        StepFunction::new(self.domain.lo, self.domain.hi, self.density.clone())
    }

    /// `∫ f dG` for a grid function.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        crate::sum::pairwise_sum_by(self.len(), |i| self.weights[i] * f[i])
    }

    /// Sampler for `G` restricted to the box `[lo, hi]` (per axis), using the
    /// nodes selected by `keep`.
    pub fn sampler(&self, lo: &[f64], hi: &[f64], keep: impl Fn(usize) -> bool) -> NodeSampler {
        let mut nodes = Vec::new();
        let mut cum = Vec::new();
        let mut acc = 0.0;
        for i in 0..self.len() {
            if keep(i) && self.weights[i] > 0.0 {
                acc += self.weights[i];
                nodes.push(i);
                cum.push(acc);
            }
        }
        NodeSampler {
            nodes,
            cum,
            lo: lo.to_vec(),
            hi: hi.to_vec(),
        }
    }

    /// Sampler for `G` itself.
    pub fn full_sampler(&self) -> NodeSampler {
        let d = self.dim();
        self.sampler(&vec![self.domain.lo; d], &vec![self.domain.hi; d], |_| true)
    }
}

/// Draws from the piecewise-constant version of `G` restricted to a box:
/// pick a node by inverse CDF, then a uniform point in its grid cell
/// intersected with the box. Draws land in `(a, b]` per axis.
#[derive(Debug, Clone)]
pub struct NodeSampler {
    nodes: Vec<usize>,
    cum: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl NodeSampler {
    pub fn mass(&self) -> f64 {
        self.cum.last().copied().unwrap_or(0.0)
    }

    pub fn draw<R: Rng + ?Sized>(&self, g: &MeasureModel, rng: &mut R, out: &mut [f64]) {
        let total = self.mass();
        let u = rng.random::<f64>() * total;
        let k = self.cum.partition_point(|&c| c <= u).min(self.nodes.len() - 1);
        let node = g.node(self.nodes[k]);
        let h = g.spacing() / 2.0;
        for a in 0..out.len() {
            let a_lo = (node[a] - h).max(self.lo[a]);
            let b = (node[a] + h).min(self.hi[a]);
            let v = rng.random::<f64>();
            let mut x = b - v * (b - a_lo);
            if x <= a_lo && a_lo > g.domain().lo {
                x = b;
            }
            out[a] = x;
        }
    }
}
