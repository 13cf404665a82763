//! Data generators with known `G`, `μ`, `μ₂`, `μ_q` and functional values.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, SQRT_2};

use crate::error::{invalid, Result};
use crate::kernels::basis::haar_wavelet;
use crate::measure::{half_open_index, Domain, MeasureModel, NodeSampler};

/// Design law, as a density relative to the uniform law on the domain
/// (written in the rescaled coordinate `u ∈ [0,1]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Design {
    Uniform,
    /// `max(floor, 1 + Σ_j c_j √2 cos(2π j u))`, renormalized.
    Cosine {
        coeffs: Vec<f64>,
        #[serde(default = "default_floor")]
        floor: f64,
    },
    /// Piecewise constant on equal cells, renormalized.
    Step { values: Vec<f64> },
    /// `1 + Σ_{i≥1} θ_i e_i` in the Haar wavelet basis with
    /// `θ_i = c i^{-(2β+1)/2}` for `i < 2^levels`.
    HaarSeries {
        #[serde(default = "default_c")]
        c: f64,
        beta: f64,
        #[serde(default = "default_levels")]
        levels: u32,
    },
}

impl Default for Design {
    fn default() -> Self {
        Design::Uniform
    }
}

fn default_floor() -> f64 {
    0.1
}
fn default_c() -> f64 {
    0.07
}
fn default_levels() -> u32 {
    22
}

impl Design {
    pub fn validate(&self) -> Result<()> {
        match self {
            Design::Uniform => Ok(()),
            Design::Cosine { floor, .. } => {
                if *floor > 0.0 {
                    Ok(())
                } else {
                    Err(invalid("cosine design floor must be positive"))
                }
            }
            Design::Step { values } => {
                if !values.is_empty() && values.iter().all(|v| *v > 0.0 && v.is_finite()) {
                    Ok(())
                } else {
                    Err(invalid("step design values must be positive"))
                }
            }
            Design::HaarSeries { c, beta, levels } => {
                if !(*beta > 0.0) || *levels == 0 || *levels > 26 {
                    return Err(invalid("haar_series needs beta > 0 and 1 ≤ levels ≤ 26"));
                }
                let (lo, _) = haar_series_bounds(*c, *beta, *levels);
                if lo <= 0.0 {
                    return Err(invalid("haar_series coefficients make the density non-positive"));
                }
                Ok(())
            }
        }
    }

    /// Unnormalized density at `u ∈ [0,1]` (normalized for `haar_series`).
    pub fn shape(&self, u: f64) -> f64 {
        match self {
            Design::Uniform => 1.0,
            Design::Cosine { coeffs, floor } => {
                let s: f64 = coeffs
                    .iter()
                    .enumerate()
                    .map(|(j, c)| c * SQRT_2 * (2.0 * PI * (j + 1) as f64 * u).cos())
                    .sum();
                (1.0 + s).max(*floor)
            }
            Design::Step { values } => values[half_open_index(u, 0.0, 1.0, values.len())],
            Design::HaarSeries { c, beta, levels } => haar_series_density(*c, *beta, *levels, u),
        }
    }

    /// `G` on `domain` with `per_axis` grid nodes, `Y ≡ 1` moments.
    pub fn measure(&self, domain: Domain, per_axis: usize) -> Result<MeasureModel> {
        self.validate()?;
        let g = MeasureModel::uniform(domain, per_axis)?;
        if matches!(self, Design::Uniform) {
            return Ok(g);
        }
        if domain.dim != 1 {
            return Err(invalid("non-uniform designs are one-dimensional"));
        }
        let w = domain.width();
        g.with_density(|x| self.shape((x[0] - domain.lo) / w))
    }
}

/// `θ_i` of the Haar series design.
pub fn haar_series_theta(c: f64, beta: f64, i: usize) -> f64 {
    c * (i as f64).powf(-(2.0 * beta + 1.0) / 2.0)
}

fn haar_series_bounds(c: f64, beta: f64, levels: u32) -> (f64, f64) {
    // At each level only one wavelet is nonzero, with |ψ| = 2^{l/2}.
    let amp: f64 = (0..levels)
        .map(|l| {
            let i = 1usize << l;
            c.abs() * (i as f64).powf(-(2.0 * beta + 1.0) / 2.0) * ((1u64 << l) as f64).sqrt()
        })
        .sum();
    (1.0 - amp, 1.0 + amp)
}

fn haar_series_density(c: f64, beta: f64, levels: u32, u: f64) -> f64 {
    let mut s = 1.0;
    for l in 0..levels {
        let j = half_open_index(u, 0.0, 1.0, 1usize << l);
        let i = (1usize << l) + j;
        s += haar_series_theta(c, beta, i) * haar_wavelet(l, j, u);
    }
    s
}

/// `Σ_{i<k} θ_i²` including `θ_0 = 1`, capped at the series length.
pub fn haar_series_truncated_square(c: f64, beta: f64, levels: u32, k: usize) -> f64 {
    let top = (1usize << levels).min(k);
    let terms: Vec<f64> = (1..top).map(|i| haar_series_theta(c, beta, i).powi(2)).collect();
    1.0 + crate::sum::pairwise_sum(&terms)
}

/// Draws design points in `[0,1]` or the measure's domain.
#[derive(Debug, Clone)]
pub enum DesignSampler {
    /// The grid version of `G`.
    Grid(NodeSampler),
    /// Exact rejection sampling from the Haar series density.
    HaarSeries {
        c: f64,
        beta: f64,
        levels: u32,
        max: f64,
    },
}

impl DesignSampler {
    pub fn new(design: &Design, g: &MeasureModel) -> Self {
        match design {
            Design::HaarSeries { c, beta, levels } => DesignSampler::HaarSeries {
                c: *c,
                beta: *beta,
                levels: *levels,
                max: haar_series_bounds(*c, *beta, *levels).1,
            },
            _ => DesignSampler::Grid(g.full_sampler()),
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, g: &MeasureModel, rng: &mut R, out: &mut [f64]) {
        match self {
            DesignSampler::Grid(s) => s.draw(g, rng, out),
            DesignSampler::HaarSeries {
                c,
                beta,
                levels,
                max,
            } => loop {
                // 1 − U lies in (0, 1], matching the (a, b] cell convention.
                let u = 1.0 - rng.random::<f64>();
                if rng.random::<f64>() * max <= haar_series_density(*c, *beta, *levels, u) {
                    let d = g.domain();
                    out[0] = d.lo + u * d.width();
                    return;
                }
            },
        }
    }
}

/// Regression function `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeanFn {
    Zero,
    Constant {
        value: f64,
    },
    Linear {
        #[serde(default = "one")]
        slope: f64,
        #[serde(default)]
        intercept: f64,
    },
    /// Hölder-`β` path `Σ_{j<terms} 2^{-jβ} cos(2π 2^j u)`.
    Weierstrass {
        beta: f64,
        #[serde(default = "default_terms")]
        terms: u32,
    },
}

fn one() -> f64 {
    1.0
}
fn default_terms() -> u32 {
    12
}

impl MeanFn {
    pub fn eval(&self, u: f64) -> f64 {
        match self {
            MeanFn::Zero => 0.0,
            MeanFn::Constant { value } => *value,
            MeanFn::Linear { slope, intercept } => intercept + slope * u,
            MeanFn::Weierstrass { beta, terms } => (0..*terms)
                .map(|j| {
                    let f = (1u64 << j) as f64;
                    f.powf(-beta) * (2.0 * PI * f * u).cos()
                })
                .sum(),
        }
    }
}

/// Conditional law of `Y − b(X)` (or of `Y` itself for `bernoulli`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Noise {
    None,
    Gaussian { sd: f64 },
    /// `±sd` with probability ½ each.
    TwoPoint { sd: f64 },
    /// `Y ~ Bernoulli(b(X))`, with `b` clipped to `[0,1]`.
    Bernoulli,
}

/// How responses are generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Response {
    /// `Y ≡ 1`.
    One,
    Regression { mean: MeanFn, noise: Noise },
}

impl Default for Response {
    fn default() -> Self {
        Response::One
    }
}

impl Response {
    /// `(μ, μ₂, μ_q)` at rescaled position `u` for `q = 4`.
    pub fn moments(&self, u: f64) -> (f64, f64, f64) {
        match self {
            Response::One => (1.0, 1.0, 1.0),
            Response::Regression { mean, noise } => {
                let b = mean.eval(u);
                match noise {
                    Noise::None => (b, b * b, b.powi(4)),
                    Noise::Gaussian { sd } => {
                        let s2 = sd * sd;
                        (b, b * b + s2, b.powi(4) + 6.0 * b * b * s2 + 3.0 * s2 * s2)
                    }
                    Noise::TwoPoint { sd } => {
                        let s2 = sd * sd;
                        (b, b * b + s2, b.powi(4) + 6.0 * b * b * s2 + s2 * s2)
                    }
                    Noise::Bernoulli => {
                        let p = b.clamp(0.0, 1.0);
                        (p, p, p)
                    }
                }
            }
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, u: f64, rng: &mut R) -> f64 {
        match self {
            Response::One => 1.0,
            Response::Regression { mean, noise } => {
                let b = mean.eval(u);
                match noise {
                    Noise::None => b,
                    Noise::Gaussian { sd } => {
                        let z: f64 = StandardNormal.sample(rng);
                        b + sd * z
                    }
                    Noise::TwoPoint { sd } => {
                        if rng.random::<bool>() {
                            b + sd
                        } else {
                            b - sd
                        }
                    }
                    Noise::Bernoulli => {
                        if rng.random::<f64>() < b.clamp(0.0, 1.0) {
                            1.0
                        } else {
                            0.0
                        }
                    }
                }
            }
        }
    }

    /// `G` with this response's moment functions (`q = 4`).
    pub fn attach(&self, g: MeasureModel) -> Result<MeasureModel> {
        if matches!(self, Response::One) {
            return Ok(g);
        }
        let d = g.domain();
        let w = d.width();
        let m = |x: &[f64]| self.moments((x[0] - d.lo) / w);
        g.with_moments(|x| m(x).0, |x| m(x).1, |x| m(x).2, 4.0)
    }
}

/// Observation probability `P(A = 1 | Z = u)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Propensity {
    Constant { p: f64 },
    /// `lo + (hi − lo) u`.
    Linear { lo: f64, hi: f64 },
}

impl Propensity {
    pub fn eval(&self, u: f64) -> f64 {
        match *self {
            Propensity::Constant { p } => p,
            Propensity::Linear { lo, hi } => lo + (hi - lo) * u,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (a, b) = (self.eval(0.0), self.eval(1.0));
        if a > 0.0 && b > 0.0 && a <= 1.0 && b <= 1.0 {
            Ok(())
        } else {
            Err(invalid("observation probabilities must lie in (0, 1]"))
        }
    }
}

impl Default for Propensity {
    fn default() -> Self {
        Propensity::Constant { p: 1.0 }
    }
}

/// Draws `n` points from `sampler` and responses from `response`.
pub fn draw_xy<R: Rng + ?Sized>(
    sampler: &DesignSampler,
    g: &MeasureModel,
    response: &Response,
    n: usize,
    rng: &mut R,
) -> (Vec<f64>, Vec<f64>) {
    let d = g.dim();
    let dom = g.domain();
    let mut x = vec![0.0; n * d];
    for r in 0..n {
        sampler.draw(g, rng, &mut x[r * d..(r + 1) * d]);
    }
    let y = (0..n)
        .map(|r| response.draw((x[r * d] - dom.lo) / dom.width(), rng))
        .collect();
    (x, y)
}
