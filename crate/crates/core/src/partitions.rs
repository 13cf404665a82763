//! Partitions of the domain, bin assignment, the diagonal-concentration
//! conditions, and sampling given bin counts.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernels::grid::GridKernel;
use crate::kernels::{operator_norm_estimate, KernelForm, KernelSpec};
use crate::measure::{Domain, MeasureModel, NodeSampler};
use crate::sum::pairwise_sum;
use crate::ustat::Sample;

/// Fewest quadrature nodes allowed in a partition cell.
pub const MIN_NODES_PER_CELL: usize = 8;

/// Product partition of a box domain. Cells are `(a, b]` per axis (the
/// lower end of the domain belongs to the first cell) and are numbered with
/// the last axis varying fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Partition {
    pub domain: Domain,
    /// Ascending cell boundaries per axis, including both domain ends.
    pub breaks: Vec<Vec<f64>>,
    /// `p_m = G(cell_m)`.
    pub probs: Vec<f64>,
}

impl Partition {
    /// Partition with the given boundaries; cell probabilities from `g`.
    pub fn from_breaks(breaks: Vec<Vec<f64>>, g: &MeasureModel) -> Result<Self> {
        let domain = g.domain();
        if breaks.len() != domain.dim {
            return Err(invalid("need one list of boundaries per axis"));
        }
        for b in &breaks {
            if b.len() < 2 || b[0] != domain.lo || *b.last().unwrap() != domain.hi {
                return Err(invalid("boundaries must start and end at the domain ends"));
            }
            if b.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(invalid("boundaries must be strictly increasing"));
            }
        }
        let mut p = Partition {
            domain,
            breaks,
            probs: Vec::new(),
        };
        let cells = p.node_cells(g);
        let mut probs = vec![Vec::new(); p.cells()];
        let mut nodes = vec![0usize; p.cells()];
        for (i, &c) in cells.iter().enumerate() {
            probs[c].push(g.weights()[i]);
            nodes[c] += 1;
        }
        if let Some(m) = nodes.iter().position(|&c| c < MIN_NODES_PER_CELL) {
            return Err(Error::GridMismatch(format!(
                "partition cell {m} holds {} grid nodes; at least {MIN_NODES_PER_CELL} are required",
                nodes[m]
            )));
        }
        p.probs = probs.iter().map(|v| pairwise_sum(v)).collect();
        Ok(p)
    }

    /// The single cell `{domain}`.
    pub fn whole(g: &MeasureModel) -> Result<Self> {
        let d = g.domain();
        Self::from_breaks(vec![vec![d.lo, d.hi]; d.dim], g)
    }

    /// `M` equal intervals per axis.
    pub fn equal(per_axis: usize, g: &MeasureModel) -> Result<Self> {
        if per_axis == 0 {
            return Err(invalid("need at least one cell"));
        }
        let d = g.domain();
        let axis: Vec<f64> = (0..=per_axis)
            .map(|j| {
                if j == per_axis {
                    d.hi
                } else {
                    d.lo + d.width() * j as f64 / per_axis as f64
                }
            })
            .collect();
        Self::from_breaks(vec![axis; d.dim], g)
    }

    pub fn cells(&self) -> usize {
        self.breaks.iter().map(|b| b.len() - 1).product()
    }

    pub fn dim(&self) -> usize {
        self.breaks.len()
    }

    fn axis_cell(&self, a: usize, x: f64) -> usize {
        let b = &self.breaks[a];
        b.partition_point(|&t| t < x).saturating_sub(1).min(b.len() - 2)
    }

    /// Cell of a point, `None` outside the domain.
    pub fn cell_of(&self, x: &[f64]) -> Option<usize> {
        if x.len() != self.dim() || !self.domain.contains(x) {
            return None;
        }
        let mut m = 0;
        for (a, &v) in x.iter().enumerate() {
            m = m * (self.breaks[a].len() - 1) + self.axis_cell(a, v);
        }
        Some(m)
    }

    /// Lower and upper corners of cell `m`.
    pub fn cell_box(&self, mut m: usize) -> (Vec<f64>, Vec<f64>) {
        let d = self.dim();
        let mut lo = vec![0.0; d];
        let mut hi = vec![0.0; d];
        for a in (0..d).rev() {
            let c = self.breaks[a].len() - 1;
            let j = m % c;
            m /= c;
            lo[a] = self.breaks[a][j];
            hi[a] = self.breaks[a][j + 1];
        }
        (lo, hi)
    }

    /// Cell index of every quadrature node of `g`.
    pub fn node_cells(&self, g: &MeasureModel) -> Vec<usize> {
        (0..g.len())
            .map(|i| self.cell_of(g.node(i)).expect("grid node inside domain"))
            .collect()
    }
}

/// Per-axis dyadic coarsening for Haar-type kernels with `per_axis` cells of
/// a `2^level` grid.
fn dyadic(level: u32, per_axis: usize, dims: usize, g: &MeasureModel) -> Result<Partition> {
    let k = 1usize << level;
    if per_axis == 0 || k % per_axis != 0 {
        return Err(Error::Alignment(format!(
            "{per_axis} cells per axis do not coarsen the {k} dyadic cells"
        )));
    }
    let axis: Vec<f64> = (0..=per_axis).map(|j| j as f64 / per_axis as f64).collect();
    Partition::from_breaks(vec![axis; dims], g)
}

fn exact_root(m: usize, d: usize) -> Option<usize> {
    let r = (m as f64).powf(1.0 / d as f64).round() as usize;
    (r.checked_pow(d as u32) == Some(m)).then_some(r)
}

/// The partition used for `kernel` with `m` cells.
pub fn build_partition(kernel: &KernelSpec, m: usize, g: &MeasureModel) -> Result<Partition> {
    if kernel.domain() != g.domain() {
        return Err(Error::GridMismatch("partition measure lives on another domain".into()));
    }
    if m == 0 {
        return Err(invalid("partition needs at least one cell"));
    }
    match &kernel.form {
        KernelForm::Haar(h) => dyadic(h.level, m, 1, g),
        KernelForm::TensorWavelet(w) => {
            let per = exact_root(m, w.dim).ok_or_else(|| {
                Error::Alignment(format!("{m} cells do not form a {}-dimensional grid", w.dim))
            })?;
            dyadic(w.level, per, w.dim, g)
        }
        KernelForm::SplineGram(s) => {
            let mesh = s.space.mesh();
            let intervals = mesh.len() - 1;
            let p = intervals / m;
            if p == 0 {
                return Err(Error::Alignment(format!(
                    "{m} cells exceed the {intervals} knot intervals"
                )));
            }
            let mut axis: Vec<f64> = (0..m).map(|i| mesh[i * p]).collect();
            axis.push(1.0);
            Partition::from_breaks(vec![axis], g)
        }
        KernelForm::Fourier(_) | KernelForm::Convolution(_) => {
            if m < 2 {
                return Err(invalid("Fourier and convolution partitions need M ≥ 2"));
            }
            Partition::equal(m, g)
        }
        KernelForm::Constant { .. } | KernelForm::Basis(_) => Partition::equal(m, g),
    }
}

fn floor_pow2(x: usize) -> usize {
    if x == 0 {
        0
    } else {
        1usize << (usize::BITS - 1 - x.leading_zeros())
    }
}

/// Default cell count for `kernel` at sample size `n`.
///
/// Haar and wavelets use `min(n, k/2)` (down to a power of two, per axis),
/// Fourier `⌈2π k^{1/6}⌉`, convolution `⌈σ^{-1/6}⌉` and splines
/// `min(n, intervals/2)`.
pub fn default_cell_count(kernel: &KernelSpec, n: usize) -> usize {
    match &kernel.form {
        KernelForm::Haar(h) => floor_pow2(n.min(h.k() / 2)).max(1),
        KernelForm::TensorWavelet(w) => {
            let target = n.min(w.k() / 2).max(1);
            let mut per = 1usize;
            while per * 2 <= (1usize << w.level)
                && (per * 2).checked_pow(w.dim as u32).is_some_and(|v| v <= target)
            {
                per *= 2;
            }
            per.pow(w.dim as u32)
        }
        KernelForm::Fourier(f) => {
            (2.0 * std::f64::consts::PI * (f.k.max(1) as f64).powf(1.0 / 6.0)).ceil() as usize
        }
        KernelForm::Convolution(c) => (1.0 / c.sigma.powf(1.0 / 6.0)).ceil().max(2.0) as usize,
        KernelForm::SplineGram(s) => {
            let intervals = s.space.mesh().len() - 1;
            n.min(intervals / 2).max(1)
        }
        KernelForm::Constant { .. } | KernelForm::Basis(_) => 1,
    }
}

/// Cell index per observation and cell counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinAssignment {
    pub indices: Vec<usize>,
    pub counts: Vec<usize>,
}

impl BinAssignment {
    /// Assignment with the given counts, observations listed cell by cell.
    pub fn from_counts(counts: Vec<usize>) -> Self {
        let indices = counts
            .iter()
            .enumerate()
            .flat_map(|(m, &c)| std::iter::repeat_n(m, c))
            .collect();
        BinAssignment { indices, counts }
    }

    pub fn n(&self) -> usize {
        self.indices.len()
    }
}

pub fn assign(partition: &Partition, sample: &Sample) -> Result<BinAssignment> {
    if sample.dim() != partition.dim() {
        return Err(Error::Data("sample and partition dimensions differ".into()));
    }
    let mut counts = vec![0; partition.cells()];
    let mut indices = Vec::with_capacity(sample.len());
    for r in 0..sample.len() {
        let p = sample.point(r);
        let m = partition
            .cell_of(p)
            .ok_or_else(|| Error::Uncovered(p.to_vec()))?;
        counts[m] += 1;
        indices.push(m);
    }
    Ok(BinAssignment { indices, counts })
}

/// Numerical values of the diagonal-concentration conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    /// `‖K‖` on `L₂(G)`.
    pub op_norm: f64,
    pub op_norm_converged: bool,
    pub k_n: f64,
    pub kn_over_n: f64,
    /// Share of `k_n` carried by `∪_m cell_m × cell_m`.
    pub diag_ratio: f64,
    /// Largest single-cell share of `k_n`.
    pub max_cell_ratio: f64,
    pub max_prob: f64,
    pub n_min_prob: f64,
    /// `k_n^{-q/2} max_m (p_m/n)^{q/2-1} Σ_m ∫∫_{m×m} |K|^q (μ_q×μ_q)`.
    pub lyapounov: f64,
    /// `max_m p_m · k_n / n`.
    pub simplified_12: f64,
    pub q_used: f64,
    pub cells: usize,
}

/// Cell-restricted integrals gathered in one pass over the grid kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMoments {
    pub probs: Vec<f64>,
    /// `∫∫_{m×m} K μ×μ dG×dG`.
    pub alpha: Vec<f64>,
    /// `∫∫_{m×m} K² μ₂×μ₂ dG×dG`.
    pub alpha2: Vec<f64>,
    /// `∫_m (∫_m K(x,z) μ(z) dG(z))² μ₂(x) dG(x)`.
    pub b: Vec<f64>,
    /// `∫∫_{m×m} |K|^q μ_q×μ_q dG×dG`.
    pub lyap: Vec<f64>,
    /// `k_n` over the whole square.
    pub k_n: f64,
}

struct RowStats {
    total: f64,
    alpha: f64,
    alpha2: f64,
    b: f64,
    lyap: f64,
}

impl CellMoments {
    pub fn compute(kernel: &KernelSpec, partition: &Partition, g: &MeasureModel) -> Result<Self> {
        if partition.domain != g.domain() {
            return Err(Error::GridMismatch("partition and measure domains differ".into()));
        }
        let grid = GridKernel::new(kernel, g)?;
        let cells = partition.node_cells(g);
        let (w, mu, mu2, muq, q) = (g.weights(), g.mu(), g.mu2(), g.muq(), g.q());
        let rows = grid.map_rows(|i, row, range| {
            let ci = cells[i];
            let (mut tot, mut a, mut a2, mut s, mut l) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for j in range {
                let kij = row[j];
                if kij == 0.0 {
                    continue;
                }
                let k2 = w[j] * mu2[j] * kij * kij;
                tot += k2;
                if cells[j] == ci {
                    a2 += k2;
                    s += w[j] * mu[j] * kij;
                    l += w[j] * muq[j] * kij.abs().powf(q);
                }
            }
            a += s * mu[i];
            RowStats {
                total: w[i] * mu2[i] * tot,
                alpha: w[i] * a,
                alpha2: w[i] * mu2[i] * a2,
                b: w[i] * mu2[i] * s * s,
                lyap: w[i] * muq[i] * l,
            }
        });
        let m = partition.cells();
        let mut per = vec![(Vec::new(), Vec::new(), Vec::new(), Vec::new()); m];
        for (i, r) in rows.iter().enumerate() {
            let c = &mut per[cells[i]];
            c.0.push(r.alpha);
            c.1.push(r.alpha2);
            c.2.push(r.b);
            c.3.push(r.lyap);
        }
        let totals: Vec<f64> = rows.iter().map(|r| r.total).collect();
        Ok(CellMoments {
            probs: partition.probs.clone(),
            alpha: per.iter().map(|c| pairwise_sum(&c.0)).collect(),
            alpha2: per.iter().map(|c| pairwise_sum(&c.1)).collect(),
            b: per.iter().map(|c| pairwise_sum(&c.2)).collect(),
            lyap: per.iter().map(|c| pairwise_sum(&c.3)).collect(),
            k_n: pairwise_sum(&totals),
        })
    }

    fn check_counts(&self, counts: &[usize]) -> Result<f64> {
        if counts.len() != self.probs.len() {
            return Err(invalid("count vector does not match the partition"));
        }
        for (m, &c) in counts.iter().enumerate() {
            if c > 0 && self.probs[m] <= 0.0 {
                return Err(Error::ZeroMassCell { cell: m, count: c });
            }
        }
        let n: usize = counts.iter().sum();
        if n < 2 {
            return Err(Error::InsufficientData(n));
        }
        Ok(n as f64 * (n as f64 - 1.0))
    }

    /// `E(V_n | I_n) = Σ_m N_m(N_m−1) α_m/p_m² / (n(n−1))`.
    pub fn conditional_mean(&self, counts: &[usize]) -> Result<f64> {
        let d = self.check_counts(counts)?;
        let terms: Vec<f64> = counts
            .iter()
            .enumerate()
            .map(|(m, &c)| {
                if c < 2 {
                    return 0.0;
                }
                let p = self.probs[m];
                let nn = c as f64 * (c as f64 - 1.0);
                nn * self.alpha[m] / (p * p)
            })
            .collect();
        Ok(pairwise_sum(&terms) / d)
    }

    /// `var(V_n | I_n)`: the cells are independent given the counts, and
    /// within cell `m` the statistic is a U-statistic of `N_m` draws from
    /// `G` restricted to the cell.
    pub fn conditional_variance(&self, counts: &[usize]) -> Result<f64> {
        let d = self.check_counts(counts)?;
        let terms: Vec<f64> = counts
            .iter()
            .enumerate()
            .map(|(m, &c)| {
                if c < 2 {
                    return 0.0;
                }
                let p = self.probs[m];
                let nm = c as f64;
                let dm = nm * (nm - 1.0);
                let mean = self.alpha[m] / (p * p);
                let lin = self.b[m] / (p * p * p);
                let kn = self.alpha2[m] / (p * p);
                let v = 4.0 * (nm - 2.0) / dm * lin - (4.0 * (nm - 2.0) + 2.0) / dm * mean * mean
                    + 2.0 * kn / dm;
                let f = dm / d;
                f * f * v
            })
            .collect();
        Ok(pairwise_sum(&terms).max(0.0))
    }
}

/// Evaluates the diagonal-concentration conditions for sample size `n`.
pub fn check_conditions(
    kernel: &KernelSpec,
    partition: &Partition,
    g: &MeasureModel,
    n: usize,
    q: f64,
) -> Result<ConditionReport> {
    if !(q > 2.0) {
        return Err(invalid(format!("q must exceed 2, got {q}")));
    }
    if (q - g.q()).abs() > 0.0 {
        return Err(invalid(format!(
            "q = {q} differs from the exponent {} of the measure's μ_q",
            g.q()
        )));
    }
    if n == 0 {
        return Err(Error::InsufficientData(0));
    }
    let op = operator_norm_estimate(kernel, g)?;
    let cm = CellMoments::compute(kernel, partition, g)?;
    let nf = n as f64;
    let k_n = cm.k_n;
    let diag = pairwise_sum(&cm.alpha2);
    let ratio = |v: f64| if k_n > 0.0 { v / k_n } else { 0.0 };
    let max_cell = cm.alpha2.iter().cloned().fold(0.0, f64::max);
    let max_prob = partition.probs.iter().cloned().fold(0.0, f64::max);
    let min_prob = partition.probs.iter().cloned().fold(f64::INFINITY, f64::min);
    let lyap_sum = pairwise_sum(&cm.lyap);
    let lyapounov = if k_n > 0.0 {
        (max_prob / nf).powf(q / 2.0 - 1.0) * lyap_sum / k_n.powf(q / 2.0)
    } else {
        0.0
    };
    Ok(ConditionReport {
        op_norm: op.value,
        op_norm_converged: op.converged,
        k_n,
        kn_over_n: k_n / nf,
        diag_ratio: ratio(diag),
        max_cell_ratio: ratio(max_cell),
        max_prob,
        n_min_prob: nf * min_prob,
        lyapounov,
        simplified_12: max_prob * k_n / nf,
        q_used: q,
        cells: partition.cells(),
    })
}

/// Exact unconditional variance of `V_n`, the U-statistic restricted to
/// same-cell pairs.
pub fn variance_restricted(
    kernel: &KernelSpec,
    partition: &Partition,
    g: &MeasureModel,
    n: usize,
) -> Result<crate::ustat::VarianceReport> {
    if partition.domain != g.domain() {
        return Err(Error::GridMismatch("partition and measure domains differ".into()));
    }
    let grid = GridKernel::new(kernel, g)?;
    crate::ustat::variance_exact_masked(&grid, g, n, &partition.node_cells(g))
}

/// Per-cell samplers for `G` restricted and renormalized to each cell.
#[derive(Debug, Clone)]
pub struct ConditionalSampler {
    dim: usize,
    samplers: Vec<NodeSampler>,
}

impl ConditionalSampler {
    pub fn new(partition: &Partition, g: &MeasureModel) -> Result<Self> {
        if partition.domain != g.domain() {
            return Err(Error::GridMismatch("partition and measure domains differ".into()));
        }
        let cells = partition.node_cells(g);
        let samplers = (0..partition.cells())
            .map(|m| {
                let (lo, hi) = partition.cell_box(m);
                g.sampler(&lo, &hi, |i| cells[i] == m)
            })
            .collect();
        Ok(ConditionalSampler {
            dim: g.dim(),
            samplers,
        })
    }

    /// Draws `X_r` from its assigned cell for every `r`, in index order.
    pub fn draw<R: Rng + ?Sized>(
        &self,
        bins: &BinAssignment,
        g: &MeasureModel,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        if bins.counts.len() != self.samplers.len() {
            return Err(invalid("assignment does not match the partition"));
        }
        for (m, &c) in bins.counts.iter().enumerate() {
            if c > 0 && self.samplers[m].mass() <= 0.0 {
                return Err(Error::ZeroMassCell { cell: m, count: c });
            }
        }
        let mut x = vec![0.0; bins.n() * self.dim];
        for (r, &m) in bins.indices.iter().enumerate() {
            self.samplers[m].draw(g, rng, &mut x[r * self.dim..(r + 1) * self.dim]);
        }
        Ok(x)
    }
}

/// Fresh x-values with the bin assignment held fixed.
pub fn conditional_resample<R: Rng + ?Sized>(
    partition: &Partition,
    bins: &BinAssignment,
    g: &MeasureModel,
    rng: &mut R,
) -> Result<Vec<f64>> {
    ConditionalSampler::new(partition, g)?.draw(bins, g, rng)
}

/// Multinomial count vector with cell probabilities `probs`.
pub fn multinomial_counts<R: Rng + ?Sized>(n: usize, probs: &[f64], rng: &mut R) -> Vec<usize> {
    let mut counts = vec![0; probs.len()];
    let mut left = n as u64;
    let mut mass: f64 = probs.iter().sum();
    for (m, &p) in probs.iter().enumerate() {
        if left == 0 {
            break;
        }
        if m + 1 == probs.len() || mass <= p {
            counts[m] = left as usize;
            break;
        }
        let frac = (p / mass).clamp(0.0, 1.0);
        let c = if frac > 0.0 {
            rand_distr::Distribution::sample(
                &rand_distr::Binomial::new(left, frac).expect("valid binomial"),
                rng,
            )
        } else {
            0
        };
        counts[m] = c as usize;
        left -= c;
        mass -= p;
    }
    counts
}
