//! Block-structured decision space `X = X_1 × … × X_b`.
//!
//! Each block carries a closed convex set and a distance-generating function
//! (DGF). The DGF induces the block Bregman divergence
//! `D_s(x, y) = Φ_s(x) − Φ_s(y) − ⟨∇Φ_s(y), x − y⟩` and the block Bregman
//! projection
//!
//! ```text
//! Π_s(x, g, α) = argmin_{y ∈ X_s} ⟨g, y⟩ + (1/α)·D_s(y, x)
//! ```
//!
//! Only closed-form projections are provided: Euclidean DGF on boxes, balls and
//! simplices, and the entropy DGF on the simplex (multiplicative weights).
//!
//! Blocks are addressed as `(offset, size)` slices of a full `n`-vector; the
//! block selection matrices are never materialised.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::{dot, norm1, norm2, norm2_sq};
use crate::{Error, Result};

/// Relative tolerance used when checking feasibility of inputs.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Coordinates of entropy/simplex projections are floored here (then
/// renormalised) so `∇Φ` stays finite.
pub const INTERIOR_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum FeasibleSet {
    /// `lo ≤ y ≤ hi` componentwise. Infinite bounds are allowed but make the
    /// block unbounded.
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// The probability simplex `{y ≥ 0, Σ y = 1}`.
    Simplex,
    /// Centered Euclidean ball `‖y‖ ≤ radius`.
    Ball { radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Dgf {
    /// `Φ(y) = ½‖y‖²`.
    Euclidean,
    /// `Φ(y) = Σ y_j ln y_j`, 1-strongly convex w.r.t. `ℓ1` on the simplex.
    Entropy,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FeasibleBlock {
    pub set: FeasibleSet,
    pub dgf: Dgf,
}

/// Upper bounds `d_s²` on the block divergences.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BlockDiameter {
    pub d_squared: Vec<f64>,
}

impl BlockDiameter {
    pub fn total(&self) -> f64 {
        self.d_squared.iter().sum()
    }
}

fn tol(scale: f64) -> f64 {
    FEASIBILITY_TOL * scale.abs().max(1.0)
}

impl FeasibleBlock {
    pub fn euclidean_box(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        FeasibleBlock {
            set: FeasibleSet::Box { lo, hi },
            dgf: Dgf::Euclidean,
        }
    }

    pub fn euclidean_ball(radius: f64) -> Self {
        FeasibleBlock {
            set: FeasibleSet::Ball { radius },
            dgf: Dgf::Euclidean,
        }
    }

    pub fn simplex(dgf: Dgf) -> Self {
        FeasibleBlock {
            set: FeasibleSet::Simplex,
            dgf,
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if dim == 0 {
            return Err(Error::invalid("block dimension must be positive"));
        }
        match &self.set {
            FeasibleSet::Box { lo, hi } => {
                if lo.len() != dim || hi.len() != dim {
                    return Err(Error::invalid("box bounds must match the block dimension"));
                }
                // Degenerate boxes (lo == hi) are single points and stay valid.
                if lo.iter().zip(hi).any(|(l, h)| l.is_nan() || h.is_nan() || l > h) {
                    return Err(Error::invalid("box requires lo <= hi componentwise"));
                }
            }
            FeasibleSet::Ball { radius } => {
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(Error::invalid("ball radius must be positive and finite"));
                }
            }
            FeasibleSet::Simplex => {}
        }
        if self.dgf == Dgf::Entropy && self.set != FeasibleSet::Simplex {
            return Err(Error::invalid("entropy DGF is only supported on the simplex"));
        }
        Ok(())
    }

    /// Membership test within [`FEASIBILITY_TOL`].
    pub fn contains(&self, x: &[f64]) -> bool {
        if x.iter().any(|v| !v.is_finite()) {
            return false;
        }
        match &self.set {
            FeasibleSet::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(&v, (&l, &h))| v >= l - tol(l) && v <= h + tol(h)),
            FeasibleSet::Ball { radius } => norm2(x) <= radius * (1.0 + FEASIBILITY_TOL),
            FeasibleSet::Simplex => {
                let sum: f64 = x.iter().sum();
                x.iter().all(|&v| v >= -FEASIBILITY_TOL)
                    && (sum - 1.0).abs() <= FEASIBILITY_TOL * (x.len() as f64).max(1.0)
            }
        }
    }

    /// Norm in which the DGF is 1-strongly convex (`ℓ2` or `ℓ1`).
    pub fn strong_convexity_norm(&self, v: &[f64]) -> f64 {
        match self.dgf {
            Dgf::Euclidean => norm2(v),
            Dgf::Entropy => norm1(v),
        }
    }

    /// Dual of [`strong_convexity_norm`](Self::strong_convexity_norm).
    pub fn dual_norm(&self, v: &[f64]) -> f64 {
        match self.dgf {
            Dgf::Euclidean => norm2(v),
            Dgf::Entropy => v.iter().fold(0.0, |m, x| m.max(x.abs())),
        }
    }

    pub fn dgf_value(&self, y: &[f64]) -> Result<f64> {
        match self.dgf {
            Dgf::Euclidean => Ok(0.5 * norm2_sq(y)),
            Dgf::Entropy => {
                let mut acc = 0.0;
                for &v in y {
                    if v < 0.0 {
                        return Err(Error::Domain("entropy of a negative coordinate"));
                    }
                    if v > 0.0 {
                        acc += v * v.ln();
                    }
                }
                Ok(acc)
            }
        }
    }

    pub fn dgf_grad_into(&self, y: &[f64], out: &mut [f64]) -> Result<()> {
        match self.dgf {
            Dgf::Euclidean => out.copy_from_slice(y),
            Dgf::Entropy => {
                for (o, &v) in out.iter_mut().zip(y) {
                    if v <= 0.0 {
                        return Err(Error::Domain("entropy gradient needs positive coordinates"));
                    }
                    *o = 1.0 + v.ln();
                }
            }
        }
        Ok(())
    }

    /// Bregman divergence without feasibility checks.
    fn divergence(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        match self.dgf {
            Dgf::Euclidean => Ok(0.5
                * x.iter()
                    .zip(y)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()),
            Dgf::Entropy => {
                // Generalised KL; equals KL on the simplex.
                let mut acc = 0.0;
                for (&a, &b) in x.iter().zip(y) {
                    if b <= 0.0 {
                        return Err(Error::Domain("entropy divergence needs y > 0"));
                    }
                    if a > 0.0 {
                        acc += a * (a / b).ln() - a + b;
                    } else {
                        acc += b;
                    }
                }
                Ok(acc.max(0.0))
            }
        }
    }

    /// Euclidean projection of `v` onto the set, written to `out`.
    pub fn project_euclidean_into(&self, v: &[f64], out: &mut [f64]) {
        match &self.set {
            FeasibleSet::Box { lo, hi } => {
                for ((o, &x), (&l, &h)) in out.iter_mut().zip(v).zip(lo.iter().zip(hi)) {
                    *o = x.max(l).min(h);
                }
            }
            FeasibleSet::Ball { radius } => {
                let nrm = norm2(v);
                let scale = if nrm > *radius { radius / nrm } else { 1.0 };
                for (o, &x) in out.iter_mut().zip(v) {
                    *o = x * scale;
                }
            }
            FeasibleSet::Simplex => project_simplex_into(v, out),
        }
    }

    /// Block Bregman projection `Π(x, g, α)` into `out`; no input checks.
    fn prox_into(&self, x: &[f64], g: &[f64], alpha: f64, out: &mut [f64]) {
        match self.dgf {
            Dgf::Euclidean => {
                for ((o, &xv), &gv) in out.iter_mut().zip(x).zip(g) {
                    *o = xv - alpha * gv;
                }
                // In-place: Euclidean projection only reads each coordinate
                // before writing it for boxes and balls; simplex copies.
                let step: Vec<f64> = out.to_vec();
                self.project_euclidean_into(&step, out);
            }
            Dgf::Entropy => entropic_step_into(x, g, alpha, out),
        }
    }

    fn diameter_sq(&self, dim: usize, index: usize) -> Result<f64> {
        match (&self.set, self.dgf) {
            (FeasibleSet::Box { lo, hi }, _) => {
                let mut acc = 0.0;
                for (l, h) in lo.iter().zip(hi) {
                    let w = h - l;
                    if !w.is_finite() {
                        return Err(Error::Unbounded { block: index });
                    }
                    acc += w * w;
                }
                Ok(0.5 * acc)
            }
            (FeasibleSet::Ball { radius }, _) => Ok(2.0 * radius * radius),
            (FeasibleSet::Simplex, _) if dim == 1 => Ok(0.0),
            (FeasibleSet::Simplex, Dgf::Euclidean) => Ok(1.0),
            // KL is unbounded at the boundary; with second arguments floored at
            // INTERIOR_FLOOR it is at most ln(1/floor).
            (FeasibleSet::Simplex, Dgf::Entropy) => Ok((1.0 / INTERIOR_FLOOR).ln()),
        }
    }

    /// Draw a random feasible point. Boxes sample uniformly, balls uniformly
    /// in volume, simplices from the flat Dirichlet.
    pub fn sample<R: Rng + ?Sized>(&self, dim: usize, rng: &mut R) -> Result<Vec<f64>> {
        match &self.set {
            FeasibleSet::Box { lo, hi } => lo
                .iter()
                .zip(hi)
                .map(|(&l, &h)| {
                    if !(h - l).is_finite() {
                        Err(Error::Unsupported("sampling from an unbounded box"))
                    } else {
                        Ok(l + (h - l) * rng.random::<f64>())
                    }
                })
                .collect(),
            FeasibleSet::Ball { radius } => {
                let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
                let nrm = norm2(&v).max(f64::MIN_POSITIVE);
                let r = radius * rng.random::<f64>().powf(1.0 / dim as f64);
                v.iter_mut().for_each(|c| *c *= r / nrm);
                Ok(v)
            }
            FeasibleSet::Simplex => {
                let mut v: Vec<f64> = (0..dim)
                    .map(|_| -(1.0 - rng.random::<f64>()).ln() + INTERIOR_FLOOR)
                    .collect();
                let s: f64 = v.iter().sum();
                v.iter_mut().for_each(|c| *c /= s);
                Ok(v)
            }
        }
    }
}

/// Sort-based Euclidean projection onto the probability simplex.
fn project_simplex_into(v: &[f64], out: &mut [f64]) {
    let mut u = v.to_vec();
    u.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumsum += uj;
        let t = (cumsum - 1.0) / (j as f64 + 1.0);
        if uj - t > 0.0 {
            tau = t;
        }
    }
    for (o, &x) in out.iter_mut().zip(v) {
        *o = (x - tau).max(0.0);
    }
}

/// Multiplicative-weights step `y ∝ x·exp(−α g)` with an interiority floor.
fn entropic_step_into(x: &[f64], g: &[f64], alpha: f64, out: &mut [f64]) {
    let mut max_w = f64::NEG_INFINITY;
    for ((o, &xv), &gv) in out.iter_mut().zip(x).zip(g) {
        *o = if xv > 0.0 {
            xv.ln() - alpha * gv
        } else {
            f64::NEG_INFINITY
        };
        max_w = max_w.max(*o);
    }
    let mut z = 0.0;
    for o in out.iter_mut() {
        *o = (*o - max_w).exp();
        z += *o;
    }
    let mut z2 = 0.0;
    for o in out.iter_mut() {
        *o = (*o / z).max(INTERIOR_FLOOR);
        z2 += *o;
    }
    for o in out.iter_mut() {
        *o /= z2;
    }
}

/// Partition of `R^n` into `b` blocks with per-block geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSpec {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
    total_dim: usize,
    blocks: Vec<FeasibleBlock>,
}

impl BlockSpec {
    pub fn new(sizes: Vec<usize>, blocks: Vec<FeasibleBlock>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::invalid("at least one block is required"));
        }
        if sizes.len() != blocks.len() {
            return Err(Error::invalid("one feasible block per size is required"));
        }
        for (&n, block) in sizes.iter().zip(&blocks) {
            block.validate(n)?;
        }
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut acc = 0;
        for &n in &sizes {
            offsets.push(acc);
            acc += n;
        }
        Ok(BlockSpec {
            sizes,
            offsets,
            total_dim: acc,
            blocks,
        })
    }

    /// Every block a Euclidean box `[lo, hi]^{n_s}`.
    pub fn uniform_box(sizes: &[usize], lo: f64, hi: f64) -> Result<Self> {
        let blocks = sizes
            .iter()
            .map(|&n| FeasibleBlock::euclidean_box(vec![lo; n], vec![hi; n]))
            .collect();
        BlockSpec::new(sizes.to_vec(), blocks)
    }

    pub fn num_blocks(&self) -> usize {
        self.sizes.len()
    }

    pub fn dim(&self) -> usize {
        self.total_dim
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn blocks(&self) -> &[FeasibleBlock] {
        &self.blocks
    }

    pub fn block(&self, s: usize) -> Result<&FeasibleBlock> {
        self.blocks.get(s).ok_or(Error::BlockIndex {
            index: s,
            count: self.blocks.len(),
        })
    }

    pub fn range(&self, s: usize) -> Result<Range<usize>> {
        self.block(s)?;
        Ok(self.offsets[s]..self.offsets[s] + self.sizes[s])
    }

    /// `x^{(s)}`.
    pub fn slice<'a>(&self, x: &'a [f64], s: usize) -> Result<&'a [f64]> {
        self.check_full(x)?;
        Ok(&x[self.range(s)?])
    }

    pub fn slice_mut<'a>(&self, x: &'a mut [f64], s: usize) -> Result<&'a mut [f64]> {
        self.check_full(x)?;
        let r = self.range(s)?;
        Ok(&mut x[r])
    }

    /// Concatenate per-block parts into a full vector.
    pub fn assemble(&self, parts: &[&[f64]]) -> Result<Vec<f64>> {
        if parts.len() != self.num_blocks() {
            return Err(Error::DimensionMismatch {
                expected: self.num_blocks(),
                found: parts.len(),
            });
        }
        let mut out = Vec::with_capacity(self.total_dim);
        for (part, &n) in parts.iter().zip(&self.sizes) {
            if part.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: part.len(),
                });
            }
            out.extend_from_slice(part);
        }
        Ok(out)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.total_dim
            && self
                .blocks
                .iter()
                .enumerate()
                .all(|(s, b)| b.contains(&x[self.offsets[s]..self.offsets[s] + self.sizes[s]]))
    }

    fn check_full(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.total_dim {
            return Err(Error::DimensionMismatch {
                expected: self.total_dim,
                found: x.len(),
            });
        }
        Ok(())
    }

    fn check_block(&self, s: usize, x: &[f64]) -> Result<&FeasibleBlock> {
        let block = self.block(s)?;
        if x.len() != self.sizes[s] {
            return Err(Error::DimensionMismatch {
                expected: self.sizes[s],
                found: x.len(),
            });
        }
        Ok(block)
    }

    fn check_feasible(&self, s: usize, x: &[f64]) -> Result<&FeasibleBlock> {
        let block = self.check_block(s, x)?;
        if !block.contains(x) {
            return Err(Error::Infeasible { block: s });
        }
        Ok(block)
    }

    /// `D_s(x, y)` for block vectors `x, y ∈ X_s`.
    pub fn bregman_div(&self, s: usize, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check_feasible(s, x)?;
        let block = self.check_feasible(s, y)?;
        block.divergence(x, y)
    }

    /// `∇Φ_s(y)`.
    pub fn grad_dgf(&self, s: usize, y: &[f64]) -> Result<Vec<f64>> {
        let block = self.check_feasible(s, y)?;
        let mut out = vec![0.0; y.len()];
        block.dgf_grad_into(y, &mut out)?;
        Ok(out)
    }

    /// `Π_s(x, g, α)`.
    pub fn block_project(&self, s: usize, x: &[f64], g: &[f64], alpha: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; x.len()];
        self.block_project_into(s, x, g, alpha, &mut out)?;
        Ok(out)
    }

    pub fn block_project_into(
        &self,
        s: usize,
        x: &[f64],
        g: &[f64],
        alpha: f64,
        out: &mut [f64],
    ) -> Result<()> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::invalid("projection step must be positive"));
        }
        let block = self.check_feasible(s, x)?;
        for v in [g, &*out] {
            if v.len() != x.len() {
                return Err(Error::DimensionMismatch {
                    expected: x.len(),
                    found: v.len(),
                });
            }
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite subgradient"));
        }
        block.prox_into(x, g, alpha, out);
        Ok(())
    }

    /// Apply the block projection independently on every block.
    pub fn full_project(&self, x: &[f64], g: &[f64], alpha: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.total_dim];
        self.full_project_into(x, g, alpha, &mut out)?;
        Ok(out)
    }

    pub fn full_project_into(&self, x: &[f64], g: &[f64], alpha: f64, out: &mut [f64]) -> Result<()> {
        self.check_full(x)?;
        self.check_full(g)?;
        self.check_full(out)?;
        for s in 0..self.num_blocks() {
            let r = self.offsets[s]..self.offsets[s] + self.sizes[s];
            self.block_project_into(s, &x[r.clone()], &g[r.clone()], alpha, &mut out[r])?;
        }
        Ok(())
    }

    /// Analytic `d_s²` with `D_s(x, y) ≤ d_s²` on every block.
    pub fn diameter_bound(&self) -> Result<BlockDiameter> {
        let d_squared = self
            .blocks
            .iter()
            .zip(&self.sizes)
            .enumerate()
            .map(|(s, (b, &n))| b.diameter_sq(n, s))
            .collect::<Result<Vec<_>>>()?;
        Ok(BlockDiameter { d_squared })
    }

    /// Random feasible full vector.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.total_dim);
        for (b, &n) in self.blocks.iter().zip(&self.sizes) {
            out.extend(b.sample(n, rng)?);
        }
        Ok(out)
    }

    /// Both sides of the three-point identity
    /// `⟨∇Φ(x) − ∇Φ(y), y − z⟩ = D(z, x) − D(z, y) − D(y, x)`.
    pub fn three_point_sides(&self, s: usize, x: &[f64], y: &[f64], z: &[f64]) -> Result<(f64, f64)> {
        let gx = self.grad_dgf(s, x)?;
        let gy = self.grad_dgf(s, y)?;
        let lhs: f64 = gx
            .iter()
            .zip(&gy)
            .zip(y.iter().zip(z))
            .map(|((a, b), (yv, zv))| (a - b) * (yv - zv))
            .sum();
        let rhs = self.bregman_div(s, z, x)? - self.bregman_div(s, z, y)? - self.bregman_div(s, y, x)?;
        Ok((lhs, rhs))
    }

    /// Left-hand side of the first-order optimality condition of the block
    /// projection, `⟨α g + ∇Φ(y*) − ∇Φ(x), z − y*⟩`, at a probe `z`.
    pub fn optimality_residual(
        &self,
        s: usize,
        x: &[f64],
        g: &[f64],
        alpha: f64,
        projected: &[f64],
        probe: &[f64],
    ) -> Result<f64> {
        let block = self.check_block(s, x)?;
        let n = x.len();
        let mut gy = vec![0.0; n];
        let mut gx = vec![0.0; n];
        block.dgf_grad_into(projected, &mut gy)?;
        block.dgf_grad_into(x, &mut gx)?;
        let lhs: Vec<f64> = (0..n).map(|j| alpha * g[j] + gy[j] - gx[j]).collect();
        let diff: Vec<f64> = probe.iter().zip(projected).map(|(z, y)| z - y).collect();
        Ok(dot(&lhs, &diff))
    }
}
