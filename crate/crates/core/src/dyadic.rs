//! Dyadic intervals and functions on `[0, 1)` that are constant on the
//! intervals of one level.
//!
//! Integrals are finite weighted sums over leaves, so `L_p` norms, pairings
//! and conditional expectations are exact up to floating-point rounding.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::spaces::{dot, Norm};

/// Hard memory guard on the number of leaves (`2^MAX_DEPTH`).
pub const MAX_DEPTH: usize = 24;

/// Default depth cap used by generators and searches.
pub const DEFAULT_DEPTH_CAP: usize = 12;

/// `[index / 2^level, (index + 1) / 2^level)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DyadicInterval {
    level: usize,
    index: usize,
}

impl DyadicInterval {
    pub fn new(level: usize, index: usize) -> Result<Self> {
        if level > MAX_DEPTH {
            return Err(Error::DepthOutOfRange {
                requested: level,
                limit: MAX_DEPTH,
            });
        }
        if index >= 1 << level {
            return Err(Error::IndexOutOfRange {
                index,
                limit: 1 << level,
            });
        }
        Ok(DyadicInterval { level, index })
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn length(&self) -> f64 {
        (-(self.level as f64)).exp2()
    }

    pub fn start(&self) -> f64 {
        self.index as f64 * self.length()
    }

    pub fn end(&self) -> f64 {
        (self.index + 1) as f64 * self.length()
    }

    pub fn contains(&self, t: f64) -> bool {
        self.start() <= t && t < self.end()
    }

    /// Left and right halves.
    pub fn children(&self) -> (DyadicInterval, DyadicInterval) {
        let level = self.level + 1;
        (
            DyadicInterval {
                level,
                index: 2 * self.index,
            },
            DyadicInterval {
                level,
                index: 2 * self.index + 1,
            },
        )
    }

    pub fn parent(&self) -> Option<DyadicInterval> {
        (self.level > 0).then(|| DyadicInterval {
            level: self.level - 1,
            index: self.index / 2,
        })
    }
}

fn check_exponent(p: f64) -> Result<()> {
    if !p.is_finite() {
        return Err(Error::InvalidExponent {
            value: p,
            reason: "L_p norms are only defined here for finite p",
        });
    }
    if !(p >= 1.0) {
        return Err(Error::InvalidExponent {
            value: p,
            reason: "L_p norms need p >= 1",
        });
    }
    Ok(())
}

/// A function `[0, 1) → R^m`, constant on each `Δ_depth^{(i)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction {
    depth: usize,
    dim: usize,
    /// Leaf `i` occupies `values[i*dim .. (i+1)*dim]`.
    values: Vec<f64>,
    space: Norm,
}

impl StepFunction {
    /// Builds from a flat leaf-major buffer of `2^depth * space.dim()` values.
    pub fn from_flat(depth: usize, space: Norm, values: Vec<f64>) -> Result<Self> {
        if depth > MAX_DEPTH {
            return Err(Error::DepthOutOfRange {
                requested: depth,
                limit: MAX_DEPTH,
            });
        }
        let dim = space.dim();
        check_dim((1 << depth) * dim, values.len())?;
        Ok(StepFunction {
            depth,
            dim,
            values,
            space,
        })
    }

    pub fn new(depth: usize, space: Norm, leaves: &[Vec<f64>]) -> Result<Self> {
        check_dim(1 << depth.min(MAX_DEPTH), leaves.len())?;
        let mut flat = Vec::with_capacity(leaves.len() * space.dim());
        for leaf in leaves {
            check_dim(space.dim(), leaf.len())?;
            flat.extend_from_slice(leaf);
        }
        Self::from_flat(depth, space, flat)
    }

    pub fn constant(space: Norm, x: &[f64]) -> Result<Self> {
        check_dim(space.dim(), x.len())?;
        Self::from_flat(0, space, x.to_vec())
    }

    pub fn zero(depth: usize, space: Norm) -> Result<Self> {
        let n = (1usize << depth.min(MAX_DEPTH)) * space.dim();
        Self::from_flat(depth, space, vec![0.0; n])
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn space(&self) -> &Norm {
        &self.space
    }

    pub fn leaves(&self) -> usize {
        1 << self.depth
    }

    pub fn flat(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, leaf: usize) -> &[f64] {
        &self.values[leaf * self.dim..(leaf + 1) * self.dim]
    }

    /// The value at `t ∈ [0, 1)`.
    pub fn at(&self, t: f64) -> &[f64] {
        let i = ((t * self.leaves() as f64) as usize).min(self.leaves() - 1);
        self.value(i)
    }

    /// The same function viewed on a different normed space of equal dimension.
    pub fn with_space(mut self, space: Norm) -> Result<Self> {
        check_dim(self.dim, space.dim())?;
        self.space = space;
        Ok(self)
    }

    /// `2^{-n} Σ_i ‖v_i‖^p`, i.e. `‖f‖_{L_p}^p`.
    pub fn lp_norm_pow(&self, p: f64) -> Result<f64> {
        check_exponent(p)?;
        let sum: f64 = self
            .values
            .chunks(self.dim)
            .map(|v| self.space.eval_pow(v, p))
            .sum();
        Ok(sum / self.leaves() as f64)
    }

    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        Ok(self.lp_norm_pow(p)?.powf(p.recip()))
    }

    /// `L_p` norm taken with the dual of this function's space norm.
    pub fn dual_lp_norm(&self, p: f64) -> Result<f64> {
        check_exponent(p)?;
        let dual = self.space.dual()?;
        let sum: f64 = self
            .values
            .chunks(self.dim)
            .map(|v| dual.eval_pow(v, p))
            .sum();
        Ok((sum / self.leaves() as f64).powf(p.recip()))
    }

    /// Duplicates every value down to depth `n`.
    pub fn refine(&self, n: usize) -> Result<StepFunction> {
        if n < self.depth || n > MAX_DEPTH {
            return Err(Error::DepthOutOfRange {
                requested: n,
                limit: if n < self.depth {
                    self.depth
                } else {
                    MAX_DEPTH
                },
            });
        }
        let shift = n - self.depth;
        let mut values = Vec::with_capacity(self.values.len() << shift);
        for leaf in self.values.chunks(self.dim) {
            for _ in 0..1usize << shift {
                values.extend_from_slice(leaf);
            }
        }
        StepFunction::from_flat(n, self.space.clone(), values)
    }

    /// `E(f | F_k)`: block means over the level-`k` intervals.
    pub fn cond_expect(&self, k: usize) -> Result<StepFunction> {
        if k > self.depth {
            return Err(Error::DepthOutOfRange {
                requested: k,
                limit: self.depth,
            });
        }
        let block = 1usize << (self.depth - k);
        let mut values = vec![0.0; (1 << k) * self.dim];
        for (j, out) in values.chunks_mut(self.dim).enumerate() {
            for leaf in j * block..(j + 1) * block {
                for (o, v) in out.iter_mut().zip(self.value(leaf)) {
                    *o += v;
                }
            }
            for o in out.iter_mut() {
                *o /= block as f64;
            }
        }
        StepFunction::from_flat(k, self.space.clone(), values)
    }

    /// The integral `∫ f`.
    pub fn mean(&self) -> Vec<f64> {
        self.cond_expect(0)
            .map(|f| f.values)
            .unwrap_or_else(|_| vec![0.0; self.dim])
    }

    /// Pointwise `a·self + b·other` at the finer of the two depths.
    pub fn combine(&self, a: f64, other: &StepFunction, b: f64) -> Result<StepFunction> {
        check_dim(self.dim, other.dim)?;
        let depth = self.depth.max(other.depth);
        let leaves = 1usize << depth;
        let (sa, sb) = (depth - self.depth, depth - other.depth);
        let mut values = Vec::with_capacity(leaves * self.dim);
        for i in 0..leaves {
            let (u, v) = (self.value(i >> sa), other.value(i >> sb));
            values.extend(u.iter().zip(v).map(|(u, v)| a * u + b * v));
        }
        StepFunction::from_flat(depth, self.space.clone(), values)
    }

    pub fn add(&self, other: &StepFunction) -> Result<StepFunction> {
        self.combine(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &StepFunction) -> Result<StepFunction> {
        self.combine(1.0, other, -1.0)
    }
}

/// `⟨f, g⟩ = ∫ ⟨f(t), g(t)⟩ dt`, computed at the common depth.
pub fn pairing(f: &StepFunction, g: &StepFunction) -> Result<f64> {
    check_dim(f.dim, g.dim)?;
    let depth = f.depth.max(g.depth);
    let (sf, sg) = (depth - f.depth, depth - g.depth);
    let sum: f64 = (0..1usize << depth)
        .map(|i| dot(f.value(i >> sf), g.value(i >> sg)))
        .sum();
    Ok(sum / (1u64 << depth) as f64)
}

/// Free-function form of [`StepFunction::lp_norm`].
pub fn lp_norm(f: &StepFunction, p: f64) -> Result<f64> {
    f.lp_norm(p)
}

/// Free-function form of [`StepFunction::cond_expect`].
pub fn cond_expect(f: &StepFunction, k: usize) -> Result<StepFunction> {
    f.cond_expect(k)
}

/// Free-function form of [`StepFunction::refine`].
pub fn refine(f: &StepFunction, n: usize) -> Result<StepFunction> {
    f.refine(n)
}
