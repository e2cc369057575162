//! Dyadic martingale difference sequences.
//!
//! Level `k ≥ 1` stores one vector `v_{k,j}` per level-`(k-1)` interval:
//! `d_k = +v_{k,j}` on the left child `Δ_k^{(2j)}` and `-v_{k,j}` on the right
//! child `Δ_k^{(2j+1)}`. The conditional mean of every `d_k` on its parent
//! block is therefore zero by construction.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dyadic::{StepFunction, DEFAULT_DEPTH_CAP, MAX_DEPTH};
use crate::error::{check_dim, Error, Result};
use crate::search::uniform_vector;
use crate::spaces::{LinearOperator, Norm};

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawSequence {
    dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    initial: Option<Vec<f64>>,
    levels: Vec<Vec<f64>>,
}

/// `d_0 ≡ initial` (optional) followed by the differences `d_1, …, d_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSequence", into = "RawSequence")]
pub struct DifferenceSequence {
    dim: usize,
    initial: Option<Vec<f64>>,
    /// `levels[k-1]` holds `2^{k-1}` vectors, flattened.
    levels: Vec<Vec<f64>>,
}

impl TryFrom<RawSequence> for DifferenceSequence {
    type Error = Error;

    fn try_from(raw: RawSequence) -> Result<Self> {
        DifferenceSequence::new(raw.dim, raw.initial, raw.levels)
    }
}

impl From<DifferenceSequence> for RawSequence {
    fn from(seq: DifferenceSequence) -> Self {
        RawSequence {
            dim: seq.dim,
            initial: seq.initial,
            levels: seq.levels,
        }
    }
}

/// Which function [`to_step`] materializes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    /// `d_k`
    Difference,
    /// `f_k = d_0 + … + d_k`
    PartialSum,
}

impl DifferenceSequence {
    pub fn new(dim: usize, initial: Option<Vec<f64>>, levels: Vec<Vec<f64>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Malformed("dimension must be positive".into()));
        }
        if levels.len() > MAX_DEPTH {
            return Err(Error::DepthOutOfRange {
                requested: levels.len(),
                limit: MAX_DEPTH,
            });
        }
        if let Some(x) = &initial {
            check_dim(dim, x.len())?;
        }
        for (k, level) in levels.iter().enumerate() {
            check_dim((1 << k) * dim, level.len())?;
        }
        let finite = initial
            .iter()
            .chain(&levels)
            .flatten()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Malformed(
                "non-finite entry in difference sequence".into(),
            ));
        }
        Ok(DifferenceSequence {
            dim,
            initial,
            levels,
        })
    }

    /// Depth 0, no initial term.
    pub fn empty(dim: usize) -> Self {
        DifferenceSequence {
            dim,
            initial: None,
            levels: Vec::new(),
        }
    }

    pub fn zeros(dim: usize, depth: usize) -> Self {
        DifferenceSequence {
            dim,
            initial: None,
            levels: (0..depth).map(|k| vec![0.0; (1 << k) * dim]).collect(),
        }
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn initial(&self) -> Option<&[f64]> {
        self.initial.as_deref()
    }

    /// Level `k ≥ 1`, flattened.
    pub fn level(&self, k: usize) -> &[f64] {
        &self.levels[k - 1]
    }

    pub fn level_vector(&self, k: usize, j: usize) -> &[f64] {
        &self.levels[k - 1][j * self.dim..(j + 1) * self.dim]
    }

    pub(crate) fn levels(&self) -> &[Vec<f64>] {
        &self.levels
    }

    pub(crate) fn level_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.levels[k - 1]
    }

    pub fn with_initial(mut self, x: Vec<f64>) -> Result<Self> {
        check_dim(self.dim, x.len())?;
        self.initial = Some(x);
        Ok(self)
    }

    pub fn without_initial(mut self) -> Self {
        self.initial = None;
        self
    }

    /// Appends zero levels up to `depth`; partial sums are unchanged.
    pub fn pad_to(mut self, depth: usize) -> Result<Self> {
        if depth < self.depth() || depth > MAX_DEPTH {
            return Err(Error::DepthOutOfRange {
                requested: depth,
                limit: MAX_DEPTH,
            });
        }
        for k in self.depth()..depth {
            self.levels.push(vec![0.0; (1 << k) * self.dim]);
        }
        Ok(self)
    }

    /// Drops trailing levels beyond `depth`.
    pub fn truncate(mut self, depth: usize) -> Self {
        self.levels.truncate(depth);
        self
    }

    pub fn scaled(&self, factor: f64) -> Self {
        DifferenceSequence {
            dim: self.dim,
            initial: self
                .initial
                .as_ref()
                .map(|x| x.iter().map(|v| v * factor).collect()),
            levels: self
                .levels
                .iter()
                .map(|l| l.iter().map(|v| v * factor).collect())
                .collect(),
        }
    }

    /// Flat leaf values of `f_k` at depth `k` (with `f_{-1} ≡ 0`).
    pub fn partial_sum_values(&self, k: usize) -> Vec<f64> {
        let m = self.dim;
        let mut cur = self.initial.clone().unwrap_or_else(|| vec![0.0; m]);
        for level in 1..=k.min(self.depth()) {
            let v = self.level(level);
            let mut next = vec![0.0; cur.len() * 2];
            for (j, parent) in cur.chunks(m).enumerate() {
                let d = &v[j * m..(j + 1) * m];
                for i in 0..m {
                    next[2 * j * m + i] = parent[i] + d[i];
                    next[(2 * j + 1) * m + i] = parent[i] - d[i];
                }
            }
            cur = next;
        }
        cur
    }

    /// Flat leaf values of `d_k` at depth `k`.
    pub fn difference_values(&self, k: usize) -> Vec<f64> {
        if k == 0 {
            return self.initial.clone().unwrap_or_else(|| vec![0.0; self.dim]);
        }
        let m = self.dim;
        let mut out = Vec::with_capacity((1 << k) * m);
        for v in self.level(k).chunks(m) {
            out.extend_from_slice(v);
            out.extend(v.iter().map(|x| -x));
        }
        out
    }

    /// `‖d_k‖_{L_p}^p = 2^{-(k-1)} Σ_j ‖v_{k,j}‖^p` for `k ≥ 1`, `‖d_0‖^p` for `k = 0`.
    pub fn difference_lp_pow(&self, k: usize, norm: &Norm, p: f64) -> f64 {
        if k == 0 {
            return self.initial.as_deref().map_or(0.0, |x| norm.eval_pow(x, p));
        }
        let level = self.level(k);
        let sum: f64 = level.chunks(self.dim).map(|v| norm.eval_pow(v, p)).sum();
        sum / (1u64 << (k - 1)) as f64
    }

    pub fn path(&self, space: &Norm) -> Result<MartingalePath> {
        let steps = (0..=self.depth())
            .map(|k| to_step(self, k, Part::PartialSum, space))
            .collect::<Result<Vec<_>>>()?;
        MartingalePath::new(steps)
    }
}

/// `f_0, …, f_n` with `f_k` of depth `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct MartingalePath {
    steps: Vec<StepFunction>,
}

impl MartingalePath {
    pub fn new(steps: Vec<StepFunction>) -> Result<Self> {
        let Some(first) = steps.first() else {
            return Err(Error::Malformed("a path needs f_0".into()));
        };
        let dim = first.dim();
        for (k, f) in steps.iter().enumerate() {
            if f.depth() != k {
                return Err(Error::Malformed(format!(
                    "f_{k} has depth {} instead of {k}",
                    f.depth()
                )));
            }
            check_dim(dim, f.dim())?;
        }
        Ok(MartingalePath { steps })
    }

    pub fn steps(&self) -> &[StepFunction] {
        &self.steps
    }

    pub fn depth(&self) -> usize {
        self.steps.len() - 1
    }
}

/// Materializes `d_k` or `f_k` as a depth-`k` step function on `space`.
pub fn to_step(
    seq: &DifferenceSequence,
    k: usize,
    part: Part,
    space: &Norm,
) -> Result<StepFunction> {
    if k > seq.depth() {
        return Err(Error::IndexOutOfRange {
            index: k,
            limit: seq.depth(),
        });
    }
    check_dim(seq.dim(), space.dim())?;
    let values = match part {
        Part::Difference => seq.difference_values(k),
        Part::PartialSum => seq.partial_sum_values(k),
    };
    StepFunction::from_flat(k, space.clone(), values)
}

/// Recovers the difference representation of a path, failing if some parent
/// value differs from the mean of its two children by more than `tol`.
pub fn validate(path: &MartingalePath, tol: f64) -> Result<DifferenceSequence> {
    let steps = path.steps();
    let m = steps[0].dim();
    let mut levels = Vec::with_capacity(path.depth());
    for k in 1..steps.len() {
        let (parent, child) = (&steps[k - 1], &steps[k]);
        let mut level = Vec::with_capacity(parent.flat().len());
        for j in 0..parent.leaves() {
            let (l, r, p) = (child.value(2 * j), child.value(2 * j + 1), parent.value(j));
            for i in 0..m {
                let deviation = ((l[i] + r[i]) / 2.0 - p[i]).abs();
                if !(deviation <= tol) {
                    return Err(Error::MartingaleViolation {
                        level: k,
                        index: j,
                        deviation,
                    });
                }
                level.push(l[i] - p[i]);
            }
        }
        levels.push(level);
    }
    DifferenceSequence::new(m, Some(steps[0].value(0).to_vec()), levels)
}

/// `d_0 ≡ x_0` and `d_k = x_k r_k`: level `k` repeats `x_k` at every position.
pub fn from_rademacher(xs: &[Vec<f64>]) -> Result<DifferenceSequence> {
    let Some(x0) = xs.first() else {
        return Err(Error::Malformed("need at least x_0".into()));
    };
    let m = x0.len();
    let mut levels = Vec::with_capacity(xs.len() - 1);
    for (k, x) in xs.iter().enumerate().skip(1) {
        check_dim(m, x.len())?;
        levels.push(x.repeat(1 << (k - 1)));
    }
    DifferenceSequence::new(m, Some(x0.clone()), levels)
}

/// Glues the sequences of `x_+` (on `[0, 1/2)`) and `x_-` (on `[1/2, 1)`)
/// behind a first difference `±(x_+ - x_-)/2`. The result has no initial
/// term; the caller attaches the midpoint `(x_+ + x_-)/2`.
pub fn glue(
    x_plus: &[f64],
    seq_plus: &DifferenceSequence,
    x_minus: &[f64],
    seq_minus: &DifferenceSequence,
) -> Result<DifferenceSequence> {
    let m = seq_plus.dim();
    check_dim(m, seq_minus.dim())?;
    check_dim(m, x_plus.len())?;
    check_dim(m, x_minus.len())?;
    if seq_plus.initial.is_some() || seq_minus.initial.is_some() {
        return Err(Error::UnexpectedInitial);
    }
    if seq_plus.depth() != seq_minus.depth() {
        return Err(Error::DepthOutOfRange {
            requested: seq_minus.depth(),
            limit: seq_plus.depth(),
        });
    }
    let mut levels = Vec::with_capacity(seq_plus.depth() + 1);
    levels.push(
        x_plus
            .iter()
            .zip(x_minus)
            .map(|(a, b)| (a - b) / 2.0)
            .collect(),
    );
    for (p, q) in seq_plus.levels.iter().zip(&seq_minus.levels) {
        let mut level = p.clone();
        level.extend_from_slice(q);
        levels.push(level);
    }
    DifferenceSequence::new(m, None, levels)
}

/// Maps every stored vector through `T`.
pub fn apply_operator(op: &LinearOperator, seq: &DifferenceSequence) -> Result<DifferenceSequence> {
    check_dim(op.domain_dim(), seq.dim())?;
    let map_flat =
        |flat: &[f64]| -> Vec<f64> { flat.chunks(seq.dim()).flat_map(|v| op.apply(v)).collect() };
    DifferenceSequence::new(
        op.codomain_dim(),
        seq.initial.as_ref().map(|x| op.apply(x)),
        seq.levels.iter().map(|l| map_flat(l)).collect(),
    )
}

/// Levels drawn uniformly from `[-scale, scale]^dim`, no initial term.
pub fn random_sequence(
    seed: u64,
    depth: usize,
    dim: usize,
    scale: f64,
) -> Result<DifferenceSequence> {
    if depth > DEFAULT_DEPTH_CAP {
        return Err(Error::DepthOutOfRange {
            requested: depth,
            limit: DEFAULT_DEPTH_CAP,
        });
    }
    if dim == 0 || !(scale.is_finite() && scale >= 0.0) {
        return Err(Error::Malformed(format!("dim {dim}, scale {scale}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let levels = (0..depth)
        .map(|k| uniform_vector(&mut rng, (1 << k) * dim, scale))
        .collect();
    DifferenceSequence::new(dim, None, levels)
}

/// As [`random_sequence`], with `d_0` drawn from the same distribution.
pub fn random_sequence_with_initial(
    seed: u64,
    depth: usize,
    dim: usize,
    scale: f64,
) -> Result<DifferenceSequence> {
    let seq = random_sequence(seed, depth, dim, scale)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9E37_79B9_7F4A_7C15);
    let x = uniform_vector(&mut rng, dim, scale);
    seq.with_initial(x)
}
