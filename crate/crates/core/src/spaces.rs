//! Finite-dimensional normed spaces and linear maps between them.
//!
//! The norm catalog is closed: weighted `ℓ_p` (`1 ≤ p < ∞`), Euclidean,
//! weighted sup, and symmetric polyhedral norms `max_i |⟨a_i, x⟩|`. Every
//! member has an exact dual in the catalog, so adjoints of operators are
//! always available.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::moduli::{ConstantEstimate, ConstantKind, Witness};
use crate::search::{self, SearchOptions, VectorObjective};

/// Upper bound on `C(r, m) · 2^m` linear solves when enumerating the vertices
/// of a polyhedral unit ball.
const MAX_VERTEX_SOLVES: u64 = 2_000_000;

/// Dual exponent `p'` with `1/p + 1/p' = 1`; `p = 1` maps to infinity.
pub fn dual_exponent(p: f64) -> f64 {
    if p == 1.0 {
        f64::INFINITY
    } else if p.is_infinite() {
        1.0
    } else {
        p / (p - 1.0)
    }
}

/// The parametric family a [`Norm`] belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NormKind {
    /// `(Σ w_i |x_i|^p)^{1/p}`.
    Lp {
        p: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
    },
    Euclidean,
    /// `max_i w_i |x_i|`.
    Sup {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
    },
    /// `max_i |⟨a_i, x⟩|`; the functionals must span the dual space.
    Polyhedral {
        functionals: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct NormSpec {
    #[serde(flatten)]
    kind: NormKind,
    dim: usize,
}

/// An evaluable norm on `R^dim`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "NormSpec", into = "NormSpec")]
pub struct Norm {
    kind: NormKind,
    dim: usize,
    /// Cached dual for polyhedral norms (vertex enumeration is not cheap).
    polyhedral_dual: Option<Arc<Vec<Vec<f64>>>>,
}

impl PartialEq for Norm {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.kind == other.kind
    }
}

impl TryFrom<NormSpec> for Norm {
    type Error = Error;

    fn try_from(spec: NormSpec) -> Result<Self> {
        Norm::new(spec.kind, spec.dim)
    }
}

impl From<Norm> for NormSpec {
    fn from(norm: Norm) -> Self {
        NormSpec {
            kind: norm.kind,
            dim: norm.dim,
        }
    }
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let weighted = |w: &Option<Vec<f64>>| if w.is_some() { "weighted " } else { "" };
        match &self.kind {
            NormKind::Lp { p, weights } => write!(f, "{}l_{}^{}", weighted(weights), p, self.dim),
            NormKind::Euclidean => write!(f, "l_2^{}", self.dim),
            NormKind::Sup { weights } => write!(f, "{}l_inf^{}", weighted(weights), self.dim),
            NormKind::Polyhedral { functionals } => {
                write!(
                    f,
                    "polyhedral({} functionals)^{}",
                    functionals.len(),
                    self.dim
                )
            }
        }
    }
}

fn check_weights(weights: &Option<Vec<f64>>, dim: usize) -> Result<()> {
    if let Some(w) = weights {
        check_dim(dim, w.len())?;
        if let Some(bad) = w.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::InvalidNorm(format!("nonpositive weight {bad}")));
        }
    }
    Ok(())
}

impl Norm {
    pub fn new(kind: NormKind, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidNorm("dimension must be positive".into()));
        }
        let mut polyhedral_dual = None;
        match &kind {
            NormKind::Lp { p, weights } => {
                if !(p.is_finite() && *p >= 1.0) {
                    return Err(Error::InvalidExponent {
                        value: *p,
                        reason: "lp norms need 1 <= p < inf (use sup for p = inf)",
                    });
                }
                check_weights(weights, dim)?;
            }
            NormKind::Euclidean => {}
            NormKind::Sup { weights } => check_weights(weights, dim)?,
            NormKind::Polyhedral { functionals } => {
                if functionals.is_empty() {
                    return Err(Error::InvalidNorm(
                        "polyhedral norm needs functionals".into(),
                    ));
                }
                for a in functionals {
                    check_dim(dim, a.len())?;
                    if a.iter().any(|v| !v.is_finite()) {
                        return Err(Error::InvalidNorm("non-finite functional entry".into()));
                    }
                }
                let rows = functionals.len();
                let mat = DMatrix::from_fn(rows, dim, |i, j| functionals[i][j]);
                if mat.rank(1e-10) < dim {
                    return Err(Error::InvalidNorm(
                        "functionals do not span the dual space; not a norm".into(),
                    ));
                }
                // too many facets for exact enumeration leaves the dual unavailable
                polyhedral_dual = unit_ball_vertices(functionals, dim).ok().map(Arc::new);
            }
        }
        Ok(Norm {
            kind,
            dim,
            polyhedral_dual,
        })
    }

    pub fn lp(p: f64, dim: usize) -> Result<Self> {
        Self::new(NormKind::Lp { p, weights: None }, dim)
    }

    pub fn weighted_lp(p: f64, weights: Vec<f64>) -> Result<Self> {
        let dim = weights.len();
        Self::new(
            NormKind::Lp {
                p,
                weights: Some(weights),
            },
            dim,
        )
    }

    pub fn euclidean(dim: usize) -> Result<Self> {
        Self::new(NormKind::Euclidean, dim)
    }

    pub fn sup(dim: usize) -> Result<Self> {
        Self::new(NormKind::Sup { weights: None }, dim)
    }

    pub fn polyhedral(functionals: Vec<Vec<f64>>) -> Result<Self> {
        let dim = functionals.first().map_or(0, Vec::len);
        Self::new(NormKind::Polyhedral { functionals }, dim)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &NormKind {
        &self.kind
    }

    /// Evaluates the norm. The caller guarantees `x.len() == self.dim()`;
    /// use [`norm_eval`] for a checked call.
    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        match &self.kind {
            NormKind::Lp { p, weights } => match weights {
                None => unweighted_lp(*p, x),
                Some(w) => {
                    let s: f64 = x.iter().zip(w).map(|(v, w)| w * v.abs().powf(*p)).sum();
                    s.powf(p.recip())
                }
            },
            NormKind::Euclidean => unweighted_lp(2.0, x),
            NormKind::Sup { weights } => match weights {
                None => x.iter().fold(0.0, |m, v| m.max(v.abs())),
                Some(w) => x.iter().zip(w).fold(0.0, |m, (v, w)| m.max(w * v.abs())),
            },
            NormKind::Polyhedral { functionals } => functionals
                .iter()
                .map(|a| dot(a, x).abs())
                .fold(0.0, f64::max),
        }
    }

    /// `‖x‖^e`, avoiding the root-then-power round trip for `ℓ_e` norms.
    pub fn eval_pow(&self, x: &[f64], e: f64) -> f64 {
        match &self.kind {
            NormKind::Lp { p, weights: None } if *p == e => {
                if e == 2.0 {
                    x.iter().map(|v| v * v).sum()
                } else {
                    x.iter().map(|v| v.abs().powf(e)).sum()
                }
            }
            NormKind::Euclidean if e == 2.0 => x.iter().map(|v| v * v).sum(),
            _ => pow(self.eval(x), e),
        }
    }

    /// The dual norm as a catalog member.
    pub fn dual(&self) -> Result<Norm> {
        match &self.kind {
            NormKind::Lp { p, weights } => {
                let q = dual_exponent(*p);
                let weights = weights.as_ref().map(|w| {
                    if q.is_infinite() {
                        w.iter().map(|w| w.recip()).collect()
                    } else {
                        w.iter().map(|w| w.powf(-q / p)).collect()
                    }
                });
                if q.is_infinite() {
                    Norm::new(NormKind::Sup { weights }, self.dim)
                } else {
                    Norm::new(NormKind::Lp { p: q, weights }, self.dim)
                }
            }
            NormKind::Euclidean => Ok(self.clone()),
            NormKind::Sup { weights } => Norm::new(
                NormKind::Lp {
                    p: 1.0,
                    weights: weights
                        .as_ref()
                        .map(|w| w.iter().map(|w| w.recip()).collect()),
                },
                self.dim,
            ),
            NormKind::Polyhedral { .. } => {
                let vertices = self
                    .polyhedral_dual
                    .as_ref()
                    .ok_or_else(|| Error::MissingDual(self.to_string()))?;
                Norm::new(
                    NormKind::Polyhedral {
                        functionals: vertices.as_ref().clone(),
                    },
                    self.dim,
                )
            }
        }
    }

    /// Evaluates the dual norm at `x'` without building the dual.
    pub fn dual_eval(&self, xp: &[f64]) -> f64 {
        match &self.kind {
            NormKind::Polyhedral { .. } => self
                .polyhedral_dual
                .as_ref()
                .map(|v| v.iter().map(|a| dot(a, xp).abs()).fold(0.0, f64::max))
                .unwrap_or(f64::NAN),
            _ => self.dual().map(|d| d.eval(xp)).unwrap_or(f64::NAN),
        }
    }
}

fn unweighted_lp(p: f64, x: &[f64]) -> f64 {
    if p == 1.0 {
        x.iter().map(|v| v.abs()).sum()
    } else if p == 2.0 {
        x.iter().map(|v| v * v).sum::<f64>().sqrt()
    } else {
        x.iter()
            .map(|v| v.abs().powf(p))
            .sum::<f64>()
            .powf(p.recip())
    }
}

/// `v^e` with the common integer exponents special-cased.
pub(crate) fn pow(v: f64, e: f64) -> f64 {
    if e == 1.0 {
        v
    } else if e == 2.0 {
        v * v
    } else if e == 3.0 {
        v * v * v
    } else {
        v.powf(e)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}

/// Vertices (one per `±` pair) of `{x : |⟨a_i, x⟩| ≤ 1 for all i}`.
fn unit_ball_vertices(functionals: &[Vec<f64>], dim: usize) -> Result<Vec<Vec<f64>>> {
    let r = functionals.len();
    let mut subsets: u64 = 1;
    for i in 0..dim as u64 {
        subsets = subsets * (r as u64 - i) / (i + 1);
    }
    if subsets.saturating_mul(1 << dim) > MAX_VERTEX_SOLVES {
        return Err(Error::InvalidNorm(format!(
            "too many functionals ({r}) in dimension {dim} for exact vertex enumeration"
        )));
    }
    let mut vertices: Vec<Vec<f64>> = Vec::new();
    let mut subset: Vec<usize> = (0..dim).collect();
    loop {
        let a = DMatrix::from_fn(dim, dim, |i, j| functionals[subset[i]][j]);
        if let Some(lu) = Some(a.lu()).filter(|lu| lu.determinant().abs() > 1e-12) {
            // The first sign is fixed to +1: the ball is symmetric.
            for signs in 0..(1u64 << (dim - 1)) {
                let rhs = DVector::from_fn(dim, |i, _| {
                    if i > 0 && signs >> (i - 1) & 1 == 1 {
                        -1.0
                    } else {
                        1.0
                    }
                });
                let Some(x) = lu.solve(&rhs) else { continue };
                let x: Vec<f64> = x.iter().copied().collect();
                let feasible = functionals.iter().all(|f| dot(f, &x).abs() <= 1.0 + 1e-10);
                let seen = vertices.iter().any(|v| {
                    let same = v.iter().zip(&x).all(|(a, b)| (a - b).abs() <= 1e-10);
                    let opposite = v.iter().zip(&x).all(|(a, b)| (a + b).abs() <= 1e-10);
                    same || opposite
                });
                if feasible && !seen {
                    vertices.push(x);
                }
            }
        }
        // next combination
        let mut i = dim;
        loop {
            if i == 0 {
                return Ok(vertices);
            }
            i -= 1;
            if subset[i] < r - dim + i {
                subset[i] += 1;
                for j in i + 1..dim {
                    subset[j] = subset[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Checked norm evaluation.
pub fn norm_eval(norm: &Norm, x: &[f64]) -> Result<f64> {
    check_dim(norm.dim(), x.len())?;
    Ok(norm.eval(x))
}

/// Checked dual-norm evaluation `sup {⟨x, x'⟩ : ‖x‖ ≤ 1}`.
pub fn dual_norm_eval(norm: &Norm, xp: &[f64]) -> Result<f64> {
    check_dim(norm.dim(), xp.len())?;
    match norm.kind() {
        NormKind::Polyhedral { .. } => Ok(norm.dual_eval(xp)),
        _ => Ok(norm.dual()?.eval(xp)),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct OperatorSpec {
    matrix: Vec<Vec<f64>>,
    domain: Norm,
    codomain: Norm,
}

/// A matrix map `T : X → Y` between two normed spaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "OperatorSpec", into = "OperatorSpec")]
pub struct LinearOperator {
    rows: usize,
    cols: usize,
    /// Row-major `rows × cols`.
    matrix: Vec<f64>,
    domain: Norm,
    codomain: Norm,
}

impl TryFrom<OperatorSpec> for LinearOperator {
    type Error = Error;

    fn try_from(spec: OperatorSpec) -> Result<Self> {
        LinearOperator::new(spec.matrix, spec.domain, spec.codomain)
    }
}

impl From<LinearOperator> for OperatorSpec {
    fn from(op: LinearOperator) -> Self {
        OperatorSpec {
            matrix: op.matrix.chunks(op.cols).map(<[f64]>::to_vec).collect(),
            domain: op.domain,
            codomain: op.codomain,
        }
    }
}

impl LinearOperator {
    pub fn new(matrix: Vec<Vec<f64>>, domain: Norm, codomain: Norm) -> Result<Self> {
        let rows = matrix.len();
        check_dim(codomain.dim(), rows)?;
        let cols = domain.dim();
        let mut flat = Vec::with_capacity(rows * cols);
        for row in &matrix {
            check_dim(cols, row.len())?;
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Malformed("non-finite matrix entry".into()));
            }
            flat.extend_from_slice(row);
        }
        Ok(LinearOperator {
            rows,
            cols,
            matrix: flat,
            domain,
            codomain,
        })
    }

    pub fn identity(space: Norm) -> Self {
        let n = space.dim();
        let matrix = (0..n * n)
            .map(|i| if i / n == i % n { 1.0 } else { 0.0 })
            .collect();
        LinearOperator {
            rows: n,
            cols: n,
            matrix,
            domain: space.clone(),
            codomain: space,
        }
    }

    pub fn diagonal(diag: &[f64], domain: Norm, codomain: Norm) -> Result<Self> {
        let n = diag.len();
        let matrix = (0..n)
            .map(|i| (0..n).map(|j| if i == j { diag[i] } else { 0.0 }).collect())
            .collect();
        Self::new(matrix, domain, codomain)
    }

    pub fn domain(&self) -> &Norm {
        &self.domain
    }

    pub fn codomain(&self) -> &Norm {
        &self.codomain
    }

    pub fn domain_dim(&self) -> usize {
        self.cols
    }

    pub fn codomain_dim(&self) -> usize {
        self.rows
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.matrix[row * self.cols + col]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.matrix.chunks(self.cols).map(<[f64]>::to_vec).collect()
    }

    /// `out = T x`; lengths are the caller's responsibility.
    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        for (row, o) in self.matrix.chunks(self.cols).zip(out.iter_mut()) {
            *o = dot(row, x);
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        self.apply_into(x, &mut out);
        out
    }

    pub fn apply_checked(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.cols, x.len())?;
        Ok(self.apply(x))
    }

    /// `T'`: transposed matrix from `Y'` to `X'`.
    pub fn adjoint(&self) -> Result<LinearOperator> {
        let matrix = (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self.entry(i, j)).collect())
            .collect();
        LinearOperator::new(matrix, self.codomain.dual()?, self.domain.dual()?)
    }

    /// Lower bound for `‖T‖` by multi-start search of `‖Tx‖ / ‖x‖`.
    pub fn operator_norm(&self, budget: usize, seed: u64) -> ConstantEstimate {
        operator_norm(self, budget, seed)
    }
}

struct RatioOnSphere<'a> {
    op: &'a LinearOperator,
    x: Vec<f64>,
    image: Vec<f64>,
}

impl Clone for RatioOnSphere<'_> {
    fn clone(&self) -> Self {
        RatioOnSphere {
            op: self.op,
            x: self.x.clone(),
            image: self.image.clone(),
        }
    }
}

impl VectorObjective for RatioOnSphere<'_> {
    fn params(&self) -> &[f64] {
        &self.x
    }

    fn set(&mut self, i: usize, v: f64) {
        self.x[i] = v;
    }

    fn score(&mut self) -> f64 {
        let den = self.op.domain.eval(&self.x);
        if den <= 0.0 {
            return 0.0;
        }
        self.op.apply_into(&self.x, &mut self.image);
        self.op.codomain.eval(&self.image) / den
    }
}

/// Lower bound for `‖T‖` by multi-start search of `‖Tx‖ / ‖x‖`; the witness
/// is the maximizing vector.
pub fn operator_norm(op: &LinearOperator, budget: usize, seed: u64) -> ConstantEstimate {
    let n = op.domain_dim();
    let structured = search::signed_patterns(n);
    let options = SearchOptions::new(budget.max(1), seed);
    let outcome = search::maximize(&options, |index, rng| {
        let x = if index < structured.len() {
            structured[index].clone()
        } else {
            search::uniform_vector(rng, n, 1.0)
        };
        RatioOnSphere {
            op,
            image: vec![0.0; op.codomain_dim()],
            x,
        }
    });
    ConstantEstimate {
        kind: ConstantKind::OperatorNorm,
        exponent: 1.0,
        lower_bound: outcome.score,
        unbounded: false,
        seed,
        budget,
        evaluations: outcome.evaluations,
        witness: Witness::Vector { x: outcome.state.x },
    }
}
