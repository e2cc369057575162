//! Incremental evaluation of martingale functionals.
//!
//! Every functional used by the estimators and the renorming braces is built
//! from two sums over a difference sequence `d_1, …, d_n`:
//!
//! * `S = 2^{-n} Σ_t ‖P z + Σ_k M d_k(t)‖^e`, the mean over leaves;
//! * `L = Σ_k ‖M' d_k‖_{L_e}^e = Σ_k 2^{-(k-1)} Σ_j ‖M' v_{k,j}‖^e`,
//!
//! where each of `P`, `M`, `M'` is either the identity or the operator `T`.
//! Changing one coordinate of `v_{k,j}` only touches the leaves below the
//! level-`(k-1)` block `j`, which is what makes coordinate polish affordable.

use crate::martingale::DifferenceSequence;
use crate::search::VectorObjective;
use crate::spaces::LinearOperator;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Map {
    Identity,
    Operator,
}

/// How the two sums combine into the score that is maximized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Form {
    /// ratio `((S - ‖y‖^p)/L)^{1/p}`
    StrongType,
    /// ratio `(L/(S - ‖x‖^q))^{1/q}`
    StrongCotype,
    /// ratio `(S/(‖x‖^p + L))^{1/p}`
    PlainType,
    /// ratio `((‖Tx‖^q + L)/S)^{1/q}`
    PlainCotype,
    /// maximize `-(S - c^{-q} L)`
    BraceCotype { c: f64 },
    /// maximize `S - c^p L`
    BraceType { c: f64 },
}

impl Form {
    fn maps(self) -> (Map, Map, Map) {
        // (base P, sum M, level M')
        match self {
            Form::StrongType => (Map::Identity, Map::Operator, Map::Identity),
            Form::StrongCotype | Form::PlainCotype | Form::BraceCotype { .. } => {
                (Map::Identity, Map::Identity, Map::Operator)
            }
            Form::PlainType | Form::BraceType { .. } => {
                (Map::Operator, Map::Operator, Map::Identity)
            }
        }
    }

    fn free_base(self) -> bool {
        !matches!(self, Form::BraceCotype { .. } | Form::BraceType { .. })
    }
}

/// Relative rounding budget for a bracket `A - B` built from `dim`-term norms
/// raised to power `e` and averaged over `2^depth` leaves.
pub(crate) fn rounding_budget(dim: usize, depth: usize, e: f64) -> f64 {
    8.0 * (dim + depth + 4) as f64 * e.max(1.0) * f64::EPSILON
}

/// Ratio `num/den` with the numerator floor and the zero-denominator rule.
pub(crate) fn safe_ratio(num: f64, den: f64, magnitude: f64) -> f64 {
    if !(num > 1e-12 * magnitude.max(f64::MIN_POSITIVE)) {
        0.0
    } else if den <= 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

/// Conservative ratios for the four martingale forms. The bracket `S - ‖·‖^e`
/// is shrunk (numerator) or inflated (denominator) by its rounding budget so
/// that cancellation never manufactures a large ratio.
pub(crate) fn form_ratio(form: Form, e: f64, s: f64, l: f64, base_pow: f64, budget: f64) -> f64 {
    let root = |v: f64| v.max(0.0).powf(e.recip());
    match form {
        Form::StrongType => {
            let err = budget * (s + base_pow);
            safe_ratio(root(s - base_pow - err), root(l), root(s.max(base_pow)))
        }
        Form::StrongCotype => {
            let err = budget * (s + base_pow);
            safe_ratio(root(l), root((s - base_pow).max(0.0) + err), root(s.max(l)))
        }
        Form::PlainType => safe_ratio(root(s), root(base_pow + l), root(s.max(base_pow + l))),
        Form::PlainCotype => safe_ratio(root(base_pow + l), root(s), root(s.max(base_pow + l))),
        Form::BraceCotype { .. } | Form::BraceType { .. } => f64::NAN,
    }
}

#[derive(Clone)]
pub(crate) struct SeqEngine<'a> {
    op: &'a LinearOperator,
    form: Form,
    e: f64,
    depth: usize,
    base_map: Map,
    sum_map: Map,
    level_map: Map,
    m_in: usize,
    m_sum: usize,
    /// `[z | levels]` when the base is free, `[levels]` otherwise.
    params: Vec<f64>,
    fixed_base: Vec<f64>,
    level_start: usize,
    offset: Vec<f64>,
    mapped: Vec<f64>,
    level_pow: Vec<f64>,
    leaf_sum: Vec<f64>,
    leaf_pow: Vec<f64>,
    base_pow: f64,
    budget: f64,
}

impl<'a> SeqEngine<'a> {
    /// `base` is `y` (codomain) for the strong type form and a domain vector
    /// otherwise; `levels` follow the [`DifferenceSequence`] layout.
    pub(crate) fn new(
        op: &'a LinearOperator,
        form: Form,
        e: f64,
        base: &[f64],
        levels: &[Vec<f64>],
    ) -> Self {
        let (base_map, sum_map, level_map) = form.maps();
        let m_in = op.domain_dim();
        let m_sum = match sum_map {
            Map::Identity => m_in,
            Map::Operator => op.codomain_dim(),
        };
        let depth = levels.len();
        let vectors = (1usize << depth) - 1;
        let mut params = Vec::with_capacity(base.len() + vectors * m_in);
        let fixed_base = if form.free_base() {
            params.extend_from_slice(base);
            Vec::new()
        } else {
            base.to_vec()
        };
        let level_start = params.len();
        for level in levels {
            params.extend_from_slice(level);
        }
        let mut engine = SeqEngine {
            op,
            form,
            e,
            depth,
            base_map,
            sum_map,
            level_map,
            m_in,
            m_sum,
            params,
            fixed_base,
            level_start,
            offset: vec![0.0; m_sum],
            mapped: vec![0.0; vectors * m_sum],
            level_pow: vec![0.0; vectors],
            leaf_sum: vec![0.0; (1 << depth) * m_sum],
            leaf_pow: vec![0.0; 1 << depth],
            base_pow: 0.0,
            budget: rounding_budget(m_sum.max(m_in), depth, e),
        };
        for g in 0..vectors {
            engine.refresh_vector(g);
        }
        engine.refresh_base();
        engine
    }

    pub(crate) fn from_sequence(
        op: &'a LinearOperator,
        form: Form,
        e: f64,
        base: &[f64],
        seq: &DifferenceSequence,
    ) -> Self {
        Self::new(op, form, e, base, seq.levels())
    }

    pub(crate) fn base(&self) -> &[f64] {
        if self.form.free_base() {
            &self.params[..self.level_start]
        } else {
            &self.fixed_base
        }
    }

    pub(crate) fn to_sequence(&self) -> DifferenceSequence {
        let mut seq = DifferenceSequence::zeros(self.m_in, self.depth);
        let mut at = self.level_start;
        for k in 1..=self.depth {
            let len = (1 << (k - 1)) * self.m_in;
            seq.level_mut(k).copy_from_slice(&self.params[at..at + len]);
            at += len;
        }
        seq
    }

    fn refresh_base(&mut self) {
        let base = self.base().to_vec();
        match self.base_map {
            Map::Identity => self.offset.copy_from_slice(&base),
            Map::Operator => self.op.apply_into(&base, &mut self.offset),
        }
        self.base_pow = match self.form {
            Form::StrongType => self.op.codomain().eval_pow(&base, self.e),
            Form::StrongCotype | Form::PlainType => self.op.domain().eval_pow(&base, self.e),
            Form::PlainCotype => self.op.codomain().eval_pow(&self.op.apply(&base), self.e),
            Form::BraceCotype { .. } | Form::BraceType { .. } => 0.0,
        };
        for t in 0..1 << self.depth {
            self.refresh_leaf(t);
        }
    }

    fn refresh_vector(&mut self, g: usize) {
        let at = self.level_start + g * self.m_in;
        let v = &self.params[at..at + self.m_in];
        let out = &mut self.mapped[g * self.m_sum..(g + 1) * self.m_sum];
        match self.sum_map {
            Map::Identity => out.copy_from_slice(v),
            Map::Operator => self.op.apply_into(v, out),
        }
        self.level_pow[g] = match (self.level_map, self.sum_map) {
            (Map::Operator, Map::Identity) => {
                self.op.codomain().eval_pow(&self.op.apply(v), self.e)
            }
            (Map::Identity, _) => self.op.domain().eval_pow(v, self.e),
            (Map::Operator, Map::Operator) => self.op.codomain().eval_pow(out, self.e),
        };
    }

    fn refresh_leaf(&mut self, t: usize) {
        let m = self.m_sum;
        let n = self.depth;
        let leaf = &mut self.leaf_sum[t * m..(t + 1) * m];
        leaf.copy_from_slice(&self.offset);
        for k in 1..=n {
            let j = t >> (n - k + 1);
            let g = (1 << (k - 1)) - 1 + j;
            let v = &self.mapped[g * m..(g + 1) * m];
            if (t >> (n - k)) & 1 == 0 {
                leaf.iter_mut().zip(v).for_each(|(a, b)| *a += b);
            } else {
                leaf.iter_mut().zip(v).for_each(|(a, b)| *a -= b);
            }
        }
        let pow = match self.sum_map {
            Map::Identity => self.op.domain().eval_pow(leaf, self.e),
            Map::Operator => self.op.codomain().eval_pow(leaf, self.e),
        };
        self.leaf_pow[t] = pow;
    }

    /// `S`: the mean of `‖P z + Σ M d_k‖^e` over leaves.
    pub(crate) fn sum_mean_pow(&self) -> f64 {
        self.leaf_pow.iter().sum::<f64>() / self.leaf_pow.len() as f64
    }

    /// `L`: `Σ_k ‖M' d_k‖_{L_e}^e`.
    pub(crate) fn level_total(&self) -> f64 {
        let mut total = 0.0;
        for k in 1..=self.depth {
            let start = (1 << (k - 1)) - 1;
            let sum: f64 = self.level_pow[start..start + (1 << (k - 1))].iter().sum();
            total += sum / (1u64 << (k - 1)) as f64;
        }
        total
    }

    pub(crate) fn base_pow(&self) -> f64 {
        self.base_pow
    }

    /// The brace objective (`G` for the cotype form, `H` for the type form).
    pub(crate) fn brace_objective(&self) -> f64 {
        let (s, l) = (self.sum_mean_pow(), self.level_total());
        match self.form {
            Form::BraceCotype { c } => s - l / c.powf(self.e),
            Form::BraceType { c } => s - c.powf(self.e) * l,
            _ => f64::NAN,
        }
    }

    pub(crate) fn ratio(&self) -> f64 {
        form_ratio(
            self.form,
            self.e,
            self.sum_mean_pow(),
            self.level_total(),
            self.base_pow,
            self.budget,
        )
    }
}

impl VectorObjective for SeqEngine<'_> {
    fn params(&self) -> &[f64] {
        &self.params
    }

    fn set(&mut self, i: usize, v: f64) {
        self.params[i] = v;
        if i < self.level_start {
            self.refresh_base();
            return;
        }
        let g = (i - self.level_start) / self.m_in;
        self.refresh_vector(g);
        // g = 2^{k-1} - 1 + j
        let k = (usize::BITS - (g + 1).leading_zeros()) as usize;
        let j = g + 1 - (1 << (k - 1));
        let span = 1usize << (self.depth - k + 1);
        for t in j * span..(j + 1) * span {
            self.refresh_leaf(t);
        }
    }

    fn score(&mut self) -> f64 {
        match self.form {
            Form::BraceCotype { .. } => -self.brace_objective(),
            Form::BraceType { .. } => self.brace_objective(),
            _ => self.ratio(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::martingale::random_sequence;
    use crate::search::{candidate_rng, uniform_vector};
    use crate::spaces::Norm;

    #[test]
    fn incremental_updates_match_fresh_evaluation() {
        let x = Norm::lp(1.5, 2).unwrap();
        let y = Norm::lp(3.0, 3).unwrap();
        let op = LinearOperator::new(vec![vec![1.0, 0.5], vec![-0.25, 2.0], vec![0.0, 1.0]], x, y)
            .unwrap();
        let seq = random_sequence(3, 4, 2, 1.0).unwrap();
        for form in [
            Form::StrongType,
            Form::StrongCotype,
            Form::PlainType,
            Form::PlainCotype,
            Form::BraceCotype { c: 2.0 },
            Form::BraceType { c: 2.0 },
        ] {
            let base_dim = if form == Form::StrongType { 3 } else { 2 };
            let base = uniform_vector(&mut candidate_rng(1, 0), base_dim, 1.0);
            let mut engine = SeqEngine::from_sequence(&op, form, 1.5, &base, &seq);
            let mut rng = candidate_rng(2, 0);
            for _ in 0..50 {
                let i = rand::Rng::gen_range(&mut rng, 0..engine.params().len());
                engine.set(i, rand::Rng::gen_range(&mut rng, -1.0..1.0));
            }
            let fresh =
                SeqEngine::new(&op, form, 1.5, engine.base(), engine.to_sequence().levels());
            assert_eq!(engine.sum_mean_pow(), fresh.sum_mean_pow(), "{form:?}");
            assert_eq!(engine.level_total(), fresh.level_total());
            assert_eq!(engine.base_pow(), fresh.base_pow());
        }
    }
}
