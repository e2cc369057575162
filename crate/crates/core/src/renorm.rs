//! Truncated-depth renorming functionals.
//!
//! The cotype brace is the infimum over difference sequences of depth `≤ N`
//! of `(‖x + Σ d_k‖_{L_q}^q - c^{-q} Σ ‖T d_k‖_{L_q}^q)^{1/q}`; the type brace
//! is the supremum of `(‖Tx + Σ T d_k‖_{L_p}^p - c^p Σ ‖d_k‖_{L_p}^p)^{1/p}`.
//! Both are computed by seeded search. Depth `N` is always seeded with the
//! best depth `N - 1` sequence, so the tables are monotone in `N`, and the
//! midpoint checks seed depth `N + 1` with the glued depth-`N` witnesses, so
//! the midpoint inequalities hold at truncation up to rounding.

use serde::{Deserialize, Serialize};

use crate::engine::{Form, SeqEngine};
use crate::error::{check_constant, check_dim, Error, Result};
use crate::martingale::{glue, DifferenceSequence};
use crate::moduli::{check_cotype_exponent, check_type_exponent, Check, DefectReport, Witness};
use crate::search::{self, SearchOptions, VectorObjective};
use crate::spaces::{pow, LinearOperator};

/// Deepest brace the search will build (`2^N` leaves per evaluation).
pub const MAX_BRACE_DEPTH: usize = 12;
/// Largest decomposition level `n` (that is, `2^n` parts) searched.
pub const MAX_DECOMPOSITION_LEVEL: usize = 3;
/// Normalized bracket slack before a certificate counts as violated.
pub const VIOLATION_TOL: f64 = 1e-9;
/// Relative tolerance of the homogeneity probe in [`lemma5_certificate`].
pub const HOMOGENEITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    CotypeInf,
    TypeSup,
}

/// A brace functional with its search settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BraceFunctional {
    pub direction: Direction,
    pub operator: LinearOperator,
    pub exponent: f64,
    /// The certificate constant the construction presupposes.
    pub c: f64,
    pub depth_cap: usize,
    pub budget: usize,
    pub seed: u64,
    pub polish_top: usize,
}

impl BraceFunctional {
    /// The infimum form, for a certificate `c` of martingale cotype `q`.
    pub fn cotype(operator: LinearOperator, q: f64, c: f64) -> Result<Self> {
        check_cotype_exponent(q)?;
        Self::build(Direction::CotypeInf, operator, q, c)
    }

    /// The supremum form, for a certificate `c` of martingale type `p`.
    pub fn type_sup(operator: LinearOperator, p: f64, c: f64) -> Result<Self> {
        check_type_exponent(p)?;
        Self::build(Direction::TypeSup, operator, p, c)
    }

    fn build(
        direction: Direction,
        operator: LinearOperator,
        exponent: f64,
        c: f64,
    ) -> Result<Self> {
        check_constant(c)?;
        Ok(BraceFunctional {
            direction,
            operator,
            exponent,
            c,
            depth_cap: 4,
            budget: 24,
            seed: 0,
            polish_top: 2,
        })
    }

    pub fn depth_cap(mut self, n: usize) -> Self {
        self.depth_cap = n;
        self
    }

    pub fn budget(mut self, budget: usize) -> Self {
        self.budget = budget;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn polish_top(mut self, k: usize) -> Self {
        self.polish_top = k;
        self
    }

    fn form(&self) -> Form {
        match self.direction {
            Direction::CotypeInf => Form::BraceCotype { c: self.c },
            Direction::TypeSup => Form::BraceType { c: self.c },
        }
    }

    /// `{x}_n` and its witness.
    pub fn eval(&self, x: &[f64], n: usize) -> Result<BraceValue> {
        Ok(self.table(x, n)?.pop().expect("table has depth 0"))
    }

    /// `{x}_0, …, {x}_n`.
    pub fn table(&self, x: &[f64], n: usize) -> Result<Vec<BraceValue>> {
        brace_table(self, x, n, &[])
    }

    /// The bracket (`G` or `H`, before the root) of one sequence at `x`.
    pub fn objective_at(&self, x: &[f64], seq: &DifferenceSequence) -> Result<f64> {
        objective_at(
            &self.operator,
            self.direction,
            self.exponent,
            self.c,
            x,
            seq,
        )
    }

    /// The settings used for braces evaluated inside another search.
    fn inner(&self) -> BraceFunctional {
        BraceFunctional {
            budget: self.budget.min(6),
            polish_top: 1,
            ..self.clone()
        }
    }
}

/// One truncated brace value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BraceValue {
    pub depth: usize,
    pub value: f64,
    /// The bracket raised to the exponent; `value = objective^{1/e}`.
    pub objective: f64,
    pub witness: DifferenceSequence,
}

fn objective_at(
    op: &LinearOperator,
    direction: Direction,
    e: f64,
    c: f64,
    x: &[f64],
    seq: &DifferenceSequence,
) -> Result<f64> {
    check_dim(op.domain_dim(), x.len())?;
    check_dim(op.domain_dim(), seq.dim())?;
    if seq.initial().is_some() {
        return Err(Error::UnexpectedInitial);
    }
    let form = match direction {
        Direction::CotypeInf => Form::BraceCotype { c },
        Direction::TypeSup => Form::BraceType { c },
    };
    Ok(SeqEngine::from_sequence(op, form, e, x, seq).brace_objective())
}

/// `true` if `a` is a strictly better bracket than `b` in this direction.
fn improves(direction: Direction, a: f64, b: f64) -> bool {
    match direction {
        Direction::CotypeInf => a < b,
        Direction::TypeSup => a > b,
    }
}

fn brace_table(
    f: &BraceFunctional,
    x: &[f64],
    n: usize,
    extra: &[DifferenceSequence],
) -> Result<Vec<BraceValue>> {
    let op = &f.operator;
    check_dim(op.domain_dim(), x.len())?;
    let limit = f.depth_cap.min(MAX_BRACE_DEPTH);
    if n > limit {
        return Err(Error::DepthOutOfRange {
            requested: n,
            limit,
        });
    }
    let (e, c, m) = (f.exponent, f.c, op.domain_dim());
    let form = f.form();
    // search at the unit vector x/‖x‖, then scale back
    let norm = op.domain().eval(x);
    let scale = if norm > 0.0 { norm } else { 1.0 };
    let unit: Vec<f64> = x.iter().map(|v| v / scale).collect();
    let bound = if norm > 0.0 { 1.0 } else { 0.0 };

    let mut best_seq = DifferenceSequence::empty(m);
    let mut best = SeqEngine::new(op, form, e, &unit, &[]).brace_objective();
    let record = |depth: usize, objective: f64, seq: &DifferenceSequence| BraceValue {
        depth,
        value: scale * objective.max(0.0).powf(e.recip()),
        objective: objective * pow(scale, e),
        witness: seq.scaled(scale),
    };
    let mut table = vec![record(0, best, &best_seq)];
    for d in 1..=n {
        let mut seeds = vec![best_seq.clone().pad_to(d)?];
        for s in extra.iter().filter(|s| s.depth() <= d) {
            check_dim(m, s.dim())?;
            seeds.push(s.scaled(scale.recip()).without_initial().pad_to(d)?);
        }
        let opts = SearchOptions::new(seeds.len() + f.budget, f.seed.wrapping_add(d as u64))
            .polish_top(f.polish_top)
            .min_step(1e-7)
            .max_sweeps(200)
            .zero_scale(1.0);
        let outcome = search::maximize(&opts, |i, rng| match seeds.get(i) {
            Some(s) => SeqEngine::from_sequence(op, form, e, &unit, s),
            None => {
                let spread = 0.5f64.powi((i % 4) as i32);
                let levels: Vec<Vec<f64>> = (0..d)
                    .map(|k| search::uniform_vector(rng, (1 << k) * m, spread))
                    .collect();
                SeqEngine::new(op, form, e, &unit, &levels)
            }
        });
        let found = outcome.state.brace_objective();
        if improves(f.direction, found, best) {
            best = found;
            best_seq = outcome.state.to_sequence();
        } else {
            best_seq = best_seq.pad_to(d)?;
        }
        let violated = match f.direction {
            Direction::CotypeInf => best < -VIOLATION_TOL,
            Direction::TypeSup => best.max(0.0).powf(e.recip()) > c * bound + VIOLATION_TOL,
        };
        if violated {
            return Err(Error::CertificateViolation {
                c,
                objective: best * pow(scale, e),
                bound: match f.direction {
                    Direction::CotypeInf => 0.0,
                    Direction::TypeSup => pow(c * norm, e),
                },
                witness: Box::new(best_seq.scaled(scale)),
            });
        }
        table.push(record(d, best, &best_seq));
    }
    Ok(table)
}

fn expect_direction(f: &BraceFunctional, direction: Direction) -> Result<()> {
    if f.direction == direction {
        Ok(())
    } else {
        Err(Error::Malformed(format!(
            "brace functional has direction {:?}, expected {direction:?}",
            f.direction
        )))
    }
}

/// `{x}_N` of the infimum form. Errors with the offending sequence when the
/// bracket goes negative, which a valid certificate rules out.
pub fn brace_cotype(f: &BraceFunctional, x: &[f64], n: usize) -> Result<BraceValue> {
    expect_direction(f, Direction::CotypeInf)?;
    f.eval(x, n)
}

/// `{x}_N` of the supremum form. Errors when the value exceeds `c‖x‖`.
pub fn brace_type(f: &BraceFunctional, x: &[f64], n: usize) -> Result<BraceValue> {
    expect_direction(f, Direction::TypeSup)?;
    f.eval(x, n)
}

fn midpoint(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(a, b)| (a + b) / 2.0).collect()
}

fn half_difference(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(a, b)| (a - b) / 2.0).collect()
}

fn midpoint_check(
    f: &BraceFunctional,
    x_plus: &[f64],
    x_minus: &[f64],
    n: usize,
) -> Result<DefectReport> {
    let op = &f.operator;
    check_dim(op.domain_dim(), x_plus.len())?;
    check_dim(op.domain_dim(), x_minus.len())?;
    if n + 1 > f.depth_cap {
        return Err(Error::DepthOutOfRange {
            requested: n + 1,
            limit: f.depth_cap,
        });
    }
    let plus = f.eval(x_plus, n)?.witness.pad_to(n)?;
    let minus = f.eval(x_minus, n)?.witness.pad_to(n)?;
    let glued = glue(x_plus, &plus, x_minus, &minus)?;
    let mid_point = midpoint(x_plus, x_minus);
    let mid = brace_table(f, &mid_point, n + 1, &[glued])?
        .pop()
        .expect("nonempty table")
        .witness;
    midpoint_report(f, x_plus, x_minus, n, plus, minus, mid)
}

fn midpoint_report(
    f: &BraceFunctional,
    x_plus: &[f64],
    x_minus: &[f64],
    n: usize,
    plus: DifferenceSequence,
    minus: DifferenceSequence,
    mid: DifferenceSequence,
) -> Result<DefectReport> {
    let op = &f.operator;
    let (e, c) = (f.exponent, f.c);
    let g_plus = f.objective_at(x_plus, &plus)?;
    let g_minus = f.objective_at(x_minus, &minus)?;
    let g_mid = f.objective_at(&midpoint(x_plus, x_minus), &mid)?;
    let half = half_difference(x_plus, x_minus);
    let mean = (g_plus + g_minus) / 2.0;
    let (check, lhs, rhs) = match f.direction {
        Direction::CotypeInf => {
            let penalty = op.codomain().eval_pow(&op.apply(&half), e) / pow(c, e);
            (Check::MidpointCotype, g_mid, mean - penalty)
        }
        Direction::TypeSup => {
            let penalty = pow(c, e) * op.domain().eval_pow(&half, e);
            (Check::MidpointType, mean - penalty, g_mid)
        }
    };
    Ok(DefectReport {
        check,
        exponent: e,
        c,
        lhs,
        rhs,
        value: lhs - rhs,
        power_gap: lhs - rhs,
        level: Some(n),
        witness: Witness::Midpoint {
            x_plus: x_plus.to_vec(),
            x_minus: x_minus.to_vec(),
            depth: n,
            plus,
            minus,
            mid,
        },
    })
}

/// `{(x_+ + x_-)/2}_{N+1}^q - ({x_+}_N^q + {x_-}_N^q)/2 + c^{-q}‖T(x_+ - x_-)/2‖^q`,
/// evaluated from the achieved witnesses.
pub fn midpoint_cotype_check(
    f: &BraceFunctional,
    x_plus: &[f64],
    x_minus: &[f64],
    n: usize,
) -> Result<DefectReport> {
    expect_direction(f, Direction::CotypeInf)?;
    midpoint_check(f, x_plus, x_minus, n)
}

/// `({x_+}_N^p + {x_-}_N^p)/2 - c^p‖(x_+ - x_-)/2‖^p - {(x_+ + x_-)/2}_{N+1}^p`.
pub fn midpoint_type_check(
    f: &BraceFunctional,
    x_plus: &[f64],
    x_minus: &[f64],
    n: usize,
) -> Result<DefectReport> {
    expect_direction(f, Direction::TypeSup)?;
    midpoint_check(f, x_plus, x_minus, n)
}

/// `(‖x‖^q + {x}_N^q)^{1/q}`.
pub fn equivalent_norm_cotype(f: &BraceFunctional, x: &[f64], n: usize) -> Result<f64> {
    let brace = brace_cotype(f, x, n)?;
    let q = f.exponent;
    Ok((f.operator.domain().eval_pow(x, q) + pow(brace.value, q)).powf(q.recip()))
}

/// One part `(y_k, x_k)` of a decomposition, with the witness of `{x_k}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionPart {
    pub y: Vec<f64>,
    pub x: Vec<f64>,
    pub witness: DifferenceSequence,
}

/// `y = 2^{-n} Σ y_k` with companions `x_k`; the objective is
/// `(2^{-n} Σ (‖y_k - T x_k‖^p + {x_k}^p))^{1/p}`, with each brace read off
/// its witness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub exponent: f64,
    pub c: f64,
    pub parts: Vec<DecompositionPart>,
}

impl Decomposition {
    /// The single part `(y, 0)`, whose objective is `‖y‖`.
    pub fn trivial(op: &LinearOperator, exponent: f64, c: f64, y: &[f64]) -> Self {
        Decomposition {
            exponent,
            c,
            parts: vec![DecompositionPart {
                y: y.to_vec(),
                x: vec![0.0; op.domain_dim()],
                witness: DifferenceSequence::empty(op.domain_dim()),
            }],
        }
    }

    /// `n` with `2^n` parts.
    pub fn level(&self) -> Option<usize> {
        let len = self.parts.len();
        len.is_power_of_two().then(|| len.trailing_zeros() as usize)
    }

    pub fn mean_y(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.parts.first().map_or(0, |p| p.y.len())];
        for part in &self.parts {
            mean.iter_mut().zip(&part.y).for_each(|(a, b)| *a += b);
        }
        let len = self.parts.len() as f64;
        mean.iter_mut().for_each(|v| *v /= len);
        mean
    }

    /// The objective raised to the power `p`.
    pub fn objective_pow(&self, op: &LinearOperator) -> Result<f64> {
        if self.level().is_none() {
            return Err(Error::Malformed(format!(
                "decomposition has {} parts, not a power of two",
                self.parts.len()
            )));
        }
        let p = self.exponent;
        let mut total = 0.0;
        for part in &self.parts {
            check_dim(op.codomain_dim(), part.y.len())?;
            let tx = op.apply_checked(&part.x)?;
            let gap: Vec<f64> = part.y.iter().zip(&tx).map(|(a, b)| a - b).collect();
            let brace = objective_at(op, Direction::TypeSup, p, self.c, &part.x, &part.witness)?;
            total += op.codomain().eval_pow(&gap, p) + brace.max(0.0);
        }
        Ok(total / self.parts.len() as f64)
    }

    pub fn objective(&self, op: &LinearOperator) -> Result<f64> {
        Ok(self.objective_pow(op)?.powf(self.exponent.recip()))
    }

    /// The decomposition listed `2^reps` times over.
    pub fn duplicated(&self, reps: usize) -> Decomposition {
        let mut parts = self.parts.clone();
        for _ in 0..reps {
            parts.extend(parts.clone());
        }
        Decomposition {
            parts,
            ..self.clone()
        }
    }

    /// Checks `2^{-n} Σ y_k = y` to `1e-12` relative.
    pub fn validate(&self, y: &[f64]) -> Result<()> {
        if self.level().is_none() {
            return Err(Error::Malformed(
                "decomposition size is not a power of two".into(),
            ));
        }
        let mean = self.mean_y();
        check_dim(y.len(), mean.len())?;
        let size = y
            .iter()
            .chain(self.parts.iter().flat_map(|p| &p.y))
            .fold(1.0f64, |m, v| m.max(v.abs()));
        let drift = mean
            .iter()
            .zip(y)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if drift > 1e-12 * size {
            return Err(Error::Malformed(format!(
                "decomposition mean is off by {drift:e}"
            )));
        }
        Ok(())
    }
}

/// The two decompositions of `y_±` merged into one of `y_+ + y_-`:
/// both are brought to the same size by duplication, then every part is
/// doubled (`2y_k`, `2x_k`, and the brace witness scaled by 2).
pub fn combine_decompositions(
    plus: &Decomposition,
    minus: &Decomposition,
) -> Result<Decomposition> {
    let (lp, lm) = match (plus.level(), minus.level()) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(Error::Malformed(
                "decomposition size is not a power of two".into(),
            ))
        }
    };
    if plus.exponent != minus.exponent || plus.c != minus.c {
        return Err(Error::Malformed(
            "decompositions use different exponents or constants".into(),
        ));
    }
    let level = lp.max(lm);
    let double = |part: &DecompositionPart| DecompositionPart {
        y: part.y.iter().map(|v| 2.0 * v).collect(),
        x: part.x.iter().map(|v| 2.0 * v).collect(),
        witness: part.witness.scaled(2.0),
    };
    let parts = plus
        .duplicated(level - lp)
        .parts
        .iter()
        .chain(&minus.duplicated(level - lm).parts)
        .map(double)
        .collect();
    Ok(Decomposition {
        parts,
        ..plus.clone()
    })
}

/// The decomposition norm of `y` and the decomposition achieving it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionNorm {
    pub value: f64,
    pub decomposition: Decomposition,
}

#[derive(Clone)]
struct DecompositionObjective<'a> {
    f: &'a BraceFunctional,
    y: &'a [f64],
    depth: usize,
    parts: usize,
    /// `[u_1 … u_P | x_1 … x_P]`; `y_k = u_k - mean(u) + y`.
    params: Vec<f64>,
    brace_pow: Vec<f64>,
}

impl<'a> DecompositionObjective<'a> {
    fn new(f: &'a BraceFunctional, y: &'a [f64], depth: usize, params: Vec<f64>) -> Self {
        let (m_out, m_in) = (f.operator.codomain_dim(), f.operator.domain_dim());
        let parts = params.len() / (m_out + m_in);
        let mut state = DecompositionObjective {
            f,
            y,
            depth,
            parts,
            params,
            brace_pow: vec![0.0; parts],
        };
        for k in 0..parts {
            state.refresh(k);
        }
        state
    }

    fn x(&self, k: usize) -> &[f64] {
        let (m_out, m_in) = (self.f.operator.codomain_dim(), self.f.operator.domain_dim());
        let at = self.parts * m_out + k * m_in;
        &self.params[at..at + m_in]
    }

    fn ys(&self) -> Vec<Vec<f64>> {
        let m_out = self.f.operator.codomain_dim();
        let u: Vec<&[f64]> = self.params[..self.parts * m_out].chunks(m_out).collect();
        let mut drift = vec![0.0; m_out];
        for uk in &u {
            drift.iter_mut().zip(*uk).for_each(|(a, b)| *a += b);
        }
        drift
            .iter_mut()
            .zip(self.y)
            .for_each(|(d, y)| *d = *d / self.parts as f64 - y);
        u.iter()
            .map(|uk| uk.iter().zip(&drift).map(|(a, b)| a - b).collect())
            .collect()
    }

    fn refresh(&mut self, k: usize) {
        // a violated certificate marks the candidate as unusable
        self.brace_pow[k] = match self.f.inner().eval(self.x(k), self.depth) {
            Ok(b) => b.objective.max(0.0),
            Err(_) => f64::INFINITY,
        };
    }

    fn objective_pow(&self) -> f64 {
        let op = &self.f.operator;
        let total: f64 = self
            .ys()
            .iter()
            .enumerate()
            .map(|(k, yk)| {
                let tx = op.apply(self.x(k));
                let gap: Vec<f64> = yk.iter().zip(&tx).map(|(a, b)| a - b).collect();
                op.codomain().eval_pow(&gap, self.f.exponent) + self.brace_pow[k]
            })
            .sum();
        total / self.parts as f64
    }
}

impl VectorObjective for DecompositionObjective<'_> {
    fn params(&self) -> &[f64] {
        &self.params
    }

    fn set(&mut self, i: usize, v: f64) {
        self.params[i] = v;
        let split = self.parts * self.f.operator.codomain_dim();
        if i >= split {
            self.refresh((i - split) / self.f.operator.domain_dim());
        }
    }

    fn score(&mut self) -> f64 {
        -self.objective_pow()
    }
}

/// `|||y|||`: the infimum of the decomposition objective over decompositions
/// into `2^n` parts, `n ≤ n_dec`, with braces at depth `n_brace`.
///
/// The trivial decomposition `(y, 0)` is always a candidate, so the value is
/// at most `‖y‖`; a value below `2^{1/p-1}‖y‖` is reported as an error.
pub fn equivalent_norm_type(
    f: &BraceFunctional,
    y: &[f64],
    n_brace: usize,
    n_dec: usize,
    budget: usize,
) -> Result<DecompositionNorm> {
    expect_direction(f, Direction::TypeSup)?;
    let op = &f.operator;
    check_dim(op.codomain_dim(), y.len())?;
    if n_dec > MAX_DECOMPOSITION_LEVEL {
        return Err(Error::DepthOutOfRange {
            requested: n_dec,
            limit: MAX_DECOMPOSITION_LEVEL,
        });
    }
    if n_brace > f.depth_cap {
        return Err(Error::DepthOutOfRange {
            requested: n_brace,
            limit: f.depth_cap,
        });
    }
    let p = f.exponent;
    let trivial = Decomposition::trivial(op, p, f.c, y);
    let y_norm = op.codomain().eval(y);
    if y_norm == 0.0 {
        return Ok(DecompositionNorm {
            value: 0.0,
            decomposition: trivial,
        });
    }
    let (m_out, m_in) = (op.codomain_dim(), op.domain_dim());
    let size = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let opts = SearchOptions::new(budget.max(n_dec + 1), f.seed)
        .polish_top(f.polish_top)
        .min_step(1e-7)
        .max_sweeps(100);
    let outcome = search::maximize(&opts, |i, rng| {
        let level = i % (n_dec + 1);
        let parts = 1usize << level;
        let mut params = Vec::with_capacity(parts * (m_out + m_in));
        let first = i <= n_dec;
        for _ in 0..parts {
            if first {
                params.extend_from_slice(y);
            } else {
                let jitter = search::uniform_vector(rng, m_out, size);
                params.extend(y.iter().zip(jitter).map(|(a, b)| a + b));
            }
        }
        for _ in 0..parts {
            if first {
                params.extend(std::iter::repeat(0.0).take(m_in));
            } else {
                params.extend(search::uniform_vector(rng, m_in, size));
            }
        }
        DecompositionObjective::new(f, y, n_brace, params)
    });
    let state = &outcome.state;
    let mut parts = Vec::with_capacity(state.parts);
    for (k, yk) in state.ys().into_iter().enumerate() {
        let x = state.x(k).to_vec();
        let witness = f.eval(&x, n_brace)?.witness;
        parts.push(DecompositionPart { y: yk, x, witness });
    }
    let found = Decomposition {
        exponent: p,
        c: f.c,
        parts,
    };
    let found_value = found.objective(op)?;
    let (value, decomposition) = if found_value < y_norm {
        (found_value, found)
    } else {
        (y_norm, trivial)
    };
    let lower = 2f64.powf(p.recip() - 1.0) * y_norm;
    if value < lower * (1.0 - 1e-12) {
        return Err(Error::BoundViolated(format!(
            "decomposition norm {value:e} is below 2^(1/p-1)|y| = {lower:e}"
        )));
    }
    Ok(DecompositionNorm {
        value,
        decomposition,
    })
}

fn step_report(
    op: &LinearOperator,
    base: Decomposition,
    plus: Decomposition,
    minus: Decomposition,
    x: &[f64],
) -> Result<DefectReport> {
    let (p, c) = (base.exponent, base.c);
    let lhs = (plus.objective_pow(op)? + minus.objective_pow(op)?) / 2.0;
    let rhs = base.objective_pow(op)? + pow(c, p) * op.domain().eval_pow(x, p);
    Ok(DefectReport {
        check: Check::SmoothnessStep,
        exponent: p,
        c,
        lhs,
        rhs,
        value: lhs - rhs,
        power_gap: lhs - rhs,
        level: None,
        witness: Witness::Decomposition {
            decomposition: base,
            related: vec![plus, minus],
            shift: Some(x.to_vec()),
        },
    })
}

/// From a decomposition `D` of `y`, the decompositions `(y_k ± Tx, x_k ± x)`
/// of `y ± Tx`: returns `(obj_+^p + obj_-^p)/2 - obj(D)^p - c^p‖x‖^p`, with
/// the shifted braces at depth `N` and those of `D` at depth `N + 1`.
pub fn smoothness_step_check(
    f: &BraceFunctional,
    y: &[f64],
    x: &[f64],
    d: &Decomposition,
    n: usize,
) -> Result<DefectReport> {
    expect_direction(f, Direction::TypeSup)?;
    let op = &f.operator;
    check_dim(op.domain_dim(), x.len())?;
    d.validate(y)?;
    if n + 1 > f.depth_cap {
        return Err(Error::DepthOutOfRange {
            requested: n + 1,
            limit: f.depth_cap,
        });
    }
    let (p, c) = (f.exponent, f.c);
    if x.iter().all(|v| *v == 0.0) {
        let base = Decomposition {
            exponent: p,
            c,
            ..d.clone()
        };
        return step_report(op, base.clone(), base.clone(), base, x);
    }
    let tx = op.apply(x);
    let shift = |part: &DecompositionPart, sign: f64| -> (Vec<f64>, Vec<f64>) {
        (
            part.y.iter().zip(&tx).map(|(a, b)| a + sign * b).collect(),
            part.x.iter().zip(x).map(|(a, b)| a + sign * b).collect(),
        )
    };
    let (mut base, mut plus, mut minus) = (Vec::new(), Vec::new(), Vec::new());
    for part in &d.parts {
        let (y_plus, x_plus) = shift(part, 1.0);
        let (y_minus, x_minus) = shift(part, -1.0);
        let w_plus = f.eval(&x_plus, n)?.witness.pad_to(n)?;
        let w_minus = f.eval(&x_minus, n)?.witness.pad_to(n)?;
        let glued = glue(&x_plus, &w_plus, &x_minus, &w_minus)?;
        let w_mid = brace_table(f, &part.x, n + 1, &[glued])?
            .pop()
            .expect("nonempty table")
            .witness;
        base.push(DecompositionPart {
            y: part.y.clone(),
            x: part.x.clone(),
            witness: w_mid,
        });
        plus.push(DecompositionPart {
            y: y_plus,
            x: x_plus,
            witness: w_plus,
        });
        minus.push(DecompositionPart {
            y: y_minus,
            x: x_minus,
            witness: w_minus,
        });
    }
    let wrap = |parts| Decomposition {
        exponent: p,
        c,
        parts,
    };
    step_report(op, wrap(base), wrap(plus), wrap(minus), x)
}

fn padding_report(op: &LinearOperator, d: Decomposition, reps: usize) -> Result<DefectReport> {
    let dup = d.duplicated(reps);
    let (a, b) = (dup.objective_pow(op)?, d.objective_pow(op)?);
    let p = d.exponent;
    let (lhs, rhs) = (a.powf(p.recip()), b.powf(p.recip()));
    Ok(DefectReport {
        check: Check::Padding,
        exponent: p,
        c: d.c,
        lhs,
        rhs,
        value: (lhs - rhs).abs(),
        power_gap: (a - b).abs(),
        level: Some(reps),
        witness: Witness::Decomposition {
            decomposition: d,
            related: vec![dup],
            shift: None,
        },
    })
}

/// `|obj(D duplicated 2^reps times) - obj(D)|`.
pub fn padding_identity_check(
    op: &LinearOperator,
    d: &Decomposition,
    reps: usize,
) -> Result<DefectReport> {
    if reps > 8 {
        return Err(Error::DepthOutOfRange {
            requested: reps,
            limit: 8,
        });
    }
    padding_report(op, d.clone(), reps)
}

fn norm_midpoint_report(
    op: &LinearOperator,
    combined: Decomposition,
    plus: Decomposition,
    minus: Decomposition,
) -> Result<DefectReport> {
    let p = combined.exponent;
    let lhs = combined.objective_pow(op)? / pow(2.0, p);
    let rhs = (plus.objective_pow(op)? + minus.objective_pow(op)?) / 2.0;
    Ok(DefectReport {
        check: Check::NormMidpoint,
        exponent: p,
        c: combined.c,
        lhs,
        rhs,
        value: lhs - rhs,
        power_gap: lhs - rhs,
        level: None,
        witness: Witness::Decomposition {
            decomposition: combined,
            related: vec![plus, minus],
            shift: None,
        },
    })
}

/// `(|||y_+ + y_-|||/2)^p - (|||y_+|||^p + |||y_-|||^p)/2`, where the left side
/// is bounded through the combined decomposition.
pub fn norm_midpoint_check(
    f: &BraceFunctional,
    y_plus: &[f64],
    y_minus: &[f64],
    n_brace: usize,
    n_dec: usize,
    budget: usize,
) -> Result<DefectReport> {
    let plus = equivalent_norm_type(f, y_plus, n_brace, n_dec, budget)?.decomposition;
    let minus = equivalent_norm_type(f, y_minus, n_brace, n_dec, budget)?.decomposition;
    let combined = combine_decompositions(&plus, &minus)?;
    norm_midpoint_report(&f.operator, combined, plus, minus)
}

/// Walks the dyadic chain `λ = k/2^m` between the normalized points
/// `x_±/⟦x_±⟧` and checks that the functional stays `≤ 1` along it, that
/// every chain point is bounded by the larger of its two parents, and that
/// `⟦x_+ + x_-⟧ ≤ ⟦x_+⟧ + ⟦x_-⟧`. The report's value is the worst normalized
/// gap. Positive homogeneity is probed first.
pub fn lemma5_certificate<F>(
    f: F,
    x_plus: &[f64],
    x_minus: &[f64],
    m: usize,
) -> Result<DefectReport>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    check_dim(x_plus.len(), x_minus.len())?;
    if m > 20 {
        return Err(Error::DepthOutOfRange {
            requested: m,
            limit: 20,
        });
    }
    let sum: Vec<f64> = x_plus.iter().zip(x_minus).map(|(a, b)| a + b).collect();
    for point in [x_plus, x_minus, &sum[..]] {
        let base = f(point)?;
        for scale in [0.5, 2.0, 3.0] {
            let scaled_point: Vec<f64> = point.iter().map(|v| v * scale).collect();
            let scaled = f(&scaled_point)?;
            let expected = scale * base;
            if (scaled - expected).abs() > HOMOGENEITY_TOL * scaled.abs().max(expected.abs()) {
                return Err(Error::HomogeneityViolation {
                    scale,
                    scaled,
                    expected,
                });
            }
        }
    }
    let (fp, fm, fs) = (f(x_plus)?, f(x_minus)?, f(&sum)?);
    let witness = |chain_depth, worst_lambda| Witness::Chain {
        x_plus: x_plus.to_vec(),
        x_minus: x_minus.to_vec(),
        chain_depth,
        worst_lambda,
    };
    if fp == 0.0 || fm == 0.0 {
        // λ is undefined; fall back to the direct comparison
        return Ok(DefectReport {
            check: Check::Chain,
            exponent: 1.0,
            c: 1.0,
            lhs: fs,
            rhs: fp + fm,
            value: fs - fp - fm,
            power_gap: fs - fp - fm,
            level: Some(0),
            witness: witness(0, f64::NAN),
        });
    }
    let u_plus: Vec<f64> = x_plus.iter().map(|v| v / fp).collect();
    let u_minus: Vec<f64> = x_minus.iter().map(|v| v / fm).collect();
    let at = |lambda: f64| -> Vec<f64> {
        u_plus
            .iter()
            .zip(&u_minus)
            .map(|(a, b)| lambda * a + (1.0 - lambda) * b)
            .collect()
    };
    let points = 1usize << m;
    let mut values = vec![f64::NAN; points + 1];
    let (mut worst, mut worst_lambda) = (f64::NEG_INFINITY, 0.0);
    let mut note = |gap: f64, lambda: f64| {
        if gap > worst {
            worst = gap;
            worst_lambda = lambda;
        }
    };
    values[0] = f(&u_minus)?;
    values[points] = f(&u_plus)?;
    note(values[0] - 1.0, 0.0);
    note(values[points] - 1.0, 1.0);
    // level n fills the odd multiples of 2^{m-n} from their level-(n-1) neighbors
    for n in 1..=m {
        let stride = 1usize << (m - n);
        for k in (stride..points).step_by(2 * stride) {
            let lambda = k as f64 / points as f64;
            let v = f(&at(lambda))?;
            values[k] = v;
            note(v - 1.0, lambda);
            note(v - values[k - stride].max(values[k + stride]), lambda);
        }
    }
    let total = fp + fm;
    let lambda = fp / total;
    note(f(&at(lambda))? - 1.0, lambda);
    note((fs - total) / total, lambda);
    Ok(DefectReport {
        check: Check::Chain,
        exponent: 1.0,
        c: 1.0,
        lhs: 1.0 + worst,
        rhs: 1.0,
        value: worst,
        power_gap: worst,
        level: Some(m),
        witness: witness(m, worst_lambda),
    })
}

/// Replays the renorm checks from their stored witnesses.
pub(crate) fn replay_defect(op: &LinearOperator, r: &DefectReport) -> Result<DefectReport> {
    let brace = |direction| BraceFunctional {
        direction,
        operator: op.clone(),
        exponent: r.exponent,
        c: r.c,
        depth_cap: MAX_BRACE_DEPTH,
        budget: 0,
        seed: 0,
        polish_top: 1,
    };
    match (&r.check, &r.witness) {
        (
            Check::MidpointCotype | Check::MidpointType,
            Witness::Midpoint {
                x_plus,
                x_minus,
                depth,
                plus,
                minus,
                mid,
            },
        ) => {
            let direction = if r.check == Check::MidpointCotype {
                Direction::CotypeInf
            } else {
                Direction::TypeSup
            };
            midpoint_report(
                &brace(direction),
                x_plus,
                x_minus,
                *depth,
                plus.clone(),
                minus.clone(),
                mid.clone(),
            )
        }
        (
            Check::SmoothnessStep,
            Witness::Decomposition {
                decomposition,
                related,
                shift: Some(x),
            },
        ) if related.len() == 2 => step_report(
            op,
            decomposition.clone(),
            related[0].clone(),
            related[1].clone(),
            x,
        ),
        (Check::Padding, Witness::Decomposition { decomposition, .. }) => {
            padding_report(op, decomposition.clone(), r.level.unwrap_or(1))
        }
        (
            Check::NormMidpoint,
            Witness::Decomposition {
                decomposition,
                related,
                ..
            },
        ) if related.len() == 2 => norm_midpoint_report(
            op,
            decomposition.clone(),
            related[0].clone(),
            related[1].clone(),
        ),
        _ => Err(Error::Malformed(format!(
            "{:?} cannot be replayed here",
            r.check
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spaces::Norm;

    fn euclid(dim: usize) -> LinearOperator {
        LinearOperator::identity(Norm::euclidean(dim).unwrap())
    }

    #[test]
    fn depth_zero_is_the_norm() {
        let op = LinearOperator::new(
            vec![vec![2.0, 0.0], vec![1.0, 1.0]],
            Norm::lp(3.0, 2).unwrap(),
            Norm::lp(3.0, 2).unwrap(),
        )
        .unwrap();
        let x = [0.3, -0.8];
        let f = BraceFunctional::cotype(op.clone(), 3.0, 5.0).unwrap();
        assert_eq!(brace_cotype(&f, &x, 0).unwrap().value, op.domain().eval(&x));
        let f = BraceFunctional::type_sup(op.clone(), 1.5, 5.0).unwrap();
        let tx = op.codomain().eval(&op.apply(&x));
        assert!((brace_type(&f, &x, 0).unwrap().value - tx).abs() < 1e-15);
    }

    #[test]
    fn euclidean_braces_are_the_norm() {
        let x = [0.6, -0.2, 1.1];
        let norm = Norm::euclidean(3).unwrap().eval(&x);
        let f = BraceFunctional::cotype(euclid(3), 2.0, 1.0).unwrap();
        for b in f.table(&x, 3).unwrap() {
            assert!((b.value - norm).abs() < 1e-9, "{b:?}");
        }
        let f = BraceFunctional::type_sup(euclid(3), 2.0, 1.0).unwrap();
        for b in f.table(&x, 3).unwrap() {
            assert!((b.value - norm).abs() < 1e-9, "{b:?}");
        }
    }

    #[test]
    fn small_certificates_are_caught() {
        let f = BraceFunctional::cotype(euclid(2), 2.0, 0.5).unwrap();
        match brace_cotype(&f, &[1.0, 0.5], 1) {
            Err(Error::CertificateViolation { witness, .. }) => assert_eq!(witness.depth(), 1),
            other => panic!("{other:?}"),
        }
        let f = BraceFunctional::type_sup(euclid(2), 2.0, 0.5).unwrap();
        assert!(matches!(
            brace_type(&f, &[1.0, 0.5], 1),
            Err(Error::CertificateViolation { .. })
        ));
        assert!(brace_type(
            &BraceFunctional::cotype(euclid(2), 2.0, 1.0).unwrap(),
            &[1.0, 0.0],
            1
        )
        .is_err());
    }

    #[test]
    fn euclidean_midpoints_are_tight() {
        let f = BraceFunctional::cotype(euclid(2), 2.0, 1.0).unwrap();
        let r = midpoint_cotype_check(&f, &[1.0, 0.2], &[-0.3, 0.7], 1).unwrap();
        assert!(r.value.abs() < 1e-9, "{r:?}");
        assert_eq!(r.replay(&euclid(2)).unwrap().value, r.value);
        let f = BraceFunctional::type_sup(euclid(2), 2.0, 1.0).unwrap();
        let r = midpoint_type_check(&f, &[1.0, 0.2], &[-0.3, 0.7], 1).unwrap();
        assert!(r.value.abs() < 1e-9, "{r:?}");
    }

    #[test]
    fn equivalent_norms() {
        let f = BraceFunctional::cotype(euclid(2), 2.0, 1.0).unwrap();
        let v = equivalent_norm_cotype(&f, &[3.0, 4.0], 2).unwrap();
        assert!((v - 5.0 * 2f64.sqrt()).abs() < 1e-9);
        assert_eq!(equivalent_norm_cotype(&f, &[0.0, 0.0], 2).unwrap(), 0.0);

        let f = BraceFunctional::type_sup(euclid(2), 2.0, 1.0).unwrap();
        let v = equivalent_norm_type(&f, &[3.0, 4.0], 1, 1, 8).unwrap();
        assert!((v.value - 5.0 / 2f64.sqrt()).abs() < 1e-6, "{v:?}");
        assert_eq!(
            equivalent_norm_type(&f, &[0.0, 0.0], 1, 1, 8)
                .unwrap()
                .value,
            0.0
        );
    }

    #[test]
    fn decomposition_identities() {
        let op = euclid(2);
        let f = BraceFunctional::type_sup(op.clone(), 2.0, 1.0).unwrap();
        let y = [1.0, -0.5];
        let d = equivalent_norm_type(&f, &y, 1, 1, 8).unwrap().decomposition;
        for reps in [1, 2] {
            let r = padding_identity_check(&op, &d, reps).unwrap();
            assert!(r.value <= 1e-12);
        }
        let r = smoothness_step_check(&f, &y, &[0.0, 0.0], &d, 1).unwrap();
        assert_eq!(r.value, 0.0);
        let r = smoothness_step_check(&f, &y, &[0.25, 0.5], &d, 1).unwrap();
        assert!(r.value <= 1e-9, "{r:?}");
        assert_eq!(r.replay(&op).unwrap().value, r.value);
        let r = norm_midpoint_check(&f, &y, &[0.2, 0.9], 1, 1, 8).unwrap();
        assert!(r.value <= 1e-9, "{r:?}");
    }

    #[test]
    fn chain_certificate_examples() {
        let norm = Norm::lp(3.0, 2).unwrap();
        let r = lemma5_certificate(|x| Ok(norm.eval(x)), &[1.0, 0.3], &[-0.2, 0.8], 6).unwrap();
        assert!(r.value <= 1e-12, "{r:?}");
        assert!(matches!(
            lemma5_certificate(|x| Ok(norm.eval(x).powi(2)), &[1.0, 0.3], &[-0.2, 0.8], 6),
            Err(Error::HomogeneityViolation { .. })
        ));
        let r = lemma5_certificate(|x| Ok(norm.eval(x)), &[0.0, 0.0], &[-0.2, 0.8], 6).unwrap();
        assert!(r.value <= 0.0);
    }
}
