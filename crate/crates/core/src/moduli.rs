//! Defect functionals for the smoothness, convexity, and martingale
//! type/cotype inequalities, and lower-bound estimates of their best constants.
//!
//! Every inequality is reported as a [`DefectReport`]: `value = lhs - rhs`,
//! so a nonpositive value means the inequality holds at the supplied
//! constant. `power_gap` is the same comparison with both sides raised to the
//! exponent and expanded, which is the form in which the depth-1 and
//! telescoping identities hold exactly.
//!
//! Constants are estimated from below by [`best_constant`]: a seeded
//! multi-start search over configurations maximizing the smallest constant
//! that the configuration forces.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::dyadic::{pairing, StepFunction};
use crate::engine::{form_ratio, rounding_budget, safe_ratio, Form, SeqEngine};
use crate::error::{check_constant, check_dim, Error, Result};
use crate::martingale::{apply_operator, from_rademacher, to_step, DifferenceSequence, Part};
use crate::numeric::extended_f64;
use crate::renorm::Decomposition;
use crate::search::{self, SearchOptions, VectorObjective};
use crate::spaces::{dual_exponent, pow, LinearOperator, Norm};

/// A witness ratio this far above the operator-norm reference marks the
/// constant as unbounded.
pub const UNBOUNDED_FACTOR: f64 = 1e3;

/// Which constant is being estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstantKind {
    /// uniform p-smoothness
    Smooth,
    /// uniform q-convexity
    Convex,
    StrongType,
    StrongCotype,
    PlainType,
    PlainCotype,
    OperatorNorm,
}

impl ConstantKind {
    pub fn is_type_side(self) -> bool {
        matches!(
            self,
            ConstantKind::Smooth | ConstantKind::StrongType | ConstantKind::PlainType
        )
    }

    pub fn is_martingale(self) -> bool {
        matches!(
            self,
            ConstantKind::StrongType
                | ConstantKind::StrongCotype
                | ConstantKind::PlainType
                | ConstantKind::PlainCotype
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            ConstantKind::Smooth => "smooth",
            ConstantKind::Convex => "convex",
            ConstantKind::StrongType => "strong_type",
            ConstantKind::StrongCotype => "strong_cotype",
            ConstantKind::PlainType => "plain_type",
            ConstantKind::PlainCotype => "plain_cotype",
            ConstantKind::OperatorNorm => "operator_norm",
        }
    }

    /// Type-side exponents live in `[1, 2]`, cotype-side ones in `[2, ∞)`.
    pub fn check_exponent(self, e: f64) -> Result<()> {
        match self {
            ConstantKind::OperatorNorm => Ok(()),
            k if k.is_type_side() => check_type_exponent(e),
            _ => check_cotype_exponent(e),
        }
    }

    fn form(self) -> Option<Form> {
        match self {
            ConstantKind::StrongType => Some(Form::StrongType),
            ConstantKind::StrongCotype => Some(Form::StrongCotype),
            ConstantKind::PlainType => Some(Form::PlainType),
            ConstantKind::PlainCotype => Some(Form::PlainCotype),
            _ => None,
        }
    }
}

impl fmt::Display for ConstantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ConstantKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "smooth" => ConstantKind::Smooth,
            "convex" => ConstantKind::Convex,
            "strong_type" => ConstantKind::StrongType,
            "strong_cotype" => ConstantKind::StrongCotype,
            "plain_type" => ConstantKind::PlainType,
            "plain_cotype" => ConstantKind::PlainCotype,
            "operator_norm" => ConstantKind::OperatorNorm,
            other => return Err(Error::Malformed(format!("unknown constant kind {other:?}"))),
        })
    }
}

/// Parses `"smooth_1.5"`, `"convex_3"`, `"strong_type_2"`, ….
pub fn parse_kind_spec(spec: &str) -> Result<(ConstantKind, f64)> {
    let (name, exponent) = spec
        .rsplit_once('_')
        .ok_or_else(|| Error::Malformed(format!("expected <kind>_<exponent>, got {spec:?}")))?;
    let kind: ConstantKind = name.parse()?;
    let e: f64 = exponent
        .parse()
        .map_err(|_| Error::Malformed(format!("bad exponent in {spec:?}")))?;
    kind.check_exponent(e)?;
    Ok((kind, e))
}

pub(crate) fn check_type_exponent(p: f64) -> Result<()> {
    if (1.0..=2.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidExponent {
            value: p,
            reason: "type-side exponents must lie in [1, 2]",
        })
    }
}

pub(crate) fn check_cotype_exponent(q: f64) -> Result<()> {
    if q.is_finite() && q >= 2.0 {
        Ok(())
    } else {
        Err(Error::InvalidExponent {
            value: q,
            reason: "cotype-side exponents must lie in [2, inf)",
        })
    }
}

/// The configuration behind a reported number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Witness {
    Convexity {
        x_plus: Vec<f64>,
        x_minus: Vec<f64>,
    },
    Smoothness {
        x: Vec<f64>,
        y: Vec<f64>,
    },
    /// `y` is present for the strong type inequality only.
    Martingale {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        y: Option<Vec<f64>>,
        seq: DifferenceSequence,
    },
    Vector {
        x: Vec<f64>,
    },
    /// Brace witnesses for `x_±` at depth `depth` and for the midpoint at
    /// `depth + 1`.
    Midpoint {
        x_plus: Vec<f64>,
        x_minus: Vec<f64>,
        depth: usize,
        plus: DifferenceSequence,
        minus: DifferenceSequence,
        mid: DifferenceSequence,
    },
    /// A decomposition together with the decompositions it is compared to
    /// (shifted, duplicated, or the two halves of a combination).
    Decomposition {
        decomposition: Decomposition,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        related: Vec<Decomposition>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        shift: Option<Vec<f64>>,
    },
    Chain {
        x_plus: Vec<f64>,
        x_minus: Vec<f64>,
        chain_depth: usize,
        #[serde(with = "extended_f64")]
        worst_lambda: f64,
    },
    PairingSplit {
        y: Vec<f64>,
        seq: DifferenceSequence,
        g_depth: usize,
        g: Vec<f64>,
    },
    Scalars {
        values: Vec<f64>,
    },
    /// Two step functions of a common depth, flattened leaf by leaf.
    Steps {
        depth: usize,
        f: Vec<f64>,
        g: Vec<f64>,
    },
}

/// Which inequality or identity a [`DefectReport`] evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Convexity,
    Smoothness,
    StrongCotype,
    StrongType,
    PlainCotype,
    PlainType,
    TelescopeType,
    TelescopeCotype,
    MidpointCotype,
    MidpointType,
    SmoothnessStep,
    Padding,
    Chain,
    PairingSplit,
    LambdaBalance,
    NormMidpoint,
    Symmetry,
    Holder,
}

/// `lhs - rhs` of one inequality at one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectReport {
    pub check: Check,
    pub exponent: f64,
    pub c: f64,
    #[serde(with = "extended_f64")]
    pub lhs: f64,
    #[serde(with = "extended_f64")]
    pub rhs: f64,
    #[serde(with = "extended_f64")]
    pub value: f64,
    #[serde(with = "extended_f64")]
    pub power_gap: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<usize>,
    pub witness: Witness,
}

impl DefectReport {
    pub fn holds(&self, tol: f64) -> bool {
        self.value <= tol
    }

    /// Re-evaluates the inequalities of record from the stored witness.
    pub fn replay(&self, op: &LinearOperator) -> Result<DefectReport> {
        let (e, c) = (self.exponent, self.c);
        match (&self.check, &self.witness) {
            (Check::Convexity, Witness::Convexity { x_plus, x_minus }) => {
                convexity_defect(op, x_plus, x_minus, e, c)
            }
            (Check::Smoothness, Witness::Smoothness { x, y }) => smoothness_defect(op, x, y, e, c),
            (Check::StrongCotype, Witness::Martingale { seq, .. }) => {
                strong_cotype_defect(op, seq, e, c)
            }
            (Check::StrongType, Witness::Martingale { y: Some(y), seq }) => {
                strong_type_defect(op, y, seq, e, c)
            }
            (Check::PlainType, Witness::Martingale { seq, .. }) => plain_type_defect(op, seq, e, c),
            (Check::PlainCotype, Witness::Martingale { seq, .. }) => {
                plain_cotype_defect(op, seq, e, c)
            }
            (Check::TelescopeType, Witness::Martingale { y: Some(y), seq }) => {
                let level = self.level.unwrap_or(1);
                telescoping_type(op, y, seq, e, c)?
                    .into_iter()
                    .nth(level.saturating_sub(1))
                    .ok_or(Error::IndexOutOfRange {
                        index: level,
                        limit: seq.depth(),
                    })
            }
            (Check::TelescopeCotype, Witness::Martingale { seq, .. }) => {
                let level = self.level.unwrap_or(1);
                telescoping_cotype(op, seq, e, c)?
                    .into_iter()
                    .nth(level.saturating_sub(1))
                    .ok_or(Error::IndexOutOfRange {
                        index: level,
                        limit: seq.depth(),
                    })
            }
            (Check::Symmetry, Witness::Martingale { seq, .. }) => {
                symmetry_defect(op.domain(), seq, self.level.unwrap_or(1), e)
            }
            (Check::Holder, Witness::Steps { depth, f, g }) => {
                let f = StepFunction::from_flat(*depth, op.domain().clone(), f.clone())?;
                let g = StepFunction::from_flat(*depth, op.domain().dual()?, g.clone())?;
                holder_defect(&f, &g, e)
            }
            _ => crate::renorm::replay_defect(op, self)
                .or_else(|_| crate::duality::replay_defect(op, self)),
        }
    }
}

fn report(
    check: Check,
    exponent: f64,
    c: f64,
    lhs: f64,
    rhs: f64,
    power_gap: f64,
    witness: Witness,
) -> DefectReport {
    DefectReport {
        check,
        exponent,
        c,
        lhs,
        rhs,
        value: lhs - rhs,
        power_gap,
        level: None,
        witness,
    }
}

/// `B = (‖a‖^e + ‖b‖^e)/2 - ‖m‖^e` given the three norms.
fn midpoint_bracket(a: f64, b: f64, m: f64, e: f64) -> f64 {
    (pow(a, e) + pow(b, e)) / 2.0 - pow(m, e)
}

/// Uniform `q`-convexity at `(x_+, x_-)`:
/// `‖T(x_+ - x_-)/2‖ ≤ c ((‖x_+‖^q + ‖x_-‖^q)/2 - ‖(x_+ + x_-)/2‖^q)^{1/q}`.
pub fn convexity_defect(
    op: &LinearOperator,
    x_plus: &[f64],
    x_minus: &[f64],
    q: f64,
    c: f64,
) -> Result<DefectReport> {
    check_cotype_exponent(q)?;
    check_constant(c)?;
    check_dim(op.domain_dim(), x_plus.len())?;
    check_dim(op.domain_dim(), x_minus.len())?;
    let half_diff: Vec<f64> = x_plus
        .iter()
        .zip(x_minus)
        .map(|(a, b)| (a - b) / 2.0)
        .collect();
    let mid: Vec<f64> = x_plus
        .iter()
        .zip(x_minus)
        .map(|(a, b)| (a + b) / 2.0)
        .collect();
    let x = op.domain();
    let bracket = midpoint_bracket(x.eval(x_plus), x.eval(x_minus), x.eval(&mid), q);
    let lhs = op.codomain().eval(&op.apply(&half_diff));
    let rhs = c * bracket.max(0.0).powf(q.recip());
    Ok(report(
        Check::Convexity,
        q,
        c,
        lhs,
        rhs,
        pow(lhs, q) - pow(c, q) * bracket,
        Witness::Convexity {
            x_plus: x_plus.to_vec(),
            x_minus: x_minus.to_vec(),
        },
    ))
}

/// The centered form: `x_± = x_0 ± x`.
pub fn convexity_defect_centered(
    op: &LinearOperator,
    x: &[f64],
    x0: &[f64],
    q: f64,
    c: f64,
) -> Result<DefectReport> {
    check_dim(x0.len(), x.len())?;
    let plus: Vec<f64> = x0.iter().zip(x).map(|(a, b)| a + b).collect();
    let minus: Vec<f64> = x0.iter().zip(x).map(|(a, b)| a - b).collect();
    convexity_defect(op, &plus, &minus, q, c)
}

/// Uniform `p`-smoothness at `(x, y)`:
/// `((‖y + Tx‖^p + ‖y - Tx‖^p)/2 - ‖y‖^p)^{1/p} ≤ c ‖x‖`.
pub fn smoothness_defect(
    op: &LinearOperator,
    x: &[f64],
    y: &[f64],
    p: f64,
    c: f64,
) -> Result<DefectReport> {
    check_type_exponent(p)?;
    check_constant(c)?;
    check_dim(op.domain_dim(), x.len())?;
    check_dim(op.codomain_dim(), y.len())?;
    let tx = op.apply(x);
    let plus: Vec<f64> = y.iter().zip(&tx).map(|(a, b)| a + b).collect();
    let minus: Vec<f64> = y.iter().zip(&tx).map(|(a, b)| a - b).collect();
    let ny = op.codomain();
    let bracket = midpoint_bracket(ny.eval(&plus), ny.eval(&minus), ny.eval(y), p);
    let xn = op.domain().eval(x);
    let lhs = bracket.max(0.0).powf(p.recip());
    let rhs = c * xn;
    Ok(report(
        Check::Smoothness,
        p,
        c,
        lhs,
        rhs,
        bracket - pow(c, p) * pow(xn, p),
        Witness::Smoothness {
            x: x.to_vec(),
            y: y.to_vec(),
        },
    ))
}

/// `‖Σ_k T d_k‖_{L_e}^e` over the leaves of the image sequence, with
/// `offset` added to every leaf.
fn image_sum_pow(
    op: &LinearOperator,
    seq: &DifferenceSequence,
    offset: Option<&[f64]>,
    e: f64,
) -> Result<f64> {
    let mut image = apply_operator(op, seq)?;
    if let Some(y) = offset {
        let base: Vec<f64> = match image.initial() {
            Some(init) => init.iter().zip(y).map(|(a, b)| a + b).collect(),
            None => y.to_vec(),
        };
        image = image.with_initial(base)?;
    }
    to_step(&image, image.depth(), Part::PartialSum, op.codomain())?.lp_norm_pow(e)
}

fn domain_sum_pow(op: &LinearOperator, seq: &DifferenceSequence, e: f64) -> Result<f64> {
    to_step(seq, seq.depth(), Part::PartialSum, op.domain())?.lp_norm_pow(e)
}

/// `Σ_{k ≥ from} ‖d_k‖_{L_e}^e` in the domain, or of `T d_k` in the codomain.
fn difference_pow_sum(
    op: &LinearOperator,
    seq: &DifferenceSequence,
    e: f64,
    through_operator: bool,
    from: usize,
) -> Result<f64> {
    let mapped;
    let (seq, space) = if through_operator {
        mapped = apply_operator(op, seq)?;
        (&mapped, op.codomain())
    } else {
        (seq, op.domain())
    };
    let mut total = 0.0;
    for k in from..=seq.depth() {
        let d: StepFunction = to_step(seq, k, Part::Difference, space)?;
        total += d.lp_norm_pow(e)?;
    }
    Ok(total)
}

/// Strong martingale cotype `q` for a sequence with `d_0 ≡ x`:
/// `(‖x‖^q + c^{-q} Σ_{k≥1} ‖T d_k‖_{L_q}^q)^{1/q} ≤ ‖Σ_{k≥0} d_k‖_{L_q}`.
pub fn strong_cotype_defect(
    op: &LinearOperator,
    seq: &DifferenceSequence,
    q: f64,
    c: f64,
) -> Result<DefectReport> {
    check_cotype_exponent(q)?;
    check_constant(c)?;
    check_dim(op.domain_dim(), seq.dim())?;
    let x = seq.initial().ok_or(Error::MissingInitial)?;
    let x_pow = op.domain().eval_pow(x, q);
    let image_levels = difference_pow_sum(op, seq, q, true, 1)?;
    let total = domain_sum_pow(op, seq, q)?;
    let left = x_pow + image_levels / pow(c, q);
    Ok(report(
        Check::StrongCotype,
        q,
        c,
        left.powf(q.recip()),
        total.powf(q.recip()),
        left - total,
        Witness::Martingale {
            y: None,
            seq: seq.clone(),
        },
    ))
}

/// Strong martingale type `p`:
/// `‖y + Σ_{k≥1} T d_k‖_{L_p} ≤ (‖y‖^p + c^p Σ_{k≥1} ‖d_k‖_{L_p}^p)^{1/p}`.
/// A `d_0` term must be folded into `y` by the caller (`y ← y + Tx`).
pub fn strong_type_defect(
    op: &LinearOperator,
    y: &[f64],
    seq: &DifferenceSequence,
    p: f64,
    c: f64,
) -> Result<DefectReport> {
    check_type_exponent(p)?;
    check_constant(c)?;
    check_dim(op.domain_dim(), seq.dim())?;
    check_dim(op.codomain_dim(), y.len())?;
    if seq.initial().is_some() {
        return Err(Error::UnexpectedInitial);
    }
    let total = image_sum_pow(op, seq, Some(y), p)?;
    let levels = difference_pow_sum(op, seq, p, false, 1)?;
    let right = op.codomain().eval_pow(y, p) + pow(c, p) * levels;
    Ok(report(
        Check::StrongType,
        p,
        c,
        total.powf(p.recip()),
        right.powf(p.recip()),
        total - right,
        Witness::Martingale {
            y: Some(y.to_vec()),
            seq: seq.clone(),
        },
    ))
}

/// Martingale type `p`: `‖Σ_{k≥0} T d_k‖_{L_p} ≤ c (Σ_{k≥0} ‖d_k‖_{L_p}^p)^{1/p}`.
pub fn plain_type_defect(
    op: &LinearOperator,
    seq: &DifferenceSequence,
    p: f64,
    c: f64,
) -> Result<DefectReport> {
    check_type_exponent(p)?;
    check_constant(c)?;
    check_dim(op.domain_dim(), seq.dim())?;
    let total = image_sum_pow(op, seq, None, p)?;
    let levels = difference_pow_sum(op, seq, p, false, 0)?;
    Ok(report(
        Check::PlainType,
        p,
        c,
        total.powf(p.recip()),
        c * levels.powf(p.recip()),
        total - pow(c, p) * levels,
        Witness::Martingale {
            y: None,
            seq: seq.clone(),
        },
    ))
}

/// Martingale cotype `q`: `(c^{-q} Σ_{k≥0} ‖T d_k‖_{L_q}^q)^{1/q} ≤ ‖Σ_{k≥0} d_k‖_{L_q}`.
pub fn plain_cotype_defect(
    op: &LinearOperator,
    seq: &DifferenceSequence,
    q: f64,
    c: f64,
) -> Result<DefectReport> {
    check_cotype_exponent(q)?;
    check_constant(c)?;
    check_dim(op.domain_dim(), seq.dim())?;
    let levels = difference_pow_sum(op, seq, q, true, 0)?;
    let total = domain_sum_pow(op, seq, q)?;
    Ok(report(
        Check::PlainCotype,
        q,
        c,
        (levels / pow(c, q)).powf(q.recip()),
        total.powf(q.recip()),
        levels / pow(c, q) - total,
        Witness::Martingale {
            y: None,
            seq: seq.clone(),
        },
    ))
}

/// `|gap(strong type at d_1 = x r_1) - gap(smoothness at (x, y))|` in power form.
pub fn depth1_type_reduction(
    op: &LinearOperator,
    x: &[f64],
    y: &[f64],
    p: f64,
    c: f64,
) -> Result<f64> {
    let seq = from_rademacher(&[vec![0.0; x.len()], x.to_vec()])?.without_initial();
    let strong = strong_type_defect(op, y, &seq, p, c)?;
    let smooth = smoothness_defect(op, x, y, p, c)?;
    Ok((strong.power_gap - smooth.power_gap).abs())
}

/// `|gap(strong cotype at x_0 + x_1 r_1) - c^{-q} gap(convexity at x_0 ± x_1)|`,
/// compared on the scale of the strong inequality.
pub fn depth1_cotype_reduction(
    op: &LinearOperator,
    x0: &[f64],
    x1: &[f64],
    q: f64,
    c: f64,
) -> Result<f64> {
    let seq = from_rademacher(&[x0.to_vec(), x1.to_vec()])?;
    let strong = strong_cotype_defect(op, &seq, q, c)?;
    let convex = convexity_defect_centered(op, x1, x0, q, c)?;
    Ok((strong.power_gap - convex.power_gap / pow(c, q)).abs())
}

/// Level-wise steps `‖y + T f_k‖^p ≤ ‖y + T f_{k-1}‖^p + c^p ‖d_k‖^p`,
/// `k = 1..n`. The power gaps sum to the power gap of the strong type
/// inequality.
pub fn telescoping_type(
    op: &LinearOperator,
    y: &[f64],
    seq: &DifferenceSequence,
    p: f64,
    c: f64,
) -> Result<Vec<DefectReport>> {
    check_type_exponent(p)?;
    check_constant(c)?;
    check_dim(op.codomain_dim(), y.len())?;
    if seq.initial().is_some() {
        return Err(Error::UnexpectedInitial);
    }
    let image = apply_operator(op, seq)?.with_initial(y.to_vec())?;
    let space = op.codomain();
    let mut prev = to_step(&image, 0, Part::PartialSum, space)?.lp_norm_pow(p)?;
    let mut out = Vec::with_capacity(seq.depth());
    for k in 1..=seq.depth() {
        let cur = to_step(&image, k, Part::PartialSum, space)?.lp_norm_pow(p)?;
        let dk = to_step(seq, k, Part::Difference, op.domain())?.lp_norm_pow(p)?;
        let rhs = prev + pow(c, p) * dk;
        let mut r = report(
            Check::TelescopeType,
            p,
            c,
            cur,
            rhs,
            cur - rhs,
            Witness::Martingale {
                y: Some(y.to_vec()),
                seq: seq.clone(),
            },
        );
        r.level = Some(k);
        out.push(r);
        prev = cur;
    }
    Ok(out)
}

/// Level-wise steps `‖T d_k‖^q ≤ c^q (‖f_k‖^q - ‖f_{k-1}‖^q)` for a sequence
/// with `d_0 ≡ x`.
pub fn telescoping_cotype(
    op: &LinearOperator,
    seq: &DifferenceSequence,
    q: f64,
    c: f64,
) -> Result<Vec<DefectReport>> {
    check_cotype_exponent(q)?;
    check_constant(c)?;
    if seq.initial().is_none() {
        return Err(Error::MissingInitial);
    }
    let image = apply_operator(op, seq)?;
    let space = op.domain();
    let mut prev = to_step(seq, 0, Part::PartialSum, space)?.lp_norm_pow(q)?;
    let mut out = Vec::with_capacity(seq.depth());
    for k in 1..=seq.depth() {
        let cur = to_step(seq, k, Part::PartialSum, space)?.lp_norm_pow(q)?;
        let tdk = to_step(&image, k, Part::Difference, op.codomain())?.lp_norm_pow(q)?;
        let rhs = pow(c, q) * (cur - prev);
        let mut r = report(
            Check::TelescopeCotype,
            q,
            c,
            tdk,
            rhs,
            tdk - rhs,
            Witness::Martingale {
                y: None,
                seq: seq.clone(),
            },
        );
        r.level = Some(k);
        out.push(r);
        prev = cur;
    }
    Ok(out)
}

/// `|‖f_{k-1} + d_k‖_{L_q} - ‖f_{k-1} - d_k‖_{L_q}|`. Flipping the sign of
/// the newest difference permutes the level-`k` leaves, so this vanishes.
pub fn symmetry_defect(
    space: &Norm,
    seq: &DifferenceSequence,
    k: usize,
    q: f64,
) -> Result<DefectReport> {
    check_dim(space.dim(), seq.dim())?;
    if k == 0 || k > seq.depth() {
        return Err(Error::IndexOutOfRange {
            index: k,
            limit: seq.depth(),
        });
    }
    let prev = to_step(seq, k - 1, Part::PartialSum, space)?;
    let d = to_step(seq, k, Part::Difference, space)?;
    let lhs = prev.add(&d)?.lp_norm(q)?;
    let rhs = prev.sub(&d)?.lp_norm(q)?;
    let mut r = report(
        Check::Symmetry,
        q,
        1.0,
        lhs,
        rhs,
        (pow(lhs, q) - pow(rhs, q)).abs(),
        Witness::Martingale {
            y: None,
            seq: seq.clone(),
        },
    );
    r.value = (lhs - rhs).abs();
    r.level = Some(k);
    Ok(r)
}

/// `|⟨f, g⟩| - ‖f‖_{L_p} ‖g‖_{L_{p'}}` with `g` measured in the dual norm.
pub fn holder_defect(f: &StepFunction, g: &StepFunction, p: f64) -> Result<DefectReport> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::InvalidExponent {
            value: p,
            reason: "Hölder pairs need 1 < p < inf",
        });
    }
    let depth = f.depth().max(g.depth());
    let (f, g) = (f.refine(depth)?, g.refine(depth)?);
    let lhs = pairing(&f, &g)?.abs();
    let rhs = f.lp_norm(p)? * g.lp_norm(dual_exponent(p))?;
    Ok(report(
        Check::Holder,
        p,
        1.0,
        lhs,
        rhs,
        lhs - rhs,
        Witness::Steps {
            depth,
            f: f.flat().to_vec(),
            g: g.flat().to_vec(),
        },
    ))
}

/// A best-constant lower bound and the configuration that forces it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantEstimate {
    pub kind: ConstantKind,
    pub exponent: f64,
    #[serde(with = "extended_f64")]
    pub lower_bound: f64,
    pub unbounded: bool,
    pub seed: u64,
    pub budget: usize,
    pub evaluations: u64,
    pub witness: Witness,
}

impl ConstantEstimate {
    /// Recomputes the ratio forced by the stored witness.
    pub fn replay(&self, op: &LinearOperator) -> Result<f64> {
        Ok(evaluate_ratio(self.kind, op, self.exponent, &self.witness)?.ratio)
    }
}

/// The constant a single configuration forces, with the raw (uncorrected)
/// numerator and denominator used for degeneracy detection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioEval {
    pub ratio: f64,
    pub raw_num: f64,
    pub raw_den: f64,
    pub magnitude: f64,
}

fn pair_ratio(
    kind: ConstantKind,
    op: &LinearOperator,
    e: f64,
    first: &[f64],
    second: &[f64],
) -> RatioEval {
    let root = |v: f64| v.max(0.0).powf(e.recip());
    match kind {
        ConstantKind::Smooth => {
            let (x, y) = (first, second);
            let tx = op.apply(x);
            let ny = op.codomain();
            let plus: Vec<f64> = y.iter().zip(&tx).map(|(a, b)| a + b).collect();
            let minus: Vec<f64> = y.iter().zip(&tx).map(|(a, b)| a - b).collect();
            let (a, b, m) = (
                ny.eval_pow(&plus, e),
                ny.eval_pow(&minus, e),
                ny.eval_pow(y, e),
            );
            let bracket = (a + b) / 2.0 - m;
            let err = rounding_budget(ny.dim(), 1, e) * (a + b + m);
            let den = op.domain().eval(x);
            let magnitude = root(a.max(b).max(m)).max(den);
            RatioEval {
                ratio: safe_ratio(root(bracket - err), den, magnitude),
                raw_num: root(bracket),
                raw_den: den,
                magnitude,
            }
        }
        ConstantKind::Convex => {
            let (xp, xm) = (first, second);
            let nx = op.domain();
            let half: Vec<f64> = xp.iter().zip(xm).map(|(a, b)| (a - b) / 2.0).collect();
            let mid: Vec<f64> = xp.iter().zip(xm).map(|(a, b)| (a + b) / 2.0).collect();
            let (a, b, m) = (nx.eval_pow(xp, e), nx.eval_pow(xm, e), nx.eval_pow(&mid, e));
            let bracket = (a + b) / 2.0 - m;
            let err = rounding_budget(nx.dim(), 1, e) * (a + b + m);
            let num = op.codomain().eval(&op.apply(&half));
            let magnitude = root(a.max(b)).max(num);
            RatioEval {
                ratio: safe_ratio(num, root(bracket.max(0.0) + err), magnitude),
                raw_num: num,
                raw_den: root(bracket),
                magnitude,
            }
        }
        _ => unreachable!("pair kinds only"),
    }
}

fn sequence_ratio(
    form: Form,
    op: &LinearOperator,
    e: f64,
    base: &[f64],
    seq: &DifferenceSequence,
) -> RatioEval {
    let engine = SeqEngine::from_sequence(op, form, e, base, seq);
    let (s, l, b) = (
        engine.sum_mean_pow(),
        engine.level_total(),
        engine.base_pow(),
    );
    let root = |v: f64| v.max(0.0).powf(e.recip());
    let budget = rounding_budget(op.domain_dim().max(op.codomain_dim()), seq.depth(), e);
    let (raw_num, raw_den) = match form {
        Form::StrongType => (root(s - b), root(l)),
        Form::StrongCotype => (root(l), root(s - b)),
        Form::PlainType => (root(s), root(b + l)),
        _ => (root(b + l), root(s)),
    };
    RatioEval {
        ratio: form_ratio(form, e, s, l, b, budget),
        raw_num,
        raw_den,
        magnitude: root(s.max(b).max(l)),
    }
}

/// The smallest constant `c` for which the inequality of `kind` holds at the
/// witness configuration.
pub fn evaluate_ratio(
    kind: ConstantKind,
    op: &LinearOperator,
    exponent: f64,
    witness: &Witness,
) -> Result<RatioEval> {
    kind.check_exponent(exponent)?;
    let shape = || Error::Malformed(format!("witness does not fit {kind}"));
    match (kind, witness) {
        (ConstantKind::Smooth, Witness::Smoothness { x, y }) => {
            check_dim(op.domain_dim(), x.len())?;
            check_dim(op.codomain_dim(), y.len())?;
            Ok(pair_ratio(kind, op, exponent, x, y))
        }
        (ConstantKind::Convex, Witness::Convexity { x_plus, x_minus }) => {
            check_dim(op.domain_dim(), x_plus.len())?;
            check_dim(op.domain_dim(), x_minus.len())?;
            Ok(pair_ratio(kind, op, exponent, x_plus, x_minus))
        }
        (ConstantKind::OperatorNorm, Witness::Vector { x }) => {
            check_dim(op.domain_dim(), x.len())?;
            let den = op.domain().eval(x);
            let num = op.codomain().eval(&op.apply(x));
            let ratio = if den > 0.0 { num / den } else { 0.0 };
            Ok(RatioEval {
                ratio,
                raw_num: num,
                raw_den: den,
                magnitude: num.max(den),
            })
        }
        (k, Witness::Martingale { y, seq }) if k.is_martingale() => {
            check_dim(op.domain_dim(), seq.dim())?;
            let form = k.form().ok_or_else(shape)?;
            let base = match (k, y) {
                (ConstantKind::StrongType, Some(y)) => {
                    check_dim(op.codomain_dim(), y.len())?;
                    y.clone()
                }
                (ConstantKind::StrongType, None) => return Err(shape()),
                _ => seq
                    .initial()
                    .map(<[f64]>::to_vec)
                    .unwrap_or_else(|| vec![0.0; seq.dim()]),
            };
            Ok(sequence_ratio(form, op, exponent, &base, seq))
        }
        _ => Err(shape()),
    }
}

/// Cheap lower bound for `‖T‖` from basis and corner directions; the
/// reference scale for the unbounded flag.
pub fn reference_scale(op: &LinearOperator) -> f64 {
    search::signed_patterns(op.domain_dim())
        .iter()
        .map(|x| op.codomain().eval(&op.apply(x)) / op.domain().eval(x))
        .fold(0.0, f64::max)
}

fn is_unbounded(eval: &RatioEval, reference: f64) -> bool {
    let literal = eval.raw_den < 1e-12 * eval.magnitude && eval.raw_num > 1e-6 * eval.magnitude;
    let relative = reference > 0.0 && eval.ratio >= UNBOUNDED_FACTOR * reference;
    literal || relative
}

/// Search configuration for [`best_constant`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateOptions {
    /// Deepest martingale searched by the martingale kinds.
    pub depth_cap: usize,
    /// Number of indexed random starts.
    pub budget: usize,
    pub seed: u64,
    /// Starts that receive coordinate polish.
    pub polish_top: usize,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions {
            depth_cap: 3,
            budget: 2000,
            seed: 0,
            polish_top: 8,
        }
    }
}

impl EstimateOptions {
    pub fn new(budget: usize, seed: u64) -> Self {
        EstimateOptions {
            budget,
            seed,
            ..Default::default()
        }
    }

    pub fn depth_cap(mut self, depth: usize) -> Self {
        self.depth_cap = depth;
        self
    }

    pub fn polish_top(mut self, k: usize) -> Self {
        self.polish_top = k;
        self
    }

    fn search(&self) -> SearchOptions {
        SearchOptions::new(self.budget.max(1), self.seed).polish_top(self.polish_top)
    }
}

#[derive(Clone)]
struct PairObjective<'a> {
    kind: ConstantKind,
    op: &'a LinearOperator,
    e: f64,
    split: usize,
    params: Vec<f64>,
}

impl VectorObjective for PairObjective<'_> {
    fn params(&self) -> &[f64] {
        &self.params
    }

    fn set(&mut self, i: usize, v: f64) {
        self.params[i] = v;
    }

    fn score(&mut self) -> f64 {
        let (a, b) = self.params.split_at(self.split);
        pair_ratio(self.kind, self.op, self.e, a, b).ratio
    }
}

/// Tiny offset used by the structured starts that probe corners of the unit
/// ball (`y` at a corner, `x` nearly zero).
const PROBE: f64 = 1.0 / (1u64 << 20) as f64;

/// Structured `(first, second)` starts: corners, zeros, and corner probes.
fn structured_pairs(kind: ConstantKind, m_in: usize, m_out: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut out = Vec::new();
    match kind {
        ConstantKind::Smooth => {
            let xs = search::signed_patterns(m_in);
            let mut ys = vec![vec![0.0; m_out]];
            ys.extend(search::signed_patterns(m_out));
            for y in &ys {
                for x in &xs {
                    out.push((x.clone(), y.clone()));
                    if y.iter().any(|v| *v != 0.0) {
                        out.push((x.iter().map(|v| v * PROBE).collect(), y.clone()));
                    }
                }
            }
        }
        ConstantKind::Convex => {
            let pats = search::signed_patterns(m_in);
            let mut firsts = vec![vec![0.0; m_in]];
            firsts.extend(pats.iter().cloned());
            let mut seconds = firsts.clone();
            seconds.extend(pats.iter().map(|p| p.iter().map(|v| -v).collect()));
            for a in &firsts {
                for b in &seconds {
                    if a != b {
                        out.push((a.clone(), b.clone()));
                    }
                }
            }
        }
        _ => {}
    }
    out
}

fn martingale_structured(
    kind: ConstantKind,
    m_in: usize,
    m_out: usize,
) -> Vec<(Vec<f64>, Vec<Vec<f64>>)> {
    let level = |x: &[f64]| vec![x.to_vec()];
    match kind {
        ConstantKind::StrongType => structured_pairs(ConstantKind::Smooth, m_in, m_out)
            .into_iter()
            .map(|(x, y)| (y, level(&x)))
            .collect(),
        ConstantKind::StrongCotype => structured_pairs(ConstantKind::Convex, m_in, m_out)
            .into_iter()
            .map(|(a, b)| {
                let mid: Vec<f64> = a.iter().zip(&b).map(|(a, b)| (a + b) / 2.0).collect();
                let half: Vec<f64> = a.iter().zip(&b).map(|(a, b)| (a - b) / 2.0).collect();
                (mid, level(&half))
            })
            .collect(),
        _ => {
            let pats = search::signed_patterns(m_in);
            let mut out: Vec<(Vec<f64>, Vec<Vec<f64>>)> =
                pats.iter().map(|x| (x.clone(), Vec::new())).collect();
            for x in &pats {
                for v in &pats {
                    out.push((x.clone(), level(v)));
                }
            }
            out
        }
    }
}

/// Lower bound for the best constant of `kind` with exponent `exponent`.
///
/// Pair kinds search `(x, y)` / `(x_+, x_-)`; martingale kinds search
/// sequences of depth `1..=depth_cap` (`0..=depth_cap` for the plain kinds).
/// The result is deterministic in `options.seed` for any thread count.
pub fn best_constant(
    kind: ConstantKind,
    op: &LinearOperator,
    exponent: f64,
    options: &EstimateOptions,
) -> Result<ConstantEstimate> {
    kind.check_exponent(exponent)?;
    let (m_in, m_out) = (op.domain_dim(), op.codomain_dim());
    let search_opts = options.search();
    let (witness, evaluations) = match kind {
        ConstantKind::OperatorNorm => {
            return Ok(crate::spaces::operator_norm(
                op,
                options.budget,
                options.seed,
            ));
        }
        ConstantKind::Smooth | ConstantKind::Convex => {
            let structured = structured_pairs(kind, m_in, m_out);
            let second_dim = if kind == ConstantKind::Smooth {
                m_out
            } else {
                m_in
            };
            let outcome = search::maximize(&search_opts, |i, rng| {
                let (a, b) = match structured.get(i) {
                    Some(pair) => pair.clone(),
                    None => (
                        search::uniform_vector(rng, m_in, 1.0),
                        search::uniform_vector(rng, second_dim, 1.0),
                    ),
                };
                let mut params = a;
                params.extend(b);
                PairObjective {
                    kind,
                    op,
                    e: exponent,
                    split: m_in,
                    params,
                }
            });
            let (a, b) = outcome.state.params.split_at(m_in);
            let witness = if kind == ConstantKind::Smooth {
                Witness::Smoothness {
                    x: a.to_vec(),
                    y: b.to_vec(),
                }
            } else {
                Witness::Convexity {
                    x_plus: a.to_vec(),
                    x_minus: b.to_vec(),
                }
            };
            (witness, outcome.evaluations)
        }
        _ => {
            let form = kind.form().expect("martingale kind");
            let structured = martingale_structured(kind, m_in, m_out);
            let base_dim = if kind == ConstantKind::StrongType {
                m_out
            } else {
                m_in
            };
            let plain = matches!(kind, ConstantKind::PlainType | ConstantKind::PlainCotype);
            let cap = options.depth_cap.max(1);
            let outcome = search::maximize(&search_opts, |i, rng| {
                let (base, levels) = match structured.get(i) {
                    Some(s) => s.clone(),
                    None => {
                        let r = i - structured.len();
                        let depth = if plain { r % (cap + 1) } else { 1 + r % cap };
                        let base = search::uniform_vector(rng, base_dim, 1.0);
                        let levels = (0..depth)
                            .map(|k| search::uniform_vector(rng, (1 << k) * m_in, 1.0))
                            .collect();
                        (base, levels)
                    }
                };
                SeqEngine::new(op, form, exponent, &base, &levels)
            });
            let seq = outcome.state.to_sequence();
            let base = outcome.state.base().to_vec();
            let witness = if kind == ConstantKind::StrongType {
                Witness::Martingale { y: Some(base), seq }
            } else {
                Witness::Martingale {
                    y: None,
                    seq: seq.with_initial(base)?,
                }
            };
            (witness, outcome.evaluations)
        }
    };
    let eval = evaluate_ratio(kind, op, exponent, &witness)?;
    Ok(ConstantEstimate {
        kind,
        exponent,
        lower_bound: eval.ratio,
        unbounded: is_unbounded(&eval, reference_scale(op)),
        seed: options.seed,
        budget: options.budget,
        evaluations,
        witness,
    })
}

/// Grid of multiples of `step` in `[-radius, radius]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub step: f64,
    pub radius: f64,
}

impl Grid {
    pub fn new(step: f64, radius: f64) -> Self {
        Grid { step, radius }
    }

    pub fn points(&self) -> Vec<f64> {
        if self.radius == 0.0 {
            return vec![0.0];
        }
        let half = (self.radius / self.step).round() as i64;
        (-half..=half).map(|i| i as f64 * self.step).collect()
    }
}

/// Largest number of configurations [`brute_force_constant`] will enumerate.
pub const MAX_BRUTE_FORCE_CONFIGS: u64 = 50_000_000;

/// Exhaustive maximization over every configuration with coordinates on the
/// grid, for dimensions `≤ 2` and depth `≤ 2`.
///
/// For the smoothness and convexity kinds, `depth ≤ 1` enumerates the vector
/// pairs, and `depth = 2` enumerates the depth-2 strong type / cotype
/// sequences (which contain every pair as a depth-1 Rademacher sequence); the
/// returned estimate's kind records the form that was enumerated.
pub fn brute_force_constant(
    kind: ConstantKind,
    op: &LinearOperator,
    exponent: f64,
    grid: &Grid,
    depth: usize,
) -> Result<ConstantEstimate> {
    kind.check_exponent(exponent)?;
    let (m_in, m_out) = (op.domain_dim(), op.codomain_dim());
    if m_in > 2 || m_out > 2 || depth > 2 {
        return Err(Error::InstanceTooLarge(format!(
            "dims {m_in}->{m_out}, depth {depth}; limits are 2 and 2"
        )));
    }
    if !(grid.step > 0.0 && grid.radius >= 0.0) {
        return Err(Error::Malformed(format!("bad grid {grid:?}")));
    }
    let kind = match (kind, depth) {
        (ConstantKind::Smooth, 2) => ConstantKind::StrongType,
        (ConstantKind::Convex, 2) => ConstantKind::StrongCotype,
        (ConstantKind::OperatorNorm, _) => {
            return Err(Error::Malformed(
                "operator norm has no brute-force form".into(),
            ))
        }
        (k, _) => k,
    };
    let base_dim = if kind == ConstantKind::StrongType {
        m_out
    } else {
        m_in
    };
    let (n_params, split) = match kind {
        ConstantKind::Smooth => (m_in + m_out, m_in),
        ConstantKind::Convex => (2 * m_in, m_in),
        _ => (base_dim + ((1 << depth) - 1) * m_in, base_dim),
    };
    let points = grid.points();
    let configs = (points.len() as u64)
        .checked_pow(n_params as u32)
        .unwrap_or(u64::MAX);
    if configs > MAX_BRUTE_FORCE_CONFIGS {
        return Err(Error::InstanceTooLarge(format!("{configs} configurations")));
    }
    let levels_of = |params: &[f64]| -> Vec<Vec<f64>> {
        let mut levels = Vec::new();
        let mut at = split;
        for k in 0..depth {
            let len = (1 << k) * m_in;
            levels.push(params[at..at + len].to_vec());
            at += len;
        }
        levels
    };
    let decode = |mut index: u64| -> Vec<f64> {
        let mut params = vec![0.0; n_params];
        for slot in params.iter_mut().rev() {
            *slot = points[(index % points.len() as u64) as usize];
            index /= points.len() as u64;
        }
        params
    };
    // odometer over the trailing coordinates for each value of the first
    let per_first = configs / points.len() as u64;
    let best = (0..points.len())
        .into_par_iter()
        .map(|first| {
            let start = first as u64 * per_first;
            let params = decode(start);
            let mut objective: Box<dyn VectorObjective> = match kind {
                ConstantKind::Smooth | ConstantKind::Convex => Box::new(PairObjective {
                    kind,
                    op,
                    e: exponent,
                    split,
                    params: params.clone(),
                }),
                _ => Box::new(SeqEngine::new(
                    op,
                    kind.form().expect("martingale kind"),
                    exponent,
                    &params[..split],
                    &levels_of(&params),
                )),
            };
            let mut digits = vec![0usize; n_params];
            let mut best = (objective.score(), start);
            for offset in 1..per_first {
                // increment the odometer from the last coordinate
                let mut slot = n_params - 1;
                loop {
                    digits[slot] += 1;
                    if digits[slot] < points.len() {
                        objective.set(slot, points[digits[slot]]);
                        break;
                    }
                    digits[slot] = 0;
                    objective.set(slot, points[0]);
                    slot -= 1;
                }
                let s = objective.score();
                if s.total_cmp(&best.0).is_gt() {
                    best = (s, start + offset);
                }
            }
            best
        })
        .collect::<Vec<_>>()
        .into_iter()
        .reduce(|a, b| if b.0.total_cmp(&a.0).is_gt() { b } else { a })
        .expect("nonempty grid");
    let params = decode(best.1);
    let witness = match kind {
        ConstantKind::Smooth => Witness::Smoothness {
            x: params[..split].to_vec(),
            y: params[split..].to_vec(),
        },
        ConstantKind::Convex => Witness::Convexity {
            x_plus: params[..split].to_vec(),
            x_minus: params[split..].to_vec(),
        },
        ConstantKind::StrongType => Witness::Martingale {
            y: Some(params[..split].to_vec()),
            seq: DifferenceSequence::new(m_in, None, levels_of(&params))?,
        },
        _ => Witness::Martingale {
            y: None,
            seq: DifferenceSequence::new(m_in, Some(params[..split].to_vec()), levels_of(&params))?,
        },
    };
    let eval = evaluate_ratio(kind, op, exponent, &witness)?;
    Ok(ConstantEstimate {
        kind,
        exponent,
        lower_bound: eval.ratio,
        unbounded: is_unbounded(&eval, reference_scale(op)),
        seed: 0,
        budget: configs as usize,
        evaluations: configs,
        witness,
    })
}
