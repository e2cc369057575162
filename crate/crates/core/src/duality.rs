//! Duality between an operator and its adjoint: the dual difference sequence
//! of a functional, the splitting of the pairing along martingale levels, the
//! λ-balance identity, and a numeric comparison of the smoothness constant of
//! `T` with the convexity constant of `T'`.

use serde::{Deserialize, Serialize};

use crate::dyadic::{pairing, StepFunction};
use crate::error::{check_constant, check_dim, Error, Result};
use crate::martingale::{apply_operator, to_step, DifferenceSequence, Part};
use crate::moduli::{
    best_constant, check_type_exponent, Check, ConstantEstimate, ConstantKind, DefectReport,
    EstimateOptions, Witness,
};
use crate::numeric::extended_f64;
use crate::spaces::{dot, dual_exponent, pow, LinearOperator, Norm};

/// `e_0 = E(g | F_0)` and `e_k = E(g | F_k) - E(g | F_{k-1})` for `k = 1..n`.
pub fn extract_dual_differences(g: &StepFunction, n: usize) -> Result<DifferenceSequence> {
    if g.depth() > n {
        return Err(Error::DepthOutOfRange {
            requested: g.depth(),
            limit: n,
        });
    }
    let fine = g.refine(n)?;
    let m = g.dim();
    let mut levels = Vec::with_capacity(n);
    let mut coarse = fine.cond_expect(0)?;
    let initial = coarse.value(0).to_vec();
    for k in 1..=n {
        let cur = fine.cond_expect(k)?;
        let mut level = Vec::with_capacity((1 << (k - 1)) * m);
        for j in 0..1 << (k - 1) {
            let (left, parent) = (cur.value(2 * j), coarse.value(j));
            level.extend(left.iter().zip(parent).map(|(a, b)| a - b));
        }
        levels.push(level);
        coarse = cur;
    }
    DifferenceSequence::new(m, Some(initial), levels)
}

fn split_report(
    op: &LinearOperator,
    y: &[f64],
    seq: &DifferenceSequence,
    g: &StepFunction,
) -> Result<DefectReport> {
    check_dim(op.codomain_dim(), y.len())?;
    check_dim(op.codomain_dim(), g.dim())?;
    if seq.initial().is_some() {
        return Err(Error::UnexpectedInitial);
    }
    let n = seq.depth().max(g.depth());
    let seq = seq.clone().pad_to(n)?;
    let image = apply_operator(op, &seq)?.with_initial(y.to_vec())?;
    let space = op.codomain();
    let lhs = pairing(&to_step(&image, n, Part::PartialSum, space)?, g)?;
    let e = extract_dual_differences(g, n)?;
    let mut rhs = dot(y, e.initial().expect("extracted sequences carry e_0"));
    for k in 1..=n {
        rhs += pairing(
            &to_step(&image, k, Part::Difference, space)?,
            &to_step(&e, k, Part::Difference, g.space())?,
        )?;
    }
    Ok(DefectReport {
        check: Check::PairingSplit,
        exponent: 1.0,
        c: 1.0,
        lhs,
        rhs,
        value: (lhs - rhs).abs(),
        power_gap: (lhs - rhs).abs(),
        level: Some(n),
        witness: Witness::PairingSplit {
            y: y.to_vec(),
            seq,
            g_depth: g.depth(),
            g: g.flat().to_vec(),
        },
    })
}

/// `|⟨y + Σ T d_k, g⟩ - ⟨y, e_0⟩ - Σ ⟨T d_k, e_k⟩|` with `e` the dual
/// differences of `g`.
pub fn pairing_split_check(
    op: &LinearOperator,
    y: &[f64],
    seq: &DifferenceSequence,
    g: &StepFunction,
) -> Result<DefectReport> {
    split_report(op, y, seq, g)
}

/// The balancing multiplier `λ = c a^{p'-1} / (t^{p'} - a^{p'})^{1/p}`.
pub fn balancing_lambda(y_norm: f64, total_norm: f64, c: f64, p: f64) -> f64 {
    let pp = dual_exponent(p);
    c * pow(y_norm, pp - 1.0) / (pow(total_norm, pp) - pow(y_norm, pp)).powf(p.recip())
}

/// `|t (c^p + λ^p)^{1/p} - c (t^{p'} - a^{p'})^{1/p'} - λ a|` for `a = ‖y'‖`,
/// `t = ‖Σ d_k‖`, at the balancing `λ`.
pub fn lambda_balance_check(y_norm: f64, total_norm: f64, c: f64, p: f64) -> Result<DefectReport> {
    check_type_exponent(p)?;
    check_constant(c)?;
    if p == 1.0 {
        return Err(Error::InvalidExponent {
            value: p,
            reason: "the balance needs 1 < p <= 2",
        });
    }
    if !(y_norm > 0.0 && total_norm > y_norm && total_norm.is_finite()) {
        return Err(Error::Degenerate(format!(
            "need 0 < |y'| < total, got {y_norm} and {total_norm}"
        )));
    }
    let pp = dual_exponent(p);
    let lambda = balancing_lambda(y_norm, total_norm, c, p);
    let lhs = total_norm * (pow(c, p) + pow(lambda, p)).powf(p.recip());
    let rhs = c * (pow(total_norm, pp) - pow(y_norm, pp)).powf(pp.recip()) + lambda * y_norm;
    Ok(DefectReport {
        check: Check::LambdaBalance,
        exponent: p,
        c,
        lhs,
        rhs,
        value: (lhs - rhs).abs(),
        power_gap: (lhs - rhs).abs(),
        level: None,
        witness: Witness::Scalars {
            values: vec![y_norm, total_norm, lambda],
        },
    })
}

/// Smoothness constant of `T` next to the convexity constant of `T'`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    pub exponent: f64,
    pub dual_exponent: f64,
    pub primal: ConstantEstimate,
    pub dual: ConstantEstimate,
    #[serde(with = "extended_f64")]
    pub relative_gap: f64,
    pub adjoint: LinearOperator,
}

impl DualityReport {
    /// Recomputes both constants from their witnesses.
    pub fn replay(&self, op: &LinearOperator) -> Result<(f64, f64)> {
        Ok((self.primal.replay(op)?, self.dual.replay(&self.adjoint)?))
    }
}

/// `|a - b| / max(a, b)`, zero when both vanish.
pub fn relative_gap(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else if scale.is_infinite() {
        if a == b {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (a - b).abs() / scale
    }
}

/// Estimates the uniform `p`-smoothness constant of `T` and the uniform
/// `p'`-convexity constant of `T'` with the same budget and seed.
pub fn duality_experiment(
    op: &LinearOperator,
    p: f64,
    budget: usize,
    seed: u64,
) -> Result<DualityReport> {
    check_type_exponent(p)?;
    if p == 1.0 {
        return Err(Error::InvalidExponent {
            value: p,
            reason: "the dual exponent of 1 is infinite",
        });
    }
    let adjoint = op.adjoint()?;
    let pp = dual_exponent(p);
    let options = EstimateOptions::new(budget, seed);
    let primal = best_constant(ConstantKind::Smooth, op, p, &options)?;
    let dual = best_constant(ConstantKind::Convex, &adjoint, pp, &options)?;
    Ok(DualityReport {
        exponent: p,
        dual_exponent: pp,
        relative_gap: relative_gap(primal.lower_bound, dual.lower_bound),
        primal,
        dual,
        adjoint,
    })
}

pub(crate) fn replay_defect(op: &LinearOperator, r: &DefectReport) -> Result<DefectReport> {
    match (&r.check, &r.witness) {
        (Check::PairingSplit, Witness::PairingSplit { y, seq, g_depth, g }) => {
            let space = op
                .codomain()
                .dual()
                .unwrap_or_else(|_| op.codomain().clone());
            let g = StepFunction::from_flat(*g_depth, space, g.clone())?;
            split_report(op, y, seq, &g)
        }
        (Check::LambdaBalance, Witness::Scalars { values }) if values.len() >= 2 => {
            lambda_balance_check(values[0], values[1], r.c, r.exponent)
        }
        _ => Err(Error::Malformed(format!(
            "{:?} cannot be replayed",
            r.check
        ))),
    }
}

/// The dual-space step function used as `g` in the pairing checks.
pub fn dual_step(op: &LinearOperator, depth: usize, values: Vec<f64>) -> Result<StepFunction> {
    let space: Norm = op.codomain().dual()?;
    StepFunction::from_flat(depth, space, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::martingale::random_sequence;

    fn line() -> Norm {
        Norm::euclidean(1).unwrap()
    }

    #[test]
    fn extraction_examples() {
        let g = StepFunction::from_flat(2, line(), vec![1.0, 3.0, 5.0, 7.0]).unwrap();
        let e = extract_dual_differences(&g, 2).unwrap();
        assert_eq!(e.initial().unwrap(), &[4.0]);
        assert_eq!(e.level(1), &[-2.0]);
        assert_eq!(e.level(2), &[-1.0, -1.0]);
        let back = to_step(&e, 2, Part::PartialSum, &line()).unwrap();
        assert_eq!(back.flat(), g.flat());

        let c = StepFunction::constant(Norm::euclidean(2).unwrap(), &[0.5, 2.0]).unwrap();
        let e = extract_dual_differences(&c, 3).unwrap();
        assert_eq!(e.initial().unwrap(), &[0.5, 2.0]);
        assert!((1..=3).all(|k| e.level(k).iter().all(|v| *v == 0.0)));

        let r = StepFunction::from_flat(1, line(), vec![0.75, -0.75]).unwrap();
        let e = extract_dual_differences(&r, 1).unwrap();
        assert_eq!(
            (e.initial().unwrap(), e.level(1)),
            (&[0.0][..], &[0.75][..])
        );
        assert!(extract_dual_differences(&g, 1).is_err());
    }

    #[test]
    fn pairing_split_examples() {
        let op = LinearOperator::identity(Norm::euclidean(2).unwrap());
        let seq = random_sequence(4, 3, 2, 1.0).unwrap();
        let g = dual_step(&op, 2, vec![0.3, -1.0, 0.25, 0.5, 1.5, 0.0, -0.7, 0.2]).unwrap();
        let r = pairing_split_check(&op, &[1.0, -2.0], &seq, &g).unwrap();
        assert!(r.value <= 1e-12, "{r:?}");
        assert_eq!(r.replay(&op).unwrap(), r);
        let zero = dual_step(&op, 0, vec![0.0, 0.0]).unwrap();
        let r = pairing_split_check(&op, &[1.0, -2.0], &seq, &zero).unwrap();
        assert_eq!((r.lhs, r.rhs), (0.0, 0.0));
    }

    #[test]
    fn lambda_balance_examples() {
        let r = lambda_balance_check(1.0, 2f64.sqrt(), 1.0, 2.0).unwrap();
        assert!((r.lhs - 2.0).abs() < 1e-15 && r.value < 1e-15);
        assert!((balancing_lambda(1.0, 2f64.sqrt(), 1.0, 2.0) - 1.0).abs() < 1e-15);
        let r = lambda_balance_check(0.4, 1.3, 1.7, 1.5).unwrap();
        assert!(r.value <= 1e-12, "{r:?}");
        let s = lambda_balance_check(4.0, 13.0, 1.7, 1.5).unwrap();
        assert!((s.lhs / r.lhs - 10.0).abs() < 1e-12);
        assert!(matches!(
            lambda_balance_check(1.0, 1.0, 1.0, 1.5),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn euclidean_duality() {
        let op = LinearOperator::identity(Norm::euclidean(3).unwrap());
        let r = duality_experiment(&op, 2.0, 200, 1).unwrap();
        assert!(r.relative_gap <= 1e-3, "{r:?}");
        let (a, b) = r.replay(&op).unwrap();
        assert_eq!((a, b), (r.primal.lower_bound, r.dual.lower_bound));
    }
}
