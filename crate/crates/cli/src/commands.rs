//! The four experiment drivers.

use martingale_geometry::duality::{
    dual_step, duality_experiment, lambda_balance_check, pairing_split_check,
};
use martingale_geometry::martingale::{
    from_rademacher, random_sequence, random_sequence_with_initial,
};
use martingale_geometry::moduli::{
    convexity_defect, depth1_cotype_reduction, depth1_type_reduction, holder_defect,
    parse_kind_spec, smoothness_defect, strong_cotype_defect, strong_type_defect, symmetry_defect,
    telescoping_cotype, telescoping_type,
};
use martingale_geometry::renorm::{
    equivalent_norm_type, lemma5_certificate, midpoint_cotype_check, midpoint_type_check,
    padding_identity_check, smoothness_step_check,
};
use martingale_geometry::search::{candidate_rng, uniform_vector};
use martingale_geometry::{
    best_constant, BraceFunctional, DefectReport, Direction, Error, EstimateOptions,
    LinearOperator, NormKind, StepFunction,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{Command, ExperimentConfig};
use crate::report::{
    DecompositionRow, DualityResults, EstimateRow, RenormResults, RenormRow, Results, Status,
    Suite, Violation,
};
use crate::CliError;

/// Tolerance for identities that hold exactly up to rounding.
pub const IDENTITY_TOL: f64 = 1e-12;
/// Default tolerance for inequalities at a supplied constant.
pub const DEFAULT_TOL: f64 = 1e-9;
/// Tolerance for checks that compare two searched values.
pub const SEARCH_TOL: f64 = 1e-6;
pub const LAMBDA_TOL: f64 = 1e-10;
pub const DEFAULT_GAP_TOL: f64 = 0.05;

pub fn run(config: &ExperimentConfig) -> Result<(Status, Results), CliError> {
    match config.command {
        Command::Estimate => estimate(config),
        Command::Verify => verify(config),
        Command::Renorm => renorm(config),
        Command::Duality => duality(config),
    }
}

/// An independent random stream per (suite, sample).
fn stream(seed: u64, tag: u64, i: usize) -> ChaCha8Rng {
    candidate_rng(seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15), i)
}

/// The `ℓ_r` index of the space, if it has one.
fn lp_index(op: &LinearOperator) -> Option<f64> {
    match op.domain().kind() {
        NormKind::Lp { p, .. } => Some(*p),
        NormKind::Euclidean => Some(2.0),
        _ => None,
    }
}

/// Defaults: `p = min(r, 2)` and `q = max(r, 2)` on `ℓ_r`, else 2.
fn exponents(config: &ExperimentConfig, op: &LinearOperator) -> (f64, f64) {
    let r = lp_index(op).unwrap_or(2.0);
    let p = config.params.p.unwrap_or(r.min(2.0));
    let q = config.params.q.unwrap_or(r.max(2.0));
    (p, q)
}

fn estimate(config: &ExperimentConfig) -> Result<(Status, Results), CliError> {
    let op = config.resolve_operator()?;
    let params = &config.params;
    if params.constants.is_empty() {
        return Err(CliError::Config(
            "estimate needs params.constants, e.g. [\"smooth_2\"]".into(),
        ));
    }
    let kinds = params
        .constants
        .iter()
        .map(|s| parse_kind_spec(s).map_err(|e| CliError::Config(format!("{s}: {e}"))))
        .collect::<Result<Vec<_>, _>>()?;
    let options = EstimateOptions::new(params.budget.unwrap_or(2000), config.seed)
        .depth_cap(params.depth.unwrap_or(3));
    let mut estimates = Vec::with_capacity(kinds.len());
    for (name, (kind, e)) in params.constants.iter().zip(kinds) {
        estimates.push(EstimateRow {
            name: name.clone(),
            estimate: best_constant(kind, &op, e, &options)?,
        });
    }
    Ok((Status::Pass, Results::Estimate { estimates }))
}

/// Runs `samples` independent checks in parallel and records them in order.
/// Each check yields the suite's value and the report it was derived from.
fn batch<F>(suite: &mut Suite, samples: usize, check: F)
where
    F: Fn(usize) -> martingale_geometry::Result<Vec<(f64, DefectReport)>> + Sync + Send,
{
    let out: Vec<_> = (0..samples).into_par_iter().map(check).collect();
    for r in out {
        match r {
            Ok(reports) => reports
                .into_iter()
                .for_each(|(v, r)| suite.record_value(v, Some(r))),
            Err(e) => {
                suite.abort(e.to_string());
                return;
            }
        }
    }
}

fn plain(r: DefectReport) -> (f64, DefectReport) {
    (r.value, r)
}

/// `|Σ level power gaps / scale - global power gap|`.
pub fn telescope_gap(steps: &[DefectReport], global: &DefectReport, scale: f64) -> f64 {
    (steps.iter().map(|s| s.power_gap).sum::<f64>() / scale - global.power_gap).abs()
}

fn verify(config: &ExperimentConfig) -> Result<(Status, Results), CliError> {
    let op = config.resolve_operator()?;
    let params = &config.params;
    let (p, q) = exponents(config, &op);
    let c = params.c.unwrap_or(1.0);
    let tol = params.tol.unwrap_or(DEFAULT_TOL);
    let samples = params.samples.unwrap_or(200);
    let max_depth = params.depth.unwrap_or(4).max(1);
    let (m, n) = (op.domain_dim(), op.codomain_dim());
    let seed = config.seed;
    // validate the exponents up front so that a bad config is a usage error
    martingale_geometry::ConstantKind::StrongType.check_exponent(p)?;
    martingale_geometry::ConstantKind::StrongCotype.check_exponent(q)?;
    if !(c > 0.0 && c.is_finite()) {
        return Err(CliError::Config(format!(
            "c must be finite and positive, got {c}"
        )));
    }

    let depth_of = |rng: &mut ChaCha8Rng| rng.gen_range(1..=max_depth);
    let mut suites = Vec::new();

    let mut s = Suite::new("symmetry", IDENTITY_TOL);
    batch(&mut s, samples, |i| {
        let mut rng = stream(seed, 1, i);
        let seq = random_sequence_with_initial(rng.gen(), depth_of(&mut rng), m, 1.0)?;
        let mut out = Vec::new();
        for k in 1..=seq.depth() {
            for e in [1.0, 1.5, 2.0, 3.0] {
                let r = symmetry_defect(op.domain(), &seq, k, e)?;
                out.push((r.value, r));
            }
        }
        Ok(out)
    });
    suites.push(s.finish());

    let mut s = Suite::new("depth1_type", IDENTITY_TOL);
    batch(&mut s, samples, |i| {
        let mut rng = stream(seed, 2, i);
        let (x, y) = (
            uniform_vector(&mut rng, m, 1.0),
            uniform_vector(&mut rng, n, 1.0),
        );
        let gap = depth1_type_reduction(&op, &x, &y, p, c)?;
        Ok(vec![(gap, smoothness_defect(&op, &x, &y, p, c)?)])
    });
    suites.push(s.finish());

    let mut s = Suite::new("depth1_cotype", IDENTITY_TOL);
    batch(&mut s, samples, |i| {
        let mut rng = stream(seed, 3, i);
        let (x0, x1) = (
            uniform_vector(&mut rng, m, 1.0),
            uniform_vector(&mut rng, m, 1.0),
        );
        let gap = depth1_cotype_reduction(&op, &x0, &x1, q, c)?;
        let seq = from_rademacher(&[x0, x1])?;
        Ok(vec![(gap, strong_cotype_defect(&op, &seq, q, c)?)])
    });
    suites.push(s.finish());

    let mut s = Suite::new("telescoping_type", IDENTITY_TOL);
    batch(&mut s, samples, |i| {
        let mut rng = stream(seed, 4, i);
        let seq = random_sequence(rng.gen(), depth_of(&mut rng), m, 1.0)?;
        let y = uniform_vector(&mut rng, n, 1.0);
        let steps = telescoping_type(&op, &y, &seq, p, c)?;
        let r = strong_type_defect(&op, &y, &seq, p, c)?;
        Ok(vec![(telescope_gap(&steps, &r, 1.0), r)])
    });
    suites.push(s.finish());

    let mut s = Suite::new("telescoping_cotype", IDENTITY_TOL);
    batch(&mut s, samples, |i| {
        let mut rng = stream(seed, 5, i);
        let seq = random_sequence_with_initial(rng.gen(), depth_of(&mut rng), m, 1.0)?;
        let steps = telescoping_cotype(&op, &seq, q, c)?;
        let r = strong_cotype_defect(&op, &seq, q, c)?;
        Ok(vec![(telescope_gap(&steps, &r, c.powf(q)), r)])
    });
    suites.push(s.finish());

    let mut s = Suite::new("holder", IDENTITY_TOL);
    let dual = op.domain().dual()?;
    batch(&mut s, samples, |i| {
        let mut rng = stream(seed, 6, i);
        let depth = depth_of(&mut rng);
        let f = StepFunction::from_flat(
            depth,
            op.domain().clone(),
            uniform_vector(&mut rng, m << depth, 1.0),
        )?;
        let g = StepFunction::from_flat(
            depth,
            dual.clone(),
            uniform_vector(&mut rng, m << depth, 1.0),
        )?;
        Ok(vec![plain(holder_defect(&f, &g, q)?)])
    });
    suites.push(s.finish());

    let mut s = Suite::new("smoothness", tol);
    batch(&mut s, samples, |i| {
        let mut rng = stream(seed, 7, i);
        let (x, y) = (
            uniform_vector(&mut rng, m, 1.0),
            uniform_vector(&mut rng, n, 1.0),
        );
        Ok(vec![plain(smoothness_defect(&op, &x, &y, p, c)?)])
    });
    suites.push(s.finish());

    let mut s = Suite::new("convexity", tol);
    batch(&mut s, samples, |i| {
        let mut rng = stream(seed, 8, i);
        let (a, b) = (
            uniform_vector(&mut rng, m, 1.0),
            uniform_vector(&mut rng, m, 1.0),
        );
        Ok(vec![plain(convexity_defect(&op, &a, &b, q, c)?)])
    });
    suites.push(s.finish());

    let mut s = Suite::new("strong_type", tol);
    batch(&mut s, samples, |i| {
        let mut rng = stream(seed, 9, i);
        let seq = random_sequence(rng.gen(), depth_of(&mut rng), m, 1.0)?;
        let y = uniform_vector(&mut rng, n, 1.0);
        Ok(vec![plain(strong_type_defect(&op, &y, &seq, p, c)?)])
    });
    suites.push(s.finish());

    let mut s = Suite::new("strong_cotype", tol);
    batch(&mut s, samples, |i| {
        let mut rng = stream(seed, 10, i);
        let seq = random_sequence_with_initial(rng.gen(), depth_of(&mut rng), m, 1.0)?;
        Ok(vec![plain(strong_cotype_defect(&op, &seq, q, c)?)])
    });
    suites.push(s.finish());

    let pairs = samples.min(4);
    let budget = params.budget.unwrap_or(24);
    let cotype = BraceFunctional::cotype(op.clone(), q, c)?
        .budget(budget)
        .seed(seed);
    let type_sup = BraceFunctional::type_sup(op.clone(), p, c)?
        .budget(budget)
        .seed(seed);
    for (name, f, tag) in [
        ("midpoint_cotype", &cotype, 11),
        ("midpoint_type", &type_sup, 12),
    ] {
        let mut s = Suite::new(name, SEARCH_TOL);
        for i in 0..pairs {
            let mut rng = stream(seed, tag, i);
            let (a, b) = (
                uniform_vector(&mut rng, m, 1.0),
                uniform_vector(&mut rng, m, 1.0),
            );
            let r = match f.direction {
                Direction::CotypeInf => midpoint_cotype_check(f, &a, &b, 1),
                Direction::TypeSup => midpoint_type_check(f, &a, &b, 1),
            };
            match r {
                Ok(r) => s.record(r),
                Err(e) => {
                    s.abort(e.to_string());
                    break;
                }
            }
        }
        suites.push(s.finish());
    }

    let status = Status::from_pass(suites.iter().all(|s| s.passed));
    Ok((status, Results::Verify { suites }))
}

fn violation(point: &[f64], e: Error) -> Result<Violation, CliError> {
    match e {
        Error::CertificateViolation {
            c,
            objective,
            bound,
            witness,
        } => Ok(Violation {
            point: point.to_vec(),
            c,
            objective,
            bound,
            witness: *witness,
        }),
        other => Err(other.into()),
    }
}

/// Depth of the braces the chain certificate walks with.
pub const CHAIN_BRACE_DEPTH: usize = 2;

/// The brace functional a renorm config describes, and its table depth.
pub fn brace_functional(
    config: &ExperimentConfig,
    op: &LinearOperator,
) -> Result<(BraceFunctional, usize), CliError> {
    let params = &config.params;
    let (p, q) = exponents(config, op);
    let c = params.c.unwrap_or(1.0);
    let n = params.depth.unwrap_or(3);
    let f = match params.direction.unwrap_or(Direction::CotypeInf) {
        Direction::CotypeInf => BraceFunctional::cotype(op.clone(), q, c)?,
        Direction::TypeSup => BraceFunctional::type_sup(op.clone(), p, c)?,
    };
    let f = f
        .depth_cap(n + 1)
        .budget(params.budget.unwrap_or(24))
        .seed(config.seed);
    Ok((f, n))
}

fn renorm(config: &ExperimentConfig) -> Result<(Status, Results), CliError> {
    let op = config.resolve_operator()?;
    let params = &config.params;
    let (f, n) = brace_functional(config, &op)?;
    let (direction, e, c, budget) = (f.direction, f.exponent, f.c, f.budget);
    let tol = params.tol.unwrap_or(DEFAULT_TOL);
    let m = op.domain_dim();
    let seed = config.seed;
    let points: Vec<Vec<f64>> = if params.points.is_empty() {
        (0..params.samples.unwrap_or(8))
            .map(|i| uniform_vector(&mut stream(seed, 20, i), m, 1.0))
            .collect()
    } else {
        params.points.clone()
    };
    if let Some(x) = points.iter().find(|x| x.len() != m) {
        return Err(CliError::Config(format!(
            "point {x:?} is not in dimension {m}"
        )));
    }

    let mut out = RenormResults {
        direction,
        exponent: e,
        c,
        depth: n,
        budget,
        rows: Vec::new(),
        suites: Vec::new(),
        decompositions: Vec::new(),
        violation: None,
    };
    let mut status = Status::Pass;

    let tables: Vec<_> = points.par_iter().map(|x| f.table(x, n)).collect();
    let mut monotone = Suite::new("monotone", IDENTITY_TOL);
    let mut bounds = Suite::new("bounds", tol);
    for (x, table) in points.iter().zip(tables) {
        let table = match table {
            Ok(t) => t,
            Err(err) => {
                out.violation = Some(violation(x, err)?);
                out.suites.extend([monotone.finish(), bounds.finish()]);
                return Ok((Status::CertificateViolation, Results::Renorm(Box::new(out))));
            }
        };
        let norm = op.domain().eval(x);
        let image = op.codomain().eval(&op.apply(x));
        let values: Vec<f64> = table.iter().map(|b| b.value).collect();
        // steps in the wrong direction, relative to ‖x‖
        let drift = values
            .windows(2)
            .map(|w| match direction {
                Direction::CotypeInf => w[1] - w[0],
                Direction::TypeSup => w[0] - w[1],
            })
            .fold(0.0, f64::max)
            / norm.max(f64::MIN_POSITIVE);
        monotone.record_value(drift, None);
        let last = *values.last().expect("table has depth 0");
        let (excess, equivalent) = match direction {
            Direction::CotypeInf => {
                let eq = (norm.powf(e) + last.powf(e)).powf(e.recip());
                let upper = 2f64.powf(e.recip()) * norm;
                ((last - norm).max(norm - eq).max(eq - upper), Some(eq))
            }
            Direction::TypeSup => (
                (last - c * norm)
                    .max(values[0] - last)
                    .max((values[0] - image).abs()),
                None,
            ),
        };
        bounds.record_value(excess / norm.max(f64::MIN_POSITIVE), None);
        out.rows.push(RenormRow {
            x: x.clone(),
            norm,
            monotone: drift <= IDENTITY_TOL,
            within_bounds: excess <= tol * norm,
            braces: table,
            equivalent_norm: equivalent,
        });
    }
    out.suites.extend([monotone.finish(), bounds.finish()]);

    let mut homogeneity = Suite::new("homogeneity", tol);
    for (i, row) in out.rows.iter().enumerate().take(4) {
        let t = 1.0 + (i + 1) as f64 * 0.75;
        let scaled: Vec<f64> = row.x.iter().map(|v| t * v).collect();
        match f.eval(&scaled, n) {
            Ok(b) => {
                let expected = t * row.braces[n].value;
                homogeneity.record_value(
                    (b.value - expected).abs() / (t * row.norm).max(f64::MIN_POSITIVE),
                    None,
                )
            }
            Err(err) => {
                out.violation = Some(violation(&scaled, err)?);
                status = Status::CertificateViolation;
                break;
            }
        }
    }
    out.suites.push(homogeneity.finish());

    if status == Status::Pass && n >= 1 {
        let mut s = Suite::new("midpoint", SEARCH_TOL);
        let pairs: Vec<(usize, usize)> = (0..points.len().saturating_sub(1))
            .map(|i| (i, i + 1))
            .collect();
        let results: Vec<_> = pairs
            .par_iter()
            .map(|&(i, j)| match direction {
                Direction::CotypeInf => midpoint_cotype_check(&f, &points[i], &points[j], n - 1),
                Direction::TypeSup => midpoint_type_check(&f, &points[i], &points[j], n - 1),
            })
            .collect();
        for (r, &(i, _)) in results.into_iter().zip(&pairs) {
            match r {
                Ok(r) => s.record(r),
                Err(err) => {
                    out.violation = Some(violation(&points[i], err)?);
                    status = Status::CertificateViolation;
                    break;
                }
            }
        }
        out.suites.push(s.finish());
    }

    if status == Status::Pass && direction == Direction::CotypeInf && points.len() >= 2 {
        let mut s = Suite::new("chain", SEARCH_TOL);
        let chain = params.chain_depth.unwrap_or(6);
        let depth = n.min(CHAIN_BRACE_DEPTH);
        match lemma5_certificate(
            |x| Ok(f.eval(x, depth)?.value),
            &points[0],
            &points[1],
            chain,
        ) {
            Ok(r) => s.record(r),
            Err(Error::CertificateViolation { .. })
            | Err(Error::HomogeneityViolation { .. })
            | Err(Error::BoundViolated(_)) => {
                s.abort("the chain certificate failed".into());
            }
            Err(other) => return Err(other.into()),
        }
        out.suites.push(s.finish());
    }

    if status == Status::Pass && direction == Direction::TypeSup {
        status = status.and(type_side(config, &f, &mut out)?);
    }

    if status == Status::Pass {
        status = Status::from_pass(out.suites.iter().all(|s| s.passed));
    }
    Ok((status, Results::Renorm(Box::new(out))))
}

/// Decomposition norms on the codomain and the checks built on them.
fn type_side(
    config: &ExperimentConfig,
    f: &BraceFunctional,
    out: &mut RenormResults,
) -> Result<Status, CliError> {
    let op = &f.operator;
    let params = &config.params;
    let (m, dim) = (op.domain_dim(), op.codomain_dim());
    let n = out.depth;
    let n_dec = params.decomposition_level.unwrap_or(1);
    let budget = out.budget;
    let p = f.exponent;
    let count = params.samples.unwrap_or(8).min(4);
    let ys: Vec<Vec<f64>> = (0..count)
        .map(|i| uniform_vector(&mut stream(config.seed, 21, i), dim, 1.0))
        .collect();

    let results: Vec<_> = ys
        .par_iter()
        .map(|y| equivalent_norm_type(f, y, n, n_dec, budget))
        .collect();
    let mut bounds = Suite::new("decomposition_bounds", IDENTITY_TOL);
    let mut padding = Suite::new("padding", IDENTITY_TOL);
    let mut step = Suite::new("smoothness_step", SEARCH_TOL);
    let mut status = Status::Pass;
    for (i, (y, r)) in ys.iter().zip(results).enumerate() {
        let r = match r {
            Ok(r) => r,
            Err(Error::BoundViolated(msg)) => {
                bounds.abort(msg);
                continue;
            }
            Err(err) => {
                out.violation = Some(violation(y, err)?);
                status = Status::CertificateViolation;
                break;
            }
        };
        let norm = op.codomain().eval(y);
        let lower = 2f64.powf(p.recip() - 1.0) * norm;
        bounds.record_value(
            (lower - r.value).max(r.value - norm) / norm.max(f64::MIN_POSITIVE),
            None,
        );
        padding.record(padding_identity_check(op, &r.decomposition, 1)?);
        let x = uniform_vector(&mut stream(config.seed, 22, i), m, 0.5);
        match smoothness_step_check(f, y, &x, &r.decomposition, n.saturating_sub(1)) {
            Ok(s) => step.record(s),
            Err(err) => {
                out.violation = Some(violation(&x, err)?);
                status = Status::CertificateViolation;
                break;
            }
        }
        out.decompositions.push(DecompositionRow {
            y: y.clone(),
            norm,
            value: r.value,
            lower,
            decomposition: r.decomposition,
        });
    }
    out.suites
        .extend([bounds.finish(), padding.finish(), step.finish()]);
    Ok(status)
}

fn duality(config: &ExperimentConfig) -> Result<(Status, Results), CliError> {
    let op = config.resolve_operator()?;
    let params = &config.params;
    let (p, _) = exponents(config, &op);
    let budget = params.budget.unwrap_or(2000);
    let samples = params.samples.unwrap_or(100);
    let max_depth = params.depth.unwrap_or(3).max(1);
    let gap_tolerance = params.tol.unwrap_or(DEFAULT_GAP_TOL);
    let seed = config.seed;
    let (m, n) = (op.domain_dim(), op.codomain_dim());
    let experiment = duality_experiment(&op, p, budget, seed)?;

    let mut split = Suite::new("pairing_split", IDENTITY_TOL);
    batch(&mut split, samples, |i| {
        let mut rng = stream(seed, 30, i);
        let depth = rng.gen_range(1..=max_depth);
        let seq = random_sequence(rng.gen(), depth, m, 1.0)?;
        let y = uniform_vector(&mut rng, n, 1.0);
        let g_depth = rng.gen_range(0..=depth);
        let g = dual_step(&op, g_depth, uniform_vector(&mut rng, n << g_depth, 1.0))?;
        Ok(vec![plain(pairing_split_check(&op, &y, &seq, &g)?)])
    });

    let mut balance = Suite::new("lambda_balance", LAMBDA_TOL);
    batch(&mut balance, samples, |i| {
        let mut rng = stream(seed, 31, i);
        let a = rng.gen_range(0.05..2.0);
        let t = a * rng.gen_range(1.01..4.0);
        let c = rng.gen_range(0.5..2.0);
        Ok(vec![plain(lambda_balance_check(a, t, c, p)?)])
    });

    let suites = vec![split.finish(), balance.finish()];
    let status = Status::from_pass(
        experiment.relative_gap <= gap_tolerance && suites.iter().all(|s| s.passed),
    );
    Ok((
        status,
        Results::Duality(Box::new(DualityResults {
            experiment,
            gap_tolerance,
            suites,
        })),
    ))
}
