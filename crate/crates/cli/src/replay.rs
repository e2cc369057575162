//! Recomputes every witnessed number in a saved report.

use martingale_geometry::moduli::{
    depth1_cotype_reduction, depth1_type_reduction, strong_cotype_defect, strong_type_defect,
    telescoping_cotype, telescoping_type,
};
use martingale_geometry::numeric::extended_f64;
use martingale_geometry::renorm::lemma5_certificate;
use martingale_geometry::{DefectReport, LinearOperator, Witness};
use serde::{Deserialize, Serialize};

use crate::commands::{brace_functional, telescope_gap, CHAIN_BRACE_DEPTH};
use crate::report::{Report, Results, Suite};
use crate::CliError;

/// Replayed values must agree to this, relative to `max(1, |value|)`.
pub const REPLAY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayItem {
    pub label: String,
    #[serde(with = "extended_f64")]
    pub recorded: f64,
    #[serde(with = "extended_f64")]
    pub replayed: f64,
    #[serde(with = "extended_f64")]
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub items: Vec<ReplayItem>,
    #[serde(with = "extended_f64")]
    pub max_deviation: f64,
    pub passed: bool,
}

impl ReplayReport {
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            0
        } else {
            1
        }
    }
}

fn deviation(recorded: f64, replayed: f64) -> f64 {
    if recorded == replayed || (recorded.is_nan() && replayed.is_nan()) {
        0.0
    } else {
        (recorded - replayed).abs() / recorded.abs().max(1.0)
    }
}

struct Items(Vec<ReplayItem>);

impl Items {
    fn push(&mut self, label: String, recorded: f64, replayed: f64) {
        self.0.push(ReplayItem {
            label,
            recorded,
            replayed,
            deviation: deviation(recorded, replayed),
        });
    }

    fn suite(&mut self, op: &LinearOperator, scope: &str, s: &Suite) -> Result<(), CliError> {
        let Some(r) = &s.worst_case else {
            return Ok(());
        };
        let label = format!("{scope}/{}", s.name);
        let replayed = suite_value(op, &s.name, r)?;
        self.push(label, s.worst, replayed);
        Ok(())
    }
}

/// The quantity a suite records for one report, recomputed from its
/// witness.
fn suite_value(op: &LinearOperator, suite: &str, r: &DefectReport) -> Result<f64, CliError> {
    let (e, c) = (r.exponent, r.c);
    let bad = || CliError::Replay(format!("unexpected witness in suite {suite}"));
    Ok(match suite {
        "depth1_type" => match &r.witness {
            Witness::Smoothness { x, y } => depth1_type_reduction(op, x, y, e, c)?,
            _ => return Err(bad()),
        },
        "depth1_cotype" => match &r.witness {
            Witness::Martingale { seq, .. } => {
                let x0 = seq.initial().ok_or_else(bad)?.to_vec();
                let x1 = seq.level(1).to_vec();
                depth1_cotype_reduction(op, &x0, &x1, e, c)?
            }
            _ => return Err(bad()),
        },
        "telescoping_type" => match &r.witness {
            Witness::Martingale { y: Some(y), seq } => {
                let steps = telescoping_type(op, y, seq, e, c)?;
                telescope_gap(&steps, &strong_type_defect(op, y, seq, e, c)?, 1.0)
            }
            _ => return Err(bad()),
        },
        "telescoping_cotype" => match &r.witness {
            Witness::Martingale { seq, .. } => {
                let steps = telescoping_cotype(op, seq, e, c)?;
                telescope_gap(&steps, &strong_cotype_defect(op, seq, e, c)?, c.powf(e))
            }
            _ => return Err(bad()),
        },
        _ => r.replay(op)?.value,
    })
}

/// Replays `report` against the operator its config describes.
pub fn replay(report: &Report) -> Result<ReplayReport, CliError> {
    let config = &report.config;
    let op = config.resolve_operator()?;
    let mut items = Items(Vec::new());
    match &report.results {
        Results::Estimate { estimates } => {
            for row in estimates {
                let e = &row.estimate;
                items.push(
                    format!("estimate/{}", row.name),
                    e.lower_bound,
                    e.replay(&op)?,
                );
            }
        }
        Results::Verify { suites } => {
            for s in suites {
                items.suite(&op, "verify", s)?;
            }
        }
        Results::Renorm(r) => {
            let (f, _) = brace_functional(config, &op)?;
            for (i, row) in r.rows.iter().enumerate() {
                for b in &row.braces {
                    let label = format!("renorm/point{i}/depth{}", b.depth);
                    items.push(label, b.objective, f.objective_at(&row.x, &b.witness)?);
                }
            }
            for s in &r.suites {
                if s.name == "chain" {
                    if let Some(Witness::Chain {
                        x_plus,
                        x_minus,
                        chain_depth,
                        ..
                    }) = s.worst_case.as_ref().map(|w| &w.witness)
                    {
                        let depth = r.depth.min(CHAIN_BRACE_DEPTH);
                        let again = lemma5_certificate(
                            |x| Ok(f.eval(x, depth)?.value),
                            x_plus,
                            x_minus,
                            *chain_depth,
                        )?;
                        items.push("renorm/chain".into(), s.worst, again.value);
                    }
                } else {
                    items.suite(&op, "renorm", s)?;
                }
            }
            for (i, d) in r.decompositions.iter().enumerate() {
                d.decomposition.validate(&d.y)?;
                items.push(
                    format!("renorm/decomposition{i}"),
                    d.value,
                    d.decomposition.objective(&op)?,
                );
            }
            if let Some(v) = &r.violation {
                items.push(
                    "renorm/violation".into(),
                    v.objective,
                    f.objective_at(&v.point, &v.witness)?,
                );
            }
        }
        Results::Duality(d) => {
            let (primal, dual) = d.experiment.replay(&op)?;
            items.push(
                "duality/primal".into(),
                d.experiment.primal.lower_bound,
                primal,
            );
            items.push("duality/dual".into(), d.experiment.dual.lower_bound, dual);
            for s in &d.suites {
                items.suite(&op, "duality", s)?;
            }
        }
    }
    let items = items.0;
    let max_deviation = items.iter().map(|i| i.deviation).fold(0.0, f64::max);
    Ok(ReplayReport {
        passed: items.iter().all(|i| i.deviation <= REPLAY_TOL),
        items,
        max_deviation,
    })
}
