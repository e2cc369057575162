//! Text and CSV renderings. JSON is the serde form of [`Report`].

use std::fmt::Write;

use crate::replay::ReplayReport;
use crate::report::{Report, Results, Suite};

/// Left-aligned columns separated by two spaces.
fn table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let mut line = |cells: Vec<&str>| {
        let mut s = String::new();
        for (i, (cell, w)) in cells.iter().zip(&widths).enumerate() {
            if i + 1 == cells.len() {
                s.push_str(cell);
            } else {
                let pad = w - cell.chars().count();
                s.push_str(cell);
                s.extend(std::iter::repeat(' ').take(pad + 2));
            }
        }
        out.push_str(s.trim_end());
        out.push('\n');
    };
    line(headers.to_vec());
    for row in rows {
        line(row.iter().map(String::as_str).collect());
    }
    out
}

fn csv(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = headers.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// The serde name of a unit variant.
fn name<T: serde::Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        _ => String::new(),
    }
}

fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.9}")
    } else {
        format!("{v}")
    }
}

fn sci(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.3e}")
    } else {
        format!("{v}")
    }
}

fn vector(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    format!("({})", parts.join(" "))
}

fn suite_rows(suites: &[Suite]) -> Vec<Vec<String>> {
    suites
        .iter()
        .map(|s| {
            vec![
                s.name.clone(),
                s.checks.to_string(),
                s.failures.to_string(),
                sci(s.worst),
                sci(s.tolerance),
                if s.passed { "pass" } else { "FAIL" }.to_string(),
            ]
        })
        .collect()
}

const SUITE_HEADERS: [&str; 6] = [
    "suite",
    "checks",
    "failures",
    "worst",
    "tolerance",
    "result",
];

pub fn text(report: &Report) -> String {
    let mut out = String::new();
    let space = report
        .config
        .resolve_operator()
        .map(|op| op.domain().to_string())
        .unwrap_or_default();
    let _ = writeln!(
        out,
        "{}  space {}  seed {}  status {}",
        report.command,
        space,
        report.config.seed,
        name(&report.status)
    );
    out.push('\n');
    match &report.results {
        Results::Estimate { estimates } => {
            let rows: Vec<Vec<String>> = estimates
                .iter()
                .map(|r| {
                    let e = &r.estimate;
                    vec![
                        r.name.clone(),
                        num(e.lower_bound),
                        if e.unbounded { "yes" } else { "no" }.to_string(),
                        e.evaluations.to_string(),
                    ]
                })
                .collect();
            out.push_str(&table(
                &["constant", "lower bound", "unbounded", "evaluations"],
                &rows,
            ));
        }
        Results::Verify { suites } => out.push_str(&table(&SUITE_HEADERS, &suite_rows(suites))),
        Results::Renorm(r) => {
            let _ = writeln!(
                out,
                "{}  exponent {}  c {}  depth {}",
                name(&r.direction),
                r.exponent,
                r.c,
                r.depth
            );
            out.push('\n');
            let mut headers = vec!["point".to_string(), "norm".to_string()];
            headers.extend((0..=r.depth).map(|d| format!("N={d}")));
            headers.push("equivalent".into());
            let rows: Vec<Vec<String>> = r
                .rows
                .iter()
                .map(|row| {
                    let mut cells = vec![vector(&row.x), num(row.norm)];
                    cells.extend(row.braces.iter().map(|b| num(b.value)));
                    cells.push(row.equivalent_norm.map(num).unwrap_or_else(|| "-".into()));
                    cells
                })
                .collect();
            let headers: Vec<&str> = headers.iter().map(String::as_str).collect();
            out.push_str(&table(&headers, &rows));
            if !r.decompositions.is_empty() {
                out.push('\n');
                let rows: Vec<Vec<String>> = r
                    .decompositions
                    .iter()
                    .map(|d| {
                        vec![
                            vector(&d.y),
                            num(d.lower),
                            num(d.value),
                            num(d.norm),
                            d.decomposition.parts.len().to_string(),
                        ]
                    })
                    .collect();
                out.push_str(&table(&["y", "lower", "|||y|||", "norm", "parts"], &rows));
            }
            out.push('\n');
            out.push_str(&table(&SUITE_HEADERS, &suite_rows(&r.suites)));
            if let Some(v) = &r.violation {
                let _ = writeln!(
                    out,
                    "\ncertificate c = {} violated at {}: objective {} against bound {}",
                    v.c,
                    vector(&v.point),
                    sci(v.objective),
                    sci(v.bound)
                );
            }
        }
        Results::Duality(d) => {
            let e = &d.experiment;
            let rows = vec![
                vec![
                    "T".to_string(),
                    format!("smooth_{}", e.exponent),
                    num(e.primal.lower_bound),
                ],
                vec![
                    "T'".to_string(),
                    format!("convex_{}", e.dual_exponent),
                    num(e.dual.lower_bound),
                ],
            ];
            out.push_str(&table(&["side", "constant", "lower bound"], &rows));
            let _ = writeln!(
                out,
                "relative gap {} (tolerance {})\n",
                sci(e.relative_gap),
                d.gap_tolerance
            );
            out.push_str(&table(&SUITE_HEADERS, &suite_rows(&d.suites)));
        }
    }
    out
}

/// The constant-versus-depth table for renorm; one row per number otherwise.
pub fn csv_report(report: &Report) -> String {
    let full = |v: f64| format!("{v}");
    match &report.results {
        Results::Estimate { estimates } => {
            let rows: Vec<Vec<String>> = estimates
                .iter()
                .map(|r| {
                    let e = &r.estimate;
                    vec![
                        r.name.clone(),
                        e.kind.to_string(),
                        full(e.exponent),
                        full(e.lower_bound),
                        e.unbounded.to_string(),
                        e.evaluations.to_string(),
                    ]
                })
                .collect();
            csv(
                &[
                    "name",
                    "kind",
                    "exponent",
                    "lower_bound",
                    "unbounded",
                    "evaluations",
                ],
                &rows,
            )
        }
        Results::Verify { suites } => {
            let rows: Vec<Vec<String>> = suites
                .iter()
                .map(|s| {
                    vec![
                        s.name.clone(),
                        s.checks.to_string(),
                        s.failures.to_string(),
                        full(s.worst),
                        full(s.tolerance),
                        s.passed.to_string(),
                    ]
                })
                .collect();
            csv(
                &[
                    "suite",
                    "checks",
                    "failures",
                    "worst",
                    "tolerance",
                    "passed",
                ],
                &rows,
            )
        }
        Results::Renorm(r) => {
            let mut rows = Vec::new();
            for (i, row) in r.rows.iter().enumerate() {
                for b in &row.braces {
                    rows.push(vec![
                        i.to_string(),
                        full(row.norm),
                        b.depth.to_string(),
                        full(b.value),
                    ]);
                }
            }
            csv(&["point", "norm", "depth", "brace"], &rows)
        }
        Results::Duality(d) => {
            let e = &d.experiment;
            let rows = vec![
                vec![
                    "primal".to_string(),
                    e.primal.kind.to_string(),
                    full(e.exponent),
                    full(e.primal.lower_bound),
                ],
                vec![
                    "dual".to_string(),
                    e.dual.kind.to_string(),
                    full(e.dual_exponent),
                    full(e.dual.lower_bound),
                ],
            ];
            csv(&["side", "kind", "exponent", "lower_bound"], &rows)
        }
    }
}

pub fn replay_text(r: &ReplayReport) -> String {
    let rows: Vec<Vec<String>> = r
        .items
        .iter()
        .map(|i| {
            vec![
                i.label.clone(),
                num(i.recorded),
                num(i.replayed),
                sci(i.deviation),
            ]
        })
        .collect();
    let mut out = table(&["item", "recorded", "replayed", "deviation"], &rows);
    let _ = writeln!(
        out,
        "\n{} items, max deviation {}: {}",
        r.items.len(),
        sci(r.max_deviation),
        if r.passed { "reproduced" } else { "MISMATCH" }
    );
    out
}

pub fn replay_csv(r: &ReplayReport) -> String {
    let rows: Vec<Vec<String>> = r
        .items
        .iter()
        .map(|i| {
            vec![
                i.label.clone(),
                format!("{}", i.recorded),
                format!("{}", i.replayed),
                format!("{}", i.deviation),
            ]
        })
        .collect();
    csv(&["item", "recorded", "replayed", "deviation"], &rows)
}
