//! Report types. Every number a report states comes with the witness that
//! produced it, and nothing in the body depends on timing or thread count.

use martingale_geometry::numeric::extended_f64;
use martingale_geometry::renorm::{BraceValue, Decomposition, Direction};
use martingale_geometry::{ConstantEstimate, DefectReport};
use serde::{Deserialize, Serialize};

use crate::config::{Command, ExperimentConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    CertificateViolation,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Pass => 0,
            Status::Fail => 1,
            Status::CertificateViolation => 3,
        }
    }

    /// The worse of two outcomes.
    pub fn and(self, other: Status) -> Status {
        fn rank(s: Status) -> u8 {
            match s {
                Status::Pass => 0,
                Status::Fail => 1,
                Status::CertificateViolation => 2,
            }
        }
        if rank(other) > rank(self) {
            other
        } else {
            self
        }
    }

    pub fn from_pass(ok: bool) -> Status {
        if ok {
            Status::Pass
        } else {
            Status::Fail
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub toolkit: String,
    pub cli: String,
}

impl Versions {
    pub fn current() -> Self {
        Versions {
            toolkit: martingale_geometry::VERSION.to_string(),
            cli: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub command: Command,
    pub versions: Versions,
    pub config: ExperimentConfig,
    pub status: Status,
    pub results: Results,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Results {
    Estimate { estimates: Vec<EstimateRow> },
    Verify { suites: Vec<Suite> },
    Renorm(Box<RenormResults>),
    Duality(Box<DualityResults>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub name: String,
    pub estimate: ConstantEstimate,
}

/// One batch of checks of a single inequality or identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suite {
    pub name: String,
    pub checks: usize,
    pub failures: usize,
    #[serde(with = "extended_f64")]
    pub worst: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// The check with the largest value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub worst_case: Option<DefectReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Suite {
    pub fn new(name: &str, tolerance: f64) -> Self {
        Suite {
            name: name.to_string(),
            checks: 0,
            failures: 0,
            worst: f64::NEG_INFINITY,
            tolerance,
            passed: true,
            worst_case: None,
            note: None,
        }
    }

    /// Records one defect; ties keep the earlier witness.
    pub fn record(&mut self, r: DefectReport) {
        self.record_value(r.value, Some(r));
    }

    pub fn record_value(&mut self, value: f64, r: Option<DefectReport>) {
        self.checks += 1;
        if !(value <= self.tolerance) {
            self.failures += 1;
            self.passed = false;
        }
        if value > self.worst || (value.is_nan() && !self.worst.is_nan()) {
            self.worst = value;
            if r.is_some() {
                self.worst_case = r;
            }
        }
    }

    /// Marks the suite failed by an error that stopped it.
    pub fn abort(&mut self, note: String) {
        self.failures += 1;
        self.passed = false;
        self.note = Some(note);
    }

    pub fn finish(mut self) -> Self {
        if self.checks == 0 && self.worst == f64::NEG_INFINITY {
            self.worst = 0.0;
        }
        self
    }
}

/// A certificate violation caught by a brace search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub point: Vec<f64>,
    pub c: f64,
    #[serde(with = "extended_f64")]
    pub objective: f64,
    #[serde(with = "extended_f64")]
    pub bound: f64,
    pub witness: martingale_geometry::DifferenceSequence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenormRow {
    pub x: Vec<f64>,
    pub norm: f64,
    /// `{x}_0, …, {x}_N`.
    pub braces: Vec<BraceValue>,
    pub monotone: bool,
    pub within_bounds: bool,
    /// `|||x|||` for the cotype side.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equivalent_norm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionRow {
    pub y: Vec<f64>,
    pub norm: f64,
    pub value: f64,
    pub lower: f64,
    pub decomposition: Decomposition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenormResults {
    pub direction: Direction,
    pub exponent: f64,
    pub c: f64,
    pub depth: usize,
    pub budget: usize,
    pub rows: Vec<RenormRow>,
    pub suites: Vec<Suite>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub decompositions: Vec<DecompositionRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub violation: Option<Violation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualityResults {
    pub experiment: martingale_geometry::duality::DualityReport,
    pub gap_tolerance: f64,
    pub suites: Vec<Suite>,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports always serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> serde_json::Result<Report> {
        serde_json::from_str(text)
    }
}
