//! The experiment config file and command-line overrides.

use std::fmt;
use std::path::Path;

use martingale_geometry::renorm::Direction;
use martingale_geometry::{LinearOperator, Norm};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Estimate,
    Verify,
    Renorm,
    Duality,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Command::Estimate => "estimate",
            Command::Verify => "verify",
            Command::Renorm => "renorm",
            Command::Duality => "duality",
        })
    }
}

/// Command-specific parameters. Anything left out takes the command's
/// default; see the README for the table.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    /// Constants to estimate, written `kind_exponent` (e.g. `convex_3`).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub constants: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    /// Type-side exponent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    /// Cotype-side exponent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    /// Certificate constant for verify and renorm.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Direction>,
    /// Evaluation points for renorm; drawn from the seed when empty.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub points: Vec<Vec<f64>>,
    /// Decomposition level of the type-side equivalent norm.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decomposition_level: Option<usize>,
    /// Depth of the dyadic chain in the convexity certificate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain_depth: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub space: Option<Norm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operator: Option<LinearOperator>,
    pub command: Command,
    #[serde(default)]
    pub params: Params,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

/// Flag values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub budget: Option<usize>,
    pub depth: Option<usize>,
    pub tol: Option<f64>,
}

impl ExperimentConfig {
    pub fn new(command: Command, space: Norm) -> Self {
        ExperimentConfig {
            space: Some(space),
            operator: None,
            command,
            params: Params::default(),
            seed: 0,
            output: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        if text.trim().is_empty() {
            return Err(CliError::Config("the config file is empty".into()));
        }
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configs always serialize")
    }

    /// Folds flag values in, so the echoed config reproduces the run.
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if o.budget.is_some() {
            self.params.budget = o.budget;
        }
        if o.depth.is_some() {
            self.params.depth = o.depth;
        }
        if o.tol.is_some() {
            self.params.tol = o.tol;
        }
    }

    /// The operator under study: `operator` if given, else the identity on
    /// `space`.
    pub fn resolve_operator(&self) -> Result<LinearOperator, CliError> {
        match (&self.operator, &self.space) {
            (Some(op), Some(space)) if op.domain() != space => Err(CliError::Config(format!(
                "operator domain {} does not match space {space}",
                op.domain()
            ))),
            (Some(op), _) => Ok(op.clone()),
            (None, Some(space)) => Ok(LinearOperator::identity(space.clone())),
            (None, None) => Err(CliError::Config(
                "the config needs a space or an operator".into(),
            )),
        }
    }
}
