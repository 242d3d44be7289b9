use std::path::Path;

use bats_core::{FieldSpec, PathProfile, Policy};
use serde::{Deserialize, Serialize};

use crate::args::ScenarioArgs;
use crate::error::CliError;

pub const DEFAULT_Q: u32 = 256;
pub const DEFAULT_BATCH_SIZE: u32 = 16;
pub const DEFAULT_TRIALS: u64 = 10_000;

/// Scenario file contents; every field is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    q: Option<u32>,
    #[serde(rename = "M", alias = "batch_size")]
    batch_size: Option<u32>,
    eps: Option<Vec<f64>>,
    t: Option<Vec<u32>>,
    n1: Option<f64>,
    seed: Option<u64>,
    trials: Option<u64>,
}

/// Fully resolved scenario, echoed in every JSON report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub q: u32,
    #[serde(rename = "M")]
    pub batch_size: u32,
    pub eps: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<Vec<u32>>,
    pub n1: f64,
    pub seed: u64,
    pub trials: u64,
}

/// Seed used when neither a flag nor the scenario sets one.
pub fn default_seed() -> Result<u64, CliError> {
    match std::env::var("BATS_SEED") {
        Ok(s) => s
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("BATS_SEED must be an unsigned integer, got {s:?}"))),
        Err(_) => Ok(0),
    }
}

fn read_file(path: &Path) -> Result<ScenarioFile, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

impl Scenario {
    pub fn resolve(args: &ScenarioArgs) -> Result<Self, CliError> {
        let file = match &args.scenario {
            Some(p) => read_file(p)?,
            None => ScenarioFile::default(),
        };
        let eps = args
            .eps
            .clone()
            .or(file.eps)
            .ok_or_else(|| CliError::Usage("loss rates missing: pass --eps or set \"eps\" in the scenario".into()))?;
        let seed = match args.seed.or(file.seed) {
            Some(s) => s,
            None => default_seed()?,
        };
        let s = Self {
            q: args.q.or(file.q).unwrap_or(DEFAULT_Q),
            batch_size: args.batch_size.or(file.batch_size).unwrap_or(DEFAULT_BATCH_SIZE),
            eps,
            t: args.t.clone().or(file.t),
            n1: args.n1.or(file.n1).unwrap_or(1.0),
            seed,
            trials: args.trials.or(file.trials).unwrap_or(DEFAULT_TRIALS),
        };
        if let Some(t) = &s.t {
            if t.len() != s.eps.len() {
                return Err(CliError::Validation(format!(
                    "{} packet counts for {} hops",
                    t.len(),
                    s.eps.len()
                )));
            }
        }
        if s.trials == 0 {
            return Err(CliError::Validation("trials must be at least 1".into()));
        }
        Ok(s)
    }

    pub fn field(&self) -> Result<FieldSpec, CliError> {
        Ok(FieldSpec::from_order(self.q)?)
    }

    pub fn profile(&self) -> Result<PathProfile, CliError> {
        Ok(PathProfile::new(self.eps.clone(), self.batch_size, self.field()?)?)
    }

    /// The policy given by t, or a usage error naming the command.
    pub fn policy(&self, command: &str) -> Result<Policy, CliError> {
        match &self.t {
            Some(t) => Ok(Policy::new(t.clone())?),
            None => Err(CliError::Usage(format!(
                "{command} needs packet counts: pass --t or set \"t\" in the scenario"
            ))),
        }
    }
}
