//! Run record embedded in every command-line output.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub subcommand: String,
    pub kappa: Option<f64>,
    pub lambda: Option<f64>,
    pub n_theta: Option<usize>,
    pub n_s: Option<usize>,
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub outputs: Vec<String>,
    pub tolerances: BTreeMap<String, f64>,
    /// Remaining flags, verbatim.
    pub params: BTreeMap<String, String>,
}

/// What gets embedded next to a payload.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub version: String,
    pub config: RunConfig,
}

impl RunConfig {
    pub fn new(subcommand: &str) -> Self {
        Self { subcommand: subcommand.to_string(), ..Self::default() }
    }

    pub fn param(mut self, key: &str, value: impl ToString) -> Self {
        self.params.insert(key.to_string(), value.to_string());
        self
    }

    pub fn record(&self) -> RunRecord {
        RunRecord { version: VERSION.to_string(), config: self.clone() }
    }
}
