//! Run manifests: one JSON file per run recording exactly how to reproduce
//! it. Timestamps and wall times live here and only here; result files stay
//! byte-comparable across reruns.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use dmpt_core::qubo::PenaltyWeights;
use serde::{Deserialize, Serialize};

pub const INTERPRETATION: &str = "continuous weights live on the probability simplex \
(nonnegative, summing to one); lot counts are nonnegative integers summing to the \
configured total; with rescaling on, the given risk aversion is the continuous-model \
value and the lot-space objective divides it by the lot total";

#[derive(Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub created_utc: String,
    pub command: String,
    /// The argument vector this run executed; `--from-manifest` replays it.
    pub argv: Vec<String>,
    /// Structured echo of the parsed flags, defaults resolved.
    pub config: serde_json::Value,
    pub interpretation: String,
    /// Compiled QUBO penalty weights, present on sa-qubo runs.
    pub penalty_weights: Option<PenaltyWeights>,
    pub stage_wall_ms: BTreeMap<String, u128>,
    pub outputs: Vec<String>,
}

/// Wall-clock bookkeeping per pipeline stage.
pub struct Stages {
    last: Instant,
    times: BTreeMap<String, u128>,
}

impl Stages {
    pub fn start() -> Self {
        Self {
            last: Instant::now(),
            times: BTreeMap::new(),
        }
    }

    /// Closes the stage that just ran and starts timing the next one.
    pub fn mark(&mut self, name: &str) {
        let now = Instant::now();
        let elapsed = now.duration_since(self.last).as_millis();
        *self.times.entry(name.to_string()).or_insert(0) += elapsed;
        self.last = now;
    }

    pub fn into_times(self) -> BTreeMap<String, u128> {
        self.times
    }
}

pub struct ManifestInputs<'a> {
    pub command: &'a str,
    pub argv: &'a [String],
    pub config: serde_json::Value,
    pub penalty_weights: Option<PenaltyWeights>,
    pub outputs: Vec<PathBuf>,
    pub stages: Stages,
}

pub fn build(inputs: ManifestInputs<'_>) -> RunManifest {
    RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        created_utc: chrono::Utc::now().to_rfc3339(),
        command: inputs.command.to_string(),
        argv: inputs.argv.to_vec(),
        config: inputs.config,
        interpretation: INTERPRETATION.to_string(),
        penalty_weights: inputs.penalty_weights,
        stage_wall_ms: inputs.stages.into_times(),
        outputs: inputs
            .outputs
            .iter()
            .map(|p| p.display().to_string())
            .collect(),
    }
}

/// Default manifest location: alongside the run's first output file.
pub fn default_path(first_output: &Path) -> PathBuf {
    let mut name = first_output.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    first_output.with_file_name(name)
}
