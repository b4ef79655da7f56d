//! Run configuration: a single versioned TOML document.
//!
//! ```toml
//! schema_version = 1
//! seed = 42
//! profiles = "embedded"        # or a path to a profile JSON document
//! output_dir = "out"
//!
//! [cluster]
//! nodes = 4
//! gpus_per_node = 8
//!
//! [scheduler]
//! policy = "eaco"              # fifo | fifo-packed | gandiva | eaco
//!
//! [trace]
//! path = "trace.jsonl"
//! # or, instead of a path:
//! # [trace.generate]
//! # n_jobs = 60
//! # arrival_rate_per_h = 3.0
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cluster::ClusterConfig;
use crate::error::{Result, SimError};
use crate::profiledb::ProfileDb;
use crate::schedulers::SchedulerConfig;
use crate::workload::{self, Trace, TraceGenParams};

pub const SCHEMA_VERSION: u32 = 1;

/// Where the job trace comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TraceSource {
    Path { path: PathBuf },
    Generate { generate: TraceGenParams },
}

impl Default for TraceSource {
    fn default() -> Self {
        TraceSource::Generate {
            generate: TraceGenParams { n_jobs: 20, arrival_rate_per_h: 2.0, ..Default::default() },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub schema_version: u32,
    pub seed: u64,
    /// `"embedded"` or a path to a profile JSON document.
    pub profiles: String,
    pub output_dir: PathBuf,
    pub cluster: ClusterConfig,
    pub scheduler: SchedulerConfig,
    pub trace: TraceSource,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            profiles: "embedded".into(),
            output_dir: PathBuf::from("out"),
            cluster: ClusterConfig::default(),
            scheduler: SchedulerConfig::default(),
            trace: TraceSource::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
        let cfg: RunConfig =
            toml::from_str(&text).map_err(|e| SimError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(SimError::Config(format!(
                "unsupported schema_version {}, expected {SCHEMA_VERSION}",
                self.schema_version
            )));
        }
        self.cluster.validate()?;
        self.scheduler.validate()?;
        Ok(())
    }

    /// Resolves the profile database named by `profiles`.
    pub fn load_profiles(&self) -> Result<ProfileDb> {
        if self.profiles == "embedded" {
            ProfileDb::embedded()
        } else {
            ProfileDb::load(&self.profiles)
        }
    }

    /// Resolves the trace: loads the file or runs the generator. Generator
    /// runs inherit the top-level seed unless the generator sets its own.
    pub fn resolve_trace(&self, db: &ProfileDb) -> Result<Trace> {
        match &self.trace {
            TraceSource::Path { path } => workload::load_trace(path),
            TraceSource::Generate { generate } => {
                let mut params = generate.clone();
                if params.seed == 0 {
                    params.seed = self.seed;
                }
                params.gpus_per_node = self.cluster.gpus_per_node;
                params.gpu_total_mem_gb = self.cluster.gpu_total_mem_gb;
                params.gpu_type = self.cluster.gpu_type.clone();
                workload::generate_trace(&params, db)
            }
        }
    }

    /// Output directory, honoring the `EACO_SIM_OUTPUT_DIR` override.
    pub fn effective_output_dir(&self) -> PathBuf {
        match std::env::var_os("EACO_SIM_OUTPUT_DIR") {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => self.output_dir.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedulers::Policy;

    #[test]
    fn default_config_validates_and_runs_generator() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let db = cfg.load_profiles().unwrap();
        let trace = cfg.resolve_trace(&db).unwrap();
        assert_eq!(trace.jobs.len(), 20);
    }

    #[test]
    fn toml_round_trip_with_trace_path() {
        let text = r#"
schema_version = 1
seed = 7
profiles = "embedded"
output_dir = "results"

[cluster]
nodes = 28
gpus_per_node = 8

[scheduler]
policy = "fifo-packed"
u_threshold = 85.0

[trace]
path = "trace.jsonl"
"#;
        let cfg: RunConfig = toml::from_str(text).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.cluster.nodes, 28);
        assert_eq!(cfg.scheduler.policy, Policy::FifoPacked);
        assert_eq!(cfg.scheduler.u_threshold, 85.0);
        match cfg.trace {
            TraceSource::Path { ref path } => assert_eq!(path, &PathBuf::from("trace.jsonl")),
            _ => panic!("expected path source"),
        }
    }

    #[test]
    fn generator_table_parses() {
        let text = r#"
[trace.generate]
n_jobs = 60
arrival_rate_per_h = 3.0
deadline_slack = 1.5
model_mix = { "AlexNet" = 1.0, "VGG-16" = 2.0 }
"#;
        let cfg: RunConfig = toml::from_str(text).unwrap();
        match cfg.trace {
            TraceSource::Generate { ref generate } => {
                assert_eq!(generate.n_jobs, 60);
                assert_eq!(generate.deadline_slack, Some(1.5));
                assert_eq!(generate.model_mix.len(), 2);
            }
            _ => panic!("expected generator source"),
        }
    }

    #[test]
    fn bad_schema_version_is_rejected() {
        let cfg = RunConfig { schema_version: 99, ..RunConfig::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn cluster_sizes_from_reported_experiments_are_accepted() {
        for nodes in [28, 64] {
            let cfg = RunConfig {
                cluster: ClusterConfig { nodes, ..ClusterConfig::default() },
                ..RunConfig::default()
            };
            cfg.validate().unwrap();
        }
    }
}
