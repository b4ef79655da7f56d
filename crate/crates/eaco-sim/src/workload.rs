//! Job traces: domain types, synthetic generation, and JSONL persistence.
//!
//! Trace format: one job per line,
//! `{"job_id", "model", "arrival_h", "gpu_count", "gpu_type", "est_mem_gb",
//!   "deadline_h", "priority"}` with `deadline_h` either a number or `"inf"`.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::profiledb::ProfileDb;

/// A job's completion deadline; `Unbounded` stands for "no SLO".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Deadline {
    Finite(f64),
    Unbounded,
}

impl Deadline {
    pub fn met_by(&self, completion_h: f64) -> bool {
        match self {
            Deadline::Finite(d) => completion_h <= *d + 1e-9,
            Deadline::Unbounded => true,
        }
    }

    pub fn finite(&self) -> Option<f64> {
        match self {
            Deadline::Finite(d) => Some(*d),
            Deadline::Unbounded => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Priority {
    Normal,
    /// Requires immediate, exclusive resource allocation; never shares.
    HighExclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Trial,
    Running,
    Completed,
}

/// One deep-learning training job.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Job {
    pub job_id: String,
    pub model: String,
    pub arrival_h: f64,
    pub gpu_count: u32,
    pub gpu_type: String,
    pub estimated_memory_gb: f64,
    pub deadline: Deadline,
    pub priority: Priority,
    pub state: JobState,
    pub epochs_done: u32,
    pub alloc: Option<crate::cluster::GpuSet>,
    pub first_start_h: Option<f64>,
    pub completion_h: Option<f64>,
}

impl Job {
    pub fn new(
        job_id: impl Into<String>,
        model: impl Into<String>,
        arrival_h: f64,
        gpu_count: u32,
        gpu_type: impl Into<String>,
        estimated_memory_gb: f64,
        deadline: Deadline,
        priority: Priority,
    ) -> Self {
        Job {
            job_id: job_id.into(),
            model: model.into(),
            arrival_h,
            gpu_count,
            gpu_type: gpu_type.into(),
            estimated_memory_gb,
            deadline,
            priority,
            state: JobState::Queued,
            epochs_done: 0,
            alloc: None,
            first_start_h: None,
            completion_h: None,
        }
    }
}

/// An arrival-ordered list of jobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trace {
    pub name: String,
    pub seed: u64,
    pub jobs: Vec<Job>,
}

impl Trace {
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        let mut last = f64::NEG_INFINITY;
        for job in &self.jobs {
            if !seen.insert(job.job_id.clone()) {
                return Err(SimError::TraceValidation(format!("duplicate job id '{}'", job.job_id)));
            }
            if job.arrival_h < last {
                return Err(SimError::TraceValidation(format!(
                    "arrivals out of order at job '{}' ({} after {})",
                    job.job_id, job.arrival_h, last
                )));
            }
            if job.arrival_h < 0.0 || job.gpu_count == 0 || job.estimated_memory_gb < 0.0 {
                return Err(SimError::TraceValidation(format!(
                    "job '{}' has invalid fields",
                    job.job_id
                )));
            }
            last = job.arrival_h;
        }
        Ok(())
    }
}

/// Parameters for synthetic trace generation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TraceGenParams {
    pub n_jobs: usize,
    /// Poisson arrival rate, jobs per hour.
    pub arrival_rate_per_h: f64,
    /// Model mix as model -> weight; weights need not sum to one.
    pub model_mix: std::collections::BTreeMap<String, f64>,
    /// Deadline = arrival + slack x exclusive JCT; `None` leaves every
    /// deadline unbounded.
    pub deadline_slack: Option<f64>,
    /// Probability that a job is generated with an unbounded deadline even
    /// when a slack is set.
    pub unbounded_fraction: f64,
    /// Probability that a job requires exclusive, high-priority placement.
    pub high_priority_fraction: f64,
    pub gpu_count: u32,
    pub gpu_type: String,
    /// Per-GPU memory used to turn profile peak-memory percentages into
    /// per-job estimates, GB.
    pub gpu_total_mem_gb: f64,
    pub gpus_per_node: usize,
    pub seed: u64,
}

impl Default for TraceGenParams {
    fn default() -> Self {
        TraceGenParams {
            n_jobs: 200,
            arrival_rate_per_h: 4.0,
            model_mix: [
                ("AlexNet".to_string(), 1.0),
                ("ResNet-18".to_string(), 1.0),
                ("ResNet-50".to_string(), 1.0),
                ("VGG-16".to_string(), 1.0),
            ]
            .into_iter()
            .collect(),
            deadline_slack: None,
            unbounded_fraction: 0.0,
            high_priority_fraction: 0.0,
            gpu_count: 8,
            gpu_type: "V100".into(),
            gpu_total_mem_gb: 32.0,
            gpus_per_node: 8,
            seed: 0,
        }
    }
}

impl TraceGenParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_jobs == 0 {
            return Err(SimError::Config("trace generator needs n_jobs >= 1".into()));
        }
        if !(self.arrival_rate_per_h > 0.0) {
            return Err(SimError::Config("arrival rate must be positive".into()));
        }
        if self.model_mix.is_empty()
            || self.model_mix.values().any(|w| *w < 0.0)
            || self.model_mix.values().all(|w| *w == 0.0)
        {
            return Err(SimError::Config("model mix weights must be nonnegative and not all zero".into()));
        }
        if let Some(s) = self.deadline_slack {
            if !(s > 0.0) {
                return Err(SimError::Config("deadline slack must be positive".into()));
            }
        }
        if !(0.0..=1.0).contains(&self.unbounded_fraction)
            || !(0.0..=1.0).contains(&self.high_priority_fraction)
        {
            return Err(SimError::Config("fractions must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Generates a Poisson-arrival trace, deterministic per seed.
///
/// Estimated memory follows the model's measured peak memory utilization
/// applied to the total GPU memory of one node.
pub fn generate_trace(params: &TraceGenParams, db: &ProfileDb) -> Result<Trace> {
    params.validate()?;
    let mix: Vec<(&String, f64)> = params.model_mix.iter().map(|(m, w)| (m, *w)).collect();
    for (m, _) in &mix {
        db.exclusive_profile_for(m, params.gpu_count)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let weights = WeightedIndex::new(mix.iter().map(|(_, w)| *w))
        .map_err(|e| SimError::Config(format!("bad model mix: {e}")))?;
    let node_mem = params.gpu_total_mem_gb * params.gpus_per_node as f64;

    let mut jobs = Vec::with_capacity(params.n_jobs);
    let mut t = 0.0;
    for i in 0..params.n_jobs {
        // Exponential inter-arrival; fixed draw order keeps streams aligned.
        let u: f64 = rng.gen_range(f64::EPSILON..1.0);
        let gap = -u.ln() / params.arrival_rate_per_h;
        let model = mix[weights.sample(&mut rng)].0.clone();
        let unbounded_draw: f64 = rng.gen();
        let priority_draw: f64 = rng.gen();
        if i > 0 {
            t += gap;
        }
        let profile = db.exclusive_profile_for(&model, params.gpu_count)?;
        let deadline = match params.deadline_slack {
            Some(slack) if unbounded_draw >= params.unbounded_fraction => {
                Deadline::Finite(t + slack * profile.jct_h)
            }
            _ => Deadline::Unbounded,
        };
        let priority = if priority_draw < params.high_priority_fraction {
            Priority::HighExclusive
        } else {
            Priority::Normal
        };
        jobs.push(Job::new(
            format!("job-{i:04}"),
            model.clone(),
            t,
            params.gpu_count,
            params.gpu_type.clone(),
            profile.max_mem_util / 100.0 * node_mem,
            deadline,
            priority,
        ));
    }
    let trace = Trace { name: format!("synthetic-{}", params.seed), seed: params.seed, jobs };
    trace.validate()?;
    Ok(trace)
}

#[derive(Debug, Serialize, Deserialize)]
struct TraceLine {
    job_id: String,
    model: String,
    arrival_h: f64,
    gpu_count: u32,
    gpu_type: String,
    est_mem_gb: f64,
    deadline_h: serde_json::Value,
    priority: Priority,
}

/// Writes a trace in the JSONL format, one job per line.
pub fn save_trace(trace: &Trace, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for job in &trace.jobs {
        let line = TraceLine {
            job_id: job.job_id.clone(),
            model: job.model.clone(),
            arrival_h: job.arrival_h,
            gpu_count: job.gpu_count,
            gpu_type: job.gpu_type.clone(),
            est_mem_gb: job.estimated_memory_gb,
            deadline_h: match job.deadline {
                Deadline::Finite(d) => serde_json::json!(d),
                Deadline::Unbounded => serde_json::json!("inf"),
            },
            priority: job.priority,
        };
        serde_json::to_writer(&mut out, &line).map_err(|e| SimError::TraceValidation(e.to_string()))?;
        out.push(b'\n');
    }
    let mut file = std::fs::File::create(path).map_err(|e| SimError::io(path, e))?;
    file.write_all(&out).map_err(|e| SimError::io(path, e))?;
    Ok(())
}

/// Loads a JSONL trace, reporting parse failures with their line number.
pub fn load_trace(path: impl AsRef<Path>) -> Result<Trace> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "trace".into());
    let mut jobs = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let line: TraceLine = serde_json::from_str(raw)
            .map_err(|e| SimError::TraceParse { line: line_no, reason: e.to_string() })?;
        let deadline = match &line.deadline_h {
            v if v.is_number() => Deadline::Finite(v.as_f64().unwrap()),
            v if v.as_str() == Some("inf") => Deadline::Unbounded,
            v => {
                return Err(SimError::TraceParse {
                    line: line_no,
                    reason: format!("deadline_h must be a number or \"inf\", got {v}"),
                })
            }
        };
        jobs.push(Job::new(
            line.job_id,
            line.model,
            line.arrival_h,
            line.gpu_count,
            line.gpu_type,
            line.est_mem_gb,
            deadline,
            line.priority,
        ));
    }
    let trace = Trace { name, seed: 0, jobs };
    trace.validate()?;
    Ok(trace)
}
