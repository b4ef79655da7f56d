//! Run metrics: total energy, per-job completion and total times, active
//! node and power time series, and the energy/performance objective.
//!
//! Emitted files: `summary.json` (the full report), `active_nodes.csv`
//! (`time_h,count`), and `power.csv` (`time_h,watts`).

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// Per-job outcome. `jct` measures first start to completion; `jtt` adds
/// the initial queue wait, so `jtt = wait + runtime` always holds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerJobMetrics {
    pub job_id: String,
    pub model: String,
    pub wait_h: f64,
    pub runtime_h: f64,
    pub jct_h: f64,
    pub jtt_h: f64,
    pub deadline_met: bool,
    pub energy_kwh: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub policy: String,
    pub alpha: f64,
    pub total_energy_kwh: f64,
    pub avg_jct_h: f64,
    pub avg_jtt_h: f64,
    pub avg_runtime_h: f64,
    /// Mean realized time per epoch across completed jobs (waits excluded).
    pub avg_tpe_h: f64,
    /// `alpha * sum(E_j) + (1 - alpha) * avg_tpe`; units are mixed by
    /// construction, reported as a dimensionless score.
    pub objective_value: f64,
    pub deadline_violations: u32,
    pub mean_active_nodes: f64,
    pub makespan_h: f64,
    pub rejected: Vec<String>,
    pub per_job: Vec<PerJobMetrics>,
    pub active_nodes_series: Vec<(f64, u32)>,
    pub power_series: Vec<(f64, f64)>,
}

/// Energy/performance objective: `alpha * sum(E_j) + (1 - alpha) * avg_tpe`.
/// Per-job energies are the equal-split shares of node power over the
/// intervals the job was resident.
pub fn objective_value(per_job_energies_kwh: &[f64], avg_tpe_h: f64, alpha: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(SimError::Config(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    let total: f64 = per_job_energies_kwh.iter().sum();
    Ok(alpha * total + (1.0 - alpha) * avg_tpe_h)
}

/// Report ratios relative to a baseline run (conventionally FIFO).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormalizedRatios {
    pub policy: String,
    pub baseline: String,
    pub energy: f64,
    pub avg_runtime: f64,
    pub avg_jtt: f64,
    pub mean_active_nodes: f64,
}

pub fn normalize_report(report: &MetricsReport, baseline: &MetricsReport) -> Result<NormalizedRatios> {
    let ratio = |what: &str, num: f64, den: f64| -> Result<f64> {
        if den == 0.0 {
            return Err(SimError::Config(format!(
                "cannot normalize {what}: baseline value is zero"
            )));
        }
        Ok(num / den)
    };
    Ok(NormalizedRatios {
        policy: report.policy.clone(),
        baseline: baseline.policy.clone(),
        energy: ratio("energy", report.total_energy_kwh, baseline.total_energy_kwh)?,
        avg_runtime: ratio("avg_runtime", report.avg_runtime_h, baseline.avg_runtime_h)?,
        avg_jtt: ratio("avg_jtt", report.avg_jtt_h, baseline.avg_jtt_h)?,
        mean_active_nodes: ratio(
            "mean_active_nodes",
            report.mean_active_nodes,
            baseline.mean_active_nodes,
        )?,
    })
}

/// Time-weighted mean of a right-open piecewise-constant series over
/// `[0, end]`.
fn series_mean<T: Copy + Into<f64>>(series: &[(f64, T)], end_h: f64) -> f64 {
    if series.is_empty() || end_h <= 0.0 {
        return 0.0;
    }
    let mut acc = 0.0;
    for (i, &(t, v)) in series.iter().enumerate() {
        let next = series.get(i + 1).map(|&(t2, _)| t2).unwrap_or(end_h);
        acc += v.into() * (next.min(end_h) - t).max(0.0);
    }
    acc / end_h
}

/// Integral of the power series over `[0, end]`, kilowatt-hours.
pub fn integrate_power_series(series: &[(f64, f64)], end_h: f64) -> f64 {
    series_mean(series, end_h) * end_h / 1000.0
}

/// Files written by [`MetricsReport::emit`].
#[derive(Debug, Clone)]
pub struct EmittedFiles {
    pub summary: PathBuf,
    pub active_nodes: PathBuf,
    pub power: PathBuf,
}

impl MetricsReport {
    /// Builds the report from raw run artifacts.
    #[allow(clippy::too_many_arguments)]
    pub fn assemble(
        policy: &str,
        alpha: f64,
        per_job: Vec<PerJobMetrics>,
        rejected: Vec<String>,
        avg_tpe_h: f64,
        power_series: Vec<(f64, f64)>,
        active_nodes_series: Vec<(f64, u32)>,
        end_h: f64,
    ) -> Result<Self> {
        let n = per_job.len() as f64;
        let mean = |f: fn(&PerJobMetrics) -> f64| {
            if per_job.is_empty() {
                0.0
            } else {
                per_job.iter().map(f).sum::<f64>() / n
            }
        };
        let energies: Vec<f64> = per_job.iter().map(|r| r.energy_kwh).collect();
        let objective = objective_value(&energies, avg_tpe_h, alpha)?;
        Ok(MetricsReport {
            schema_version: 1,
            policy: policy.to_string(),
            alpha,
            total_energy_kwh: integrate_power_series(&power_series, end_h),
            avg_jct_h: mean(|r| r.jct_h),
            avg_jtt_h: mean(|r| r.jtt_h),
            avg_runtime_h: mean(|r| r.runtime_h),
            avg_tpe_h,
            objective_value: objective,
            deadline_violations: per_job.iter().filter(|r| !r.deadline_met).count() as u32,
            mean_active_nodes: series_mean(&active_nodes_series, end_h),
            makespan_h: end_h,
            rejected,
            per_job,
            active_nodes_series,
            power_series,
        })
    }

    /// Serialized form written to `summary.json`; stable for byte-level
    /// reproducibility checks.
    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// One-line digest for terminal output.
    pub fn summary_line(&self) -> String {
        format!(
            "policy={} energy={:.2}kWh avg_jct={:.2}h avg_jtt={:.2}h deadline_violations={} mean_active_nodes={:.2}",
            self.policy,
            self.total_energy_kwh,
            self.avg_jct_h,
            self.avg_jtt_h,
            self.deadline_violations,
            self.mean_active_nodes
        )
    }

    /// Writes `summary.json`, `active_nodes.csv`, and `power.csv` into
    /// `dir`, creating it as needed.
    pub fn emit(&self, dir: impl AsRef<Path>) -> Result<EmittedFiles> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| SimError::io(dir, e))?;
        let summary = dir.join("summary.json");
        let write = |path: &Path, data: &[u8]| -> Result<()> {
            let mut f = std::fs::File::create(path).map_err(|e| SimError::io(path, e))?;
            f.write_all(data).map_err(|e| SimError::io(path, e))
        };
        write(&summary, self.summary_json().as_bytes())?;

        let active_nodes = dir.join("active_nodes.csv");
        let mut csv = String::from("time_h,count\n");
        for (t, c) in &self.active_nodes_series {
            csv.push_str(&format!("{t:.6},{c}\n"));
        }
        write(&active_nodes, csv.as_bytes())?;

        let power = dir.join("power.csv");
        let mut csv = String::from("time_h,watts\n");
        for (t, w) in &self.power_series {
            csv.push_str(&format!("{t:.6},{w:.6}\n"));
        }
        write(&power, csv.as_bytes())?;
        Ok(EmittedFiles { summary, active_nodes, power })
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| SimError::Config(format!("bad summary JSON: {e}")))
    }
}
