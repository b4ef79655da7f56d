//! Run orchestration shared by the binary and the examples: single runs,
//! policy comparisons normalized to FIFO, and trace generation.

use std::path::Path;

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::Result;
use crate::metrics::{normalize_report, MetricsReport, NormalizedRatios};
use crate::profiledb::ProfileDb;
use crate::schedulers::Policy;
use crate::simengine;
use crate::workload::{self, TraceGenParams};

/// Executes one simulation, writes the report files into the output
/// directory, and returns the report.
pub fn cmd_run(cfg: &RunConfig) -> Result<MetricsReport> {
    cfg.validate()?;
    let db = cfg.load_profiles()?;
    let trace = cfg.resolve_trace(&db)?;
    let result = simengine::run(&trace, &cfg.cluster, &cfg.scheduler, &db)?;
    let dir = cfg.effective_output_dir();
    result.report.emit(&dir)?;
    result.log.save_jsonl(dir.join("events.jsonl"))?;
    Ok(result.report)
}

/// One row of the comparison table.
#[derive(Debug, Clone, Serialize)]
pub struct CompareRow {
    pub policy: String,
    pub total_energy_kwh: f64,
    pub avg_runtime_h: f64,
    pub avg_jtt_h: f64,
    pub mean_active_nodes: f64,
    pub deadline_violations: u32,
    pub normalized: NormalizedRatios,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareOutput {
    pub baseline: String,
    pub rows: Vec<CompareRow>,
}

impl CompareOutput {
    /// Aligned text rendering of the table.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<12} {:>12} {:>8} {:>12} {:>8} {:>10} {:>8} {:>12} {:>8} {:>6}\n",
            "policy",
            "energy_kwh",
            "ratio",
            "runtime_h",
            "ratio",
            "jtt_h",
            "ratio",
            "act_nodes",
            "ratio",
            "viol"
        ));
        for r in &self.rows {
            out.push_str(&format!(
                "{:<12} {:>12.2} {:>8.3} {:>12.2} {:>8.3} {:>10.2} {:>8.3} {:>12.2} {:>8.3} {:>6}\n",
                r.policy,
                r.total_energy_kwh,
                r.normalized.energy,
                r.avg_runtime_h,
                r.normalized.avg_runtime,
                r.avg_jtt_h,
                r.normalized.avg_jtt,
                r.mean_active_nodes,
                r.normalized.mean_active_nodes,
                r.deadline_violations
            ));
        }
        out
    }
}

/// Runs the same trace under each requested policy and normalizes every
/// row to the FIFO baseline (which is run regardless of the request).
pub fn cmd_compare(cfg: &RunConfig, policies: &[Policy]) -> Result<CompareOutput> {
    cfg.validate()?;
    let db = cfg.load_profiles()?;
    let trace = cfg.resolve_trace(&db)?;

    let run_one = |policy: Policy| -> Result<MetricsReport> {
        let mut sched = cfg.scheduler.clone();
        sched.policy = policy;
        Ok(simengine::run(&trace, &cfg.cluster, &sched, &db)?.report)
    };

    let baseline = run_one(Policy::Fifo)?;
    let mut rows = Vec::new();
    for &policy in policies {
        let report = if policy == Policy::Fifo { baseline.clone() } else { run_one(policy)? };
        let normalized = normalize_report(&report, &baseline)?;
        rows.push(CompareRow {
            policy: policy.name().to_string(),
            total_energy_kwh: report.total_energy_kwh,
            avg_runtime_h: report.avg_runtime_h,
            avg_jtt_h: report.avg_jtt_h,
            mean_active_nodes: report.mean_active_nodes,
            deadline_violations: report.deadline_violations,
            normalized,
        });
    }
    let out = CompareOutput { baseline: baseline.policy.clone(), rows };
    let dir = cfg.effective_output_dir();
    std::fs::create_dir_all(&dir).map_err(|e| crate::SimError::io(&dir, e))?;
    let json_path = dir.join("compare.json");
    std::fs::write(&json_path, serde_json::to_string_pretty(&out).expect("table serializes") + "\n")
        .map_err(|e| crate::SimError::io(&json_path, e))?;
    let text_path = dir.join("compare.txt");
    std::fs::write(&text_path, out.render_text()).map_err(|e| crate::SimError::io(&text_path, e))?;
    Ok(out)
}

/// Generates a trace file; returns the number of jobs written.
pub fn cmd_gen_trace(params: &TraceGenParams, db: &ProfileDb, out: &Path) -> Result<usize> {
    let trace = workload::generate_trace(params, db)?;
    workload::save_trace(&trace, out)?;
    Ok(trace.jobs.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::TraceSource;

    fn quick_cfg(dir: &Path) -> RunConfig {
        RunConfig {
            output_dir: dir.to_path_buf(),
            cluster: crate::cluster::ClusterConfig { nodes: 2, ..Default::default() },
            trace: TraceSource::Generate {
                generate: TraceGenParams { n_jobs: 6, arrival_rate_per_h: 2.0, seed: 3, ..Default::default() },
            },
            ..Default::default()
        }
    }

    #[test]
    fn run_writes_all_report_files() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = quick_cfg(dir.path());
        let report = cmd_run(&cfg).unwrap();
        assert!(report.total_energy_kwh > 0.0);
        for f in ["summary.json", "active_nodes.csv", "power.csv", "events.jsonl"] {
            assert!(dir.path().join(f).exists(), "{f} missing");
        }
    }

    #[test]
    fn missing_trace_path_fails() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = quick_cfg(dir.path());
        cfg.trace = TraceSource::Path { path: dir.path().join("nope.jsonl") };
        assert!(cmd_run(&cfg).is_err());
    }

    #[test]
    fn compare_single_fifo_row_is_all_ones() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = quick_cfg(dir.path());
        let out = cmd_compare(&cfg, &[Policy::Fifo]).unwrap();
        assert_eq!(out.rows.len(), 1);
        let n = &out.rows[0].normalized;
        assert_eq!((n.energy, n.avg_runtime, n.avg_jtt, n.mean_active_nodes), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn compare_emits_four_rows_and_files() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = quick_cfg(dir.path());
        let all = [Policy::Fifo, Policy::FifoPacked, Policy::GandivaLike, Policy::Eaco];
        let out = cmd_compare(&cfg, &all).unwrap();
        assert_eq!(out.rows.len(), 4);
        assert!(dir.path().join("compare.json").exists());
        assert!(dir.path().join("compare.txt").exists());
        let text = out.render_text();
        assert!(text.lines().count() == 5);
    }

    #[test]
    fn gen_trace_writes_one_line_per_job() {
        let dir = tempfile::tempdir().unwrap();
        let db = ProfileDb::embedded().unwrap();
        let out = dir.path().join("t.jsonl");
        let params = TraceGenParams { n_jobs: 17, seed: 1, ..Default::default() };
        let n = cmd_gen_trace(&params, &db, &out).unwrap();
        assert_eq!(n, 17);
        let text = std::fs::read_to_string(&out).unwrap();
        assert_eq!(text.lines().count(), 17);
    }

    #[test]
    fn gen_trace_same_seed_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let db = ProfileDb::embedded().unwrap();
        let params = TraceGenParams { n_jobs: 9, seed: 1, ..Default::default() };
        let a = dir.path().join("a.jsonl");
        let b = dir.path().join("b.jsonl");
        cmd_gen_trace(&params, &db, &a).unwrap();
        cmd_gen_trace(&params, &db, &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }
}
