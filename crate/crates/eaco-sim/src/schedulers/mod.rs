//! Scheduling policies and their shared machinery.
//!
//! Four policies are implemented:
//!
//! * `Fifo` — arrival order, exclusive GPU sets only.
//! * `FifoPacked` — FIFO, but packs onto a busy set when no idle set exists.
//! * `GandivaLike` — greedy packing onto the least-utilized candidate with
//!   introspective unpacking after one observed epoch.
//! * `Eaco` — deadline-aware co-allocation: candidates are walked from the
//!   busiest down, completion times are predicted from the performance
//!   history, and a shared placement runs as a revocable trial until every
//!   co-resident has completed one epoch under the new allocation.

mod history;

pub use history::{History, Provenance, SigRecord};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::cluster::{ClusterState, GpuId, GpuSet};
use crate::error::{Result, SimError};
use crate::profiledb::{normalize_set, ProfileDb};
use crate::workload::{Job, Priority};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    Fifo,
    FifoPacked,
    GandivaLike,
    Eaco,
}

impl Policy {
    pub fn name(&self) -> &'static str {
        match self {
            Policy::Fifo => "fifo",
            Policy::FifoPacked => "fifo-packed",
            Policy::GandivaLike => "gandiva",
            Policy::Eaco => "eaco",
        }
    }

    pub fn parse(s: &str) -> Result<Policy> {
        match s.to_ascii_lowercase().as_str() {
            "fifo" | "default" => Ok(Policy::Fifo),
            "fifo-packed" | "fifo_packed" => Ok(Policy::FifoPacked),
            "gandiva" | "gandiva-like" => Ok(Policy::GandivaLike),
            "eaco" => Ok(Policy::Eaco),
            other => Err(SimError::Config(format!("unknown policy '{other}'"))),
        }
    }
}

/// Thresholds and knobs shared by every policy.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SchedulerConfig {
    pub policy: Policy,
    /// Energy-vs-performance weight of the reported objective value.
    pub alpha: f64,
    /// GPU core-utilization ceiling for co-location candidates, percent.
    pub u_threshold: f64,
    /// GPU memory-utilization ceiling for co-location candidates, percent.
    pub mem_threshold: f64,
    /// Pessimism applied to fallback completion estimates.
    pub safety_margin: f64,
    /// Maximum number of jobs sharing one GPU set.
    pub max_coloc: u32,
    /// Observed epoch-time inflation beyond which the Gandiva-like policy
    /// unpacks the newest job.
    pub gandiva_inflation_threshold: f64,
    /// Seed the performance history with the profile measurements.
    pub seed_history: bool,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig {
            policy: Policy::Eaco,
            alpha: 0.5,
            u_threshold: 90.0,
            mem_threshold: 90.0,
            safety_margin: 0.10,
            max_coloc: 4,
            gandiva_inflation_threshold: 0.25,
            seed_history: true,
        }
    }
}

impl SchedulerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(SimError::Config(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        for (name, v) in [("u_threshold", self.u_threshold), ("mem_threshold", self.mem_threshold)] {
            if !(v > 0.0 && v <= 100.0) {
                return Err(SimError::Config(format!("{name} must lie in (0, 100], got {v}")));
            }
        }
        if self.max_coloc == 0 {
            return Err(SimError::Config("max_coloc must be at least 1".into()));
        }
        if self.safety_margin < 0.0 || self.gandiva_inflation_threshold < 0.0 {
            return Err(SimError::Config("margins must be nonnegative".into()));
        }
        Ok(())
    }
}

/// What a policy wants done with a job right now.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decision {
    /// Place on an idle set; final immediately.
    AllocateExclusive(GpuSet),
    /// Place on a busy set under trial monitoring (EaCO).
    AllocateTrial(GpuSet),
    /// Place on a busy set with no trial (packing baselines).
    AllocateShared(GpuSet),
    Wait,
}

/// Revocable co-allocation in its monitoring window.
#[derive(Debug, Clone)]
pub struct TrialState {
    pub job_id: String,
    pub gpu_set: GpuSet,
    pub start_h: f64,
    /// Co-located jobs (including the new one) still owing one epoch under
    /// the new allocation.
    pub epochs_awaited: BTreeSet<String>,
    /// GPU sets this job already tried and had reverted.
    pub rejected_sets: Vec<GpuSet>,
}

/// Per-job completion estimate.
#[derive(Debug, Clone)]
pub struct JctPrediction {
    pub job_id: String,
    pub predicted_epoch_h: f64,
    pub predicted_completion_h: f64,
}

fn mean_core_util(state: &ClusterState, set: &[GpuId]) -> f64 {
    let sum: f64 = set.iter().map(|g| state.nodes[g.node].gpus[g.index].core_util).sum();
    sum / set.len() as f64
}

/// Candidate GPU sets for `job`, best (busiest) first.
///
/// A set qualifies when it is node-local with the requested size and GPU
/// type, every member GPU sits below both utilization thresholds, the
/// un-reserved memory across the set exceeds the job's estimate, fewer than
/// `max_coloc` jobs are resident, and no resident requires exclusivity.
/// High-priority jobs only receive idle sets. Ties in utilization order by
/// node and GPU index.
pub fn find_candidates(job: &Job, state: &ClusterState, cfg: &SchedulerConfig) -> Vec<GpuSet> {
    let want = job.gpu_count as usize;
    let mut out: Vec<(f64, GpuSet)> = Vec::new();
    for node in &state.nodes {
        if want > node.gpus.len() {
            continue;
        }
        for combo in combinations(node.gpus.len(), want) {
            let set: GpuSet = combo.iter().map(|&index| GpuId { node: node.node_id, index }).collect();
            if admissible(job, state, cfg, &set) {
                out.push((mean_core_util(state, &set), set));
            }
        }
    }
    out.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    out.into_iter().map(|(_, s)| s).collect()
}

fn admissible(job: &Job, state: &ClusterState, cfg: &SchedulerConfig, set: &[GpuId]) -> bool {
    let mut avail_mem = 0.0;
    for id in set {
        let gpu = &state.nodes[id.node].gpus[id.index];
        if gpu.gpu_type != job.gpu_type {
            return false;
        }
        if gpu.core_util >= cfg.u_threshold || gpu.mem_util >= cfg.mem_threshold {
            return false;
        }
        avail_mem += gpu.total_mem_gb - gpu.peak_mem_used_gb;
    }
    if avail_mem <= job.estimated_memory_gb {
        return false;
    }
    let residents = state.resident_ids_of_set(set);
    if residents.len() >= cfg.max_coloc as usize {
        return false;
    }
    if job.priority == Priority::HighExclusive && !residents.is_empty() {
        return false;
    }
    residents
        .iter()
        .all(|j| state.job_meta(j).map(|m| !m.high_priority).unwrap_or(true))
}

/// Lexicographic k-combinations of `0..n`.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k > n {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        // advance the rightmost index that can still move
        let mut i = k;
        while i > 0 {
            i -= 1;
            if idx[i] != i + n - k {
                idx[i] += 1;
                for j in i + 1..k {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
            if i == 0 {
                return out;
            }
        }
        if k == 0 {
            return out;
        }
    }
}

/// Predicts completion times for every job in `jobset` running together.
///
/// An exact history record for the co-location signature answers directly;
/// anything else is estimated with the fallback model inflated by the
/// safety margin. The in-flight epoch counts as a whole remaining epoch, so
/// estimates are conservative.
pub fn predict_jct(
    jobset: &[&Job],
    now_h: f64,
    history: &History,
    db: &ProfileDb,
    cfg: &SchedulerConfig,
) -> Result<Vec<JctPrediction>> {
    if jobset.is_empty() {
        return Err(SimError::Prediction("empty job set".into()));
    }
    let models = normalize_set(&jobset.iter().map(|j| j.model.clone()).collect::<Vec<_>>());
    let mut out = Vec::with_capacity(jobset.len());
    for job in jobset {
        let epoch = match history.epoch_for(&models, job.gpu_count, &job.model) {
            Some(e) => e,
            None => {
                let base = db
                    .exclusive_profile_for(&job.model, job.gpu_count)
                    .map_err(|e| SimError::Prediction(e.to_string()))?
                    .effective_epoch_h();
                let slowdown = db
                    .fallback_slowdown(&models, job.gpu_count)
                    .map_err(|e| SimError::Prediction(e.to_string()))?;
                base * slowdown * (1.0 + cfg.safety_margin)
            }
        };
        let n_epochs = db
            .exclusive_profile_for(&job.model, job.gpu_count)
            .map_err(|e| SimError::Prediction(e.to_string()))?
            .n_epochs;
        let remaining = f64::from(n_epochs.saturating_sub(job.epochs_done));
        out.push(JctPrediction {
            job_id: job.job_id.clone(),
            predicted_epoch_h: epoch,
            predicted_completion_h: now_h + remaining * epoch,
        });
    }
    Ok(out)
}

/// First fully idle node-local set of the requested size and type.
pub fn first_idle_set(job: &Job, state: &ClusterState) -> Option<GpuSet> {
    let want = job.gpu_count as usize;
    for node in &state.nodes {
        let idle: Vec<GpuId> = node
            .gpus
            .iter()
            .filter(|g| g.assigned_jobs.is_empty() && g.gpu_type == job.gpu_type)
            .map(|g| g.id)
            .collect();
        if idle.len() >= want {
            return Some(idle.into_iter().take(want).collect());
        }
    }
    None
}

/// FIFO: exclusive placement on the first idle set, else wait.
pub fn fifo_schedule(job: &Job, state: &ClusterState) -> Decision {
    match first_idle_set(job, state) {
        Some(set) => Decision::AllocateExclusive(set),
        None => Decision::Wait,
    }
}

/// FIFO with packing: exclusive while idle sets exist; otherwise the first
/// (busiest) candidate, with no prediction and no trial.
pub fn fifo_packed_schedule(job: &Job, state: &ClusterState, cfg: &SchedulerConfig) -> Decision {
    if let Some(set) = first_idle_set(job, state) {
        return Decision::AllocateExclusive(set);
    }
    if job.priority == Priority::HighExclusive {
        return Decision::Wait;
    }
    match find_candidates(job, state, cfg).into_iter().next() {
        Some(set) => Decision::AllocateShared(set),
        None => Decision::Wait,
    }
}

/// Gandiva-like: exclusive while idle sets exist; otherwise greedy packing
/// onto the least-utilized candidate. The introspective unpack (observed
/// epoch-time inflation over the threshold after one epoch) is driven by
/// the engine. Previously unpacked sets are not retried.
pub fn gandiva_schedule(
    job: &Job,
    state: &ClusterState,
    cfg: &SchedulerConfig,
    rejected: &BTreeSet<GpuSet>,
) -> Decision {
    if let Some(set) = first_idle_set(job, state) {
        return Decision::AllocateExclusive(set);
    }
    if job.priority == Priority::HighExclusive {
        return Decision::Wait;
    }
    let candidates = find_candidates(job, state, cfg);
    let pick = candidates
        .into_iter()
        .filter(|set| !(rejected.contains(set) && !state.resident_ids_of_set(set).is_empty()))
        .min_by(|a, b| {
            mean_core_util(state, a)
                .total_cmp(&mean_core_util(state, b))
                .then_with(|| a.cmp(b))
        });
    match pick {
        Some(set) => Decision::AllocateShared(set),
        None => Decision::Wait,
    }
}

/// EaCO arrival decision: walk candidates busiest-first, accept the first
/// set where the predicted completions of every co-resident and of the new
/// job meet their deadlines. Idle sets need no trial; busy sets start one.
/// When nothing passes, fall back to an idle exclusive set, then wait.
#[allow(clippy::too_many_arguments)]
pub fn eaco_on_arrival(
    job: &Job,
    state: &ClusterState,
    jobs: &BTreeMap<String, Job>,
    history: &History,
    cfg: &SchedulerConfig,
    db: &ProfileDb,
    rejected: &BTreeSet<GpuSet>,
    locked: &[GpuSet],
    now_h: f64,
) -> Result<Decision> {
    let candidates = find_candidates(job, state, cfg);
    for set in &candidates {
        let residents = state.resident_ids_of_set(set);
        if !residents.is_empty() {
            if rejected.contains(set) {
                continue;
            }
            if locked.iter().any(|l| l.iter().any(|g| set.contains(g))) {
                continue;
            }
        }
        let mut members: Vec<&Job> = Vec::with_capacity(residents.len() + 1);
        for id in &residents {
            match jobs.get(*id) {
                Some(j) => members.push(j),
                None => continue,
            }
        }
        members.push(job);
        let preds = predict_jct(&members, now_h, history, db, cfg)?;
        let ok = members
            .iter()
            .zip(preds.iter())
            .all(|(m, p)| m.deadline.met_by(p.predicted_completion_h));
        if !ok {
            continue;
        }
        return Ok(if residents.is_empty() {
            Decision::AllocateExclusive(set.clone())
        } else {
            Decision::AllocateTrial(set.clone())
        });
    }
    match first_idle_set(job, state) {
        Some(set) => Ok(Decision::AllocateExclusive(set)),
        None => Ok(Decision::Wait),
    }
}

/// Dispatches the configured policy for one queued job.
#[allow(clippy::too_many_arguments)]
pub fn decide(
    job: &Job,
    state: &ClusterState,
    jobs: &BTreeMap<String, Job>,
    history: &History,
    cfg: &SchedulerConfig,
    db: &ProfileDb,
    rejected: &BTreeSet<GpuSet>,
    locked: &[GpuSet],
    now_h: f64,
) -> Result<Decision> {
    match cfg.policy {
        Policy::Fifo => Ok(fifo_schedule(job, state)),
        Policy::FifoPacked => Ok(fifo_packed_schedule(job, state, cfg)),
        Policy::GandivaLike => Ok(gandiva_schedule(job, state, cfg, rejected)),
        Policy::Eaco => {
            if job.priority == Priority::HighExclusive {
                return Ok(match first_idle_set(job, state) {
                    Some(set) => Decision::AllocateExclusive(set),
                    None => Decision::Wait,
                });
            }
            eaco_on_arrival(job, state, jobs, history, cfg, db, rejected, locked, now_h)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::{ClusterConfig, ClusterState, JobMeta};
    use crate::workload::{Deadline, Job};

    fn db() -> ProfileDb {
        ProfileDb::embedded().unwrap()
    }

    fn cfg() -> SchedulerConfig {
        SchedulerConfig::default()
    }

    fn cluster(nodes: usize) -> ClusterState {
        ClusterState::new(&ClusterConfig { nodes, ..ClusterConfig::default() }).unwrap()
    }

    fn whole_node(node: usize) -> GpuSet {
        (0..8).map(|index| GpuId { node, index }).collect()
    }

    fn job(id: &str, model: &str, deadline: Deadline) -> Job {
        Job::new(id, model, 0.0, 8, "V100", 10.0, deadline, Priority::Normal)
    }

    fn place(state: &mut ClusterState, dbv: &ProfileDb, id: &str, model: &str, node: usize) {
        state
            .apply_allocation(
                id,
                JobMeta {
                    model: model.into(),
                    estimated_memory_gb: 10.0,
                    gpu_count: 8,
                    high_priority: false,
                },
                &whole_node(node),
            )
            .unwrap();
        state.refresh_utilization(dbv).unwrap();
    }

    #[test]
    fn idle_cluster_has_exactly_one_whole_node_candidate_per_node() {
        let state = cluster(1);
        let j = job("j", "AlexNet", Deadline::Unbounded);
        let cands = find_candidates(&j, &state, &cfg());
        assert_eq!(cands, vec![whole_node(0)]);
    }

    #[test]
    fn busy_node_below_threshold_is_a_candidate() {
        let dbv = db();
        let mut state = cluster(1);
        place(&mut state, &dbv, "vgg", "VGG-16", 0);
        let j = job("j", "AlexNet", Deadline::Unbounded);
        let cands = find_candidates(&j, &state, &cfg());
        assert_eq!(cands, vec![whole_node(0)]);
        assert_eq!(state.nodes[0].gpus[0].core_util, 48.01);
    }

    #[test]
    fn node_over_threshold_is_excluded() {
        let dbv = db();
        let mut state = cluster(1);
        for (i, m) in ["AlexNet", "ResNet-18", "ResNet-50", "VGG-16"].iter().enumerate() {
            place(&mut state, &dbv, &format!("j{i}"), m, 0);
        }
        // The four-way set shows 96.64% core utilization, above the default
        // 90% threshold, and already sits at the co-location cap.
        assert_eq!(state.nodes[0].gpus[0].core_util, 96.64);
        let j = job("x", "AlexNet", Deadline::Unbounded);
        assert!(find_candidates(&j, &state, &cfg()).is_empty());
    }

    #[test]
    fn candidates_order_busiest_first() {
        let dbv = db();
        let mut state = cluster(3);
        place(&mut state, &dbv, "a", "AlexNet", 1); // 4.72
        place(&mut state, &dbv, "v", "VGG-16", 2); // 48.01
        let j = job("x", "ResNet-18", Deadline::Unbounded);
        let cands = find_candidates(&j, &state, &cfg());
        assert_eq!(cands, vec![whole_node(2), whole_node(1), whole_node(0)]);
    }

    #[test]
    fn memory_gate_is_strict() {
        let dbv = db();
        let mut state = cluster(1);
        place(&mut state, &dbv, "a", "AlexNet", 0);
        let mut j = job("x", "ResNet-50", Deadline::Unbounded);
        // 8 GPUs x 32 GB with AlexNet's 10 GB reserved leaves 246 GB.
        j.estimated_memory_gb = 246.01;
        assert!(find_candidates(&j, &state, &cfg()).is_empty());
        j.estimated_memory_gb = 245.9;
        assert_eq!(find_candidates(&j, &state, &cfg()).len(), 1);
    }

    #[test]
    fn high_priority_job_only_gets_idle_sets() {
        let dbv = db();
        let mut state = cluster(2);
        place(&mut state, &dbv, "a", "AlexNet", 0);
        let mut j = job("x", "ResNet-50", Deadline::Unbounded);
        j.priority = Priority::HighExclusive;
        let cands = find_candidates(&j, &state, &cfg());
        assert_eq!(cands, vec![whole_node(1)]);
    }

    #[test]
    fn predict_uses_seeded_history_without_margin() {
        let dbv = db();
        let history = History::seeded_from(&dbv);
        let a = job("a", "AlexNet", Deadline::Unbounded);
        let r = job("r", "ResNet-50", Deadline::Unbounded);
        let preds = predict_jct(&[&a, &r], 0.0, &history, &dbv, &cfg()).unwrap();
        for p in &preds {
            assert_eq!(p.predicted_epoch_h, 0.407);
            assert!((p.predicted_completion_h - 90.0 * 0.407).abs() < 1e-9);
        }
    }

    #[test]
    fn predict_falls_back_with_margin_on_empty_history() {
        let dbv = db();
        let history = History::new();
        let a = job("a", "AlexNet", Deadline::Unbounded);
        let preds = predict_jct(&[&a], 0.0, &history, &dbv, &cfg()).unwrap();
        let expect = (34.76 / 90.0) * 1.10;
        assert!((preds[0].predicted_epoch_h - expect).abs() < 1e-12);
        // The reported epoch column would give 0.39 x 1.10 = 0.429.
        assert!((preds[0].predicted_epoch_h - 0.429).abs() / 0.429 < 0.011);
    }

    #[test]
    fn predict_with_no_remaining_epochs_completes_now() {
        let dbv = db();
        let history = History::seeded_from(&dbv);
        let mut a = job("a", "AlexNet", Deadline::Unbounded);
        a.epochs_done = 90;
        let preds = predict_jct(&[&a], 5.0, &history, &dbv, &cfg()).unwrap();
        assert_eq!(preds[0].predicted_completion_h, 5.0);
    }

    #[test]
    fn predict_unknown_model_errors() {
        let dbv = db();
        let history = History::new();
        let a = job("a", "BERT", Deadline::Unbounded);
        assert!(matches!(
            predict_jct(&[&a], 0.0, &history, &dbv, &cfg()),
            Err(SimError::Prediction(_))
        ));
    }

    #[test]
    fn eaco_idle_cluster_allocates_exclusively() {
        let dbv = db();
        let state = cluster(2);
        let jobs = BTreeMap::new();
        let j = job("j", "VGG-16", Deadline::Finite(100.0));
        let d = eaco_on_arrival(
            &j,
            &state,
            &jobs,
            &History::seeded_from(&dbv),
            &cfg(),
            &dbv,
            &BTreeSet::new(),
            &[],
            0.0,
        )
        .unwrap();
        assert_eq!(d, Decision::AllocateExclusive(whole_node(0)));
    }

    #[test]
    fn eaco_trials_profiled_pair_when_deadlines_hold() {
        let dbv = db();
        let mut state = cluster(1);
        place(&mut state, &dbv, "r18", "ResNet-18", 0);
        let mut jobs = BTreeMap::new();
        let mut resident = job("r18", "ResNet-18", Deadline::Unbounded);
        resident.state = JobStateRunning::running();
        jobs.insert("r18".to_string(), resident);
        // VGG-16 with a 1.5-slack deadline: seeded history predicts the
        // pair's mean JCT at 37.01 h, well inside 54.195 h.
        let j = job("v", "VGG-16", Deadline::Finite(1.5 * 36.13));
        let d = eaco_on_arrival(
            &j,
            &state,
            &jobs,
            &History::seeded_from(&dbv),
            &cfg(),
            &dbv,
            &BTreeSet::new(),
            &[],
            0.0,
        )
        .unwrap();
        assert_eq!(d, Decision::AllocateTrial(whole_node(0)));
    }

    #[test]
    fn eaco_rejects_zero_slack_co_resident() {
        let dbv = db();
        let mut state = cluster(1);
        place(&mut state, &dbv, "r18", "ResNet-18", 0);
        let mut jobs = BTreeMap::new();
        // The resident's deadline equals its exclusive JCT: any slowdown
        // violates it, so the only shared candidate must be rejected and the
        // arriving job has to wait (no idle set on a one-node cluster).
        let mut resident = job("r18", "ResNet-18", Deadline::Finite(35.13));
        resident.state = JobStateRunning::running();
        jobs.insert("r18".to_string(), resident);
        let j = job("v", "VGG-16", Deadline::Unbounded);
        let d = eaco_on_arrival(
            &j,
            &state,
            &jobs,
            &History::seeded_from(&dbv),
            &cfg(),
            &dbv,
            &BTreeSet::new(),
            &[],
            0.0,
        )
        .unwrap();
        assert_eq!(d, Decision::Wait);
    }

    #[test]
    fn fifo_examples() {
        let dbv = db();
        let mut state = cluster(1);
        let j = job("a", "AlexNet", Deadline::Unbounded);
        assert_eq!(fifo_schedule(&j, &state), Decision::AllocateExclusive(whole_node(0)));
        place(&mut state, &dbv, "busy", "VGG-16", 0);
        assert_eq!(fifo_schedule(&j, &state), Decision::Wait);
    }

    #[test]
    fn fifo_packed_prefers_idle_then_packs() {
        let dbv = db();
        let mut state = cluster(2);
        place(&mut state, &dbv, "busy", "AlexNet", 0);
        let j = job("x", "ResNet-50", Deadline::Unbounded);
        assert_eq!(fifo_packed_schedule(&j, &state, &cfg()), Decision::AllocateExclusive(whole_node(1)));
        place(&mut state, &dbv, "busy2", "VGG-16", 1);
        // Busiest candidate first: VGG-16's node shows 48.01%.
        assert_eq!(fifo_packed_schedule(&j, &state, &cfg()), Decision::AllocateShared(whole_node(1)));
    }

    #[test]
    fn gandiva_picks_lowest_utilization() {
        let dbv = db();
        let mut state = cluster(2);
        place(&mut state, &dbv, "a", "AlexNet", 0); // 4.72
        place(&mut state, &dbv, "v", "VGG-16", 1); // 48.01
        let j = job("x", "ResNet-50", Deadline::Unbounded);
        let d = gandiva_schedule(&j, &state, &cfg(), &BTreeSet::new());
        assert_eq!(d, Decision::AllocateShared(whole_node(0)));
    }

    #[test]
    fn max_coloc_one_degenerates_to_idle_only() {
        let dbv = db();
        let mut state = cluster(2);
        place(&mut state, &dbv, "a", "AlexNet", 0);
        let one = SchedulerConfig { max_coloc: 1, ..cfg() };
        let j = job("x", "ResNet-50", Deadline::Unbounded);
        let cands = find_candidates(&j, &state, &one);
        assert_eq!(cands, vec![whole_node(1)]);
    }

    // Helper to mark a resident as running in tests.
    struct JobStateRunning;
    impl JobStateRunning {
        fn running() -> crate::workload::JobState {
            crate::workload::JobState::Running
        }
    }
}
