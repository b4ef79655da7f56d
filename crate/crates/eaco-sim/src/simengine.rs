//! Deterministic discrete-event loop driving arrivals, epoch completions,
//! trial monitoring, undos, job completions, and energy accumulation.
//!
//! Events at equal timestamps are ordered `EpochEnd < JobDone < Arrival <
//! Retry` (then by insertion sequence) so cluster state settles before new
//! placements happen. Power is piecewise constant between events; each
//! event first integrates energy over the elapsed interval, then mutates
//! state. When a set's membership changes, the remaining fraction of every
//! in-flight epoch on the node is rescaled by the old-to-new epoch-time
//! ratio. Identical inputs replay to identical outputs.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cluster::{ClusterConfig, ClusterState, GpuSet, JobMeta};
use crate::error::{Result, SimError};
use crate::metrics::{MetricsReport, PerJobMetrics};
use crate::profiledb::ProfileDb;
use crate::schedulers::{decide, predict_jct, Decision, History, Policy, SchedulerConfig, TrialState};
use crate::workload::{Job, JobState, Trace};

/// A processed simulation event, as surfaced by [`Engine::step`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Event {
    pub time_h: f64,
    pub kind: EventKind,
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum EventKind {
    Arrival(String),
    EpochEnd(String),
    JobDone(String),
    Retry,
}

#[derive(Debug, Clone)]
enum Payload {
    Arrival(String),
    EpochEnd { job: String, gen: u64 },
    JobDone(String),
    Retry,
}

impl Payload {
    fn rank(&self) -> u8 {
        match self {
            Payload::EpochEnd { .. } => 0,
            Payload::JobDone(_) => 1,
            Payload::Arrival(_) => 2,
            Payload::Retry => 3,
        }
    }
}

struct HeapEvent {
    time_h: f64,
    rank: u8,
    seq: u64,
    payload: Payload,
}

impl PartialEq for HeapEvent {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for HeapEvent {}
impl PartialOrd for HeapEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEvent {
    // Reversed: the binary heap is a max-heap and we want the earliest
    // (time, rank, seq) first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time_h
            .total_cmp(&self.time_h)
            .then_with(|| other.rank.cmp(&self.rank))
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// One line of the debug event log, serialized as JSONL by
/// [`EventLog::save_jsonl`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogEntry {
    pub time_h: f64,
    pub seq: u64,
    #[serde(flatten)]
    pub event: LogEvent,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LogEvent {
    Arrival { job: String },
    Rejected { job: String, reason: String },
    Allocate { job: String, gpus: GpuSet, shared: bool },
    TrialStart { job: String, gpus: GpuSet, awaiting: Vec<String> },
    EpochEnd { job: String, epochs_done: u32, node: usize },
    Observation { job: String, sig: Vec<String>, epoch_h: f64 },
    TrialFinalize { job: String, gpus: GpuSet },
    Undo { job: String, gpus: GpuSet },
    Unpack { job: String, gpus: GpuSet },
    JobDone { job: String },
}

/// Chronological record of everything the engine did.
#[derive(Debug, Clone, Default, Serialize)]
pub struct EventLog {
    pub entries: Vec<LogEntry>,
}

impl EventLog {
    pub fn save_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = Vec::new();
        for e in &self.entries {
            serde_json::to_writer(&mut out, e).map_err(|e| SimError::Contract(e.to_string()))?;
            out.push(b'\n');
        }
        let mut f = std::fs::File::create(path).map_err(|e| SimError::io(path, e))?;
        f.write_all(&out).map_err(|e| SimError::io(path, e))?;
        Ok(())
    }
}

/// Everything a finished run produces.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub report: MetricsReport,
    pub log: EventLog,
}

#[derive(Debug, Clone, Default)]
struct JobRt {
    cur_epoch_h: f64,
    frac_done: f64,
    frac_at_h: f64,
    epoch_gen: u64,
    rejected_sets: BTreeSet<GpuSet>,
}

#[derive(Debug, Clone)]
struct GandivaWatch {
    job_id: String,
    gpu_set: GpuSet,
}

/// Per-node snapshot refreshed on allocation changes so the hot event loop
/// never touches the profile database.
#[derive(Debug, Clone, Default)]
struct NodeCache {
    power_w: f64,
    residents: Vec<String>,
}

/// The discrete-event simulator.
pub struct Engine<'a> {
    db: &'a ProfileDb,
    sched: SchedulerConfig,
    cluster: ClusterState,
    jobs: BTreeMap<String, Job>,
    rt: BTreeMap<String, JobRt>,
    queue: Vec<String>,
    trials: Vec<TrialState>,
    watches: Vec<GandivaWatch>,
    history: History,
    heap: BinaryHeap<HeapEvent>,
    node_cache: Vec<NodeCache>,
    seq: u64,
    now_h: f64,
    last_energy_h: f64,
    node_energy_kwh: Vec<f64>,
    job_energy_kwh: BTreeMap<String, f64>,
    power_series: Vec<(f64, f64)>,
    active_series: Vec<(f64, u32)>,
    log: EventLog,
    rejected: Vec<String>,
    completed: usize,
    live_jobs: usize,
    placement_dirty: bool,
}

impl<'a> Engine<'a> {
    pub fn new(
        trace: &Trace,
        cluster_cfg: &ClusterConfig,
        sched: &SchedulerConfig,
        db: &'a ProfileDb,
    ) -> Result<Self> {
        let history = if sched.seed_history { History::seeded_from(db) } else { History::new() };
        Self::with_history(trace, cluster_cfg, sched, db, history)
    }

    /// Like [`Engine::new`] but with a caller-supplied performance history,
    /// e.g. a stale or optimistic one.
    pub fn with_history(
        trace: &Trace,
        cluster_cfg: &ClusterConfig,
        sched: &SchedulerConfig,
        db: &'a ProfileDb,
        history: History,
    ) -> Result<Self> {
        sched.validate()?;
        trace.validate()?;
        let cluster = ClusterState::new(cluster_cfg)?;
        // Jobs must have a measured exclusive profile for their GPU count;
        // nothing else pins their ground-truth rates.
        for job in &trace.jobs {
            if job.gpu_count as usize <= cluster_cfg.gpus_per_node {
                db.exclusive_profile_for(&job.model, job.gpu_count)?;
            }
        }
        let mut engine = Engine {
            db,
            sched: sched.clone(),
            node_energy_kwh: vec![0.0; cluster.nodes.len()],
            node_cache: vec![NodeCache::default(); cluster.nodes.len()],
            cluster,
            jobs: BTreeMap::new(),
            rt: BTreeMap::new(),
            queue: Vec::new(),
            trials: Vec::new(),
            watches: Vec::new(),
            history,
            heap: BinaryHeap::new(),
            seq: 0,
            now_h: 0.0,
            last_energy_h: 0.0,
            job_energy_kwh: BTreeMap::new(),
            power_series: Vec::new(),
            active_series: Vec::new(),
            log: EventLog::default(),
            rejected: Vec::new(),
            completed: 0,
            live_jobs: 0,
            placement_dirty: false,
        };
        for job in &trace.jobs {
            engine.jobs.insert(job.job_id.clone(), job.clone());
            engine.rt.insert(job.job_id.clone(), JobRt::default());
            engine.job_energy_kwh.insert(job.job_id.clone(), 0.0);
            let t = job.arrival_h;
            engine.push(t, Payload::Arrival(job.job_id.clone()));
        }
        engine.live_jobs = trace.jobs.len();
        for n in 0..engine.cluster.nodes.len() {
            engine.refresh_node_cache(n)?;
        }
        engine.record_series(true)?;
        Ok(engine)
    }

    pub fn now_h(&self) -> f64 {
        self.now_h
    }

    pub fn finished(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn cluster(&self) -> &ClusterState {
        &self.cluster
    }

    pub fn job(&self, id: &str) -> Option<&Job> {
        self.jobs.get(id)
    }

    pub fn jobs(&self) -> impl Iterator<Item = &Job> {
        self.jobs.values()
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    /// Queued job ids in their current retry order.
    pub fn queued(&self) -> Vec<String> {
        let mut q = self.queue.clone();
        self.sort_queue(&mut q);
        q
    }

    /// Active trial states.
    pub fn trials(&self) -> &[TrialState] {
        &self.trials
    }

    fn push(&mut self, time_h: f64, payload: Payload) {
        let rank = payload.rank();
        let seq = self.seq;
        self.seq += 1;
        self.heap.push(HeapEvent { time_h, rank, seq, payload });
    }

    fn refresh_node_cache(&mut self, node: usize) -> Result<()> {
        self.node_cache[node] = NodeCache {
            power_w: self.cluster.node_power(node, self.db)?,
            residents: self.cluster.residents_of_node(node).into_iter().collect(),
        };
        Ok(())
    }

    fn log_event(&mut self, event: LogEvent) {
        let seq = self.log.entries.len() as u64;
        self.log.entries.push(LogEntry { time_h: self.now_h, seq, event });
    }

    /// Integrates energy over the constant-power interval ending at `t` and
    /// splits each node's contribution equally among its resident jobs.
    fn advance_to(&mut self, t: f64) -> Result<()> {
        let dt = t - self.last_energy_h;
        if dt < -1e-9 {
            return Err(SimError::Contract(format!(
                "event time went backwards: {} -> {t}",
                self.last_energy_h
            )));
        }
        if dt > 0.0 {
            for n in 0..self.cluster.nodes.len() {
                let cache = &self.node_cache[n];
                let kwh = cache.power_w * dt / 1000.0;
                self.node_energy_kwh[n] += kwh;
                if !cache.residents.is_empty() {
                    let share = kwh / cache.residents.len() as f64;
                    for j in &cache.residents {
                        *self.job_energy_kwh.get_mut(j).expect("job energy slot") += share;
                    }
                }
            }
            self.last_energy_h = t;
        }
        self.cluster.advance_clock(t)?;
        self.now_h = self.now_h.max(t);
        Ok(())
    }

    fn record_series(&mut self, force: bool) -> Result<()> {
        let power: f64 = self.node_cache.iter().map(|c| c.power_w).sum();
        let active = self.node_cache.iter().filter(|c| !c.residents.is_empty()).count() as u32;
        if force || self.power_series.last().map(|&(_, p)| p != power).unwrap_or(true) {
            self.power_series.push((self.now_h, power));
        }
        if force || self.active_series.last().map(|&(_, a)| a != active).unwrap_or(true) {
            self.active_series.push((self.now_h, active));
        }
        Ok(())
    }

    /// Applies exactly one event. Returns `None` once the simulation has
    /// drained, which is the end-of-simulation signal.
    pub fn step(&mut self) -> Result<Option<Event>> {
        loop {
            let Some(ev) = self.heap.pop() else {
                return Ok(None);
            };
            // Stale epoch timers (superseded by a rescale) are skipped.
            if let Payload::EpochEnd { job, gen } = &ev.payload {
                let stale = self.rt.get(job).map(|r| r.epoch_gen != *gen).unwrap_or(true);
                if stale {
                    continue;
                }
            }
            self.advance_to(ev.time_h)?;
            let kind = match &ev.payload {
                Payload::Arrival(j) => EventKind::Arrival(j.clone()),
                Payload::EpochEnd { job, .. } => EventKind::EpochEnd(job.clone()),
                Payload::JobDone(j) => EventKind::JobDone(j.clone()),
                Payload::Retry => EventKind::Retry,
            };
            match ev.payload {
                Payload::Arrival(job) => self.on_arrival(&job)?,
                Payload::EpochEnd { job, .. } => self.on_epoch_end(&job)?,
                Payload::JobDone(job) => self.on_job_done(&job)?,
                Payload::Retry => self.on_retry()?,
            }
            self.record_series(false)?;
            return Ok(Some(Event { time_h: ev.time_h, kind, seq: ev.seq }));
        }
    }

    fn on_arrival(&mut self, job_id: &str) -> Result<()> {
        let job = self.jobs.get(job_id).expect("arrival for known job");
        let fits = job.gpu_count as usize
            <= self
                .cluster
                .nodes
                .iter()
                .map(|n| n.gpus.iter().filter(|g| g.gpu_type == job.gpu_type).count())
                .max()
                .unwrap_or(0);
        let has_profile = self.db.exclusive_profile_for(&job.model, job.gpu_count).is_ok();
        if !fits || !has_profile {
            let reason = if fits {
                format!("no profile for model '{}' at {} GPUs", job.model, job.gpu_count)
            } else {
                format!("requests {} GPUs, more than any node offers", job.gpu_count)
            };
            let job = job_id.to_string();
            self.log_event(LogEvent::Rejected { job: job.clone(), reason });
            self.rejected.push(job);
            self.live_jobs -= 1;
            return Ok(());
        }
        self.log_event(LogEvent::Arrival { job: job_id.to_string() });
        self.queue.push(job_id.to_string());
        self.schedule_retry();
        Ok(())
    }

    fn schedule_retry(&mut self) {
        self.placement_dirty = true;
        self.push(self.now_h, Payload::Retry);
    }

    fn sort_queue(&self, q: &mut [String]) {
        q.sort_by(|a, b| {
            let ja = &self.jobs[a];
            let jb = &self.jobs[b];
            let pa = matches!(ja.priority, crate::workload::Priority::HighExclusive);
            let pb = matches!(jb.priority, crate::workload::Priority::HighExclusive);
            pb.cmp(&pa)
                .then(ja.arrival_h.total_cmp(&jb.arrival_h))
                .then_with(|| a.cmp(b))
        });
    }

    fn on_retry(&mut self) -> Result<()> {
        // Placement retries coalesce: only the first retry after a state
        // change sweeps the queue.
        if !self.placement_dirty {
            return Ok(());
        }
        self.placement_dirty = false;
        let mut order = self.queue.clone();
        self.sort_queue(&mut order);
        let locked: Vec<GpuSet> = self.trials.iter().map(|t| t.gpu_set.clone()).collect();
        for job_id in order {
            if !self.queue.contains(&job_id) {
                continue;
            }
            let job = self.jobs.get(&job_id).expect("queued job exists");
            if job.state != JobState::Queued {
                continue;
            }
            let decision = decide(
                job,
                &self.cluster,
                &self.jobs,
                &self.history,
                &self.sched,
                self.db,
                &self.rt[&job_id].rejected_sets,
                &locked,
                self.now_h,
            )?;
            match decision {
                Decision::Wait => {}
                Decision::AllocateExclusive(set) => {
                    self.place(&job_id, &set, JobState::Running, false)?;
                }
                Decision::AllocateShared(set) => {
                    let shared = !self.cluster.residents_of_set(&set).is_empty();
                    self.place(&job_id, &set, JobState::Running, shared)?;
                    if shared && self.sched.policy == Policy::GandivaLike {
                        self.watches.push(GandivaWatch { job_id: job_id.clone(), gpu_set: set });
                    }
                }
                Decision::AllocateTrial(set) => {
                    self.place(&job_id, &set, JobState::Trial, true)?;
                    let awaiting = self.cluster.coloc_group(&job_id);
                    self.log_event(LogEvent::TrialStart {
                        job: job_id.clone(),
                        gpus: set.clone(),
                        awaiting: awaiting.iter().cloned().collect(),
                    });
                    let rejected_sets = self.rt[&job_id].rejected_sets.iter().cloned().collect();
                    self.trials.push(TrialState {
                        job_id: job_id.clone(),
                        gpu_set: set,
                        start_h: self.now_h,
                        epochs_awaited: awaiting,
                        rejected_sets,
                    });
                }
            }
        }
        Ok(())
    }

    fn place(&mut self, job_id: &str, set: &[crate::cluster::GpuId], state: JobState, shared: bool) -> Result<()> {
        let job = self.jobs.get_mut(job_id).expect("placing known job");
        let meta = JobMeta {
            model: job.model.clone(),
            estimated_memory_gb: job.estimated_memory_gb,
            gpu_count: job.gpu_count,
            high_priority: matches!(job.priority, crate::workload::Priority::HighExclusive),
        };
        job.state = state;
        job.alloc = Some(set.to_vec());
        if job.first_start_h.is_none() {
            job.first_start_h = Some(self.now_h);
        }
        self.cluster.apply_allocation(job_id, meta, set)?;
        self.cluster.refresh_node_utilization(set[0].node, self.db)?;
        self.refresh_node_cache(set[0].node)?;
        self.queue.retain(|j| j != job_id);
        // Fresh epoch starts now; any partial progress was lost at undo.
        let rt = self.rt.get_mut(job_id).expect("rt slot");
        rt.cur_epoch_h = 0.0;
        rt.frac_done = 0.0;
        rt.frac_at_h = self.now_h;
        self.log_event(LogEvent::Allocate { job: job_id.to_string(), gpus: set.to_vec(), shared });
        self.reschedule_node_epochs(set[0].node)?;
        Ok(())
    }

    /// Folds each resident's in-flight progress at its old rate, then
    /// replans its next epoch end at the group's current ground-truth rate.
    fn reschedule_node_epochs(&mut self, node: usize) -> Result<()> {
        let residents = self.cluster.residents_of_node(node);
        for job_id in residents {
            let group = self.cluster.coloc_group(&job_id);
            let models = self.cluster.models_of(&group);
            let job = &self.jobs[&job_id];
            let new_epoch = self.db.ground_truth_epoch_time(&job.model, &models, job.gpu_count)?;
            let now = self.now_h;
            let rt = self.rt.get_mut(&job_id).expect("rt slot");
            if rt.cur_epoch_h > 0.0 {
                rt.frac_done += (now - rt.frac_at_h) / rt.cur_epoch_h;
                rt.frac_done = rt.frac_done.clamp(0.0, 1.0);
            }
            rt.frac_at_h = now;
            rt.cur_epoch_h = new_epoch;
            rt.epoch_gen += 1;
            let gen = rt.epoch_gen;
            let due = now + (1.0 - rt.frac_done) * new_epoch;
            self.push(due, Payload::EpochEnd { job: job_id.clone(), gen });
        }
        Ok(())
    }

    fn on_epoch_end(&mut self, job_id: &str) -> Result<()> {
        let now = self.now_h;
        let (epochs_done, node, n_epochs) = {
            let job = self.jobs.get(job_id).expect("epoch end for known job");
            let n_epochs = self.db.exclusive_profile_for(&job.model, job.gpu_count)?.n_epochs;
            let node = job.alloc.as_ref().expect("running job has an allocation")[0].node;
            let rt = self.rt.get_mut(job_id).expect("rt slot");
            rt.frac_done = 0.0;
            rt.frac_at_h = now;
            let job = self.jobs.get_mut(job_id).unwrap();
            job.epochs_done += 1;
            (job.epochs_done, node, n_epochs)
        };
        self.log_event(LogEvent::EpochEnd { job: job_id.to_string(), epochs_done, node });
        if epochs_done >= n_epochs {
            self.push(now, Payload::JobDone(job_id.to_string()));
        } else {
            let rt = self.rt.get_mut(job_id).expect("rt slot");
            rt.epoch_gen += 1;
            let gen = rt.epoch_gen;
            let due = now + rt.cur_epoch_h;
            self.push(due, Payload::EpochEnd { job: job_id.to_string(), gen });
        }
        self.check_trials_on_epoch(job_id)?;
        self.check_watch_on_epoch(job_id)?;
        Ok(())
    }

    /// Trial monitoring: record the observation, re-estimate everyone on
    /// the set, undo on any violated deadline, finalize once every member
    /// has one post-allocation epoch.
    fn check_trials_on_epoch(&mut self, job_id: &str) -> Result<()> {
        let Some(t_idx) = self.trials.iter().position(|t| {
            self.cluster.coloc_group(&t.job_id).contains(job_id)
        }) else {
            return Ok(());
        };
        let group = self.cluster.coloc_group(&self.trials[t_idx].job_id);
        let models = self.cluster.models_of(&group);
        let job = &self.jobs[job_id];
        let observed_epoch = self.rt[job_id].cur_epoch_h;
        let util = self.db.ground_truth_gpu_util(&models, job.gpu_count)?;
        self.history
            .record_observed(&models, job.gpu_count, &job.model.clone(), observed_epoch, util)?;
        self.log_event(LogEvent::Observation {
            job: job_id.to_string(),
            sig: models.clone(),
            epoch_h: observed_epoch,
        });
        self.trials[t_idx].epochs_awaited.remove(job_id);

        let members: Vec<&Job> = group.iter().map(|id| &self.jobs[id]).collect();
        let preds = predict_jct(&members, self.now_h, &self.history, self.db, &self.sched)?;
        let violated = members
            .iter()
            .zip(preds.iter())
            .any(|(m, p)| !m.deadline.met_by(p.predicted_completion_h));
        if violated {
            self.undo_trial(t_idx)?;
        } else if self.trials[t_idx].epochs_awaited.is_empty() {
            self.finalize_trial(t_idx)?;
        }
        Ok(())
    }

    fn finalize_trial(&mut self, t_idx: usize) -> Result<()> {
        let trial = self.trials.remove(t_idx);
        if let Some(job) = self.jobs.get_mut(&trial.job_id) {
            if job.state == JobState::Trial {
                job.state = JobState::Running;
            }
        }
        self.log_event(LogEvent::TrialFinalize { job: trial.job_id.clone(), gpus: trial.gpu_set });
        // The set is joinable again.
        self.schedule_retry();
        Ok(())
    }

    /// Reverses a trial allocation at the current epoch boundary. Only the
    /// trial job leaves; its completed epochs persist and it re-queues with
    /// the set remembered as rejected.
    fn undo_trial(&mut self, t_idx: usize) -> Result<()> {
        let trial = self.trials.remove(t_idx);
        let job_id = trial.job_id.clone();
        let node = trial.gpu_set[0].node;
        self.cluster.remove_allocation(&job_id)?;
        self.cluster.refresh_node_utilization(node, self.db)?;
        self.refresh_node_cache(node)?;
        {
            let job = self.jobs.get_mut(&job_id).expect("trial job exists");
            job.state = JobState::Queued;
            job.alloc = None;
            let rt = self.rt.get_mut(&job_id).expect("rt slot");
            rt.cur_epoch_h = 0.0;
            rt.frac_done = 0.0;
            rt.epoch_gen += 1;
            rt.rejected_sets.insert(trial.gpu_set.clone());
        }
        self.queue.push(job_id.clone());
        self.log_event(LogEvent::Undo { job: job_id, gpus: trial.gpu_set });
        self.reschedule_node_epochs(node)?;
        self.schedule_retry();
        Ok(())
    }

    /// Gandiva introspection: after the newest packed job's first epoch,
    /// unpack it when its observed epoch-time inflation over exclusive
    /// execution exceeds the threshold.
    fn check_watch_on_epoch(&mut self, job_id: &str) -> Result<()> {
        let Some(w_idx) = self.watches.iter().position(|w| w.job_id == job_id) else {
            return Ok(());
        };
        let watch = self.watches.remove(w_idx);
        let job = &self.jobs[job_id];
        let exclusive = self.db.exclusive_profile_for(&job.model, job.gpu_count)?.effective_epoch_h();
        let inflation = self.rt[job_id].cur_epoch_h / exclusive - 1.0;
        if inflation <= self.sched.gandiva_inflation_threshold {
            return Ok(());
        }
        let node = watch.gpu_set[0].node;
        self.cluster.remove_allocation(job_id)?;
        self.cluster.refresh_node_utilization(node, self.db)?;
        self.refresh_node_cache(node)?;
        {
            let job = self.jobs.get_mut(job_id).expect("watched job exists");
            job.state = JobState::Queued;
            job.alloc = None;
            let rt = self.rt.get_mut(job_id).expect("rt slot");
            rt.cur_epoch_h = 0.0;
            rt.frac_done = 0.0;
            rt.epoch_gen += 1;
            rt.rejected_sets.insert(watch.gpu_set.clone());
        }
        self.queue.push(job_id.to_string());
        self.log_event(LogEvent::Unpack { job: job_id.to_string(), gpus: watch.gpu_set });
        self.reschedule_node_epochs(node)?;
        self.schedule_retry();
        Ok(())
    }

    fn on_job_done(&mut self, job_id: &str) -> Result<()> {
        let node = {
            let job = self.jobs.get(job_id).expect("done job exists");
            job.alloc.as_ref().expect("done job is allocated")[0].node
        };
        self.cluster.remove_allocation(job_id)?;
        self.cluster.refresh_node_utilization(node, self.db)?;
        self.refresh_node_cache(node)?;
        {
            let job = self.jobs.get_mut(job_id).expect("done job exists");
            job.state = JobState::Completed;
            job.completion_h = Some(self.now_h);
            job.alloc = None;
            let rt = self.rt.get_mut(job_id).expect("rt slot");
            rt.epoch_gen += 1;
            rt.cur_epoch_h = 0.0;
        }
        self.completed += 1;
        self.log_event(LogEvent::JobDone { job: job_id.to_string() });
        self.watches.retain(|w| w.job_id != job_id);
        // A completing co-resident no longer owes a trial epoch.
        let mut finalize: Vec<usize> = Vec::new();
        for (i, t) in self.trials.iter_mut().enumerate() {
            t.epochs_awaited.remove(job_id);
            if t.job_id == job_id || t.epochs_awaited.is_empty() {
                finalize.push(i);
            }
        }
        for i in finalize.into_iter().rev() {
            self.finalize_trial(i)?;
        }
        self.reschedule_node_epochs(node)?;
        self.schedule_retry();
        Ok(())
    }

    /// Runs to completion and assembles the metrics report.
    pub fn finish(mut self) -> Result<RunResult> {
        while self.step()?.is_some() {}
        if self.completed + self.rejected.len() != self.jobs.len() {
            return Err(SimError::Contract(format!(
                "simulation drained with {} of {} jobs incomplete",
                self.jobs.len() - self.completed - self.rejected.len(),
                self.jobs.len()
            )));
        }
        let end_h = self.now_h;
        self.record_series(true)?;

        let mut rows = Vec::new();
        let mut tpe_sum = 0.0;
        let mut tpe_count = 0usize;
        for job in self.jobs.values() {
            if job.state != JobState::Completed {
                continue;
            }
            let first = job.first_start_h.expect("completed job started");
            let completion = job.completion_h.expect("completed job finished");
            let runtime = completion - first;
            let n_epochs = self.db.exclusive_profile_for(&job.model, job.gpu_count)?.n_epochs;
            tpe_sum += runtime / f64::from(n_epochs);
            tpe_count += 1;
            rows.push(PerJobMetrics {
                job_id: job.job_id.clone(),
                model: job.model.clone(),
                wait_h: first - job.arrival_h,
                runtime_h: runtime,
                jct_h: runtime,
                jtt_h: completion - job.arrival_h,
                deadline_met: job.deadline.met_by(completion),
                energy_kwh: self.job_energy_kwh[&job.job_id],
            });
        }
        let avg_tpe_h = if tpe_count > 0 { tpe_sum / tpe_count as f64 } else { 0.0 };
        let report = MetricsReport::assemble(
            self.sched.policy.name(),
            self.sched.alpha,
            rows,
            self.rejected.clone(),
            avg_tpe_h,
            self.power_series.clone(),
            self.active_series.clone(),
            end_h,
        )?;
        Ok(RunResult { report, log: self.log })
    }
}

/// Runs a trace under one configuration, start to finish.
pub fn run(
    trace: &Trace,
    cluster_cfg: &ClusterConfig,
    sched: &SchedulerConfig,
    db: &ProfileDb,
) -> Result<RunResult> {
    Engine::new(trace, cluster_cfg, sched, db)?.finish()
}
