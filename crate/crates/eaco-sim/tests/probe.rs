//! Temporary tuning probe; not part of the acceptance suite.

use eaco_sim::cluster::ClusterConfig;
use eaco_sim::profiledb::ProfileDb;
use eaco_sim::schedulers::{Policy, SchedulerConfig};
use eaco_sim::workload::{generate_trace, TraceGenParams};

#[test]
#[ignore]
fn perf_micro() {
    let db = ProfileDb::embedded().unwrap();
    let params = TraceGenParams {
        n_jobs: 24,
        arrival_rate_per_h: 2.0,
        seed: 119,
        ..Default::default()
    };
    let trace = generate_trace(&params, &db).unwrap();
    let cc = ClusterConfig { nodes: 8, ..Default::default() };
    for policy in [Policy::Fifo, Policy::Eaco] {
        let sched = SchedulerConfig { policy, ..Default::default() };
        let t0 = std::time::Instant::now();
        let mut events = 0usize;
        let mut engine = eaco_sim::simengine::Engine::new(&trace, &cc, &sched, &db).unwrap();
        while engine.step().unwrap().is_some() {
            events += 1;
        }
        println!("{}: {} events in {:?}", policy.name(), events, t0.elapsed());
    }
}

#[test]
#[ignore]
fn dissect_timeline() {
    use eaco_sim::simengine::LogEvent;
    let db = ProfileDb::embedded().unwrap();
    let params = TraceGenParams {
        n_jobs: 24,
        arrival_rate_per_h: 2.0,
        seed: std::env::var("SEED").map(|s| s.parse().unwrap()).unwrap_or(119),
        model_mix: [("AlexNet", 1.0), ("ResNet-18", 1.0), ("ResNet-50", 1.0)]
            .iter()
            .map(|(m, w)| (m.to_string(), *w))
            .collect(),
        ..Default::default()
    };
    let trace = generate_trace(&params, &db).unwrap();
    let cc = ClusterConfig { nodes: 8, ..Default::default() };
    let model_of: std::collections::BTreeMap<String, String> =
        trace.jobs.iter().map(|j| (j.job_id.clone(), j.model.clone())).collect();
    for policy in [Policy::GandivaLike, Policy::FifoPacked] {
        let sched = SchedulerConfig { policy, ..Default::default() };
        let out = eaco_sim::simengine::run(&trace, &cc, &sched, &db).unwrap();
        println!(
            "== {} energy={:.1} makespan={:.1} mean_active={:.2}",
            policy.name(),
            out.report.total_energy_kwh,
            out.report.makespan_h,
            out.report.mean_active_nodes
        );
        for e in &out.log.entries {
            match &e.event {
                LogEvent::Allocate { job, gpus, shared } => println!(
                    "  t={:7.2} alloc {job} ({}) node {} shared={shared}",
                    e.time_h,
                    model_of[job],
                    gpus[0].node
                ),
                LogEvent::Unpack { job, gpus } => {
                    println!("  t={:7.2} UNPACK {job} ({}) node {}", e.time_h, model_of[job], gpus[0].node)
                }
                LogEvent::JobDone { job } => {
                    println!("  t={:7.2} done  {job} ({})", e.time_h, model_of[job])
                }
                _ => {}
            }
        }
        for row in &out.report.per_job {
            if row.wait_h > 0.01 {
                println!("  WAIT {} ({}) {:.2}h", row.job_id, row.model, row.wait_h);
            }
        }
    }
}

#[test]
#[ignore]
fn dissect_one_seed() {
    let db = ProfileDb::embedded().unwrap();
    let params = TraceGenParams {
        n_jobs: 24,
        arrival_rate_per_h: 2.0,
        seed: 119,
        ..Default::default()
    };
    let trace = generate_trace(&params, &db).unwrap();
    let cc = ClusterConfig { nodes: 8, ..Default::default() };
    for policy in [Policy::Eaco, Policy::GandivaLike, Policy::FifoPacked, Policy::Fifo] {
        let sched = SchedulerConfig { policy, ..Default::default() };
        let out = eaco_sim::simengine::run(&trace, &cc, &sched, &db).unwrap();
        let r = &out.report;
        let avg_wait: f64 =
            r.per_job.iter().map(|j| j.wait_h).sum::<f64>() / r.per_job.len() as f64;
        let unpacks = out
            .log
            .entries
            .iter()
            .filter(|e| {
                matches!(
                    e.event,
                    eaco_sim::simengine::LogEvent::Unpack { .. }
                        | eaco_sim::simengine::LogEvent::Undo { .. }
                )
            })
            .count();
        // node-hours at each group size, reconstructed from runtime shares
        println!(
            "{:12} energy={:8.1} makespan={:7.1} mean_active={:.2} avg_rt={:6.2} avg_wait={:6.2} unpack/undo={}",
            policy.name(),
            r.total_energy_kwh,
            r.makespan_h,
            r.mean_active_nodes,
            r.avg_runtime_h,
            avg_wait,
            unpacks
        );
    }
}

#[test]
#[ignore]
fn scan_contention_families() {
    let db = ProfileDb::embedded().unwrap();
    let mixes: Vec<(&str, Vec<(&str, f64)>)> = vec![
        ("light", vec![("AlexNet", 2.0), ("ResNet-18", 2.0), ("ResNet-50", 1.0), ("VGG-16", 1.0)]),
        ("lighter", vec![("AlexNet", 3.0), ("ResNet-18", 3.0), ("ResNet-50", 1.0), ("VGG-16", 1.0)]),
    ];
    let families: Vec<(usize, usize, f64)> = vec![
        (4, 200, 5.0),
        (4, 200, 4.0),
        (4, 160, 5.0),
        (4, 250, 5.0),
        (4, 200, 6.0),
        (4, 240, 6.0),
    ];
    let window: u64 = std::env::var("WIN").map(|s| s.parse().unwrap()).unwrap_or(100);
    for (mix_name, mix) in &mixes {
        for &(nodes, n_jobs, rate) in &families {
            let (mut v_eg, mut v_gp, mut v_pf, mut v_jtt, mut v_act) = (0, 0, 0, 0, 0);
            let mut max_eg: f64 = 0.0;
            let mut max_gp: f64 = 0.0;
            for seed in window..window + 20 {
                let params = TraceGenParams {
                    n_jobs,
                    arrival_rate_per_h: rate,
                    seed,
                    model_mix: mix.iter().map(|(m, w)| (m.to_string(), *w)).collect(),
                    ..Default::default()
                };
                let trace = generate_trace(&params, &db).unwrap();
                let cc = ClusterConfig { nodes, ..Default::default() };
                let run = |p: Policy| {
                    let sched = SchedulerConfig { policy: p, ..Default::default() };
                    eaco_sim::simengine::run(&trace, &cc, &sched, &db).unwrap().report
                };
                let e = run(Policy::Eaco);
                let g = run(Policy::GandivaLike);
                let fp = run(Policy::FifoPacked);
                let f = run(Policy::Fifo);
                if e.total_energy_kwh > g.total_energy_kwh * 1.005 {
                    v_eg += 1;
                    max_eg = max_eg.max(e.total_energy_kwh / g.total_energy_kwh);
                }
                if g.total_energy_kwh > fp.total_energy_kwh * 1.005 {
                    v_gp += 1;
                    max_gp = max_gp.max(g.total_energy_kwh / fp.total_energy_kwh);
                }
                if fp.total_energy_kwh > f.total_energy_kwh * 1.005 {
                    v_pf += 1;
                }
                if e.avg_jtt_h >= f.avg_jtt_h {
                    v_jtt += 1;
                }
                for b in [&f, &fp, &g] {
                    if e.mean_active_nodes > b.mean_active_nodes + 1e-9 {
                        v_act += 1;
                        break;
                    }
                }
            }
            println!(
                "{mix_name:9} nodes={nodes} jobs={n_jobs:2} rate={rate}: E>G {v_eg} (max {max_eg:.3})  G>FP {v_gp} (max {max_gp:.3})  FP>F {v_pf}  jtt {v_jtt}  act {v_act}"
            );
        }
    }
}
