//! Thin command-line wrapper around the simulator library.

use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use eaco_sim::cli::{cmd_compare, cmd_gen_trace, cmd_run};
use eaco_sim::config::{RunConfig, TraceSource};
use eaco_sim::profiledb::ProfileDb;
use eaco_sim::schedulers::Policy;
use eaco_sim::workload::TraceGenParams;

#[derive(Parser)]
#[command(name = "eaco-sim", about = "GPU cluster scheduling simulator with energy accounting", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct CommonOverrides {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scheduling policy: fifo | fifo-packed | gandiva | eaco.
    #[arg(long)]
    policy: Option<String>,
    /// Random seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Trace file override (JSONL).
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Node count override.
    #[arg(long)]
    nodes: Option<usize>,
    /// Output directory override.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write summary.json plus the CSV series.
    Run(CommonOverrides),
    /// Run the same trace under several policies, normalized to FIFO.
    Compare {
        #[command(flatten)]
        common: CommonOverrides,
        /// Comma-separated policies, e.g. "fifo,fifo-packed,gandiva,eaco".
        #[arg(long, default_value = "fifo,fifo-packed,gandiva,eaco")]
        policies: String,
    },
    /// Generate a synthetic JSONL trace.
    GenTrace {
        /// Output trace path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        n_jobs: usize,
        /// Poisson arrival rate, jobs per hour.
        #[arg(long, default_value_t = 4.0)]
        rate: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Deadline slack multiplier over the exclusive JCT; omit for
        /// unbounded deadlines.
        #[arg(long)]
        slack: Option<f64>,
        /// Fraction of jobs left with unbounded deadlines.
        #[arg(long, default_value_t = 0.0)]
        unbounded_fraction: f64,
        /// Model mix, e.g. "AlexNet=1,VGG-16=2"; uniform when omitted.
        #[arg(long)]
        model_mix: Option<String>,
    },
}

fn build_config(common: &CommonOverrides) -> anyhow::Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
        None => RunConfig::default(),
    };
    if let Some(p) = &common.policy {
        cfg.scheduler.policy = Policy::parse(p)?;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(trace) = &common.trace {
        cfg.trace = TraceSource::Path { path: trace.clone() };
    }
    if let Some(nodes) = common.nodes {
        cfg.cluster.nodes = nodes;
    }
    if let Some(dir) = &common.output_dir {
        cfg.output_dir = dir.clone();
    }
    Ok(cfg)
}

fn parse_policies(s: &str) -> anyhow::Result<Vec<Policy>> {
    s.split(',')
        .map(|p| Policy::parse(p.trim()).map_err(Into::into))
        .collect()
}

fn parse_mix(s: &str) -> anyhow::Result<std::collections::BTreeMap<String, f64>> {
    let mut mix = std::collections::BTreeMap::new();
    for part in s.split(',') {
        let (model, weight) = part
            .split_once('=')
            .with_context(|| format!("mix entry '{part}' is not model=weight"))?;
        mix.insert(model.trim().to_string(), weight.trim().parse::<f64>()?);
    }
    Ok(mix)
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(common) => {
            let cfg = build_config(&common)?;
            let report = cmd_run(&cfg)?;
            println!("{}", report.summary_line());
        }
        Command::Compare { common, policies } => {
            let cfg = build_config(&common)?;
            let policies = parse_policies(&policies)?;
            let out = cmd_compare(&cfg, &policies)?;
            print!("{}", out.render_text());
        }
        Command::GenTrace { out, n_jobs, rate, seed, slack, unbounded_fraction, model_mix } => {
            let db = ProfileDb::embedded()?;
            let mut params = TraceGenParams {
                n_jobs,
                arrival_rate_per_h: rate,
                seed,
                deadline_slack: slack,
                unbounded_fraction,
                ..Default::default()
            };
            if let Some(mix) = &model_mix {
                params.model_mix = parse_mix(mix)?;
            }
            let n = cmd_gen_trace(&params, &db, &out)?;
            println!("wrote {n} jobs to {}", out.display());
        }
    }
    Ok(())
}
