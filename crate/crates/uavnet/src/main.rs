use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use uavnet::error::{HarnessError, Result};
use uavnet::oracle::run_oracle_checks;
use uavnet::run::{load_agents, run_compare, run_eval, run_train, Pilot};
use uavnet::uavnet_core::formation::PolicyKind;
use uavnet::{load_config, RunConfig};

#[derive(Parser)]
#[command(name = "uavnet", version, about = "Multi-UAV sensing and offloading simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON config file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    episodes: Option<u64>,
    /// Formation policy: eda_nf, dynamic_nf, buffer_threshold, non_cooperative.
    /// Repeat for compare.
    #[arg(long = "policy", value_parser = parse_policy)]
    policies: Vec<PolicyKind>,
}

#[derive(Subcommand)]
enum Command {
    /// Train agents and write metrics, trajectories, checkpoints and a summary.
    Train(Common),
    /// Greedy episodes with saved checkpoints.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Checkpoint directory; defaults to `<out>/checkpoints`.
        #[arg(long)]
        checkpoints: Option<PathBuf>,
    },
    /// Formation policies side by side over a demand sweep.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Fly trained actors from this checkpoint directory instead of the
        /// scripted pilot.
        #[arg(long)]
        checkpoints: Option<PathBuf>,
    },
    /// Check the implementation against independent reference computations.
    OracleCheck(Common),
}

fn parse_policy(s: &str) -> std::result::Result<PolicyKind, String> {
    PolicyKind::parse(s).ok_or_else(|| {
        let names: Vec<_> = PolicyKind::ALL.iter().map(|k| k.name()).collect();
        format!("unknown policy `{s}`, expected one of {}", names.join(", "))
    })
}

fn resolve(c: &Common) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.output_dir = o.clone();
    }
    if let Some(e) = c.episodes {
        cfg.training.episodes = e;
    }
    if let [p] = c.policies.as_slice() {
        cfg.formation.policy = *p;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(c) => {
            let cfg = resolve(&c)?;
            let s = run_train(&cfg)?;
            println!(
                "trained {} episodes, eval completion {:?} slots, energy {:.1} J, output in {}",
                s.episodes_completed,
                s.completion_time_slots,
                s.total_energy,
                cfg.output_dir.display()
            );
        }
        Command::Eval { common, checkpoints } => {
            let cfg = resolve(&common)?;
            let dir = checkpoints.unwrap_or_else(|| cfg.output_dir.join("checkpoints"));
            let episodes = common.episodes.unwrap_or(10);
            let s = run_eval(&cfg, &dir, episodes)?;
            println!(
                "{} episodes, mean reward {:.3}, {} completed",
                s.episodes.len(),
                s.mean_reward,
                s.completed
            );
        }
        Command::Compare { common, checkpoints } => {
            let cfg = resolve(&common)?;
            let policies = if common.policies.is_empty() { cfg.compare.policies.clone() } else { common.policies.clone() };
            let pilot = match checkpoints {
                Some(dir) => Pilot::Actors(load_agents(&cfg, &dir)?),
                None => Pilot::Scripted,
            };
            let (c, path) = run_compare(&cfg, &policies, &pilot)?;
            for p in &c.policies {
                let times: Vec<String> = p.runs.iter().map(|r| r.completion_time_slots.to_string()).collect();
                println!("{:<17} completion slots per demand scale: {}", p.policy.name(), times.join(" "));
            }
            println!("wrote {}", path.display());
        }
        Command::OracleCheck(c) => {
            let cfg = resolve(&c)?;
            let report = run_oracle_checks(cfg.seed);
            print!("{report}");
            if c.out.is_some() {
                std::fs::create_dir_all(&cfg.output_dir)
                    .map_err(|e| HarnessError::io("creating output directory", &cfg.output_dir, e))?;
                let path = cfg.output_dir.join("oracle_report.json");
                let text = serde_json::to_string_pretty(&report).map_err(|e| HarnessError::Runtime(e.to_string()))?;
                std::fs::write(&path, text).map_err(|e| HarnessError::io("writing", &path, e))?;
            }
            if !report.passed() {
                return Err(HarnessError::Oracle("one or more oracles exceeded tolerance".into()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
