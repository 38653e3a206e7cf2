use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use plasticity_harness::analyze::analyze_dirs;
use plasticity_harness::dataset::load_data;
use plasticity_harness::protocol::{run_cycle_protocol, run_id, run_stress_test, run_winning_ticket};
use plasticity_harness::runlog::{load_final_mask, ProtocolKind, RunSummary};
use plasticity_harness::selftest::run_selftest;
use plasticity_harness::{HarnessError, Result, RunConfig};

#[derive(Parser)]
#[command(name = "plasticity", version, about = "Grow/prune structural plasticity experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Run a single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    /// Output root; one sub-directory per run.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dotted `key=value` overrides applied before validation.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Cycle protocol for every configured seed.
    Run(RunArgs),
    /// Winning-ticket retraining from a finished cycle run.
    Ticket {
        #[command(flatten)]
        run: RunArgs,
        /// Cycle run directory (or mask_final.json) providing the mask.
        #[arg(long)]
        from: PathBuf,
    },
    /// Growth-cycle stress test over several cycle counts at a fixed horizon.
    Stress {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',', default_value = "5,10,20")]
        ks: Vec<usize>,
        #[arg(long, default_value_t = 200)]
        horizon: usize,
    },
    /// Parity, survivor, catch-up and aggregate reports over run directories.
    Analyze {
        #[arg(long)]
        out: PathBuf,
        runs: Vec<PathBuf>,
    },
    /// Fast invariant suite.
    Selftest,
}

fn load(args: &RunArgs) -> Result<(RunConfig, Vec<u64>, PathBuf)> {
    let cfg = RunConfig::from_path(&args.config, &args.overrides)?;
    let seeds = args.seed.map_or_else(|| cfg.seeds.clone(), |s| vec![s]);
    let out = args.out.clone().unwrap_or_else(|| cfg.out.clone());
    Ok((cfg, seeds, out))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let (cfg, seeds, out) = load(&args)?;
            let data = load_data(&cfg)?;
            for seed in seeds {
                let dir = out.join(run_id(&cfg, ProtocolKind::Cycle, seed));
                let log = run_cycle_protocol(&cfg, &data, seed, &dir)?;
                println!(
                    "{}: final {:.4} taa {:.4} -> {}",
                    log.summary.run_id,
                    log.summary.acc_final,
                    log.summary.taa,
                    dir.display()
                );
            }
        }
        Command::Ticket { run, from } => {
            let (cfg, seeds, out) = load(&run)?;
            let data = load_data(&cfg)?;
            let mask = load_final_mask(&from)?;
            let paired: Option<RunSummary> = if from.is_dir() {
                let text = std::fs::read_to_string(from.join("summary.json")).map_err(|e| HarnessError::io(&from, e))?;
                Some(serde_json::from_str(&text)?)
            } else {
                None
            };
            for seed in seeds {
                let dir = out.join(run_id(&cfg, ProtocolKind::Ticket, seed));
                let log = run_winning_ticket(&cfg, &data, seed, &mask, paired.as_ref(), &dir)?;
                println!(
                    "{}: final {:.4} taa {:.4} delta {:?} -> {}",
                    log.summary.run_id,
                    log.summary.acc_final,
                    log.summary.taa,
                    log.summary.delta_wt_c,
                    dir.display()
                );
            }
        }
        Command::Stress { run, ks, horizon } => {
            let (cfg, seeds, out) = load(&run)?;
            let data = load_data(&cfg)?;
            for seed in seeds {
                let rows = run_stress_test(&cfg, &data, seed, &ks, horizon, &out.join(format!("stress-{}-s{seed}", cfg.method.name())))?;
                for r in rows {
                    println!("seed {} K {:>2}: taa {:.4} final {:.4}", r.seed, r.k, r.taa, r.acc_final);
                }
            }
        }
        Command::Analyze { out, runs } => {
            if runs.is_empty() {
                return Err(HarnessError::invalid("analyze: no run directories given"));
            }
            let report = analyze_dirs(&runs, &out)?;
            for g in &report.groups {
                println!(
                    "{} {} c={:.2} [{}] n={}: acc {:.4}±{:.4} taa {:.4}±{:.4}",
                    g.method, format!("{:?}", g.protocol).to_lowercase(), g.compactness, g.interventions, g.runs, g.acc_mean, g.acc_ci95, g.taa_mean,
                    g.taa_ci95
                );
            }
            for n in &report.notes {
                println!("note: {n}");
            }
        }
        Command::Selftest => {
            let results = run_selftest();
            let mut failed = 0;
            for r in &results {
                println!(
                    "[{}] {} ({}, {:.2}s)",
                    if r.passed { "PASS" } else { "FAIL" },
                    r.name,
                    r.detail,
                    r.seconds
                );
                failed += usize::from(!r.passed);
            }
            if failed > 0 {
                return Err(HarnessError::Other(format!("{failed} selftest check(s) failed")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
