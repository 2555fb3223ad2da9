use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use d2d_harness::config::{ExperimentConfig, SweepVariable};
use d2d_harness::error::HarnessError;
use d2d_harness::experiments::{self, Context};
use d2d_harness::output;
use d2d_harness::validate::run_invariant_suite;
use log::info;

#[derive(Parser)]
#[command(
    name = "d2dcache",
    version,
    about = "Cache placement for D2D clusters: design, simulate and sweep"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML experiment configuration; defaults apply to anything left out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Design every configured policy for one realized cluster.
    Optimize,
    /// Evaluate the designs on the configured scenario by Monte Carlo.
    Simulate,
    /// Sweep the number of active users.
    SweepUsers,
    /// Sweep the cluster side length.
    SweepSize,
    /// Random push against priority push on the same draws.
    CompareSchedulers,
    /// Run the invariant suite on small random instances.
    Validate,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Optimize => "optimize",
            Command::Simulate => "simulate",
            Command::SweepUsers => "sweep-users",
            Command::SweepSize => "sweep-size",
            Command::CompareSchedulers => "compare-schedulers",
            Command::Validate => "validate",
        }
    }
}

fn load(cli: &Cli) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), HarnessError> {
    if cli.jobs > 0 {
        // only fails if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global();
    }
    let cfg = load(cli)?;
    let cmd = cli.command;
    let needs = match cmd {
        Command::SweepUsers => Some(SweepVariable::ActiveUsers),
        Command::SweepSize => Some(SweepVariable::ClusterSize),
        _ => None,
    };
    if let Command::Validate = cmd {
        let checks = run_invariant_suite(cfg.seed)?;
        output::write_meta(&cli.out, cmd.name(), &cfg)?;
        output::write_validation(&cli.out, &checks)?;
        let mut failed = 0;
        for c in &checks {
            let mark = if c.passed() { "PASS" } else { "FAIL" };
            println!(
                "{mark} {:<28} {:>4}/{:<4} {}",
                c.check,
                c.instances - c.failures,
                c.instances,
                c.detail
            );
            failed += usize::from(!c.passed());
        }
        return if failed == 0 {
            Ok(())
        } else {
            Err(HarnessError::Validation(failed))
        };
    }

    let ctx = Context::new(cfg, needs)?;
    info!(
        "{} with {} design(s), seed {}",
        cmd.name(),
        ctx.designs.len(),
        ctx.cfg.seed
    );
    output::write_meta(&cli.out, cmd.name(), &ctx.cfg)?;
    let table = match cmd {
        Command::Optimize => {
            let out = experiments::run_optimize(&ctx)?;
            output::write_optimize(&cli.out, &out)?;
            out.table
        }
        Command::Simulate => experiments::run_simulation(&ctx)?,
        Command::SweepUsers => experiments::run_user_sweep(&ctx)?,
        Command::SweepSize => experiments::run_cluster_size_sweep(&ctx)?,
        Command::CompareSchedulers => experiments::run_scheduler_compare(&ctx)?,
        Command::Validate => unreachable!(),
    };
    output::write_table(&cli.out, &table)?;
    println!(
        "wrote {} row(s) to {}",
        table.rows.len(),
        cli.out.join("results.csv").display()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
