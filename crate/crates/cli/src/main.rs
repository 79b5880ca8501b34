//! `copmc <subcommand> --config <path> [--out <dir>] [--seed <u64>]`
//!
//! Exit codes: 0 success, 1 an inequality verdict failed, 2 invalid
//! configuration or unwritable output, 3 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use copula_markov::experiment::{run_experiment, ExperimentConfig, ExperimentError, RunReport, Task};

#[derive(Parser)]
#[command(name = "copmc", version, about = "Mixing coefficients of copula-based Markov chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and check the configuration without running anything.
    Validate(Common),
    /// Lag-1 β, ρ, φ at grid.m (and grid.m2).
    Coeffs(Common),
    /// β, ρ, φ at lags 1..=profile.n_max.
    Profile(Common),
    /// Density floor and the implied φ bound.
    Doeblin(Common),
    /// Simulate a path and cross-check it against the grid kernel.
    Simulate(Common),
    /// Lag-1 coefficients over a parameter grid.
    Sweep(Common),
    /// Every task enabled in the configuration.
    Run(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides output.directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides simulate.seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn load(common: &Common) -> Result<ExperimentConfig, ExperimentError> {
    let mut config = ExperimentConfig::load(&common.config)?;
    if let Some(out) = &common.out {
        config.output.directory = out.clone();
    }
    if let (Some(seed), Some(sim)) = (common.seed, config.simulate.as_mut()) {
        sim.seed = seed;
    }
    Ok(config)
}

fn print_report(report: &RunReport) {
    println!("copula: {}", report.spec_id);
    if let Some(c) = &report.coeffs {
        for r in &c.rows {
            println!("coeffs m={}: beta={:.6e} rho={:.6e} phi={:.6e}", r.m, r.beta, r.rho, r.phi);
        }
        if let Some(gap) = c.rho_gap {
            println!("coeffs rho gap between resolutions: {gap:.3e}");
        }
    }
    if let Some(p) = &report.profile {
        let rate = |r: Option<f64>| r.map_or("undefined".to_string(), |x| format!("{x:.6}"));
        println!(
            "profile m={} lags 1..={}: rates beta={} rho={} phi={}",
            p.m,
            p.lags.len(),
            rate(p.fitted_rates.beta),
            rate(p.fitted_rates.rho),
            rate(p.fitted_rates.phi)
        );
        for c in &p.non_decreasing {
            println!("profile warning: {c} does not decay");
        }
    }
    if let Some(d) = &report.doeblin {
        println!(
            "doeblin m={}: floor={:.6} epsilon={:.6} bound={:.6} grid_phi1={:.6} applicable={}",
            d.m, d.density_floor, d.epsilon, d.phi_bound, d.grid_phi1, d.applicable
        );
    }
    if let Some(s) = &report.simulation {
        print!("simulate n={} seed={}: mean={:.6}", s.n, s.seed, s.mean);
        if let Some(ks) = s.ks_statistic {
            print!(" ks={ks:.3e} (1% critical {:.3e})", s.ks_critical_1pct);
        }
        if let Some(tv) = s.empirical_max_row_tv {
            print!(" empirical max row tv={tv:.4}");
        }
        println!();
    }
    if let Some(rows) = &report.sweep {
        println!("sweep: {} cells", rows.len());
    }
    for v in &report.verdicts {
        println!("verdict {}: {}", v.check, v.status);
    }
    for a in &report.artifacts {
        println!("wrote {}", a.display());
    }
}

fn execute(command: Command) -> Result<i32, ExperimentError> {
    let (common, task) = match &command {
        Command::Validate(c) => {
            let config = load(c)?;
            let spec = config.validate()?;
            let tasks: Vec<String> = config.enabled_tasks().iter().map(Task::to_string).collect();
            println!("valid: {} (tasks: {})", spec.id(), tasks.join(", "));
            return Ok(0);
        }
        Command::Coeffs(c) => (c, Some(Task::Coeffs)),
        Command::Profile(c) => (c, Some(Task::Profile)),
        Command::Doeblin(c) => (c, Some(Task::Doeblin)),
        Command::Simulate(c) => (c, Some(Task::Simulate)),
        Command::Sweep(c) => (c, Some(Task::Sweep)),
        Command::Run(c) => (c, None),
    };
    let mut config = load(common)?;
    if let Some(task) = task {
        config.restrict_to(task)?;
    }
    let report = run_experiment(&config)?;
    print_report(&report);
    Ok(report.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
