//! `risfd`: seeded Monte-Carlo sweeps of the joint design.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use ris_fdisac::config::ScenarioConfig;
use ris_fdisac::experiment::{Execution, Experiment, JobOutcome, Status, SweepSpec};
use ris_fdisac::orchestrator::{Mode, RunOptions};
use ris_fdisac::Error;

/// Largest surface size run without `--long-running`.
const DESK_MAX_M: usize = 64;
/// Surface size used when neither a config file nor an `m` sweep is given.
const DESK_DEFAULT_M: usize = 64;

#[derive(Debug, Parser)]
#[command(name = "risfd", version, about = "Seeded sweeps of the RIS-aided full-duplex ISAC design")]
struct Cli {
    /// Scenario TOML file; unspecified fields keep their defaults.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Sweep axis as KEY=V1,V2,... with KEY one of m, gamma_db, si_db. Repeatable.
    #[arg(long = "sweep", value_name = "KEY=VALUES")]
    sweeps: Vec<String>,

    /// Monte-Carlo seeds per cell.
    #[arg(long, default_value_t = 20)]
    seeds: usize,

    /// Master seed from which every channel and phase draw is derived.
    #[arg(long, default_value_t = 1)]
    master_seed: u64,

    /// Baseline modes, comma separated: full, noris, rndris.
    #[arg(long, value_delimiter = ',', default_value = "full")]
    mode: Vec<Mode>,

    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "risfd-out")]
    out: PathBuf,

    /// Outer iteration cap per run.
    #[arg(long)]
    max_outer: Option<usize>,

    /// Allow surfaces larger than the desk-scale limit.
    #[arg(long)]
    long_running: bool,

    /// Run jobs one after another instead of on the thread pool.
    #[arg(long)]
    sequential: bool,

    /// Print the effective scenario as TOML and exit.
    #[arg(long)]
    print_config: bool,
}

fn config_error(field: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        field: field.into(),
        reason: reason.into(),
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, values: &str) -> Result<Vec<T>, Error>
where
    T::Err: std::fmt::Display,
{
    values
        .split(',')
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|e| config_error(&format!("sweep.{key}"), format!("bad value {v:?}: {e}")))
        })
        .collect()
}

fn apply_sweep(spec: &mut SweepSpec, arg: &str) -> Result<(), Error> {
    let (key, values) = arg
        .split_once('=')
        .ok_or_else(|| config_error("sweep", format!("expected KEY=V1,V2,... but got {arg:?}")))?;
    match key.trim().to_ascii_lowercase().as_str() {
        "m" => spec.m = parse_list("m", values)?,
        "gamma_db" => spec.gamma_db = parse_list("gamma_db", values)?,
        "si_db" => spec.si_db = parse_list("si_db", values)?,
        other => {
            return Err(config_error(
                "sweep",
                format!("unknown key {other:?}; expected m, gamma_db or si_db"),
            ))
        }
    }
    Ok(())
}

fn build(cli: &Cli) -> Result<Experiment, Error> {
    let mut spec = SweepSpec {
        modes: cli.mode.clone(),
        seeds: cli.seeds,
        master_seed: cli.master_seed,
        ..SweepSpec::default()
    };
    for arg in &cli.sweeps {
        apply_sweep(&mut spec, arg)?;
    }
    let base = match &cli.config {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::default().with_ris(DESK_DEFAULT_M),
    };
    base.validate()?;
    spec.validate()?;
    let largest = spec.cells(&base).iter().map(|c| c.m).max().unwrap_or(0);
    if largest > DESK_MAX_M && !cli.long_running {
        return Err(config_error(
            "m",
            format!("surface size {largest} exceeds the desk-scale limit {DESK_MAX_M}; pass --long-running"),
        ));
    }
    let mut run = RunOptions::default();
    if let Some(n) = cli.max_outer {
        run.max_outer = n;
    }
    run.validate()?;
    Ok(Experiment {
        base,
        sweep: spec,
        run,
        execution: if cli.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        },
    })
}

fn summarize(exp: &Experiment, outcomes: &[JobOutcome]) {
    println!("cell mode    M     gamma_db  si_db     feasible  converged  mean_sum_rate");
    for cell in exp.sweep.cells(&exp.base) {
        let rows: Vec<_> = outcomes.iter().filter(|o| o.row.cell_id == cell.id).collect();
        let rates: Vec<f64> = rows.iter().filter_map(|o| o.row.sum_rate).collect();
        let converged = rows.iter().filter(|o| o.row.status == Status::Converged).count();
        let mean = if rates.is_empty() {
            f64::NAN
        } else {
            rates.iter().sum::<f64>() / rates.len() as f64
        };
        println!(
            "{:<4} {:<7} {:<5} {:<9} {:<9} {:<9} {:<10} {:.4}",
            cell.id,
            cell.mode,
            cell.m,
            cell.gamma_db,
            cell.si_db,
            format!("{}/{}", rates.len(), rows.len()),
            converged,
            mean
        );
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let exp = match build(&cli) {
        Ok(exp) => exp,
        Err(e) => {
            eprintln!("risfd: {e}");
            return ExitCode::from(2);
        }
    };
    if cli.print_config {
        print!("{}", exp.base.to_toml_string());
        return ExitCode::SUCCESS;
    }
    match exp.execute(Some(&cli.out)) {
        Ok(outcomes) => {
            summarize(&exp, &outcomes);
            println!("results written to {}", cli.out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("risfd: {e}");
            ExitCode::FAILURE
        }
    }
}
