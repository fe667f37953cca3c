use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use reentrant_sched_cli::commands::{
    check_horizon_changes, cmd_asymptotics, cmd_simulate, gap_rows, gap_table, optimal_path_table,
    trajectory_runs, trajectory_summary,
};
use reentrant_sched_cli::config::PolicySpec;
use reentrant_sched_cli::table::Table;
use reentrant_sched_cli::{suites, CliError, CliResult, ExperimentConfig};

#[derive(Parser, Debug)]
#[command(name = "reentrant-sched", version, about = "Two-class reentrant fluid scheduling experiments")]
struct Cli {
    /// Flat `key = value` config file
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output file (a directory for `trajectories`); stdout when omitted
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true)]
    grid_points: Option<usize>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Extra `key=value` assignment applied after the config file
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one policy and write its trajectory
    Simulate {
        /// fp1, fp2, switch-time:<class>:<time>, switch-curve:<class>:<backlog> or optimal
        #[arg(long)]
        policy: Option<String>,
    },
    /// Fixed-priority gaps to the optimum over a one-field sweep
    GapTable {
        /// Re-solve every row with twice the horizon and cells and require
        /// the optimal cost to stay put
        #[arg(long)]
        horizon_double_check: bool,
    },
    /// LP-optimal trajectories from a grid of starts, with switch summaries
    Trajectories,
    /// Closed-form fixed-priority costs from symmetric starts
    Asymptotics,
    /// Run the verification suites
    Verify,
}

fn load_config(cli: &Cli) -> CliResult<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    for o in &cli.overrides {
        cfg.apply_override(o)?;
    }
    if let Some(n) = cli.grid_points {
        cfg.set("grid_points", &n.to_string())?;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(out) = &cli.out {
        cfg.output_path = Some(out.clone());
    }
    if let Command::Simulate { policy: Some(p) } = &cli.command {
        cfg.policy = PolicySpec::parse(p)?;
    }
    Ok(cfg)
}

fn emit(table: &Table, out: Option<&Path>) -> CliResult<()> {
    match out {
        Some(path) => table.write_to(path),
        None => {
            print!("{}", table.render());
            Ok(())
        }
    }
}

fn run(cli: &Cli) -> CliResult<bool> {
    let cfg = load_config(cli)?;
    let out = cfg.output_path.as_deref();
    match &cli.command {
        Command::Simulate { .. } => {
            let (table, cost) = cmd_simulate(&cfg)?;
            emit(&table, out)?;
            eprintln!("total cost {cost:.16e}");
        }
        Command::GapTable { horizon_double_check } => {
            let rows = gap_rows(&cfg, *horizon_double_check)?;
            emit(&gap_table(&rows), out)?;
            if *horizon_double_check {
                for r in &rows {
                    eprintln!(
                        "horizon doubling at {}: optimal cost change {:.3e}, LP cost change {:.3e}",
                        r.swept_value,
                        r.horizon_change.unwrap_or(f64::NAN),
                        r.lp_horizon_change.unwrap_or(f64::NAN)
                    );
                }
                check_horizon_changes(&rows)?;
            }
        }
        Command::Trajectories => {
            let runs = trajectory_runs(&cfg)?;
            let summary = trajectory_summary(&runs);
            if let Some(dir) = out {
                std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
                for (i, run) in runs.iter().enumerate() {
                    optimal_path_table(&run.solution).write_to(&dir.join(format!("trajectory_{i:03}.csv")))?;
                }
                summary.write_to(&dir.join("summary.csv"))?;
            }
            print!("{}", summary.render());
        }
        Command::Asymptotics => emit(&cmd_asymptotics(&cfg)?, out)?,
        Command::Verify => {
            let report = suites::run_all(&cfg);
            let text = report.render();
            print!("{text}");
            if let Some(path) = out {
                std::fs::write(path, &text).map_err(|e| CliError::io(path, e))?;
            }
            return Ok(report.passed());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
