use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use v2g_core::grid::{load_feeder, scale_loads, solve_power_flow, Power};
use v2g_core::harness::{
    run_evaluation, train_scenario, write_report, ControllerKind, HarnessError, ReportFile, Scenario,
};

#[derive(Parser)]
#[command(name = "v2g", version, about = "V2G voltage regulation experiments")]
struct Cli {
    /// Seed for every random draw; defaults to the scenario's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ControllerArg {
    None,
    Rl,
    Droop,
}

impl From<ControllerArg> for ControllerKind {
    fn from(c: ControllerArg) -> Self {
        match c {
            ControllerArg::None => ControllerKind::None,
            ControllerArg::Rl => ControllerKind::Rl,
            ControllerArg::Droop => ControllerKind::Droop,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train an agent on the scenario's idealized training environment.
    Train {
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides `[training] steps`.
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the 24-hour day under one controller and write a report file.
    Eval {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_enum)]
        controller: ControllerArg,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        ev_constrained: bool,
        /// Report path; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Combine report files into a comparison table and hourly CSVs.
    Report {
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true)]
        reports: Vec<PathBuf>,
    },
    /// Parse a feeder file and solve it at base load.
    ValidateFeeder { feeder: PathBuf },
}

fn read(path: &Path) -> Result<String, HarnessError> {
    fs::read_to_string(path).map_err(|e| HarnessError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn write(path: &Path, text: &str) -> Result<(), HarnessError> {
    fs::write(path, text).map_err(|e| HarnessError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn validate_feeder(path: &Path) -> Result<(), HarnessError> {
    let feeder = load_feeder(&read(path)?)?;
    let demands = scale_loads(&feeder, 1.0);
    let sol = solve_power_flow(&feeder, &demands, &vec![Power::ZERO; feeder.hubs().len()]);
    let (p, q) = feeder
        .loads()
        .iter()
        .fold((0.0, 0.0), |(p, q), l| (p + l.p_base_kw, q + l.q_base_kvar));
    println!("buses {}", feeder.bus_count());
    println!("lines {}", feeder.lines().len());
    println!("hubs {}", feeder.hubs().iter().map(|h| h.bus.as_str()).collect::<Vec<_>>().join(","));
    println!("base_load_kw {p}");
    println!("base_load_kvar {q}");
    println!("base_converged {}", sol.converged);
    println!("base_iterations {}", sol.iterations);
    println!("base_v_mean {:.6}", sol.mean_v());
    println!("base_v_min {:.6}", sol.min_v());
    println!("base_v_max {:.6}", sol.max_v());
    Ok(())
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Train { scenario, steps, out } => {
            let s = Scenario::load(&scenario)?;
            let seed = cli.seed.unwrap_or(s.seed);
            let outcome = train_scenario(&s, steps, seed, &out)?;
            if let Some(last) = outcome.log.rows.last() {
                println!(
                    "trained steps={} updates={} eval_reward={} eval_violation_rate={}",
                    last.step, outcome.log.updates, last.eval.mean_episode_reward, last.eval.violation_rate
                );
            } else {
                println!("trained steps=0 updates=0");
            }
            Ok(())
        }
        Command::Eval {
            scenario,
            controller,
            checkpoint,
            ev_constrained,
            out,
        } => {
            let s = Scenario::load(&scenario)?;
            let seed = cli.seed.unwrap_or(s.seed);
            let report = run_evaluation(&s, controller.into(), ev_constrained, checkpoint.as_deref(), seed)?;
            for h in &report.body.summary.excluded_hours {
                eprintln!("warning: hour {h} did not converge and is excluded from the statistics");
            }
            match out {
                Some(path) => write(&path, &report.to_json()),
                None => {
                    print!("{}", report.to_json());
                    Ok(())
                }
            }
        }
        Command::Report { out, reports } => {
            let files = reports
                .iter()
                .map(|p| ReportFile::load(p))
                .collect::<Result<Vec<_>, _>>()?;
            let written = write_report(&files, &out)?;
            print!("{}", written.table);
            Ok(())
        }
        Command::ValidateFeeder { feeder } => validate_feeder(&feeder),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}
