//! `tugwar`: solvers, simulation, ladders and named scenarios from the shell.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use output::{render_csv, write_atomic, Artifacts};

#[derive(Parser, Debug)]
#[command(name = "tugwar", version, about = "Tug-of-war games and the infinity Laplacian")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Game step size for metric-space sources.
    #[arg(long, global = true)]
    pub eps: Option<f64>,
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    #[arg(long = "max-iter", global = true)]
    pub max_iter: Option<usize>,
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "TUGWAR_THREADS")]
    pub threads: Option<usize>,
    /// Directory for the JSON report and CSV table.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve a graph game or an ε-game on a metric space.
    Solve(commands::SolveArgs),
    /// Monte Carlo play between two strategies.
    Simulate(commands::SimulateArgs),
    /// ε-ladder convergence study on a metric space.
    Converge(commands::ConvergeArgs),
    /// Cap harmonic measure at the disk center over a δ ladder.
    Hmeasure(commands::HmeasureArgs),
    /// Run a registry scenario (`scenario list` prints the names) or a spec file.
    Scenario(commands::ScenarioArgs),
    /// Print the registry names.
    List,
}

fn invocation() -> String {
    std::env::args()
        .enumerate()
        .map(|(i, a)| {
            let a = if i == 0 { "tugwar".to_string() } else { a };
            if a.is_empty() || a.contains(|c: char| c.is_whitespace() || c == '\'' || c == '"') {
                format!("'{}'", a.replace('\'', "'\\''"))
            } else {
                a
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn emit(a: &Artifacts, common: &Common, csv_to_stdout: bool) -> Result<(), String> {
    let inv = invocation();
    let mut report = a.report.clone();
    if let Some(obj) = report.as_object_mut() {
        obj.insert("invocation".into(), inv.clone().into());
        obj.insert("version".into(), env!("CARGO_PKG_VERSION").into());
    }
    let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    let csv = render_csv(a, &inv);
    match &common.out {
        Some(dir) => {
            write_atomic(dir, &format!("{}.json", a.stem), &json)
                .map_err(|e| format!("cannot write to {}: {e}", dir.display()))?;
            if let Some(csv) = &csv {
                write_atomic(dir, &format!("{}.csv", a.stem), csv)
                    .map_err(|e| format!("cannot write to {}: {e}", dir.display()))?;
            }
            print!("{json}");
        }
        None => match (&csv, csv_to_stdout) {
            (Some(csv), true) => print!("{csv}"),
            _ => print!("{json}"),
        },
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(4);
        }
    }
    let (result, csv_to_stdout) = match &cli.command {
        Command::Solve(a) => (commands::solve(a, &cli.common), true),
        Command::Simulate(a) => (commands::simulate(a, &cli.common), false),
        Command::Converge(a) => (commands::converge(a, &cli.common), false),
        Command::Hmeasure(a) => (commands::hmeasure(a, &cli.common), false),
        Command::Scenario(a) if a.name.as_deref() == Some("list") => {
            commands::print_list();
            return ExitCode::SUCCESS;
        }
        Command::Scenario(a) => (commands::scenario(a, &cli.common), false),
        Command::List => {
            commands::print_list();
            return ExitCode::SUCCESS;
        }
    };
    let artifacts = match result {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(4);
        }
    };
    if let Err(e) = emit(&artifacts, &cli.common, csv_to_stdout) {
        eprintln!("error: {e}");
        return ExitCode::from(4);
    }
    match artifacts.status {
        output::Status::Ok => {}
        output::Status::NotConverged => eprintln!("warning: solver did not converge"),
        output::Status::InvariantViolated => eprintln!("warning: invariant check failed"),
    }
    ExitCode::from(artifacts.status.code() as u8)
}
