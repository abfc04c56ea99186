use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use conley_ifs::toolkit::presets::PRESETS;
use conley_ifs::toolkit::runner::{run, TaskStatus};
use conley_ifs::toolkit::scenario::Scenario;
use conley_ifs::toolkit::verify::verify;

#[derive(Parser)]
#[command(name = "conley-ifs", version, about = "Cell-level Conley attractors of iterated function systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the tasks of a scenario file.
    Run {
        scenario: PathBuf,
        /// Output directory (default: the scenario's `output`, else `out/<label>`).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (falls back to CONLEY_IFS_THREADS).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// List bundled presets.
    Presets,
    /// Run a scenario in memory and check its invariants.
    Verify {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn init_threads(flag: Option<usize>) -> Result<(), String> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var("CONLEY_IFS_THREADS") {
            Ok(v) => Some(v.trim().parse().map_err(|_| format!("CONLEY_IFS_THREADS: not a number: '{v}'"))?),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn load(path: &Path, seed: Option<u64>) -> Result<Scenario, String> {
    let mut s = Scenario::load(path).map_err(|e| e.to_string())?;
    if let Some(seed) = seed {
        s.seed = seed;
    }
    Ok(s)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Presets => {
            for (name, about) in PRESETS {
                println!("{name:<24} {about}");
            }
            Ok(true)
        }
        Command::Run {
            scenario,
            out,
            seed,
            threads,
        } => init_threads(threads).and_then(|()| {
            let s = load(&scenario, seed)?;
            let dir = out
                .or_else(|| s.output.clone())
                .unwrap_or_else(|| PathBuf::from("out").join(&s.label));
            let outcome = run(&s, &dir).map_err(|e| e.to_string())?;
            for (task, status) in &outcome.tasks {
                match status {
                    TaskStatus::Done => println!("{:<11} done", task.name()),
                    TaskStatus::Failed(m) => println!("{:<11} FAILED: {m}", task.name()),
                    TaskStatus::Skipped(m) => println!("{:<11} skipped: {m}", task.name()),
                }
            }
            println!("outputs in {}", dir.display());
            Ok(!outcome.failed())
        }),
        Command::Verify { scenario, seed, threads } => init_threads(threads).and_then(|()| {
            let s = load(&scenario, seed)?;
            let checks = verify(&s).map_err(|e| e.to_string())?;
            for c in &checks {
                let tag = if c.pass { "PASS" } else { "FAIL" };
                if c.detail.is_empty() {
                    println!("{tag} {}", c.name);
                } else {
                    println!("{tag} {}: {}", c.name, c.detail);
                }
            }
            Ok(checks.iter().all(|c| c.pass))
        }),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
