use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use ctrlrepair::controller::{self, train, Dataset, TrainConfig};
use ctrlrepair::harness::{self, run_study, BootstrapConfig, StudyConfig, BOOTSTRAP_SEED_OFFSET};
use ctrlrepair::plant::{sample_initial, simulate, ExecutionTrace, PlantId, PlantModel};
use ctrlrepair::repair::{diag_and_repair, RepairConfig, Strategy};
use ctrlrepair::stl::{diagnose, evaluate, parse, Formula};

#[derive(Parser)]
#[command(name = "ctrlrepair", version, about = "Repair neural controllers of closed-loop systems against STL requirements")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an initial controller by imitating the plant's reference law.
    Bootstrap {
        #[arg(long)]
        plant: PlantId,
        #[arg(long, default_value_t = BOOTSTRAP_SEED_OFFSET)]
        seed: u64,
        /// Weight file to write.
        #[arg(long)]
        out: PathBuf,
        /// Also write the demonstration set as CSV.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Simulate one closed-loop execution and write it as CSV.
    Simulate {
        #[arg(long)]
        plant: PlantId,
        #[arg(long)]
        controller: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a requirement on a trace file.
    Monitor {
        #[arg(long)]
        plant: PlantId,
        #[arg(long)]
        trace: PathBuf,
        /// Requirement text; the plant's benchmark requirement by default.
        #[arg(long)]
        requirement: Option<String>,
    },
    /// Repair an unsafe trace and print the repair report.
    Repair {
        #[arg(long)]
        plant: PlantId,
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        controller: PathBuf,
        #[arg(long)]
        requirement: Option<String>,
        #[arg(long, default_value = "Similar")]
        strategy: Strategy,
        #[arg(long, default_value_t = 5)]
        budget: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the final trace as CSV.
        #[arg(long)]
        trace_out: Option<PathBuf>,
        /// Write the report here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a full study from a TOML configuration.
    Study {
        #[arg(long)]
        config: PathBuf,
    },
    /// Fine-tune a controller on a dataset.
    Retrain {
        #[arg(long)]
        controller: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = TrainConfig::default().epochs)]
        epochs: usize,
        #[arg(long, default_value_t = TrainConfig::default().learning_rate)]
        learning_rate: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

type AnyResult<T> = Result<T, Box<dyn std::error::Error>>;

fn requirement(m: &PlantModel, text: Option<String>) -> AnyResult<Formula> {
    let text = text.unwrap_or_else(|| m.default_requirement());
    Ok(parse(&text, m.output_names())?)
}

fn read_trace(path: &Path, plant: PlantId) -> AnyResult<ExecutionTrace> {
    Ok(ExecutionTrace::read_csv(fs::File::open(path)?, plant)?)
}

fn write_text(path: Option<&Path>, text: &str) -> AnyResult<()> {
    match path {
        Some(p) => fs::write(p, text)?,
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

/// Returns `Ok(true)` when the run completed with per-trace failures.
fn run(cmd: Command) -> AnyResult<bool> {
    match cmd {
        Command::Bootstrap { plant, seed, out, dataset } => {
            let m = PlantModel::for_id(plant);
            let (net, data) = harness::bootstrap(&m, &BootstrapConfig::for_plant(plant), seed)?;
            controller::save(&net, &out)?;
            if let Some(path) = dataset {
                data.write_csv(BufWriter::new(fs::File::create(path)?))?;
            }
        }
        Command::Simulate { plant, controller: path, seed, out } => {
            let m = PlantModel::for_id(plant);
            let ctrl = controller::load(&path)?;
            let (x0, u) = sample_initial(&m, &mut ChaCha8Rng::seed_from_u64(seed));
            let mut tr = simulate(&m, &ctrl, &u, &[], &x0)?;
            tr.seed = seed;
            match out {
                Some(p) => tr.write_csv(BufWriter::new(fs::File::create(p)?))?,
                None => tr.write_csv(io::stdout().lock())?,
            }
        }
        Command::Monitor { plant, trace, requirement: text } => {
            let m = PlantModel::for_id(plant);
            let phi = requirement(&m, text)?;
            let tr = read_trace(&trace, plant)?;
            let eval = evaluate(&tr.w, &phi)?;
            let episode = if eval.value < 0.0 { Some(diagnose(&tr.w, &phi)?) } else { None };
            let report = json!({
                "robustness": eval.value,
                "satisfied": eval.value >= 0.0,
                "clamped": eval.clamped,
                "episode": episode,
            });
            write_text(None, &serde_json::to_string_pretty(&report)?)?;
        }
        Command::Repair {
            plant,
            trace,
            controller: path,
            requirement: text,
            strategy,
            budget,
            seed,
            trace_out,
            out,
        } => {
            let m = PlantModel::for_id(plant);
            let phi = requirement(&m, text)?;
            let ctrl = controller::load(&path)?;
            // trace files are rounded; replay the recorded inputs at full precision
            let recorded = read_trace(&trace, plant)?;
            let tr = simulate(&m, &ctrl, &recorded.u, &[], recorded.initial_state())?;
            let cfg = RepairConfig {
                strategy,
                budget,
                seed,
                ..RepairConfig::default()
            };
            let outcome = diag_and_repair(&m, &ctrl, &phi, &tr, &cfg)?;
            if let Some(p) = trace_out {
                outcome.trace.write_csv(BufWriter::new(fs::File::create(p)?))?;
            }
            write_text(out.as_deref(), &serde_json::to_string_pretty(&outcome.report())?)?;
        }
        Command::Study { config } => {
            let cfg = StudyConfig::from_toml(&fs::read_to_string(&config)?)?;
            let report = run_study(&cfg)?;
            println!("wrote study report to {}", cfg.resolved_output_dir().display());
            return Ok(!report.failures.is_empty());
        }
        Command::Retrain {
            controller: path,
            dataset,
            out,
            epochs,
            learning_rate,
            seed,
        } => {
            let ctrl = controller::load(&path)?;
            let data = Dataset::read_csv(fs::File::open(dataset)?)?;
            let cfg = TrainConfig {
                epochs,
                learning_rate,
                seed,
                ..TrainConfig::default()
            };
            let report = train(&ctrl, &data, &cfg)?;
            controller::save(&report.controller, &out)?;
            match report.best_epoch.checked_sub(1) {
                Some(i) => println!("kept epoch {} (holdout loss {:.6e})", report.best_epoch, report.validation_loss[i]),
                None => println!("kept the initial parameters"),
            }
        }
    }
    Ok(false)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(2),
        Err(e) => {
            error!("{e}");
            ExitCode::from(1)
        }
    }
}
