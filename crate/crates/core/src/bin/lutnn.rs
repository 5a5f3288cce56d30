use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lutnn::composer::{load_reinterpreted, save_reinterpreted};
use lutnn::experiment::{self, run, ExperimentConfig};
use lutnn::nn::{self, load_model, save_model};
use lutnn::Result;

#[derive(Parser)]
#[command(version, about = "Lookup-table reinterpretation and accelerator simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the configured network and save `model.bin`.
    Train(Common),
    /// Reinterpret `model.bin` into `model.lut`.
    Compose {
        #[command(flatten)]
        common: Common,
        /// Trained network; defaults to `<out>/model.bin`.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Simulate `model.lut` on the configured workload.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Reinterpreted model; defaults to `<out>/model.lut`.
        #[arg(long)]
        lut: Option<PathBuf>,
    },
    /// Compose every point of the configured grid and write `sweep.csv`.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Trained network; trained from the configuration when omitted.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Compose and simulate `model.bin`, then write `summary.md`.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Train, compose, simulate and report in one go.
    Run(Common),
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.set_seed(s);
    }
    if let Some(o) = &c.out {
        cfg.output.dir = o.clone();
    }
    fs::create_dir_all(&cfg.output.dir)?;
    Ok(cfg)
}

fn model_path(cfg: &ExperimentConfig, given: &Option<PathBuf>, name: &str) -> PathBuf {
    given.clone().unwrap_or_else(|| cfg.output.dir.join(name))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Train(c) => {
            let cfg = load_config(&c)?;
            let data = run::load_data(&cfg)?;
            let out = run::train_stage(&cfg, &data)?;
            let split = run::held_out_split(&data);
            let err = nn::train::evaluate_split(&out.network, &data, split)?;
            println!("{split:?} error {err:.4}");
            let path = cfg.output.dir.join("model.bin");
            save_model(&out.network, &path)?;
            println!("wrote {}", path.display());
            let record = serde_json::json!({ "loss_curve": out.loss_curve, "split": split, "error": err });
            write(&cfg.output.dir.join("train.json"), &serde_json::to_string_pretty(&record)?)
        }
        Command::Compose { common, model } => {
            let cfg = load_config(&common)?;
            let data = run::load_data(&cfg)?;
            let net = load_model(&model_path(&cfg, &model, "model.bin"))?;
            let (rm, report) = run::compose_stage(&cfg, &net, &data)?;
            let best = report.best();
            println!(
                "delta_e {:+.4} after {} iteration(s), converged: {}, memory {} bytes",
                best.delta_e,
                report.iterations.len(),
                report.converged,
                report.memory_bytes
            );
            let path = cfg.output.dir.join("model.lut");
            save_reinterpreted(&rm, &path)?;
            println!("wrote {}", path.display());
            write(&cfg.output.dir.join("reinterpret.json"), &serde_json::to_string_pretty(&report)?)?;
            write(
                &cfg.output.dir.join("memory.json"),
                &serde_json::to_string_pretty(&experiment::report_memory(&rm))?,
            )
        }
        Command::Simulate { common, lut } => {
            let cfg = load_config(&common)?;
            let data = run::load_data(&cfg)?;
            let rm = load_reinterpreted(&model_path(&cfg, &lut, "model.lut"))?;
            let r = run::simulate_stage(&cfg, &rm, &data)?;
            print!("{}", r.report.to_text());
            write(&cfg.output.dir.join("sim.csv"), &r.report.to_csv())?;
            write(&cfg.output.dir.join("sim.txt"), &r.report.to_text())
        }
        Command::Sweep { common, model } => {
            let cfg = load_config(&common)?;
            let data = run::load_data(&cfg)?;
            let net = match model {
                Some(p) => load_model(&p)?,
                None => run::train_stage(&cfg, &data)?.network,
            };
            let rows = experiment::sweep(&cfg, &net, &data)?;
            for ((w, u, q), m) in experiment::median_delta_e(&rows) {
                println!("w={w:<3} u={u:<3} q={q:<3} median delta_e {m:+.4}");
            }
            write(&cfg.output.dir.join("sweep.csv"), &experiment::sweep_csv(&rows))
        }
        Command::Report { common, model } => {
            let cfg = load_config(&common)?;
            let data = run::load_data(&cfg)?;
            let net = load_model(&model_path(&cfg, &model, "model.bin"))?;
            let summary = run::run_trained(&cfg, &data, &net, Vec::new(), 0.0)?;
            print!("{}", experiment::markdown_summary(&summary));
            println!("\nwrote {}", cfg.output.dir.join("summary.md").display());
            Ok(())
        }
        Command::Run(c) => {
            let cfg = load_config(&c)?;
            let summary = run::run(&cfg)?;
            print!("{}", experiment::markdown_summary(&summary));
            println!("\nartifacts in {}", cfg.output.dir.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
