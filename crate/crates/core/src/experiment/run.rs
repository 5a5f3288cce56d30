//! The train, compose and simulate stages and the files they leave behind.
//!
//! Output layout under `output.dir`:
//!
//! ```text
//! model.bin        trained network
//! model.lut        reinterpreted model
//! reinterpret.json per-iteration accuracy loss
//! sim.csv, sim.txt simulator report
//! summary.json     everything above in one record
//! summary.md       human-readable summary
//! ```

use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::report::markdown_summary;
use crate::composer::{reinterpret, save_reinterpreted, ReinterpretReport, ReinterpretedModel};
use crate::error::{Error, Result};
use crate::lut::LutModel;
use crate::nn::{self, build_topology, Dataset, Network, Split, TrainOutcome};
use crate::sim::{simulate, SimResult};

pub fn load_data(cfg: &ExperimentConfig) -> Result<Dataset> {
    cfg.dataset.load().map_err(|e| e.in_stage("dataset"))
}

pub fn train_stage(cfg: &ExperimentConfig, data: &Dataset) -> Result<TrainOutcome> {
    let run = || {
        let layers = build_topology(data.item_dims().to_vec(), &cfg.topology.layers)?;
        let net = Network::new(layers, cfg.init_seed())?;
        nn::train(&net, data, &cfg.train)
    };
    run().map_err(|e| e.in_stage("train"))
}

pub fn compose_stage(cfg: &ExperimentConfig, net: &Network, data: &Dataset) -> Result<(ReinterpretedModel, ReinterpretReport)> {
    reinterpret(net, data, &cfg.compose).map_err(|e| e.in_stage("compose"))
}

pub fn simulate_stage(cfg: &ExperimentConfig, rm: &ReinterpretedModel, data: &Dataset) -> Result<SimResult> {
    simulate(rm, &cfg.simulate.workload(data), &cfg.cost, cfg.simulate.options()).map_err(|e| e.in_stage("simulate"))
}

/// Error on the test split, falling back to validation and then training data.
pub fn held_out_split(data: &Dataset) -> Split {
    [Split::Test, Split::Validation]
        .into_iter()
        .find(|&s| data.has_split(s))
        .unwrap_or(Split::Train)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub dataset: String,
    pub topology: Vec<String>,
    pub seed: u64,
    pub w: usize,
    pub u: usize,
    pub q: usize,
    pub evaluation_split: Split,
    pub train_loss: Vec<f64>,
    pub baseline_error: f64,
    pub lut_error: f64,
    pub reinterpret: ReinterpretReport,
    pub sim: crate::sim::SimReport,
    pub train_seconds: f64,
    pub compose_seconds: f64,
    pub simulate_seconds: f64,
}

/// Runs every stage and writes the artifacts.
pub fn run(cfg: &ExperimentConfig) -> Result<RunSummary> {
    let data = load_data(cfg)?;
    let t = Instant::now();
    let trained = train_stage(cfg, &data)?;
    let train_seconds = t.elapsed().as_secs_f64();
    fs::create_dir_all(&cfg.output.dir)
        .map_err(Error::file(&cfg.output.dir))
        .and_then(|_| nn::save_model(&trained.network, &cfg.output.dir.join("model.bin")))
        .map_err(|e| e.in_stage("output"))?;
    let summary = run_trained(cfg, &data, &trained.network, trained.loss_curve, train_seconds)?;
    if cfg.sweep.in_run {
        let rows = super::sweep(cfg, &trained.network, &data)?;
        let path = cfg.output.dir.join("sweep.csv");
        fs::write(&path, super::sweep_csv(&rows))
            .map_err(Error::file(&path))
            .map_err(|e| e.in_stage("output"))?;
    }
    Ok(summary)
}

/// Composes and simulates an already trained network.
pub fn run_trained(cfg: &ExperimentConfig, data: &Dataset, net: &Network, train_loss: Vec<f64>, train_seconds: f64) -> Result<RunSummary> {
    let split = held_out_split(data);
    let baseline_error = nn::train::evaluate_split(net, data, split).map_err(|e| e.in_stage("train"))?;
    let t = Instant::now();
    let (rm, report) = compose_stage(cfg, net, data)?;
    let compose_seconds = t.elapsed().as_secs_f64();
    let lut_error = LutModel::new(&rm)
        .and_then(|m| m.error(data, split))
        .map_err(|e| e.in_stage("compose"))?;
    let t = Instant::now();
    let sim = simulate_stage(cfg, &rm, data)?;
    let simulate_seconds = t.elapsed().as_secs_f64();
    let summary = RunSummary {
        dataset: cfg.dataset.name(),
        topology: cfg.topology.layers.clone(),
        seed: cfg.compose.seed,
        w: cfg.compose.w,
        u: cfg.compose.u,
        q: cfg.compose.q,
        evaluation_split: split,
        train_loss,
        baseline_error,
        lut_error,
        reinterpret: report,
        sim: sim.report,
        train_seconds,
        compose_seconds,
        simulate_seconds,
    };
    write_artifacts(&cfg.output.dir, &rm, &summary).map_err(|e| e.in_stage("output"))?;
    Ok(summary)
}

fn write_artifacts(dir: &Path, rm: &ReinterpretedModel, s: &RunSummary) -> Result<()> {
    fs::create_dir_all(dir)?;
    save_reinterpreted(rm, &dir.join("model.lut"))?;
    fs::write(dir.join("reinterpret.json"), serde_json::to_string_pretty(&s.reinterpret)?)?;
    fs::write(dir.join("sim.csv"), s.sim.to_csv())?;
    fs::write(dir.join("sim.txt"), s.sim.to_text())?;
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(s)?)?;
    fs::write(dir.join("summary.md"), markdown_summary(s))?;
    Ok(())
}

/// Reads back the `summary.json` written by [`run`].
pub fn read_summary(dir: &Path) -> Result<RunSummary> {
    let path = dir.join("summary.json");
    let text = fs::read_to_string(&path).map_err(Error::file(&path))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(&path, format!("line {}", e.line()), e.to_string()))
}
