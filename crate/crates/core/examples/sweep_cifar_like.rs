//! Median accuracy loss over three composer seeds for a grid of codebook sizes.

use lutnn::experiment::{median_delta_e, sweep, sweep_csv, DatasetKind, ExperimentConfig};
use lutnn::nn::{self, build_topology, Network};

fn main() -> lutnn::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.dataset.kind = DatasetKind::CifarLike;
    cfg.dataset.train = 3000;
    cfg.dataset.validation = 1000;
    cfg.dataset.test = 500;
    cfg.topology.layers = ["conv:8:3:relu", "pool:max:2", "fc:32:relu", "fc:10:softmax"].map(String::from).to_vec();
    cfg.train.epochs = 20;
    cfg.train.learning_rate = 0.02;
    cfg.train.dropout_rate = 0.0;
    cfg.compose.epsilon = f64::INFINITY;
    cfg.compose.sample_fraction = 0.1;
    cfg.sweep.w = vec![4, 16, 64];
    cfg.sweep.u = vec![4, 16];
    cfg.output.dir = std::env::temp_dir().join("lutnn-sweep");

    let data = cfg.dataset.load()?;
    let net = Network::new(build_topology(vec![3, 8, 8], &cfg.topology.layers)?, 1)?;
    let net = nn::train(&net, &data, &cfg.train)?.network;
    let rows = sweep(&cfg, &net, &data)?;
    for ((w, u, _), m) in median_delta_e(&rows) {
        println!("w = {w:>2}, u = {u:>2}: median delta_e {m:+.4}");
    }
    std::fs::write(cfg.output.dir.join("sweep.csv"), sweep_csv(&rows))?;
    println!("rows in {}", cfg.output.dir.join("sweep.csv").display());
    Ok(())
}
