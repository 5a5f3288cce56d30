//! Trains the 784-512-512-10 MLP on MNIST (or loads `out/mnist/model.bin`), composes it and
//! simulates 1000 test images.
//!
//! ```text
//! cargo run --release --example simulate_mnist [path/to/mnist]
//! ```

use std::path::PathBuf;

use lutnn::composer::{compose, ComposeConfig};
use lutnn::experiment::compare_reference;
use lutnn::nn::{self, build_topology, dataset, DatasetFormat, Network, Split, TrainConfig};
use lutnn::sim::{simulate, RnaCostModel, SimOptions};

fn main() -> lutnn::Result<()> {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(dataset::default_mnist_dir);
    let data = dataset::load_dataset(&dir, DatasetFormat::Idx)?.with_validation_tail(5000)?;
    let saved = dir.join("../../out/mnist/model.bin");
    let net = if saved.exists() {
        nn::load_model(&saved)?
    } else {
        let topo = ["fc:512:relu", "fc:512:relu", "fc:10:softmax"].map(String::from);
        let net = Network::new(build_topology(vec![784], &topo)?, 1)?;
        let cfg = TrainConfig {
            epochs: 15,
            lr_decay: 0.9,
            ..Default::default()
        };
        println!("training, this takes a few minutes");
        nn::train(&net, &data, &cfg)?.network
    };
    println!("float test error {:.4}", nn::train::evaluate_split(&net, &data, Split::Test)?);

    let rm = compose(&net, &data, &ComposeConfig::default())?;
    let idx: Vec<usize> = data.indices_of(Split::Test).into_iter().take(1000).collect();
    let r = simulate(&rm, &data.select(&idx), &RnaCostModel::default(), SimOptions::default())?;
    print!("{}", r.report.to_text());
    println!();
    print!("{}", compare_reference(&r.report));
    Ok(())
}
