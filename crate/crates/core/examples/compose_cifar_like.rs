//! Trains a small CNN on the synthetic CIFAR-like task, reinterprets it, saves the lookup
//! model and checks the file round trip.

use lutnn::composer::{load_reinterpreted, reinterpret, save_reinterpreted, ComposeConfig};
use lutnn::experiment::report_memory;
use lutnn::lut::LutModel;
use lutnn::nn::{self, build_topology, dataset, Network, Split, TrainConfig};

fn main() -> lutnn::Result<()> {
    let data = dataset::cifar_like(3000, 500, 500, 7);
    let topo = ["conv:8:3:relu", "pool:max:2", "fc:32:relu", "fc:10:softmax"].map(String::from);
    let net = Network::new(build_topology(vec![3, 8, 8], &topo)?, 1)?;
    let cfg = TrainConfig {
        epochs: 20,
        learning_rate: 0.02,
        dropout_rate: 0.0,
        ..Default::default()
    };
    let net = nn::train(&net, &data, &cfg)?.network;
    println!("float test error {:.4}", nn::train::evaluate_split(&net, &data, Split::Test)?);

    let compose = ComposeConfig {
        w: 16,
        u: 16,
        epsilon: 0.01,
        sample_fraction: 0.1,
        ..Default::default()
    };
    let (rm, report) = reinterpret(&net, &data, &compose)?;
    for (i, it) in report.iterations.iter().enumerate() {
        println!("iteration {}: validation error {:.4} (delta {:+.4})", i + 1, it.e_clustered, it.delta_e);
    }
    println!("lookup test error {:.4}", LutModel::new(&rm)?.error(&data, Split::Test)?);
    for l in report_memory(&rm).layers {
        println!("layer {}: {} bytes", l.layer, l.total());
    }

    let path = std::env::temp_dir().join("cifar_like.lut");
    save_reinterpreted(&rm, &path)?;
    assert_eq!(load_reinterpreted(&path)?, rm);
    println!("saved {}", path.display());
    Ok(())
}
