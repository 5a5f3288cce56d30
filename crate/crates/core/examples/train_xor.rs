//! Trains a 2-4-2 network on XOR and prints its predictions.

use lutnn::nn::{self, build_topology, dataset, predicted_class, Network, TrainConfig};

fn main() -> lutnn::Result<()> {
    let data = dataset::xor();
    let layers = build_topology(vec![2], &["fc:4:sigmoid".into(), "fc:2:softmax".into()])?;
    let net = Network::new(layers, 3)?;
    let cfg = TrainConfig {
        learning_rate: 0.5,
        momentum: 0.9,
        epochs: 2000,
        dropout_rate: 0.0,
        batch_size: 4,
        ..Default::default()
    };
    let out = nn::train(&net, &data, &cfg)?;
    println!("loss {:.4} -> {:.4}", out.loss_curve[0], out.loss_curve.last().unwrap());
    let scores = nn::predict(&out.network, &data.samples)?;
    for i in 0..data.len() {
        let x = data.samples.item(i);
        println!("{:?} -> {} (p = {:.3})", x, predicted_class(scores.item(i)), scores.item(i)[1]);
    }
    Ok(())
}
