//! The lookup path and the snap-to-codebook float oracle pick the same class across
//! activations, pooling modes and codebook sizes.

use lutnn::composer::{compose, snapped_forward, ComposeConfig};
use lutnn::lut::LutModel;
use lutnn::nn::{build_topology, dataset, Network};
use lutnn::sim::{simulate, RnaCostModel, SimOptions};

fn check(topology: &[&str], w: usize, u: usize, q: usize, relu_comparator: bool) {
    let data = dataset::cifar_like(300, 50, 200, 11);
    let topo: Vec<String> = topology.iter().map(|s| s.to_string()).collect();
    let net = Network::new(build_topology(vec![3, 8, 8], &topo).unwrap(), 2).unwrap();
    let cfg = ComposeConfig {
        w,
        u,
        q,
        relu_comparator,
        sample_fraction: 0.5,
        ..Default::default()
    };
    let rm = compose(&net, &data, &cfg).unwrap();
    let lut = LutModel::new(&rm).unwrap().predict(&data.samples).unwrap();
    let oracle = snapped_forward(&rm, &data.samples).unwrap();
    let mismatches = lut
        .argmax_rows()
        .iter()
        .zip(oracle.argmax_rows())
        .filter(|(a, b)| **a != *b)
        .count();
    assert_eq!(mismatches, 0, "{topology:?} w={w} u={u} q={q}");
    // Rounding Y can move a value across an encoding boundary, after which the scores of
    // that sample differ by a whole step. That must stay rare.
    let k = rm.num_outputs();
    let far = lut
        .data()
        .chunks(k)
        .zip(oracle.data().chunks(k))
        .filter(|(a, b)| a.iter().zip(*b).any(|(x, y)| (x - y).abs() > 1e-3))
        .count();
    assert!(far * 100 <= data.len(), "{topology:?}: {far} of {} samples differ", data.len());

    let sim = simulate(&rm, &data.select(&[0, 1, 2, 3]), &RnaCostModel::default(), SimOptions::default()).unwrap();
    for (a, b) in sim.scores.data().iter().zip(lut.data()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

#[test]
fn dense_relu() {
    check(&["fc:20:relu", "fc:10:softmax"], 16, 16, 32, false);
    check(&["fc:20:relu", "fc:10:softmax"], 16, 16, 32, true);
}

#[test]
fn dense_sigmoid_softsign() {
    check(&["fc:20:sigmoid", "fc:12:softsign", "fc:10:softmax"], 8, 32, 64, false);
}

#[test]
fn conv_with_each_pool() {
    for pool in ["pool:max:2", "pool:min:2", "pool:avg:2"] {
        check(&["conv:4:3:relu", pool, "fc:10:softmax"], 8, 8, 16, false);
    }
}

#[test]
fn stacked_convolutions_and_linear_head() {
    check(&["conv:3:3:softsign", "conv:4:3:relu", "pool:avg:2", "fc:10:none"], 4, 16, 8, false);
}

#[test]
fn tiny_codebooks() {
    check(&["fc:6:sigmoid", "fc:10:softmax"], 2, 2, 2, false);
}
