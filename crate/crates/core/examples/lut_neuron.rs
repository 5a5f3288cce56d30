//! One neuron computed the lookup way: encode, count, sum table entries, activate, re-encode.

use lutnn::composer::{ActivationStage, Codebook, ProductTable};
use lutnn::lut::{from_fixed, neuron_forward, FixedActivation, FixedCodebook, FixedTable};

fn main() -> lutnn::Result<()> {
    let weights = Codebook::new(vec![-0.5, -0.125, 0.25, 0.75])?;
    let inputs = Codebook::new(vec![0.0, 0.5, 1.0])?;
    let table = ProductTable::build(&weights, &inputs);
    println!("product table ({} x {}):", table.rows, table.cols);
    for i in 0..table.rows {
        let row: Vec<f64> = (0..table.cols).map(|j| table.get(i, j)).collect();
        println!("  {:+.3} * {:?} = {:?}", weights.decode(i as u32), inputs.centroids(), row);
    }

    let x = [0.9, 0.1, 0.6, 0.45, 1.2, 0.0];
    let w = [0.7, -0.4, 0.3, 0.2, -0.1, 0.8];
    let xc: Vec<u16> = x.iter().map(|&v| inputs.encode(v) as u16).collect();
    let wc: Vec<u16> = w.iter().map(|&v| weights.encode(v) as u16).collect();
    println!("input codes {xc:?}, weight codes {wc:?}");

    let out = neuron_forward(
        &xc,
        &wc,
        &FixedTable::new(&table),
        0.1,
        &FixedActivation::new(&ActivationStage::Comparator, 16),
        &FixedCodebook::new(&inputs, 16),
        16,
    )?;
    for i in 0..out.counts.rows {
        let row: Vec<u32> = (0..out.counts.cols).map(|j| out.counts.get(i, j)).collect();
        println!("  counts for weight code {i}: {row:?}");
    }
    let exact: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + 0.1;
    let snapped: f64 = x.iter().zip(&w).map(|(&a, &b)| inputs.snap(a) * weights.snap(b)).sum::<f64>() + 0.1;
    println!("Y = {:.5}, snapped operands {snapped:.5}, unquantized {exact:.5}", from_fixed(out.y, 16));
    println!("ReLU -> {:.5}, output code {}", from_fixed(out.z, 16), out.code);
    Ok(())
}
