//! Builds a 16-row sigmoid table from observed pre-activations and compares it with the
//! exact function.

use lutnn::composer::quantize_activation;
use lutnn::nn::ActivationKind;

fn main() -> lutnn::Result<()> {
    let observed: Vec<f64> = (0..2000).map(|i| ((i as f64) * 0.37).sin() * 4.0).collect();
    let lut = quantize_activation(ActivationKind::Sigmoid, 16, &observed)?.quantized(16);
    println!("{} rows over [{:.3}, {:.3}]", lut.len(), lut.lower(), lut.upper());
    for (y, z) in lut.points().iter().zip(lut.outputs()) {
        println!("  y {y:+.4} -> z {z:.4}");
    }
    let worst = (-600..=600)
        .map(|i| i as f64 / 100.0)
        .map(|y| (lut.lookup(y) - ActivationKind::Sigmoid.eval(y)).abs())
        .fold(0.0, f64::max);
    println!("max error on [-6, 6]: {worst:.4}");
    Ok(())
}
