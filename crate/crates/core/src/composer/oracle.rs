//! Floating-point reference for a reinterpreted model: weights and every layer input are
//! replaced by their codebook values, then the layer is computed in f64.

use rayon::prelude::*;

use super::model::{ReinterpretedModel, Stage};
use crate::error::{Error, Result};
use crate::nn::layers::{self, PoolMode};
use crate::nn::{predicted_class, Dataset, LayerKind, Split};
use crate::tensor::Tensor;

const CHUNK: usize = 256;

/// Final-layer scores for every item of `batch`.
pub fn snapped_forward(rm: &ReinterpretedModel, batch: &Tensor) -> Result<Tensor> {
    let item = rm.input_dims.iter().product::<usize>();
    if batch.shape().len() < 2 || batch.item_len() != item {
        let mut expected = vec![batch.batch_len()];
        expected.extend_from_slice(&rm.input_dims);
        return Err(Error::ShapeMismatch {
            expected,
            actual: batch.shape().to_vec(),
        });
    }
    let n = batch.batch_len();
    let width = rm.num_outputs();
    let chunks: Vec<Vec<f64>> = batch
        .data()
        .par_chunks(CHUNK * item)
        .map(|x| forward_chunk(rm, x, x.len() / item))
        .collect();
    Ok(Tensor::from_parts(vec![n, width], chunks.concat()))
}

fn forward_chunk(rm: &ReinterpretedModel, x: &[f64], n: usize) -> Vec<f64> {
    let cb = rm.virtual_layer();
    let mut x: Vec<f64> = x.iter().map(|&v| cb.snap(v)).collect();
    let last = rm.stages.len() - 1;
    for (i, s) in rm.stages.iter().enumerate() {
        let y = stage_sums(s, &x, n);
        x = if i == last {
            layers::apply_activation(s.spec.activation, &y, s.spec.out_len())
        } else if s.passes_codes() {
            y
        } else {
            let enc = s.encoding.as_ref().expect("hidden stage re-encodes");
            match &s.activation {
                Some(act) => y.iter().map(|&v| enc.snap(act.eval(v))).collect(),
                None => y.iter().map(|&v| enc.snap(v)).collect(),
            }
        };
    }
    x
}

/// Weighted sums (or pooled values) of one stage in floating point.
fn stage_sums(s: &Stage, x: &[f64], n: usize) -> Vec<f64> {
    match s.spec.kind {
        LayerKind::FullyConnected => {
            let wc = s.weights.as_ref().unwrap();
            layers::dense_forward(x, n, s.spec.in_len(), &wc.decoded(), &wc.bias)
        }
        LayerKind::Convolution => {
            let wc = s.weights.as_ref().unwrap();
            layers::conv_forward(x, n, &s.spec.conv_geometry(), &wc.decoded(), &wc.bias)
        }
        LayerKind::Pooling => {
            let g = s.spec.pool_geometry();
            match s.pool_mode().unwrap() {
                PoolMode::Avg => {
                    // The normalized weight 1/n times each input, as in the table.
                    let wc = s.weights.as_ref().unwrap();
                    let inv = wc.codebooks[0].decode(0);
                    let mut out = Vec::with_capacity(n * g.out_len());
                    for b in 0..n {
                        let xi = &x[b * g.in_len()..(b + 1) * g.in_len()];
                        for o in 0..g.out_len() {
                            out.push(g.window_offsets(o).map(|k| inv * xi[k]).sum());
                        }
                    }
                    out
                }
                mode => layers::pool_forward(x, n, &g, mode).0,
            }
        }
        LayerKind::Input => unreachable!("validated model has no input stage"),
    }
}

/// Classification error of the snapped model on one split.
pub fn snapped_error(rm: &ReinterpretedModel, data: &Dataset, split: Split) -> Result<f64> {
    let idx = data.indices_of(split);
    if idx.is_empty() {
        return Err(Error::InvalidDataset(format!("no samples in the {split:?} split")));
    }
    let scores = snapped_forward(rm, &data.samples.select(&idx))?;
    let wrong = idx
        .iter()
        .enumerate()
        .filter(|&(r, &i)| predicted_class(scores.item(r)) != data.labels[i])
        .count();
    Ok(wrong as f64 / idx.len() as f64)
}
