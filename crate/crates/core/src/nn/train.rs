//! Minibatch SGD with momentum, dropout on hidden fully connected layers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{shuffled, Dataset, Split};
use super::layers::{self, ActivationKind};
use super::{predict, predicted_class, LayerKind, Network};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub dropout_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Multiplies the learning rate after every epoch.
    pub lr_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            momentum: 0.9,
            epochs: 10,
            dropout_rate: 0.5,
            batch_size: 128,
            seed: 1,
            lr_decay: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidConfig(format!("dropout_rate {} not in [0, 1)", self.dropout_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig("momentum must be in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: Network,
    /// Mean training loss of each epoch.
    pub loss_curve: Vec<f64>,
}

/// Trains on the training split of `data`. Zero epochs returns the network unchanged.
pub fn train(net: &Network, data: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let train_idx = data.indices_of(Split::Train);
    if train_idx.is_empty() {
        return Err(Error::InvalidDataset("no training split".into()));
    }
    net.check_batch(&data.samples)?;
    let mut net = net.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut velocity: Vec<Option<(Vec<f64>, Vec<f64>)>> = net
        .layers
        .iter()
        .enumerate()
        .map(|(i, _)| Some((vec![0.0; net.weight(i)?.len()], vec![0.0; net.bias(i)?.len()])))
        .collect();
    let mut lr = cfg.learning_rate;
    let mut loss_curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let order = shuffled(train_idx.len(), &mut rng);
        let mut total = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let idx: Vec<usize> = chunk.iter().map(|&k| train_idx[k]).collect();
            let loss = step(&mut net, data, &idx, cfg, lr, &mut velocity, &mut rng);
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, batch: b, loss });
            }
            total += loss * idx.len() as f64;
        }
        loss_curve.push(total / train_idx.len() as f64);
        log::debug!("epoch {epoch}: loss {:.5}", loss_curve[epoch]);
        lr *= cfg.lr_decay;
    }
    Ok(TrainOutcome { network: net, loss_curve })
}

struct LayerTrace {
    input: Vec<f64>,
    pre: Vec<f64>,
    post: Vec<f64>,
    mask: Option<Vec<f64>>,
    pool_arg: Vec<usize>,
}

/// One minibatch update; returns the mean loss of the batch before the update.
fn step(
    net: &mut Network,
    data: &Dataset,
    idx: &[usize],
    cfg: &TrainConfig,
    lr: f64,
    velocity: &mut [Option<(Vec<f64>, Vec<f64>)>],
    rng: &mut ChaCha8Rng,
) -> f64 {
    let n = idx.len();
    let last = net.layers.len() - 1;
    let mut x = data.samples.select(idx).into_data();
    let mut traces: Vec<Option<LayerTrace>> = vec![None];
    for (i, layer) in net.layers.iter().enumerate().skip(1) {
        let mut pool_arg = Vec::new();
        let pre = match layer.kind {
            LayerKind::FullyConnected => layers::dense_forward(&x, n, layer.in_len(), net.weight(i).unwrap(), net.bias(i).unwrap()),
            LayerKind::Convolution => layers::conv_forward(&x, n, &layer.conv_geometry(), net.weight(i).unwrap(), net.bias(i).unwrap()),
            LayerKind::Pooling => {
                let (y, arg) = layers::pool_forward(&x, n, &layer.pool_geometry(), layer.pool_mode.unwrap());
                pool_arg = arg;
                y
            }
            LayerKind::Input => unreachable!("input layer only at index 0"),
        };
        let post = layers::apply_activation(layer.activation, &pre, layer.out_len());
        let mask = (layer.kind == LayerKind::FullyConnected && i < last && cfg.dropout_rate > 0.0).then(|| {
            let keep = 1.0 - cfg.dropout_rate;
            (0..post.len())
                .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
                .collect::<Vec<f64>>()
        });
        let next = match &mask {
            Some(m) => post.iter().zip(m).map(|(z, m)| z * m).collect(),
            None => post.clone(),
        };
        traces.push(Some(LayerTrace {
            input: std::mem::replace(&mut x, next),
            pre,
            post,
            mask,
            pool_arg,
        }));
    }

    // Loss and gradient with respect to the last pre-activation.
    let out_layer = &net.layers[last];
    let width = out_layer.out_len();
    let trace = traces[last].as_ref().unwrap();
    let mut grad = vec![0.0; n * width];
    let mut loss = 0.0;
    for s in 0..n {
        let label = data.labels[idx[s]];
        let z = &trace.post[s * width..(s + 1) * width];
        let g = &mut grad[s * width..(s + 1) * width];
        for k in 0..width {
            let target = if width == 1 { label as f64 } else { f64::from(u8::from(k == label)) };
            match out_layer.activation {
                ActivationKind::Softmax => {
                    if k == label {
                        loss -= z[k].max(1e-300).ln();
                    }
                    g[k] = z[k] - target;
                }
                ActivationKind::Sigmoid => {
                    let p = z[k].clamp(1e-15, 1.0 - 1e-15);
                    loss -= target * p.ln() + (1.0 - target) * (1.0 - p).ln();
                    g[k] = z[k] - target;
                }
                _ => {
                    let d = z[k] - target;
                    loss += 0.5 * d * d;
                    g[k] = d;
                }
            }
        }
    }
    if !matches!(out_layer.activation, ActivationKind::Softmax | ActivationKind::Sigmoid) {
        layers::activation_backward(out_layer.activation, &trace.pre, &trace.post, &mut grad);
    }
    let inv = 1.0 / n as f64;
    grad.iter_mut().for_each(|g| *g *= inv);

    for i in (1..=last).rev() {
        let layer = net.layers[i].clone();
        let trace = traces[i].take().unwrap();
        if i != last {
            if let Some(mask) = &trace.mask {
                grad.iter_mut().zip(mask).for_each(|(g, m)| *g *= m);
            }
            layers::activation_backward(layer.activation, &trace.pre, &trace.post, &mut grad);
        }
        let need_dx = i > 1;
        let dx = match layer.kind {
            LayerKind::FullyConnected | LayerKind::Convolution => {
                let w = net.weight(i).unwrap();
                let (dw, db, dx) = if layer.kind == LayerKind::FullyConnected {
                    layers::dense_backward(&trace.input, &grad, n, layer.in_len(), w, need_dx)
                } else {
                    layers::conv_backward(&trace.input, &grad, n, &layer.conv_geometry(), w, need_dx)
                };
                let (vw, vb) = velocity[i].as_mut().unwrap();
                apply_update(net.weights[i].as_mut().unwrap().data_mut(), vw, &dw, lr, cfg.momentum);
                apply_update(net.biases[i].as_mut().unwrap().data_mut(), vb, &db, lr, cfg.momentum);
                dx
            }
            LayerKind::Pooling => {
                need_dx.then(|| layers::pool_backward(&grad, &trace.pool_arg, n, &layer.pool_geometry(), layer.pool_mode.unwrap()))
            }
            LayerKind::Input => None,
        };
        match dx {
            Some(dx) => grad = dx,
            None => break,
        }
    }
    loss * inv
}

fn apply_update(param: &mut [f64], velocity: &mut [f64], grad: &[f64], lr: f64, momentum: f64) {
    for ((p, v), g) in param.iter_mut().zip(velocity.iter_mut()).zip(grad) {
        *v = momentum * *v - lr * g;
        *p += *v;
    }
}

/// Fraction of misclassified samples in `data` (all splits it contains).
pub fn evaluate(net: &Network, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InvalidDataset("cannot evaluate on an empty split".into()));
    }
    let scores = predict(net, &data.samples)?;
    let wrong = (0..data.len())
        .filter(|&i| predicted_class(scores.item(i)) != data.labels[i])
        .count();
    Ok(wrong as f64 / data.len() as f64)
}

/// Error rate restricted to one split.
pub fn evaluate_split(net: &Network, data: &Dataset, split: Split) -> Result<f64> {
    evaluate(net, &data.subset(split))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::dataset::xor;
    use crate::nn::{build_topology, LayerSpec};
    use crate::tensor::Tensor;

    fn xor_net(seed: u64) -> Network {
        let layers = build_topology(vec![2], &["fc:4:sigmoid", "fc:1:sigmoid"].map(String::from)).unwrap();
        Network::new(layers, seed).unwrap()
    }

    fn xor_cfg() -> TrainConfig {
        TrainConfig {
            learning_rate: 0.5,
            momentum: 0.9,
            epochs: 2000,
            dropout_rate: 0.0,
            batch_size: 4,
            seed: 7,
            lr_decay: 1.0,
        }
    }

    #[test]
    fn xor_is_learned_exactly() {
        let data = xor();
        let out = train(&xor_net(3), &data, &xor_cfg()).unwrap();
        // Exhaustive truth-table check over all four inputs.
        for (i, (a, b)) in [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)].into_iter().enumerate() {
            let x = Tensor::new(vec![1, 2], vec![a, b]).unwrap();
            let s = predict(&out.network, &x).unwrap();
            assert_eq!(predicted_class(s.data()), data.labels[i], "input ({a}, {b})");
        }
        assert_eq!(evaluate(&out.network, &data).unwrap(), 0.0);
        assert!(out.loss_curve.last().unwrap() < &out.loss_curve[0]);
    }

    #[test]
    fn zero_epochs_is_a_no_op() {
        let net = xor_net(1);
        let cfg = TrainConfig { epochs: 0, ..xor_cfg() };
        let out = train(&net, &xor(), &cfg).unwrap();
        assert_eq!(out.network, net);
        assert!(out.loss_curve.is_empty());
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = TrainConfig { epochs: 20, dropout_rate: 0.3, ..xor_cfg() };
        let layers = build_topology(vec![2], &["fc:8:relu", "fc:2:softmax"].map(String::from)).unwrap();
        let net = Network::new(layers, 5).unwrap();
        let a = train(&net, &xor(), &cfg).unwrap();
        let b = train(&net, &xor(), &cfg).unwrap();
        assert_eq!(a.network, b.network);
        assert_eq!(a.loss_curve, b.loss_curve);
    }

    #[test]
    fn divergence_is_reported() {
        let cfg = TrainConfig {
            learning_rate: 1e6,
            momentum: 0.0,
            epochs: 50,
            ..xor_cfg()
        };
        let layers = build_topology(vec![2], &["fc:4:none", "fc:1:none"].map(String::from)).unwrap();
        let err = train(&Network::new(layers, 2).unwrap(), &xor(), &cfg).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }), "{err}");
    }

    #[test]
    fn error_rate_bounds() {
        let net = Network::from_parts(
            vec![LayerSpec::input(vec![1]), LayerSpec::dense(vec![1], 2, ActivationKind::None)],
            vec![None, Some(Tensor::new(vec![2, 1], vec![1.0, -1.0]).unwrap())],
            vec![None, Some(Tensor::zeros(vec![2]))],
        )
        .unwrap();
        // x > 0 -> class 0, x < 0 -> class 1
        let samples = Tensor::new(vec![2, 1], vec![1.0, -1.0]).unwrap();
        let right = Dataset::new(samples.clone(), vec![0, 1], vec![Split::Test; 2], 2).unwrap();
        let wrong = Dataset::new(samples, vec![1, 0], vec![Split::Test; 2], 2).unwrap();
        assert_eq!(evaluate(&net, &right).unwrap(), 0.0);
        assert_eq!(evaluate(&net, &wrong).unwrap(), 1.0);
        assert!(evaluate(&net, &right.subset(Split::Train)).is_err());
    }

    #[test]
    fn rejects_bad_dropout() {
        let cfg = TrainConfig { dropout_rate: 1.0, ..TrainConfig::default() };
        assert!(train(&xor_net(0), &xor(), &cfg).is_err());
    }
}
