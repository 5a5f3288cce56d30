//! Small dense/convolutional networks in 64-bit floating point.
//!
//! These are the full-precision baselines that the composer reinterprets.

pub mod dataset;
pub mod layers;
pub mod model_io;
pub mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use dataset::{Dataset, DatasetFormat, Split};
pub use layers::{ActivationKind, PoolMode};
pub use model_io::{load_model, save_model};
pub use train::{evaluate, train, TrainConfig, TrainOutcome};

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use layers::{ConvGeometry, PoolGeometry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Input,
    FullyConnected,
    Convolution,
    Pooling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_dims: Vec<usize>,
    pub out_dims: Vec<usize>,
    /// Side of the square convolution kernel.
    pub kernel: Option<usize>,
    pub pool_mode: Option<PoolMode>,
    pub activation: ActivationKind,
}

impl LayerSpec {
    pub fn input(dims: Vec<usize>) -> Self {
        Self {
            kind: LayerKind::Input,
            in_dims: dims.clone(),
            out_dims: dims,
            kernel: None,
            pool_mode: None,
            activation: ActivationKind::None,
        }
    }

    pub fn dense(in_dims: Vec<usize>, outputs: usize, activation: ActivationKind) -> Self {
        Self {
            kind: LayerKind::FullyConnected,
            in_dims,
            out_dims: vec![outputs],
            kernel: None,
            pool_mode: None,
            activation,
        }
    }

    /// Convolution over a `[channels, height, width]` input, stride 1, no padding.
    pub fn conv(in_dims: Vec<usize>, out_channels: usize, kernel: usize, activation: ActivationKind) -> Result<Self> {
        let [_, h, w] = chw(&in_dims)?;
        if kernel == 0 || kernel > h || kernel > w {
            return Err(Error::InvalidNetwork(format!("kernel {kernel} does not fit input {in_dims:?}")));
        }
        Ok(Self {
            kind: LayerKind::Convolution,
            out_dims: vec![out_channels, h + 1 - kernel, w + 1 - kernel],
            in_dims,
            kernel: Some(kernel),
            pool_mode: None,
            activation,
        })
    }

    /// Non-overlapping square pooling over a `[channels, height, width]` input.
    pub fn pool(in_dims: Vec<usize>, window: usize, mode: PoolMode) -> Result<Self> {
        let [c, h, w] = chw(&in_dims)?;
        if window == 0 || h % window != 0 || w % window != 0 {
            return Err(Error::InvalidNetwork(format!("pool window {window} does not tile input {in_dims:?}")));
        }
        Ok(Self {
            kind: LayerKind::Pooling,
            out_dims: vec![c, h / window, w / window],
            in_dims,
            kernel: None,
            pool_mode: Some(mode),
            activation: ActivationKind::None,
        })
    }

    pub fn in_len(&self) -> usize {
        self.in_dims.iter().product()
    }

    pub fn out_len(&self) -> usize {
        self.out_dims.iter().product()
    }

    pub fn has_weights(&self) -> bool {
        matches!(self.kind, LayerKind::FullyConnected | LayerKind::Convolution)
    }

    /// Shape of the weight tensor: `[out, in]` for dense, `[M, N, h, h]` for convolution.
    pub fn weight_shape(&self) -> Option<Vec<usize>> {
        match self.kind {
            LayerKind::FullyConnected => Some(vec![self.out_len(), self.in_len()]),
            LayerKind::Convolution => {
                let k = self.kernel?;
                Some(vec![self.out_dims[0], self.in_dims[0], k, k])
            }
            _ => None,
        }
    }

    pub fn bias_len(&self) -> Option<usize> {
        match self.kind {
            LayerKind::FullyConnected => Some(self.out_len()),
            LayerKind::Convolution => Some(self.out_dims[0]),
            _ => None,
        }
    }

    /// Number of incoming edges per output neuron.
    pub fn fan_in(&self) -> usize {
        match self.kind {
            LayerKind::FullyConnected => self.in_len(),
            LayerKind::Convolution => {
                let k = self.kernel.unwrap_or(0);
                self.in_dims[0] * k * k
            }
            LayerKind::Pooling => {
                let w = self.pool_window();
                w * w
            }
            LayerKind::Input => 0,
        }
    }

    pub fn pool_window(&self) -> usize {
        match self.kind {
            LayerKind::Pooling => self.in_dims[1] / self.out_dims[1],
            _ => 1,
        }
    }

    pub(crate) fn conv_geometry(&self) -> ConvGeometry {
        ConvGeometry {
            in_channels: self.in_dims[0],
            in_h: self.in_dims[1],
            in_w: self.in_dims[2],
            out_channels: self.out_dims[0],
            kernel: self.kernel.unwrap_or(1),
        }
    }

    pub(crate) fn pool_geometry(&self) -> PoolGeometry {
        PoolGeometry {
            channels: self.in_dims[0],
            in_h: self.in_dims[1],
            in_w: self.in_dims[2],
            window: self.pool_window(),
        }
    }

    fn validate(&self, index: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidNetwork(format!("layer {index}: {msg}")));
        if self.kernel.is_some() != (self.kind == LayerKind::Convolution) {
            return bad("kernel must be set exactly for convolution layers".into());
        }
        if self.pool_mode.is_some() != (self.kind == LayerKind::Pooling) {
            return bad("pool mode must be set exactly for pooling layers".into());
        }
        if self.in_len() == 0 || self.out_len() == 0 {
            return bad("empty dimensions".into());
        }
        match self.kind {
            LayerKind::Input if self.in_dims != self.out_dims => bad("input layer must not reshape".into()),
            LayerKind::Convolution => {
                let k = self.kernel.unwrap_or(0);
                let expected = LayerSpec::conv(self.in_dims.clone(), self.out_dims[0], k, self.activation)?;
                if expected.out_dims != self.out_dims {
                    return bad(format!("convolution output {:?} should be {:?}", self.out_dims, expected.out_dims));
                }
                Ok(())
            }
            LayerKind::Pooling => {
                if self.out_dims.len() != 3 || self.out_dims[1] == 0 {
                    return bad("pooling output must be [channels, height, width]".into());
                }
                let expected = LayerSpec::pool(self.in_dims.clone(), self.pool_window(), self.pool_mode.unwrap())?;
                if expected.out_dims != self.out_dims {
                    return bad("pooling must preserve channels and tile the input".into());
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

fn chw(dims: &[usize]) -> Result<[usize; 3]> {
    match dims {
        &[c, h, w] => Ok([c, h, w]),
        _ => Err(Error::InvalidNetwork(format!("expected [channels, height, width], got {dims:?}"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub layers: Vec<LayerSpec>,
    /// One entry per layer; `None` for layers without parameters.
    pub weights: Vec<Option<Tensor>>,
    pub biases: Vec<Option<Tensor>>,
}

impl Network {
    /// Creates a network with seeded uniform weights scaled by fan-in and zero biases.
    pub fn new(layers: Vec<LayerSpec>, seed: u64) -> Result<Self> {
        validate_layers(&layers)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(layers.len());
        let mut biases = Vec::with_capacity(layers.len());
        for layer in &layers {
            match (layer.weight_shape(), layer.bias_len()) {
                (Some(shape), Some(nb)) => {
                    let limit = (6.0 / layer.fan_in() as f64).sqrt();
                    let n: usize = shape.iter().product();
                    let data = (0..n).map(|_| rng.gen_range(-limit..limit)).collect();
                    weights.push(Some(Tensor::from_parts(shape, data)));
                    biases.push(Some(Tensor::zeros(vec![nb])));
                }
                _ => {
                    weights.push(None);
                    biases.push(None);
                }
            }
        }
        Ok(Self { layers, weights, biases })
    }

    pub fn from_parts(layers: Vec<LayerSpec>, weights: Vec<Option<Tensor>>, biases: Vec<Option<Tensor>>) -> Result<Self> {
        validate_layers(&layers)?;
        if weights.len() != layers.len() || biases.len() != layers.len() {
            return Err(Error::InvalidNetwork("one weight and bias slot per layer required".into()));
        }
        for (i, layer) in layers.iter().enumerate() {
            let check = |t: &Option<Tensor>, shape: Option<Vec<usize>>, what: &str| -> Result<()> {
                match (t, shape) {
                    (Some(t), Some(s)) if t.shape() == s.as_slice() => Ok(()),
                    (None, None) => Ok(()),
                    (t, s) => Err(Error::InvalidNetwork(format!(
                        "layer {i}: {what} shape {:?} does not match layer spec {:?}",
                        t.as_ref().map(|t| t.shape().to_vec()),
                        s
                    ))),
                }
            };
            check(&weights[i], layer.weight_shape(), "weight")?;
            check(&biases[i], layer.bias_len().map(|n| vec![n]), "bias")?;
        }
        Ok(Self { layers, weights, biases })
    }

    pub fn input_dims(&self) -> &[usize] {
        &self.layers[0].out_dims
    }

    pub fn num_classes(&self) -> usize {
        self.layers.last().map(LayerSpec::out_len).unwrap_or(0)
    }

    pub fn weight(&self, layer: usize) -> Option<&[f64]> {
        self.weights.get(layer)?.as_ref().map(Tensor::data)
    }

    pub fn bias(&self, layer: usize) -> Option<&[f64]> {
        self.biases.get(layer)?.as_ref().map(Tensor::data)
    }

    /// Checks that `batch` is `[n, input dims...]` or `[n, flattened input]`.
    pub fn check_batch(&self, batch: &Tensor) -> Result<usize> {
        let dims = self.input_dims();
        let ok = batch.shape().len() >= 2
            && (batch.shape()[1..] == *dims || batch.item_len() == dims.iter().product::<usize>() && batch.shape().len() == 2);
        if !ok {
            let mut expected = vec![batch.batch_len()];
            expected.extend_from_slice(dims);
            return Err(Error::ShapeMismatch {
                expected,
                actual: batch.shape().to_vec(),
            });
        }
        Ok(batch.batch_len())
    }
}

fn validate_layers(layers: &[LayerSpec]) -> Result<()> {
    if layers.is_empty() {
        return Err(Error::InvalidNetwork("network has no layers".into()));
    }
    if layers[0].kind != LayerKind::Input {
        return Err(Error::InvalidNetwork("first layer must be the input layer".into()));
    }
    for (i, layer) in layers.iter().enumerate() {
        layer.validate(i)?;
        if i > 0 {
            if layer.kind == LayerKind::Input {
                return Err(Error::InvalidNetwork(format!("layer {i}: input layer only allowed first")));
            }
            let prev = &layers[i - 1];
            let chained = if layer.kind == LayerKind::FullyConnected {
                layer.in_len() == prev.out_len()
            } else {
                layer.in_dims == prev.out_dims
            };
            if !chained {
                return Err(Error::InvalidNetwork(format!(
                    "layer {i}: input {:?} does not match previous output {:?}",
                    layer.in_dims, prev.out_dims
                )));
            }
        }
    }
    Ok(())
}

/// Pre-activations (weighted sums) and outputs of every layer for one batch.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub pre: Vec<Tensor>,
    pub post: Vec<Tensor>,
}

impl ForwardPass {
    /// Outputs of the last layer.
    pub fn scores(&self) -> &Tensor {
        self.post.last().expect("at least the input layer")
    }
}

/// Runs the batch through every layer and keeps all intermediate activations.
pub fn forward(net: &Network, batch: &Tensor) -> Result<ForwardPass> {
    let n = net.check_batch(batch)?;
    let mut pre = Vec::with_capacity(net.layers.len());
    let mut post: Vec<Tensor> = Vec::with_capacity(net.layers.len());
    let input = batch_tensor(n, &net.layers[0].out_dims, batch.data().to_vec());
    pre.push(input.clone());
    post.push(input);
    for (i, layer) in net.layers.iter().enumerate().skip(1) {
        let x = post[i - 1].data();
        let (y, z) = layer_forward(net, i, layer, x, n);
        pre.push(batch_tensor(n, &layer.out_dims, y));
        post.push(batch_tensor(n, &layer.out_dims, z));
    }
    Ok(ForwardPass { pre, post })
}

/// Final-layer outputs only, computed in chunks to bound memory.
pub fn predict(net: &Network, batch: &Tensor) -> Result<Tensor> {
    let n = net.check_batch(batch)?;
    let width = net.num_classes();
    let mut out = Vec::with_capacity(n * width);
    let item = batch.item_len();
    for start in (0..n).step_by(512) {
        let end = (start + 512).min(n);
        let mut x = batch.data()[start * item..end * item].to_vec();
        for (i, layer) in net.layers.iter().enumerate().skip(1) {
            x = layer_forward(net, i, layer, &x, end - start).1;
        }
        out.extend(x);
    }
    Ok(Tensor::from_parts(vec![n, width], out))
}

fn layer_forward(net: &Network, i: usize, layer: &LayerSpec, x: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let y = match layer.kind {
        LayerKind::FullyConnected => {
            dense_forward_layer(x, n, layer, net.weight(i).unwrap(), net.bias(i).unwrap())
        }
        LayerKind::Convolution => {
            layers::conv_forward(x, n, &layer.conv_geometry(), net.weight(i).unwrap(), net.bias(i).unwrap())
        }
        LayerKind::Pooling => layers::pool_forward(x, n, &layer.pool_geometry(), layer.pool_mode.unwrap()).0,
        LayerKind::Input => x.to_vec(),
    };
    let z = layers::apply_activation(layer.activation, &y, layer.out_len());
    (y, z)
}

fn dense_forward_layer(x: &[f64], n: usize, layer: &LayerSpec, w: &[f64], b: &[f64]) -> Vec<f64> {
    layers::dense_forward(x, n, layer.in_len(), w, b)
}

fn batch_tensor(n: usize, dims: &[usize], data: Vec<f64>) -> Tensor {
    let mut shape = vec![n];
    shape.extend_from_slice(dims);
    Tensor::from_parts(shape, data)
}

/// Predicted class for one row of scores. A single output is read as a probability of class 1.
pub fn predicted_class(scores: &[f64]) -> usize {
    if scores.len() == 1 {
        usize::from(scores[0] > 0.5)
    } else {
        crate::tensor::argmax(scores)
    }
}

/// Builds a sequential topology from `in_dims` and a compact layer list such as
/// `["fc:512:relu", "conv:8:3:relu", "pool:max:2", "fc:10:softmax"]`.
pub fn build_topology(in_dims: Vec<usize>, layers: &[String]) -> Result<Vec<LayerSpec>> {
    let mut specs = vec![LayerSpec::input(in_dims)];
    for text in layers {
        let prev = specs.last().unwrap().out_dims.clone();
        let parts: Vec<&str> = text.split(':').map(str::trim).collect();
        let bad = || Error::InvalidConfig(format!("cannot parse layer `{text}`"));
        let num = |s: &str| s.parse::<usize>().map_err(|_| bad());
        let act = |s: Option<&&str>| -> Result<ActivationKind> {
            Ok(match s.copied().unwrap_or("none") {
                "relu" => ActivationKind::Relu,
                "sigmoid" => ActivationKind::Sigmoid,
                "softsign" => ActivationKind::Softsign,
                "softmax" => ActivationKind::Softmax,
                "none" => ActivationKind::None,
                _ => return Err(bad()),
            })
        };
        let spec = match parts.first().copied() {
            Some("fc") if parts.len() >= 2 => LayerSpec::dense(prev, num(parts[1])?, act(parts.get(2))?),
            Some("conv") if parts.len() >= 3 => LayerSpec::conv(prev, num(parts[1])?, num(parts[2])?, act(parts.get(3))?)?,
            Some("pool") if parts.len() == 3 => {
                let mode = match parts[1] {
                    "max" => PoolMode::Max,
                    "min" => PoolMode::Min,
                    "avg" => PoolMode::Avg,
                    _ => return Err(bad()),
                };
                LayerSpec::pool(prev, num(parts[2])?, mode)?
            }
            _ => return Err(bad()),
        };
        specs.push(spec);
    }
    validate_layers(&specs)?;
    Ok(specs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_neuron(weight: f64, activation: ActivationKind) -> Network {
        let layers = vec![LayerSpec::input(vec![1]), LayerSpec::dense(vec![1], 1, activation)];
        Network::from_parts(
            layers,
            vec![None, Some(Tensor::new(vec![1, 1], vec![weight]).unwrap())],
            vec![None, Some(Tensor::zeros(vec![1]))],
        )
        .unwrap()
    }

    #[test]
    fn relu_clips_negative_input() {
        let net = single_neuron(1.0, ActivationKind::Relu);
        let out = forward(&net, &Tensor::new(vec![1, 1], vec![-3.0]).unwrap()).unwrap();
        assert_eq!(out.scores().data(), &[0.0]);
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let n = 4;
        let mut eye = vec![0.0; n * n];
        for i in 0..n {
            eye[i * n + i] = 1.0;
        }
        let net = Network::from_parts(
            vec![LayerSpec::input(vec![n]), LayerSpec::dense(vec![n], n, ActivationKind::None)],
            vec![None, Some(Tensor::new(vec![n, n], eye).unwrap())],
            vec![None, Some(Tensor::zeros(vec![n]))],
        )
        .unwrap();
        let x = vec![0.3, -7.25, 1e-3, 42.0];
        let out = forward(&net, &Tensor::new(vec![1, n], x.clone()).unwrap()).unwrap();
        assert_eq!(out.scores().data(), x.as_slice());
    }

    #[test]
    fn max_pool_network_layer() {
        let layers = vec![
            LayerSpec::input(vec![1, 2, 2]),
            LayerSpec::pool(vec![1, 2, 2], 2, PoolMode::Max).unwrap(),
        ];
        let net = Network::new(layers, 0).unwrap();
        let out = forward(&net, &Tensor::new(vec![1, 1, 2, 2], vec![1.0, 5.0, 2.0, 3.0]).unwrap()).unwrap();
        assert_eq!(out.scores().data(), &[5.0]);
    }

    #[test]
    fn rejects_mismatched_batch() {
        let net = single_neuron(1.0, ActivationKind::None);
        assert!(matches!(
            forward(&net, &Tensor::new(vec![1, 2], vec![0.0, 0.0]).unwrap()),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn rejects_broken_chain() {
        let layers = vec![LayerSpec::input(vec![3]), LayerSpec::dense(vec![4], 2, ActivationKind::None)];
        assert!(Network::new(layers, 0).is_err());
    }

    #[test]
    fn kernel_only_on_convolution() {
        let mut fc = LayerSpec::dense(vec![3], 2, ActivationKind::None);
        fc.kernel = Some(3);
        assert!(Network::new(vec![LayerSpec::input(vec![3]), fc], 0).is_err());
    }

    #[test]
    fn topology_strings() {
        let specs = build_topology(
            vec![3, 8, 8],
            &["conv:8:3:relu", "pool:max:2", "fc:32:relu", "fc:10:softmax"].map(String::from),
        )
        .unwrap();
        assert_eq!(specs[1].out_dims, vec![8, 6, 6]);
        assert_eq!(specs[2].out_dims, vec![8, 3, 3]);
        assert_eq!(specs[3].in_len(), 72);
        assert!(build_topology(vec![4], &["fc:x".to_string()]).is_err());
    }

    #[test]
    fn forward_is_repeatable() {
        let layers = build_topology(vec![6], &["fc:5:sigmoid", "fc:3:softmax"].map(String::from)).unwrap();
        let net = Network::new(layers, 9).unwrap();
        let x = Tensor::new(vec![2, 6], (0..12).map(|i| i as f64 * 0.1).collect()).unwrap();
        let a = forward(&net, &x).unwrap();
        let b = forward(&net, &x).unwrap();
        assert_eq!(a.scores(), b.scores());
        assert_eq!(predict(&net, &x).unwrap().data(), a.scores().data());
    }
}
