//! Clustering a trained network into a [`ReinterpretedModel`] and the
//! estimate/retrain loop around it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::activation::{quantize_activation, round_to_grid};
use super::codebook::Codebook;
use super::model::{ActivationStage, ModelParams, ProductTable, ReinterpretedModel, Stage, WeightCoding};
use super::oracle::snapped_error;
use super::tree::build_tree;
use crate::error::{Error, Result};
use crate::nn::dataset::shuffled;
use crate::nn::{self, ActivationKind, Dataset, LayerKind, Network, PoolMode, Split, TrainConfig};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComposeConfig {
    /// Weight centroids per codebook.
    pub w: usize,
    /// Input centroids per layer.
    pub u: usize,
    /// Activation table rows.
    pub q: usize,
    /// Accepted accuracy loss; `inf` accepts the first clustering.
    pub epsilon: f64,
    pub max_iters: usize,
    /// Share of the training split fed forward to collect layer inputs.
    pub sample_fraction: f64,
    pub retrain_epochs: usize,
    pub retrain_learning_rate: f64,
    pub tree_depth: usize,
    pub frac_bits: u32,
    /// Replace ReLU tables by an exact comparator.
    pub relu_comparator: bool,
    pub seed: u64,
}

impl Default for ComposeConfig {
    fn default() -> Self {
        Self {
            w: 64,
            u: 16,
            q: 64,
            epsilon: 0.0,
            max_iters: 5,
            sample_fraction: 0.02,
            retrain_epochs: 1,
            retrain_learning_rate: 0.01,
            tree_depth: 6,
            frac_bits: 16,
            relu_comparator: false,
            seed: 1,
        }
    }
}

impl ComposeConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(1..=16).contains(&self.tree_depth) {
            return bad(format!("tree_depth {} not in 1..=16", self.tree_depth));
        }
        for (name, v) in [("w", self.w), ("u", self.u)] {
            if !v.is_power_of_two() || v < 2 || v > 1 << self.tree_depth {
                return bad(format!("{name} = {v} must be a power of two in [2, 2^tree_depth]"));
            }
        }
        if !self.q.is_power_of_two() || self.q < 2 {
            return bad(format!("q = {} must be a power of two >= 2", self.q));
        }
        if !(self.sample_fraction > 0.0 && self.sample_fraction <= 1.0) {
            return bad(format!("sample_fraction {} not in (0, 1]", self.sample_fraction));
        }
        if self.epsilon.is_nan() || self.epsilon < 0.0 {
            return bad("epsilon must be >= 0".into());
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1".into());
        }
        if !(1..=30).contains(&self.frac_bits) {
            return bad(format!("frac_bits {} not in 1..=30", self.frac_bits));
        }
        Ok(())
    }

    fn params(&self) -> ModelParams {
        ModelParams {
            w: self.w,
            u: self.u,
            q: self.q,
            tree_depth: self.tree_depth,
            frac_bits: self.frac_bits,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub e_baseline: f64,
    pub e_clustered: f64,
    pub delta_e: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReinterpretReport {
    pub iterations: Vec<IterationRecord>,
    /// Index into `iterations` of the returned model.
    pub best_iteration: usize,
    /// False when every iteration missed the tolerance.
    pub converged: bool,
    pub memory_bytes: usize,
}

impl ReinterpretReport {
    pub fn best(&self) -> &IterationRecord {
        &self.iterations[self.best_iteration]
    }
}

/// Codebooks for the weights of one layer: one for a dense layer, one per output channel
/// for a convolution.
pub fn cluster_weights(net: &Network, layer: usize, w: usize, tree_depth: usize, seed: u64) -> Result<Vec<Codebook>> {
    let spec = net
        .layers
        .get(layer)
        .ok_or_else(|| Error::NotClusterable { layer, reason: "no such layer".into() })?;
    let weights = net.weight(layer).ok_or_else(|| Error::NotClusterable {
        layer,
        reason: format!("{:?} layers have no weights", spec.kind),
    })?;
    let groups = if spec.kind == LayerKind::Convolution { spec.out_dims[0] } else { 1 };
    let per = weights.len() / groups;
    weights
        .par_chunks(per)
        .enumerate()
        .map(|(g, slice)| {
            let tree = build_tree(slice, tree_depth, seed.wrapping_add(g as u64))?;
            Ok(tree.with_size(w)?.clone())
        })
        .collect()
}

fn subsample(data: &Dataset, fraction: f64, seed: u64) -> Result<Vec<usize>> {
    let train = data.indices_of(Split::Train);
    if train.is_empty() {
        return Err(Error::InvalidDataset("no training split to sample layer inputs from".into()));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidConfig(format!("sample fraction {fraction} not in (0, 1]")));
    }
    let keep = ((train.len() as f64 * fraction).ceil() as usize).clamp(1, train.len());
    if keep == train.len() {
        return Ok(train);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = shuffled(train.len(), &mut rng)[..keep].iter().map(|&k| train[k]).collect();
    picked.sort_unstable();
    Ok(picked)
}

/// Input activations of `layer` for a seeded subsample of the training split.
pub fn sample_inputs(net: &Network, data: &Dataset, layer: usize, fraction: f64, seed: u64) -> Result<Vec<f64>> {
    if layer == 0 || layer >= net.layers.len() {
        return Err(Error::NotClusterable {
            layer,
            reason: "only layers after the input have inputs to sample".into(),
        });
    }
    let idx = subsample(data, fraction, seed)?;
    let pass = nn::forward(net, &data.samples.select(&idx))?;
    Ok(pass.post[layer - 1].data().to_vec())
}

/// Clusters `net` once into lookup-table form.
pub fn compose(net: &Network, data: &Dataset, cfg: &ComposeConfig) -> Result<ReinterpretedModel> {
    cfg.validate()?;
    let layers = &net.layers;
    if layers.len() < 2 {
        return Err(Error::InvalidNetwork("nothing to reinterpret after the input layer".into()));
    }
    let last = layers.len() - 1;
    if !matches!(layers[last].kind, LayerKind::FullyConnected | LayerKind::Convolution) {
        return Err(Error::InvalidNetwork("the last layer must be dense or convolutional".into()));
    }
    for (i, l) in layers.iter().enumerate().skip(1) {
        if l.activation == ActivationKind::Softmax && i != last {
            return Err(Error::InvalidNetwork(format!("layer {i}: softmax only supported on the last layer")));
        }
    }
    let idx = subsample(data, cfg.sample_fraction, cfg.seed)?;
    let pass = nn::forward(net, &data.samples.select(&idx))?;

    // Input codebooks, walking backwards so code-preserving pools can reuse their
    // consumer's codebook.
    let mut input_codebooks: Vec<Option<Codebook>> = vec![None; layers.len()];
    for i in (1..layers.len()).rev() {
        let passes = matches!(layers[i].pool_mode, Some(PoolMode::Max | PoolMode::Min));
        input_codebooks[i] = Some(if passes {
            input_codebooks[i + 1].clone().expect("consumer built first")
        } else {
            let values = pass.post[i - 1].data();
            let tree = build_tree(values, cfg.tree_depth, cfg.seed ^ (i as u64) << 20)?;
            on_grid(tree.with_size(cfg.u)?, cfg.frac_bits)
        });
    }

    let mut stages = Vec::with_capacity(last);
    for (i, spec) in layers.iter().enumerate().skip(1) {
        let input_codebook = input_codebooks[i].clone().unwrap();
        let weights = match spec.kind {
            LayerKind::FullyConnected | LayerKind::Convolution => {
                let codebooks = cluster_weights(net, i, cfg.w, cfg.tree_depth, cfg.seed ^ (i as u64) << 40)?;
                let per = net.weight(i).unwrap().len() / codebooks.len();
                let codes = net
                    .weight(i)
                    .unwrap()
                    .iter()
                    .enumerate()
                    .map(|(k, &v)| codebooks[k / per].encode(v) as u16)
                    .collect();
                Some(weight_coding(codebooks, codes, net.bias(i).unwrap().to_vec(), &input_codebook))
            }
            LayerKind::Pooling if spec.pool_mode == Some(PoolMode::Avg) => {
                let n = spec.fan_in();
                let cb = Codebook::new(vec![1.0 / n as f64])?;
                Some(weight_coding(vec![cb], vec![0; n], vec![], &input_codebook))
            }
            _ => None,
        };
        let hidden = i < last;
        let activation = if hidden && weights.is_some() && spec.kind != LayerKind::Pooling {
            Some(if spec.activation == ActivationKind::Relu && cfg.relu_comparator {
                ActivationStage::Comparator
            } else {
                let lut = quantize_activation(spec.activation, cfg.q, pass.pre[i].data())?;
                ActivationStage::Lut(lut.quantized(cfg.frac_bits))
            })
        } else {
            None
        };
        let encoding = if hidden && weights.is_some() { input_codebooks[i + 1].clone() } else { None };
        stages.push(Stage {
            spec: spec.clone(),
            input_codebook,
            weights,
            activation,
            encoding,
        });
    }
    let rm = ReinterpretedModel {
        input_dims: net.input_dims().to_vec(),
        params: cfg.params(),
        stages,
    };
    rm.validate()?;
    Ok(rm)
}

fn weight_coding(codebooks: Vec<Codebook>, codes: Vec<u16>, bias: Vec<f64>, inputs: &Codebook) -> WeightCoding {
    let tables = codebooks.iter().map(|cb| ProductTable::build(cb, inputs)).collect();
    WeightCoding {
        codebooks,
        codes,
        tables,
        bias,
    }
}

/// Rounds centroids to the fixed-point grid so the hardware search compares exact values.
fn on_grid(cb: &Codebook, frac_bits: u32) -> Codebook {
    Codebook::from_sorted(cb.centroids().iter().map(|&c| round_to_grid(c, frac_bits)).collect())
}

/// The network with every weight replaced by its centroid.
pub fn snapped_network(net: &Network, rm: &ReinterpretedModel) -> Result<Network> {
    let mut weights = net.weights.clone();
    for (i, s) in rm.stages.iter().enumerate() {
        if let (Some(wc), Some(Some(w))) = (&s.weights, weights.get_mut(i + 1)) {
            if s.spec.kind != LayerKind::Pooling {
                *w = Tensor::new(w.shape().to_vec(), wc.decoded())?;
            }
        }
    }
    Network::from_parts(net.layers.clone(), weights, net.biases.clone())
}

/// Runs cluster, estimate and retrain until the accuracy loss is within `epsilon` or the
/// iteration budget runs out, and returns the model with the smallest loss.
///
/// Errors are measured on the validation split. Retraining starts from the clustered weights
/// and updates them in full precision with plain SGD on the training split.
pub fn reinterpret(net: &Network, data: &Dataset, cfg: &ComposeConfig) -> Result<(ReinterpretedModel, ReinterpretReport)> {
    cfg.validate()?;
    if !data.has_split(Split::Validation) {
        return Err(Error::InvalidDataset("reinterpretation needs a validation split".into()));
    }
    let e_baseline = nn::train::evaluate_split(net, data, Split::Validation)?;
    let retrain = TrainConfig {
        learning_rate: cfg.retrain_learning_rate,
        momentum: 0.0,
        epochs: cfg.retrain_epochs,
        dropout_rate: 0.0,
        batch_size: 64,
        seed: cfg.seed,
        lr_decay: 1.0,
    };
    let mut current = net.clone();
    let mut iterations = Vec::new();
    let mut best: Option<(usize, ReinterpretedModel)> = None;
    for it in 0..cfg.max_iters {
        let rm = compose(&current, data, cfg)?;
        let e_clustered = snapped_error(&rm, data, Split::Validation)?;
        let delta_e = e_clustered - e_baseline;
        log::info!("iteration {}: e_clustered {e_clustered:.4}, delta_e {delta_e:+.4}", it + 1);
        iterations.push(IterationRecord {
            e_baseline,
            e_clustered,
            delta_e,
        });
        if best.as_ref().is_none_or(|(b, _)| delta_e < iterations[*b].delta_e) {
            best = Some((it, rm.clone()));
        }
        if delta_e <= cfg.epsilon || it + 1 == cfg.max_iters || cfg.retrain_epochs == 0 {
            break;
        }
        let start = snapped_network(&current, &rm)?;
        current = nn::train(&start, data, &TrainConfig { seed: cfg.seed + it as u64, ..retrain.clone() })?.network;
    }
    let (best_iteration, rm) = best.expect("at least one iteration");
    let converged = iterations[best_iteration].delta_e <= cfg.epsilon;
    if !converged {
        log::warn!(
            "reinterpretation did not reach delta_e <= {} in {} iterations; keeping best {:+.4}",
            cfg.epsilon,
            iterations.len(),
            iterations[best_iteration].delta_e
        );
    }
    let memory_bytes = crate::experiment::report_memory(&rm).total;
    Ok((
        rm,
        ReinterpretReport {
            iterations,
            best_iteration,
            converged,
            memory_bytes,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{build_topology, dataset, LayerSpec};

    fn net(layers: &[&str], seed: u64) -> Network {
        let layers: Vec<String> = layers.iter().map(|s| s.to_string()).collect();
        Network::new(build_topology(vec![3, 8, 8], &layers).unwrap(), seed).unwrap()
    }

    fn wcss(xs: &[f64], cb: &Codebook) -> f64 {
        xs.iter().map(|&x| (x - cb.decode(cb.encode(x))).powi(2)).sum()
    }

    fn best_contiguous_wcss(xs: &[f64], k: usize) -> f64 {
        let cost = |s: &[f64]| {
            let m = s.iter().sum::<f64>() / s.len() as f64;
            s.iter().map(|x| (x - m).powi(2)).sum::<f64>()
        };
        if k == 1 {
            return cost(xs);
        }
        (1..=xs.len() - (k - 1))
            .map(|i| cost(&xs[..i]) + best_contiguous_wcss(&xs[i..], k - 1))
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn constant_layer_collapses_to_one_value() {
        let mut n = net(&["fc:4:relu", "fc:10:softmax"], 1);
        let len = n.weights[1].as_ref().unwrap().len();
        n.weights[1] = Some(Tensor::from_parts(vec![4, 192], vec![0.3; len]));
        let cbs = cluster_weights(&n, 1, 4, 6, 0).unwrap();
        assert_eq!(cbs.len(), 1);
        assert!(cbs[0].centroids().iter().all(|&c| c == 0.3));
        assert_eq!(cbs[0].encode(0.3), 0);
    }

    #[test]
    fn convolution_gets_one_codebook_per_channel() {
        let n = net(&["conv:2:3:relu", "fc:10:softmax"], 2);
        let cbs = cluster_weights(&n, 1, 8, 6, 0).unwrap();
        assert_eq!(cbs.len(), 2);
        assert!(cbs.iter().all(|c| c.len() == 8));
        assert_ne!(cbs[0], cbs[1]);
        assert!(matches!(cluster_weights(&n, 0, 8, 6, 0), Err(Error::NotClusterable { layer: 0, .. })));
    }

    #[test]
    fn separated_groups_reach_the_optimal_four_means() {
        let specs = vec![LayerSpec::input(vec![4]), LayerSpec::dense(vec![4], 4, ActivationKind::Softmax)];
        let w = vec![
            -2.0, -1.9, -2.1, -2.05, -0.5, -0.45, -0.6, -0.52, 0.4, 0.5, 0.45, 0.41, 1.8, 2.0, 2.2, 1.95,
        ];
        let n = Network::from_parts(specs, vec![None, Some(Tensor::from_parts(vec![4, 4], w.clone()))], vec![
            None,
            Some(Tensor::from_parts(vec![4], vec![0.0; 4])),
        ])
        .unwrap();
        let cb = &cluster_weights(&n, 1, 4, 3, 5).unwrap()[0];
        let mut sorted = w.clone();
        sorted.sort_by(f64::total_cmp);
        let opt = best_contiguous_wcss(&sorted, 4);
        assert!((wcss(&w, cb) - opt).abs() < 1e-12);
    }

    #[test]
    fn sampling_is_seeded_and_full_fraction_takes_everything() {
        let data = dataset::cifar_like(40, 10, 0, 4);
        let n = net(&["fc:6:relu", "fc:10:softmax"], 3);
        let all = sample_inputs(&n, &data, 2, 1.0, 9).unwrap();
        assert_eq!(all.len(), 40 * 6);
        let train = data.subset(Split::Train);
        assert_eq!(all, nn::forward(&n, &train.samples).unwrap().post[1].data());
        let a = sample_inputs(&n, &data, 2, 0.25, 9).unwrap();
        assert_eq!(a.len(), 10 * 6);
        assert_eq!(a, sample_inputs(&n, &data, 2, 0.25, 9).unwrap());
        assert!(sample_inputs(&n, &data, 0, 0.25, 9).is_err());
        assert!(sample_inputs(&n, &data, 2, 0.0, 9).is_err());
    }

    #[test]
    fn loop_keeps_the_best_iteration() {
        let data = dataset::cifar_like(300, 100, 0, 6);
        let n = nn::train(&net(&["fc:12:relu", "fc:10:softmax"], 4), &data, &TrainConfig {
            epochs: 3,
            ..TrainConfig::default()
        })
        .unwrap()
        .network;
        let cfg = ComposeConfig {
            w: 2,
            u: 2,
            q: 4,
            epsilon: f64::INFINITY,
            sample_fraction: 0.5,
            ..ComposeConfig::default()
        };
        let (_, report) = reinterpret(&n, &data, &cfg).unwrap();
        assert_eq!(report.iterations.len(), 1);
        assert!(report.converged);

        let cfg = ComposeConfig { epsilon: -1.0, max_iters: 3, ..cfg };
        assert!(cfg.validate().is_err());
        let cfg = ComposeConfig { epsilon: 0.0, ..cfg };
        let (rm, report) = reinterpret(&n, &data, &cfg).unwrap();
        assert!(report.best().delta_e <= report.iterations[0].delta_e);
        assert!(report.iterations.iter().all(|r| report.best().delta_e <= r.delta_e));
        assert_eq!(report.memory_bytes, crate::experiment::report_memory(&rm).total);
    }

    #[test]
    fn needs_validation_data() {
        let data = dataset::xor();
        let n = Network::new(build_topology(vec![2], &["fc:2:softmax".into()]).unwrap(), 0).unwrap();
        assert!(matches!(reinterpret(&n, &data, &ComposeConfig::default()), Err(Error::InvalidDataset(_))));
    }
}
