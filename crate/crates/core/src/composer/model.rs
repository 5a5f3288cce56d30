//! The lookup-table form of a network.

use serde::{Deserialize, Serialize};

use super::activation::ActivationLut;
use super::codebook::Codebook;
use crate::error::{Error, Result};
use crate::nn::{LayerKind, LayerSpec, PoolMode};

/// Products of every weight centroid (rows) with every input centroid (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct ProductTable {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl ProductTable {
    pub fn build(weights: &Codebook, inputs: &Codebook) -> Self {
        let values = weights
            .centroids()
            .iter()
            .flat_map(|&w| inputs.centroids().iter().map(move |&x| w * x))
            .collect();
        Self {
            rows: weights.len(),
            cols: inputs.len(),
            values,
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }
}

/// Encoded weights of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightCoding {
    /// One codebook per group: a dense layer has one, a convolution one per output channel,
    /// an average pool a single `1/n` entry.
    pub codebooks: Vec<Codebook>,
    /// Codes in the layout of the original weight tensor (one per window cell for pools).
    pub codes: Vec<u16>,
    pub tables: Vec<ProductTable>,
    /// Full-precision bias per output neuron (dense) or channel (convolution); empty for pools.
    pub bias: Vec<f64>,
}

impl WeightCoding {
    pub fn group_len(&self) -> usize {
        self.codes.len() / self.codebooks.len()
    }

    /// Codes of group `g`.
    pub fn group(&self, g: usize) -> &[u16] {
        let n = self.group_len();
        &self.codes[g * n..(g + 1) * n]
    }

    /// Weight values after snapping to the codebooks.
    pub fn decoded(&self) -> Vec<f64> {
        let n = self.group_len();
        self.codes
            .iter()
            .enumerate()
            .map(|(i, &c)| self.codebooks[i / n].decode(u32::from(c)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationStage {
    Lut(ActivationLut),
    /// Exact `max(y, 0)` instead of a table.
    Comparator,
}

impl ActivationStage {
    pub fn eval(&self, y: f64) -> f64 {
        match self {
            ActivationStage::Lut(lut) => lut.lookup(y),
            ActivationStage::Comparator => y.max(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub spec: LayerSpec,
    /// Codebook of the codes arriving at this layer. For a max/min pool it is also the
    /// codebook of the codes it emits.
    pub input_codebook: Codebook,
    pub weights: Option<WeightCoding>,
    /// Hidden dense/convolution layers only.
    pub activation: Option<ActivationStage>,
    /// Codebook used to re-encode this layer's outputs; equals the next layer's input codebook.
    /// Absent on the last layer and on code-preserving pools.
    pub encoding: Option<Codebook>,
}

impl Stage {
    pub fn pool_mode(&self) -> Option<PoolMode> {
        self.spec.pool_mode
    }

    /// True for max/min pools, which forward codes without accumulation.
    pub fn passes_codes(&self) -> bool {
        matches!(self.spec.pool_mode, Some(PoolMode::Max | PoolMode::Min))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub w: usize,
    pub u: usize,
    pub q: usize,
    pub tree_depth: usize,
    pub frac_bits: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReinterpretedModel {
    pub input_dims: Vec<usize>,
    pub params: ModelParams,
    pub stages: Vec<Stage>,
}

impl ReinterpretedModel {
    /// Codebook the computation-free first layer uses to encode raw inputs.
    pub fn virtual_layer(&self) -> &Codebook {
        &self.stages[0].input_codebook
    }

    pub fn num_outputs(&self) -> usize {
        self.stages.last().map_or(0, |s| s.spec.out_len())
    }

    /// Codebook of the codes a stage emits, if it emits codes.
    pub fn output_codebook(&self, stage: usize) -> Option<&Codebook> {
        let s = &self.stages[stage];
        if s.passes_codes() {
            Some(&s.input_codebook)
        } else {
            s.encoding.as_ref()
        }
    }

    /// Checks the structural rules tying stages together.
    pub fn validate(&self) -> Result<()> {
        let bad = |i: usize, msg: &str| Err(Error::InvalidNetwork(format!("stage {i}: {msg}")));
        if self.stages.is_empty() {
            return Err(Error::InvalidNetwork("reinterpreted model has no stages".into()));
        }
        let last = self.stages.len() - 1;
        for (i, s) in self.stages.iter().enumerate() {
            match s.spec.kind {
                LayerKind::FullyConnected | LayerKind::Convolution => {
                    let Some(wc) = &s.weights else { return bad(i, "missing weight codes") };
                    let groups = if s.spec.kind == LayerKind::Convolution { s.spec.out_dims[0] } else { 1 };
                    if wc.codebooks.len() != groups || wc.tables.len() != groups {
                        return bad(i, "wrong number of weight codebooks");
                    }
                    let n: usize = s.spec.weight_shape().unwrap_or_default().iter().product();
                    if wc.codes.len() != n || Some(wc.bias.len()) != s.spec.bias_len() {
                        return bad(i, "weight codes or bias do not match the layer shape");
                    }
                    if (i == last) == s.activation.is_some() {
                        return bad(i, "exactly the hidden weighted layers carry an activation stage");
                    }
                }
                LayerKind::Pooling => {
                    if s.passes_codes() {
                        if s.weights.is_some() || s.encoding.is_some() {
                            return bad(i, "max/min pools carry no tables");
                        }
                        if i == last {
                            return bad(i, "the last layer must produce values, not codes");
                        }
                    } else {
                        let Some(wc) = &s.weights else { return bad(i, "average pool needs a normalized table") };
                        if wc.codebooks.len() != 1 || wc.codes.len() != s.spec.fan_in() {
                            return bad(i, "malformed average pool table");
                        }
                    }
                    if s.activation.is_some() {
                        return bad(i, "pools have no activation");
                    }
                }
                LayerKind::Input => return bad(i, "input layer is implicit"),
            }
            if let Some(wc) = &s.weights {
                for (cb, t) in wc.codebooks.iter().zip(&wc.tables) {
                    if *t != ProductTable::build(cb, &s.input_codebook) {
                        return bad(i, "product table differs from centroid products");
                    }
                }
                if wc.codes.iter().enumerate().any(|(k, &c)| usize::from(c) >= wc.codebooks[k / wc.group_len()].len()) {
                    return bad(i, "weight code out of range");
                }
            }
            if i < last {
                let next = &self.stages[i + 1].input_codebook;
                if self.output_codebook(i) != Some(next) {
                    return bad(i, "output codebook differs from the next layer's input codebook");
                }
            } else if s.encoding.is_some() {
                return bad(i, "last layer must not re-encode");
            }
        }
        Ok(())
    }
}
