//! Trained-network container (`RAPIDNN-MODEL`).
//!
//! The manifest lists the layers; the blob holds every weight tensor followed by its bias,
//! in layer order, as little-endian f64.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LayerSpec, Network};
use crate::container;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MODEL_MAGIC: &str = "RAPIDNN-MODEL";
pub const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Manifest {
    layers: Vec<LayerSpec>,
    /// Number of f64 values in the blob.
    values: usize,
}

pub fn encode_model(net: &Network) -> Result<Vec<u8>> {
    if net.layers.is_empty() {
        return Err(Error::InvalidNetwork("refusing to save a network with no layers".into()));
    }
    let mut blob = Vec::new();
    for (w, b) in net.weights.iter().zip(&net.biases) {
        if let (Some(w), Some(b)) = (w, b) {
            container::push_f64s(&mut blob, w.data());
            container::push_f64s(&mut blob, b.data());
        }
    }
    let manifest = Manifest {
        layers: net.layers.clone(),
        values: blob.len() / 8,
    };
    let text = serde_json::to_string_pretty(&manifest)?;
    Ok(container::encode(MODEL_MAGIC, MODEL_VERSION, &text, &blob))
}

pub fn decode_model(path: &Path, bytes: &[u8]) -> Result<Network> {
    let (manifest, blob) = container::decode(path, bytes, MODEL_MAGIC, MODEL_VERSION)?;
    let manifest: Manifest = serde_json::from_str(&manifest)?;
    if manifest.values * 8 != blob.len() {
        return Err(Error::Truncated {
            path: path.into(),
            expected: (manifest.values * 8) as u64,
            actual: blob.len() as u64,
        });
    }
    let mut offset = 0;
    let mut weights = Vec::with_capacity(manifest.layers.len());
    let mut biases = Vec::with_capacity(manifest.layers.len());
    for layer in &manifest.layers {
        match (layer.weight_shape(), layer.bias_len()) {
            (Some(shape), Some(nb)) => {
                let n = shape.iter().product();
                let w = container::take_f64s(path, blob, &mut offset, n)?;
                let b = container::take_f64s(path, blob, &mut offset, nb)?;
                weights.push(Some(Tensor::new(shape, w)?));
                biases.push(Some(Tensor::new(vec![nb], b)?));
            }
            _ => {
                weights.push(None);
                biases.push(None);
            }
        }
    }
    Network::from_parts(manifest.layers, weights, biases)
}

pub fn save_model(net: &Network, path: &Path) -> Result<()> {
    fs::write(path, encode_model(net)?).map_err(Error::file(path))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Network> {
    decode_model(path, &fs::read(path).map_err(Error::file(path))?)
}
