//! Reinterpreted-model container (`RAPIDNN-LUT`).
//!
//! The manifest holds layers, codebooks, biases and activation tables as decimals with 17
//! significant digits, which round-trip every f64 exactly. The blob holds, per weighted
//! stage, the product tables (little-endian f64) followed by the weight codes (little-endian u16).

use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize, Serializer};

use super::activation::ActivationLut;
use super::codebook::Codebook;
use super::model::{ActivationStage, ModelParams, ProductTable, ReinterpretedModel, Stage, WeightCoding};
use crate::container;
use crate::error::{Error, Result};
use crate::nn::{ActivationKind, LayerSpec};

pub const LUT_MAGIC: &str = "RAPIDNN-LUT";
pub const LUT_VERSION: u32 = 1;

/// Real values written as `d.ddddddddddddddddde±x`.
#[derive(Deserialize)]
#[serde(transparent)]
struct Decimals(Vec<f64>);

impl Serialize for Decimals {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(self.0.iter().map(|v| {
            serde_json::Number::from_str(&format!("{v:.16e}")).expect("formatted f64 is a JSON number")
        }))
    }
}

#[derive(Serialize, Deserialize)]
struct ActivationManifest {
    kind: ActivationKind,
    comparator: bool,
    y: Decimals,
    z: Decimals,
}

#[derive(Serialize, Deserialize)]
struct StageManifest {
    layer: LayerSpec,
    input_codebook: Decimals,
    weight_codebooks: Vec<Decimals>,
    bias: Decimals,
    /// Number of weight codes in the blob; zero when the stage has no weights.
    codes: usize,
    activation: Option<ActivationManifest>,
    encoding: Option<Decimals>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    input_dims: Vec<usize>,
    params: ModelParams,
    stages: Vec<StageManifest>,
}

pub fn encode_reinterpreted(rm: &ReinterpretedModel) -> Result<Vec<u8>> {
    rm.validate()?;
    let mut blob = Vec::new();
    let mut stages = Vec::with_capacity(rm.stages.len());
    for s in &rm.stages {
        let (weight_codebooks, bias, codes) = match &s.weights {
            Some(wc) => {
                for t in &wc.tables {
                    container::push_f64s(&mut blob, &t.values);
                }
                for c in &wc.codes {
                    blob.extend_from_slice(&c.to_le_bytes());
                }
                (
                    wc.codebooks.iter().map(|cb| Decimals(cb.centroids().to_vec())).collect(),
                    Decimals(wc.bias.clone()),
                    wc.codes.len(),
                )
            }
            None => (vec![], Decimals(vec![]), 0),
        };
        let activation = s.activation.as_ref().map(|a| match a {
            ActivationStage::Lut(lut) => ActivationManifest {
                kind: lut.kind,
                comparator: false,
                y: Decimals(lut.points().to_vec()),
                z: Decimals(lut.outputs().to_vec()),
            },
            ActivationStage::Comparator => ActivationManifest {
                kind: ActivationKind::Relu,
                comparator: true,
                y: Decimals(vec![]),
                z: Decimals(vec![]),
            },
        });
        stages.push(StageManifest {
            layer: s.spec.clone(),
            input_codebook: Decimals(s.input_codebook.centroids().to_vec()),
            weight_codebooks,
            bias,
            codes,
            activation,
            encoding: s.encoding.as_ref().map(|cb| Decimals(cb.centroids().to_vec())),
        });
    }
    let manifest = Manifest {
        input_dims: rm.input_dims.clone(),
        params: rm.params,
        stages,
    };
    let text = serde_json::to_string_pretty(&manifest)?;
    Ok(container::encode(LUT_MAGIC, LUT_VERSION, &text, &blob))
}

pub fn decode_reinterpreted(path: &Path, bytes: &[u8]) -> Result<ReinterpretedModel> {
    let (text, blob) = container::decode(path, bytes, LUT_MAGIC, LUT_VERSION)?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    let mut offset = 0;
    let mut stages = Vec::with_capacity(manifest.stages.len());
    for sm in manifest.stages {
        let input_codebook = Codebook::new(sm.input_codebook.0)?;
        let weights = if sm.weight_codebooks.is_empty() {
            None
        } else {
            let codebooks = sm.weight_codebooks.into_iter().map(|d| Codebook::new(d.0)).collect::<Result<Vec<_>>>()?;
            let mut tables = Vec::with_capacity(codebooks.len());
            for cb in &codebooks {
                let (rows, cols) = (cb.len(), input_codebook.len());
                let values = container::take_f64s(path, blob, &mut offset, rows * cols)?;
                tables.push(ProductTable { rows, cols, values });
            }
            let end = offset + sm.codes * 2;
            if end > blob.len() {
                return Err(Error::Truncated {
                    path: path.into(),
                    expected: end as u64,
                    actual: blob.len() as u64,
                });
            }
            let codes = blob[offset..end].chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect();
            offset = end;
            Some(WeightCoding {
                codebooks,
                codes,
                tables,
                bias: sm.bias.0,
            })
        };
        let activation = match sm.activation {
            Some(a) if a.comparator => Some(ActivationStage::Comparator),
            Some(a) => Some(ActivationStage::Lut(ActivationLut::from_parts(a.kind, a.y.0, a.z.0)?)),
            None => None,
        };
        stages.push(Stage {
            spec: sm.layer,
            input_codebook,
            weights,
            activation,
            encoding: sm.encoding.map(|d| Codebook::new(d.0)).transpose()?,
        });
    }
    if offset != blob.len() {
        return Err(Error::parse(path, "blob", format!("{} unused bytes after the last table", blob.len() - offset)));
    }
    let rm = ReinterpretedModel {
        input_dims: manifest.input_dims,
        params: manifest.params,
        stages,
    };
    rm.validate()?;
    Ok(rm)
}

pub fn save_reinterpreted(rm: &ReinterpretedModel, path: &Path) -> Result<()> {
    fs::write(path, encode_reinterpreted(rm)?).map_err(Error::file(path))?;
    Ok(())
}

pub fn load_reinterpreted(path: &Path) -> Result<ReinterpretedModel> {
    decode_reinterpreted(path, &fs::read(path).map_err(Error::file(path))?)
}
