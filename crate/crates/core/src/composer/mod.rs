//! Turns a trained network into lookup-table form: weight and input codebooks, product
//! tables, activation tables and the loop that checks and repairs the accuracy loss.

pub mod activation;
pub mod codebook;
pub mod container;
pub mod kmeans;
pub mod model;
pub mod oracle;
pub mod reinterpret;
pub mod tree;

pub use activation::{quantize_activation, ActivationLut};
pub use codebook::Codebook;
pub use container::{load_reinterpreted, save_reinterpreted};
pub use kmeans::{kmeans, KMeansResult};
pub use model::{ActivationStage, ModelParams, ProductTable, ReinterpretedModel, Stage, WeightCoding};
pub use oracle::{snapped_error, snapped_forward};
pub use reinterpret::{
    cluster_weights, compose, reinterpret, sample_inputs, snapped_network, ComposeConfig, IterationRecord,
    ReinterpretReport,
};
pub use tree::{build_tree, CodebookTree};
