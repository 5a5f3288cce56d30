//! Lookup-table reinterpretation of small neural networks and a behavioural/cost
//! simulator for an in-memory lookup accelerator built from resistive neural
//! acceleration (RNA) blocks.

pub mod composer;
mod container;
pub mod error;
pub mod experiment;
pub mod lut;
pub mod nn;
pub mod sim;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
