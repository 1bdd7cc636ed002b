//! Feature-attribution methods for multi-label CNN classifiers, together
//! with the metrics used to compare them.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`], [`nn`]: dense tensors and a small sequential CNN with
//!   reverse-mode gradients, guided-ReLU backward and a checksummed model
//!   file format.
//! * [`synth`]: a deterministic synthetic multi-label image dataset and an
//!   SGD trainer.
//! * [`slic`]: superpixel segmentation for Lime.
//! * [`attrib`]: the attribution methods.
//! * [`metrics`]: Max-Sensitivity, MoRF curves, file-size proxy, Pearson
//!   correlation and the benchmark driver.
//! * [`render`]: heatmap rendering and netpbm output.

pub mod attrib;
pub mod codec;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod render;
pub mod rng;
pub mod slic;
pub mod synth;
pub mod tensor;

pub use error::{Error, FormatError, Result};
pub use nn::{ForwardRecord, LayerDesc, ModelSpec, Network, ReluBackwardMode, Target, WeightStore};
pub use tensor::Tensor;
