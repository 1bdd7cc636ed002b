//! Fixtures shared by the benchmarks.

use attribench::nn::{ModelSpec, WeightStore};
use attribench::synth::{generate_sample, DatasetConfig};
use attribench::{Network, Tensor};

/// Untrained default CNN on 3×32×32 inputs with six classes.
pub fn default_network() -> Network {
    let spec = ModelSpec::default_cnn([3, 32, 32], 6).expect("default spec");
    let weights = WeightStore::init(&spec, 1);
    Network::new(spec, weights).expect("weights match spec")
}

pub fn sample_image(index: usize) -> Tensor {
    generate_sample(&DatasetConfig::default(), index).image
}
