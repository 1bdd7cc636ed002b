use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::rng_from;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityConfig {
    /// ∞-norm radius; `None` means 0.02 × the input's value range.
    pub radius: Option<f64>,
    pub num_samples: usize,
    pub seed: u64,
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        Self {
            radius: None,
            num_samples: 10,
            seed: 0,
        }
    }
}

impl SensitivityConfig {
    pub fn radius_for(&self, input: &Tensor) -> f64 {
        self.radius.unwrap_or(0.02 * (input.max() - input.min()))
    }
}

/// Point `n` of the perturbation stream: each coordinate uniform in
/// `[x − r, x + r]`.
pub fn perturbation(input: &Tensor, radius: f64, seed: u64, n: usize) -> Tensor {
    let mut rng = rng_from(seed, &[0x5e45, n as u64]);
    let mut out = input.clone();
    if radius > 0.0 {
        for v in out.data_mut() {
            *v += rng.random_range(-radius..=radius);
        }
    }
    out
}

/// Largest Frobenius distance between the explanation of the input and the
/// explanations of random points in its ∞-ball.
pub fn max_sensitivity(
    explainer: impl Fn(&Tensor) -> Result<Tensor>,
    input: &Tensor,
    cfg: &SensitivityConfig,
) -> Result<f64> {
    let r = cfg.radius_for(input);
    if !(r >= 0.0 && r.is_finite()) || cfg.num_samples == 0 {
        return Err(Error::Config(format!(
            "sensitivity needs radius ≥ 0 and at least one sample (r = {r}, N = {})",
            cfg.num_samples
        )));
    }
    let reference = explainer(input)?;
    let mut worst: f64 = 0.0;
    for n in 0..cfg.num_samples {
        let phi = explainer(&perturbation(input, r, cfg.seed, n))?;
        worst = worst.max(phi.sub(&reference)?.norm());
    }
    Ok(worst)
}
