use rand_distr::{Distribution, StandardNormal};

use super::{timed, AttributionMap, BaselineSpec, Resolution};
use crate::error::{Error, Result};
use crate::nn::{Network, ReluBackwardMode};
use crate::rng::rng_from;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct IgConfig {
    pub steps: usize,
    pub baseline: BaselineSpec,
}

impl Default for IgConfig {
    fn default() -> Self {
        Self {
            steps: 50,
            baseline: BaselineSpec::Zero,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothGradConfig {
    pub num_samples: usize,
    /// Noise standard deviation; `None` means 0.15 × the input's value range.
    pub sigma: Option<f64>,
    pub seed: u64,
}

impl Default for SmoothGradConfig {
    fn default() -> Self {
        Self {
            num_samples: 30,
            sigma: None,
            seed: 0,
        }
    }
}

pub fn saliency(net: &Network, input: &Tensor, class: usize) -> Result<AttributionMap> {
    timed(|| {
        let g = net.grad_input(input, class, ReluBackwardMode::Standard)?;
        Ok(AttributionMap::new("saliency", class, Resolution::PerPixel, g))
    })
}

pub fn input_x_gradient(net: &Network, input: &Tensor, class: usize) -> Result<AttributionMap> {
    timed(|| {
        let g = net.grad_input(input, class, ReluBackwardMode::Standard)?;
        Ok(AttributionMap::new("input_x_gradient", class, Resolution::PerPixel, g.mul(input)?))
    })
}

/// Midpoint-rule path integral of the logit gradient from the baseline to
/// the input.
pub fn integrated_gradients(net: &Network, input: &Tensor, class: usize, cfg: &IgConfig) -> Result<AttributionMap> {
    timed(|| {
        if cfg.steps == 0 {
            return Err(Error::Config("integrated gradients needs at least one step".into()));
        }
        let base = cfg.baseline.resolve(input)?;
        let delta = input.sub(&base)?;
        let mut total = Tensor::zeros_like(input);
        for i in 0..cfg.steps {
            let alpha = (i as f64 + 0.5) / cfg.steps as f64;
            let mut point = base.clone();
            point.axpy(alpha, &delta)?;
            total.add_assign(&net.grad_input(&point, class, ReluBackwardMode::Standard)?)?;
        }
        let scores = total.scale(1.0 / cfg.steps as f64).mul(&delta)?;
        Ok(AttributionMap::new("integrated_gradients", class, Resolution::PerPixel, scores)
            .with_meta("steps", cfg.steps)
            .with_meta("quadrature", "midpoint"))
    })
}

pub fn guided_backprop(net: &Network, input: &Tensor, class: usize) -> Result<AttributionMap> {
    timed(|| {
        let g = net.grad_input(input, class, ReluBackwardMode::Guided)?;
        Ok(AttributionMap::new("guided_backprop", class, Resolution::PerPixel, g))
    })
}

/// Mean of `base` over Gaussian-perturbed copies of the input. Noise draw
/// `n` depends only on `cfg.seed` and `n`.
pub fn smoothgrad(
    input: &Tensor,
    class: usize,
    method_id: &str,
    cfg: &SmoothGradConfig,
    base: impl Fn(&Tensor) -> Result<Tensor>,
) -> Result<AttributionMap> {
    timed(|| {
        if cfg.num_samples == 0 {
            return Err(Error::Config("smoothgrad needs at least one sample".into()));
        }
        let sigma = cfg.sigma.unwrap_or(0.15 * (input.max() - input.min()));
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::Config(format!("smoothgrad sigma must be ≥ 0, got {sigma}")));
        }
        let mut total: Option<Tensor> = None;
        for n in 0..cfg.num_samples {
            let mut rng = rng_from(cfg.seed, &[n as u64]);
            let mut noisy = input.clone();
            for v in noisy.data_mut() {
                let e: f64 = StandardNormal.sample(&mut rng);
                *v += sigma * e;
            }
            let map = base(&noisy)?;
            match &mut total {
                Some(t) => t.add_assign(&map)?,
                None => total = Some(map),
            }
        }
        let scores = total.expect("at least one sample").scale(1.0 / cfg.num_samples as f64);
        Ok(AttributionMap::new(method_id, class, Resolution::PerPixel, scores)
            .with_meta("samples", cfg.num_samples)
            .with_meta("sigma", sigma))
    })
}
