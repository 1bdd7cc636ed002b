//! Attribution methods. Each maps `(model, input, class)` to an
//! [`AttributionMap`] with the same spatial extent as the input.
//!
//! Gradient methods differentiate the class logit; Occlusion and Lime
//! measure the class probability.

mod baseline;
mod cam;
mod deeplift;
mod gradient;
mod io;
mod lime;
mod occlusion;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

pub use baseline::{gaussian_kernel, BaselineSpec};
pub use cam::{bilinear_upsample, grad_cam, grad_cam_raw, guided_grad_cam};
pub use deeplift::deeplift;
pub use gradient::{
    guided_backprop, input_x_gradient, integrated_gradients, saliency, smoothgrad, IgConfig, SmoothGradConfig,
};
pub use io::{decode_attribution, encode_attribution, load_attribution, save_attribution, ATTRIBUTION_MAGIC};
pub use lime::{lime, lime_many, lime_with, LimeConfig, LimeFit};
pub use occlusion::{coverage_counts, occlusion, occlusion_with, window_positions, OcclusionConfig};

use crate::error::{Error, Result};
use crate::nn::Network;
use crate::slic::{slic, Segmentation, SlicConfig};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resolution {
    PerPixel,
    PerPatch,
    PerSuperpixel,
    Upsampled,
}

impl Resolution {
    pub fn name(self) -> &'static str {
        match self {
            Resolution::PerPixel => "per_pixel",
            Resolution::PerPatch => "per_patch",
            Resolution::PerSuperpixel => "per_superpixel",
            Resolution::Upsampled => "upsampled",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributionMap {
    /// `C×H×W` for per-pixel methods, `1×H×W` for patch and upsampled maps,
    /// one score per segment for superpixel maps.
    pub scores: Tensor,
    pub method_id: String,
    pub class_index: usize,
    pub elapsed_seconds: f64,
    pub resolution: Resolution,
    pub segmentation: Option<Segmentation>,
    pub metadata: Vec<(String, String)>,
}

impl AttributionMap {
    pub(crate) fn new(method: &str, class_index: usize, resolution: Resolution, scores: Tensor) -> Self {
        Self {
            scores,
            method_id: method.to_string(),
            class_index,
            elapsed_seconds: 0.0,
            resolution,
            segmentation: None,
            metadata: Vec::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.metadata.push((key.to_string(), value.to_string()));
        self
    }

    /// Scores on the pixel grid; superpixel scores are painted onto their
    /// segments as a `1×H×W` map.
    pub fn pixel_scores(&self) -> Result<Tensor> {
        match (&self.resolution, &self.segmentation) {
            (Resolution::PerSuperpixel, Some(seg)) => {
                if self.scores.len() != seg.num_segments {
                    return Err(Error::Shape(format!(
                        "{} segment scores for {} segments",
                        self.scores.len(),
                        seg.num_segments
                    )));
                }
                let data = seg.labels.iter().map(|&l| self.scores[l]).collect();
                Tensor::new(vec![1, seg.height, seg.width], data)
            }
            (Resolution::PerSuperpixel, None) => {
                Err(Error::Config("superpixel attribution without a segmentation".into()))
            }
            _ => Ok(self.scores.clone()),
        }
    }

    /// Channel-summed relevance per pixel, row-major `H×W`.
    pub fn pixel_relevance(&self) -> Result<Vec<f64>> {
        Ok(self.pixel_scores()?.channel_sum()?.into_data())
    }
}

/// Times `f` and stamps the result with the elapsed wall-clock seconds.
pub(crate) fn timed(f: impl FnOnce() -> Result<AttributionMap>) -> Result<AttributionMap> {
    let start = Instant::now();
    let mut map = f()?;
    map.elapsed_seconds = start.elapsed().as_secs_f64();
    if !map.scores.all_finite() {
        return Err(Error::Numerical(format!("{} produced non-finite scores", map.method_id)));
    }
    Ok(map)
}

/// Base methods SmoothGrad may wrap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SmoothBase {
    Saliency,
    InputXGradient,
    IntegratedGradients,
    GuidedBackprop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Saliency,
    InputXGradient,
    IntegratedGradients,
    GuidedBackprop,
    GradCam,
    GuidedGradCam,
    Occlusion,
    DeepLift,
    Lime,
    SmoothGrad(SmoothBase),
}

impl Method {
    /// Every method in report order.
    pub const ALL: [Method; 12] = [
        Method::Saliency,
        Method::InputXGradient,
        Method::IntegratedGradients,
        Method::GuidedBackprop,
        Method::GradCam,
        Method::GuidedGradCam,
        Method::Occlusion,
        Method::DeepLift,
        Method::Lime,
        Method::SmoothGrad(SmoothBase::Saliency),
        Method::SmoothGrad(SmoothBase::InputXGradient),
        Method::SmoothGrad(SmoothBase::IntegratedGradients),
    ];

    pub fn id(self) -> &'static str {
        match self {
            Method::Saliency => "saliency",
            Method::InputXGradient => "input_x_gradient",
            Method::IntegratedGradients => "integrated_gradients",
            Method::GuidedBackprop => "guided_backprop",
            Method::GradCam => "grad_cam",
            Method::GuidedGradCam => "guided_grad_cam",
            Method::Occlusion => "occlusion",
            Method::DeepLift => "deeplift",
            Method::Lime => "lime",
            Method::SmoothGrad(SmoothBase::Saliency) => "smoothgrad_saliency",
            Method::SmoothGrad(SmoothBase::InputXGradient) => "smoothgrad_input_x_gradient",
            Method::SmoothGrad(SmoothBase::IntegratedGradients) => "smoothgrad_integrated_gradients",
            Method::SmoothGrad(SmoothBase::GuidedBackprop) => "smoothgrad_guided_backprop",
        }
    }

    /// Whether heatmaps show absolute values (signed gradient products).
    pub fn render_abs(self) -> bool {
        matches!(
            self,
            Method::Saliency
                | Method::InputXGradient
                | Method::IntegratedGradients
                | Method::SmoothGrad(SmoothBase::Saliency | SmoothBase::InputXGradient | SmoothBase::IntegratedGradients)
        )
    }

    fn base(self) -> Option<Method> {
        match self {
            Method::SmoothGrad(b) => Some(match b {
                SmoothBase::Saliency => Method::Saliency,
                SmoothBase::InputXGradient => Method::InputXGradient,
                SmoothBase::IntegratedGradients => Method::IntegratedGradients,
                SmoothBase::GuidedBackprop => Method::GuidedBackprop,
            }),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let all = Method::ALL.into_iter().chain([Method::SmoothGrad(SmoothBase::GuidedBackprop)]);
        for m in all {
            if m.id() == s {
                return Ok(m);
            }
        }
        Err(Error::Config(format!("unknown method '{s}'")))
    }
}

/// Settings for every method, as used by [`explain`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExplainConfig {
    pub integrated_gradients: IgConfig,
    pub deeplift_baseline: BaselineSpec,
    pub occlusion: OcclusionConfig,
    pub lime: LimeConfig,
    pub slic: SlicConfig,
    pub smoothgrad: SmoothGradConfig,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        let lime = LimeConfig::default();
        Self {
            integrated_gradients: IgConfig::default(),
            deeplift_baseline: BaselineSpec::Blur { sigma: 2.0, kernel_size: 9 },
            occlusion: OcclusionConfig::default(),
            slic: SlicConfig {
                requested_segments: lime.num_segments,
                ..Default::default()
            },
            lime,
            smoothgrad: SmoothGradConfig::default(),
        }
    }
}

impl ExplainConfig {
    /// Same settings with method seeds replaced by `seed`-derived streams.
    pub fn reseeded(&self, seed: u64) -> Self {
        let mut cfg = self.clone();
        cfg.lime.seed = crate::rng::derive_seed(seed, &[0x11e]);
        cfg.smoothgrad.seed = crate::rng::derive_seed(seed, &[0x5a0]);
        cfg
    }
}

/// Runs `method` on one `(input, class)` pair. Lime segments the input
/// first; segmentation time counts towards the method.
pub fn explain(net: &Network, input: &Tensor, class: usize, method: Method, cfg: &ExplainConfig) -> Result<AttributionMap> {
    match method {
        Method::Saliency => saliency(net, input, class),
        Method::InputXGradient => input_x_gradient(net, input, class),
        Method::IntegratedGradients => integrated_gradients(net, input, class, &cfg.integrated_gradients),
        Method::GuidedBackprop => guided_backprop(net, input, class),
        Method::GradCam => grad_cam(net, input, class),
        Method::GuidedGradCam => guided_grad_cam(net, input, class),
        Method::Occlusion => occlusion(net, input, class, &cfg.occlusion),
        Method::DeepLift => deeplift(net, input, class, &cfg.deeplift_baseline),
        Method::Lime => {
            let start = Instant::now();
            let seg = slic(input, &cfg.slic)?;
            let mut map = lime(net, input, class, &seg, &cfg.lime)?;
            map.elapsed_seconds = start.elapsed().as_secs_f64();
            Ok(map)
        }
        Method::SmoothGrad(_) => {
            let base = method.base().expect("smoothgrad has a base");
            smoothgrad(input, class, method.id(), &cfg.smoothgrad, |x| {
                Ok(explain(net, x, class, base, cfg)?.scores)
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tests::{linear_network, random_input, random_network, small_cnn_layers};

    #[test]
    fn method_ids_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.id().parse::<Method>().unwrap(), m);
        }
        assert!("nope".parse::<Method>().is_err());
    }

    #[test]
    fn every_method_is_deterministic_and_timed() {
        let net = random_network(small_cnn_layers(2), [2, 12, 12], 2, 3, 4);
        let x = random_input([2, 12, 12], 5);
        let mut cfg = ExplainConfig::default();
        cfg.lime.num_samples = 200;
        cfg.lime.num_segments = 9;
        cfg.slic.requested_segments = 9;
        cfg.smoothgrad.num_samples = 3;
        cfg.integrated_gradients.steps = 5;
        for m in Method::ALL {
            let a = explain(&net, &x, 1, m, &cfg).unwrap();
            let b = explain(&net, &x, 1, m, &cfg).unwrap();
            assert_eq!(a.scores, b.scores, "{m}");
            assert!(a.elapsed_seconds >= 0.0);
            assert_eq!(a.method_id, m.id());
            assert_eq!(a.class_index, 1);
            let pix = a.pixel_scores().unwrap();
            assert_eq!(&pix.shape()[1..], &[12, 12], "{m}");
        }
    }

    #[test]
    fn linear_model_closed_forms() {
        let w: Vec<f64> = (0..16).map(|i| (i as f64 - 7.5) / 4.0).collect();
        let net = linear_network(w.clone(), vec![0.3], [1, 4, 4]);
        let x = random_input([1, 4, 4], 2);
        let cfg = ExplainConfig {
            deeplift_baseline: BaselineSpec::Blur { sigma: 1.0, kernel_size: 3 },
            ..Default::default()
        };
        let xb = cfg.deeplift_baseline.resolve(&x).unwrap();
        let sal = explain(&net, &x, 0, Method::Saliency, &cfg).unwrap().scores;
        let ixg = explain(&net, &x, 0, Method::InputXGradient, &cfg).unwrap().scores;
        let ig = explain(&net, &x, 0, Method::IntegratedGradients, &cfg).unwrap().scores;
        let dl = explain(&net, &x, 0, Method::DeepLift, &cfg).unwrap().scores;
        for d in 0..16 {
            assert!((sal[d] - w[d]).abs() < 1e-10);
            assert!((ixg[d] - x[d] * w[d]).abs() < 1e-10);
            assert!((ig[d] - x[d] * w[d]).abs() < 1e-10);
            assert!((dl[d] - (x[d] - xb[d]) * w[d]).abs() < 1e-10);
        }
    }
}
