//! Sequential CNNs: forward evaluation, reverse-mode gradients and model files.
//!
//! A [`ModelSpec`] describes the layer sequence; a [`WeightStore`] holds the
//! learned parameters. [`Network`] bundles the two after validating that they
//! agree and is the type the attribution methods operate on.

mod io;
mod layers;

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::rng_from;
use crate::tensor::Tensor;

pub use io::{load_model, save_model, MODEL_MAGIC};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerDesc {
    Conv2d {
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Relu,
    MaxPool2x2,
    GlobalAvgPool,
    Dense {
        out_features: usize,
    },
    Sigmoid,
}

impl LayerDesc {
    pub fn conv(out_channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        LayerDesc::Conv2d {
            out_channels,
            kernel,
            stride,
            padding,
        }
    }

    pub fn dense(out_features: usize) -> Self {
        LayerDesc::Dense { out_features }
    }

    pub fn has_params(&self) -> bool {
        matches!(self, LayerDesc::Conv2d { .. } | LayerDesc::Dense { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            LayerDesc::Conv2d { .. } => "conv2d",
            LayerDesc::Relu => "relu",
            LayerDesc::MaxPool2x2 => "maxpool2x2",
            LayerDesc::GlobalAvgPool => "global_avg_pool",
            LayerDesc::Dense { .. } => "dense",
            LayerDesc::Sigmoid => "sigmoid",
        }
    }

    /// Output shape for the given input shape.
    fn output_shape(&self, index: usize, input: &[usize]) -> Result<Vec<usize>> {
        let bad = |reason: String| Error::InvalidModel(format!("layer {index} ({}): {reason}", self.name()));
        match *self {
            LayerDesc::Conv2d {
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                let [_, h, w] = input[..] else {
                    return Err(bad(format!("expects C×H×W input, got {input:?}")));
                };
                if out_channels == 0 || kernel == 0 || stride == 0 {
                    return Err(bad("out_channels, kernel and stride must be positive".into()));
                }
                if kernel > h + 2 * padding || kernel > w + 2 * padding {
                    return Err(bad(format!(
                        "kernel {kernel} exceeds padded input {}×{}",
                        h + 2 * padding,
                        w + 2 * padding
                    )));
                }
                Ok(vec![
                    out_channels,
                    (h + 2 * padding - kernel) / stride + 1,
                    (w + 2 * padding - kernel) / stride + 1,
                ])
            }
            LayerDesc::Relu | LayerDesc::Sigmoid => Ok(input.to_vec()),
            LayerDesc::MaxPool2x2 => {
                let [c, h, w] = input[..] else {
                    return Err(bad(format!("expects C×H×W input, got {input:?}")));
                };
                if h < 2 || w < 2 {
                    return Err(bad(format!("spatial size {h}×{w} too small")));
                }
                Ok(vec![c, h / 2, w / 2])
            }
            LayerDesc::GlobalAvgPool => {
                let [c, h, w] = input[..] else {
                    return Err(bad(format!("expects C×H×W input, got {input:?}")));
                };
                if h * w == 0 {
                    return Err(bad("empty spatial extent".into()));
                }
                Ok(vec![c])
            }
            LayerDesc::Dense { out_features } => {
                if out_features == 0 {
                    return Err(bad("out_features must be positive".into()));
                }
                Ok(vec![out_features])
            }
        }
    }
}

/// Layer sequence with its input geometry and Grad-CAM target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    layers: Vec<LayerDesc>,
    input_shape: [usize; 3],
    num_classes: usize,
    gradcam_layer: usize,
    shapes: Vec<Vec<usize>>,
}

impl ModelSpec {
    pub fn new(
        layers: Vec<LayerDesc>,
        input_shape: [usize; 3],
        num_classes: usize,
        gradcam_layer: usize,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidModel("no layers".into()));
        }
        if num_classes == 0 {
            return Err(Error::InvalidModel("num_classes must be positive".into()));
        }
        let mut shapes = vec![input_shape.to_vec()];
        for (i, layer) in layers.iter().enumerate() {
            let next = layer.output_shape(i, shapes.last().unwrap())?;
            shapes.push(next);
        }
        let out = shapes.last().unwrap();
        if out[..] != [num_classes] {
            return Err(Error::InvalidModel(format!(
                "final layer produces shape {out:?}, expected [{num_classes}]"
            )));
        }
        match layers.get(gradcam_layer) {
            Some(LayerDesc::Conv2d { .. }) => {}
            _ => {
                return Err(Error::InvalidModel(format!(
                    "gradcam_layer {gradcam_layer} is not a convolution"
                )))
            }
        }
        Ok(Self {
            layers,
            input_shape,
            num_classes,
            gradcam_layer,
            shapes,
        })
    }

    /// Small CNN used for the synthetic benchmark.
    ///
    /// conv3×3 → relu → pool → conv3×3 → relu → pool → conv3×3 → relu →
    /// global average pool → dense. The last convolution is the Grad-CAM layer.
    pub fn default_cnn(input_shape: [usize; 3], num_classes: usize) -> Result<Self> {
        Self::new(
            vec![
                LayerDesc::conv(8, 3, 1, 1),
                LayerDesc::Relu,
                LayerDesc::MaxPool2x2,
                LayerDesc::conv(16, 3, 1, 1),
                LayerDesc::Relu,
                LayerDesc::MaxPool2x2,
                LayerDesc::conv(24, 3, 1, 1),
                LayerDesc::Relu,
                LayerDesc::GlobalAvgPool,
                LayerDesc::dense(num_classes),
            ],
            input_shape,
            num_classes,
            6,
        )
    }

    pub fn layers(&self) -> &[LayerDesc] {
        &self.layers
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn gradcam_layer(&self) -> usize {
        self.gradcam_layer
    }

    /// Input shape of layer `i` (`i == layers.len()` gives the output shape).
    pub fn shape_at(&self, i: usize) -> &[usize] {
        &self.shapes[i]
    }

    /// Number of leading layers that produce the logits. A trailing sigmoid
    /// is treated as the classification head and excluded.
    pub fn logit_layers(&self) -> usize {
        match self.layers.last() {
            Some(LayerDesc::Sigmoid) => self.layers.len() - 1,
            _ => self.layers.len(),
        }
    }

    pub fn has_relu(&self) -> bool {
        self.layers.iter().any(|l| matches!(l, LayerDesc::Relu))
    }

    /// Expected `(weight, bias)` shapes of layer `i`, if it has parameters.
    pub fn param_shapes(&self, i: usize) -> Option<(Vec<usize>, Vec<usize>)> {
        let input = &self.shapes[i];
        match self.layers[i] {
            LayerDesc::Conv2d {
                out_channels,
                kernel,
                ..
            } => Some((
                vec![out_channels, input[0], kernel, kernel],
                vec![out_channels],
            )),
            LayerDesc::Dense { out_features } => {
                let fan_in: usize = input.iter().product();
                Some((vec![out_features, fan_in], vec![out_features]))
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// Per-layer parameters; `None` for parameter-free layers.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightStore {
    layers: Vec<Option<LayerParams>>,
}

impl WeightStore {
    pub fn new(layers: Vec<Option<LayerParams>>) -> Self {
        Self { layers }
    }

    pub fn zeros(spec: &ModelSpec) -> Self {
        let layers = (0..spec.layers.len())
            .map(|i| {
                spec.param_shapes(i).map(|(w, b)| LayerParams {
                    weight: Tensor::zeros(&w),
                    bias: Tensor::zeros(&b),
                })
            })
            .collect();
        Self { layers }
    }

    /// He-normal weights, zero biases.
    pub fn init(spec: &ModelSpec, seed: u64) -> Self {
        let mut store = Self::zeros(spec);
        for (i, params) in store.layers.iter_mut().enumerate() {
            let Some(p) = params else { continue };
            let fan_in: usize = p.weight.shape()[1..].iter().product();
            let std = (2.0 / fan_in as f64).sqrt();
            let mut rng = rng_from(seed, &[i as u64]);
            for v in p.weight.data_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v = z * std;
            }
        }
        store
    }

    pub fn layer(&self, i: usize) -> Option<&LayerParams> {
        self.layers.get(i).and_then(|p| p.as_ref())
    }

    pub fn layer_mut(&mut self, i: usize) -> Option<&mut LayerParams> {
        self.layers.get_mut(i).and_then(|p| p.as_mut())
    }

    pub fn layers(&self) -> &[Option<LayerParams>] {
        &self.layers
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .flatten()
            .map(|p| p.weight.len() + p.bias.len())
            .sum()
    }

    /// Visits every scalar parameter mutably, in layer order (weights then bias).
    pub fn for_each_param_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        for p in self.layers.iter_mut().flatten() {
            p.weight.data_mut().iter_mut().for_each(&mut f);
            p.bias.data_mut().iter_mut().for_each(&mut f);
        }
    }

    pub fn params(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flatten()
            .flat_map(|p| p.weight.data().iter().chain(p.bias.data()).copied())
    }

    /// `self += k * other`; shapes must match.
    pub fn axpy(&mut self, k: f64, other: &WeightStore) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::Shape("weight stores have different layer counts".into()));
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            match (a, b) {
                (Some(a), Some(b)) => {
                    a.weight.axpy(k, &b.weight)?;
                    a.bias.axpy(k, &b.bias)?;
                }
                (None, None) => {}
                _ => return Err(Error::Shape("weight stores disagree on parameter layers".into())),
            }
        }
        Ok(())
    }

    fn validate(&self, spec: &ModelSpec) -> Result<()> {
        if self.layers.len() != spec.layers.len() {
            return Err(Error::Shape(format!(
                "weight store has {} layers, spec has {}",
                self.layers.len(),
                spec.layers.len()
            )));
        }
        for (i, params) in self.layers.iter().enumerate() {
            match (spec.param_shapes(i), params) {
                (None, None) => {}
                (Some((w, b)), Some(p)) if p.weight.shape() == w && p.bias.shape() == b => {}
                (expected, _) => {
                    return Err(Error::Shape(format!(
                        "layer {i} ({}): parameters do not match expected shapes {expected:?}",
                        spec.layers[i].name()
                    )))
                }
            }
        }
        Ok(())
    }
}

/// Which scalar the attribution gradients differentiate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Target {
    #[default]
    Logit,
    Probability,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReluBackwardMode {
    #[default]
    Standard,
    /// Negative upstream gradients are zeroed at every ReLU.
    Guided,
}

/// Activations of one forward pass. `activations[0]` is the input and
/// `activations[i + 1]` the output of layer `i`.
#[derive(Debug, Clone)]
pub struct ForwardRecord {
    pub activations: Vec<Tensor>,
    pub logits: Tensor,
    pub probabilities: Tensor,
}

impl ForwardRecord {
    pub fn score(&self, class: usize, target: Target) -> f64 {
        match target {
            Target::Logit => self.logits[class],
            Target::Probability => self.probabilities[class],
        }
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// A validated model: spec plus matching weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: ModelSpec,
    weights: WeightStore,
}

impl Network {
    pub fn new(spec: ModelSpec, weights: WeightStore) -> Result<Self> {
        weights.validate(&spec)?;
        Ok(Self { spec, weights })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn weights(&self) -> &WeightStore {
        &self.weights
    }

    pub fn into_parts(self) -> (ModelSpec, WeightStore) {
        (self.spec, self.weights)
    }

    pub fn num_classes(&self) -> usize {
        self.spec.num_classes
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        if input.shape() != self.spec.input_shape {
            return Err(Error::Shape(format!(
                "layer 0 ({}): input shape {:?} does not match model input {:?}",
                self.spec.layers[0].name(),
                input.shape(),
                self.spec.input_shape
            )));
        }
        Ok(())
    }

    fn check_class(&self, class: usize) -> Result<()> {
        if class >= self.spec.num_classes {
            return Err(Error::ClassIndex {
                index: class,
                num_classes: self.spec.num_classes,
            });
        }
        Ok(())
    }

    pub fn forward(&self, input: &Tensor) -> Result<ForwardRecord> {
        self.check_input(input)?;
        let mut activations = Vec::with_capacity(self.spec.layers.len() + 1);
        activations.push(input.clone());
        for (i, layer) in self.spec.layers.iter().enumerate() {
            let out = layers::forward(layer, self.weights.layer(i), activations.last().unwrap());
            activations.push(out);
        }
        let head = self.spec.logit_layers();
        let logits = activations[head].clone();
        let probabilities = if head < self.spec.layers.len() {
            activations.last().unwrap().clone()
        } else {
            logits.map(sigmoid)
        };
        Ok(ForwardRecord {
            activations,
            logits,
            probabilities,
        })
    }

    /// Logits only, without retaining intermediate activations.
    pub fn logits(&self, input: &Tensor) -> Result<Tensor> {
        self.check_input(input)?;
        let head = self.spec.logit_layers();
        let mut x = input.clone();
        for (i, layer) in self.spec.layers[..head].iter().enumerate() {
            x = layers::forward(layer, self.weights.layer(i), &x);
        }
        Ok(x)
    }

    pub fn probabilities(&self, input: &Tensor) -> Result<Tensor> {
        Ok(self.logits(input)?.map(sigmoid))
    }

    pub fn score(&self, input: &Tensor, class: usize, target: Target) -> Result<f64> {
        self.check_class(class)?;
        let z = self.logits(input)?[class];
        Ok(match target {
            Target::Logit => z,
            Target::Probability => sigmoid(z),
        })
    }

    /// Backpropagates `upstream` (gradient w.r.t. the output of layer
    /// `from - 1`) down to the network input. `capture` receives the gradient
    /// w.r.t. each layer output on the way.
    fn backward(
        &self,
        record: &ForwardRecord,
        from: usize,
        upstream: Tensor,
        mode: ReluBackwardMode,
        mut weight_grads: Option<&mut WeightStore>,
        mut capture: impl FnMut(usize, &Tensor),
    ) -> Tensor {
        let mut grad = upstream;
        for i in (0..from).rev() {
            capture(i, &grad);
            let layer = &self.spec.layers[i];
            let params = self.weights.layer(i);
            let input = &record.activations[i];
            let output = &record.activations[i + 1];
            if let Some(store) = weight_grads.as_deref_mut() {
                if let Some(g) = store.layer_mut(i) {
                    layers::accumulate_param_grads(layer, input, &grad, g);
                }
            }
            if i == 0 && weight_grads.is_some() {
                break;
            }
            grad = layers::backward(layer, params, input, output, &grad, mode);
        }
        grad
    }

    fn output_seed(&self, record: &ForwardRecord, class: usize, target: Target) -> Tensor {
        let mut seed = Tensor::zeros(&[self.spec.num_classes]);
        seed[class] = match target {
            Target::Logit => 1.0,
            Target::Probability => {
                let p = record.probabilities[class];
                p * (1.0 - p)
            }
        };
        seed
    }

    /// Gradient of the class logit w.r.t. the input.
    pub fn grad_input(&self, input: &Tensor, class: usize, mode: ReluBackwardMode) -> Result<Tensor> {
        self.grad_input_target(input, class, mode, Target::Logit)
    }

    pub fn grad_input_target(
        &self,
        input: &Tensor,
        class: usize,
        mode: ReluBackwardMode,
        target: Target,
    ) -> Result<Tensor> {
        self.check_class(class)?;
        let record = self.forward(input)?;
        let seed = self.output_seed(&record, class, target);
        Ok(self.backward(&record, self.spec.logit_layers(), seed, mode, None, |_, _| {}))
    }

    /// Output activations of `layer` and the gradient of the class logit with
    /// respect to them.
    pub fn grad_layer(&self, input: &Tensor, class: usize, layer: usize) -> Result<(Tensor, Tensor)> {
        self.check_class(class)?;
        let head = self.spec.logit_layers();
        if layer >= head {
            return Err(Error::LayerIndex {
                index: layer,
                reason: format!("model has {head} layers before the output head"),
            });
        }
        if self.spec.shape_at(layer + 1).len() != 3 {
            return Err(Error::LayerIndex {
                index: layer,
                reason: format!("layer {} does not produce a feature map", self.spec.layers[layer].name()),
            });
        }
        let record = self.forward(input)?;
        let seed = self.output_seed(&record, class, Target::Logit);
        let mut captured = None;
        self.backward(&record, head, seed, ReluBackwardMode::Standard, None, |i, g| {
            if i == layer {
                captured = Some(g.clone());
            }
        });
        let mut activations = record.activations;
        Ok((activations.swap_remove(layer + 1), captured.expect("layer visited")))
    }

    /// Mean binary cross-entropy over classes and its gradient w.r.t. every
    /// parameter.
    pub fn loss_and_grad(&self, input: &Tensor, labels: &[f64]) -> Result<(f64, WeightStore)> {
        let c = self.spec.num_classes;
        if labels.len() != c {
            return Err(Error::Shape(format!(
                "label vector has {} entries, model has {c} classes",
                labels.len()
            )));
        }
        let record = self.forward(input)?;
        let loss = bce_with_logits(record.logits.data(), labels);
        let upstream = Tensor::from_vec(
            record
                .probabilities
                .data()
                .iter()
                .zip(labels)
                .map(|(p, y)| (p - y) / c as f64)
                .collect(),
        );
        let mut grads = WeightStore::zeros(&self.spec);
        self.backward(
            &record,
            self.spec.logit_layers(),
            upstream,
            ReluBackwardMode::Standard,
            Some(&mut grads),
            |_, _| {},
        );
        Ok((loss, grads))
    }

    pub fn grad_weights(&self, input: &Tensor, labels: &[f64]) -> Result<WeightStore> {
        Ok(self.loss_and_grad(input, labels)?.1)
    }

    /// Replaces the weights, validating shapes.
    pub fn with_weights(&self, weights: WeightStore) -> Result<Network> {
        Network::new(self.spec.clone(), weights)
    }
}

/// Numerically stable mean BCE computed from logits.
pub fn bce_with_logits(logits: &[f64], labels: &[f64]) -> f64 {
    let n = logits.len() as f64;
    logits
        .iter()
        .zip(labels)
        .map(|(&z, &y)| z.max(0.0) - z * y + (-z.abs()).exp().ln_1p())
        .sum::<f64>()
        / n
}

pub(crate) use layers::{backward as layer_backward, forward as layer_forward};
