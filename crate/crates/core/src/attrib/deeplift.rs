use super::{timed, AttributionMap, BaselineSpec, Resolution};
use crate::error::{Error, Result};
use crate::nn::{layer_backward, layer_forward, LayerDesc, LayerParams, Network, ReluBackwardMode};
use crate::tensor::Tensor;

const DEGENERATE: f64 = 1e-9;

fn without_bias(p: &LayerParams, abs: bool) -> LayerParams {
    LayerParams {
        weight: if abs { p.weight.map(f64::abs) } else { p.weight.clone() },
        bias: Tensor::zeros_like(&p.bias),
    }
}

/// Rescale rule through a linear layer: output relevance `r_j` is shared
/// among inputs in proportion to `w_ij Δx_i`. Neurons whose net difference
/// is below [`DEGENERATE`] share in proportion to `|w_ij Δx_i|` instead.
fn rescale_linear(
    layer: &LayerDesc,
    params: Option<&LayerParams>,
    x: &Tensor,
    x_ref: &Tensor,
    relevance: &Tensor,
) -> Result<Tensor> {
    let dx = x.sub(x_ref)?;
    let signed = params.map(|p| without_bias(p, false));
    let denom = layer_forward(layer, signed.as_ref(), &dx);
    let mut m = Tensor::zeros_like(&denom);
    let mut m_abs = Tensor::zeros_like(&denom);
    let mut degenerate = false;
    for j in 0..denom.len() {
        if denom[j].abs() >= DEGENERATE {
            m[j] = relevance[j] / denom[j];
        } else if relevance[j] != 0.0 {
            degenerate = true;
        }
    }
    let mut out = layer_backward(layer, params, x, &denom, &m, ReluBackwardMode::Standard).mul(&dx)?;
    if degenerate {
        let abs = params.map(|p| without_bias(p, true));
        let adx = dx.map(f64::abs);
        let mass = layer_forward(layer, abs.as_ref(), &adx);
        for j in 0..denom.len() {
            if denom[j].abs() < DEGENERATE && mass[j] > 0.0 {
                m_abs[j] = relevance[j] / mass[j];
            }
        }
        let share = layer_backward(layer, abs.as_ref(), x, &mass, &m_abs, ReluBackwardMode::Standard).mul(&adx)?;
        out.add_assign(&share)?;
    }
    Ok(out)
}

/// DeepLift with the rescale rule, attributing `logit_c(x) − logit_c(x′)`.
/// Element-wise activations pass relevance unchanged; max-pooling routes it
/// to the maximal input of `x`.
pub fn deeplift(net: &Network, input: &Tensor, class: usize, baseline: &BaselineSpec) -> Result<AttributionMap> {
    timed(|| {
        let reference = baseline.resolve(input)?;
        net.score(input, class, crate::nn::Target::Logit)?;
        let rx = net.forward(input)?;
        let rb = net.forward(&reference)?;
        let spec = net.spec();
        let delta = rx.logits[class] - rb.logits[class];
        let mut r = Tensor::zeros(&[spec.num_classes()]);
        r[class] = delta;
        for i in (0..spec.logit_layers()).rev() {
            let layer = &spec.layers()[i];
            let (xa, xr) = (&rx.activations[i], &rb.activations[i]);
            r = match layer {
                LayerDesc::Relu | LayerDesc::Sigmoid => r,
                LayerDesc::MaxPool2x2 => {
                    layer_backward(layer, None, xa, &rx.activations[i + 1], &r, ReluBackwardMode::Standard)
                }
                _ => rescale_linear(layer, net.weights().layer(i), xa, xr, &r)?,
            };
            if !r.all_finite() {
                return Err(Error::Numerical(format!("non-finite relevance below layer {i} ({})", layer.name())));
            }
        }
        Ok(AttributionMap::new("deeplift", class, Resolution::PerPixel, r)
            .with_meta("rule", "rescale")
            .with_meta("delta", delta))
    })
}
