use super::{guided_backprop, timed, AttributionMap, Resolution};
use crate::error::Result;
use crate::nn::Network;
use crate::tensor::Tensor;

/// Bilinear resize of an `h×w` plane with half-pixel centres and edge
/// clamping.
pub fn bilinear_upsample(src: &[f64], h: usize, w: usize, out_h: usize, out_w: usize) -> Vec<f64> {
    let coord = |o: usize, n_in: usize, n_out: usize| {
        let s = ((o as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64);
        let i0 = s.floor() as usize;
        (i0, (i0 + 1).min(n_in - 1), s - i0 as f64)
    };
    let mut out = Vec::with_capacity(out_h * out_w);
    for y in 0..out_h {
        let (y0, y1, fy) = coord(y, h, out_h);
        for x in 0..out_w {
            let (x0, x1, fx) = coord(x, w, out_w);
            let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
            let bottom = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    out
}

/// `ReLU(Σ_k α_k A^k)` at the Grad-CAM layer's resolution, as `1×h×w`.
pub fn grad_cam_raw(net: &Network, input: &Tensor, class: usize) -> Result<Tensor> {
    let (acts, grads) = net.grad_layer(input, class, net.spec().gradcam_layer())?;
    let (k, h, w) = acts.chw()?;
    let plane = h * w;
    let mut map = vec![0.0; plane];
    for ch in 0..k {
        let alpha = grads.data()[ch * plane..(ch + 1) * plane].iter().sum::<f64>() / plane as f64;
        for (m, a) in map.iter_mut().zip(&acts.data()[ch * plane..(ch + 1) * plane]) {
            *m += alpha * a;
        }
    }
    Tensor::new(vec![1, h, w], map.into_iter().map(|v| v.max(0.0)).collect())
}

pub fn grad_cam(net: &Network, input: &Tensor, class: usize) -> Result<AttributionMap> {
    timed(|| {
        let raw = grad_cam_raw(net, input, class)?;
        let (_, h, w) = raw.chw()?;
        let (_, out_h, out_w) = input.chw()?;
        let up = bilinear_upsample(raw.data(), h, w, out_h, out_w);
        Ok(
            AttributionMap::new("grad_cam", class, Resolution::Upsampled, Tensor::new(vec![1, out_h, out_w], up)?)
                .with_meta("layer", net.spec().gradcam_layer())
                .with_meta("upsampling", "bilinear_half_pixel"),
        )
    })
}

pub fn guided_grad_cam(net: &Network, input: &Tensor, class: usize) -> Result<AttributionMap> {
    timed(|| {
        let cam = grad_cam(net, input, class)?.scores.broadcast_channels(input.shape()[0])?;
        let guided = guided_backprop(net, input, class)?.scores;
        Ok(AttributionMap::new("guided_grad_cam", class, Resolution::PerPixel, cam.mul(&guided)?))
    })
}
