use super::{sigmoid, LayerDesc, LayerParams, ReluBackwardMode};
use crate::tensor::Tensor;

pub(crate) fn forward(layer: &LayerDesc, params: Option<&LayerParams>, x: &Tensor) -> Tensor {
    match *layer {
        LayerDesc::Conv2d {
            out_channels,
            kernel,
            stride,
            padding,
        } => conv_forward(x, params.expect("conv params"), out_channels, kernel, stride, padding),
        LayerDesc::Relu => x.map(|v| v.max(0.0)),
        LayerDesc::Sigmoid => x.map(sigmoid),
        LayerDesc::MaxPool2x2 => maxpool_forward(x),
        LayerDesc::GlobalAvgPool => gap_forward(x),
        LayerDesc::Dense { out_features } => dense_forward(x, params.expect("dense params"), out_features),
    }
}

/// Gradient w.r.t. the layer input given the gradient w.r.t. its output.
pub(crate) fn backward(
    layer: &LayerDesc,
    params: Option<&LayerParams>,
    input: &Tensor,
    output: &Tensor,
    grad: &Tensor,
    mode: ReluBackwardMode,
) -> Tensor {
    match *layer {
        LayerDesc::Conv2d {
            kernel,
            stride,
            padding,
            ..
        } => conv_backward_input(input.shape(), params.expect("conv params"), grad, kernel, stride, padding),
        LayerDesc::Relu => {
            let mut g = grad.clone();
            for (gv, &xv) in g.data_mut().iter_mut().zip(input.data()) {
                // Subgradient at exactly zero is zero.
                let pass = xv > 0.0 && (mode == ReluBackwardMode::Standard || *gv > 0.0);
                if !pass {
                    *gv = 0.0;
                }
            }
            g
        }
        LayerDesc::Sigmoid => {
            let mut g = grad.clone();
            for (gv, &s) in g.data_mut().iter_mut().zip(output.data()) {
                *gv *= s * (1.0 - s);
            }
            g
        }
        LayerDesc::MaxPool2x2 => maxpool_backward(input, grad),
        LayerDesc::GlobalAvgPool => {
            let [c, h, w] = input.shape()[..] else { unreachable!() };
            let plane = h * w;
            let mut data = vec![0.0; c * plane];
            for ch in 0..c {
                let v = grad[ch] / plane as f64;
                data[ch * plane..(ch + 1) * plane].fill(v);
            }
            Tensor::new(input.shape().to_vec(), data).unwrap()
        }
        LayerDesc::Dense { out_features } => {
            let p = params.expect("dense params");
            let n_in = input.len();
            let w = p.weight.data();
            let mut data = vec![0.0; n_in];
            for o in 0..out_features {
                let g = grad[o];
                if g == 0.0 {
                    continue;
                }
                for (d, wv) in data.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                    *d += g * wv;
                }
            }
            Tensor::new(input.shape().to_vec(), data).unwrap()
        }
    }
}

/// Adds the parameter gradients of one layer into `out`.
pub(crate) fn accumulate_param_grads(
    layer: &LayerDesc,
    input: &Tensor,
    grad: &Tensor,
    out: &mut LayerParams,
) {
    match *layer {
        LayerDesc::Conv2d {
            kernel,
            stride,
            padding,
            ..
        } => {
            let [ci_n, h, w] = input.shape()[..] else { unreachable!() };
            let [co_n, ho, wo] = grad.shape()[..] else { unreachable!() };
            let np = ho * wo;
            let taps = ci_n * kernel * kernel;
            let col = im2col(input.data(), ci_n, h, w, kernel, stride, padding, ho, wo);
            let g = grad.data();
            let dw = out.weight.data_mut();
            for co in 0..co_n {
                let gplane = &g[co * np..(co + 1) * np];
                out.bias[co] += gplane.iter().sum::<f64>();
                for r in 0..taps {
                    dw[co * taps + r] += dot(gplane, &col[r * np..(r + 1) * np]);
                }
            }
        }
        LayerDesc::Dense { out_features } => {
            let n_in = input.len();
            let x = input.data();
            let dw = out.weight.data_mut();
            for o in 0..out_features {
                let g = grad[o];
                out.bias[o] += g;
                if g == 0.0 {
                    continue;
                }
                for (d, xv) in dw[o * n_in..(o + 1) * n_in].iter_mut().zip(x) {
                    *d += g * xv;
                }
            }
        }
        _ => {}
    }
}

/// Output columns `ox` whose input column `ox*stride + kx - padding` lies in `[0, w)`.
#[inline]
fn valid_range(kx: usize, padding: usize, stride: usize, w: usize, wo: usize) -> (usize, usize) {
    let lo = if kx >= padding { 0 } else { (padding - kx).div_ceil(stride) };
    // ox*stride + kx - padding <= w - 1
    let hi = if w + padding >= kx + 1 {
        ((w + padding - kx - 1) / stride + 1).min(wo)
    } else {
        0
    };
    (lo.min(hi), hi)
}

/// Patch matrix of `x`: row `(ci·k + ky)·k + kx`, column `oy·wo + ox`,
/// zero where the tap falls in the padding.
fn im2col(x: &[f64], ci_n: usize, h: usize, w: usize, kernel: usize, stride: usize, padding: usize, ho: usize, wo: usize) -> Vec<f64> {
    let p = ho * wo;
    let mut col = vec![0.0; ci_n * kernel * kernel * p];
    for ci in 0..ci_n {
        let xplane = &x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..kernel {
            for kx in 0..kernel {
                let r = (ci * kernel + ky) * kernel + kx;
                let row = &mut col[r * p..(r + 1) * p];
                let (ox0, ox1) = valid_range(kx, padding, stride, w, wo);
                for oy in 0..ho {
                    let iy = (oy * stride + ky) as isize - padding as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let xrow = &xplane[iy as usize * w..(iy as usize + 1) * w];
                    let out = &mut row[oy * wo..(oy + 1) * wo];
                    for ox in ox0..ox1 {
                        out[ox] = xrow[ox * stride + kx - padding];
                    }
                }
            }
        }
    }
    col
}

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yv, xv) in y.iter_mut().zip(x) {
        *yv += a * xv;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..4 {
            acc[i] += x[i] * y[i];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn conv_forward(
    x: &Tensor,
    p: &LayerParams,
    co_n: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Tensor {
    let [ci_n, h, w] = x.shape()[..] else { unreachable!() };
    let ho = (h + 2 * padding - kernel) / stride + 1;
    let wo = (w + 2 * padding - kernel) / stride + 1;
    let np = ho * wo;
    let taps = ci_n * kernel * kernel;
    let col = im2col(x.data(), ci_n, h, w, kernel, stride, padding, ho, wo);
    let wd = p.weight.data();
    let mut out = vec![0.0; co_n * np];
    for co in 0..co_n {
        let oplane = &mut out[co * np..(co + 1) * np];
        oplane.fill(p.bias[co]);
        for r in 0..taps {
            let wv = wd[co * taps + r];
            if wv != 0.0 {
                axpy(oplane, wv, &col[r * np..(r + 1) * np]);
            }
        }
    }
    Tensor::new(vec![co_n, ho, wo], out).unwrap()
}

fn conv_backward_input(
    in_shape: &[usize],
    p: &LayerParams,
    grad: &Tensor,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Tensor {
    let [ci_n, h, w] = in_shape[..] else { unreachable!() };
    let [co_n, ho, wo] = grad.shape()[..] else { unreachable!() };
    let np = ho * wo;
    let taps = ci_n * kernel * kernel;
    let g = grad.data();
    let wd = p.weight.data();
    let mut gcol = vec![0.0; taps * np];
    for co in 0..co_n {
        let gplane = &g[co * np..(co + 1) * np];
        if gplane.iter().all(|&v| v == 0.0) {
            continue;
        }
        for r in 0..taps {
            let wv = wd[co * taps + r];
            if wv != 0.0 {
                axpy(&mut gcol[r * np..(r + 1) * np], wv, gplane);
            }
        }
    }
    let mut gx = vec![0.0; ci_n * h * w];
    for ci in 0..ci_n {
        let xplane = &mut gx[ci * h * w..(ci + 1) * h * w];
        for ky in 0..kernel {
            for kx in 0..kernel {
                let r = (ci * kernel + ky) * kernel + kx;
                let row = &gcol[r * np..(r + 1) * np];
                let (ox0, ox1) = valid_range(kx, padding, stride, w, wo);
                for oy in 0..ho {
                    let iy = (oy * stride + ky) as isize - padding as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let xrow = &mut xplane[iy as usize * w..(iy as usize + 1) * w];
                    let grow = &row[oy * wo..(oy + 1) * wo];
                    if stride == 1 {
                        let shift = kx as isize - padding as isize;
                        let xs = &mut xrow[(ox0 as isize + shift) as usize..(ox1 as isize + shift) as usize];
                        for (xv, gv) in xs.iter_mut().zip(&grow[ox0..ox1]) {
                            *xv += gv;
                        }
                    } else {
                        for ox in ox0..ox1 {
                            xrow[ox * stride + kx - padding] += grow[ox];
                        }
                    }
                }
            }
        }
    }
    Tensor::new(in_shape.to_vec(), gx).unwrap()
}

/// Index of the winning element of each 2×2 window; the first maximum in
/// row-major order wins ties.
fn maxpool_argmax(x: &Tensor) -> Vec<usize> {
    let [c, h, w] = x.shape()[..] else { unreachable!() };
    let (ho, wo) = (h / 2, w / 2);
    let d = x.data();
    let mut idx = Vec::with_capacity(c * ho * wo);
    for ch in 0..c {
        for oy in 0..ho {
            for ox in 0..wo {
                let base = ch * h * w;
                let cands = [
                    base + 2 * oy * w + 2 * ox,
                    base + 2 * oy * w + 2 * ox + 1,
                    base + (2 * oy + 1) * w + 2 * ox,
                    base + (2 * oy + 1) * w + 2 * ox + 1,
                ];
                let mut best = cands[0];
                for &k in &cands[1..] {
                    if d[k] > d[best] {
                        best = k;
                    }
                }
                idx.push(best);
            }
        }
    }
    idx
}

fn maxpool_forward(x: &Tensor) -> Tensor {
    let [c, h, w] = x.shape()[..] else { unreachable!() };
    let data = maxpool_argmax(x).into_iter().map(|k| x[k]).collect();
    Tensor::new(vec![c, h / 2, w / 2], data).unwrap()
}

fn maxpool_backward(input: &Tensor, grad: &Tensor) -> Tensor {
    let mut gx = Tensor::zeros_like(input);
    for (o, k) in maxpool_argmax(input).into_iter().enumerate() {
        gx[k] += grad[o];
    }
    gx
}

fn gap_forward(x: &Tensor) -> Tensor {
    let [c, h, w] = x.shape()[..] else { unreachable!() };
    let plane = h * w;
    let data = (0..c)
        .map(|ch| x.data()[ch * plane..(ch + 1) * plane].iter().sum::<f64>() / plane as f64)
        .collect();
    Tensor::from_vec(data)
}

fn dense_forward(x: &Tensor, p: &LayerParams, out_features: usize) -> Tensor {
    let n_in = x.len();
    let w = p.weight.data();
    let data = (0..out_features)
        .map(|o| {
            p.bias[o]
                + w[o * n_in..(o + 1) * n_in]
                    .iter()
                    .zip(x.data())
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
        })
        .collect();
    Tensor::from_vec(data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn valid_range_matches_bruteforce() {
        for w in 1..7 {
            for kernel in 1..=w.min(4) + 2 {
                for padding in 0..3 {
                    if kernel > w + 2 * padding {
                        continue;
                    }
                    for stride in 1..4 {
                        let wo = (w + 2 * padding - kernel) / stride + 1;
                        for kx in 0..kernel {
                            let expected: Vec<usize> = (0..wo)
                                .filter(|&ox| {
                                    let ix = (ox * stride + kx) as isize - padding as isize;
                                    ix >= 0 && ix < w as isize
                                })
                                .collect();
                            let (lo, hi) = valid_range(kx, padding, stride, w, wo);
                            assert_eq!((lo..hi).collect::<Vec<_>>(), expected);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn maxpool_ties_route_to_first() {
        let x = Tensor::new(vec![1, 2, 2], vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        let g = maxpool_backward(&x, &Tensor::new(vec![1, 1, 1], vec![2.0]).unwrap());
        assert_eq!(g.data(), &[2.0, 0.0, 0.0, 0.0]);
        let x = Tensor::new(vec![1, 2, 2], vec![0.0, 3.0, 1.0, 3.0]).unwrap();
        let g = maxpool_backward(&x, &Tensor::new(vec![1, 1, 1], vec![1.0]).unwrap());
        assert_eq!(g.data(), &[0.0, 1.0, 0.0, 0.0]);
    }
}
