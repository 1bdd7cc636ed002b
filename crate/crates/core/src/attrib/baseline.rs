use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Reference input representing "absence" of features.
#[derive(Debug, Clone, PartialEq)]
pub enum BaselineSpec {
    Zero,
    /// Gaussian blur with clamp-to-edge borders; `kernel_size` is odd.
    Blur { sigma: f64, kernel_size: usize },
    Custom(Tensor),
}

/// Normalised 1-D Gaussian taps.
pub fn gaussian_kernel(sigma: f64, size: usize) -> Result<Vec<f64>> {
    if size == 0 || size % 2 == 0 {
        return Err(Error::Config(format!("blur kernel size must be odd, got {size}")));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Config(format!("blur sigma must be positive, got {sigma}")));
    }
    let r = (size / 2) as f64;
    let taps: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - r;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = taps.iter().sum();
    Ok(taps.into_iter().map(|t| t / total).collect())
}

fn blur_axis(src: &[f64], dst: &mut [f64], h: usize, w: usize, taps: &[f64], horizontal: bool) {
    let r = (taps.len() / 2) as isize;
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                let o = k as isize - r;
                let (sy, sx) = if horizontal {
                    (y, (x as isize + o).clamp(0, w as isize - 1) as usize)
                } else {
                    ((y as isize + o).clamp(0, h as isize - 1) as usize, x)
                };
                acc += t * src[sy * w + sx];
            }
            dst[y * w + x] = acc;
        }
    }
}

impl BaselineSpec {
    pub fn resolve(&self, input: &Tensor) -> Result<Tensor> {
        match self {
            BaselineSpec::Zero => Ok(Tensor::zeros_like(input)),
            BaselineSpec::Custom(t) => {
                if t.shape() != input.shape() {
                    return Err(Error::Shape(format!(
                        "baseline shape {:?} differs from input {:?}",
                        t.shape(),
                        input.shape()
                    )));
                }
                Ok(t.clone())
            }
            &BaselineSpec::Blur { sigma, kernel_size } => {
                let taps = gaussian_kernel(sigma, kernel_size)?;
                let (c, h, w) = input.chw()?;
                let plane = h * w;
                let mut out = input.clone();
                let mut tmp = vec![0.0; plane];
                for ch in 0..c {
                    let p = &mut out.data_mut()[ch * plane..(ch + 1) * plane];
                    blur_axis(p, &mut tmp, h, w, &taps, true);
                    blur_axis(&tmp, p, h, w, &taps, false);
                }
                Ok(out)
            }
        }
    }
}
