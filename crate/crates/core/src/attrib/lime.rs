use std::time::Instant;

use rand::Rng as _;

use super::{AttributionMap, Resolution};
use crate::error::{Error, Result};
use crate::nn::Network;
use crate::rng::rng_from;
use crate::slic::Segmentation;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct LimeConfig {
    /// Superpixels requested from SLIC.
    pub num_segments: usize,
    pub num_samples: usize,
    pub ridge_lambda: f64,
    /// Width of the exponential kernel on the per-feature mean squared
    /// distance between the input and a perturbed copy.
    pub kernel_width: f64,
    pub seed: u64,
}

impl Default for LimeConfig {
    fn default() -> Self {
        Self {
            num_segments: 64,
            num_samples: 6000,
            ridge_lambda: 1e-3,
            kernel_width: 0.25,
            seed: 0,
        }
    }
}

/// Surrogate `g(z) = intercept + coefficients · z` for one output.
#[derive(Debug, Clone, PartialEq)]
pub struct LimeFit {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

/// Cholesky solve of the symmetric positive-definite `n×n` system `a` for
/// each right-hand side in place.
fn solve_spd(mut a: Vec<f64>, n: usize, rhs: &mut [Vec<f64>]) -> Result<()> {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > 0.0 && d.is_finite()) {
            return Err(Error::Numerical(format!(
                "surrogate normal equations are singular (pivot {j} = {d:e})"
            )));
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    for b in rhs.iter_mut() {
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= a[i * n + k] * b[k];
            }
            b[i] = s / a[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..n {
                s -= a[k * n + i] * b[k];
            }
            b[i] = s / a[i * n + i];
        }
    }
    Ok(())
}

/// Fits one weighted ridge surrogate per output of `f` over random segment
/// masks. Dropped segments are set to zero.
pub fn lime_with(
    input: &Tensor,
    seg: &Segmentation,
    cfg: &LimeConfig,
    outputs: usize,
    f: impl Fn(&Tensor) -> Result<Vec<f64>>,
) -> Result<Vec<LimeFit>> {
    let (c, h, w) = input.chw()?;
    if (seg.height, seg.width) != (h, w) {
        return Err(Error::Shape(format!(
            "segmentation is {}×{}, image is {h}×{w}",
            seg.height, seg.width
        )));
    }
    let m = seg.num_segments;
    if cfg.num_samples < m + 1 {
        return Err(Error::Config(format!(
            "lime needs at least {} samples for {m} segments, got {}",
            m + 1,
            cfg.num_samples
        )));
    }
    if !(cfg.ridge_lambda >= 0.0) || !(cfg.kernel_width > 0.0) {
        return Err(Error::Config("ridge_lambda must be ≥ 0 and kernel_width > 0".into()));
    }

    let plane = h * w;
    let d = (c * plane) as f64;
    // Squared norm of each segment's pixels: the distance cost of dropping it.
    let mut seg_energy = vec![0.0; m];
    for ch in 0..c {
        for p in 0..plane {
            seg_energy[seg.labels[p]] += input[ch * plane + p].powi(2);
        }
    }

    let n = m + 1;
    let mut gram = vec![0.0; n * n];
    let mut rhs = vec![vec![0.0; n]; outputs];
    let mut rng = rng_from(cfg.seed, &[0x11e]);
    let mut z = vec![false; m];
    let mut perturbed = input.clone();
    let mut features = Vec::with_capacity(n);
    for _ in 0..cfg.num_samples {
        for zi in z.iter_mut() {
            *zi = rng.random_bool(0.5);
        }
        for ch in 0..c {
            for p in 0..plane {
                let i = ch * plane + p;
                perturbed[i] = if z[seg.labels[p]] { input[i] } else { 0.0 };
            }
        }
        let dist2: f64 = (0..m).filter(|&k| !z[k]).map(|k| seg_energy[k]).sum();
        let weight = (-dist2 / (cfg.kernel_width * cfg.kernel_width * d)).exp();
        let y = f(&perturbed)?;
        if y.len() != outputs {
            return Err(Error::Shape(format!("score function returned {} values, expected {outputs}", y.len())));
        }
        features.clear();
        features.push(0);
        features.extend((0..m).filter(|&k| z[k]).map(|k| k + 1));
        for &a in &features {
            for &b in &features {
                gram[a * n + b] += weight;
            }
            for (r, &yo) in rhs.iter_mut().zip(&y) {
                r[a] += weight * yo;
            }
        }
    }
    for k in 1..n {
        gram[k * n + k] += cfg.ridge_lambda;
    }
    solve_spd(gram, n, &mut rhs)?;
    Ok(rhs
        .into_iter()
        .map(|beta| LimeFit {
            intercept: beta[0],
            coefficients: beta[1..].to_vec(),
        })
        .collect())
}

fn to_map(fit: LimeFit, class: usize, seg: &Segmentation, cfg: &LimeConfig, elapsed: f64) -> AttributionMap {
    let mut map = AttributionMap::new("lime", class, Resolution::PerSuperpixel, Tensor::from_vec(fit.coefficients))
        .with_meta("intercept", fit.intercept)
        .with_meta("segments", seg.num_segments)
        .with_meta("samples", cfg.num_samples)
        .with_meta("kernel", format!("exp(-d2/(D*{}^2))", cfg.kernel_width));
    map.segmentation = Some(seg.clone());
    map.elapsed_seconds = elapsed;
    map
}

/// Lime on the class probability.
pub fn lime(net: &Network, input: &Tensor, class: usize, seg: &Segmentation, cfg: &LimeConfig) -> Result<AttributionMap> {
    Ok(lime_many(net, input, &[class], seg, cfg)?.remove(0))
}

/// Lime for several classes from one shared set of perturbations. Each map
/// reports the time of the whole shared fit.
pub fn lime_many(
    net: &Network,
    input: &Tensor,
    classes: &[usize],
    seg: &Segmentation,
    cfg: &LimeConfig,
) -> Result<Vec<AttributionMap>> {
    let start = Instant::now();
    for &c in classes {
        net.score(input, c, crate::nn::Target::Probability)?;
    }
    let fits = lime_with(input, seg, cfg, classes.len(), |x| {
        let p = net.probabilities(x)?;
        Ok(classes.iter().map(|&c| p[c]).collect())
    })?;
    let elapsed = start.elapsed().as_secs_f64();
    Ok(fits
        .into_iter()
        .zip(classes)
        .map(|(fit, &class)| to_map(fit, class, seg, cfg, elapsed))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::sigmoid;
    use crate::nn::tests::{linear_network, random_input};

    fn halves(h: usize, w: usize) -> Segmentation {
        let labels: Vec<usize> = (0..h * w).map(|p| usize::from(p % w >= w / 2)).collect();
        Segmentation::from_labels(h, w, &labels).unwrap()
    }

    fn mean_over(x: &Tensor, seg: &Segmentation, k: usize) -> f64 {
        let (c, h, w) = x.chw().unwrap();
        let mut s = 0.0;
        let mut n = 0;
        for ch in 0..c {
            for p in (0..h * w).filter(|&p| seg.labels[p] == k) {
                s += x[ch * h * w + p];
                n += 1;
            }
        }
        s / n as f64
    }

    #[test]
    fn spd_solver_matches_known_solution() {
        let a = vec![4.0, 2.0, 0.6, 2.0, 5.0, 1.0, 0.6, 1.0, 3.0];
        let x = [1.0, -2.0, 0.5];
        let b: Vec<f64> = (0..3).map(|i| (0..3).map(|j| a[i * 3 + j] * x[j]).sum()).collect();
        let mut rhs = vec![b];
        solve_spd(a, 3, &mut rhs).unwrap();
        for i in 0..3 {
            assert!((rhs[0][i] - x[i]).abs() < 1e-14);
        }
        assert!(solve_spd(vec![1.0, 2.0, 2.0, 1.0], 2, &mut [vec![1.0, 1.0]]).is_err());
    }

    #[test]
    fn constant_model_has_zero_coefficients() {
        let x = random_input([2, 8, 8], 1);
        let seg = halves(8, 8);
        let fit = lime_with(&x, &seg, &LimeConfig { num_samples: 500, ..Default::default() }, 1, |_| Ok(vec![0.42]))
            .unwrap()
            .remove(0);
        assert!(fit.coefficients.iter().all(|c| c.abs() < 1e-8));
        assert!((fit.intercept - 0.42).abs() < 1e-8);
    }

    #[test]
    fn recovers_mask_linear_model() {
        let x = random_input([3, 8, 8], 2);
        let seg = halves(8, 8);
        let c = 2.5;
        let target = c * mean_over(&x, &seg, 0);
        let cfg = LimeConfig { seed: 4, ..Default::default() };
        let fit = lime_with(&x, &seg, &cfg, 1, |h| Ok(vec![c * mean_over(h, &seg, 0)]))
            .unwrap()
            .remove(0);
        assert!((fit.coefficients[0] - target).abs() <= 0.05 * target, "{fit:?} vs {target}");
        assert!(fit.coefficients[1].abs() <= 0.05 * target);
    }

    #[test]
    fn probability_target_on_single_segment_model() {
        // Logit depends on the left half only; z_A is binary so the
        // surrogate slope is exactly the probability difference.
        let seg = halves(4, 4);
        let w: Vec<f64> = (0..16).map(|p| if p % 4 < 2 { 0.5 } else { 0.0 }).collect();
        let net = linear_network(w.clone(), vec![0.0], [1, 4, 4]);
        let x = random_input([1, 4, 4], 3);
        let z: f64 = w.iter().zip(x.data()).map(|(a, b)| a * b).sum();
        let map = lime(&net, &x, 0, &seg, &LimeConfig { num_samples: 400, ridge_lambda: 0.0, ..Default::default() })
            .unwrap();
        assert_eq!(map.resolution, Resolution::PerSuperpixel);
        assert!((map.scores[0] - (sigmoid(z) - 0.5)).abs() < 1e-10);
        assert!(map.scores[1].abs() < 1e-10);
        let painted = map.pixel_scores().unwrap();
        assert_eq!(painted[0], map.scores[0]);
        assert_eq!(painted[3], map.scores[1]);
    }

    #[test]
    fn deterministic_and_validated() {
        let x = random_input([1, 8, 8], 5);
        let seg = halves(8, 8);
        let cfg = LimeConfig { num_samples: 50, seed: 9, ..Default::default() };
        let f = |h: &Tensor| Ok(vec![h.data().iter().map(|v| v * v).sum::<f64>()]);
        assert_eq!(lime_with(&x, &seg, &cfg, 1, f).unwrap(), lime_with(&x, &seg, &cfg, 1, f).unwrap());
        assert!(lime_with(&x, &seg, &LimeConfig { num_samples: 2, ..cfg.clone() }, 1, f).is_err());
        assert!(lime_with(&x, &halves(4, 8), &cfg, 1, f).is_err());
        assert!(lime_with(&x, &seg, &LimeConfig { kernel_width: 0.0, ..cfg }, 1, f).is_err());
    }
}
