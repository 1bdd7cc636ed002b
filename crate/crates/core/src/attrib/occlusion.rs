use super::{timed, AttributionMap, BaselineSpec, Resolution};
use crate::error::{Error, Result};
use crate::nn::{Network, Target};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct OcclusionConfig {
    /// `(height, width)`
    pub window: (usize, usize),
    pub stride: (usize, usize),
    pub baseline: BaselineSpec,
}

impl Default for OcclusionConfig {
    fn default() -> Self {
        Self {
            window: (4, 4),
            stride: (2, 2),
            baseline: BaselineSpec::Zero,
        }
    }
}

impl OcclusionConfig {
    fn validate(&self, h: usize, w: usize) -> Result<()> {
        let (wh, ww) = self.window;
        let (sh, sw) = self.stride;
        if wh == 0 || ww == 0 || sh == 0 || sw == 0 {
            return Err(Error::Config("occlusion window and stride must be positive".into()));
        }
        if wh > h || ww > w {
            return Err(Error::Config(format!("occlusion window {wh}×{ww} exceeds image {h}×{w}")));
        }
        Ok(())
    }
}

/// Window offsets along one axis: a stride grid whose last window is
/// clamped flush with the border.
pub fn window_positions(n: usize, window: usize, stride: usize) -> Vec<usize> {
    let mut pos: Vec<usize> = (0..).step_by(stride).take_while(|&p| p + window <= n).collect();
    if pos.last().is_some_and(|&p| p + window < n) {
        pos.push(n - window);
    }
    pos
}

/// Number of windows covering each pixel, row-major.
pub fn coverage_counts(h: usize, w: usize, cfg: &OcclusionConfig) -> Result<Vec<usize>> {
    cfg.validate(h, w)?;
    let mut counts = vec![0; h * w];
    for &py in &window_positions(h, cfg.window.0, cfg.stride.0) {
        for &px in &window_positions(w, cfg.window.1, cfg.stride.1) {
            for y in py..py + cfg.window.0 {
                for x in px..px + cfg.window.1 {
                    counts[y * w + x] += 1;
                }
            }
        }
    }
    Ok(counts)
}

/// Occlusion against an arbitrary score; returns the `1×H×W` per-pixel mean
/// of the score drops of all windows covering each pixel.
pub fn occlusion_with(input: &Tensor, cfg: &OcclusionConfig, score: impl Fn(&Tensor) -> Result<f64>) -> Result<Tensor> {
    let (c, h, w) = input.chw()?;
    cfg.validate(h, w)?;
    let base = cfg.baseline.resolve(input)?;
    let (wh, ww) = cfg.window;
    let plane = h * w;
    let reference = score(input)?;
    let mut sums = vec![0.0; plane];
    let mut counts = vec![0usize; plane];
    let mut patched = input.clone();
    for &py in &window_positions(h, wh, cfg.stride.0) {
        for &px in &window_positions(w, ww, cfg.stride.1) {
            for ch in 0..c {
                for y in py..py + wh {
                    let row = ch * plane + y * w;
                    patched.data_mut()[row + px..row + px + ww].copy_from_slice(&base.data()[row + px..row + px + ww]);
                }
            }
            let drop = reference - score(&patched)?;
            for ch in 0..c {
                for y in py..py + wh {
                    let row = ch * plane + y * w;
                    patched.data_mut()[row + px..row + px + ww]
                        .copy_from_slice(&input.data()[row + px..row + px + ww]);
                }
            }
            for y in py..py + wh {
                for x in px..px + ww {
                    sums[y * w + x] += drop;
                    counts[y * w + x] += 1;
                }
            }
        }
    }
    let data = sums.iter().zip(&counts).map(|(s, &n)| s / n as f64).collect();
    Tensor::new(vec![1, h, w], data)
}

pub fn occlusion(net: &Network, input: &Tensor, class: usize, cfg: &OcclusionConfig) -> Result<AttributionMap> {
    timed(|| {
        net.score(input, class, Target::Probability)?;
        let scores = occlusion_with(input, cfg, |x| net.score(x, class, Target::Probability))?;
        Ok(AttributionMap::new("occlusion", class, Resolution::PerPatch, scores)
            .with_meta("window", format!("{}x{}", cfg.window.0, cfg.window.1))
            .with_meta("stride", format!("{}x{}", cfg.stride.0, cfg.stride.1)))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::sigmoid;
    use crate::nn::tests::{linear_network, random_input, random_network, small_cnn_layers};
    use crate::nn::WeightStore;

    fn cfg(window: usize, stride: usize) -> OcclusionConfig {
        OcclusionConfig {
            window: (window, window),
            stride: (stride, stride),
            baseline: BaselineSpec::Zero,
        }
    }

    #[test]
    fn positions_clamp_last_window() {
        assert_eq!(window_positions(6, 3, 2), vec![0, 2, 3]);
        assert_eq!(window_positions(6, 2, 2), vec![0, 2, 4]);
        assert_eq!(window_positions(5, 5, 3), vec![0]);
        assert_eq!(window_positions(32, 15, 5), vec![0, 5, 10, 15, 17]);
    }

    #[test]
    fn coverage_of_overlapping_windows() {
        let counts = coverage_counts(3, 3, &cfg(2, 1)).unwrap();
        assert_eq!(counts, vec![1, 2, 1, 2, 4, 2, 1, 2, 1]);
        assert!(coverage_counts(3, 3, &cfg(4, 1)).is_err());
        assert!(coverage_counts(3, 3, &cfg(2, 0)).is_err());
    }

    /// Every window placement of the stride grid, enumerated directly.
    fn exhaustive(x: &Tensor, c: &OcclusionConfig, f: &dyn Fn(&Tensor) -> f64) -> Vec<f64> {
        let (ch, h, w) = x.chw().unwrap();
        let (wh, ww) = c.window;
        let on_grid = |p: usize, n: usize, win: usize, s: usize| p % s == 0 || p == n - win;
        let mut out = vec![0.0; h * w];
        for y in 0..h {
            for xx in 0..w {
                let mut drops = Vec::new();
                for py in 0..=h - wh {
                    for px in 0..=w - ww {
                        let covers = (py..py + wh).contains(&y) && (px..px + ww).contains(&xx);
                        if !covers || !on_grid(py, h, wh, c.stride.0) || !on_grid(px, w, ww, c.stride.1) {
                            continue;
                        }
                        let mut p = x.clone();
                        for k in 0..ch {
                            for yy in py..py + wh {
                                for xw in px..px + ww {
                                    p[(k * h + yy) * w + xw] = 0.0;
                                }
                            }
                        }
                        drops.push(f(x) - f(&p));
                    }
                }
                out[y * w + xx] = drops.iter().sum::<f64>() / drops.len() as f64;
            }
        }
        out
    }

    #[test]
    fn matches_exhaustive_enumeration() {
        let net = random_network(small_cnn_layers(2), [2, 6, 6], 2, 3, 21);
        let x = random_input([2, 6, 6], 21);
        for (win, stride) in [(3, 2), (2, 1), (4, 3)] {
            let c = cfg(win, stride);
            let map = occlusion(&net, &x, 1, &c).unwrap();
            let f = |t: &Tensor| net.score(t, 1, Target::Probability).unwrap();
            let oracle = exhaustive(&x, &c, &f);
            for (a, b) in map.scores.data().iter().zip(&oracle) {
                assert!((a - b).abs() <= 1e-12, "window {win} stride {stride}");
            }
        }
    }

    #[test]
    fn constant_model_gives_zero_map() {
        let net = random_network(small_cnn_layers(2), [1, 8, 8], 2, 3, 2);
        let (spec, _) = net.into_parts();
        let net = Network::new(spec.clone(), WeightStore::zeros(&spec)).unwrap();
        let map = occlusion(&net, &random_input([1, 8, 8], 3), 0, &cfg(3, 2)).unwrap();
        assert!(map.scores.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_pixel_windows_on_linear_model() {
        let w: Vec<f64> = (0..16).map(|i| 0.01 * (i as f64 - 8.0)).collect();
        let net = linear_network(w.clone(), vec![0.0], [1, 4, 4]);
        let x = random_input([1, 4, 4], 9);
        let map = occlusion(&net, &x, 0, &cfg(1, 1)).unwrap().scores;
        let z: f64 = w.iter().zip(x.data()).map(|(a, b)| a * b).sum();
        for d in 0..16 {
            let direct = sigmoid(z) - sigmoid(z - w[d] * x[d]);
            assert!((map[d] - direct).abs() < 1e-15);
            assert!((map[d] - 0.25 * w[d] * x[d]).abs() < 5e-3 * (w[d] * x[d]).abs() + 1e-9);
            assert_eq!(map[d].signum(), (w[d] * x[d]).signum());
        }
    }
}
