use crate::attrib::AttributionMap;
use crate::error::{Error, Result};
use crate::nn::{Network, Target};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct MorfConfig {
    pub removal_fraction: f64,
    /// Fractional removal rounds before the last round removes everything.
    pub max_iters: usize,
}

impl Default for MorfConfig {
    fn default() -> Self {
        Self {
            removal_fraction: 0.2,
            max_iters: 14,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MorfCurve {
    /// `(fraction_removed, score)` pairs, starting at 0 and ending at 1.
    pub checkpoints: Vec<(f64, f64)>,
    pub auc: f64,
    pub auc_normalized: f64,
    /// Pixel indices in removal order.
    pub order: Vec<usize>,
}

/// Trapezoidal area with unit spacing between checkpoints, and the same
/// divided by `K − 1`.
pub fn auc_morf(scores: &[f64]) -> Result<(f64, f64)> {
    if scores.len() < 2 {
        return Err(Error::Config(format!("AUC needs at least 2 checkpoints, got {}", scores.len())));
    }
    let auc: f64 = scores.windows(2).map(|w| (w[0] + w[1]) / 2.0).sum();
    Ok((auc, auc / (scores.len() - 1) as f64))
}

/// Pixel indices sorted by non-increasing relevance, ties by index.
pub fn removal_order(relevance: &[f64]) -> Result<Vec<usize>> {
    if relevance.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("attribution contains non-finite scores".into()));
    }
    let mut order: Vec<usize> = (0..relevance.len()).collect();
    order.sort_by(|&a, &b| relevance[b].total_cmp(&relevance[a]).then(a.cmp(&b)));
    Ok(order)
}

/// Nearest pixel of `pool` to `p` by Euclidean grid distance, ties to the
/// smallest index.
fn nearest(p: usize, pool: &[usize], w: usize) -> Option<usize> {
    let (y, x) = ((p / w) as isize, (p % w) as isize);
    pool.iter()
        .map(|&q| {
            let (dy, dx) = ((q / w) as isize - y, (q % w) as isize - x);
            (dy * dy + dx * dx, q)
        })
        .min()
        .map(|(_, q)| q)
}

/// MoRF curve against an arbitrary score. Each round removes
/// `ceil(fraction × remaining)` of the most relevant remaining pixels and
/// re-imputes every removed pixel from its nearest unremoved pixel. In the
/// round that removes the last pixels, earlier imputations persist and the
/// newly removed pixels copy the nearest earlier-removed pixel (zero if
/// there is none).
pub fn morf_curve_with(
    input: &Tensor,
    relevance: &[f64],
    cfg: &MorfConfig,
    score: impl Fn(&Tensor) -> Result<f64>,
) -> Result<MorfCurve> {
    let (c, h, w) = input.chw()?;
    let plane = h * w;
    if relevance.len() != plane {
        return Err(Error::Shape(format!("{} relevance values for {h}×{w} pixels", relevance.len())));
    }
    if !(cfg.removal_fraction > 0.0 && cfg.removal_fraction <= 1.0) {
        return Err(Error::Config(format!("removal_fraction must be in (0, 1], got {}", cfg.removal_fraction)));
    }
    let order = removal_order(relevance)?;
    let mut checkpoints = vec![(0.0, score(input)?)];
    let mut image = input.clone();
    let mut removed = vec![false; plane];
    let mut n_removed = 0;
    let mut round = 0;
    while n_removed < plane {
        let remaining = plane - n_removed;
        let take = if round < cfg.max_iters {
            ((cfg.removal_fraction * remaining as f64).ceil() as usize).clamp(1, remaining)
        } else {
            remaining
        };
        let batch = &order[n_removed..n_removed + take];
        for &p in batch {
            removed[p] = true;
        }
        n_removed += take;
        round += 1;

        let source = |p: usize, pool: &[usize]| nearest(p, pool, w);
        if n_removed < plane {
            let kept: Vec<usize> = (0..plane).filter(|&p| !removed[p]).collect();
            for p in (0..plane).filter(|&p| removed[p]) {
                let q = source(p, &kept).expect("kept pixels exist");
                for ch in 0..c {
                    image[ch * plane + p] = input[ch * plane + q];
                }
            }
        } else {
            let earlier: Vec<usize> = order[..n_removed - take].to_vec();
            for &p in batch {
                for ch in 0..c {
                    image[ch * plane + p] = match source(p, &earlier) {
                        Some(q) => image[ch * plane + q],
                        None => 0.0,
                    };
                }
            }
        }
        checkpoints.push((n_removed as f64 / plane as f64, score(&image)?));
    }
    let scores: Vec<f64> = checkpoints.iter().map(|c| c.1).collect();
    let (auc, auc_normalized) = auc_morf(&scores)?;
    Ok(MorfCurve {
        checkpoints,
        auc,
        auc_normalized,
        order,
    })
}

/// MoRF curve on the class probability, ranking pixels by their
/// channel-summed attribution.
pub fn morf_curve(
    net: &Network,
    input: &Tensor,
    class: usize,
    map: &AttributionMap,
    cfg: &MorfConfig,
) -> Result<MorfCurve> {
    net.score(input, class, Target::Probability)?;
    let relevance = map.pixel_relevance()?;
    morf_curve_with(input, &relevance, cfg, |x| net.score(x, class, Target::Probability))
}

/// Pointwise mean of curves sharing the same fractions.
pub fn mean_curve(curves: &[MorfCurve]) -> Result<MorfCurve> {
    let first = curves.first().ok_or_else(|| Error::Config("no curves to average".into()))?;
    let k = first.checkpoints.len();
    let mut checkpoints = first.checkpoints.clone();
    for (i, cp) in checkpoints.iter_mut().enumerate() {
        let mut total = 0.0;
        for c in curves {
            if c.checkpoints.len() != k || c.checkpoints[i].0 != cp.0 {
                return Err(Error::Shape("curves have different checkpoint fractions".into()));
            }
            total += c.checkpoints[i].1;
        }
        cp.1 = total / curves.len() as f64;
    }
    let scores: Vec<f64> = checkpoints.iter().map(|c| c.1).collect();
    let (auc, auc_normalized) = auc_morf(&scores)?;
    Ok(MorfCurve {
        checkpoints,
        auc,
        auc_normalized,
        order: Vec::new(),
    })
}
