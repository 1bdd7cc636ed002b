use rand::Rng as _;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::attrib::{AttributionMap, Resolution};
use crate::error::{Error, Result};
use crate::rng::rng_from;
use crate::tensor::Tensor;

/// Sample Pearson correlation and its two-sided p-value from the
/// t-distribution with `n − 2` degrees of freedom.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    let n = xs.len();
    if n != ys.len() || n < 3 {
        return Err(Error::Config(format!("pearson needs two equal-length series of ≥ 3 values ({n} vs {})", ys.len())));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n as f64;
    let (mx, my) = (mean(xs), mean(ys));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Numerical("pearson: a series has zero variance".into()));
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let p = if r.abs() == 1.0 {
        0.0
    } else {
        let t = r * (df / (1.0 - r * r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Numerical(e.to_string()))?;
        2.0 * (1.0 - dist.cdf(t.abs()))
    };
    Ok((r, p))
}

/// I.i.d. uniform `[0, 1)` scores on a `1×H×W` grid.
pub fn random_attribution(height: usize, width: usize, seed: u64) -> AttributionMap {
    let mut rng = rng_from(seed, &[0x7a4d]);
    let data = (0..height * width).map(|_| rng.random::<f64>()).collect();
    AttributionMap::new("random", 0, Resolution::PerPixel, Tensor::new(vec![1, height, width], data).unwrap())
}
