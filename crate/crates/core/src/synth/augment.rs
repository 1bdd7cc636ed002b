use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::rng_from;
use crate::tensor::Tensor;

/// Counter-clockwise rotation; `Minus90` is a clockwise quarter turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rotation {
    Minus90,
    None,
    Plus90,
    Half,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Augmentation {
    pub rotation: Rotation,
    pub flip: bool,
}

impl Augmentation {
    pub fn sample(seed: u64) -> Self {
        let mut rng = rng_from(seed, &[0xa6]);
        let rotation = [Rotation::Minus90, Rotation::None, Rotation::Plus90, Rotation::Half][rng.random_range(0..4)];
        Self {
            rotation,
            flip: rng.random_bool(0.5),
        }
    }

    /// Rotates, then mirrors horizontally if `flip` is set.
    pub fn apply(&self, image: &Tensor) -> Result<Tensor> {
        let (c, h, w) = image.chw()?;
        if h != w {
            return Err(Error::Shape(format!("augmentation needs square images, got {h}×{w}")));
        }
        let n = h;
        let src = image.data();
        let mut out = vec![0.0; src.len()];
        for ch in 0..c {
            let plane = &src[ch * n * n..(ch + 1) * n * n];
            let dst = &mut out[ch * n * n..(ch + 1) * n * n];
            for y in 0..n {
                for x in 0..n {
                    // Source pixel for destination (y, x).
                    let xr = if self.flip { n - 1 - x } else { x };
                    let (sy, sx) = match self.rotation {
                        Rotation::None => (y, xr),
                        Rotation::Plus90 => (xr, n - 1 - y),
                        Rotation::Minus90 => (n - 1 - xr, y),
                        Rotation::Half => (n - 1 - y, n - 1 - xr),
                    };
                    dst[y * n + x] = plane[sy * n + sx];
                }
            }
        }
        Tensor::new(image.shape().to_vec(), out)
    }
}

/// Applies a seeded random rotation/flip; labels pass through unchanged.
pub fn augment(image: &Tensor, labels: &[bool], seed: u64) -> Result<(Tensor, Vec<bool>)> {
    Ok((Augmentation::sample(seed).apply(image)?, labels.to_vec()))
}
