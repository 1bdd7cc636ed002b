use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng::rng_from;
use crate::tensor::Tensor;

/// The motif drawn for each class, in class-index order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Motif {
    FilledSquare,
    Disk,
    HorizontalStripes,
    VerticalStripes,
    Checkerboard,
    BrightBlob,
}

impl Motif {
    pub const ALL: [Motif; 6] = [
        Motif::FilledSquare,
        Motif::Disk,
        Motif::HorizontalStripes,
        Motif::VerticalStripes,
        Motif::Checkerboard,
        Motif::BrightBlob,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Motif::FilledSquare => "square",
            Motif::Disk => "disk",
            Motif::HorizontalStripes => "hstripes",
            Motif::VerticalStripes => "vstripes",
            Motif::Checkerboard => "checker",
            Motif::BrightBlob => "blob",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub num_samples: usize,
    /// `[channels, height, width]`
    pub image_size: [usize; 3],
    pub num_classes: usize,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            num_samples: 2000,
            image_size: [3, 32, 32],
            num_classes: 6,
            noise_std: 0.05,
            seed: 0,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        let [c, h, w] = self.image_size;
        if !(2..=Motif::ALL.len()).contains(&self.num_classes) {
            return Err(Error::Config(format!(
                "num_classes must be between 2 and {}, got {}",
                Motif::ALL.len(),
                self.num_classes
            )));
        }
        if c == 0 {
            return Err(Error::Config("image needs at least one channel".into()));
        }
        if h < 16 || w < 16 {
            return Err(Error::Config(format!(
                "image {h}×{w} is too small to host the motifs (minimum 16×16)"
            )));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::Config(format!("noise_std must be ≥ 0, got {}", self.noise_std)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub sample_id: String,
    /// `C×H×W`, values in `[0, 1]`.
    pub image: Tensor,
    pub labels: Vec<bool>,
    /// Per-class ground-truth pixel mask (row-major `H×W`) for drawn motifs.
    pub masks: Vec<Option<Vec<bool>>>,
}

impl SampleRecord {
    pub fn label_vector(&self) -> Vec<f64> {
        self.labels.iter().map(|&l| l as u8 as f64).collect()
    }
}

/// Cell `(x0, y0, x1, y1)` reserved for motif `k` in a 3×2 layout.
fn region(k: usize, h: usize, w: usize) -> (usize, usize, usize, usize) {
    let (col, row) = (k % 3, k / 3);
    (col * w / 3, row * h / 2, (col + 1) * w / 3, (row + 1) * h / 2)
}

pub fn generate_dataset(cfg: &DatasetConfig) -> Result<Vec<SampleRecord>> {
    cfg.validate()?;
    Ok((0..cfg.num_samples).map(|i| generate_sample(cfg, i)).collect())
}

/// Generates sample `index` alone; each sample has its own RNG stream.
pub fn generate_sample(cfg: &DatasetConfig, index: usize) -> SampleRecord {
    let [c, h, w] = cfg.image_size;
    let k = cfg.num_classes;
    let mut rng = rng_from(cfg.seed, &[0x5a11, index as u64]);

    let mut labels: Vec<bool> = (0..k).map(|_| rng.random_bool(0.5)).collect();
    if !labels.iter().any(|&l| l) {
        labels[rng.random_range(0..k)] = true;
    }

    let plane = h * w;
    let mut image = vec![0.0; c * plane];
    for ch in 0..c {
        let base = rng.random_range(0.05..0.35);
        image[ch * plane..(ch + 1) * plane].fill(base);
    }

    let mut masks = vec![None; k];
    for (class, _) in labels.iter().enumerate().filter(|(_, &l)| l) {
        let motif = Motif::ALL[class];
        let (x0, y0, x1, y1) = region(class, h, w);
        let cell = (x1 - x0).min(y1 - y0);
        let size = rng.random_range((cell * 6 / 10).max(4)..=(cell * 9 / 10).max(5)).min(cell);
        let ox = x0 + rng.random_range(0..=(x1 - x0 - size));
        let oy = y0 + rng.random_range(0..=(y1 - y0 - size));
        let color: Vec<f64> = (0..c).map(|_| rng.random_range(0.55..0.95)).collect();
        let mut mask = vec![false; plane];
        let s = size as f64;
        let centre = (s - 1.0) / 2.0;
        for dy in 0..size {
            for dx in 0..size {
                let (fy, fx) = (dy as f64 - centre, dx as f64 - centre);
                // Coverage in [0, 1] of the motif at this pixel.
                let cover = match motif {
                    Motif::FilledSquare => 1.0,
                    Motif::Disk => (fy * fy + fx * fx <= (s / 2.0) * (s / 2.0)) as u8 as f64,
                    Motif::HorizontalStripes => (dy % 2 == 0) as u8 as f64,
                    Motif::VerticalStripes => (dx % 2 == 0) as u8 as f64,
                    Motif::Checkerboard => ((dx + dy) % 2 == 0) as u8 as f64,
                    Motif::BrightBlob => {
                        let sigma = s / 4.0;
                        let g = (-(fx * fx + fy * fy) / (2.0 * sigma * sigma)).exp();
                        if g < 0.1 {
                            0.0
                        } else {
                            g
                        }
                    }
                };
                let p = (oy + dy) * w + ox + dx;
                let in_region = match motif {
                    Motif::Disk | Motif::BrightBlob => cover > 0.0,
                    _ => true,
                };
                mask[p] = in_region;
                if cover == 0.0 {
                    continue;
                }
                for (ch, &col) in color.iter().enumerate() {
                    let target = if motif == Motif::BrightBlob { 1.0 } else { col };
                    let v = &mut image[ch * plane + p];
                    *v = *v * (1.0 - cover) + target * cover;
                }
            }
        }
        masks[class] = Some(mask);
    }

    if cfg.noise_std > 0.0 {
        let normal = Normal::new(0.0, cfg.noise_std).expect("validated noise");
        for v in &mut image {
            *v += normal.sample(&mut rng);
        }
    }
    for v in &mut image {
        *v = v.clamp(0.0, 1.0);
    }

    SampleRecord {
        sample_id: format!("s{index:06}"),
        image: Tensor::new(vec![c, h, w], image).unwrap(),
        labels,
        masks,
    }
}

/// Splits off the last 20% of samples as the validation set.
pub fn split_validation(samples: &[SampleRecord]) -> (&[SampleRecord], &[SampleRecord]) {
    let n_val = (samples.len() / 5).max(usize::from(samples.len() > 1));
    samples.split_at(samples.len() - n_val)
}
