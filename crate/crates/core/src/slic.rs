//! SLIC superpixels: k-means in joint (colour, position) space restricted to
//! a local window around each centre, followed by a connectivity pass.

use std::collections::VecDeque;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct SlicConfig {
    pub requested_segments: usize,
    pub compactness: f64,
    pub iterations: usize,
    /// Echoed only; grid initialisation leaves nothing to randomise.
    pub seed: u64,
}

impl Default for SlicConfig {
    fn default() -> Self {
        Self {
            requested_segments: 64,
            compactness: 10.0,
            iterations: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub height: usize,
    pub width: usize,
    /// Row-major `H×W`, values in `0..num_segments`.
    pub labels: Vec<usize>,
    pub num_segments: usize,
    pub config: SlicConfig,
    /// Σ D² of each pixel to its cluster centre before the connectivity pass.
    pub kmeans_distortion: f64,
}

impl Segmentation {
    /// Wraps an arbitrary label map, renumbering labels by first appearance.
    pub fn from_labels(height: usize, width: usize, labels: &[usize]) -> Result<Self> {
        if labels.len() != height * width || labels.is_empty() {
            return Err(Error::Shape(format!(
                "label map has {} entries for a {height}×{width} image",
                labels.len()
            )));
        }
        let (labels, num_segments) = relabel(labels);
        Ok(Self {
            height,
            width,
            labels,
            num_segments,
            config: SlicConfig {
                requested_segments: num_segments,
                compactness: 0.0,
                iterations: 0,
                seed: 0,
            },
            kmeans_distortion: 0.0,
        })
    }

    pub fn segment_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_segments];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    /// 16-bit binary PGM holding raw label values (maxval 65535).
    pub fn to_pgm16(&self) -> Result<Vec<u8>> {
        if self.num_segments > 65536 {
            return Err(Error::Config(format!("{} segments do not fit in 16 bits", self.num_segments)));
        }
        let mut out = format!("P5\n{} {}\n65535\n", self.width, self.height).into_bytes();
        for &l in &self.labels {
            out.extend_from_slice(&(l as u16).to_be_bytes());
        }
        Ok(out)
    }

    pub fn describe(&self) -> String {
        let mut s = String::new();
        write!(
            s,
            "segments={} requested={} compactness={} iterations={}",
            self.num_segments, self.config.requested_segments, self.config.compactness, self.config.iterations
        )
        .unwrap();
        s
    }
}

fn relabel(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map = std::collections::HashMap::new();
    let out = labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect();
    (out, map.len())
}

/// Grid of `nx × ny ≤ k` cells with roughly square cells of side `S`.
fn grid_shape(h: usize, w: usize, k: usize) -> (usize, usize) {
    let s = ((h * w) as f64 / k as f64).sqrt();
    let mut nx = ((w as f64 / s).round() as usize).clamp(1, w);
    let mut ny = ((h as f64 / s).round() as usize).clamp(1, h);
    while nx * ny > k {
        if nx as f64 / w as f64 >= ny as f64 / h as f64 && nx > 1 {
            nx -= 1;
        } else {
            ny -= 1;
        }
    }
    (nx, ny)
}

struct Centre {
    colour: Vec<f64>,
    y: f64,
    x: f64,
}

pub fn slic(image: &Tensor, cfg: &SlicConfig) -> Result<Segmentation> {
    let (c, h, w) = image.chw()?;
    let k = cfg.requested_segments;
    if k == 0 || k > h * w {
        return Err(Error::Config(format!("requested_segments must be in 1..={}, got {k}", h * w)));
    }
    if !(cfg.compactness > 0.0 && cfg.compactness.is_finite()) {
        return Err(Error::Config(format!("compactness must be positive, got {}", cfg.compactness)));
    }
    if cfg.iterations == 0 {
        return Err(Error::Config("iterations must be ≥ 1".into()));
    }
    if !image.all_finite() {
        return Err(Error::Numerical("image contains non-finite values".into()));
    }

    let plane = h * w;
    let px = image.data();
    let s = (plane as f64 / k as f64).sqrt();
    let spatial = (cfg.compactness / s).powi(2);
    let (nx, ny) = grid_shape(h, w, k);
    let colour_at = |p: usize| (0..c).map(move |ch| px[ch * plane + p]);

    let mut centres: Vec<Centre> = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let y = (j as f64 + 0.5) * h as f64 / ny as f64 - 0.5;
            let x = (i as f64 + 0.5) * w as f64 / nx as f64 - 0.5;
            let p = (y.round() as usize).min(h - 1) * w + (x.round() as usize).min(w - 1);
            centres.push(Centre { colour: colour_at(p).collect(), y, x });
        }
    }

    let dist2 = |p: usize, ctr: &Centre| {
        let (y, x) = ((p / w) as f64, (p % w) as f64);
        let dc: f64 = colour_at(p).zip(&ctr.colour).map(|(a, b)| (a - b) * (a - b)).sum();
        dc + spatial * ((y - ctr.y).powi(2) + (x - ctr.x).powi(2))
    };

    let mut labels = vec![usize::MAX; plane];
    let mut best = vec![f64::INFINITY; plane];
    let reach = s.ceil() as isize;
    for _ in 0..cfg.iterations {
        // The current centre is always a candidate, so reassignment never
        // increases the objective.
        for p in 0..plane {
            best[p] = if labels[p] == usize::MAX { f64::INFINITY } else { dist2(p, &centres[labels[p]]) };
        }
        for (ci, ctr) in centres.iter().enumerate() {
            let (cy, cx) = (ctr.y.round() as isize, ctr.x.round() as isize);
            let y0 = (cy - reach).max(0) as usize;
            let y1 = ((cy + reach).min(h as isize - 1)).max(-1);
            let x0 = (cx - reach).max(0) as usize;
            let x1 = ((cx + reach).min(w as isize - 1)).max(-1);
            if y1 < 0 || x1 < 0 {
                continue;
            }
            for y in y0..=y1 as usize {
                for x in x0..=x1 as usize {
                    let p = y * w + x;
                    let d = dist2(p, ctr);
                    if d < best[p] {
                        best[p] = d;
                        labels[p] = ci;
                    }
                }
            }
        }
        for p in 0..plane {
            if labels[p] != usize::MAX {
                continue;
            }
            let (ci, d) = centres
                .iter()
                .enumerate()
                .map(|(ci, ctr)| (ci, dist2(p, ctr)))
                .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
            labels[p] = ci;
            best[p] = d;
        }

        let mut sums = vec![(vec![0.0; c], 0.0, 0.0, 0usize); centres.len()];
        for p in 0..plane {
            let acc = &mut sums[labels[p]];
            for (a, v) in acc.0.iter_mut().zip(colour_at(p)) {
                *a += v;
            }
            acc.1 += (p / w) as f64;
            acc.2 += (p % w) as f64;
            acc.3 += 1;
        }
        for (ctr, (col, sy, sx, n)) in centres.iter_mut().zip(sums) {
            if n == 0 {
                continue;
            }
            let n = n as f64;
            ctr.colour = col.into_iter().map(|v| v / n).collect();
            ctr.y = sy / n;
            ctr.x = sx / n;
        }
    }
    let kmeans_distortion = (0..plane).map(|p| dist2(p, &centres[labels[p]])).sum();

    let merged = enforce_connectivity(&labels, h, w);
    let (labels, num_segments) = relabel(&merged);
    Ok(Segmentation {
        height: h,
        width: w,
        labels,
        num_segments,
        config: cfg.clone(),
        kmeans_distortion,
    })
}

fn neighbours(p: usize, h: usize, w: usize) -> impl Iterator<Item = usize> {
    let (y, x) = (p / w, p % w);
    [
        (y > 0).then(|| p - w),
        (x > 0).then(|| p - 1),
        (x + 1 < w).then(|| p + 1),
        (y + 1 < h).then(|| p + w),
    ]
    .into_iter()
    .flatten()
}

/// 4-connected components; returns per-pixel component ids and the
/// pixels of each component (ids in row-major order of first pixel).
fn components(labels: &[usize], h: usize, w: usize) -> (Vec<usize>, Vec<Vec<usize>>) {
    let mut comp = vec![usize::MAX; labels.len()];
    let mut members = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..labels.len() {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = members.len();
        let mut pixels = vec![start];
        comp[start] = id;
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            for q in neighbours(p, h, w) {
                if comp[q] == usize::MAX && labels[q] == labels[start] {
                    comp[q] = id;
                    pixels.push(q);
                    queue.push_back(q);
                }
            }
        }
        members.push(pixels);
    }
    (comp, members)
}

/// Keeps the largest component of every cluster and merges each remaining
/// fragment, smallest first, into the neighbour with the longest shared
/// boundary (ties to the smallest cluster label).
fn enforce_connectivity(labels: &[usize], h: usize, w: usize) -> Vec<usize> {
    let (mut comp, mut members) = components(labels, h, w);
    let mut comp_label: Vec<usize> = members.iter().map(|m| labels[m[0]]).collect();

    let mut largest = std::collections::HashMap::<usize, usize>::new();
    for (id, m) in members.iter().enumerate() {
        let e = largest.entry(comp_label[id]).or_insert(id);
        if m.len() > members[*e].len() {
            *e = id;
        }
    }
    let mut orphans: Vec<usize> = (0..members.len()).filter(|id| largest[&comp_label[*id]] != *id).collect();
    orphans.sort_by_key(|&id| (members[id].len(), members[id][0]));

    for id in orphans {
        let mut shared = std::collections::BTreeMap::<usize, usize>::new();
        for &p in &members[id] {
            for q in neighbours(p, h, w) {
                if comp[q] != id {
                    *shared.entry(comp[q]).or_default() += 1;
                }
            }
        }
        let Some((&target, _)) = shared
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(comp_label[*b.0].cmp(&comp_label[*a.0])).then(b.0.cmp(a.0)))
        else {
            continue;
        };
        let pixels = std::mem::take(&mut members[id]);
        for &p in &pixels {
            comp[p] = target;
        }
        members[target].extend(pixels);
        comp_label[id] = comp_label[target];
    }
    comp.iter().map(|&id| comp_label[id]).collect()
}
