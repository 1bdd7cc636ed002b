//! Attribution files: an `ATBX` container with the raw scores and, for
//! superpixel maps, the segment label grid.

use std::path::Path;

use super::{AttributionMap, Resolution};
use crate::codec::{Block, Container, HeaderReader, HeaderWriter};
use crate::error::{FormatError, Result};
use crate::slic::{Segmentation, SlicConfig};
use crate::tensor::Tensor;

pub const ATTRIBUTION_MAGIC: [u8; 4] = *b"ATBX";

const RESOLUTIONS: [Resolution; 4] = [
    Resolution::PerPixel,
    Resolution::PerPatch,
    Resolution::PerSuperpixel,
    Resolution::Upsampled,
];

pub fn encode_attribution(map: &AttributionMap) -> Vec<u8> {
    let mut h = HeaderWriter::default();
    h.str(&map.method_id)
        .u64(map.class_index as u64)
        .u8(RESOLUTIONS.iter().position(|&r| r == map.resolution).unwrap() as u8)
        .f64(map.elapsed_seconds)
        .u32(map.metadata.len() as u32);
    for (k, v) in &map.metadata {
        h.str(k).str(v);
    }
    let mut blocks = vec![Block::new("scores", map.scores.clone())];
    match &map.segmentation {
        Some(seg) => {
            h.u8(1)
                .u64(seg.config.requested_segments as u64)
                .f64(seg.config.compactness)
                .u64(seg.config.iterations as u64)
                .u64(seg.config.seed)
                .f64(seg.kmeans_distortion);
            let labels = seg.labels.iter().map(|&l| l as f64).collect();
            blocks.push(Block::new(
                "segments",
                Tensor::new(vec![seg.height, seg.width], labels).unwrap(),
            ));
        }
        None => {
            h.u8(0);
        }
    }
    Container {
        magic: ATTRIBUTION_MAGIC,
        header: h.finish(),
        blocks,
    }
    .encode()
}

pub fn decode_attribution(bytes: &[u8]) -> Result<AttributionMap> {
    let c = Container::decode(bytes, ATTRIBUTION_MAGIC)?;
    let mut h = HeaderReader::new(&c.header);
    let method_id = h.str()?;
    let class_index = h.u64()? as usize;
    let resolution = *RESOLUTIONS
        .get(h.u8()? as usize)
        .ok_or_else(|| FormatError::Malformed("unknown resolution".into()))?;
    let elapsed_seconds = h.f64()?;
    let n_meta = h.u32()? as usize;
    let mut metadata = Vec::with_capacity(n_meta.min(256));
    for _ in 0..n_meta {
        metadata.push((h.str()?, h.str()?));
    }
    let segmentation = match h.u8()? {
        0 => None,
        1 => {
            let config = SlicConfig {
                requested_segments: h.u64()? as usize,
                compactness: h.f64()?,
                iterations: h.u64()? as usize,
                seed: h.u64()?,
            };
            let distortion = h.f64()?;
            let grid = c.block("segments")?;
            let [height, width] = grid.shape()[..] else {
                return Err(FormatError::Malformed("segment grid must be 2-D".into()).into());
            };
            if grid.data().iter().any(|&v| v < 0.0 || v.fract() != 0.0) {
                return Err(FormatError::Malformed("segment labels must be non-negative integers".into()).into());
            }
            let labels: Vec<usize> = grid.data().iter().map(|&v| v as usize).collect();
            let mut seg = Segmentation::from_labels(height, width, &labels)?;
            if seg.labels != labels {
                return Err(FormatError::Malformed("segment labels are not in canonical order".into()).into());
            }
            seg.config = config;
            seg.kmeans_distortion = distortion;
            Some(seg)
        }
        _ => return Err(FormatError::Malformed("bad segmentation flag".into()).into()),
    };
    h.finish()?;
    Ok(AttributionMap {
        scores: c.block("scores")?.clone(),
        method_id,
        class_index,
        elapsed_seconds,
        resolution,
        segmentation,
        metadata,
    })
}

pub fn save_attribution(map: &AttributionMap, path: &Path) -> Result<()> {
    crate::codec::write_atomic(path, &encode_attribution(map))
}

pub fn load_attribution(path: &Path) -> Result<AttributionMap> {
    decode_attribution(&std::fs::read(path)?)
}
