//! Dataset files: an `ATBD` container holding all images and label bits,
//! plus a sidecar CSV (`sample_id,label_0,…`) next to it.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::dataset::SampleRecord;
use crate::codec::{write_atomic, Block, Container, HeaderReader, HeaderWriter};
use crate::error::{Error, FormatError, Result};
use crate::tensor::Tensor;

pub const DATASET_MAGIC: [u8; 4] = *b"ATBD";

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("csv")
}

pub fn labels_csv(samples: &[SampleRecord]) -> String {
    let k = samples.first().map_or(0, |s| s.labels.len());
    let mut csv = String::from("sample_id");
    for c in 0..k {
        write!(csv, ",label_{c}").unwrap();
    }
    csv.push('\n');
    for s in samples {
        csv.push_str(&s.sample_id);
        for &l in &s.labels {
            write!(csv, ",{}", l as u8).unwrap();
        }
        csv.push('\n');
    }
    csv
}

pub fn save_dataset(samples: &[SampleRecord], path: &Path) -> Result<()> {
    let first = samples
        .first()
        .ok_or_else(|| Error::Config("cannot save an empty dataset".into()))?;
    let (c, h, w) = first.image.chw()?;
    let k = first.labels.len();
    let mut images = Vec::with_capacity(samples.len() * c * h * w);
    let mut labels = Vec::with_capacity(samples.len() * k);
    for s in samples {
        if s.image.shape() != [c, h, w] || s.labels.len() != k {
            return Err(Error::Shape(format!("sample {} differs in shape", s.sample_id)));
        }
        images.extend_from_slice(s.image.data());
        labels.extend(s.labels.iter().map(|&l| l as u8 as f64));
    }
    let mut header = HeaderWriter::default();
    header
        .u64(samples.len() as u64)
        .u32(c as u32)
        .u32(h as u32)
        .u32(w as u32)
        .u32(k as u32);
    let container = Container {
        magic: DATASET_MAGIC,
        header: header.finish(),
        blocks: vec![
            Block::new("images", Tensor::new(vec![samples.len(), c, h, w], images)?),
            Block::new("labels", Tensor::new(vec![samples.len(), k], labels)?),
        ],
    };
    container.write(path)?;
    write_atomic(&sidecar_path(path), labels_csv(samples).as_bytes())
}

/// Loads a dataset. Ground-truth masks are not stored and come back empty.
pub fn load_dataset(path: &Path) -> Result<Vec<SampleRecord>> {
    let container = Container::read(path, DATASET_MAGIC)?;
    let mut r = HeaderReader::new(&container.header);
    let n = r.u64()? as usize;
    let (c, h, w, k) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
    r.finish()?;
    let images = container.block("images")?;
    let labels = container.block("labels")?;
    if images.shape() != [n, c, h, w] || labels.shape() != [n, k] {
        return Err(FormatError::Malformed("block shapes disagree with header".into()).into());
    }
    let csv = fs::read_to_string(sidecar_path(path))?;
    let mut lines = csv.lines();
    lines.next();
    let plane = c * h * w;
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let line = lines
            .next()
            .ok_or_else(|| FormatError::Malformed(format!("sidecar CSV is missing row {i}")))?;
        let mut fields = line.split(',');
        let sample_id = fields.next().unwrap_or_default().to_string();
        let bits: Vec<bool> = labels.data()[i * k..(i + 1) * k].iter().map(|&v| v != 0.0).collect();
        let csv_bits: Vec<bool> = fields.map(|f| f.trim() == "1").collect();
        if csv_bits != bits {
            return Err(FormatError::Malformed(format!("sidecar labels for {sample_id} disagree with container")).into());
        }
        samples.push(SampleRecord {
            sample_id,
            image: Tensor::new(vec![c, h, w], images.data()[i * plane..(i + 1) * plane].to_vec())?,
            labels: bits,
            masks: vec![None; k],
        });
    }
    Ok(samples)
}
