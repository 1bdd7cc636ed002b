use std::io::Write;

use flate2::write::DeflateEncoder;
use flate2::Compression;

use crate::error::{Error, Result};
use crate::render::{HeatmapImage, RenderMode};

/// Compression level used for every measurement.
pub const DEFLATE_LEVEL: u32 = 9;

/// PNG scanline filters: none, sub, up, average, paeth.
fn filter_row(kind: u8, row: &[u8], prev: &[u8], out: &mut Vec<u8>) {
    out.push(kind);
    for x in 0..row.len() {
        let a = if x > 0 { row[x - 1] } else { 0 };
        let b = prev[x];
        let c = if x > 0 { prev[x - 1] } else { 0 };
        let pred = match kind {
            0 => 0,
            1 => a,
            2 => b,
            3 => ((a as u16 + b as u16) / 2) as u8,
            _ => paeth(a, b, c),
        };
        out.push(row[x].wrapping_sub(pred));
    }
}

fn paeth(a: u8, b: u8, c: u8) -> u8 {
    let p = a as i16 + b as i16 - c as i16;
    let (pa, pb, pc) = ((p - a as i16).abs(), (p - b as i16).abs(), (p - c as i16).abs());
    if pa <= pb && pa <= pc {
        a
    } else if pb <= pc {
        b
    } else {
        c
    }
}

/// Per-row predictor filtering as in PNG, choosing for each row the filter
/// with the smallest sum of signed residual magnitudes. The output is
/// reversible and one byte per row longer than the input.
pub fn predictor_filter(pixels: &[u8], width: usize) -> Vec<u8> {
    let zero = vec![0u8; width];
    let mut out = Vec::with_capacity(pixels.len() + pixels.len() / width.max(1));
    let mut trial = Vec::with_capacity(width + 1);
    for (y, row) in pixels.chunks(width).enumerate() {
        let prev = if y > 0 { &pixels[(y - 1) * width..y * width] } else { &zero[..] };
        let mut best: Option<(u64, Vec<u8>)> = None;
        for kind in 0..5 {
            trial.clear();
            filter_row(kind, row, prev, &mut trial);
            let cost: u64 = trial[1..].iter().map(|&v| (v as i8).unsigned_abs() as u64).sum();
            if best.as_ref().is_none_or(|(c, _)| cost < *c) {
                best = Some((cost, trial.clone()));
            }
        }
        out.extend_from_slice(&best.unwrap().1);
    }
    out
}

/// Compressed byte length of an 8-bit grayscale heatmap: PNG-style row
/// filtering followed by raw deflate.
pub fn file_size_proxy(img: &HeatmapImage) -> Result<usize> {
    if img.pixels.is_empty() {
        return Err(Error::Config("cannot size an empty heatmap".into()));
    }
    if img.mode != RenderMode::Grayscale || img.pixels.len() != img.width * img.height {
        return Err(Error::Shape("file-size proxy expects a grayscale heatmap".into()));
    }
    let mut enc = DeflateEncoder::new(Vec::new(), Compression::new(DEFLATE_LEVEL));
    enc.write_all(&predictor_filter(&img.pixels, img.width))?;
    Ok(enc.finish()?.len())
}
