//! Heatmap rendering and binary netpbm (P5/P6) encoding.

use std::path::Path;

use crate::attrib::{AttributionMap, Method, Resolution};
use crate::codec::write_atomic;
use crate::error::{Error, FormatError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RenderMode {
    Grayscale,
    /// Three bytes per pixel.
    Colormapped,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeatmapImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
    pub mode: RenderMode,
    pub abs_applied: bool,
}

/// Min-max normalised 8-bit rendering of a channel-summed relevance plane.
/// Constant planes render as mid-grey.
pub fn render_plane(values: &[f64], height: usize, width: usize) -> Result<HeatmapImage> {
    if values.len() != height * width || values.is_empty() {
        return Err(Error::Shape(format!("{} values for a {height}×{width} heatmap", values.len())));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("heatmap has non-finite scores".into()));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pixels = if hi > lo {
        values.iter().map(|v| ((v - lo) / (hi - lo) * 255.0).round() as u8).collect()
    } else {
        vec![128; values.len()]
    };
    Ok(HeatmapImage {
        width,
        height,
        pixels,
        mode: RenderMode::Grayscale,
        abs_applied: false,
    })
}

pub fn render_heatmap(map: &AttributionMap, use_abs: bool) -> Result<HeatmapImage> {
    let scores = map.pixel_scores()?;
    let (_, h, w) = scores.chw()?;
    let mut plane = scores.channel_sum()?.into_data();
    if use_abs {
        plane.iter_mut().for_each(|v| *v = v.abs());
    }
    let mut img = render_plane(&plane, h, w)?;
    img.abs_applied = use_abs;
    Ok(img)
}

/// Rendering conventions per method: absolute values for the signed
/// gradient products, and only positive segments for Lime.
pub fn render_for_method(map: &AttributionMap, method: Method) -> Result<HeatmapImage> {
    if map.resolution == Resolution::PerSuperpixel {
        let mut clipped = map.clone();
        clipped.scores = map.scores.map(|v| v.max(0.0));
        return render_heatmap(&clipped, false);
    }
    render_heatmap(map, method.render_abs())
}

/// Blue → cyan → yellow → red ramp.
pub fn colormap(img: &HeatmapImage) -> Result<HeatmapImage> {
    if img.mode != RenderMode::Grayscale {
        return Err(Error::Config("colormap expects a grayscale image".into()));
    }
    const STOPS: [[f64; 3]; 4] = [[0.0, 0.0, 128.0], [0.0, 200.0, 255.0], [255.0, 230.0, 0.0], [200.0, 0.0, 0.0]];
    let mut pixels = Vec::with_capacity(img.pixels.len() * 3);
    for &g in &img.pixels {
        let t = g as f64 / 255.0 * (STOPS.len() - 1) as f64;
        let i = (t.floor() as usize).min(STOPS.len() - 2);
        let f = t - i as f64;
        for ch in 0..3 {
            pixels.push((STOPS[i][ch] * (1.0 - f) + STOPS[i + 1][ch] * f).round() as u8);
        }
    }
    Ok(HeatmapImage {
        pixels,
        mode: RenderMode::Colormapped,
        ..img.clone()
    })
}

/// Binary PGM (P5) or PPM (P6) bytes, maxval 255.
pub fn encode_pnm(img: &HeatmapImage) -> Result<Vec<u8>> {
    let (magic, depth) = match img.mode {
        RenderMode::Grayscale => ("P5", 1),
        RenderMode::Colormapped => ("P6", 3),
    };
    if img.pixels.len() != img.width * img.height * depth || img.pixels.is_empty() {
        return Err(Error::Shape(format!(
            "{} bytes for a {}×{}×{depth} image",
            img.pixels.len(),
            img.width,
            img.height
        )));
    }
    let mut out = format!("{magic}\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    Ok(out)
}

pub fn write_pgm(img: &HeatmapImage, path: &Path) -> Result<()> {
    if img.mode != RenderMode::Grayscale {
        return Err(Error::Config("write_pgm needs a grayscale image".into()));
    }
    write_atomic(path, &encode_pnm(img)?)
}

pub fn write_ppm(img: &HeatmapImage, path: &Path) -> Result<()> {
    if img.mode != RenderMode::Colormapped {
        return Err(Error::Config("write_ppm needs a colour-mapped image".into()));
    }
    write_atomic(path, &encode_pnm(img)?)
}

/// Parses 8-bit binary P5/P6 following the netpbm header grammar: magic,
/// then width, height and maxval separated by whitespace (with `#` comments
/// running to end of line), then exactly one whitespace byte.
pub fn decode_pnm(bytes: &[u8]) -> Result<HeatmapImage> {
    let bad = |m: &str| Error::from(FormatError::Malformed(format!("netpbm: {m}")));
    let (mode, depth) = match bytes.get(..2) {
        Some(b"P5") => (RenderMode::Grayscale, 1),
        Some(b"P6") => (RenderMode::Colormapped, 3),
        _ => return Err(bad("unsupported magic")),
    };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        let start_ws = pos;
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n' && b != b'\r') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        if pos == start_ws {
            return Err(bad("missing whitespace in header"));
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("expected a decimal number"))?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(bad("only maxval 255 is supported"));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(bad("missing whitespace after maxval"));
    }
    pos += 1;
    let raster = &bytes[pos..];
    if raster.len() != width * height * depth {
        return Err(FormatError::Truncated(format!(
            "netpbm raster has {} bytes, expected {}",
            raster.len(),
            width * height * depth
        ))
        .into());
    }
    Ok(HeatmapImage {
        width,
        height,
        pixels: raster.to_vec(),
        mode,
        abs_applied: false,
    })
}
