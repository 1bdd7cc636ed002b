//! Model files: magic `ATBM`, the spec table in the container header and one
//! checksummed `f64` block per parameter tensor.

use std::path::Path;

use super::{LayerDesc, LayerParams, ModelSpec, WeightStore};
use crate::codec::{Block, Container, HeaderReader, HeaderWriter};
use crate::error::{Error, FormatError, Result};

pub const MODEL_MAGIC: [u8; 4] = *b"ATBM";

const TAG_CONV: u8 = 1;
const TAG_RELU: u8 = 2;
const TAG_MAXPOOL: u8 = 3;
const TAG_GAP: u8 = 4;
const TAG_DENSE: u8 = 5;
const TAG_SIGMOID: u8 = 6;

fn encode_spec(spec: &ModelSpec) -> Vec<u8> {
    let mut h = HeaderWriter::default();
    let [c, ht, w] = spec.input_shape();
    h.u32(c as u32).u32(ht as u32).u32(w as u32);
    h.u32(spec.num_classes() as u32);
    h.u32(spec.gradcam_layer() as u32);
    h.u32(spec.layers().len() as u32);
    for layer in spec.layers() {
        match *layer {
            LayerDesc::Conv2d {
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                h.u8(TAG_CONV)
                    .u32(out_channels as u32)
                    .u32(kernel as u32)
                    .u32(stride as u32)
                    .u32(padding as u32);
            }
            LayerDesc::Relu => {
                h.u8(TAG_RELU);
            }
            LayerDesc::MaxPool2x2 => {
                h.u8(TAG_MAXPOOL);
            }
            LayerDesc::GlobalAvgPool => {
                h.u8(TAG_GAP);
            }
            LayerDesc::Dense { out_features } => {
                h.u8(TAG_DENSE).u32(out_features as u32);
            }
            LayerDesc::Sigmoid => {
                h.u8(TAG_SIGMOID);
            }
        }
    }
    h.finish()
}

fn decode_spec(bytes: &[u8]) -> Result<ModelSpec> {
    let mut r = HeaderReader::new(bytes);
    let input = [r.u32()? as usize, r.u32()? as usize, r.u32()? as usize];
    let num_classes = r.u32()? as usize;
    let gradcam = r.u32()? as usize;
    let n = r.u32()? as usize;
    let mut layers = Vec::with_capacity(n.min(1024));
    for _ in 0..n {
        let layer = match r.u8()? {
            TAG_CONV => LayerDesc::Conv2d {
                out_channels: r.u32()? as usize,
                kernel: r.u32()? as usize,
                stride: r.u32()? as usize,
                padding: r.u32()? as usize,
            },
            TAG_RELU => LayerDesc::Relu,
            TAG_MAXPOOL => LayerDesc::MaxPool2x2,
            TAG_GAP => LayerDesc::GlobalAvgPool,
            TAG_DENSE => LayerDesc::Dense {
                out_features: r.u32()? as usize,
            },
            TAG_SIGMOID => LayerDesc::Sigmoid,
            t => return Err(FormatError::Malformed(format!("unknown layer tag {t}")).into()),
        };
        layers.push(layer);
    }
    r.finish()?;
    ModelSpec::new(layers, input, num_classes, gradcam)
        .map_err(|e| FormatError::Malformed(format!("spec table: {e}")).into())
}

pub fn save_model(spec: &ModelSpec, weights: &WeightStore, path: &Path) -> Result<()> {
    weights.validate(spec)?;
    let mut blocks = Vec::new();
    for (i, p) in weights.layers().iter().enumerate() {
        if let Some(p) = p {
            blocks.push(Block::new(format!("layer{i}.weight"), p.weight.clone()));
            blocks.push(Block::new(format!("layer{i}.bias"), p.bias.clone()));
        }
    }
    Container {
        magic: MODEL_MAGIC,
        header: encode_spec(spec),
        blocks,
    }
    .write(path)
}

pub fn load_model(path: &Path) -> Result<(ModelSpec, WeightStore)> {
    let container = Container::read(path, MODEL_MAGIC)?;
    let spec = decode_spec(&container.header)?;
    let layers = (0..spec.layers().len())
        .map(|i| -> Result<Option<LayerParams>> {
            if spec.param_shapes(i).is_none() {
                return Ok(None);
            }
            Ok(Some(LayerParams {
                weight: container.block(&format!("layer{i}.weight"))?.clone(),
                bias: container.block(&format!("layer{i}.bias"))?.clone(),
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    let weights = WeightStore::new(layers);
    weights
        .validate(&spec)
        .map_err(|e| Error::Corrupt(FormatError::Malformed(e.to_string())))?;
    Ok((spec, weights))
}
