//! Binary container shared by model, dataset and attribution files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        [u8; 4]
//! version      u16
//! header_len   u32
//! header       [u8; header_len]
//! header_crc   u32                 CRC-32 of `header`
//! block_count  u32
//! block*       tag_len u16, tag [u8], ndim u32, dims u64 * ndim,
//!              payload f64 * prod(dims), crc u32 (CRC-32 of everything
//!              in the block before the checksum)
//! ```
//!
//! Files are written to a temporary sibling and renamed into place so a
//! reader never observes a partially written container.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, FormatError, Result};
use crate::tensor::Tensor;

pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub tag: String,
    pub tensor: Tensor,
}

impl Block {
    pub fn new(tag: impl Into<String>, tensor: Tensor) -> Self {
        Self {
            tag: tag.into(),
            tensor,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub magic: [u8; 4],
    pub header: Vec<u8>,
    pub blocks: Vec<Block>,
}

impl Container {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.magic);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.header.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.header);
        out.extend_from_slice(&crc32fast::hash(&self.header).to_le_bytes());
        out.extend_from_slice(&(self.blocks.len() as u32).to_le_bytes());
        for block in &self.blocks {
            let start = out.len();
            let tag = block.tag.as_bytes();
            out.extend_from_slice(&(tag.len() as u16).to_le_bytes());
            out.extend_from_slice(tag);
            let shape = block.tensor.shape();
            out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
            for &d in shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in block.tensor.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
            let crc = crc32fast::hash(&out[start..]);
            out.extend_from_slice(&crc.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8], expected_magic: [u8; 4]) -> Result<Self, FormatError> {
        let mut cur = Cursor { bytes, pos: 0 };
        let magic: [u8; 4] = cur.take(4, "magic")?.try_into().unwrap();
        if magic != expected_magic {
            return Err(FormatError::BadMagic {
                expected: expected_magic,
                found: magic,
            });
        }
        let version = cur.u16("version")?;
        if version != FORMAT_VERSION {
            return Err(FormatError::UnsupportedVersion(version));
        }
        let header_len = cur.u32("header length")? as usize;
        let header = cur.take(header_len, "header")?.to_vec();
        if cur.u32("header checksum")? != crc32fast::hash(&header) {
            return Err(FormatError::Checksum {
                block: "header".into(),
            });
        }
        let count = cur.u32("block count")? as usize;
        let mut blocks = Vec::with_capacity(count.min(1 << 16));
        for index in 0..count {
            let start = cur.pos;
            let what = format!("block {index}");
            let tag_len = cur.u16(&what)? as usize;
            let tag = String::from_utf8(cur.take(tag_len, &what)?.to_vec())
                .map_err(|_| FormatError::Malformed(format!("{what}: tag is not UTF-8")))?;
            let ndim = cur.u32(&what)? as usize;
            if ndim > 8 {
                return Err(FormatError::Malformed(format!("{what}: {ndim} dimensions")));
            }
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(cur.u64(&what)? as usize);
            }
            let n = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .filter(|&n| n <= bytes.len() / 8)
                .ok_or_else(|| FormatError::Truncated(format!("{what} payload")))?;
            let payload = cur.take(n * 8, &what)?;
            let data = payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let expected = crc32fast::hash(&bytes[start..cur.pos]);
            if cur.u32(&what)? != expected {
                return Err(FormatError::Checksum { block: tag });
            }
            let tensor = Tensor::new(shape, data)
                .map_err(|e| FormatError::Malformed(format!("{what}: {e}")))?;
            blocks.push(Block { tag, tensor });
        }
        if cur.pos != bytes.len() {
            return Err(FormatError::Malformed(format!(
                "{} trailing bytes",
                bytes.len() - cur.pos
            )));
        }
        Ok(Container {
            magic,
            header,
            blocks,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.encode())
    }

    pub fn read(path: &Path, expected_magic: [u8; 4]) -> Result<Self> {
        let bytes = fs::read(path)?;
        Ok(Self::decode(&bytes, expected_magic)?)
    }

    pub fn block(&self, tag: &str) -> Result<&Tensor> {
        self.blocks
            .iter()
            .find(|b| b.tag == tag)
            .map(|b| &b.tensor)
            .ok_or_else(|| FormatError::Malformed(format!("missing block {tag:?}")).into())
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], FormatError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| FormatError::Truncated(what.to_string()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

/// Little-endian byte builder for container headers.
#[derive(Default)]
pub struct HeaderWriter {
    buf: Vec<u8>,
}

impl HeaderWriter {
    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn f64(&mut self, v: f64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn str(&mut self, s: &str) -> &mut Self {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
        self
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub struct HeaderReader<'a> {
    cur: Cursor<'a>,
}

impl<'a> HeaderReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self {
            cur: Cursor { bytes, pos: 0 },
        }
    }

    pub fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.cur.take(1, "header")?[0])
    }

    pub fn u32(&mut self) -> Result<u32, FormatError> {
        self.cur.u32("header")
    }

    pub fn u64(&mut self) -> Result<u64, FormatError> {
        self.cur.u64("header")
    }

    pub fn f64(&mut self) -> Result<f64, FormatError> {
        Ok(f64::from_bits(self.cur.u64("header")?))
    }

    pub fn str(&mut self) -> Result<String, FormatError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.cur.take(n, "header")?.to_vec())
            .map_err(|_| FormatError::Malformed("header string is not UTF-8".into()))
    }

    pub fn finish(self) -> Result<(), FormatError> {
        if self.cur.pos != self.cur.bytes.len() {
            return Err(FormatError::Malformed("trailing header bytes".into()));
        }
        Ok(())
    }
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Container {
        Container {
            magic: *b"TEST",
            header: vec![1, 2, 3],
            blocks: vec![
                Block::new("a", Tensor::new(vec![2, 2], vec![1.0, -2.5, 3.25, 0.0]).unwrap()),
                Block::new("empty", Tensor::zeros(&[0])),
            ],
        }
    }

    #[test]
    fn round_trip() {
        let c = sample();
        let bytes = c.encode();
        assert_eq!(Container::decode(&bytes, *b"TEST").unwrap(), c);
    }

    #[test]
    fn rejects_wrong_magic_and_version() {
        let mut bytes = sample().encode();
        assert!(matches!(
            Container::decode(&bytes, *b"ATBM"),
            Err(FormatError::BadMagic { .. })
        ));
        bytes[4] = 9;
        assert_eq!(
            Container::decode(&bytes, *b"TEST"),
            Err(FormatError::UnsupportedVersion(9))
        );
    }

    #[test]
    fn every_truncation_is_rejected() {
        let bytes = sample().encode();
        for len in 0..bytes.len() {
            assert!(Container::decode(&bytes[..len], *b"TEST").is_err(), "len {len}");
        }
    }

    #[test]
    fn payload_flip_fails_checksum() {
        let bytes = sample().encode();
        // First payload byte of block "a": 4+2+4+3+4+4 + 2+1 + 4 + 16.
        let offset = 44;
        let mut corrupted = bytes.clone();
        corrupted[offset] ^= 0x40;
        assert_eq!(
            Container::decode(&corrupted, *b"TEST"),
            Err(FormatError::Checksum { block: "a".into() })
        );
    }
}
