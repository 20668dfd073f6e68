//! IDX files: two zero bytes, a type byte, a dimension-count byte, big-endian
//! `u32` dimension sizes, then the payload. Only unsigned-byte payloads
//! (type `0x08`) are supported. Gzip-compressed files are detected by their
//! magic bytes and decompressed transparently.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;

use super::Dataset;
use crate::error::{Error, Result};
use crate::nn::{TaskKind, Tensor2D};

const UBYTE: u8 = 0x08;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

impl IdxArray {
    /// Number of items along the first dimension.
    pub fn items(&self) -> usize {
        self.dims.first().copied().unwrap_or(0)
    }

    /// Product of all dimensions after the first.
    pub fn item_len(&self) -> usize {
        self.dims.iter().skip(1).product()
    }
}

fn format_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        offset: offset as u64,
        message: message.into(),
    }
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxArray> {
    if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut raw = Vec::new();
        GzDecoder::new(bytes).read_to_end(&mut raw)?;
        return parse_idx(&raw);
    }
    if bytes.len() < 4 {
        return Err(format_err(bytes.len(), "truncated IDX magic"));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(format_err(0, "IDX magic must start with two zero bytes"));
    }
    if bytes[2] != UBYTE {
        return Err(format_err(2, format!("unsupported IDX type 0x{:02x}", bytes[2])));
    }
    let ndims = bytes[3] as usize;
    let header = 4 + 4 * ndims;
    if bytes.len() < header {
        return Err(format_err(bytes.len(), format!("truncated header: {ndims} dimensions declared")));
    }
    let dims: Vec<usize> = (0..ndims)
        .map(|i| {
            let o = 4 + 4 * i;
            u32::from_be_bytes(bytes[o..o + 4].try_into().expect("4 bytes")) as usize
        })
        .collect();
    let len: usize = dims.iter().product();
    let payload = &bytes[header..];
    if payload.len() < len {
        return Err(format_err(
            bytes.len(),
            format!("truncated payload: expected {len} bytes, found {}", payload.len()),
        ));
    }
    if payload.len() > len {
        return Err(format_err(header + len, format!("{} trailing bytes", payload.len() - len)));
    }
    Ok(IdxArray {
        dims,
        data: payload.to_vec(),
    })
}

pub fn load_idx(path: impl AsRef<Path>) -> Result<IdxArray> {
    parse_idx(&fs::read(path)?)
}

/// Uncompressed IDX encoding.
pub fn encode_idx(array: &IdxArray) -> Vec<u8> {
    let mut out = vec![0, 0, UBYTE, array.dims.len() as u8];
    for &d in &array.dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(&array.data);
    out
}

pub fn write_idx<W: Write>(mut out: W, array: &IdxArray) -> Result<()> {
    out.write_all(&encode_idx(array))?;
    Ok(())
}

/// Images scaled to `[0, 1]` with integer class labels.
pub fn idx_dataset(images: &IdxArray, labels: &IdxArray, limit: Option<usize>) -> Result<Dataset> {
    if images.items() != labels.items() || labels.item_len() != 1 {
        return Err(Error::shape(
            format!("{} single-byte labels", images.items()),
            format!("{:?}", labels.dims),
        ));
    }
    let n = limit.map_or(images.items(), |l| l.min(images.items()));
    let width = images.item_len();
    let inputs = Tensor2D::from_vec(
        n,
        width,
        images.data[..n * width].iter().map(|&b| f64::from(b) / 255.0).collect(),
    )?;
    let ys: Vec<f64> = labels.data[..n].iter().map(|&b| f64::from(b)).collect();
    let classes = (labels.data.iter().copied().max().unwrap_or(0) as usize + 1).max(2);
    Dataset::new(
        (0..n as u64).collect(),
        inputs,
        Vec::new(),
        Tensor2D::column(&ys)?,
        TaskKind::Multiclass { classes },
    )
}
