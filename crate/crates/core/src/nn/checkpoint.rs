//! `DPUM` checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "DPUM"            4 bytes magic
//! version           u16
//! spec_len          u32, then spec_len bytes of JSON-encoded NetworkSpec
//! tensor_count      u32
//!   rows, cols      u32, u32
//!   data            rows·cols IEEE-754 f64
//! step              u64
//! section_count     u32
//!   tag             4 bytes
//!   len             u32, then len bytes of payload
//! ```
//!
//! Tensors follow [`NetworkState::all_tensors`] order. Extra sections carry
//! data owned by other modules (the estimator writes one tagged `ESTM`).

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::spec::NetworkSpec;
use super::state::NetworkState;
use super::tensor::Tensor2D;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"DPUM";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec: NetworkSpec,
    pub state: NetworkState,
    pub sections: Vec<([u8; 4], Vec<u8>)>,
}

impl Checkpoint {
    pub fn new(spec: NetworkSpec, state: NetworkState) -> Self {
        Self {
            spec,
            state,
            sections: Vec::new(),
        }
    }

    pub fn section(&self, tag: &[u8; 4]) -> Option<&[u8]> {
        self.sections
            .iter()
            .find(|(t, _)| t == tag)
            .map(|(_, b)| b.as_slice())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = ByteWriter::default();
        w.bytes(MAGIC);
        w.u16(VERSION);
        let spec = serde_json::to_vec(&self.spec)?;
        w.u32(spec.len() as u32);
        w.bytes(&spec);
        let tensors = self.state.all_tensors();
        w.u32(tensors.len() as u32);
        for t in tensors {
            w.tensor(t);
        }
        w.u64(self.state.step);
        w.u32(self.sections.len() as u32);
        for (tag, payload) in &self.sections {
            w.bytes(tag);
            w.u32(payload.len() as u32);
            w.bytes(payload);
        }
        Ok(w.0)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        if r.take(4)? != MAGIC {
            return Err(Error::Format {
                offset: 0,
                message: "missing DPUM magic".into(),
            });
        }
        let version = r.u16()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let spec_len = r.u32()? as usize;
        let spec: NetworkSpec = serde_json::from_slice(r.take(spec_len)?)?;
        spec.validate()?;
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            tensors.push(r.tensor()?);
        }
        let step = r.u64()?;
        let state = NetworkState::from_tensors(&spec, tensors, step)?;
        let n_sections = r.u32()? as usize;
        let mut sections = Vec::with_capacity(n_sections);
        for _ in 0..n_sections {
            let tag: [u8; 4] = r.take(4)?.try_into().expect("4 bytes");
            let len = r.u32()? as usize;
            sections.push((tag, r.take(len)?.to_vec()));
        }
        if r.remaining() != 0 {
            return Err(Error::Format {
                offset: r.pos as u64,
                message: format!("{} trailing bytes", r.remaining()),
            });
        }
        Ok(Self {
            spec,
            state,
            sections,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut buf = Vec::new();
        fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}

#[derive(Default)]
pub(crate) struct ByteWriter(pub Vec<u8>);

impl ByteWriter {
    pub fn bytes(&mut self, b: &[u8]) {
        self.0.extend_from_slice(b);
    }
    pub fn u16(&mut self, v: u16) {
        self.bytes(&v.to_le_bytes());
    }
    pub fn u32(&mut self, v: u32) {
        self.bytes(&v.to_le_bytes());
    }
    pub fn u64(&mut self, v: u64) {
        self.bytes(&v.to_le_bytes());
    }
    pub fn f64(&mut self, v: f64) {
        self.bytes(&v.to_le_bytes());
    }
    pub fn f64s(&mut self, vs: &[f64]) {
        self.u32(vs.len() as u32);
        vs.iter().for_each(|&v| self.f64(v));
    }
    pub fn tensor(&mut self, t: &Tensor2D) {
        self.u32(t.rows() as u32);
        self.u32(t.cols() as u32);
        t.data().iter().for_each(|&v| self.f64(v));
    }
}

pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }
    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::Format {
                offset: self.pos as u64,
                message: format!("truncated: need {n} bytes, {} left", self.remaining()),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2")))
    }
    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4")))
    }
    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8")))
    }
    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8")))
    }
    pub fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.u32()? as usize;
        (0..n).map(|_| self.f64()).collect()
    }
    pub fn tensor(&mut self) -> Result<Tensor2D> {
        let at = self.pos as u64;
        let rows = self.u32()? as usize;
        let cols = self.u32()? as usize;
        let data = (0..rows * cols).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        Tensor2D::from_vec(rows, cols, data).map_err(|e| Error::Format {
            offset: at,
            message: e.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::spec::{MlpOptions, TaskKind};

    #[test]
    fn round_trip_is_bit_exact() {
        let spec = NetworkSpec::mlp(
            3,
            &[5, 4],
            TaskKind::Multiclass { classes: 3 },
            &MlpOptions {
                dropout: Some(0.1 + 0.2),
                batch_norm: true,
                embeddings: vec![(7, 2)],
            },
        );
        let mut state = NetworkState::init(&spec, 11).unwrap();
        state.step = 123;
        let mut ck = Checkpoint::new(spec, state);
        ck.sections.push((*b"TEST", vec![1, 2, 3]));
        let bytes = ck.to_bytes().unwrap();
        assert_eq!(&bytes[..4], b"DPUM");
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes().unwrap(), bytes);
        assert_eq!(back.section(b"TEST"), Some(&[1u8, 2, 3][..]));
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let spec = NetworkSpec::mlp(1, &[2], TaskKind::Regression, &MlpOptions::default());
        let ck = Checkpoint::new(spec.clone(), NetworkState::init(&spec, 0).unwrap());
        let bytes = ck.to_bytes().unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::Format { offset: 0, .. })));
        assert!(matches!(
            Checkpoint::from_bytes(&bytes[..bytes.len() - 3]),
            Err(Error::Format { .. })
        ));
    }
}
