//! Named-array archive: the binary format used for replay checkpoints, network
//! parameters and agent bundles.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! header   : magic "VRLA" | version u16 | flags u16 (0) | array count u32 | reserved u32 (0)
//! record*  : name_len u16 | name utf-8 | dtype u8 | ndim u8 | dims u64*ndim
//!            | raw_len u64 | packed_len u64 | crc32(raw) u32 | deflate(raw)
//! ```
//!
//! Encoding is deterministic: identical archives produce identical bytes.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use alloc::{format, vec};

use crate::{Error, Result};

pub const MAGIC: [u8; 4] = *b"VRLA";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 16;
const DEFLATE_LEVEL: u8 = 6;

#[derive(Debug, Clone, PartialEq)]
pub enum ArrayData {
    U8(Vec<u8>),
    U64(Vec<u64>),
    F64(Vec<f64>),
}

impl ArrayData {
    fn tag(&self) -> u8 {
        match self {
            ArrayData::U8(_) => 0,
            ArrayData::U64(_) => 1,
            ArrayData::F64(_) => 2,
        }
    }

    fn len(&self) -> usize {
        match self {
            ArrayData::U8(v) => v.len(),
            ArrayData::U64(v) => v.len(),
            ArrayData::F64(v) => v.len(),
        }
    }

    fn raw_bytes(&self) -> Vec<u8> {
        match self {
            ArrayData::U8(v) => v.clone(),
            ArrayData::U64(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            ArrayData::F64(v) => v.iter().flat_map(|x| x.to_bits().to_le_bytes()).collect(),
        }
    }

    fn from_raw(tag: u8, raw: &[u8]) -> Result<Self> {
        let words = |width: usize| -> Result<()> {
            if raw.len() % width != 0 {
                return Err(Error::Decode(format!("payload length {} not a multiple of {width}", raw.len())));
            }
            Ok(())
        };
        match tag {
            0 => Ok(ArrayData::U8(raw.to_vec())),
            1 => {
                words(8)?;
                Ok(ArrayData::U64(raw.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect()))
            }
            2 => {
                words(8)?;
                Ok(ArrayData::F64(
                    raw.chunks_exact(8)
                        .map(|c| f64::from_bits(u64::from_le_bytes(c.try_into().unwrap())))
                        .collect(),
                ))
            }
            other => Err(Error::Decode(format!("unknown dtype tag {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrayRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: ArrayData,
}

/// An ordered collection of named arrays.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Archive {
    records: Vec<ArrayRecord>,
}

impl Archive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn records(&self) -> &[ArrayRecord] {
        &self.records
    }

    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, data: ArrayData) -> Result<()> {
        let name = name.into();
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(crate::error::contract(format!(
                "array `{name}`: shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        if self.records.iter().any(|r| r.name == name) {
            return Err(crate::error::contract(format!("duplicate array `{name}`")));
        }
        self.records.push(ArrayRecord { name, shape, data });
        Ok(())
    }

    pub fn push_u8(&mut self, name: impl Into<String>, data: Vec<u8>) -> Result<()> {
        let n = data.len();
        self.push(name, vec![n], ArrayData::U8(data))
    }

    pub fn push_u64(&mut self, name: impl Into<String>, data: Vec<u64>) -> Result<()> {
        let n = data.len();
        self.push(name, vec![n], ArrayData::U64(data))
    }

    pub fn push_f64(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) -> Result<()> {
        self.push(name, shape, ArrayData::F64(data))
    }

    pub fn get(&self, name: &str) -> Result<&ArrayRecord> {
        self.records
            .iter()
            .find(|r| r.name == name)
            .ok_or_else(|| Error::Decode(format!("missing array `{name}`")))
    }

    pub fn u8s(&self, name: &str) -> Result<&[u8]> {
        match &self.get(name)?.data {
            ArrayData::U8(v) => Ok(v),
            _ => Err(Error::Decode(format!("array `{name}` is not u8"))),
        }
    }

    pub fn u64s(&self, name: &str) -> Result<&[u64]> {
        match &self.get(name)?.data {
            ArrayData::U64(v) => Ok(v),
            _ => Err(Error::Decode(format!("array `{name}` is not u64"))),
        }
    }

    pub fn f64s(&self, name: &str) -> Result<&[f64]> {
        match &self.get(name)?.data {
            ArrayData::F64(v) => Ok(v),
            _ => Err(Error::Decode(format!("array `{name}` is not f64"))),
        }
    }

    /// Reads a u64 array and checks its length.
    pub fn u64s_exact(&self, name: &str, len: usize) -> Result<&[u64]> {
        let v = self.u64s(name)?;
        if v.len() != len {
            return Err(Error::Decode(format!("array `{name}` has {} values, expected {len}", v.len())));
        }
        Ok(v)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(&(self.records.len() as u32).to_le_bytes());
        out.extend_from_slice(&0u32.to_le_bytes());
        for record in &self.records {
            let raw = record.data.raw_bytes();
            let packed = miniz_oxide::deflate::compress_to_vec(&raw, DEFLATE_LEVEL);
            out.extend_from_slice(&(record.name.len() as u16).to_le_bytes());
            out.extend_from_slice(record.name.as_bytes());
            out.push(record.data.tag());
            out.push(record.shape.len() as u8);
            for &d in &record.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            out.extend_from_slice(&(raw.len() as u64).to_le_bytes());
            out.extend_from_slice(&(packed.len() as u64).to_le_bytes());
            out.extend_from_slice(&crc32fast::hash(&raw).to_le_bytes());
            out.extend_from_slice(&packed);
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut cursor = Cursor { bytes, pos: 0 };
        let magic = cursor.take(4)?;
        if magic != MAGIC {
            return Err(Error::Decode("bad archive magic".to_string()));
        }
        let version = cursor.u16()?;
        if version != VERSION {
            return Err(Error::Decode(format!("archive version {version} unsupported (expected {VERSION})")));
        }
        let _flags = cursor.u16()?;
        let count = cursor.u32()? as usize;
        let _reserved = cursor.u32()?;
        let mut archive = Archive::new();
        for _ in 0..count {
            let name_len = cursor.u16()? as usize;
            let name = core::str::from_utf8(cursor.take(name_len)?)
                .map_err(|_| Error::Decode("array name is not utf-8".to_string()))?
                .to_string();
            let tag = cursor.take(1)?[0];
            let ndim = cursor.take(1)?[0] as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(cursor.u64()? as usize);
            }
            let raw_len = cursor.u64()? as usize;
            let packed_len = cursor.u64()? as usize;
            let crc = cursor.u32()?;
            let packed = cursor.take(packed_len)?;
            let raw = miniz_oxide::inflate::decompress_to_vec_with_limit(packed, raw_len)
                .map_err(|e| Error::Decode(format!("array `{name}`: inflate failed: {e:?}")))?;
            if raw.len() != raw_len || crc32fast::hash(&raw) != crc {
                return Err(Error::Decode(format!("array `{name}`: checksum mismatch")));
            }
            let data = ArrayData::from_raw(tag, &raw)?;
            archive
                .push(name, shape, data)
                .map_err(|e| Error::Decode(format!("{e}")))?;
        }
        if cursor.pos != bytes.len() {
            return Err(Error::Decode(format!("{} trailing bytes", bytes.len() - cursor.pos)));
        }
        Ok(archive)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Decode(format!("truncated archive at byte {}", self.pos))),
        }
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
