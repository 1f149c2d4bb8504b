//! Binary tensor container shared by model checkpoints and dataset caches.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        4 bytes  "GCPL"
//! version      u32      currently 1
//! header_len   u32
//! header       header_len bytes of UTF-8 JSON (an object)
//! tensor_count u32
//! per tensor:
//!   name_len   u32
//!   name       name_len bytes of UTF-8
//!   rows       u64
//!   cols       u64
//!   data       rows * cols f64, row-major
//! ```

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"GCPL";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub header: serde_json::Value,
    pub tensors: Vec<(String, Array2<f64>)>,
}

impl Container {
    pub fn new(header: serde_json::Value) -> Self {
        Self {
            header,
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Array2<f64>) {
        self.tensors.push((name.into(), tensor));
    }

    pub fn tensor(&self, name: &str) -> Option<&Array2<f64>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let header = serde_json::to_vec(&self.header)?;
        out.write_all(&MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        out.write_all(&(header.len() as u32).to_le_bytes())?;
        out.write_all(&header)?;
        out.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for (name, tensor) in &self.tensors {
            out.write_all(&(name.len() as u32).to_le_bytes())?;
            out.write_all(name.as_bytes())?;
            out.write_all(&(tensor.nrows() as u64).to_le_bytes())?;
            out.write_all(&(tensor.ncols() as u64).to_le_bytes())?;
            for v in tensor.iter() {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        out.flush()
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(&mut input, &mut magic)?;
        if magic != MAGIC {
            return Err(Error::Container(format!("bad magic {magic:?}")));
        }
        let version = read_u32(&mut input)?;
        if version != VERSION {
            return Err(Error::Container(format!("unsupported version {version}")));
        }
        let header_len = read_u32(&mut input)? as usize;
        let header: serde_json::Value = serde_json::from_slice(&read_bytes(&mut input, header_len)?)?;
        let count = read_u32(&mut input)?;
        let mut tensors = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let name_len = read_u32(&mut input)? as usize;
            let name = String::from_utf8(read_bytes(&mut input, name_len)?)
                .map_err(|_| Error::Container("tensor name is not UTF-8".into()))?;
            let rows = read_u64(&mut input)? as usize;
            let cols = read_u64(&mut input)? as usize;
            let len = rows
                .checked_mul(cols)
                .ok_or_else(|| Error::Container(format!("tensor {name} is too large")))?;
            let raw = read_bytes(&mut input, len * 8)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let tensor = Array2::from_shape_vec((rows, cols), data)
                .map_err(|e| Error::Container(e.to_string()))?;
            tensors.push((name, tensor));
        }
        Ok(Self { header, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(std::io::BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(file))
    }
}

fn read_exact<R: Read>(input: &mut R, buf: &mut [u8]) -> Result<()> {
    input
        .read_exact(buf)
        .map_err(|e| Error::Container(format!("truncated: {e}")))
}

fn read_bytes<R: Read>(input: &mut R, len: usize) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    input
        .take(len as u64)
        .read_to_end(&mut buf)
        .map_err(|e| Error::Container(e.to_string()))?;
    if buf.len() != len {
        return Err(Error::Container("truncated".into()));
    }
    Ok(buf)
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(input, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(input: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(input, &mut b)?;
    Ok(u64::from_le_bytes(b))
}
