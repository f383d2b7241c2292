//! Binary weight file.
//!
//! ```text
//! magic    b"KSDD"
//! version  u32 LE
//! count    u32 LE
//! count × { name_len u32 | name utf-8 | dtype u8 | ndim u32 | dims u64… | data LE }
//! ```
//!
//! Tensors are written in [`Model::entries`] order; running normalization
//! statistics are stored alongside the learnable parameters.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::tensor::{DType, Real};

use super::{Architecture, Model, NetworkError};

pub const WEIGHT_FILE_MAGIC: [u8; 4] = *b"KSDD";
pub const WEIGHT_FILE_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum WeightFileError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a weight file (bad magic {0:?})")]
    BadMagic([u8; 4]),
    #[error("unsupported weight file version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("weight file truncated while reading {what}")]
    Truncated { what: String },
    #[error("malformed weight file: {0}")]
    Malformed(String),
}

impl From<NetworkError> for WeightFileError {
    fn from(e: NetworkError) -> Self {
        WeightFileError::Malformed(e.to_string())
    }
}

struct Record {
    name: String,
    dtype: DType,
    dims: Vec<usize>,
    bytes: Vec<u8>,
}

impl Record {
    fn values<T: Real>(&self) -> Vec<T> {
        match self.dtype {
            DType::F32 => self
                .bytes
                .chunks_exact(4)
                .map(|c| T::of(f32::read_le(c) as f64))
                .collect(),
            DType::F64 => self.bytes.chunks_exact(8).map(|c| T::of(f64::read_le(c))).collect(),
        }
    }
}

/// Serialize every tensor of `model` in its own precision.
pub fn write_weights<T: Real>(model: &Model<T>, mut out: impl Write) -> Result<(), WeightFileError> {
    let entries = model.entries();
    let mut buf = Vec::new();
    buf.extend_from_slice(&WEIGHT_FILE_MAGIC);
    buf.extend_from_slice(&WEIGHT_FILE_VERSION.to_le_bytes());
    buf.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for e in &entries {
        buf.extend_from_slice(&(e.name.len() as u32).to_le_bytes());
        buf.extend_from_slice(e.name.as_bytes());
        buf.push(T::DTYPE.tag());
        buf.extend_from_slice(&(e.shape.len() as u32).to_le_bytes());
        for d in &e.shape {
            buf.extend_from_slice(&(*d as u64).to_le_bytes());
        }
        e.data.iter().for_each(|v| v.push_le(&mut buf));
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn save_weights<T: Real>(model: &Model<T>, path: impl AsRef<Path>) -> Result<(), WeightFileError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_weights(model, &mut f)?;
    f.flush()?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], WeightFileError> {
        if self.bytes.len() - self.pos < n {
            return Err(WeightFileError::Truncated { what: what.to_string() });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, WeightFileError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64, WeightFileError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

fn parse(bytes: &[u8]) -> Result<Vec<Record>, WeightFileError> {
    let mut c = Cursor { bytes, pos: 0 };
    let magic: [u8; 4] = match c.take(4, "magic") {
        Ok(m) => m.try_into().unwrap(),
        Err(_) => {
            let mut m = [0u8; 4];
            m[..bytes.len()].copy_from_slice(bytes);
            return Err(WeightFileError::BadMagic(m));
        }
    };
    if magic != WEIGHT_FILE_MAGIC {
        return Err(WeightFileError::BadMagic(magic));
    }
    let version = c.u32("version")?;
    if version != WEIGHT_FILE_VERSION {
        return Err(WeightFileError::Version {
            found: version,
            expected: WEIGHT_FILE_VERSION,
        });
    }
    let count = c.u32("tensor count")?;
    let mut records = Vec::new();
    for i in 0..count {
        let len = c.u32(&format!("name length of tensor {i}"))? as usize;
        let name = std::str::from_utf8(c.take(len, &format!("name of tensor {i}"))?)
            .map_err(|_| WeightFileError::Malformed(format!("tensor {i} name is not UTF-8")))?
            .to_string();
        let tag = c.take(1, &format!("dtype of `{name}`"))?[0];
        let dtype = DType::from_tag(tag)
            .ok_or_else(|| WeightFileError::Malformed(format!("unknown dtype {tag} for `{name}`")))?;
        let ndim = c.u32(&format!("rank of `{name}`"))? as usize;
        if ndim > 8 {
            return Err(WeightFileError::Malformed(format!("`{name}` has rank {ndim}")));
        }
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(c.u64(&format!("shape of `{name}`"))? as usize);
        }
        let n = dims
            .iter()
            .try_fold(dtype.size(), |acc, d| acc.checked_mul(*d))
            .ok_or_else(|| WeightFileError::Malformed(format!("`{name}` is too large")))?;
        let bytes = c.take(n, &format!("data of `{name}`"))?.to_vec();
        records.push(Record {
            name,
            dtype,
            dims,
            bytes,
        });
    }
    if c.pos != bytes.len() {
        return Err(WeightFileError::Malformed(format!(
            "{} trailing bytes",
            bytes.len() - c.pos
        )));
    }
    Ok(records)
}

fn dims_of<'a>(map: &'a HashMap<&str, &Record>, name: &str) -> Result<&'a [usize], WeightFileError> {
    map.get(name)
        .map(|r| r.dims.as_slice())
        .ok_or_else(|| WeightFileError::Malformed(format!("missing tensor `{name}`")))
}

/// Recover channel widths from the stored weight shapes.
fn infer_architecture(map: &HashMap<&str, &Record>) -> Result<Architecture, WeightFileError> {
    let mut widths = Vec::new();
    for i in 1..=11 {
        let d = dims_of(map, &format!("seg.conv{i}.weight"))?;
        if d.len() != 4 {
            return Err(WeightFileError::Malformed(format!(
                "seg.conv{i}.weight has shape {d:?}"
            )));
        }
        widths.push(d[0]);
    }
    let mut decision_channels = Vec::new();
    for i in 1..=3 {
        let d = dims_of(map, &format!("dec.conv{i}.weight"))?;
        if d.len() != 4 {
            return Err(WeightFileError::Malformed(format!(
                "dec.conv{i}.weight has shape {d:?}"
            )));
        }
        decision_channels.push(d[0]);
    }
    Ok(Architecture {
        blocks: vec![widths[0..2].to_vec(), widths[2..5].to_vec(), widths[5..9].to_vec()],
        feature_channels: widths[9],
        decision_channels,
    })
}

/// Parse a weight file into a model of precision `T`. The architecture is
/// recovered from tensor shapes and every tensor must be present exactly once.
pub fn read_weights<T: Real>(mut input: impl Read) -> Result<Model<T>, WeightFileError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let records = parse(&bytes)?;
    let mut map = HashMap::new();
    for r in &records {
        if map.insert(r.name.as_str(), r).is_some() {
            return Err(WeightFileError::Malformed(format!("duplicate tensor `{}`", r.name)));
        }
    }
    let arch = infer_architecture(&map)?;
    let mut model = Model::<T>::new(&arch, 0)?;
    let mut entries = model.entries_mut();
    if entries.len() != records.len() {
        return Err(WeightFileError::Malformed(format!(
            "expected {} tensors, found {}",
            entries.len(),
            records.len()
        )));
    }
    for e in &mut entries {
        let r = map
            .get(e.name.as_str())
            .ok_or_else(|| WeightFileError::Malformed(format!("missing tensor `{}`", e.name)))?;
        if r.dims != e.shape {
            return Err(WeightFileError::Malformed(format!(
                "`{}` has shape {:?}, expected {:?}",
                e.name, r.dims, e.shape
            )));
        }
        e.data.copy_from_slice(&r.values::<T>());
    }
    drop(entries);
    model.arch.validate()?;
    Ok(model)
}

pub fn load_weights<T: Real>(path: impl AsRef<Path>) -> Result<Model<T>, WeightFileError> {
    read_weights(std::fs::File::open(path)?)
}
