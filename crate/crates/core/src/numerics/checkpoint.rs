//! Versioned binary checkpoint of named arrays.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   b"OGCK"
//! version u32 (= 1)
//! count   u32
//! entry*  kind u8 (0 = f64 tensor, 1 = u64 array)
//!         name_len u32, name bytes (UTF-8)
//!         ndim u32, dims u64 * ndim
//!         payload: product(dims) values, 8 bytes each
//! ```
//!
//! `f64` values are stored by bit pattern, so a round trip is bit-exact.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::{Param, Tensor};

const MAGIC: &[u8; 4] = b"OGCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("duplicate entry `{0}`")]
    Duplicate(String),
    #[error("missing entry `{0}`")]
    Missing(String),
    #[error("entry `{name}` has shape {found:?}, expected {expected:?}")]
    Shape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub enum Entry {
    F64(Tensor),
    U64(Vec<u64>),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    entries: Vec<(String, Entry)>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    fn insert(&mut self, name: String, entry: Entry) -> Result<(), CheckpointError> {
        if self.entries.iter().any(|(n, _)| *n == name) {
            return Err(CheckpointError::Duplicate(name));
        }
        self.entries.push((name, entry));
        Ok(())
    }

    pub fn insert_tensor(&mut self, name: impl Into<String>, t: &Tensor) -> Result<(), CheckpointError> {
        self.insert(name.into(), Entry::F64(t.clone()))
    }

    pub fn insert_u64(&mut self, name: impl Into<String>, values: Vec<u64>) -> Result<(), CheckpointError> {
        self.insert(name.into(), Entry::U64(values))
    }

    /// Stores every parameter under `prefix/<param name>`.
    pub fn insert_params<'a>(
        &mut self,
        prefix: &str,
        params: impl IntoIterator<Item = &'a Param>,
    ) -> Result<(), CheckpointError> {
        for p in params {
            self.insert_tensor(format!("{}/{}", prefix, p.name()), &p.value)?;
        }
        Ok(())
    }

    /// Restores parameters stored by [`Checkpoint::insert_params`].
    pub fn load_params<'a>(
        &self,
        prefix: &str,
        params: impl IntoIterator<Item = &'a mut Param>,
    ) -> Result<(), CheckpointError> {
        for p in params {
            let name = format!("{}/{}", prefix, p.name());
            let t = self.tensor(&name).ok_or_else(|| CheckpointError::Missing(name.clone()))?;
            if t.shape() != p.value.shape() {
                return Err(CheckpointError::Shape {
                    name,
                    expected: p.value.shape().to_vec(),
                    found: t.shape().to_vec(),
                });
            }
            p.value = t.clone();
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Entry> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, e)| e)
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        match self.get(name) {
            Some(Entry::F64(t)) => Some(t),
            _ => None,
        }
    }

    pub fn u64s(&self, name: &str) -> Option<&[u64]> {
        match self.get(name) {
            Some(Entry::U64(v)) => Some(v),
            _ => None,
        }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), CheckpointError> {
        w.write_all(MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(self.entries.len() as u32).to_le_bytes())?;
        for (name, entry) in &self.entries {
            let (kind, dims, words): (u8, Vec<usize>, Vec<u64>) = match entry {
                Entry::F64(t) => (0, t.shape().to_vec(), t.data().iter().map(|v| v.to_bits()).collect()),
                Entry::U64(v) => (1, vec![v.len()], v.clone()),
            };
            w.write_all(&[kind])?;
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(dims.len() as u32).to_le_bytes())?;
            for d in &dims {
                w.write_all(&(*d as u64).to_le_bytes())?;
            }
            for word in words {
                w.write_all(&word.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, CheckpointError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = read_u32(&mut r)?;
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::UnsupportedVersion(version));
        }
        let count = read_u32(&mut r)?;
        let mut ck = Checkpoint::new();
        for _ in 0..count {
            let mut kind = [0u8; 1];
            r.read_exact(&mut kind)?;
            let name_len = read_u32(&mut r)? as usize;
            let mut name = vec![0u8; name_len];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name).map_err(|e| CheckpointError::Malformed(e.to_string()))?;
            let ndim = read_u32(&mut r)? as usize;
            let mut dims = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                dims.push(read_u64(&mut r)? as usize);
            }
            let n: usize = dims.iter().product();
            let mut words = Vec::with_capacity(n);
            for _ in 0..n {
                words.push(read_u64(&mut r)?);
            }
            let entry = match kind[0] {
                0 => Entry::F64(
                    Tensor::new(dims, words.into_iter().map(f64::from_bits).collect())
                        .map_err(|e| CheckpointError::Malformed(e.to_string()))?,
                ),
                1 => Entry::U64(words),
                k => return Err(CheckpointError::Malformed(format!("unknown entry kind {}", k))),
            };
            ck.insert(name, entry)?;
        }
        Ok(ck)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, CheckpointError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, CheckpointError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}
