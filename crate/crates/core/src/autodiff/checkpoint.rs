//! Parameter checkpoint files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic "MTG1" | version u32 | meta count u32 | (key, value) string pairs
//! | tensor count u32 | per tensor: name, dtype u8 (1=f32, 2=f64),
//!   ndim u32, extents u32..., raw values
//! ```
//!
//! Strings are u32-length-prefixed UTF-8. Loading validates the magic and
//! version, accepts either dtype, and converts values to the build float.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"MTG1";
const VERSION: u32 = 1;

const DTYPE_F32: u8 = 1;
const DTYPE_F64: u8 = 2;

#[cfg(not(feature = "f32"))]
const BUILD_DTYPE: u8 = DTYPE_F64;
#[cfg(feature = "f32")]
const BUILD_DTYPE: u8 = DTYPE_F32;

/// Named tensors plus string metadata, in insertion order.
#[derive(Debug, Clone, Default)]
pub struct Checkpoint {
    pub meta: Vec<(String, String)>,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_meta(&mut self, key: &str, value: impl ToString) {
        self.meta.push((key.to_string(), value.to_string()));
    }

    pub fn push_tensor(&mut self, name: &str, tensor: Tensor) {
        self.tensors.push((name.to_string(), tensor));
    }

    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    /// Parse a metadata value, erroring on absence or bad syntax.
    pub fn meta_parsed<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self
            .meta_value(key)
            .ok_or_else(|| Error::Parse(format!("checkpoint missing metadata key {key:?}")))?;
        raw.parse()
            .map_err(|_| Error::Parse(format!("checkpoint metadata {key:?} has bad value {raw:?}")))
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::Parse(format!("checkpoint missing tensor {name:?}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.meta.len() as u32).to_le_bytes());
        for (key, value) in &self.meta {
            write_string(&mut buf, key);
            write_string(&mut buf, value);
        }
        buf.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, tensor) in &self.tensors {
            write_string(&mut buf, name);
            buf.push(BUILD_DTYPE);
            buf.extend_from_slice(&(tensor.shape().len() as u32).to_le_bytes());
            for &dim in tensor.shape() {
                buf.extend_from_slice(&(dim as u32).to_le_bytes());
            }
            for &v in tensor.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir)?;
            }
        }
        let mut file = fs::File::create(path)?;
        file.write_all(&buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        let mut r = Reader {
            bytes: &bytes,
            pos: 0,
            path,
        };
        let magic = r.take(4)?;
        if magic != MAGIC {
            return Err(Error::Parse(format!(
                "{}: bad checkpoint magic {magic:?}, expected {MAGIC:?}",
                path.display()
            )));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Parse(format!(
                "{}: unsupported checkpoint version {version}",
                path.display()
            )));
        }
        let mut checkpoint = Checkpoint::new();
        let meta_count = r.u32()?;
        for _ in 0..meta_count {
            let key = r.string()?;
            let value = r.string()?;
            checkpoint.meta.push((key, value));
        }
        let tensor_count = r.u32()?;
        for _ in 0..tensor_count {
            let name = r.string()?;
            let dtype = r.take(1)?[0];
            let ndim = r.u32()? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(r.u32()? as usize);
            }
            let numel: usize = shape.iter().product();
            let data: Vec<Real> = match dtype {
                DTYPE_F32 => {
                    let raw = r.take(numel * 4)?;
                    raw.chunks_exact(4)
                        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as Real)
                        .collect()
                }
                DTYPE_F64 => {
                    let raw = r.take(numel * 8)?;
                    raw.chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().unwrap()) as Real)
                        .collect()
                }
                other => {
                    return Err(Error::Parse(format!(
                        "{}: unknown dtype tag {other} for tensor {name:?}",
                        path.display()
                    )))
                }
            };
            checkpoint.tensors.push((name, Tensor::new(shape, data)?));
        }
        if r.pos != bytes.len() {
            return Err(Error::Parse(format!(
                "{}: {} trailing bytes after checkpoint payload",
                path.display(),
                bytes.len() - r.pos
            )));
        }
        Ok(checkpoint)
    }
}

fn write_string(buf: &mut Vec<u8>, s: &str) {
    buf.extend_from_slice(&(s.len() as u32).to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Parse(format!(
                "{}: truncated checkpoint (needed {n} bytes at offset {})",
                self.path.display(),
                self.pos
            )));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        let raw = self.take(len)?;
        String::from_utf8(raw.to_vec()).map_err(|_| {
            Error::Parse(format!(
                "{}: non-UTF-8 string in checkpoint",
                self.path.display()
            ))
        })
    }
}
