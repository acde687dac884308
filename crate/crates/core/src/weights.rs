//! Versioned binary container for model weights.
//!
//! Layout (all integers little endian):
//!
//! ```text
//! magic      4 bytes  "HQNW"
//! version    u32
//! header     u32 length + UTF-8 JSON (kind, config, topology, ...)
//! count      u32
//! tensor*    u16 name length + name, u32 rows, u32 cols, rows*cols f64 row-major
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde_json::Value;

use crate::autodiff::Mat;
use crate::error::{Error, Result};
use crate::nn::ParamSet;
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"HQNW";
pub const VERSION: u32 = 1;

/// Decoded container: JSON header plus named `f64` tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightFile {
    pub header: Value,
    pub tensors: Vec<(String, Mat<f64>)>,
}

impl WeightFile {
    pub fn new(header: Value) -> Self {
        Self { header, tensors: Vec::new() }
    }

    /// Appends every parameter of `ps`, prefixing names with `prefix.`.
    pub fn push_set<T: Scalar>(&mut self, prefix: &str, ps: &ParamSet<T>) {
        for p in ps.iter() {
            self.tensors.push((format!("{prefix}.{}", p.name), p.value.mapv(|v| v.to_f64_lossy())));
        }
    }

    pub fn tensor(&self, name: &str) -> Option<&Mat<f64>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    /// Overwrites every parameter of `ps` from the tensors stored under `prefix.`.
    pub fn load_set<T: Scalar>(&self, prefix: &str, ps: &mut ParamSet<T>) -> Result<()> {
        let names: Vec<String> = ps.iter().map(|p| p.name.clone()).collect();
        for name in names {
            let full = format!("{prefix}.{name}");
            let src = self.tensor(&full).ok_or_else(|| Error::Format(format!("missing tensor {full}")))?;
            let id = ps.by_name(&name).expect("name taken from the set");
            let dst = ps.get_mut(id);
            if dst.dim() != src.dim() {
                return Err(Error::Shape(format!("{full}: file {:?}, model {:?}", src.dim(), dst.dim())));
            }
            dst.zip_mut_with(src, |d, &s| *d = T::of(s));
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(VERSION)?;
        let header = serde_json::to_vec(&self.header)?;
        w.write_u32::<LittleEndian>(header.len() as u32)?;
        w.write_all(&header)?;
        w.write_u32::<LittleEndian>(self.tensors.len() as u32)?;
        for (name, m) in &self.tensors {
            let bytes = name.as_bytes();
            let len = u16::try_from(bytes.len()).map_err(|_| Error::Format(format!("tensor name too long: {name}")))?;
            w.write_u16::<LittleEndian>(len)?;
            w.write_all(bytes)?;
            w.write_u32::<LittleEndian>(m.nrows() as u32)?;
            w.write_u32::<LittleEndian>(m.ncols() as u32)?;
            for row in m.rows() {
                for &v in row {
                    w.write_f64::<LittleEndian>(v)?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a weight file (bad magic)".into()));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported weight file version {version}")));
        }
        let len = r.read_u32::<LittleEndian>()? as usize;
        let mut header = vec![0u8; len];
        r.read_exact(&mut header)?;
        let header: Value = serde_json::from_slice(&header)?;
        let count = r.read_u32::<LittleEndian>()? as usize;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let n = r.read_u16::<LittleEndian>()? as usize;
            let mut name = vec![0u8; n];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name).map_err(|e| Error::Format(e.to_string()))?;
            let rows = r.read_u32::<LittleEndian>()? as usize;
            let cols = r.read_u32::<LittleEndian>()? as usize;
            let mut data = vec![0.0; rows * cols];
            r.read_f64_into::<LittleEndian>(&mut data)?;
            let m = Mat::from_shape_vec((rows, cols), data).map_err(|e| Error::Format(e.to_string()))?;
            tensors.push((name, m));
        }
        Ok(Self { header, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}
