//! Self-describing binary model container.
//!
//! Layout: magic `SKWN`, format version, a key-value header describing the
//! architecture, then each parameter tensor as (name, shape, row-major
//! little-endian f64). Round trips are bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: [u8; 4] = *b"SKWN";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub header: Vec<(String, String)>,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn header_value(&self, key: &str) -> Result<&str> {
        self.header
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::Data(format!("checkpoint header missing '{key}'")))
    }

    pub fn take_tensor(&mut self, name: &str) -> Result<Tensor> {
        let pos = self
            .tensors
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| Error::Data(format!("checkpoint missing tensor '{name}'")))?;
        Ok(self.tensors.remove(pos).1)
    }
}

fn write_str(w: &mut impl Write, s: &str) -> Result<()> {
    let bytes = s.as_bytes();
    w.write_all(&(bytes.len() as u32).to_le_bytes())?;
    w.write_all(bytes)?;
    Ok(())
}

fn read_str(r: &mut impl Read) -> Result<String> {
    let mut len_bytes = [0u8; 4];
    r.read_exact(&mut len_bytes)?;
    let len = u32::from_le_bytes(len_bytes) as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Data(format!("checkpoint: bad utf-8: {e}")))
}

pub fn write_checkpoint(
    path: &Path,
    header: &[(String, String)],
    tensors: &[(String, &Tensor)],
) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(header.len() as u32).to_le_bytes())?;
    for (k, v) in header {
        write_str(&mut w, k)?;
        write_str(&mut w, v)?;
    }
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for (name, tensor) in tensors {
        write_str(&mut w, name)?;
        w.write_all(&(tensor.shape.len() as u32).to_le_bytes())?;
        for &extent in &tensor.shape {
            w.write_all(&(extent as u64).to_le_bytes())?;
        }
        for &value in &tensor.data {
            w.write_all(&value.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let file = File::open(path)?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(Error::Data(format!(
            "not a model checkpoint: bad magic {magic:?}"
        )));
    }
    let mut version_bytes = [0u8; 4];
    r.read_exact(&mut version_bytes)?;
    let version = u32::from_le_bytes(version_bytes);
    if version != VERSION {
        return Err(Error::Data(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let mut count_bytes = [0u8; 4];
    r.read_exact(&mut count_bytes)?;
    let header_count = u32::from_le_bytes(count_bytes) as usize;
    let mut header = Vec::with_capacity(header_count);
    for _ in 0..header_count {
        let k = read_str(&mut r)?;
        let v = read_str(&mut r)?;
        header.push((k, v));
    }
    r.read_exact(&mut count_bytes)?;
    let tensor_count = u32::from_le_bytes(count_bytes) as usize;
    let mut tensors = Vec::with_capacity(tensor_count);
    for _ in 0..tensor_count {
        let name = read_str(&mut r)?;
        let mut ndim_bytes = [0u8; 4];
        r.read_exact(&mut ndim_bytes)?;
        let ndim = u32::from_le_bytes(ndim_bytes) as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            let mut extent_bytes = [0u8; 8];
            r.read_exact(&mut extent_bytes)?;
            shape.push(u64::from_le_bytes(extent_bytes) as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        let mut value_bytes = [0u8; 8];
        for _ in 0..numel {
            r.read_exact(&mut value_bytes)?;
            data.push(f64::from_le_bytes(value_bytes));
        }
        tensors.push((name, Tensor::new(shape, data)?));
    }
    Ok(Checkpoint { header, tensors })
}

/// Copies checkpoint tensors into a model's parameters by name, erroring on
/// any missing, extra, or shape-mismatched tensor.
pub fn fill_params(
    checkpoint: &mut Checkpoint,
    visit: impl FnOnce(&mut dyn FnMut(String, &mut Tensor) -> Result<()>) -> Result<()>,
) -> Result<()> {
    visit(&mut |name, param| {
        let loaded = checkpoint.take_tensor(&name)?;
        if loaded.shape != param.shape {
            return Err(Error::Data(format!(
                "checkpoint tensor '{name}': shape {:?} vs expected {:?}",
                loaded.shape, param.shape
            )));
        }
        *param = loaded;
        Ok(())
    })?;
    if !checkpoint.tensors.is_empty() {
        return Err(Error::Data(format!(
            "checkpoint holds {} unexpected tensors (first: '{}')",
            checkpoint.tensors.len(),
            checkpoint.tensors[0].0
        )));
    }
    Ok(())
}
