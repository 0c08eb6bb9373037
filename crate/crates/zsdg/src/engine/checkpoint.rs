//! Binary tensor container for checkpoints and prepared datasets.
//!
//! Layout: magic `ZSDG1` (5 bytes), u32-LE tensor count, then per tensor:
//! u16-LE name length, UTF-8 name, u8 rank, rank x u32-LE dims,
//! dims-product x f64-LE values. Round-trips are byte-exact.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

const MAGIC: &[u8; 5] = b"ZSDG1";

/// Serialize named tensors in the order given.
pub fn encode_tensors(tensors: &[(String, &Tensor)]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    let count = u32::try_from(tensors.len())
        .map_err(|_| Error::usage("too many tensors for container"))?;
    out.extend_from_slice(&count.to_le_bytes());
    for (name, tensor) in tensors {
        let name_bytes = name.as_bytes();
        let name_len = u16::try_from(name_bytes.len())
            .map_err(|_| Error::usage(format!("tensor name '{name}' too long")))?;
        out.extend_from_slice(&name_len.to_le_bytes());
        out.extend_from_slice(name_bytes);
        let rank = u8::try_from(tensor.shape().len())
            .map_err(|_| Error::usage("tensor rank exceeds container limit"))?;
        out.push(rank);
        for &dim in tensor.shape() {
            let dim = u32::try_from(dim)
                .map_err(|_| Error::usage("tensor dimension exceeds u32"))?;
            out.extend_from_slice(&dim.to_le_bytes());
        }
        for v in tensor.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::format(self.path, "truncated payload".to_string())),
        }
    }
}

/// Parse a tensor container, preserving entry order.
pub fn decode_tensors(bytes: &[u8], path: &Path) -> Result<Vec<(String, Tensor)>> {
    let mut r = Reader { bytes, pos: 0, path };
    let magic = r.take(5)?;
    if magic != MAGIC {
        return Err(Error::format(
            path,
            format!(
                "bad magic {:?}, want {:?}",
                String::from_utf8_lossy(magic),
                String::from_utf8_lossy(MAGIC)
            ),
        ));
    }
    let count = u32::from_le_bytes(r.take(4)?.try_into().unwrap()) as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = u16::from_le_bytes(r.take(2)?.try_into().unwrap()) as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| Error::format(path, "tensor name is not UTF-8".to_string()))?;
        let rank = r.take(1)?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        let mut numel: usize = 1;
        for _ in 0..rank {
            let dim = u32::from_le_bytes(r.take(4)?.try_into().unwrap()) as usize;
            numel = numel
                .checked_mul(dim)
                .ok_or_else(|| Error::format(path, "tensor dimensions overflow".to_string()))?;
            shape.push(dim);
        }
        let raw = r.take(numel * 8)?;
        let values: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let tensor = Tensor::new(shape, values)
            .map_err(|e| Error::format(path, e.to_string()))?;
        out.push((name, tensor));
    }
    if r.pos != bytes.len() {
        return Err(Error::format(
            path,
            format!("{} trailing bytes after payload", bytes.len() - r.pos),
        ));
    }
    Ok(out)
}

/// Write a whole file via a temp sibling and an atomic rename, so readers
/// never observe a partial file.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Write named tensors to `path` (write-to-temp, atomic rename).
pub fn save_tensors(tensors: &[(String, &Tensor)], path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_tensors(tensors)?;
    write_atomic(path, &bytes)
}

/// Read a tensor container from disk.
pub fn load_tensors(path: impl AsRef<Path>) -> Result<Vec<(String, Tensor)>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tensors(&bytes, path)
}

/// Read a tensor container into a name-keyed map.
pub fn load_tensor_map(path: impl AsRef<Path>) -> Result<BTreeMap<String, Tensor>> {
    Ok(load_tensors(path)?.into_iter().collect())
}
