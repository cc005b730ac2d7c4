//! `LXLT` binary tensor files.
//!
//! Layout (little-endian):
//!
//! | bytes        | content                                   |
//! |--------------|-------------------------------------------|
//! | 4            | magic `LXLT`                              |
//! | 1            | version, currently `1`                    |
//! | 1            | dtype code, `0` = IEEE-754 `f32`          |
//! | 1            | rank                                      |
//! | rank x 4     | dims as `u32`                             |
//! | numel x 4    | row-major payload                         |

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::Tensor;
use crate::error::{Error, Result};

pub const LXLT_MAGIC: &[u8; 4] = b"LXLT";
pub const LXLT_VERSION: u8 = 1;
const DTYPE_F32: u8 = 0;

pub fn write_lxlt_to<W: Write>(mut w: W, tensor: &Tensor) -> Result<()> {
    let rank = u8::try_from(tensor.rank())
        .map_err(|_| Error::invalid(format!("rank {} does not fit LXLT", tensor.rank())))?;
    w.write_all(LXLT_MAGIC)?;
    w.write_all(&[LXLT_VERSION, DTYPE_F32, rank])?;
    for &d in tensor.shape() {
        let d = u32::try_from(d)
            .map_err(|_| Error::invalid(format!("dimension {d} does not fit LXLT")))?;
        w.write_all(&d.to_le_bytes())?;
    }
    for &v in tensor.data() {
        let f = v as f32;
        if !f.is_finite() {
            return Err(Error::invalid(format!(
                "value {v} is not representable as f32"
            )));
        }
        w.write_all(&f.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_lxlt_from<R: Read>(mut r: R) -> Result<Tensor> {
    let mut header = [0u8; 7];
    r.read_exact(&mut header)
        .map_err(|_| Error::Format("LXLT header truncated".into()))?;
    if &header[..4] != LXLT_MAGIC {
        return Err(Error::Format("missing LXLT magic".into()));
    }
    if header[4] != LXLT_VERSION {
        return Err(Error::Format(format!(
            "unsupported LXLT version {}",
            header[4]
        )));
    }
    if header[5] != DTYPE_F32 {
        return Err(Error::Format(format!(
            "unsupported LXLT dtype code {}",
            header[5]
        )));
    }
    let rank = header[6] as usize;
    let mut shape = Vec::with_capacity(rank);
    let mut buf = [0u8; 4];
    for _ in 0..rank {
        r.read_exact(&mut buf)
            .map_err(|_| Error::Format("LXLT dims truncated".into()))?;
        shape.push(u32::from_le_bytes(buf) as usize);
    }
    let numel = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Format("LXLT element count overflows".into()))?;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    if payload.len() != numel * 4 {
        return Err(Error::Format(format!(
            "LXLT payload has {} bytes, shape {:?} needs {}",
            payload.len(),
            shape,
            numel * 4
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Tensor::new(shape, data)
}

pub fn write_lxlt(path: impl AsRef<Path>, tensor: &Tensor) -> Result<()> {
    let file = File::create(path)?;
    write_lxlt_to(BufWriter::new(file), tensor)
}

pub fn read_lxlt(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    read_lxlt_from(BufReader::new(file))
}
