//! `T3R1` binary tensor format.
//!
//! Little-endian: the 4-byte magic `T3R1`, three `u32` dims `(n1, n2, n3)`,
//! then `n1·n2·n3` `f64` values in slice-major, row-major order. Several
//! records may be concatenated in one file.

use std::io::{ErrorKind, Read, Write};

use super::{Result, Tensor3, TensorError};

pub const T3R_MAGIC: &[u8; 4] = b"T3R1";

fn io_err(e: std::io::Error) -> TensorError {
    TensorError::Io(e.to_string())
}

pub fn write_t3r<W: Write>(w: &mut W, t: &Tensor3) -> Result<()> {
    let (n1, n2, n3) = t.dims();
    w.write_all(T3R_MAGIC).map_err(io_err)?;
    for d in [n1, n2, n3] {
        let d = u32::try_from(d).map_err(|_| TensorError::Format(format!("dim {d} exceeds u32")))?;
        w.write_all(&d.to_le_bytes()).map_err(io_err)?;
    }
    for v in t.data() {
        w.write_all(&v.to_le_bytes()).map_err(io_err)?;
    }
    Ok(())
}

pub fn write_t3r_all<W: Write>(w: &mut W, ts: &[Tensor3]) -> Result<()> {
    ts.iter().try_for_each(|t| write_t3r(w, t))
}

/// Reads one record. Returns `Ok(None)` on a clean end of stream.
fn read_one<R: Read>(r: &mut R) -> Result<Option<Tensor3>> {
    let mut magic = [0u8; 4];
    match r.read_exact(&mut magic) {
        Ok(()) => {}
        Err(e) if e.kind() == ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(io_err(e)),
    }
    if &magic != T3R_MAGIC {
        return Err(TensorError::Format(format!("bad magic {magic:?}")));
    }
    let mut dims = [0usize; 3];
    for d in dims.iter_mut() {
        let mut b = [0u8; 4];
        r.read_exact(&mut b)
            .map_err(|e| TensorError::Format(format!("truncated header: {e}")))?;
        *d = u32::from_le_bytes(b) as usize;
    }
    let len = dims[0]
        .checked_mul(dims[1])
        .and_then(|x| x.checked_mul(dims[2]))
        .ok_or_else(|| TensorError::Format("dims overflow".into()))?;
    let mut data = Vec::with_capacity(len.min(1 << 24));
    let mut b = [0u8; 8];
    for _ in 0..len {
        r.read_exact(&mut b)
            .map_err(|e| TensorError::Format(format!("truncated payload: {e}")))?;
        data.push(f64::from_le_bytes(b));
    }
    Tensor3::new(data, dims[0], dims[1], dims[2]).map(Some)
}

pub fn read_t3r<R: Read>(r: &mut R) -> Result<Tensor3> {
    read_one(r)?.ok_or_else(|| TensorError::Format("empty stream".into()))
}

pub fn read_t3r_all<R: Read>(r: &mut R) -> Result<Vec<Tensor3>> {
    let mut out = Vec::new();
    while let Some(t) = read_one(r)? {
        out.push(t);
    }
    Ok(out)
}
