use std::io::{Read, Write};

use super::{Mat, ParamStore};
use crate::{Error, Result};

pub const PARAM_MAGIC: &[u8; 8] = b"GSPARAM1";

/// Writes a store as little-endian named matrices:
/// magic, u32 count, then per matrix (u32 name length, name bytes, u64 rows,
/// u64 cols, rows*cols f64).
pub fn write_params<W: Write>(store: &ParamStore, mut w: W) -> std::io::Result<()> {
    w.write_all(PARAM_MAGIC)?;
    w.write_all(&(store.len() as u32).to_le_bytes())?;
    for id in store.ids() {
        let name = store.name(id).as_bytes();
        let value = store.value(id);
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&(value.rows() as u64).to_le_bytes())?;
        w.write_all(&(value.cols() as u64).to_le_bytes())?;
        for v in value.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_params<R: Read>(mut r: R) -> Result<ParamStore> {
    let mut magic = [0u8; 8];
    read_exact(&mut r, &mut magic)?;
    if &magic != PARAM_MAGIC {
        return Err(Error::Format("bad parameter container magic".into()));
    }
    let count = read_u32(&mut r)? as usize;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; len];
        read_exact(&mut r, &mut name)?;
        let name = String::from_utf8(name).map_err(|_| Error::Format("parameter name is not utf-8".into()))?;
        let rows = read_u64(&mut r)? as usize;
        let cols = read_u64(&mut r)? as usize;
        let n = rows
            .checked_mul(cols)
            .filter(|&n| n <= 1 << 32)
            .ok_or_else(|| Error::Format(format!("implausible shape for {name}")))?;
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(read_f64(&mut r)?);
        }
        store.add(name, Mat::from_vec(rows, cols, data)?)?;
    }
    Ok(store)
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|e| Error::Format(format!("truncated binary container: {e}")))
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub(crate) fn read_u8<R: Read>(r: &mut R) -> Result<u8> {
    let mut b = [0u8; 1];
    read_exact(r, &mut b)?;
    Ok(b[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_names_shapes_and_bits() {
        let mut s = ParamStore::new();
        s.add("fc0.w", Mat::from_rows(&[[1.5, -0.0], [f64::MIN_POSITIVE, 3.25]]))
            .unwrap();
        s.add("fc0.b", Mat::zeros(1, 3)).unwrap();
        let mut buf = Vec::new();
        write_params(&s, &mut buf).unwrap();
        let back = read_params(buf.as_slice()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn truncated_input_is_a_format_error() {
        let mut s = ParamStore::new();
        s.add("w", Mat::zeros(2, 2)).unwrap();
        let mut buf = Vec::new();
        write_params(&s, &mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(matches!(read_params(buf.as_slice()), Err(Error::Format(_))));
    }
}
