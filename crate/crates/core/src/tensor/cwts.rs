//! CWTS: flat binary serialization of named f64 arrays.
//!
//! Layout: magic "CWTS", u8 version, u32 metadata length + metadata bytes
//! (opaque to this module; model checkpoints store a JSON header here),
//! u32 array count, then per array: u32 name length, name bytes, u32 rank,
//! u32 extents, little-endian f64 payload. Array order is preserved, so a
//! write/read cycle is byte-stable.

use std::io::{Read, Write};

use thiserror::Error;

use super::Tensor;

const MAGIC: &[u8; 4] = b"CWTS";
const VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum CwtsError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("invalid CWTS data: {0}")]
    Format(String),
}

pub fn write_cwts<W: Write>(
    writer: &mut W,
    metadata: &[u8],
    arrays: &[(&str, &Tensor)],
) -> Result<(), CwtsError> {
    writer.write_all(MAGIC)?;
    writer.write_all(&[VERSION])?;
    writer.write_all(&(metadata.len() as u32).to_le_bytes())?;
    writer.write_all(metadata)?;
    writer.write_all(&(arrays.len() as u32).to_le_bytes())?;
    for (name, tensor) in arrays {
        writer.write_all(&(name.len() as u32).to_le_bytes())?;
        writer.write_all(name.as_bytes())?;
        writer.write_all(&(tensor.rank() as u32).to_le_bytes())?;
        for &e in tensor.shape() {
            writer.write_all(&(e as u32).to_le_bytes())?;
        }
        for v in tensor.data() {
            writer.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_cwts<R: Read>(reader: &mut R) -> Result<(Vec<u8>, Vec<(String, Tensor)>), CwtsError> {
    let mut magic = [0u8; 4];
    reader.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CwtsError::Format("bad magic".into()));
    }
    let mut version = [0u8; 1];
    reader.read_exact(&mut version)?;
    if version[0] != VERSION {
        return Err(CwtsError::Format(format!("unsupported version {}", version[0])));
    }
    let meta_len = read_u32(reader)? as usize;
    let mut metadata = vec![0u8; meta_len];
    reader.read_exact(&mut metadata)?;

    let count = read_u32(reader)? as usize;
    let mut arrays = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = read_u32(reader)? as usize;
        let mut name = vec![0u8; name_len];
        reader.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| CwtsError::Format("array name is not UTF-8".into()))?;
        let rank = read_u32(reader)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u32(reader)? as usize);
        }
        let len: usize = shape.iter().product();
        let mut data = Vec::with_capacity(len);
        let mut buf = [0u8; 8];
        for _ in 0..len {
            reader.read_exact(&mut buf)?;
            data.push(f64::from_le_bytes(buf));
        }
        let tensor = Tensor::from_vec(&shape, data)
            .map_err(|e| CwtsError::Format(e.to_string()))?;
        arrays.push((name, tensor));
    }
    Ok((metadata, arrays))
}

fn read_u32<R: Read>(reader: &mut R) -> Result<u32, CwtsError> {
    let mut buf = [0u8; 4];
    reader.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_order_and_bytes() {
        let a = Tensor::from_vec(&[2, 2], vec![1.0, -2.5, 3.25, 0.0]).unwrap();
        let b = Tensor::scalar(7.5);
        let mut buf = Vec::new();
        write_cwts(&mut buf, b"{\"k\":1}", &[("conv.weight", &a), ("bias", &b)]).unwrap();

        let (meta, arrays) = read_cwts(&mut buf.as_slice()).unwrap();
        assert_eq!(meta, b"{\"k\":1}");
        assert_eq!(arrays.len(), 2);
        assert_eq!(arrays[0].0, "conv.weight");
        assert_eq!(arrays[0].1, a);
        assert_eq!(arrays[1].0, "bias");
        assert_eq!(arrays[1].1, b);

        // Writing the parsed arrays again reproduces the bytes.
        let mut buf2 = Vec::new();
        let refs: Vec<(&str, &Tensor)> =
            arrays.iter().map(|(n, t)| (n.as_str(), t)).collect();
        write_cwts(&mut buf2, &meta, &refs).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn rejects_truncated_and_foreign_data() {
        assert!(matches!(
            read_cwts(&mut &b"CWTX\x01"[..]),
            Err(CwtsError::Format(_))
        ));
        let mut buf = Vec::new();
        write_cwts(&mut buf, b"", &[("w", &Tensor::zeros(&[4]))]).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(matches!(read_cwts(&mut buf.as_slice()), Err(CwtsError::Io(_))));
    }
}
