//! Flat binary tensor file:
//!
//! ```text
//! magic  b"SOPT"
//! u32 LE version        (currently 1)
//! u32 LE ndim
//! u32 LE dims[ndim]
//! f32 LE payload, row-major, prod(dims) elements, nothing after it
//! ```
//!
//! Everything is little-endian and f32; this is the interchange format for
//! prediction caches and plug snapshots, so reads are strict: wrong magic,
//! wrong version, short payload or trailing bytes are all format errors.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::Tensor32;

const MAGIC: &[u8; 4] = b"SOPT";
const VERSION: u32 = 1;

/// The exact bytes `write_tensor` would produce. Digests hash these, so a
/// digest match means the file on disk is byte-identical too.
pub fn tensor_bytes(t: &Tensor32) -> Vec<u8> {
    let mut buf = Vec::with_capacity(12 + t.shape().len() * 4 + t.numel() * 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
    for &d in t.shape() {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in t.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

pub fn write_tensor(path: &Path, t: &Tensor32) -> Result<()> {
    fs::write(path, tensor_bytes(t)).map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: &Path) -> Result<Tensor32> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tensor(&bytes).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn decode_tensor(bytes: &[u8]) -> Result<Tensor32> {
    let mut off = 0usize;
    let take = |off: &mut usize, n: usize| -> Result<&[u8]> {
        if *off + n > bytes.len() {
            return Err(Error::Format(format!(
                "truncated: wanted {} bytes at offset {}, file has {}",
                n,
                *off,
                bytes.len()
            )));
        }
        let s = &bytes[*off..*off + n];
        *off += n;
        Ok(s)
    };
    let magic = take(&mut off, 4)?;
    if magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:02x?}")));
    }
    let version = u32::from_le_bytes(take(&mut off, 4)?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported version {version}, expected {VERSION}"
        )));
    }
    let ndim = u32::from_le_bytes(take(&mut off, 4)?.try_into().unwrap()) as usize;
    if ndim > 8 {
        return Err(Error::Format(format!("implausible rank {ndim}")));
    }
    let mut shape = Vec::with_capacity(ndim);
    let mut numel: usize = 1;
    for _ in 0..ndim {
        let d = u32::from_le_bytes(take(&mut off, 4)?.try_into().unwrap()) as usize;
        numel = numel
            .checked_mul(d)
            .ok_or_else(|| Error::Format("dimension product overflows".into()))?;
        shape.push(d);
    }
    let payload = take(&mut off, numel * 4)?;
    if off != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after payload",
            bytes.len() - off
        )));
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Tensor32::new(shape, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout_is_exact() {
        // 2×3 tensor: 4 magic + 4 version + 4 ndim + 8 dims + 24 payload = 44
        let t = Tensor32::new(vec![2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let b = tensor_bytes(&t);
        assert_eq!(b.len(), 44);
        assert_eq!(&b[0..4], b"SOPT");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(b[12..16].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(b[16..20].try_into().unwrap()), 3);
        assert_eq!(f32::from_le_bytes(b[20..24].try_into().unwrap()), 1.0);
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.sopt");
        let mut rng = crate::numerics::Rng::new(4);
        let data: Vec<f32> = (0..3 * 4 * 5).map(|_| rng.next_normal() as f32).collect();
        let t = Tensor32::new(vec![3, 4, 5], data).unwrap();
        write_tensor(&path, &t).unwrap();
        let back = read_tensor(&path).unwrap();
        assert_eq!(t, back);
    }

    #[test]
    fn bad_magic_version_truncation_and_trailing_bytes() {
        let t = Tensor32::new(vec![2], vec![1.0, 2.0]).unwrap();
        let good = tensor_bytes(&t);

        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(decode_tensor(&bad), Err(Error::Format(_))));

        let mut bad = good.clone();
        bad[4] = 9;
        assert!(matches!(decode_tensor(&bad), Err(Error::Format(_))));

        let truncated = &good[..good.len() - 3];
        assert!(matches!(decode_tensor(truncated), Err(Error::Format(_))));

        let mut padded = good.clone();
        padded.push(0);
        assert!(matches!(decode_tensor(&padded), Err(Error::Format(_))));
    }

    #[test]
    fn non_finite_payload_is_rejected() {
        let t = Tensor32::new(vec![1], vec![0.0]).unwrap();
        let mut bytes = tensor_bytes(&t);
        let nan = f32::NAN.to_le_bytes();
        let n = bytes.len();
        bytes[n - 4..].copy_from_slice(&nan);
        assert!(decode_tensor(&bytes).is_err());
    }

    #[test]
    fn missing_file_reports_path() {
        let err = read_tensor(Path::new("/nonexistent/x.sopt")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
