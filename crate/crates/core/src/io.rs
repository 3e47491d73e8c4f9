//! File formats: the `JMT1` binary tensor container and small text helpers.
//!
//! `JMT1` layout (all little-endian):
//!
//! ```text
//! b"JMT1" | ndim: u32 | dims: ndim x u32 | (re: f64, im: f64) per element, row-major
//! ```
//!
//! Writes go to a temporary file in the destination directory which is then
//! renamed over the target, so a failed write never leaves a partial file.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::scalar::{Real, C};
use crate::tensor::CTensor;

pub const MAGIC: &[u8; 4] = b"JMT1";

pub fn encode_tensor<T: Real>(t: &CTensor<T>) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(8 + 4 * t.dims().len() + 16 * t.len());
    out.extend_from_slice(MAGIC);
    let ndim = u32::try_from(t.dims().len())
        .map_err(|_| Error::Shape("too many axes for JMT1".into()))?;
    out.extend_from_slice(&ndim.to_le_bytes());
    for &d in t.dims() {
        let d = u32::try_from(d).map_err(|_| Error::Shape(format!("axis {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for z in t.data() {
        out.extend_from_slice(&z.re.as_f64().to_le_bytes());
        out.extend_from_slice(&z.im.as_f64().to_le_bytes());
    }
    Ok(out)
}

pub fn decode_tensor<T: Real>(bytes: &[u8], path: &Path) -> Result<CTensor<T>> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::BadMagic(path.to_path_buf()));
    }
    let truncated = |expected: usize| Error::Truncated {
        path: path.to_path_buf(),
        expected,
        found: bytes.len(),
    };
    let read_u32 = |at: usize| -> Option<u32> {
        bytes
            .get(at..at + 4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    };
    let ndim = read_u32(4).ok_or_else(|| truncated(8))? as usize;
    let header = ndim
        .checked_mul(4)
        .and_then(|n| n.checked_add(8))
        .ok_or_else(|| Error::DimOverflow(path.to_path_buf()))?;
    if bytes.len() < header {
        return Err(truncated(header));
    }
    let dims: Vec<usize> = (0..ndim)
        .map(|i| read_u32(8 + 4 * i).unwrap() as usize)
        .collect();
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::DimOverflow(path.to_path_buf()))?;
    let expected = count
        .checked_mul(16)
        .and_then(|n| n.checked_add(header))
        .ok_or_else(|| Error::DimOverflow(path.to_path_buf()))?;
    if bytes.len() < expected {
        return Err(truncated(expected));
    }
    if bytes.len() > expected {
        return Err(Error::format(path, "trailing bytes after payload"));
    }
    let payload = &bytes[header..];
    let data = payload
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            C::new(T::of(re), T::of(im))
        })
        .collect();
    CTensor::new(dims, data).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_tensor<T: Real>(t: &CTensor<T>, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_tensor(t)?)
}

pub fn read_tensor<T: Real>(path: impl AsRef<Path>) -> Result<CTensor<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tensor(&bytes, path)
}

/// Writes `bytes` to `path` through a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| Error::io(&dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_key_values(text: &str, path: &Path) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::format(path, format!("line {}: expected `key = value`", lineno + 1))
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn render_key_values(pairs: &[(&str, String)]) -> String {
    pairs.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

/// 8-bit binary portable graymap (`P5`) of a row-major image.
pub fn encode_pgm(width: usize, height: usize, pixels: &[u8]) -> Result<Vec<u8>> {
    if pixels.len() != width * height {
        return Err(Error::Shape(format!(
            "{} pixels for a {width}x{height} image",
            pixels.len()
        )));
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    Ok(out)
}

/// Formats a real with 17 significant digits in positional notation.
pub fn fmt_sig17(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x:.16}");
    }
    let sci = format!("{x:.16e}");
    let exp: i32 = sci.rsplit('e').next().unwrap().parse().unwrap();
    let decimals = (16 - exp).max(0) as usize;
    format!("{x:.decimals$}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn scalar_file_is_28_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.jmt");
        let t = CTensor::<f64>::zeros(&[1]).unwrap();
        write_tensor(&t, &p).unwrap();
        assert_eq!(fs::metadata(&p).unwrap().len(), 28);
    }

    #[test]
    fn header_dims_echo() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.jmt");
        let t: CTensor<f64> = Rng::new(3).randn_complex(&[2, 3]).unwrap();
        write_tensor(&t, &p).unwrap();
        let back: CTensor<f64> = read_tensor(&p).unwrap();
        assert_eq!(back.dims(), &[2, 3]);
    }

    #[test]
    fn bad_magic_detected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.jmt");
        let mut bytes = encode_tensor(&CTensor::<f64>::zeros(&[2]).unwrap()).unwrap();
        bytes[..4].copy_from_slice(b"XXXX");
        fs::write(&p, bytes).unwrap();
        assert!(matches!(read_tensor::<f64>(&p), Err(Error::BadMagic(_))));
    }

    #[test]
    fn truncation_detected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("trunc.jmt");
        let bytes = encode_tensor(&CTensor::<f64>::zeros(&[4, 4]).unwrap()).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 5]).unwrap();
        assert!(matches!(read_tensor::<f64>(&p), Err(Error::Truncated { .. })));
    }

    #[test]
    fn dim_overflow_detected() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&3u32.to_le_bytes());
        for _ in 0..3 {
            bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        }
        let r = decode_tensor::<f64>(&bytes, Path::new("mem"));
        assert!(matches!(r, Err(Error::DimOverflow(_))));
    }

    #[test]
    fn sig17_round_trips() {
        for &x in &[0.1, 0.999_999_999_999_999_9, 1e-7, 0.5, 0.123_456_789_012_345_68] {
            let s = fmt_sig17(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
            assert!(!s.contains('e'));
        }
    }
}
