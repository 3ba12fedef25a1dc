//! Weight file format (version 1). All integers and floats little-endian.
//!
//! ```text
//! offset  size  field
//!      0     8  magic "CIRCLSTM"
//!      8     4  format version (u32) = 1
//!     12     4  input size  (u32)
//!     16     4  hidden size (u32)
//!     20     4  output size (u32)
//!     24     4  window length l (u32)
//!     28     4  flags (u32); bit 0 = raw (unnormalised) noisy bearing input
//!     32     8  velocity_scale (f64)
//!     40     8  position_scale (f64)
//!     48     8  target_velocity_scale (f64)
//!     56     8  parameter count N (u64)
//!     64    8N  parameters (f64): W, U, b, fc_W, fc_b as laid out in `lstm`
//!  64+8N     4  CRC-32 (IEEE) of bytes [0, 64+8N)
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::lstm::LstmParams;
use super::model::{LstmModel, Normalization};

pub const MAGIC: &[u8; 8] = b"CIRCLSTM";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 64;

/// Everything in the file except the parameters themselves.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightHeader {
    pub version: u32,
    pub input_size: usize,
    pub hidden_size: usize,
    pub output_size: usize,
    pub window: usize,
    pub raw_bearing: bool,
    pub normalization: Normalization,
    pub param_count: usize,
}

pub fn to_bytes(model: &LstmModel) -> Vec<u8> {
    let p = &model.params;
    let data = p.as_slice();
    let mut buf = Vec::with_capacity(HEADER_LEN + 8 * data.len() + 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for v in [p.input_size(), p.hidden_size(), p.output_size(), model.window] {
        buf.extend_from_slice(&(v as u32).to_le_bytes());
    }
    buf.extend_from_slice(&u32::from(model.raw_bearing).to_le_bytes());
    let n = model.normalization;
    for v in [n.velocity_scale, n.position_scale, n.target_velocity_scale] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&(data.len() as u64).to_le_bytes());
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    buf
}

fn truncated(what: &str) -> Error {
    Error::io(
        "<weights>",
        std::io::Error::new(std::io::ErrorKind::UnexpectedEof, format!("weight file truncated in {what}")),
    )
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() < self.pos + n {
            return Err(truncated(what));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

fn read_header(r: &mut Reader<'_>) -> Result<WeightHeader> {
    if r.take(8, "magic")? != MAGIC {
        return Err(Error::BadMagic);
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            expected: FORMAT_VERSION,
            found: version,
        });
    }
    let input_size = r.u32("header")? as usize;
    let hidden_size = r.u32("header")? as usize;
    let output_size = r.u32("header")? as usize;
    let window = r.u32("header")? as usize;
    let flags = r.u32("header")?;
    let normalization = Normalization {
        velocity_scale: r.f64("header")?,
        position_scale: r.f64("header")?,
        target_velocity_scale: r.f64("header")?,
    };
    let param_count = r.u64("header")? as usize;
    Ok(WeightHeader {
        version,
        input_size,
        hidden_size,
        output_size,
        window,
        raw_bearing: flags & 1 == 1,
        normalization,
        param_count,
    })
}

/// Parse only the header.
pub fn read_header_bytes(buf: &[u8]) -> Result<WeightHeader> {
    read_header(&mut Reader { buf, pos: 0 })
}

pub fn from_bytes(buf: &[u8]) -> Result<LstmModel> {
    let mut r = Reader { buf, pos: 0 };
    let h = read_header(&mut r)?;
    let expected = LstmParams::param_count(h.input_size, h.hidden_size, h.output_size);
    if h.param_count != expected {
        return Err(Error::ShapeMismatch(format!(
            "header declares {} parameters but dimensions imply {expected}",
            h.param_count
        )));
    }
    let raw = r.take(8 * h.param_count, "parameters")?;
    let data: Vec<f64> = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let body_end = r.pos;
    let stored = r.u32("checksum")?;
    let computed = crc32fast::hash(&buf[..body_end]);
    if stored != computed {
        return Err(Error::ChecksumMismatch { stored, computed });
    }
    Ok(LstmModel {
        params: LstmParams::from_flat(h.input_size, h.hidden_size, h.output_size, data)?,
        window: h.window,
        normalization: h.normalization,
        raw_bearing: h.raw_bearing,
    })
}

pub fn save_weights(model: &LstmModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<LstmModel> {
    let path = path.as_ref();
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&buf).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn inspect_weights(path: impl AsRef<Path>) -> Result<WeightHeader> {
    let path = path.as_ref();
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_header_bytes(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive, Purpose};

    fn model() -> LstmModel {
        let mut rng = derive(3, Purpose::ModelInit, 0, 0);
        let mut m = LstmModel::new(
            6,
            7,
            Normalization {
                velocity_scale: 60.0,
                position_scale: 10.0,
                target_velocity_scale: 10.0,
            },
            &mut rng,
        );
        m.raw_bearing = true;
        m
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.weights");
        let m = model();
        save_weights(&m, &path).unwrap();
        let back = load_weights(&path).unwrap();
        assert_eq!(back, m);
        let a: Vec<u64> = m.params.as_slice().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u64> = back.params.as_slice().iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
        let h = inspect_weights(&path).unwrap();
        assert_eq!((h.hidden_size, h.window, h.version), (6, 7, 1));
    }

    #[test]
    fn truncated_file_is_io_error() {
        let bytes = to_bytes(&model());
        for cut in [4, 30, HEADER_LEN + 10, bytes.len() - 1] {
            assert!(matches!(from_bytes(&bytes[..cut]), Err(Error::Io { .. })), "cut {cut}");
        }
    }

    #[test]
    fn unknown_version() {
        let mut bytes = to_bytes(&model());
        bytes[8..12].copy_from_slice(&7u32.to_le_bytes());
        assert!(matches!(
            from_bytes(&bytes),
            Err(Error::VersionMismatch { expected: 1, found: 7 })
        ));
    }

    #[test]
    fn corrupted_parameter_fails_checksum() {
        let mut bytes = to_bytes(&model());
        bytes[HEADER_LEN + 3] ^= 0x10;
        assert!(matches!(from_bytes(&bytes), Err(Error::ChecksumMismatch { .. })));
    }

    #[test]
    fn bad_magic() {
        let mut bytes = to_bytes(&model());
        bytes[0] = b'X';
        assert!(matches!(from_bytes(&bytes), Err(Error::BadMagic)));
    }
}
