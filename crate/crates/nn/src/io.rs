//! Binary parameter files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   b"HTNN"
//! version u32            (currently 1)
//! kind    u32 len + UTF-8 bytes   model kind tag, e.g. "lowlevel"
//! tag     u64            free-form numeric tag (policy files store the hub id)
//! count   u32            number of tensors
//! count × { name: u32 len + UTF-8, rank: u32, dims: rank × u64, data: f64 × Π dims }
//! crc32   u32            CRC-32 of every preceding byte
//! ```

use std::io::{Read, Write};
use std::path::Path;

use crate::{NnError, ParamSet, Tensor};

pub const MAGIC: &[u8; 4] = b"HTNN";
pub const FORMAT_VERSION: u32 = 1;

/// Header fields stored alongside a parameter set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamHeader {
    pub kind: String,
    pub tag: u64,
}

pub fn encode_params(header: &ParamHeader, params: &ParamSet) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    put_str(&mut buf, &header.kind);
    buf.extend_from_slice(&header.tag.to_le_bytes());
    buf.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, t) in params.iter() {
        put_str(&mut buf, name);
        buf.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    buf
}

pub fn decode_params(bytes: &[u8]) -> Result<(ParamHeader, ParamSet), NnError> {
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(NnError::Format("bad magic bytes".into()));
    }
    let (body, crc) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(crc.try_into().expect("4 bytes"));
    if crc32fast::hash(body) != stored {
        return Err(NnError::Checksum);
    }
    let mut cur = Cursor { buf: body, pos: 4 };
    let version = cur.u32()?;
    if version != FORMAT_VERSION {
        return Err(NnError::Version { found: version, expected: FORMAT_VERSION });
    }
    let kind = cur.string()?;
    let tag = cur.u64()?;
    let count = cur.u32()?;
    let mut params = ParamSet::new();
    for _ in 0..count {
        let name = cur.string()?;
        let rank = cur.u32()? as usize;
        let shape = (0..rank).map(|_| cur.u64().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| cur.f64()).collect::<Result<Vec<_>, _>>()?;
        params.add(name, Tensor::new(shape, data)?);
    }
    if cur.pos != body.len() {
        return Err(NnError::Format(format!("{} trailing bytes", body.len() - cur.pos)));
    }
    Ok((ParamHeader { kind, tag }, params))
}

pub fn save_params(path: &Path, header: &ParamHeader, params: &ParamSet) -> Result<(), NnError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode_params(header, params))?;
    Ok(())
}

pub fn load_params(path: &Path) -> Result<(ParamHeader, ParamSet), NnError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_params(&bytes)
}

/// Loads a file and checks its kind tag.
pub fn load_params_of_kind(path: &Path, kind: &str) -> Result<(u64, ParamSet), NnError> {
    let (h, ps) = load_params(path)?;
    if h.kind != kind {
        return Err(NnError::Format(format!("{} holds kind {:?}, expected {kind:?}", path.display(), h.kind)));
    }
    Ok((h.tag, ps))
}

/// Appends a `crc32 <hex>` trailer line to a text artifact.
pub fn seal_text(body: &str) -> String {
    let mut out = body.to_string();
    if !out.is_empty() && !out.ends_with('\n') {
        out.push('\n');
    }
    let crc = crc32fast::hash(out.as_bytes());
    out.push_str(&format!("crc32 {crc:08x}\n"));
    out
}

/// Verifies and strips the trailer written by [`seal_text`].
pub fn unseal_text(text: &str) -> Result<&str, NnError> {
    let trimmed = text.strip_suffix('\n').unwrap_or(text);
    let split = trimmed.rfind('\n').map_or(0, |i| i + 1);
    let (body, trailer) = trimmed.split_at(split);
    let hex = trailer
        .strip_prefix("crc32 ")
        .ok_or_else(|| NnError::Format("missing crc32 trailer".into()))?;
    let stored = u32::from_str_radix(hex.trim(), 16).map_err(|_| NnError::Format("bad crc32 trailer".into()))?;
    if crc32fast::hash(body.as_bytes()) != stored {
        return Err(NnError::Checksum);
    }
    Ok(body)
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    buf.extend_from_slice(&(s.len() as u32).to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], NnError> {
        if self.pos + n > self.buf.len() {
            return Err(NnError::Format("truncated parameter file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, NnError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64, NnError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String, NnError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| NnError::Format(e.to_string()))
    }
}
