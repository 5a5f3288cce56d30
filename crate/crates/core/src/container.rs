//! Versioned file container: a text header, a JSON manifest and a raw binary blob.
//!
//! ```text
//! <MAGIC>\n
//! version <u32>\n
//! manifest <byte count>\n
//! <manifest bytes>\n
//! blob <byte count>\n
//! <blob bytes>
//! ```

use std::path::Path;

use crate::error::{Error, Result};

pub(crate) fn encode(magic: &str, version: u32, manifest: &str, blob: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(manifest.len() + blob.len() + 64);
    out.extend_from_slice(format!("{magic}\nversion {version}\nmanifest {}\n", manifest.len()).as_bytes());
    out.extend_from_slice(manifest.as_bytes());
    out.extend_from_slice(format!("\nblob {}\n", blob.len()).as_bytes());
    out.extend_from_slice(blob);
    out
}

struct Cursor<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn line(&mut self) -> Result<&'a str> {
        let rest = &self.bytes[self.pos..];
        let end = rest.iter().position(|&b| b == b'\n').ok_or_else(|| {
            Error::parse(self.path, format!("byte {}", self.pos), "unterminated header line")
        })?;
        let text = std::str::from_utf8(&rest[..end])
            .map_err(|_| Error::parse(self.path, format!("byte {}", self.pos), "header is not UTF-8"))?;
        self.pos += end + 1;
        Ok(text)
    }

    fn keyed(&mut self, key: &str) -> Result<u64> {
        let at = self.pos;
        let line = self.line()?;
        line.strip_prefix(key)
            .and_then(|v| v.strip_prefix(' '))
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| Error::parse(self.path, format!("byte {at}"), format!("expected `{key} <n>`, found `{line}`")))
    }

    fn take(&mut self, n: u64) -> Result<&'a [u8]> {
        let available = (self.bytes.len() - self.pos) as u64;
        if available < n {
            return Err(Error::Truncated {
                path: self.path.into(),
                expected: self.pos as u64 + n,
                actual: self.bytes.len() as u64,
            });
        }
        let out = &self.bytes[self.pos..self.pos + n as usize];
        self.pos += n as usize;
        Ok(out)
    }
}

/// Splits a container into (version, manifest, blob) after checking magic and version.
pub(crate) fn decode<'a>(path: &'a Path, bytes: &'a [u8], magic: &str, supported: u32) -> Result<(String, &'a [u8])> {
    let mut cur = Cursor { path, bytes, pos: 0 };
    let first = cur.line()?;
    if first != magic {
        return Err(Error::parse(path, "byte 0", format!("bad magic `{first}`, expected `{magic}`")));
    }
    let version = cur.keyed("version")?;
    if version != u64::from(supported) {
        return Err(Error::VersionMismatch {
            found: u32::try_from(version).unwrap_or(u32::MAX),
            supported,
        });
    }
    let mlen = cur.keyed("manifest")?;
    let manifest = std::str::from_utf8(cur.take(mlen)?)
        .map_err(|_| Error::parse(path, "manifest", "manifest is not UTF-8"))?
        .to_string();
    if cur.take(1)? != b"\n" {
        return Err(Error::parse(path, format!("byte {}", cur.pos - 1), "expected newline after manifest"));
    }
    let blen = cur.keyed("blob")?;
    let blob = cur.take(blen)?;
    if cur.pos != bytes.len() {
        return Err(Error::parse(path, format!("byte {}", cur.pos), "trailing bytes after blob"));
    }
    Ok((manifest, blob))
}

pub(crate) fn push_f64s(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Reads `n` little-endian f64 values starting at `*offset`.
pub(crate) fn take_f64s(path: &Path, blob: &[u8], offset: &mut usize, n: usize) -> Result<Vec<f64>> {
    let end = *offset + n * 8;
    if end > blob.len() {
        return Err(Error::Truncated {
            path: path.into(),
            expected: end as u64,
            actual: blob.len() as u64,
        });
    }
    let out = blob[*offset..end]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    *offset = end;
    Ok(out)
}
