use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};

/// Sequential little-endian reader over an in-memory file image that reports
/// failures against the originating path.
pub(crate) struct BinaryReader<'a> {
    path: PathBuf,
    buf: &'a [u8],
    pos: usize,
}

impl<'a> BinaryReader<'a> {
    pub fn new(path: &Path, buf: &'a [u8]) -> Self {
        Self {
            path: path.to_path_buf(),
            buf,
            pos: 0,
        }
    }

    pub fn err(&self, msg: impl Into<String>) -> Error {
        Error::format(&self.path, format!("{} (offset {})", msg.into(), self.pos))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(self.err(format!("truncated: wanted {n} more bytes")));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let got = self.take(4)?;
        if got != expected {
            return Err(self.err(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(got),
                String::from_utf8_lossy(expected)
            )));
        }
        Ok(())
    }

    pub fn u16(&mut self) -> Result<u16> {
        let mut b = self.take(2)?;
        Ok(b.read_u16::<LittleEndian>().unwrap())
    }

    pub fn u32(&mut self) -> Result<u32> {
        let mut b = self.take(4)?;
        Ok(b.read_u32::<LittleEndian>().unwrap())
    }

    pub fn u64(&mut self) -> Result<u64> {
        let mut b = self.take(8)?;
        Ok(b.read_u64::<LittleEndian>().unwrap())
    }

    pub fn f64(&mut self) -> Result<f64> {
        let mut b = self.take(8)?;
        Ok(b.read_f64::<LittleEndian>().unwrap())
    }

    pub fn f32s(&mut self, n: usize, out: &mut Vec<f32>) -> Result<()> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| self.err("length overflow"))?)?;
        out.extend(
            bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])),
        );
        Ok(())
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| self.err("length overflow"))?)?;
        let mut out = Vec::with_capacity(n);
        let mut r = bytes;
        for _ in 0..n {
            out.push(r.read_f64::<LittleEndian>().unwrap());
        }
        Ok(out)
    }

    pub fn token(&mut self) -> Result<&'a str> {
        let len = self.u16()? as usize;
        let bytes = self.take(len)?;
        std::str::from_utf8(bytes).map_err(|_| self.err("token is not valid UTF-8"))
    }

    pub fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(self.err(format!(
                "{} trailing bytes after last record",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

/// Reads magic + version and returns the declared dimension.
pub(crate) fn read_header(r: &mut BinaryReader<'_>, magic: &[u8; 4]) -> Result<usize> {
    r.magic(magic)?;
    let version = r.u32()?;
    if version != super::FORMAT_VERSION {
        return Err(r.err(format!("unsupported version {version}")));
    }
    let dim = r.u32()? as usize;
    if dim == 0 {
        return Err(r.err("dimension must be positive"));
    }
    Ok(dim)
}

pub(crate) fn write_header<W: Write>(w: &mut W, magic: &[u8; 4], dim: usize) -> std::io::Result<()> {
    w.write_all(magic)?;
    w.write_u32::<LittleEndian>(super::FORMAT_VERSION)?;
    w.write_u32::<LittleEndian>(dim as u32)
}

pub(crate) fn write_token<W: Write>(w: &mut W, token: &str) -> std::io::Result<()> {
    let len = u16::try_from(token.len()).map_err(|_| {
        std::io::Error::new(std::io::ErrorKind::InvalidInput, "token longer than 65535 bytes")
    })?;
    w.write_u16::<LittleEndian>(len)?;
    w.write_all(token.as_bytes())
}

pub(crate) fn write_f32s<W: Write>(w: &mut W, values: &[f32]) -> std::io::Result<()> {
    for &v in values {
        w.write_f32::<LittleEndian>(v)?;
    }
    Ok(())
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    Ok(buf)
}
