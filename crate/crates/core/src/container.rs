//! Little-endian, length-prefixed section container shared by the dataset and
//! model artifacts.
//!
//! Layout: 4-byte magic, `u32` format version, then a sequence of sections,
//! each a 4-byte tag followed by a `u64` payload length and the payload.

use crate::error::{Error, Result};

pub(crate) struct ContainerWriter {
    buf: Vec<u8>,
}

impl ContainerWriter {
    pub fn new(magic: &[u8; 4], version: u32) -> Self {
        let mut buf = Vec::new();
        buf.extend_from_slice(magic);
        buf.extend_from_slice(&version.to_le_bytes());
        Self { buf }
    }

    pub fn section(&mut self, tag: &[u8; 4], payload: &[u8]) {
        self.buf.extend_from_slice(tag);
        self.buf.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        self.buf.extend_from_slice(payload);
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub(crate) struct ContainerReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ContainerReader<'a> {
    /// Checks the magic and returns the reader plus the stored format version.
    pub fn open(bytes: &'a [u8], magic: &[u8; 4]) -> Result<(Self, u32)> {
        if bytes.len() < 8 || &bytes[..4] != magic {
            return Err(Error::Format(format!(
                "bad magic, expected {}",
                String::from_utf8_lossy(magic)
            )));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        Ok((Self { bytes, pos: 8 }, version))
    }

    pub fn section(&mut self, tag: &[u8; 4]) -> Result<&'a [u8]> {
        let header_end = self.pos + 12;
        if header_end > self.bytes.len() {
            return Err(Error::Format(format!(
                "truncated before section {}",
                String::from_utf8_lossy(tag)
            )));
        }
        let found = &self.bytes[self.pos..self.pos + 4];
        if found != tag {
            return Err(Error::Format(format!(
                "expected section {}, found {}",
                String::from_utf8_lossy(tag),
                String::from_utf8_lossy(found)
            )));
        }
        let len = u64::from_le_bytes(self.bytes[self.pos + 4..header_end].try_into().expect("8 bytes"));
        let end = header_end
            .checked_add(usize::try_from(len).map_err(|_| Error::Format("section too large".into()))?)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("section {} overruns file", String::from_utf8_lossy(tag))))?;
        self.pos = end;
        Ok(&self.bytes[header_end..end])
    }

    pub fn finish(self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes", self.bytes.len() - self.pos)));
        }
        Ok(())
    }
}

pub(crate) fn f64s_to_bytes(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub(crate) fn bytes_to_f64s(bytes: &[u8]) -> Result<Vec<f64>> {
    if !bytes.len().is_multiple_of(8) {
        return Err(Error::Format("f64 payload length is not a multiple of 8".into()));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

pub(crate) fn u64s_to_bytes(values: &[u64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub(crate) fn bytes_to_u64s(bytes: &[u8]) -> Result<Vec<u64>> {
    if !bytes.len().is_multiple_of(8) {
        return Err(Error::Format("u64 payload length is not a multiple of 8".into()));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

pub(crate) fn utf8(bytes: &[u8]) -> Result<&str> {
    std::str::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}
