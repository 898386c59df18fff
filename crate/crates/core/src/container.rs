//! Shared framing for the binary file formats: magic, version, length-prefixed
//! JSON header, raw little-endian payload.

use crate::error::{Error, Result};

pub(crate) struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new(magic: &[u8; 8], major: u16, minor: u16) -> Self {
        let mut buf = Vec::with_capacity(1024);
        buf.extend_from_slice(magic);
        buf.extend_from_slice(&major.to_le_bytes());
        buf.extend_from_slice(&minor.to_le_bytes());
        Self { buf }
    }

    pub fn header<T: serde::Serialize>(&mut self, header: &T) -> Result<()> {
        let json = serde_json::to_vec(header)?;
        self.u64(json.len() as u64);
        self.buf.extend_from_slice(&json);
        Ok(())
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub(crate) struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    /// Checks the magic and returns the reader plus (major, minor).
    pub fn open(data: &'a [u8], magic: &[u8; 8], what: &'static str) -> Result<(Self, u16, u16)> {
        let mut r = Self { data, pos: 0, what };
        let m = r.take(8)?;
        if m != magic {
            return Err(Error::Integrity(format!("{what}: bad magic")));
        }
        let major = u16::from_le_bytes(r.take(2)?.try_into().unwrap());
        let minor = u16::from_le_bytes(r.take(2)?.try_into().unwrap());
        Ok((r, major, minor))
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.data.len())
            .ok_or_else(|| Error::Integrity(format!("{}: truncated", self.what)))?;
        let out = &self.data[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn header<T: serde::de::DeserializeOwned>(&mut self) -> Result<T> {
        let len = self.u64()? as usize;
        let raw = self.take(len)?;
        serde_json::from_slice(raw).map_err(|e| Error::Integrity(format!("{}: malformed header: {e}", self.what)))
    }

    pub fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    pub fn expect_end(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(Error::Integrity(format!("{}: {} trailing bytes", self.what, self.remaining())));
        }
        Ok(())
    }
}
