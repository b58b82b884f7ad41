//! Little-endian byte helpers shared by the on-disk containers.

use crate::error::{Error, Result};

pub(crate) struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new(magic: &[u8; 8]) -> Self {
        Writer { buf: magic.to_vec() }
    }

    pub fn u32(&mut self, v: usize) -> &mut Self {
        let v = u32::try_from(v).expect("value exceeds u32 range");
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn str(&mut self, s: &str) -> &mut Self {
        self.u32(s.len());
        self.buf.extend_from_slice(s.as_bytes());
        self
    }

    pub fn u32_list(&mut self, vs: &[usize]) -> &mut Self {
        self.u32(vs.len());
        for &v in vs {
            self.u32(v);
        }
        self
    }

    pub fn f64s(&mut self, vs: &[f64]) -> &mut Self {
        self.buf.reserve(vs.len() * 8);
        for v in vs {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
        self
    }

    pub fn bytes(&mut self, b: &[u8]) -> &mut Self {
        self.u32(b.len());
        self.buf.extend_from_slice(b);
        self
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    /// Checks the 8-byte magic and positions the cursor after it.
    pub fn open(buf: &'a [u8], magic: &[u8; 8], what: &'static str) -> Result<Self> {
        if buf.len() < 8 || &buf[..8] != magic {
            return Err(Error::BadMagic {
                what,
                expected: magic.to_vec(),
                found: buf[..buf.len().min(8)].to_vec(),
            });
        }
        Ok(Reader { buf, pos: 8, what })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let available = self.buf.len() - self.pos;
        if available < n {
            return Err(Error::Truncated {
                what: self.what,
                offset: self.pos,
                needed: n - available,
            });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn str(&mut self) -> Result<String> {
        let n = self.u32()?;
        let b = self.take(n)?;
        String::from_utf8(b.to_vec()).map_err(|_| Error::DescriptorMismatch {
            what: self.what,
            detail: "descriptor string is not UTF-8".into(),
        })
    }

    pub fn u32_list(&mut self) -> Result<Vec<usize>> {
        let n = self.u32()?;
        // Bound the allocation by what the buffer can actually hold.
        if n > (self.buf.len() - self.pos) / 4 {
            return Err(Error::Truncated {
                what: self.what,
                offset: self.pos,
                needed: n * 4 - (self.buf.len() - self.pos),
            });
        }
        (0..n).map(|_| self.u32()).collect()
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = n
            .checked_mul(8)
            .ok_or_else(|| Error::DescriptorMismatch {
                what: self.what,
                detail: format!("element count {n} overflows"),
            })?;
        let b = self.take(bytes)?;
        Ok(b.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.u32()?;
        self.take(n)
    }

    pub fn finish(self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::DescriptorMismatch {
                what: self.what,
                detail: format!("{} unexpected trailing bytes", self.buf.len() - self.pos),
            });
        }
        Ok(())
    }
}

pub(crate) fn read_file(path: &std::path::Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_file(path: &std::path::Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
