//! Little-endian binary framing shared by model and checkpoint files:
//! `magic (8) | version u32 | payload | sha256(magic..payload) (32)`.

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub(crate) struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new(magic: &[u8; 8], version: u32) -> Self {
        let mut buf = magic.to_vec();
        buf.extend_from_slice(&version.to_le_bytes());
        Writer { buf }
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64s<'a>(&mut self, vs: impl IntoIterator<Item = &'a f64>) {
        for v in vs {
            self.f64(*v);
        }
    }

    pub fn vec_f64(&mut self, vs: &[f64]) {
        self.u64(vs.len() as u64);
        self.f64s(vs);
    }

    pub fn str(&mut self, s: &str) {
        self.u64(s.len() as u64);
        self.buf.extend_from_slice(s.as_bytes());
    }

    pub fn finish(mut self) -> Vec<u8> {
        let digest = Sha256::digest(&self.buf);
        self.buf.extend_from_slice(&digest);
        self.buf
    }
}

pub(crate) struct Reader<'a> {
    body: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    /// Verifies magic and checksum, then positions after the version field.
    pub fn open(bytes: &'a [u8], magic: &[u8; 8], expected_version: u32) -> Result<Self> {
        if bytes.len() < 8 + 4 + 32 {
            return Err(Error::Checksum("file too short to hold a checksum trailer".into()));
        }
        let (body, trailer) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != trailer {
            return Err(Error::Checksum("sha256 trailer does not match contents".into()));
        }
        if &body[..8] != magic {
            return Err(Error::Corrupt("bad magic bytes".into()));
        }
        let version = u32::from_le_bytes(body[8..12].try_into().unwrap());
        if version != expected_version {
            return Err(Error::Version {
                found: version,
                expected: expected_version,
            });
        }
        Ok(Reader { body, pos: 12 })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.body.len())
            .ok_or_else(|| Error::Corrupt("unexpected end of payload".into()))?;
        let s = &self.body[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Corrupt("length overflows usize".into()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::Corrupt("length overflow".into()))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn vec_f64(&mut self) -> Result<Vec<f64>> {
        let n = self.usize()?;
        self.f64s(n)
    }

    pub fn str(&mut self) -> Result<String> {
        let n = self.usize()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Corrupt("invalid utf-8".into()))
    }

    pub fn finish(self) -> Result<()> {
        if self.pos != self.body.len() {
            return Err(Error::Corrupt("trailing bytes after payload".into()));
        }
        Ok(())
    }
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_roundtrip_and_tamper() {
        let mut w = Writer::new(b"TESTFILE", 3);
        w.u64(5);
        w.vec_f64(&[1.5, -2.0]);
        w.str("hi");
        let bytes = w.finish();
        let mut r = Reader::open(&bytes, b"TESTFILE", 3).unwrap();
        assert_eq!(r.u64().unwrap(), 5);
        assert_eq!(r.vec_f64().unwrap(), vec![1.5, -2.0]);
        assert_eq!(r.str().unwrap(), "hi");
        r.finish().unwrap();

        assert!(matches!(
            Reader::open(&bytes[..bytes.len() - 1], b"TESTFILE", 3),
            Err(Error::Checksum(_))
        ));
        assert!(matches!(
            Reader::open(&bytes, b"TESTFILE", 4),
            Err(Error::Version { found: 3, expected: 4 })
        ));
    }
}
