//! Little-endian primitives shared by the binary network and dataset files.

use protolatent_core::Tensor;

/// Why a binary file could not be decoded. Offsets are byte positions from
/// the start of the file.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FormatError {
    #[error("file truncated at offset {offset}: needed {needed} more bytes")]
    Truncated { offset: usize, needed: usize },
    #[error("bad magic {found:?}, expected {expected:?}")]
    BadMagic { expected: String, found: String },
    #[error("unsupported format version {found} (this build reads {supported})")]
    Version { found: u32, supported: u32 },
    #[error("invalid data at offset {offset}: {reason}")]
    Invalid { offset: usize, reason: String },
    #[error("{count} trailing bytes after the last record at offset {offset}")]
    Trailing { offset: usize, count: usize },
}

#[derive(Debug, Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.bytes(s.as_bytes());
    }

    /// Rank, dims, then values.
    pub fn tensor(&mut self, t: &Tensor) {
        self.u32(t.dims().len() as u32);
        for &d in t.dims() {
            self.u64(d as u64);
        }
        for &x in t.data() {
            self.f64(x);
        }
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0 }
    }

    pub fn offset(&self) -> usize {
        self.pos
    }

    pub fn invalid(&self, at: usize, reason: impl Into<String>) -> FormatError {
        FormatError::Invalid {
            offset: at,
            reason: reason.into(),
        }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let left = self.data.len() - self.pos;
        if n > left {
            return Err(FormatError::Truncated {
                offset: self.data.len(),
                needed: n - left,
            });
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], FormatError> {
        Ok(self.take(N)?.try_into().expect("take returns N bytes"))
    }

    pub fn magic(&mut self, expected: &[u8; 4]) -> Result<(), FormatError> {
        let found = self.array::<4>()?;
        if &found != expected {
            return Err(FormatError::BadMagic {
                expected: String::from_utf8_lossy(expected).into_owned(),
                found: String::from_utf8_lossy(&found).into_owned(),
            });
        }
        Ok(())
    }

    pub fn version(&mut self, supported: u32) -> Result<(), FormatError> {
        let found = self.u32()?;
        if found != supported {
            return Err(FormatError::Version { found, supported });
        }
        Ok(())
    }

    pub fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.array::<1>()?[0])
    }

    pub fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    pub fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    /// A u64 that must fit a `usize` and stay below `limit`.
    pub fn count(&mut self, limit: u64) -> Result<usize, FormatError> {
        let at = self.pos;
        let v = self.u64()?;
        if v > limit {
            return Err(self.invalid(at, format!("count {v} exceeds {limit}")));
        }
        Ok(v as usize)
    }

    pub fn f64(&mut self) -> Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    pub fn str(&mut self) -> Result<String, FormatError> {
        let len = self.u32()? as usize;
        let at = self.pos;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| self.invalid(at, "string is not UTF-8"))
    }

    pub fn tensor(&mut self) -> Result<Tensor, FormatError> {
        let at = self.pos;
        let rank = self.u32()? as usize;
        if rank > 8 {
            return Err(self.invalid(at, format!("tensor rank {rank} is implausible")));
        }
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(self.count(u32::MAX as u64)?);
        }
        let n = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
        let n = match n {
            Some(n) if n.checked_mul(8).is_some() => n,
            _ => return Err(self.invalid(at, "tensor size overflows")),
        };
        // check the length up front so a corrupt dim cannot force a huge allocation
        let left = self.data.len() - self.pos;
        if n * 8 > left {
            return Err(FormatError::Truncated {
                offset: self.data.len(),
                needed: n * 8 - left,
            });
        }
        let data = (0..n).map(|_| self.f64()).collect::<Result<Vec<_>, _>>()?;
        Tensor::new(dims, data).map_err(|e| self.invalid(at, e.to_string()))
    }

    pub fn finish(&self) -> Result<(), FormatError> {
        let count = self.data.len() - self.pos;
        if count > 0 {
            return Err(FormatError::Trailing {
                offset: self.pos,
                count,
            });
        }
        Ok(())
    }
}
