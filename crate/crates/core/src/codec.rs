//! Byte encoding shared by the protocol messages: a kind byte, then
//! big-endian integers, tags as `ts, wid`, and values as `u32` length
//! followed by the bytes.

use crate::error::Error;
use crate::types::{ProcessId, Tag, Value};

#[derive(Default)]
pub struct Enc(Vec<u8>);

impl Enc {
    pub fn new(kind: u8) -> Self {
        Enc(vec![kind])
    }

    pub fn u64(mut self, x: u64) -> Self {
        self.0.extend_from_slice(&x.to_be_bytes());
        self
    }

    pub fn tag(self, t: Tag) -> Self {
        self.u64(t.ts).u64(t.wid.0)
    }

    pub fn value(mut self, v: &Value) -> Self {
        let n = u32::try_from(v.0.len()).expect("value longer than 4 GiB");
        self.0.extend_from_slice(&n.to_be_bytes());
        self.0.extend_from_slice(&v.0);
        self
    }

    pub fn pids(self, ps: &[ProcessId]) -> Self {
        let mut e = self.u64(ps.len() as u64);
        for p in ps {
            e = e.u64(p.0);
        }
        e
    }

    pub fn finish(self) -> Vec<u8> {
        self.0
    }
}

pub struct Dec<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Dec<'a> {
    /// Returns the decoder and the kind byte.
    pub fn new(buf: &'a [u8]) -> Result<(Self, u8), Error> {
        let k = *buf.first().ok_or_else(|| Error::Decode("empty message".into()))?;
        Ok((Dec { buf, pos: 1 }, k))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], Error> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Decode(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u64(&mut self) -> Result<u64, Error> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn tag(&mut self) -> Result<Tag, Error> {
        let ts = self.u64()?;
        let wid = self.u64()?;
        Ok(Tag::new(ts, wid))
    }

    pub fn value(&mut self) -> Result<Value, Error> {
        let n = u32::from_be_bytes(self.take(4)?.try_into().unwrap()) as usize;
        Ok(Value(self.take(n)?.to_vec()))
    }

    pub fn pids(&mut self) -> Result<Vec<ProcessId>, Error> {
        let n = self.u64()?;
        if n > (self.buf.len() - self.pos) as u64 / 8 {
            return Err(Error::Decode("process list longer than message".into()));
        }
        (0..n).map(|_| self.u64().map(ProcessId)).collect()
    }

    pub fn end(self) -> Result<(), Error> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(Error::Decode(format!("{} trailing bytes", self.buf.len() - self.pos)))
        }
    }
}
