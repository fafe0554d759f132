//! Canonical byte encoding.
//!
//! Fixed-width integers are little-endian; every variable-length item
//! (byte strings, sequences, optional values) is prefixed with its length
//! or presence flag. Field order is the declaration order of each type.
//! Two values encode to the same bytes exactly when they are equal.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error("unexpected end of input at byte {0}")]
    Truncated(usize),
    #[error("unknown tag {tag} while decoding {what}")]
    UnknownTag { what: &'static str, tag: u8 },
    #[error("{0} trailing bytes after value")]
    Trailing(usize),
    #[error("length {0} exceeds remaining input")]
    Length(u64),
}

#[derive(Default, Debug, Clone)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn i64(&mut self, v: i64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn bool(&mut self, v: bool) -> &mut Self {
        self.u8(v as u8)
    }

    pub fn bytes(&mut self, v: &[u8]) -> &mut Self {
        self.u32(v.len() as u32);
        self.buf.extend_from_slice(v);
        self
    }

    pub fn put<T: Canonical>(&mut self, v: &T) -> &mut Self {
        v.encode(self);
        self
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub struct Decoder<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, len: usize) -> Result<&'a [u8], DecodeError> {
        let end = self.pos.checked_add(len).ok_or(DecodeError::Truncated(self.pos))?;
        if end > self.buf.len() {
            return Err(DecodeError::Truncated(self.pos));
        }
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, DecodeError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    pub fn u64(&mut self) -> Result<u64, DecodeError> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    pub fn i64(&mut self) -> Result<i64, DecodeError> {
        let b = self.take(8)?;
        Ok(i64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    pub fn bool(&mut self) -> Result<bool, DecodeError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            tag => Err(DecodeError::UnknownTag { what: "bool", tag }),
        }
    }

    pub fn bytes(&mut self) -> Result<Vec<u8>, DecodeError> {
        let len = self.u32()? as usize;
        if len > self.buf.len() - self.pos {
            return Err(DecodeError::Length(len as u64));
        }
        Ok(self.take(len)?.to_vec())
    }

    /// Reads a sequence length and checks it against the remaining input,
    /// assuming every element occupies at least one byte.
    pub fn seq_len(&mut self) -> Result<usize, DecodeError> {
        let len = self.u32()? as usize;
        if len > self.buf.len() - self.pos {
            return Err(DecodeError::Length(len as u64));
        }
        Ok(len)
    }

    pub fn get<T: Canonical>(&mut self) -> Result<T, DecodeError> {
        T::decode(self)
    }

    pub fn finish(self) -> Result<(), DecodeError> {
        match self.buf.len() - self.pos {
            0 => Ok(()),
            extra => Err(DecodeError::Trailing(extra)),
        }
    }
}

pub trait Canonical: Sized {
    fn encode(&self, enc: &mut Encoder);
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError>;

    fn to_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        self.encode(&mut enc);
        enc.finish()
    }

    fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut dec = Decoder::new(bytes);
        let v = Self::decode(&mut dec)?;
        dec.finish()?;
        Ok(v)
    }
}

impl Canonical for u64 {
    fn encode(&self, enc: &mut Encoder) {
        enc.u64(*self);
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        dec.u64()
    }
}

impl Canonical for i64 {
    fn encode(&self, enc: &mut Encoder) {
        enc.i64(*self);
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        dec.i64()
    }
}

impl Canonical for Vec<u8> {
    fn encode(&self, enc: &mut Encoder) {
        enc.bytes(self);
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        dec.bytes()
    }
}

/// Length-prefixed sequence of canonical elements.
pub fn encode_seq<T: Canonical>(enc: &mut Encoder, items: &[T]) {
    enc.u32(items.len() as u32);
    for item in items {
        item.encode(enc);
    }
}

pub fn decode_seq<T: Canonical>(dec: &mut Decoder<'_>) -> Result<Vec<T>, DecodeError> {
    let len = dec.seq_len()?;
    (0..len).map(|_| T::decode(dec)).collect()
}

pub fn encode_opt<T: Canonical>(enc: &mut Encoder, item: &Option<T>) {
    match item {
        None => {
            enc.u8(0);
        }
        Some(v) => {
            enc.u8(1);
            v.encode(enc);
        }
    }
}

pub fn decode_opt<T: Canonical>(dec: &mut Decoder<'_>) -> Result<Option<T>, DecodeError> {
    match dec.u8()? {
        0 => Ok(None),
        1 => Ok(Some(T::decode(dec)?)),
        tag => Err(DecodeError::UnknownTag { what: "option", tag }),
    }
}
