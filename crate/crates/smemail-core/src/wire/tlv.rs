//! The TLV container every persistent and on-the-wire object uses.
//!
//! One record is `tag (1 octet) ‖ length (2 octets, big-endian) ‖ value`.
//! Records appear in a fixed order per message type — decoding is positional,
//! not search-based — and every decode failure carries the offset of the
//! octet that caused it.

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use thiserror::Error;

/// The tag registry. Tags outside this set are a decode error everywhere.
pub mod tag {
    pub const VERSION: u8 = 0x01;
    pub const CURVE_ID: u8 = 0x02;
    pub const SUITE_ID: u8 = 0x03;
    pub const POINT: u8 = 0x04;
    pub const CIPHERTEXT: u8 = 0x05;
    pub const SCALAR: u8 = 0x06;
    pub const IDENTITY: u8 = 0x07;
    pub const STATUS: u8 = 0x08;
    pub const TIMESTAMP: u8 = 0x09;
    pub const DIGEST: u8 = 0x0A;
    pub const SERIAL: u8 = 0x0B;
    pub const NONCE: u8 = 0x0C;
}

pub fn tag_known(t: u8) -> bool {
    (tag::VERSION..=tag::NONCE).contains(&t)
}

pub const MAX_VALUE_LEN: usize = u16::MAX as usize;

#[derive(Error, Debug, Clone, PartialEq, Eq)]
#[error("{kind} at offset {offset}")]
pub struct DecodeError {
    pub offset: usize,
    pub kind: DecodeErrorKind,
}

impl DecodeError {
    pub fn new(offset: usize, kind: DecodeErrorKind) -> Self {
        DecodeError { offset, kind }
    }
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum DecodeErrorKind {
    #[error("truncated record")]
    Truncated,
    #[error("unknown tag {0:#04x}")]
    UnknownTag(u8),
    #[error("expected tag {expected:#04x}, found {found:#04x}")]
    UnexpectedTag { expected: u8, found: u8 },
    #[error("expected tag {expected:#04x}, found end of input")]
    MissingRecord { expected: u8 },
    #[error("bad length for tag {tag:#04x}: expected {expected}, found {found}")]
    BadLength { tag: u8, expected: usize, found: usize },
    #[error("{0}")]
    BadValue(&'static str),
    #[error("trailing data after final record")]
    TrailingData,
    #[error("bad base64: {0}")]
    Base64(&'static str),
}

/// Serializer. Values longer than a record can hold are a caller bug for
/// fixed-size fields; payload-bearing callers bound their input first.
#[derive(Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Writer::default()
    }

    pub fn record(&mut self, tag: u8, value: &[u8]) -> &mut Self {
        assert!(tag_known(tag), "tag {tag:#04x} not in the registry");
        assert!(value.len() <= MAX_VALUE_LEN, "value too long for a TLV record");
        self.buf.push(tag);
        self.buf.extend_from_slice(&(value.len() as u16).to_be_bytes());
        self.buf.extend_from_slice(value);
        self
    }

    pub fn u8_record(&mut self, tag: u8, v: u8) -> &mut Self {
        self.record(tag, &[v])
    }

    pub fn u64_record(&mut self, tag: u8, v: u64) -> &mut Self {
        self.record(tag, &v.to_be_bytes())
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.buf
    }
}

/// Positional record reader.
pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub fn pos(&self) -> usize {
        self.pos
    }

    pub fn at_end(&self) -> bool {
        self.pos == self.buf.len()
    }

    /// Tag of the next record without consuming it; `None` at end of input.
    pub fn peek_tag(&self) -> Option<u8> {
        self.buf.get(self.pos).copied()
    }

    /// Next record as `(tag, value, value_offset)`; `Ok(None)` at end.
    pub fn next(&mut self) -> Result<Option<(u8, &'a [u8], usize)>, DecodeError> {
        if self.at_end() {
            return Ok(None);
        }
        let start = self.pos;
        if self.buf.len() - start < 3 {
            return Err(DecodeError::new(start, DecodeErrorKind::Truncated));
        }
        let t = self.buf[start];
        if !tag_known(t) {
            return Err(DecodeError::new(start, DecodeErrorKind::UnknownTag(t)));
        }
        let len = u16::from_be_bytes([self.buf[start + 1], self.buf[start + 2]]) as usize;
        let value_offset = start + 3;
        if self.buf.len() - value_offset < len {
            return Err(DecodeError::new(self.buf.len(), DecodeErrorKind::Truncated));
        }
        self.pos = value_offset + len;
        Ok(Some((t, &self.buf[value_offset..value_offset + len], value_offset)))
    }

    /// Consumes the next record, requiring it to carry `tag`.
    pub fn expect(&mut self, tag: u8) -> Result<(&'a [u8], usize), DecodeError> {
        let at = self.pos;
        match self.next()? {
            None => Err(DecodeError::new(at, DecodeErrorKind::MissingRecord { expected: tag })),
            Some((t, v, off)) if t == tag => Ok((v, off)),
            Some((t, _, _)) => Err(DecodeError::new(
                at,
                DecodeErrorKind::UnexpectedTag { expected: tag, found: t },
            )),
        }
    }

    pub fn expect_u8(&mut self, tag: u8) -> Result<u8, DecodeError> {
        let (v, off) = self.expect(tag)?;
        if v.len() != 1 {
            return Err(DecodeError::new(
                off,
                DecodeErrorKind::BadLength { tag, expected: 1, found: v.len() },
            ));
        }
        Ok(v[0])
    }

    pub fn expect_u64(&mut self, tag: u8) -> Result<u64, DecodeError> {
        let (v, off) = self.expect(tag)?;
        let arr: [u8; 8] = v.try_into().map_err(|_| {
            DecodeError::new(off, DecodeErrorKind::BadLength { tag, expected: 8, found: v.len() })
        })?;
        Ok(u64::from_be_bytes(arr))
    }

    /// Fails with `TrailingData` unless every octet has been consumed.
    pub fn finish(&self) -> Result<(), DecodeError> {
        if self.at_end() {
            Ok(())
        } else {
            Err(DecodeError::new(self.pos, DecodeErrorKind::TrailingData))
        }
    }
}

/// Renders bytes as base64 wrapped at 76 columns with a trailing newline —
/// the storage format for every on-disk object.
pub fn to_base64_text(bytes: &[u8]) -> String {
    let raw = B64.encode(bytes);
    let mut out = String::with_capacity(raw.len() + raw.len() / 76 + 2);
    for chunk in raw.as_bytes().chunks(76) {
        out.push_str(std::str::from_utf8(chunk).expect("base64 is ASCII"));
        out.push('\n');
    }
    out
}

/// Inverse of [`to_base64_text`]; tolerant of arbitrary line breaks and
/// surrounding whitespace.
pub fn from_base64_text(text: &str) -> Result<Vec<u8>, DecodeError> {
    let stripped: String = text.chars().filter(|c| !c.is_ascii_whitespace()).collect();
    B64.decode(stripped.as_bytes()).map_err(|e| {
        let offset = match e {
            base64::DecodeError::InvalidByte(off, _) => off,
            base64::DecodeError::InvalidLastSymbol(off, _) => off,
            _ => stripped.len(),
        };
        DecodeError::new(offset, DecodeErrorKind::Base64("invalid base64 text"))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writer_reader_round_trip() {
        let mut w = Writer::new();
        w.u8_record(tag::VERSION, 1)
            .record(tag::IDENTITY, b"alice@example.org")
            .u64_record(tag::TIMESTAMP, 1_700_000_000)
            .record(tag::CIPHERTEXT, &[]);
        let bytes = w.into_bytes();

        let mut r = Reader::new(&bytes);
        assert_eq!(r.expect_u8(tag::VERSION).unwrap(), 1);
        let (id, _) = r.expect(tag::IDENTITY).unwrap();
        assert_eq!(id, b"alice@example.org");
        assert_eq!(r.expect_u64(tag::TIMESTAMP).unwrap(), 1_700_000_000);
        let (c, _) = r.expect(tag::CIPHERTEXT).unwrap();
        assert!(c.is_empty());
        r.finish().unwrap();
    }

    #[test]
    fn record_order_is_enforced() {
        let mut w = Writer::new();
        w.u8_record(tag::VERSION, 1).record(tag::IDENTITY, b"x@y");
        let bytes = w.into_bytes();
        let mut r = Reader::new(&bytes);
        let err = r.expect(tag::IDENTITY).unwrap_err();
        assert_eq!(
            err.kind,
            DecodeErrorKind::UnexpectedTag { expected: tag::IDENTITY, found: tag::VERSION }
        );
        assert_eq!(err.offset, 0);
    }

    #[test]
    fn unknown_tag_rejected_with_offset() {
        let mut w = Writer::new();
        w.u8_record(tag::VERSION, 1);
        let mut bytes = w.into_bytes();
        bytes.extend_from_slice(&[0x7F, 0x00, 0x00]);
        let mut r = Reader::new(&bytes);
        r.next().unwrap();
        let err = r.next().unwrap_err();
        assert_eq!(err.kind, DecodeErrorKind::UnknownTag(0x7F));
        assert_eq!(err.offset, 4);
    }

    #[test]
    fn truncation_rejected_with_offset() {
        let mut w = Writer::new();
        w.record(tag::NONCE, &[9; 16]);
        let bytes = w.into_bytes();
        // chop mid-value
        let mut r = Reader::new(&bytes[..10]);
        let err = r.next().unwrap_err();
        assert_eq!(err.kind, DecodeErrorKind::Truncated);
        assert_eq!(err.offset, 10);
        // chop mid-header
        let mut r = Reader::new(&bytes[..2]);
        let err = r.next().unwrap_err();
        assert_eq!(err.kind, DecodeErrorKind::Truncated);
        assert_eq!(err.offset, 0);
    }

    #[test]
    fn missing_and_trailing_records_rejected() {
        let mut w = Writer::new();
        w.u8_record(tag::VERSION, 1);
        let bytes = w.into_bytes();
        let mut r = Reader::new(&bytes);
        r.expect_u8(tag::VERSION).unwrap();
        let err = r.expect(tag::SCALAR).unwrap_err();
        assert_eq!(err.kind, DecodeErrorKind::MissingRecord { expected: tag::SCALAR });

        let r = Reader::new(&bytes);
        assert_eq!(r.finish().unwrap_err().kind, DecodeErrorKind::TrailingData);
    }

    #[test]
    fn fixed_width_fields_enforced() {
        let mut w = Writer::new();
        w.record(tag::TIMESTAMP, &[1, 2, 3]);
        let bytes = w.into_bytes();
        let mut r = Reader::new(&bytes);
        let err = r.expect_u64(tag::TIMESTAMP).unwrap_err();
        assert_eq!(
            err.kind,
            DecodeErrorKind::BadLength { tag: tag::TIMESTAMP, expected: 8, found: 3 }
        );
    }

    #[test]
    fn base64_text_round_trips_and_wraps() {
        let data: Vec<u8> = (0..200u16).map(|i| (i % 251) as u8).collect();
        let text = to_base64_text(&data);
        assert!(text.lines().all(|l| l.len() <= 76));
        assert!(text.ends_with('\n'));
        assert_eq!(from_base64_text(&text).unwrap(), data);
        // folding/whitespace tolerance
        let ragged = text.replace('\n', "\n\t ");
        assert_eq!(from_base64_text(&ragged).unwrap(), data);
    }

    #[test]
    fn base64_rejects_garbage() {
        let err = from_base64_text("not*base64*at*all").unwrap_err();
        assert!(matches!(err.kind, DecodeErrorKind::Base64(_)));
    }
}
