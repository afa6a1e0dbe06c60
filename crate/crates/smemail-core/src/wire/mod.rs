//! Wire formats: the TLV container, the MIME carrier, the signcrypted
//! envelope, and every service request/response.
//!
//! Encoding is canonical — for any value, exactly one octet sequence — which
//! is what lets signatures cover "all preceding octets" by re-encoding
//! instead of lugging raw buffers around. Decoding is strict about structure
//! (fixed record order, known tags, no trailing data) and every error names
//! the offset of the offending octet.

pub mod envelope;
pub mod messages;
pub mod mime;
pub mod tlv;

pub use envelope::{decode_envelope, encode_envelope, EncodeError};
pub use mime::{MimeEntity, MimeError};
pub use tlv::{DecodeError, DecodeErrorKind};
