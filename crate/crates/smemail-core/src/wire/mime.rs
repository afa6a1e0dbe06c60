//! The MIME carrier for envelopes.
//!
//! An entity has exactly five headers — MIME-Version, Content-Type,
//! Content-Transfer-Encoding, From, To — and a single base64 body part.
//! Output is always canonical (fixed header order and casing, CRLF endings,
//! 76-column body). Input is lenient the way real mail is: folded headers,
//! arbitrary case, and ragged line endings all parse.

use thiserror::Error;

use crate::pki::Identity;
use crate::wire::tlv;

pub const MIME_VERSION: &str = "1.0";
pub const CONTENT_TYPE: &str = "application/smemail; version=\"1\"";
pub const TRANSFER_ENCODING: &str = "base64";

const HEADER_ORDER: [&str; 5] = ["MIME-Version", "Content-Type", "Content-Transfer-Encoding", "From", "To"];

/// A parsed entity. The body is held decoded; rendering re-derives the
/// canonical text, so `render ∘ parse` is the identity on canonical input.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct MimeEntity {
    pub from: Identity,
    pub to: Identity,
    body: Vec<u8>,
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
#[error("{kind} at line {line}")]
pub struct MimeError {
    pub line: usize,
    pub kind: MimeErrorKind,
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum MimeErrorKind {
    #[error("missing header {0}")]
    MissingHeader(&'static str),
    #[error("duplicate header {0}")]
    DuplicateHeader(String),
    #[error("unexpected header {0}")]
    UnexpectedHeader(String),
    #[error("malformed header line")]
    MalformedHeader,
    #[error("unsupported {0}")]
    BadValue(&'static str),
    #[error("invalid identity in {0}")]
    BadIdentity(&'static str),
    #[error("body is not valid base64")]
    BadBody,
}

impl MimeEntity {
    pub fn new(from: Identity, to: Identity, body: Vec<u8>) -> Self {
        MimeEntity { from, to, body }
    }

    pub fn body(&self) -> &[u8] {
        &self.body
    }

    /// The canonical header list, in order.
    pub fn headers(&self) -> Vec<(&'static str, String)> {
        vec![
            ("MIME-Version", MIME_VERSION.to_owned()),
            ("Content-Type", CONTENT_TYPE.to_owned()),
            ("Content-Transfer-Encoding", TRANSFER_ENCODING.to_owned()),
            ("From", self.from.as_str().to_owned()),
            ("To", self.to.as_str().to_owned()),
        ]
    }

    /// Canonical text: CRLF line endings, fixed header order, wrapped body.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (name, value) in self.headers() {
            out.push_str(&name);
            out.push_str(": ");
            out.push_str(&value);
            out.push_str("\r\n");
        }
        out.push_str("\r\n");
        for line in tlv::to_base64_text(&self.body).lines() {
            out.push_str(line);
            out.push_str("\r\n");
        }
        out
    }

    pub fn render_bytes(&self) -> Vec<u8> {
        self.render().into_bytes()
    }

    /// Lenient parse: tolerates LF or CRLF endings, folded header
    /// continuation lines, and any header-name casing — but insists on
    /// exactly the five defined headers and a base64 body.
    pub fn parse(text: &str) -> Result<MimeEntity, MimeError> {
        let err = |line, kind| Err(MimeError { line, kind });
        let mut lines = text.split('\n').enumerate().peekable();

        // unfold the header section
        let mut raw_headers: Vec<(usize, String)> = Vec::new();
        let mut body_start = None;
        for (idx, raw) in lines.by_ref() {
            let line = raw.strip_suffix('\r').unwrap_or(raw);
            if line.is_empty() {
                body_start = Some(idx + 1);
                break;
            }
            if line.starts_with(' ') || line.starts_with('\t') {
                match raw_headers.last_mut() {
                    Some((_, prev)) => {
                        prev.push(' ');
                        prev.push_str(line.trim());
                    }
                    None => return err(idx + 1, MimeErrorKind::MalformedHeader),
                }
            } else {
                raw_headers.push((idx + 1, line.to_owned()));
            }
        }
        let body_start = match body_start {
            Some(b) => b,
            None => return err(text.split('\n').count(), MimeErrorKind::MissingHeader("body separator")),
        };

        let mut seen: Vec<(&'static str, usize, String)> = Vec::new();
        for (line_no, raw) in &raw_headers {
            let (name, value) = match raw.split_once(':') {
                Some((n, v)) => (n.trim(), v.trim()),
                None => return err(*line_no, MimeErrorKind::MalformedHeader),
            };
            let canonical = HEADER_ORDER
                .iter()
                .find(|h| h.eq_ignore_ascii_case(name))
                .copied();
            match canonical {
                None => return err(*line_no, MimeErrorKind::UnexpectedHeader(name.to_owned())),
                Some(c) => {
                    if seen.iter().any(|(n, _, _)| *n == c) {
                        return err(*line_no, MimeErrorKind::DuplicateHeader(c.to_owned()));
                    }
                    seen.push((c, *line_no, value.to_owned()));
                }
            }
        }

        let get = |name: &'static str| -> Result<(usize, &str), MimeError> {
            seen.iter()
                .find(|(n, _, _)| *n == name)
                .map(|(_, l, v)| (*l, v.as_str()))
                .ok_or(MimeError { line: 1, kind: MimeErrorKind::MissingHeader(name) })
        };

        let (l, v) = get("MIME-Version")?;
        if v != MIME_VERSION {
            return err(l, MimeErrorKind::BadValue("MIME version"));
        }
        let (l, v) = get("Content-Type")?;
        if !content_type_matches(v) {
            return err(l, MimeErrorKind::BadValue("content type"));
        }
        let (l, v) = get("Content-Transfer-Encoding")?;
        if !v.eq_ignore_ascii_case(TRANSFER_ENCODING) {
            return err(l, MimeErrorKind::BadValue("transfer encoding"));
        }
        let (l, v) = get("From")?;
        let from = Identity::parse(v).map_err(|_| MimeError { line: l, kind: MimeErrorKind::BadIdentity("From") })?;
        let (l, v) = get("To")?;
        let to = Identity::parse(v).map_err(|_| MimeError { line: l, kind: MimeErrorKind::BadIdentity("To") })?;

        let body_text: String = text
            .split('\n')
            .skip(body_start)
            .collect::<Vec<_>>()
            .join("\n");
        let body = tlv::from_base64_text(&body_text)
            .map_err(|_| MimeError { line: body_start + 1, kind: MimeErrorKind::BadBody })?;

        Ok(MimeEntity { from, to, body })
    }
}

/// `application/smemail; version="1"`, tolerating case, whitespace, and an
/// unquoted version parameter.
fn content_type_matches(v: &str) -> bool {
    let mut parts = v.split(';');
    let mime_type = parts.next().unwrap_or("").trim();
    if !mime_type.eq_ignore_ascii_case("application/smemail") {
        return false;
    }
    for param in parts {
        let Some((k, val)) = param.split_once('=') else { return false };
        if k.trim().eq_ignore_ascii_case("version") {
            let val = val.trim().trim_matches('"');
            return val == "1";
        }
    }
    false
}
