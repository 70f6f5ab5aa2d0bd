//! Frame codec: `<TYPE> <correlationId> <byteLength>\n<body>\n`.

use std::fmt;

use thiserror::Error;

/// Longest header accepted before a newline must appear.
pub const MAX_HEADER: usize = 64;
pub const MAX_BODY: usize = 16 * 1024 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MessageType {
    Hello,
    Register,
    Query,
    Assert,
    Retract,
    Bye,
    Ok,
    Deny,
    Error,
}

impl MessageType {
    pub const ALL: [MessageType; 9] = [
        Self::Hello,
        Self::Register,
        Self::Query,
        Self::Assert,
        Self::Retract,
        Self::Bye,
        Self::Ok,
        Self::Deny,
        Self::Error,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Hello => "HELLO",
            Self::Register => "REGISTER",
            Self::Query => "QUERY",
            Self::Assert => "ASSERT",
            Self::Retract => "RETRACT",
            Self::Bye => "BYE",
            Self::Ok => "OK",
            Self::Deny => "DENY",
            Self::Error => "ERROR",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

impl fmt::Display for MessageType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireMessage {
    pub kind: MessageType,
    pub correlation_id: u64,
    pub body: String,
}

impl WireMessage {
    pub fn new(kind: MessageType, correlation_id: u64, body: impl Into<String>) -> Self {
        Self { kind, correlation_id, body: body.into() }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = format!("{} {} {}\n", self.kind, self.correlation_id, self.body.len()).into_bytes();
        out.extend_from_slice(self.body.as_bytes());
        out.push(b'\n');
        out
    }

    /// Decodes exactly one frame occupying all of `bytes`.
    pub fn decode(bytes: &[u8]) -> Result<Self, FrameError> {
        let mut d = FrameDecoder::new();
        d.push(bytes);
        let m = d.next_frame()?.ok_or(FrameError::Truncated)?;
        if d.buffered() > 0 {
            return Err(FrameError::TrailingBytes(d.buffered()));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("header exceeds {MAX_HEADER} bytes")]
    HeaderTooLong,
    #[error("header is not `TYPE ID LENGTH`")]
    BadHeader,
    #[error("unknown message type {0:?}")]
    UnknownType(String),
    #[error("bad number {0:?} in header")]
    BadNumber(String),
    #[error("body length {0} exceeds the limit")]
    BodyTooLong(usize),
    #[error("body is not followed by a newline; byte length is wrong")]
    BadTerminator,
    #[error("body is not UTF-8")]
    NotUtf8,
    #[error("stream ended inside a frame")]
    Truncated,
    #[error("{0} bytes after the frame")]
    TrailingBytes(usize),
}

impl FrameError {
    pub const CODE: &'static str = "MALFORMED_FRAME";
}

fn number(s: &str) -> Result<u64, FrameError> {
    // Digits only: no sign, no whitespace, no leading zeros except "0" itself.
    let canonical = !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit()) && (s == "0" || !s.starts_with('0'));
    if !canonical {
        return Err(FrameError::BadNumber(s.to_string()));
    }
    s.parse().map_err(|_| FrameError::BadNumber(s.to_string()))
}

/// Incremental decoder for a byte stream. After an error the stream is
/// unusable; callers close the connection.
#[derive(Debug, Default)]
pub struct FrameDecoder {
    buf: Vec<u8>,
}

impl FrameDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    pub fn buffered(&self) -> usize {
        self.buf.len()
    }

    /// The next complete frame, `None` if more bytes are needed.
    pub fn next_frame(&mut self) -> Result<Option<WireMessage>, FrameError> {
        let Some(nl) = self.buf.iter().take(MAX_HEADER + 1).position(|b| *b == b'\n') else {
            return if self.buf.len() > MAX_HEADER { Err(FrameError::HeaderTooLong) } else { Ok(None) };
        };
        let header = std::str::from_utf8(&self.buf[..nl]).map_err(|_| FrameError::BadHeader)?;
        let parts: Vec<&str> = header.split(' ').collect();
        let [kind, id, len] = parts.as_slice() else {
            return Err(FrameError::BadHeader);
        };
        let kind = MessageType::parse(kind).ok_or_else(|| FrameError::UnknownType(kind.to_string()))?;
        let correlation_id = number(id)?;
        let len = usize::try_from(number(len)?).map_err(|_| FrameError::BodyTooLong(usize::MAX))?;
        if len > MAX_BODY {
            return Err(FrameError::BodyTooLong(len));
        }
        let start = nl + 1;
        let end = start + len;
        if self.buf.len() <= end {
            return Ok(None);
        }
        if self.buf[end] != b'\n' {
            return Err(FrameError::BadTerminator);
        }
        let body = String::from_utf8(self.buf[start..end].to_vec()).map_err(|_| FrameError::NotUtf8)?;
        self.buf.drain(..=end);
        Ok(Some(WireMessage { kind, correlation_id, body }))
    }

    /// Call at end of stream: leftover bytes mean a truncated frame.
    pub fn finish(&self) -> Result<(), FrameError> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(FrameError::Truncated)
        }
    }
}
