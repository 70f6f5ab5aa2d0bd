//! Agent-side protocol client.

use std::io;
use std::time::{Duration, Instant};

use thiserror::Error;

use super::codec::{FrameDecoder, FrameError, MessageType, WireMessage};
use super::handler::PROTOCOL_VERSION;
use super::pattern::{parse_bindings, BodyError};
use super::transport::Transport;
use crate::rdf::Binding;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(5);

/// Transport and protocol failures, kept apart from authorization denials.
#[derive(Debug, Error)]
pub enum ClientError {
    #[error("no response within {0:?}")]
    Timeout(Duration),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("malformed frame from server: {0}")]
    Frame(#[from] FrameError),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("session terminated: {0}")]
    Terminated(String),
    #[error("bad response body: {0}")]
    Body(#[from] BodyError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Reply {
    Ok(String),
    Deny { code: String, detail: String },
    Error { code: String, detail: String },
    Bye(String),
}

impl Reply {
    pub fn is_ok(&self) -> bool {
        matches!(self, Reply::Ok(_))
    }

    pub fn code(&self) -> &str {
        match self {
            Reply::Ok(_) => "OK",
            Reply::Deny { code, .. } | Reply::Error { code, .. } => code,
            Reply::Bye(reason) => reason,
        }
    }
}

fn split_code(body: &str) -> (String, String) {
    let first = body.lines().next().unwrap_or("");
    let (code, detail) = first.split_once(' ').unwrap_or((first, ""));
    (code.to_string(), detail.to_string())
}

pub struct Client<T: Transport> {
    transport: T,
    decoder: FrameDecoder,
    next_id: u64,
    timeout: Duration,
    terminated: Option<String>,
}

impl<T: Transport> Client<T> {
    pub fn new(transport: T) -> Self {
        Self { transport, decoder: FrameDecoder::new(), next_id: 1, timeout: DEFAULT_TIMEOUT, terminated: None }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    /// Reason the server gave when it ended the session.
    pub fn terminated(&self) -> Option<&str> {
        self.terminated.as_deref()
    }

    /// Sends raw bytes, bypassing the encoder; for exercising the server's framing checks.
    pub fn send_raw(&mut self, bytes: &[u8]) -> Result<Vec<WireMessage>, ClientError> {
        self.transport.send(bytes)?;
        self.drain()
    }

    /// Half-closes the connection and collects whatever the server still sends.
    pub fn finish_sending(&mut self) -> Result<Vec<WireMessage>, ClientError> {
        self.transport.shutdown_write()?;
        self.drain()
    }

    fn drain(&mut self) -> Result<Vec<WireMessage>, ClientError> {
        let mut out = Vec::new();
        while let Some(m) = self.read_frame(false)? {
            let bye = m.kind == MessageType::Bye;
            if bye {
                self.mark_terminated(&m.body);
            }
            out.push(m);
            if bye {
                break;
            }
        }
        Ok(out)
    }

    pub fn call(&mut self, kind: MessageType, body: &str) -> Result<Reply, ClientError> {
        if let Some(reason) = &self.terminated {
            return Err(ClientError::Terminated(reason.clone()));
        }
        let id = self.next_id;
        self.next_id += 1;
        self.transport.send(&WireMessage::new(kind, id, body).encode())?;
        let m = self.read_frame(true)?.ok_or(ClientError::Timeout(self.timeout))?;
        self.check_id(&m, id)?;
        let reply = match m.kind {
            MessageType::Ok => Reply::Ok(m.body),
            MessageType::Deny => {
                let (code, detail) = split_code(&m.body);
                if m.body.lines().any(|l| l == "session=terminated") {
                    self.expect_bye(id)?;
                }
                Reply::Deny { code, detail }
            }
            MessageType::Error => {
                let (code, detail) = split_code(&m.body);
                self.expect_bye(id)?;
                Reply::Error { code, detail }
            }
            MessageType::Bye => {
                self.mark_terminated(&m.body);
                Reply::Bye(m.body)
            }
            other => return Err(ClientError::Protocol(format!("server sent {other}"))),
        };
        Ok(reply)
    }

    fn check_id(&self, m: &WireMessage, expected: u64) -> Result<(), ClientError> {
        let connection_level = m.correlation_id == 0 && matches!(m.kind, MessageType::Error | MessageType::Bye);
        if m.correlation_id != expected && !connection_level {
            return Err(ClientError::Protocol(format!(
                "response correlation id {} does not match request {expected}",
                m.correlation_id
            )));
        }
        Ok(())
    }

    fn expect_bye(&mut self, id: u64) -> Result<(), ClientError> {
        let m = self.read_frame(true)?.ok_or(ClientError::Timeout(self.timeout))?;
        self.check_id(&m, id)?;
        if m.kind != MessageType::Bye {
            return Err(ClientError::Protocol(format!("expected BYE, got {}", m.kind)));
        }
        self.mark_terminated(&m.body);
        Ok(())
    }

    fn mark_terminated(&mut self, reason: &str) {
        self.terminated = Some(reason.to_string());
        self.transport.close();
    }

    fn read_frame(&mut self, wait: bool) -> Result<Option<WireMessage>, ClientError> {
        let deadline = (!self.transport.is_synchronous()).then(|| Instant::now() + self.timeout);
        loop {
            if let Some(m) = self.decoder.next_frame()? {
                return Ok(Some(m));
            }
            let remaining = match deadline {
                Some(d) => d.saturating_duration_since(Instant::now()),
                None => self.timeout,
            };
            if remaining.is_zero() {
                return Ok(None);
            }
            match self.transport.recv(remaining)? {
                Some(bytes) if bytes.is_empty() => {
                    self.decoder.finish()?;
                    return if wait { Err(ClientError::Protocol("connection closed".into())) } else { Ok(None) };
                }
                Some(bytes) => self.decoder.push(&bytes),
                None => return Ok(None),
            }
        }
    }

    pub fn hello(&mut self, credential: &str) -> Result<Reply, ClientError> {
        self.call(MessageType::Hello, &format!("{PROTOCOL_VERSION}\n{credential}"))
    }

    pub fn register(&mut self, payload: &str) -> Result<Reply, ClientError> {
        self.call(MessageType::Register, payload)
    }

    pub fn query(&mut self, pattern_text: &str) -> Result<(Reply, Vec<Binding>), ClientError> {
        let reply = self.call(MessageType::Query, pattern_text)?;
        let bindings = match &reply {
            Reply::Ok(body) => parse_bindings(body)?,
            _ => Vec::new(),
        };
        Ok((reply, bindings))
    }

    pub fn assert(&mut self, turtle: &str) -> Result<Reply, ClientError> {
        self.call(MessageType::Assert, turtle)
    }

    pub fn retract(&mut self, turtle: &str) -> Result<Reply, ClientError> {
        self.call(MessageType::Retract, turtle)
    }

    pub fn bye(&mut self) -> Result<Reply, ClientError> {
        self.call(MessageType::Bye, "")
    }
}
