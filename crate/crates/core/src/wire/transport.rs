//! Byte transports for the client: in-process loopback and TCP.

use std::collections::VecDeque;
use std::io::{self, Read, Write};
use std::net::{Shutdown, TcpStream, ToSocketAddrs};
use std::time::Duration;

use super::handler::{ConnectionHandler, SharedController};

pub trait Transport {
    fn send(&mut self, bytes: &[u8]) -> io::Result<()>;

    /// Waits up to `timeout` for bytes. `Ok(None)` on timeout, `Ok(Some(empty))` at end of stream.
    fn recv(&mut self, timeout: Duration) -> io::Result<Option<Vec<u8>>>;

    fn close(&mut self);

    /// Half-close: the peer sees end of stream but may still answer.
    fn shutdown_write(&mut self) -> io::Result<()>;

    /// True when `recv` never blocks, so callers need no deadline clock.
    fn is_synchronous(&self) -> bool {
        false
    }
}

/// Drives a [`ConnectionHandler`] directly; same semantics as a socket, no network.
pub struct LoopbackTransport {
    handler: ConnectionHandler,
    inbox: VecDeque<u8>,
}

impl LoopbackTransport {
    pub fn connect(controller: SharedController) -> Self {
        Self { handler: ConnectionHandler::new(controller), inbox: VecDeque::new() }
    }

    pub fn handler(&self) -> &ConnectionHandler {
        &self.handler
    }
}

impl Transport for LoopbackTransport {
    fn send(&mut self, bytes: &[u8]) -> io::Result<()> {
        if self.handler.is_closed() {
            return Err(io::Error::new(io::ErrorKind::BrokenPipe, "connection closed"));
        }
        self.inbox.extend(self.handler.on_bytes(bytes));
        Ok(())
    }

    fn recv(&mut self, _timeout: Duration) -> io::Result<Option<Vec<u8>>> {
        if !self.inbox.is_empty() {
            return Ok(Some(self.inbox.drain(..).collect()));
        }
        // Synchronous peer: nothing queued means nothing will ever arrive.
        Ok(if self.handler.is_closed() { Some(Vec::new()) } else { None })
    }

    fn close(&mut self) {
        self.handler.on_close();
    }

    fn shutdown_write(&mut self) -> io::Result<()> {
        self.inbox.extend(self.handler.on_eof());
        Ok(())
    }

    fn is_synchronous(&self) -> bool {
        true
    }
}

pub struct TcpTransport {
    stream: TcpStream,
}

impl TcpTransport {
    pub fn connect(addr: impl ToSocketAddrs) -> io::Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(Self { stream })
    }
}

impl Transport for TcpTransport {
    fn send(&mut self, bytes: &[u8]) -> io::Result<()> {
        self.stream.write_all(bytes)?;
        self.stream.flush()
    }

    fn recv(&mut self, timeout: Duration) -> io::Result<Option<Vec<u8>>> {
        self.stream.set_read_timeout(Some(timeout.max(Duration::from_millis(1))))?;
        let mut buf = vec![0u8; 8192];
        match self.stream.read(&mut buf) {
            Ok(n) => {
                buf.truncate(n);
                Ok(Some(buf))
            }
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn close(&mut self) {
        let _ = self.stream.shutdown(Shutdown::Both);
    }

    fn shutdown_write(&mut self) -> io::Result<()> {
        self.stream.shutdown(Shutdown::Write)
    }
}
