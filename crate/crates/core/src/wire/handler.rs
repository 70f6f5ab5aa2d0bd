//! Server side of one connection, independent of the byte transport.

use std::sync::{Arc, Mutex, MutexGuard};

use super::codec::{FrameDecoder, FrameError, MessageType, WireMessage};
use super::pattern::{format_bindings, split_graph_line, PatternText};
use crate::engine::{PermissionAction, RequestBody};
use crate::rdf::Iri;
use crate::session::{Session, SessionController};
use crate::turtle;

pub const PROTOCOL_VERSION: &str = "v1";

pub type SharedController = Arc<Mutex<SessionController>>;

pub fn shared(controller: SessionController) -> SharedController {
    Arc::new(Mutex::new(controller))
}

/// Drives one session from raw bytes to response bytes. Once closed, all
/// further input is ignored and the transport should be shut.
pub struct ConnectionHandler {
    controller: SharedController,
    session: Session,
    decoder: FrameDecoder,
    last_id: u64,
    closed: bool,
}

impl ConnectionHandler {
    pub fn new(controller: SharedController) -> Self {
        let session = lock(&controller).open_session();
        Self { controller, session, decoder: FrameDecoder::new(), last_id: 0, closed: false }
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// Feeds received bytes; returns the encoded responses.
    pub fn on_bytes(&mut self, bytes: &[u8]) -> Vec<u8> {
        let mut out = Vec::new();
        if self.closed {
            return out;
        }
        self.decoder.push(bytes);
        while !self.closed {
            match self.decoder.next_frame() {
                Ok(Some(message)) => {
                    for reply in self.on_message(message) {
                        out.extend(reply.encode());
                    }
                }
                Ok(None) => break,
                Err(e) => {
                    for reply in self.fail(0, FrameError::CODE, &e.to_string()) {
                        out.extend(reply.encode());
                    }
                }
            }
        }
        out
    }

    /// The peer went away. Closing a connection always terminates its session.
    pub fn on_close(&mut self) {
        if self.closed {
            return;
        }
        let reason = if self.decoder.finish().is_err() { FrameError::CODE } else { "CONNECTION_CLOSED" };
        self.close(reason);
    }

    /// End of input while the connection can still be written to. A partial
    /// frame left in the buffer is reported before the session ends.
    pub fn on_eof(&mut self) -> Vec<u8> {
        if self.closed {
            return Vec::new();
        }
        match self.decoder.finish() {
            Err(e) => self.fail(0, FrameError::CODE, &e.to_string()).iter().flat_map(WireMessage::encode).collect(),
            Ok(()) => {
                self.close("CONNECTION_CLOSED");
                Vec::new()
            }
        }
    }

    /// Server shutdown.
    pub fn shutdown(&mut self) {
        if !self.closed {
            self.close("SERVER_SHUTDOWN");
        }
    }

    fn close(&mut self, reason: &str) {
        self.closed = true;
        lock(&self.controller).terminate(&mut self.session, reason);
    }

    fn fail(&mut self, id: u64, code: &str, detail: &str) -> Vec<WireMessage> {
        self.close(code);
        vec![
            WireMessage::new(MessageType::Error, id, format!("{code} {detail}")),
            WireMessage::new(MessageType::Bye, id, code),
        ]
    }

    fn on_message(&mut self, m: WireMessage) -> Vec<WireMessage> {
        if m.correlation_id <= self.last_id {
            return self.fail(m.correlation_id, "PROTOCOL_VIOLATION", "correlation ids must increase");
        }
        self.last_id = m.correlation_id;
        let id = m.correlation_id;
        match m.kind {
            MessageType::Hello => self.hello(id, &m.body),
            MessageType::Register => self.register(id, &m.body),
            MessageType::Query => self.query(id, &m.body),
            MessageType::Assert => self.write(id, PermissionAction::Assert, &m.body),
            MessageType::Retract => self.write(id, PermissionAction::Retract, &m.body),
            MessageType::Bye => {
                self.close("CLIENT_BYE");
                vec![WireMessage::new(MessageType::Bye, id, "CLIENT_BYE")]
            }
            MessageType::Ok | MessageType::Deny | MessageType::Error => {
                self.fail(id, "PROTOCOL_VIOLATION", &format!("{} is a server message", m.kind))
            }
        }
    }

    fn deny_and_close(&mut self, id: u64, code: &str, detail: &str) -> Vec<WireMessage> {
        self.closed = true;
        vec![
            WireMessage::new(MessageType::Deny, id, format!("{code} {detail}\nsession=terminated")),
            WireMessage::new(MessageType::Bye, id, code),
        ]
    }

    fn hello(&mut self, id: u64, body: &str) -> Vec<WireMessage> {
        let Some(credential) = body.strip_prefix(PROTOCOL_VERSION).and_then(|r| r.strip_prefix('\n')) else {
            return self.fail(id, "UNSUPPORTED_VERSION", "HELLO body must start with v1");
        };
        let result = lock(&self.controller).authenticate(&mut self.session, credential);
        match result {
            Ok(agent) => vec![WireMessage::new(
                MessageType::Ok,
                id,
                format!("session={}\nagent={}", self.session.id(), agent.as_str()),
            )],
            Err(e) => {
                lock(&self.controller).terminate(&mut self.session, e.code());
                self.deny_and_close(id, e.code(), &e.to_string())
            }
        }
    }

    fn register(&mut self, id: u64, body: &str) -> Vec<WireMessage> {
        let result = lock(&self.controller).register(&mut self.session, body);
        match result {
            Ok(profile) => {
                vec![WireMessage::new(MessageType::Ok, id, format!("profile={}", profile.profile_graph.as_str()))]
            }
            Err(e) => {
                lock(&self.controller).terminate(&mut self.session, e.code());
                self.deny_and_close(id, e.code(), &e.to_string())
            }
        }
    }

    fn query(&mut self, id: u64, body: &str) -> Vec<WireMessage> {
        let prefixes = lock(&self.controller).prefixes();
        match PatternText::parse(body, &prefixes) {
            Ok(p) => self.execute(id, PermissionAction::Query, p.graph, RequestBody::Patterns(p.patterns)),
            Err(e) => self.fail(id, "MALFORMED_REQUEST", &e.to_string()),
        }
    }

    fn write(&mut self, id: u64, action: PermissionAction, body: &str) -> Vec<WireMessage> {
        let prefixes = lock(&self.controller).prefixes();
        let parsed = split_graph_line(body).map_err(|e| e.to_string()).and_then(|(graph, rest)| {
            turtle::parse_with(rest, prefixes).map(|d| (graph, d.triples)).map_err(|e| e.to_string())
        });
        match parsed {
            Ok((graph, triples)) => {
                self.execute(id, action, graph, RequestBody::Triples(triples.into_iter().collect()))
            }
            Err(e) => self.fail(id, "MALFORMED_REQUEST", &e),
        }
    }

    fn execute(
        &mut self,
        id: u64,
        action: PermissionAction,
        graph: Option<Iri>,
        body: RequestBody,
    ) -> Vec<WireMessage> {
        let result = lock(&self.controller).execute(&mut self.session, action, graph, body);
        let executed = match result {
            Ok(e) => e,
            Err(e) => return self.fail(id, "MALFORMED_REQUEST", &e.to_string()),
        };
        let decision = &executed.execution.decision;
        if decision.is_permit() {
            let body = match action {
                PermissionAction::Query => format_bindings(&executed.execution.bindings),
                _ => format!("changed={}", executed.execution.changed),
            };
            return vec![WireMessage::new(MessageType::Ok, id, body)];
        }
        let code = decision.reason().as_str();
        if executed.terminated || self.session.is_terminated() {
            self.deny_and_close(id, code, decision.detail())
        } else {
            vec![WireMessage::new(MessageType::Deny, id, format!("{code} {}\nsession=open", decision.detail()))]
        }
    }
}

impl Drop for ConnectionHandler {
    fn drop(&mut self) {
        if !self.closed {
            self.closed = true;
            if let Ok(mut c) = self.controller.lock() {
                c.terminate(&mut self.session, "CONNECTION_CLOSED");
            }
        }
    }
}

pub(crate) fn lock(c: &SharedController) -> MutexGuard<'_, SessionController> {
    c.lock().unwrap_or_else(|p| p.into_inner())
}
