//! Line-framed agent protocol: codec, connection handling, transports,
//! server and client.

mod client;
mod codec;
mod handler;
mod pattern;
mod server;
mod transport;

pub use client::{Client, ClientError, Reply, DEFAULT_TIMEOUT};
pub use codec::{FrameDecoder, FrameError, MessageType, WireMessage, MAX_BODY, MAX_HEADER};
pub use handler::{shared, ConnectionHandler, SharedController, PROTOCOL_VERSION};
pub use pattern::{format_bindings, parse_bindings, split_graph_line, BodyError, PatternText};
pub use server::{serve, ServerHandle};
pub use transport::{LoopbackTransport, TcpTransport, Transport};

/// Client connected in-process to `controller`.
pub fn loopback(controller: &SharedController) -> Client<LoopbackTransport> {
    Client::new(LoopbackTransport::connect(controller.clone()))
}
