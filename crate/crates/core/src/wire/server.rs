//! TCP front end: one thread and one session per connection.

use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use super::handler::{lock, ConnectionHandler, SharedController};

const POLL: Duration = Duration::from_millis(50);

pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    acceptor: Option<JoinHandle<()>>,
    workers: Arc<Mutex<Vec<JoinHandle<()>>>>,
    controller: SharedController,
}

/// Binds `addr` and serves until [`ServerHandle::shutdown`] is called.
pub fn serve(addr: impl ToSocketAddrs, controller: SharedController) -> io::Result<ServerHandle> {
    let listener = TcpListener::bind(addr)?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let workers: Arc<Mutex<Vec<JoinHandle<()>>>> = Arc::default();

    let acceptor = {
        let (stop, workers, controller) = (stop.clone(), workers.clone(), controller.clone());
        thread::spawn(move || {
            while !stop.load(Ordering::SeqCst) {
                match listener.accept() {
                    Ok((stream, _)) => {
                        let (stop, controller) = (stop.clone(), controller.clone());
                        let worker = thread::spawn(move || {
                            let _ = run_connection(stream, controller, &stop);
                        });
                        workers.lock().unwrap_or_else(|p| p.into_inner()).push(worker);
                    }
                    Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(POLL),
                    Err(_) => thread::sleep(POLL),
                }
            }
        })
    };
    Ok(ServerHandle { addr, stop, acceptor: Some(acceptor), workers, controller })
}

fn run_connection(mut stream: TcpStream, controller: SharedController, stop: &AtomicBool) -> io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_read_timeout(Some(POLL))?;
    stream.set_nodelay(true)?;
    let mut handler = ConnectionHandler::new(controller);
    let mut buf = [0u8; 8192];
    while !handler.is_closed() {
        if stop.load(Ordering::SeqCst) {
            handler.shutdown();
            break;
        }
        match stream.read(&mut buf) {
            Ok(0) => {
                let out = handler.on_eof();
                if !out.is_empty() {
                    let _ = stream.write_all(&out);
                    let _ = stream.flush();
                }
                break;
            }
            Ok(n) => {
                let out = handler.on_bytes(&buf[..n]);
                if !out.is_empty() {
                    stream.write_all(&out)?;
                    stream.flush()?;
                }
            }
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
            Err(e) => {
                handler.on_close();
                return Err(e);
            }
        }
    }
    let _ = stream.shutdown(std::net::Shutdown::Both);
    Ok(())
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn controller(&self) -> &SharedController {
        &self.controller
    }

    /// Stops accepting, terminates every open session and flushes the audit log.
    pub fn shutdown(mut self) {
        self.stop_all();
    }

    fn stop_all(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(a) = self.acceptor.take() {
            let _ = a.join();
        }
        let workers = std::mem::take(&mut *self.workers.lock().unwrap_or_else(|p| p.into_inner()));
        for w in workers {
            let _ = w.join();
        }
        lock(&self.controller).flush_audit();
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if self.acceptor.is_some() {
            self.stop_all();
        }
    }
}
