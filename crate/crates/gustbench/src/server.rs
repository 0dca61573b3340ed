//! TCP front end: one thread and one session per connection.

use std::io::{BufReader, BufWriter, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use crate::protocol::{ErrorCode, Response};
use crate::session::{serve_stream, Session, SessionDefaults};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct ServeOptions {
    /// Connections beyond this are answered with `busy` and closed.
    pub max_sessions: usize,
    pub defaults: SessionDefaults,
}

impl Default for ServeOptions {
    fn default() -> Self {
        Self {
            max_sessions: 64,
            defaults: SessionDefaults::default(),
        }
    }
}

pub struct Server {
    listener: TcpListener,
    options: ServeOptions,
    stop: Arc<AtomicBool>,
}

/// Releases a session slot when the connection thread ends, even on panic.
struct SlotGuard(Arc<AtomicUsize>);

impl Drop for SlotGuard {
    fn drop(&mut self) {
        self.0.fetch_sub(1, Ordering::SeqCst);
    }
}

impl Server {
    pub fn bind(addr: impl ToSocketAddrs + std::fmt::Debug, options: ServeOptions) -> Result<Self, ServiceError> {
        let listener = TcpListener::bind(&addr).map_err(|source| ServiceError::Bind {
            addr: format!("{addr:?}"),
            source,
        })?;
        Ok(Self {
            listener,
            options,
            stop: Arc::new(AtomicBool::new(false)),
        })
    }

    pub fn local_addr(&self) -> std::io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Accepts connections until shut down through a [`ServerHandle`].
    pub fn run(self) -> Result<(), ServiceError> {
        let active = Arc::new(AtomicUsize::new(0));
        let next_id = AtomicU64::new(1);
        for conn in self.listener.incoming() {
            if self.stop.load(Ordering::SeqCst) {
                break;
            }
            let stream = match conn {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("accept failed: {e}");
                    continue;
                }
            };
            if active.fetch_add(1, Ordering::SeqCst) >= self.options.max_sessions {
                active.fetch_sub(1, Ordering::SeqCst);
                refuse(stream);
                continue;
            }
            let guard = SlotGuard(active.clone());
            let mut session = Session::new(next_id.fetch_add(1, Ordering::SeqCst), self.options.defaults.clone());
            std::thread::spawn(move || {
                let _guard = guard;
                if let Err(e) = handle_connection(stream, &mut session) {
                    eprintln!("session {} ended: {e}", session.id());
                }
            });
        }
        Ok(())
    }

    /// Runs the accept loop on a background thread.
    pub fn spawn(self) -> Result<ServerHandle, ServiceError> {
        let addr = self.local_addr()?;
        let stop = self.stop.clone();
        let thread = std::thread::spawn(move || {
            if let Err(e) = self.run() {
                eprintln!("server stopped: {e}");
            }
        });
        Ok(ServerHandle { addr, stop, thread })
    }
}

fn handle_connection(stream: TcpStream, session: &mut Session) -> std::io::Result<()> {
    stream.set_nodelay(true)?;
    let reader = BufReader::new(stream.try_clone()?);
    serve_stream(reader, BufWriter::new(stream), session)
}

fn refuse(mut stream: TcpStream) {
    let line = Response::error(ErrorCode::Busy, "session limit reached").to_line();
    let _ = writeln!(stream, "{line}");
}

pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: JoinHandle<()>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting and waits for the accept loop. Open sessions run
    /// until their clients disconnect.
    pub fn shutdown(self) {
        self.stop.store(true, Ordering::SeqCst);
        // wake the blocking accept
        let _ = TcpStream::connect(self.addr);
        let _ = self.thread.join();
    }
}
