//! TCP server fan-out and subscribing client.

use std::io::{ErrorKind, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use crate::stream::StreamDecoder;
use crate::wire::{encode_packet, TrackingPacket};
use crate::Error;

#[derive(Debug, thiserror::Error)]
pub enum TransportError {
    #[error("transport: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Protocol(#[from] Error),
    #[error("could not connect to {addr} after {attempts} attempts")]
    ConnectFailed { addr: String, attempts: u32 },
}

/// Retry schedule for connecting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Backoff {
    pub initial: Duration,
    pub factor: f64,
    pub max_delay: Duration,
    pub max_attempts: u32,
}

impl Default for Backoff {
    fn default() -> Self {
        Self {
            initial: Duration::from_millis(50),
            factor: 2.0,
            max_delay: Duration::from_secs(2),
            max_attempts: 8,
        }
    }
}

impl Backoff {
    /// Delay before attempt `n` (the first attempt, `n == 0`, is immediate).
    pub fn delay(&self, n: u32) -> Duration {
        if n == 0 {
            return Duration::ZERO;
        }
        let secs = self.initial.as_secs_f64() * self.factor.powi(n as i32 - 1);
        Duration::from_secs_f64(secs.min(self.max_delay.as_secs_f64()))
    }
}

/// Accepts any number of subscribers and writes every broadcast packet to
/// each of them. A subscriber whose socket fails is dropped.
pub struct PacketServer {
    addr: SocketAddr,
    clients: Arc<Mutex<Vec<TcpStream>>>,
    stop: Arc<AtomicBool>,
    acceptor: Option<JoinHandle<()>>,
}

impl PacketServer {
    pub fn bind(addr: impl ToSocketAddrs) -> Result<Self, TransportError> {
        let listener = TcpListener::bind(addr)?;
        let addr = listener.local_addr()?;
        listener.set_nonblocking(true)?;
        let clients = Arc::new(Mutex::new(Vec::new()));
        let stop = Arc::new(AtomicBool::new(false));
        let acceptor = {
            let clients = Arc::clone(&clients);
            let stop = Arc::clone(&stop);
            thread::spawn(move || accept_loop(listener, clients, stop))
        };
        Ok(Self {
            addr,
            clients,
            stop,
            acceptor: Some(acceptor),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn client_count(&self) -> usize {
        self.clients.lock().expect("client list").len()
    }

    /// Blocks until `n` subscribers are connected or `timeout` passes.
    pub fn wait_for_clients(&self, n: usize, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        while self.client_count() < n {
            if Instant::now() >= deadline {
                return false;
            }
            thread::sleep(Duration::from_millis(5));
        }
        true
    }

    /// Sends one packet to every subscriber; returns how many received it.
    pub fn broadcast(&self, packet: &TrackingPacket) -> Result<usize, TransportError> {
        let bytes = encode_packet(packet)?;
        let mut clients = self.clients.lock().expect("client list");
        clients.retain_mut(|c| match c.write_all(&bytes) {
            Ok(()) => true,
            Err(e) => {
                log::info!("dropping subscriber: {e}");
                false
            }
        });
        Ok(clients.len())
    }

    /// Broadcasts every packet from `source`, pausing `interval` between them.
    pub fn serve(
        &self,
        source: impl IntoIterator<Item = TrackingPacket>,
        interval: Option<Duration>,
    ) -> Result<usize, TransportError> {
        let mut sent = 0;
        let start = Instant::now();
        for (i, packet) in source.into_iter().enumerate() {
            if let Some(step) = interval {
                let due = start + step * i as u32;
                if let Some(wait) = due.checked_duration_since(Instant::now()) {
                    thread::sleep(wait);
                }
            }
            self.broadcast(&packet)?;
            sent += 1;
        }
        Ok(sent)
    }

    /// Closes every subscriber connection and stops accepting.
    pub fn shutdown(mut self) {
        self.close();
    }

    fn close(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
        for c in self.clients.lock().expect("client list").drain(..) {
            let _ = c.shutdown(std::net::Shutdown::Both);
        }
    }
}

impl Drop for PacketServer {
    fn drop(&mut self) {
        self.close();
    }
}

fn accept_loop(listener: TcpListener, clients: Arc<Mutex<Vec<TcpStream>>>, stop: Arc<AtomicBool>) {
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                if stream.set_nonblocking(false).is_ok() {
                    let _ = stream.set_nodelay(true);
                    log::info!("subscriber connected from {peer}");
                    clients.lock().expect("client list").push(stream);
                }
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(2)),
            Err(e) => {
                log::warn!("accept failed: {e}");
                thread::sleep(Duration::from_millis(20));
            }
        }
    }
}

/// Connects to `addr`, retrying on the `backoff` schedule.
pub fn connect(addr: &str, backoff: &Backoff) -> Result<TcpStream, TransportError> {
    let attempts = backoff.max_attempts.max(1);
    for n in 0..attempts {
        thread::sleep(backoff.delay(n));
        match TcpStream::connect(addr) {
            Ok(s) => return Ok(s),
            Err(e) => log::debug!("connect attempt {} to {addr} failed: {e}", n + 1),
        }
    }
    Err(TransportError::ConnectFailed {
        addr: addr.to_string(),
        attempts,
    })
}

/// Decoded packets from a server, in order. The iterator ends when the
/// server closes the connection; a trailing partial message is discarded.
pub struct PacketStream {
    socket: TcpStream,
    decoder: StreamDecoder,
    buf: Vec<u8>,
    done: bool,
}

pub fn subscribe(addr: &str, backoff: &Backoff) -> Result<PacketStream, TransportError> {
    Ok(PacketStream::new(connect(addr, backoff)?))
}

impl PacketStream {
    pub fn new(socket: TcpStream) -> Self {
        Self {
            socket,
            decoder: StreamDecoder::new(),
            buf: vec![0; 64 * 1024],
            done: false,
        }
    }
}

impl Iterator for PacketStream {
    type Item = Result<TrackingPacket, TransportError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some(r) = self.decoder.next_packet() {
                return Some(r.map_err(TransportError::from));
            }
            if self.done {
                return None;
            }
            match self.socket.read(&mut self.buf) {
                Ok(0) => {
                    self.done = true;
                    if self.decoder.pending() > 0 {
                        log::debug!("discarding {} bytes of an incomplete message", self.decoder.pending());
                    }
                    return None;
                }
                Ok(n) => self.decoder.push(&self.buf[..n]),
                Err(e) if e.kind() == ErrorKind::Interrupted => continue,
                Err(e) if matches!(e.kind(), ErrorKind::ConnectionReset | ErrorKind::ConnectionAborted) => {
                    self.done = true;
                    return None;
                }
                Err(e) => {
                    self.done = true;
                    return Some(Err(e.into()));
                }
            }
        }
    }
}
