//! TCP transport: a threaded server driving [`AuthServer`] and blocking
//! client helpers for enrollment and authentication.

use std::io::{self, Read};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use chebauth_core::chebmath::Modulus;
use chebauth_core::fuzzy::{BitVector, CodeParams};
use chebauth_core::protocol::{
    auth_client_start, enroll_client, AuthServer, ClientCredential, ClientError, EnrollmentStore,
    RejectReason, ServerError, ServerPolicy, SessionKey, Timestamp,
};
use rand::rngs::OsRng;

use crate::wire::{read_frame, write_frame, FrameError, WireMessage};

pub fn now_ms() -> Timestamp {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

/// What the server reports about each connection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ServerEvent {
    Enrolled,
    Established { fingerprint: String },
    Rejected { reason: RejectReason },
    Refused { detail: String },
}

pub type EventSink = Arc<dyn Fn(&ServerEvent) + Send + Sync>;

#[derive(Clone)]
pub struct ServeOptions {
    pub policy: ServerPolicy,
    /// Accept enrollment requests; the operator asserts the link is trusted.
    pub trusted_channel: bool,
    pub on_event: Option<EventSink>,
}

impl ServeOptions {
    pub fn new(policy: ServerPolicy) -> Self {
        ServeOptions { policy, trusted_channel: false, on_event: None }
    }

    fn session_timeout(&self) -> Duration {
        Duration::from_millis(self.policy.window_ms.saturating_mul(2).max(1))
    }
}

struct Shared<S> {
    auth: AuthServer,
    store: S,
}

/// A running server. Dropping the handle does not stop it; call
/// [`ServerHandle::shutdown`].
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Unblock accept().
        let _ = TcpStream::connect(self.addr);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }

    /// Blocks until the accept loop exits.
    pub fn wait(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Binds `addr` and serves connections on background threads, one per
/// connection. The store and session table sit behind a single mutex.
pub fn serve<A, S>(
    addr: A,
    p: Modulus,
    code: CodeParams,
    store: S,
    opts: ServeOptions,
) -> io::Result<ServerHandle>
where
    A: ToSocketAddrs,
    S: EnrollmentStore + Send + 'static,
{
    let listener = TcpListener::bind(addr)?;
    let local = listener.local_addr()?;
    let shared = Arc::new(Mutex::new(Shared { auth: AuthServer::new(p, code, opts.policy), store }));
    let stop = Arc::new(AtomicBool::new(false));
    let stop_flag = stop.clone();
    let thread = thread::spawn(move || {
        for conn in listener.incoming() {
            if stop_flag.load(Ordering::SeqCst) {
                break;
            }
            let stream = match conn {
                Ok(s) => s,
                Err(e) => {
                    log::warn!("accept failed: {e}");
                    continue;
                }
            };
            let shared = shared.clone();
            let opts = opts.clone();
            thread::spawn(move || {
                let mut stream = stream;
                let peer = stream.peer_addr().ok();
                match handle_connection(&mut stream, &shared, &opts, code) {
                    Ok(()) => {}
                    Err(e @ (FrameError::UnknownTag(_) | FrameError::LengthMismatch { .. } | FrameError::BadBits)) => {
                        emit(&opts, ServerEvent::Refused { detail: format!("malformed frame: {e}") });
                        refuse(&mut stream);
                    }
                    Err(e) => log::debug!("connection {peer:?} closed: {e}"),
                }
            });
        }
    });
    Ok(ServerHandle { addr: local, stop, thread: Some(thread) })
}

fn emit(opts: &ServeOptions, ev: ServerEvent) {
    match &ev {
        ServerEvent::Rejected { reason } => log::info!("session rejected: {reason}"),
        ServerEvent::Refused { detail } => log::info!("request refused: {detail}"),
        ServerEvent::Established { fingerprint } => log::info!("session established {fingerprint}"),
        ServerEvent::Enrolled => log::info!("user enrolled"),
    }
    if let Some(sink) = &opts.on_event {
        sink(&ev);
    }
}

/// Sends the uniform failure, then drains unread input before closing.
fn refuse(stream: &mut TcpStream) {
    if write_frame(stream, &WireMessage::Failure).is_err() {
        return;
    }
    let _ = stream.shutdown(Shutdown::Write);
    let _ = stream.set_read_timeout(Some(Duration::from_millis(200)));
    let _ = io::copy(&mut Read::take(&mut *stream, 1 << 16), &mut io::sink());
}

fn handle_connection<S: EnrollmentStore>(
    stream: &mut TcpStream,
    shared: &Mutex<Shared<S>>,
    opts: &ServeOptions,
    code: CodeParams,
) -> Result<(), FrameError> {
    stream.set_read_timeout(Some(opts.session_timeout()))?;
    stream.set_nodelay(true)?;
    let mut rng = OsRng;

    match read_frame(stream, &code)? {
        WireMessage::EnrollRequest(req) => {
            if !opts.trusted_channel {
                emit(opts, ServerEvent::Refused { detail: "enrollment requires a trusted channel".into() });
                return write_frame(stream, &WireMessage::Failure).map_err(Into::into);
            }
            let result = {
                let mut guard = shared.lock().expect("server state poisoned");
                let Shared { auth, store } = &mut *guard;
                auth.enroll(&req, store, &mut rng)
            };
            match result {
                Ok(resp) => {
                    emit(opts, ServerEvent::Enrolled);
                    write_frame(stream, &WireMessage::EnrollResponse(resp))?;
                }
                Err(e) => {
                    emit(opts, ServerEvent::Refused { detail: describe(&e) });
                    write_frame(stream, &WireMessage::Failure)?;
                }
            }
        }
        WireMessage::AuthRequest(req) => {
            let result = {
                let mut guard = shared.lock().expect("server state poisoned");
                let Shared { auth, store } = &mut *guard;
                auth.verify_request(&req, now_ms(), store, &mut rng)
            };
            let challenge = match result {
                Ok(c) => c,
                Err(e) => {
                    match e {
                        ServerError::Rejected(reason) => emit(opts, ServerEvent::Rejected { reason }),
                        other => emit(opts, ServerEvent::Refused { detail: describe(&other) }),
                    }
                    return write_frame(stream, &WireMessage::Failure).map_err(Into::into);
                }
            };
            write_frame(stream, &WireMessage::AuthChallenge(challenge))?;

            let confirm = match read_frame(stream, &code) {
                Ok(WireMessage::AuthConfirm(c)) => c,
                Ok(_) => {
                    shared.lock().expect("server state poisoned").auth.expire(now_ms());
                    emit(opts, ServerEvent::Rejected { reason: RejectReason::Malformed });
                    return write_frame(stream, &WireMessage::Failure).map_err(Into::into);
                }
                Err(e) => return Err(e),
            };
            let result =
                shared.lock().expect("server state poisoned").auth.finish(&req.m1, &confirm, now_ms());
            match result {
                Ok(key) => emit(opts, ServerEvent::Established { fingerprint: key.fingerprint() }),
                Err(reason) => {
                    emit(opts, ServerEvent::Rejected { reason });
                    write_frame(stream, &WireMessage::Failure)?;
                }
            }
        }
        other => {
            emit(opts, ServerEvent::Refused { detail: format!("unexpected {}", other.name()) });
            write_frame(stream, &WireMessage::Failure)?;
        }
    }
    Ok(())
}

fn describe<E: std::fmt::Debug>(e: &ServerError<E>) -> String {
    match e {
        ServerError::Rejected(r) => r.to_string(),
        ServerError::Store(s) => format!("store: {s:?}"),
    }
}

#[derive(Debug, thiserror::Error)]
pub enum NetError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("framing: {0}")]
    Frame(#[from] FrameError),
    #[error("server refused the request")]
    Refused,
    #[error("rejected locally: {0}")]
    Rejected(RejectReason),
    #[error("unexpected {0} message")]
    Unexpected(&'static str),
    #[error(transparent)]
    Client(#[from] ClientError),
}

impl From<chebauth_core::fuzzy::FuzzyError> for NetError {
    fn from(e: chebauth_core::fuzzy::FuzzyError) -> Self {
        NetError::Client(e.into())
    }
}

fn connect<A: ToSocketAddrs>(addr: A, timeout: Duration) -> io::Result<TcpStream> {
    let stream = TcpStream::connect(addr)?;
    stream.set_read_timeout(Some(timeout))?;
    stream.set_nodelay(true)?;
    Ok(stream)
}

/// Enrolls over a connection the caller asserts is trusted.
pub fn enroll_remote<A: ToSocketAddrs>(
    addr: A,
    b_t: &BitVector,
    pw: &[u8],
    code: &CodeParams,
    expected_p: &Modulus,
) -> Result<ClientCredential, NetError> {
    let mut rng = OsRng;
    let (req, pending) = enroll_client(b_t, pw, code, &mut rng)?;
    let mut stream = connect(addr, Duration::from_secs(30))?;
    write_frame(&mut stream, &WireMessage::EnrollRequest(req))?;
    match read_frame(&mut stream, code)? {
        WireMessage::EnrollResponse(resp) => Ok(pending.complete(&resp, Some(expected_p))?),
        WireMessage::Failure => Err(NetError::Refused),
        other => Err(NetError::Unexpected(other.name())),
    }
}

/// Runs the three-message authentication; returns the agreed key once the
/// server has closed the connection without objecting.
pub fn authenticate_remote<A: ToSocketAddrs>(
    addr: A,
    cred: &ClientCredential,
    b: &BitVector,
    pw: &[u8],
    window_ms: u64,
) -> Result<SessionKey, NetError> {
    let mut rng = OsRng;
    let code = cred.code();
    let timeout = Duration::from_millis(window_ms.saturating_mul(2).max(1));
    let mut stream = connect(addr, timeout)?;
    let (req, session) = auth_client_start(cred, b, pw, now_ms(), window_ms, &mut rng)?;
    write_frame(&mut stream, &WireMessage::AuthRequest(req))?;
    let challenge = match read_frame(&mut stream, &code)? {
        WireMessage::AuthChallenge(c) => c,
        WireMessage::Failure => return Err(NetError::Refused),
        other => return Err(NetError::Unexpected(other.name())),
    };
    let (confirm, key) = session.finish(&challenge, now_ms()).map_err(NetError::Rejected)?;
    write_frame(&mut stream, &WireMessage::AuthConfirm(confirm))?;
    match read_frame(&mut stream, &code) {
        Err(FrameError::Closed) => Ok(key),
        Ok(WireMessage::Failure) => Err(NetError::Refused),
        Ok(other) => Err(NetError::Unexpected(other.name())),
        Err(e) => Err(e.into()),
    }
}
