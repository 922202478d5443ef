//! TCP front end. One thread per connection; sessions live in a shared
//! registry and are closed when the connection that created them ends.

use std::collections::HashMap;
use std::io::{self, BufReader, BufWriter};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU32, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};

use crate::config::SessionConfig;
use crate::protocol::{
    ErrorCode, Frame, FrameError, Reply, Request, SensorSource, SessionInfo, StepData, WireFrame,
    WireState, VERSION,
};
use crate::realtime::{RealtimeRunner, SharedSession};
use crate::session::{Session, SessionError};

struct Slot {
    session: SharedSession,
    runner: Mutex<Option<RealtimeRunner>>,
}

/// Sessions addressed by id. Ids start at 1 and are never reused.
#[derive(Default)]
pub struct Registry {
    sessions: Mutex<HashMap<u32, Arc<Slot>>>,
    next_id: AtomicU32,
}

fn error_reply(e: &SessionError) -> Reply {
    let code = match e {
        SessionError::Config(_) | SessionError::World(_) => ErrorCode::InvalidConfig,
        SessionError::NoSuchUav(_) => ErrorCode::BadUav,
        SessionError::HitlImmutable(_) => ErrorCode::HitlImmutable,
        SessionError::NotHitl(_) => ErrorCode::NotHitl,
        SessionError::InvalidInput(_) => ErrorCode::InvalidInput,
        SessionError::BadMode(_) => ErrorCode::BadMode,
        SessionError::Diverged { .. } => ErrorCode::Diverged,
        SessionError::NoSensor { .. } => ErrorCode::NoSensor,
    };
    Reply::error(code, e.to_string())
}

fn reply_with<T>(r: Result<T, SessionError>, f: impl FnOnce(T) -> Reply) -> Reply {
    match r {
        Ok(v) => f(v),
        Err(e) => error_reply(&e),
    }
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.sessions.lock().expect("registry lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn session(&self, id: u32) -> Option<SharedSession> {
        self.slot(id).map(|s| s.session.clone())
    }

    fn slot(&self, id: u32) -> Option<Arc<Slot>> {
        self.sessions
            .lock()
            .expect("registry lock")
            .get(&id)
            .cloned()
    }

    pub fn create(&self, config: SessionConfig) -> Result<SessionInfo, SessionError> {
        let session = Session::new(config)?;
        let info = SessionInfo {
            session: self.next_id.fetch_add(1, Ordering::Relaxed) + 1,
            uavs: session.uav_count() as u32,
            active_cells: session.world().active_cells().len() as u32,
        };
        let slot = Slot {
            session: Arc::new(Mutex::new(session)),
            runner: Mutex::new(None),
        };
        self.sessions
            .lock()
            .expect("registry lock")
            .insert(info.session, Arc::new(slot));
        Ok(info)
    }

    /// Removes a session, stopping its real-time loop first.
    pub fn close(&self, id: u32) -> bool {
        let slot = self.sessions.lock().expect("registry lock").remove(&id);
        match slot {
            Some(slot) => {
                slot.runner.lock().expect("runner lock").take();
                true
            }
            None => false,
        }
    }

    /// Executes one request against the session named in the frame header.
    pub fn handle(&self, session: u32, request: Request) -> Reply {
        match request {
            Request::Ping => return Reply::Ack,
            Request::Create(text) => {
                return match SessionConfig::from_toml(&text) {
                    Ok(cfg) => reply_with(self.create(cfg), Reply::Created),
                    Err(e) => Reply::error(ErrorCode::InvalidConfig, e.to_string()),
                };
            }
            _ => {}
        }
        let Some(slot) = self.slot(session) else {
            return Reply::error(ErrorCode::NoSession, format!("no session {session}"));
        };
        let lock = || slot.session.lock().expect("session lock");
        match request {
            Request::Ping | Request::Create(_) => unreachable!(),
            Request::Close => {
                self.close(session);
                Reply::Ack
            }
            Request::SetControl { uav, input } => {
                reply_with(lock().set_control(uav, input), |_| Reply::Ack)
            }
            Request::Step { steps, with_frames } => reply_with(lock().step(steps as u64), |r| {
                Reply::Stepped(StepData {
                    time: r.time,
                    steps: r.steps,
                    states: r.states.iter().map(WireState::from).collect(),
                    frames: if with_frames {
                        r.frames.iter().map(WireFrame::from).collect()
                    } else {
                        Vec::new()
                    },
                })
            }),
            Request::HitlPose {
                uav,
                position,
                rotation,
                timestamp,
            } => reply_with(
                lock().set_hitl_pose(uav, position, rotation, timestamp),
                |_| Reply::Ack,
            ),
            Request::Sensor { uav, kind, source } => {
                let mut s = lock();
                let frame = match source {
                    SensorSource::Sample => s.sample_sensor(uav, kind).map(Some),
                    SensorSource::Latest => s.latest_frame(uav, kind),
                };
                reply_with(frame, |f| {
                    Reply::Sensor(f.map(|f| WireFrame {
                        uav,
                        kind: f.kind(),
                        timestamp: f.timestamp(),
                        payload: f.payload(),
                    }))
                })
            }
            Request::Status => Reply::Status(lock().status()),
            Request::RealtimeStart => {
                let mut runner = slot.runner.lock().expect("runner lock");
                if runner.as_ref().is_some_and(|r| !r.is_finished()) {
                    return Reply::Ack;
                }
                // A loop that ended on an error is reaped before restarting.
                if let Some(Err(e)) = runner.take().map(RealtimeRunner::stop) {
                    log::warn!("session {session}: previous real-time loop failed: {e}");
                }
                reply_with(RealtimeRunner::start(slot.session.clone()), |r| {
                    *runner = Some(r);
                    Reply::Ack
                })
            }
            Request::RealtimeStop => {
                let runner = slot.runner.lock().expect("runner lock").take();
                match runner.map(RealtimeRunner::stop) {
                    Some(Err(e)) => error_reply(&e),
                    _ => Reply::Ack,
                }
            }
        }
    }
}

fn send(w: &mut BufWriter<&TcpStream>, session: u32, reply: &Reply) -> io::Result<()> {
    reply.to_frame(session).write_to(w)
}

/// Serves one client until it disconnects or breaks framing. Sessions it
/// created are closed on exit.
pub fn serve_connection(stream: TcpStream, registry: &Registry) -> io::Result<()> {
    stream.set_nodelay(true)?;
    let mut reader = BufReader::new(&stream);
    let mut writer = BufWriter::new(&stream);
    let mut owned = Vec::new();
    let result = (|| loop {
        let frame = match Frame::read_from(&mut reader) {
            Ok(f) => f,
            Err(FrameError::Closed) => return Ok(()),
            Err(e @ (FrameError::TooLarge(_) | FrameError::Truncated)) => {
                // Best effort: the peer may already be gone.
                let _ = send(
                    &mut writer,
                    0,
                    &Reply::error(ErrorCode::Malformed, e.to_string()),
                );
                return Ok(());
            }
            Err(FrameError::Io(e)) => return Err(e),
        };
        if frame.version != VERSION {
            let msg = format!(
                "protocol version {} is not supported, expected {VERSION}",
                frame.version
            );
            send(
                &mut writer,
                frame.session,
                &Reply::error(ErrorCode::UnsupportedVersion, msg),
            )?;
            return Ok(());
        }
        match Request::decode(&frame) {
            Ok(Some(request)) => {
                let reply = registry.handle(frame.session, request);
                let session = match &reply {
                    Reply::Created(info) => {
                        owned.push(info.session);
                        info.session
                    }
                    _ => frame.session,
                };
                send(&mut writer, session, &reply)?;
            }
            Ok(None) => {
                let msg = format!("unknown message type {:#06x}", frame.kind);
                send(
                    &mut writer,
                    frame.session,
                    &Reply::error(ErrorCode::UnknownType, msg),
                )?;
            }
            Err(e) => {
                send(
                    &mut writer,
                    frame.session,
                    &Reply::error(ErrorCode::Malformed, e.to_string()),
                )?;
                return Ok(());
            }
        }
    })();
    for id in owned {
        registry.close(id);
    }
    result
}

pub struct Server {
    listener: TcpListener,
    registry: Arc<Registry>,
}

impl Server {
    pub fn bind(addr: impl ToSocketAddrs) -> io::Result<Self> {
        Ok(Self {
            listener: TcpListener::bind(addr)?,
            registry: Arc::new(Registry::new()),
        })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    pub fn registry(&self) -> Arc<Registry> {
        self.registry.clone()
    }

    /// Accepts connections until the process ends.
    pub fn run(self) -> io::Result<()> {
        self.accept_loop(&AtomicBool::new(false))
    }

    fn accept_loop(&self, stop: &AtomicBool) -> io::Result<()> {
        for stream in self.listener.incoming() {
            if stop.load(Ordering::Relaxed) {
                break;
            }
            let stream = match stream {
                Ok(s) => s,
                Err(e) => {
                    log::warn!("accept failed: {e}");
                    continue;
                }
            };
            let registry = self.registry.clone();
            let peer = stream.peer_addr().ok();
            thread::Builder::new()
                .name("connection".into())
                .spawn(move || {
                    log::debug!("connection from {peer:?}");
                    if let Err(e) = serve_connection(stream, &registry) {
                        log::warn!("connection {peer:?}: {e}");
                    }
                })?;
        }
        Ok(())
    }

    /// Runs the accept loop on a background thread.
    pub fn spawn(self) -> io::Result<ServerHandle> {
        let addr = self.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let registry = self.registry.clone();
        let thread = thread::Builder::new()
            .name("accept".into())
            .spawn(move || self.accept_loop(&flag))?;
        Ok(ServerHandle {
            addr,
            stop,
            thread: Some(thread),
            registry,
        })
    }
}

/// Stops accepting on drop. Open connections run until their peers leave.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<io::Result<()>>>,
    registry: Arc<Registry>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        // Wake the blocking accept.
        let _ = TcpStream::connect(self.addr);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
