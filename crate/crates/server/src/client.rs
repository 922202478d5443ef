//! Blocking client for the wire protocol.

use std::io::{self, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};

use rotorsim_core::control::ControlInput;
use rotorsim_core::sensors::SensorKind;
use rotorsim_core::{Matrix3, Vector3};
use thiserror::Error;

use crate::config::SessionConfig;
use crate::protocol::{
    DecodeError, ErrorCode, Frame, FrameError, Reply, Request, SensorSource, SessionInfo, StepData,
    WireFrame,
};
use crate::session::Status;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error("server error {} ({}): {message}", *code as u16, code.name())]
    Server { code: ErrorCode, message: String },
    #[error("unexpected reply type {0:#06x}")]
    Unexpected(u16),
}

impl ClientError {
    pub fn code(&self) -> Option<ErrorCode> {
        match self {
            ClientError::Server { code, .. } => Some(*code),
            _ => None,
        }
    }
}

pub struct Client {
    stream: TcpStream,
    reader: BufReader<TcpStream>,
    session: u32,
}

impl Client {
    pub fn connect(addr: impl ToSocketAddrs) -> io::Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let reader = BufReader::new(stream.try_clone()?);
        Ok(Self {
            stream,
            reader,
            session: 0,
        })
    }

    /// Session id placed in request headers.
    pub fn session(&self) -> u32 {
        self.session
    }

    pub fn set_session(&mut self, id: u32) {
        self.session = id;
    }

    /// Writes raw bytes to the socket.
    pub fn send_raw(&mut self, bytes: &[u8]) -> io::Result<()> {
        self.stream.write_all(bytes)
    }

    pub fn read_frame(&mut self) -> Result<Frame, FrameError> {
        Frame::read_from(&mut self.reader)
    }

    /// Sends a request and returns the reply; error replies become
    /// [`ClientError::Server`].
    pub fn request(&mut self, request: &Request) -> Result<Reply, ClientError> {
        request.to_frame(self.session).write_to(&mut self.stream)?;
        match Reply::decode(&self.read_frame()?)? {
            Reply::Error { code, message } => Err(ClientError::Server { code, message }),
            r => Ok(r),
        }
    }

    fn ack(&mut self, request: &Request) -> Result<(), ClientError> {
        match self.request(request)? {
            Reply::Ack => Ok(()),
            r => Err(ClientError::Unexpected(r.kind())),
        }
    }

    pub fn ping(&mut self) -> Result<(), ClientError> {
        self.ack(&Request::Ping)
    }

    /// Creates a session and makes it the current one.
    pub fn create_toml(&mut self, text: &str) -> Result<SessionInfo, ClientError> {
        match self.request(&Request::Create(text.to_string()))? {
            Reply::Created(info) => {
                self.session = info.session;
                Ok(info)
            }
            r => Err(ClientError::Unexpected(r.kind())),
        }
    }

    pub fn create(&mut self, config: &SessionConfig) -> Result<SessionInfo, ClientError> {
        self.create_toml(&config.to_toml())
    }

    pub fn close(&mut self) -> Result<(), ClientError> {
        self.ack(&Request::Close)
    }

    pub fn set_control(&mut self, uav: u32, input: ControlInput) -> Result<(), ClientError> {
        self.ack(&Request::SetControl { uav, input })
    }

    pub fn step(&mut self, steps: u32, with_frames: bool) -> Result<StepData, ClientError> {
        match self.request(&Request::Step { steps, with_frames })? {
            Reply::Stepped(d) => Ok(d),
            r => Err(ClientError::Unexpected(r.kind())),
        }
    }

    pub fn set_hitl_pose(
        &mut self,
        uav: u32,
        position: Vector3<f64>,
        rotation: Matrix3<f64>,
        timestamp: f64,
    ) -> Result<(), ClientError> {
        self.ack(&Request::HitlPose {
            uav,
            position,
            rotation,
            timestamp,
        })
    }

    pub fn sensor(
        &mut self,
        uav: u32,
        kind: SensorKind,
        source: SensorSource,
    ) -> Result<Option<WireFrame>, ClientError> {
        match self.request(&Request::Sensor { uav, kind, source })? {
            Reply::Sensor(f) => Ok(f),
            r => Err(ClientError::Unexpected(r.kind())),
        }
    }

    pub fn status(&mut self) -> Result<Status, ClientError> {
        match self.request(&Request::Status)? {
            Reply::Status(s) => Ok(s),
            r => Err(ClientError::Unexpected(r.kind())),
        }
    }

    pub fn realtime_start(&mut self) -> Result<(), ClientError> {
        self.ack(&Request::RealtimeStart)
    }

    pub fn realtime_stop(&mut self) -> Result<(), ClientError> {
        self.ack(&Request::RealtimeStop)
    }
}
