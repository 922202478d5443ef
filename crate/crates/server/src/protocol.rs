//! Binary wire protocol. Every message is a frame:
//!
//! ```text
//! u32 payload length | u16 version | u16 type | u32 session | payload
//! ```
//!
//! All integers and floats are little-endian. `docs/PROTOCOL.md` lists the
//! payload layouts.

use std::io::{self, Read, Write};

use rotorsim_core::control::{ControlGroups, ControlInput, Modality};
use rotorsim_core::math::{quaternion_wxyz, rotation_from_wxyz};
use rotorsim_core::sensors::SensorKind;
use rotorsim_core::{Matrix3, Vector3};
use thiserror::Error;

use crate::config::{Mode, UavKind};
use crate::session::{Status, TaggedFrame, UavSnapshot};

pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 12;
/// Larger payloads are treated as a framing error.
pub const MAX_PAYLOAD: u32 = 256 << 20;
pub const DEFAULT_PORT: u16 = 47800;

pub mod kind {
    pub const PING: u16 = 0x0001;
    pub const CREATE: u16 = 0x0010;
    pub const CLOSE: u16 = 0x0011;
    pub const SET_CONTROL: u16 = 0x0020;
    pub const STEP: u16 = 0x0030;
    pub const HITL_POSE: u16 = 0x0040;
    pub const SENSOR: u16 = 0x0041;
    pub const STATUS: u16 = 0x0050;
    pub const REALTIME_START: u16 = 0x0060;
    pub const REALTIME_STOP: u16 = 0x0061;

    pub const ACK: u16 = 0x8000;
    pub const ERROR: u16 = 0x8001;
    pub const CREATED: u16 = 0x8010;
    pub const STEPPED: u16 = 0x8030;
    pub const SENSOR_DATA: u16 = 0x8041;
    pub const STATUS_DATA: u16 = 0x8050;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u16)]
pub enum ErrorCode {
    UnknownType = 1,
    Malformed = 2,
    NoSession = 3,
    HitlImmutable = 4,
    NotHitl = 5,
    InvalidConfig = 6,
    BadMode = 7,
    InvalidInput = 8,
    UnsupportedVersion = 9,
    BadUav = 10,
    Diverged = 11,
    NoSensor = 12,
}

impl ErrorCode {
    const ALL: [ErrorCode; 12] = [
        Self::UnknownType,
        Self::Malformed,
        Self::NoSession,
        Self::HitlImmutable,
        Self::NotHitl,
        Self::InvalidConfig,
        Self::BadMode,
        Self::InvalidInput,
        Self::UnsupportedVersion,
        Self::BadUav,
        Self::Diverged,
        Self::NoSensor,
    ];

    pub fn from_u16(v: u16) -> Option<Self> {
        Self::ALL.into_iter().find(|c| *c as u16 == v)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::UnknownType => "unknown-type",
            Self::Malformed => "malformed",
            Self::NoSession => "no-session",
            Self::HitlImmutable => "hitl-immutable",
            Self::NotHitl => "not-hitl",
            Self::InvalidConfig => "invalid-config",
            Self::BadMode => "bad-mode",
            Self::InvalidInput => "invalid-input",
            Self::UnsupportedVersion => "unsupported-version",
            Self::BadUav => "bad-uav",
            Self::Diverged => "diverged",
            Self::NoSensor => "no-sensor",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub version: u16,
    pub kind: u16,
    pub session: u32,
    pub payload: Vec<u8>,
}

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("connection closed")]
    Closed,
    #[error("payload length {0} exceeds the limit")]
    TooLarge(u32),
    #[error("stream ended inside a frame")]
    Truncated,
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Frame {
    pub fn new(kind: u16, session: u32, payload: Vec<u8>) -> Self {
        Self {
            version: VERSION,
            kind,
            session,
            payload,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        out.extend((self.payload.len() as u32).to_le_bytes());
        out.extend(self.version.to_le_bytes());
        out.extend(self.kind.to_le_bytes());
        out.extend(self.session.to_le_bytes());
        out.extend(&self.payload);
        out
    }

    pub fn write_to(&self, mut w: impl Write) -> io::Result<()> {
        w.write_all(&self.encode())?;
        w.flush()
    }

    /// Reads one frame. A clean end of stream before the first byte is
    /// [`FrameError::Closed`].
    pub fn read_from(mut r: impl Read) -> Result<Self, FrameError> {
        let mut header = [0u8; HEADER_LEN];
        let mut got = 0;
        while got < HEADER_LEN {
            match r.read(&mut header[got..]) {
                Ok(0) if got == 0 => return Err(FrameError::Closed),
                Ok(0) => return Err(FrameError::Truncated),
                Ok(n) => got += n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        let len = u32::from_le_bytes(header[0..4].try_into().unwrap());
        if len > MAX_PAYLOAD {
            return Err(FrameError::TooLarge(len));
        }
        let mut payload = vec![0u8; len as usize];
        r.read_exact(&mut payload).map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => FrameError::Truncated,
            _ => FrameError::Io(e),
        })?;
        Ok(Self {
            version: u16::from_le_bytes(header[4..6].try_into().unwrap()),
            kind: u16::from_le_bytes(header[6..8].try_into().unwrap()),
            session: u32::from_le_bytes(header[8..12].try_into().unwrap()),
            payload,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed payload: {0}")]
pub struct DecodeError(pub String);

/// Little-endian payload builder.
#[derive(Debug, Default)]
pub struct Writer(pub Vec<u8>);

impl Writer {
    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.0.push(v);
        self
    }
    pub fn u16(&mut self, v: u16) -> &mut Self {
        self.0.extend(v.to_le_bytes());
        self
    }
    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.0.extend(v.to_le_bytes());
        self
    }
    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.0.extend(v.to_le_bytes());
        self
    }
    pub fn f64(&mut self, v: f64) -> &mut Self {
        self.0.extend(v.to_le_bytes());
        self
    }
    pub fn f64s(&mut self, vs: &[f64]) -> &mut Self {
        for v in vs {
            self.f64(*v);
        }
        self
    }
    pub fn bytes(&mut self, b: &[u8]) -> &mut Self {
        self.0.extend_from_slice(b);
        self
    }
}

/// Little-endian payload cursor.
pub struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, at: 0 }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        let end = self
            .at
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| {
                DecodeError(format!(
                    "needs {n} bytes at offset {}, payload has {}",
                    self.at,
                    self.buf.len()
                ))
            })?;
        let out = &self.buf[self.at..end];
        self.at = end;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], DecodeError> {
        Ok(self.take(N)?.try_into().unwrap())
    }
    pub fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }
    pub fn u16(&mut self) -> Result<u16, DecodeError> {
        self.array().map(u16::from_le_bytes)
    }
    pub fn u32(&mut self) -> Result<u32, DecodeError> {
        self.array().map(u32::from_le_bytes)
    }
    pub fn u64(&mut self) -> Result<u64, DecodeError> {
        self.array().map(u64::from_le_bytes)
    }
    pub fn f64(&mut self) -> Result<f64, DecodeError> {
        self.array().map(f64::from_le_bytes)
    }
    pub fn vec3(&mut self) -> Result<Vector3<f64>, DecodeError> {
        Ok(Vector3::new(self.f64()?, self.f64()?, self.f64()?))
    }
    /// Nine values, row-major.
    pub fn matrix3(&mut self) -> Result<Matrix3<f64>, DecodeError> {
        let mut m = [0.0; 9];
        for v in &mut m {
            *v = self.f64()?;
        }
        Ok(Matrix3::from_row_slice(&m))
    }
    pub fn rest(&mut self) -> &'a [u8] {
        let out = &self.buf[self.at..];
        self.at = self.buf.len();
        out
    }

    /// Fails if bytes are left over.
    pub fn finish(&self) -> Result<(), DecodeError> {
        if self.at == self.buf.len() {
            Ok(())
        } else {
            Err(DecodeError(format!(
                "{} trailing bytes",
                self.buf.len() - self.at
            )))
        }
    }
}

/// Where a sensor reply comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SensorSource {
    /// Computed at the vehicle's current pose.
    Sample = 0,
    /// Most recent frame from the vehicle's schedule.
    Latest = 1,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Request {
    Ping,
    /// Session configuration as TOML text.
    Create(String),
    Close,
    SetControl {
        uav: u32,
        input: ControlInput,
    },
    Step {
        steps: u32,
        with_frames: bool,
    },
    HitlPose {
        uav: u32,
        position: Vector3<f64>,
        rotation: Matrix3<f64>,
        timestamp: f64,
    },
    Sensor {
        uav: u32,
        kind: SensorKind,
        source: SensorSource,
    },
    Status,
    RealtimeStart,
    RealtimeStop,
}

fn row_major(m: &Matrix3<f64>) -> [f64; 9] {
    std::array::from_fn(|k| m[(k / 3, k % 3)])
}

pub fn encode_control(w: &mut Writer, input: &ControlInput) {
    w.u8(input.modality().code());
    match input {
        ControlInput::ActuatorThrottles(t) => {
            w.u16(t.len() as u16).f64s(t);
        }
        ControlInput::ControlGroups(g) => {
            w.f64s(&[g.roll, g.pitch, g.yaw, g.collective]);
        }
        ControlInput::RateThrottle {
            rate: v,
            throttle: s,
        } => {
            w.f64s(v.as_slice()).f64(*s);
        }
        ControlInput::AttitudeThrottle { rotation, throttle } => {
            w.f64s(&row_major(rotation)).f64(*throttle);
        }
        ControlInput::AccelHeading {
            acceleration: v,
            heading: s,
        }
        | ControlInput::AccelHeadingRate {
            acceleration: v,
            heading_rate: s,
        }
        | ControlInput::VelocityHeading {
            velocity: v,
            heading: s,
        }
        | ControlInput::VelocityHeadingRate {
            velocity: v,
            heading_rate: s,
        }
        | ControlInput::PositionHeading {
            position: v,
            heading: s,
        } => {
            w.f64s(v.as_slice()).f64(*s);
        }
    }
}

pub fn decode_control(r: &mut Reader) -> Result<ControlInput, DecodeError> {
    let code = r.u8()?;
    let modality =
        Modality::from_code(code).ok_or_else(|| DecodeError(format!("unknown modality {code}")))?;
    Ok(match modality {
        Modality::ActuatorThrottles => {
            let n = r.u16()?;
            ControlInput::ActuatorThrottles((0..n).map(|_| r.f64()).collect::<Result<_, _>>()?)
        }
        Modality::ControlGroups => ControlInput::ControlGroups(ControlGroups {
            roll: r.f64()?,
            pitch: r.f64()?,
            yaw: r.f64()?,
            collective: r.f64()?,
        }),
        Modality::RateThrottle => ControlInput::RateThrottle {
            rate: r.vec3()?,
            throttle: r.f64()?,
        },
        Modality::AttitudeThrottle => {
            let rotation = r.matrix3()?;
            ControlInput::AttitudeThrottle {
                rotation,
                throttle: r.f64()?,
            }
        }
        Modality::AccelHeading => ControlInput::AccelHeading {
            acceleration: r.vec3()?,
            heading: r.f64()?,
        },
        Modality::AccelHeadingRate => ControlInput::AccelHeadingRate {
            acceleration: r.vec3()?,
            heading_rate: r.f64()?,
        },
        Modality::VelocityHeading => ControlInput::VelocityHeading {
            velocity: r.vec3()?,
            heading: r.f64()?,
        },
        Modality::VelocityHeadingRate => ControlInput::VelocityHeadingRate {
            velocity: r.vec3()?,
            heading_rate: r.f64()?,
        },
        Modality::PositionHeading => ControlInput::PositionHeading {
            position: r.vec3()?,
            heading: r.f64()?,
        },
    })
}

impl Request {
    pub fn kind(&self) -> u16 {
        match self {
            Request::Ping => kind::PING,
            Request::Create(_) => kind::CREATE,
            Request::Close => kind::CLOSE,
            Request::SetControl { .. } => kind::SET_CONTROL,
            Request::Step { .. } => kind::STEP,
            Request::HitlPose { .. } => kind::HITL_POSE,
            Request::Sensor { .. } => kind::SENSOR,
            Request::Status => kind::STATUS,
            Request::RealtimeStart => kind::REALTIME_START,
            Request::RealtimeStop => kind::REALTIME_STOP,
        }
    }

    pub fn payload(&self) -> Vec<u8> {
        let mut w = Writer::default();
        match self {
            Request::Ping
            | Request::Close
            | Request::Status
            | Request::RealtimeStart
            | Request::RealtimeStop => {}
            Request::Create(text) => {
                w.bytes(text.as_bytes());
            }
            Request::SetControl { uav, input } => {
                w.u32(*uav);
                encode_control(&mut w, input);
            }
            Request::Step { steps, with_frames } => {
                w.u32(*steps).u8(u8::from(*with_frames));
            }
            Request::HitlPose {
                uav,
                position,
                rotation,
                timestamp,
            } => {
                w.u32(*uav)
                    .f64s(position.as_slice())
                    .f64s(&row_major(rotation))
                    .f64(*timestamp);
            }
            Request::Sensor { uav, kind, source } => {
                w.u32(*uav).u8(kind.code()).u8(*source as u8);
            }
        }
        w.0
    }

    pub fn to_frame(&self, session: u32) -> Frame {
        Frame::new(self.kind(), session, self.payload())
    }

    /// `Ok(None)` for a message type this version does not know.
    pub fn decode(frame: &Frame) -> Result<Option<Self>, DecodeError> {
        let mut r = Reader::new(&frame.payload);
        let req = match frame.kind {
            kind::PING => Request::Ping,
            kind::CREATE => {
                let text = std::str::from_utf8(r.rest())
                    .map_err(|e| DecodeError(format!("config is not UTF-8: {e}")))?;
                Request::Create(text.to_string())
            }
            kind::CLOSE => Request::Close,
            kind::SET_CONTROL => Request::SetControl {
                uav: r.u32()?,
                input: decode_control(&mut r)?,
            },
            kind::STEP => {
                let steps = r.u32()?;
                let flag = r.u8()?;
                if flag > 1 {
                    return Err(DecodeError(format!(
                        "frame flag must be 0 or 1, got {flag}"
                    )));
                }
                Request::Step {
                    steps,
                    with_frames: flag == 1,
                }
            }
            kind::HITL_POSE => {
                let uav = r.u32()?;
                let position = r.vec3()?;
                let rotation = r.matrix3()?;
                Request::HitlPose {
                    uav,
                    position,
                    rotation,
                    timestamp: r.f64()?,
                }
            }
            kind::SENSOR => {
                let uav = r.u32()?;
                let code = r.u8()?;
                let kind = SensorKind::from_code(code)
                    .ok_or_else(|| DecodeError(format!("unknown sensor kind {code}")))?;
                let source = match r.u8()? {
                    0 => SensorSource::Sample,
                    1 => SensorSource::Latest,
                    s => return Err(DecodeError(format!("unknown sensor source {s}"))),
                };
                Request::Sensor { uav, kind, source }
            }
            kind::STATUS => Request::Status,
            kind::REALTIME_START => Request::RealtimeStart,
            kind::REALTIME_STOP => Request::RealtimeStop,
            _ => return Ok(None),
        };
        r.finish()?;
        Ok(Some(req))
    }
}

/// Vehicle state as carried on the wire.
#[derive(Debug, Clone, PartialEq)]
pub struct WireState {
    pub uav: u32,
    pub kind: UavKind,
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    /// w, x, y, z.
    pub quaternion: [f64; 4],
    pub angular_velocity: Vector3<f64>,
    pub motor_speeds: Vec<f64>,
}

impl WireState {
    pub fn rotation(&self) -> Matrix3<f64> {
        rotation_from_wxyz(self.quaternion)
    }
}

impl From<&UavSnapshot> for WireState {
    fn from(s: &UavSnapshot) -> Self {
        Self {
            uav: s.id,
            kind: s.kind,
            position: s.state.position,
            velocity: s.state.velocity,
            quaternion: quaternion_wxyz(&s.state.rotation),
            angular_velocity: s.state.angular_velocity,
            motor_speeds: s.state.motor_speeds.clone(),
        }
    }
}

/// Sensor frame as carried on the wire; `payload` is the byte layout of
/// [`rotorsim_core::sensors::SensorFrame::payload`].
#[derive(Debug, Clone, PartialEq)]
pub struct WireFrame {
    pub uav: u32,
    pub kind: SensorKind,
    pub timestamp: f64,
    pub payload: Vec<u8>,
}

impl From<&TaggedFrame> for WireFrame {
    fn from(f: &TaggedFrame) -> Self {
        Self {
            uav: f.uav,
            kind: f.frame.kind(),
            timestamp: f.frame.timestamp(),
            payload: f.frame.payload(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SessionInfo {
    pub session: u32,
    pub uavs: u32,
    pub active_cells: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepData {
    pub time: f64,
    pub steps: u64,
    pub states: Vec<WireState>,
    /// Empty unless frames were requested.
    pub frames: Vec<WireFrame>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Reply {
    Ack,
    Error { code: ErrorCode, message: String },
    Created(SessionInfo),
    Stepped(StepData),
    Sensor(Option<WireFrame>),
    Status(Status),
}

fn write_frame_record(w: &mut Writer, f: &WireFrame) {
    w.u32(f.uav)
        .u8(f.kind.code())
        .f64(f.timestamp)
        .u32(f.payload.len() as u32)
        .bytes(&f.payload);
}

fn read_frame_record(r: &mut Reader) -> Result<WireFrame, DecodeError> {
    let uav = r.u32()?;
    let code = r.u8()?;
    let kind = SensorKind::from_code(code)
        .ok_or_else(|| DecodeError(format!("unknown sensor kind {code}")))?;
    let timestamp = r.f64()?;
    let len = r.u32()? as usize;
    Ok(WireFrame {
        uav,
        kind,
        timestamp,
        payload: r.take(len)?.to_vec(),
    })
}

fn mode_code(m: Mode) -> u8 {
    match m {
        Mode::Stepped => 0,
        Mode::Realtime => 1,
    }
}

impl Reply {
    pub fn error(code: ErrorCode, message: impl Into<String>) -> Self {
        Reply::Error {
            code,
            message: message.into(),
        }
    }

    pub fn kind(&self) -> u16 {
        match self {
            Reply::Ack => kind::ACK,
            Reply::Error { .. } => kind::ERROR,
            Reply::Created(_) => kind::CREATED,
            Reply::Stepped(_) => kind::STEPPED,
            Reply::Sensor(_) => kind::SENSOR_DATA,
            Reply::Status(_) => kind::STATUS_DATA,
        }
    }

    pub fn payload(&self) -> Vec<u8> {
        let mut w = Writer::default();
        match self {
            Reply::Ack => {}
            Reply::Error { code, message } => {
                w.u16(*code as u16).bytes(message.as_bytes());
            }
            Reply::Created(c) => {
                w.u32(c.session).u32(c.uavs).u32(c.active_cells);
            }
            Reply::Stepped(StepData {
                time,
                steps,
                states,
                frames,
            }) => {
                w.f64(*time).u64(*steps).u32(states.len() as u32);
                for s in states {
                    w.u32(s.uav).u8(u8::from(s.kind == UavKind::Hitl));
                    w.f64s(s.position.as_slice())
                        .f64s(s.velocity.as_slice())
                        .f64s(&s.quaternion);
                    w.f64s(s.angular_velocity.as_slice())
                        .u16(s.motor_speeds.len() as u16)
                        .f64s(&s.motor_speeds);
                }
                w.u32(frames.len() as u32);
                for f in frames {
                    write_frame_record(&mut w, f);
                }
            }
            Reply::Sensor(frame) => match frame {
                Some(f) => {
                    w.u8(1);
                    write_frame_record(&mut w, f);
                }
                None => {
                    w.u8(0);
                }
            },
            Reply::Status(s) => {
                w.u8(mode_code(s.mode)).u8(u8::from(s.running));
                w.f64(s.sim_time)
                    .f64(s.wall_time)
                    .f64(s.lag)
                    .u64(s.steps)
                    .u32(s.active_cells as u32);
            }
        }
        w.0
    }

    pub fn to_frame(&self, session: u32) -> Frame {
        Frame::new(self.kind(), session, self.payload())
    }

    pub fn decode(frame: &Frame) -> Result<Self, DecodeError> {
        let mut r = Reader::new(&frame.payload);
        let reply = match frame.kind {
            kind::ACK => Reply::Ack,
            kind::ERROR => {
                let raw = r.u16()?;
                let code = ErrorCode::from_u16(raw)
                    .ok_or_else(|| DecodeError(format!("unknown error code {raw}")))?;
                let message = String::from_utf8_lossy(r.rest()).into_owned();
                Reply::Error { code, message }
            }
            kind::CREATED => Reply::Created(SessionInfo {
                session: r.u32()?,
                uavs: r.u32()?,
                active_cells: r.u32()?,
            }),
            kind::STEPPED => {
                let time = r.f64()?;
                let steps = r.u64()?;
                let n = r.u32()?;
                let mut states = Vec::new();
                for _ in 0..n {
                    let uav = r.u32()?;
                    let kind = if r.u8()? == 1 {
                        UavKind::Hitl
                    } else {
                        UavKind::Simulated
                    };
                    let position = r.vec3()?;
                    let velocity = r.vec3()?;
                    let quaternion = [r.f64()?, r.f64()?, r.f64()?, r.f64()?];
                    let angular_velocity = r.vec3()?;
                    let m = r.u16()?;
                    let motor_speeds = (0..m).map(|_| r.f64()).collect::<Result<_, _>>()?;
                    states.push(WireState {
                        uav,
                        kind,
                        position,
                        velocity,
                        quaternion,
                        angular_velocity,
                        motor_speeds,
                    });
                }
                let n = r.u32()?;
                let frames = (0..n)
                    .map(|_| read_frame_record(&mut r))
                    .collect::<Result<_, _>>()?;
                Reply::Stepped(StepData {
                    time,
                    steps,
                    states,
                    frames,
                })
            }
            kind::SENSOR_DATA => match r.u8()? {
                0 => Reply::Sensor(None),
                _ => Reply::Sensor(Some(read_frame_record(&mut r)?)),
            },
            kind::STATUS_DATA => {
                let mode = if r.u8()? == 1 {
                    Mode::Realtime
                } else {
                    Mode::Stepped
                };
                let running = r.u8()? == 1;
                Reply::Status(Status {
                    mode,
                    running,
                    sim_time: r.f64()?,
                    wall_time: r.f64()?,
                    lag: r.f64()?,
                    steps: r.u64()?,
                    active_cells: r.u32()? as usize,
                })
            }
            other => return Err(DecodeError(format!("unknown reply type {other:#06x}"))),
        };
        r.finish()?;
        Ok(reply)
    }
}
