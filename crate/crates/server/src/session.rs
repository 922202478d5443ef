//! A session owns one world and its vehicles and advances them in lockstep.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use rotorsim_core::control::{resolve, CascadeGains, ControlError, ControlInput, ControllerState};
use rotorsim_core::dynamics::{rk4_step, state_derivative, DynamicsError, UavModel, UavState};
use rotorsim_core::math::is_rotation;
use rotorsim_core::sensors::{
    imu_sample, lidar_scan, nav_samples, render_camera, CameraConfig, LidarConfig, NavConfig,
    NoiseSpec, RateSchedule, SensorFrame, SensorKind,
};
use rotorsim_core::worldgen::{WorldError, WorldState};
use rotorsim_core::{Matrix3, Vector3};
use thiserror::Error;

use crate::config::{ConfigError, ImuConfig, Mode, SessionConfig, UavConfig, UavKind};

pub type UavId = u32;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("no vehicle with id {0}")]
    NoSuchUav(UavId),
    #[error("vehicle {0} is externally posed and takes no commands")]
    HitlImmutable(UavId),
    #[error("vehicle {0} is simulated; its pose cannot be set externally")]
    NotHitl(UavId),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("operation not available in {0:?} mode")]
    BadMode(Mode),
    #[error("vehicle {uav} diverged: {source}")]
    Diverged { uav: UavId, source: DynamicsError },
    #[error("vehicle {uav} has no {kind} sensor")]
    NoSensor { uav: UavId, kind: &'static str },
}

impl From<ControlError> for SessionError {
    fn from(e: ControlError) -> Self {
        SessionError::InvalidInput(e.to_string())
    }
}

/// State of one vehicle after a step. HITL vehicles report their last
/// external pose with zero rates.
#[derive(Debug, Clone, PartialEq)]
pub struct UavSnapshot {
    pub id: UavId,
    pub kind: UavKind,
    pub state: UavState,
}

/// A sensor frame and the vehicle that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggedFrame {
    pub uav: UavId,
    pub frame: SensorFrame,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub time: f64,
    pub steps: u64,
    pub states: Vec<UavSnapshot>,
    pub frames: Vec<TaggedFrame>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Status {
    pub mode: Mode,
    /// Simulated time, s.
    pub sim_time: f64,
    /// Wall time since pacing started, s; zero when not pacing.
    pub wall_time: f64,
    /// How far simulated time trails the paced target, s.
    pub lag: f64,
    pub steps: u64,
    pub running: bool,
    pub active_cells: usize,
}

/// Sensor groups sharing one schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Group {
    Imu,
    Nav,
    Lidar,
    Camera,
}

impl Group {
    fn of(kind: SensorKind) -> Self {
        match kind {
            SensorKind::Imu => Group::Imu,
            SensorKind::Gnss | SensorKind::Baro | SensorKind::Mag => Group::Nav,
            SensorKind::Lidar => Group::Lidar,
            SensorKind::Depth | SensorKind::Label => Group::Camera,
        }
    }
}

#[derive(Debug, Clone)]
struct Sensors {
    imu: Option<(ImuConfig, RateSchedule)>,
    nav: Option<(NavConfig, RateSchedule)>,
    lidar: Option<(LidarConfig, RateSchedule)>,
    camera: Option<(CameraConfig, RateSchedule)>,
}

/// Gives each vehicle its own noise sequence when several share a config.
/// Vehicle 0 keeps the configured seed.
fn per_vehicle(spec: NoiseSpec, id: UavId) -> NoiseSpec {
    NoiseSpec {
        seed: spec.seed ^ (id as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
        ..spec
    }
}

impl Sensors {
    fn new(cfg: &UavConfig, id: UavId, dt: f64) -> Result<Self, SessionError> {
        let s = &cfg.sensors;
        let sched = |rate: f64| RateSchedule::new(rate, dt).map_err(ConfigError::from);
        let imu = match &s.imu {
            Some(c) => {
                let mut c = *c;
                c.noise.accel = per_vehicle(c.noise.accel, id);
                c.noise.gyro = per_vehicle(c.noise.gyro, id);
                Some((c, sched(c.rate)?))
            }
            None => None,
        };
        let nav = match &s.nav {
            Some(c) => {
                let mut n = c.nav();
                n.gnss = per_vehicle(n.gnss, id);
                n.baro = per_vehicle(n.baro, id);
                n.mag = per_vehicle(n.mag, id);
                Some((n, sched(c.rate)?))
            }
            None => None,
        };
        let lidar = match &s.lidar {
            Some(c) => {
                let c = LidarConfig {
                    noise: per_vehicle(c.noise, id),
                    ..c.clone()
                };
                let r = c.rate;
                Some((c, sched(r)?))
            }
            None => None,
        };
        let camera = match &s.camera {
            Some(c) => Some((*c, sched(c.rate)?)),
            None => None,
        };
        Ok(Self {
            imu,
            nav,
            lidar,
            camera,
        })
    }

    /// Groups due at `time`, with frame index and timestamp.
    fn due(&mut self, time: f64) -> Vec<(Group, u64, f64)> {
        let mut out = Vec::new();
        if let Some((_, s)) = &mut self.imu {
            out.extend(s.poll(time).map(|(k, t)| (Group::Imu, k, t)));
        }
        if let Some((_, s)) = &mut self.nav {
            out.extend(s.poll(time).map(|(k, t)| (Group::Nav, k, t)));
        }
        if let Some((_, s)) = &mut self.lidar {
            out.extend(s.poll(time).map(|(k, t)| (Group::Lidar, k, t)));
        }
        if let Some((_, s)) = &mut self.camera {
            out.extend(s.poll(time).map(|(k, t)| (Group::Camera, k, t)));
        }
        out
    }
}

#[derive(Debug, Clone)]
struct Vehicle {
    id: UavId,
    kind: UavKind,
    model: UavModel,
    gains: CascadeGains,
    state: UavState,
    controller: ControllerState,
    command: ControlInput,
    /// Desired motor speeds of the last step, held if the controller
    /// cannot produce new ones.
    desired: Vec<f64>,
    /// World-frame acceleration at the current state.
    acceleration: Vector3<f64>,
    sensors: Sensors,
    /// Timestamp of the last external pose.
    pose_stamp: f64,
    /// On-demand sensor requests served so far.
    requests: u64,
}

/// Result of advancing one vehicle, committed only if every vehicle
/// succeeds.
struct Advance {
    state: UavState,
    controller: ControllerState,
    desired: Vec<f64>,
    acceleration: Vector3<f64>,
}

impl Vehicle {
    fn advance(&self, dt: f64) -> Result<Advance, SessionError> {
        let mut controller = self.controller.clone();
        // A command the cascade cannot realise at this state (for example a
        // free-fall acceleration demand) holds the previous motor speeds.
        let desired = match resolve(
            &self.command,
            &self.state,
            &self.model,
            &self.gains,
            &mut controller,
            dt,
        ) {
            Ok(out) => out.motor_speeds,
            Err(_) => self.desired.clone(),
        };
        let state = rk4_step(&self.model, &self.state, &desired, dt).map_err(|source| {
            SessionError::Diverged {
                uav: self.id,
                source,
            }
        })?;
        let acceleration = state_derivative(&self.model, &state, &desired).acceleration;
        Ok(Advance {
            state,
            controller,
            desired,
            acceleration,
        })
    }

    fn sense(&self, world: &WorldState, group: Group, index: u64, stamp: f64) -> Vec<SensorFrame> {
        let s = &self.state;
        match group {
            Group::Imu => self
                .sensors
                .imu
                .iter()
                .map(|(c, _)| {
                    let sample = imu_sample(
                        s,
                        &self.acceleration,
                        &self.model.body().gravity,
                        &c.noise,
                        index,
                    );
                    SensorFrame::Imu {
                        timestamp: stamp,
                        sample,
                    }
                })
                .collect(),
            Group::Nav => match &self.sensors.nav {
                Some((c, _)) => {
                    let (gnss, baro, mag) = nav_samples(s, c, index);
                    vec![
                        SensorFrame::Gnss {
                            timestamp: stamp,
                            sample: gnss,
                        },
                        SensorFrame::Baro {
                            timestamp: stamp,
                            sample: baro,
                        },
                        SensorFrame::Mag {
                            timestamp: stamp,
                            sample: mag,
                        },
                    ]
                }
                None => Vec::new(),
            },
            Group::Lidar => self
                .sensors
                .lidar
                .iter()
                .map(|(c, _)| {
                    SensorFrame::PointCloud(lidar_scan(
                        world,
                        &s.position,
                        &s.rotation,
                        c,
                        stamp,
                        index,
                    ))
                })
                .collect(),
            Group::Camera => match &self.sensors.camera {
                Some((c, _)) => {
                    let (depth, label) = render_camera(world, &s.position, &s.rotation, c, stamp);
                    vec![SensorFrame::Depth(depth), SensorFrame::Label(label)]
                }
                None => Vec::new(),
            },
        }
    }

    fn has(&self, group: Group) -> bool {
        match group {
            Group::Imu => self.sensors.imu.is_some(),
            Group::Nav => self.sensors.nav.is_some(),
            Group::Lidar => self.sensors.lidar.is_some(),
            Group::Camera => self.sensors.camera.is_some(),
        }
    }

    fn snapshot(&self) -> UavSnapshot {
        UavSnapshot {
            id: self.id,
            kind: self.kind,
            state: self.state.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Pacing {
    started: Instant,
    sim_start: f64,
}

pub struct Session {
    config: SessionConfig,
    world: WorldState,
    vehicles: Vec<Vehicle>,
    steps: u64,
    pacing: Option<Pacing>,
    /// Most recent scheduled frame per vehicle and sensor kind.
    latest: BTreeMap<(UavId, SensorKind), SensorFrame>,
}

impl Session {
    pub fn new(config: SessionConfig) -> Result<Self, SessionError> {
        config.validate()?;
        let mut vehicles = Vec::with_capacity(config.uavs.len());
        for (i, u) in config.uavs.iter().enumerate() {
            let id = i as UavId;
            let model = u.airframe.model().map_err(ConfigError::from)?;
            let state =
                UavState::at_rest(Vector3::from(u.position), u.heading, model.motor_count());
            let acceleration = match u.kind {
                UavKind::Simulated => model.body().gravity,
                UavKind::Hitl => Vector3::zeros(),
            };
            vehicles.push(Vehicle {
                id,
                kind: u.kind,
                command: ControlInput::idle(model.motor_count()),
                desired: vec![0.0; model.motor_count()],
                model,
                gains: u.gains,
                state,
                controller: ControllerState::default(),
                acceleration,
                sensors: Sensors::new(u, id, config.dt)?,
                pose_stamp: 0.0,
                requests: 0,
            });
        }
        let world = WorldState::new(config.world.clone())?;
        let mut session = Self {
            config,
            world,
            vehicles,
            steps: 0,
            pacing: None,
            latest: BTreeMap::new(),
        };
        session.update_world()?;
        Ok(session)
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn time(&self) -> f64 {
        self.steps as f64 * self.config.dt
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn uav_count(&self) -> usize {
        self.vehicles.len()
    }

    pub fn model(&self, uav: UavId) -> Result<&UavModel, SessionError> {
        Ok(&self.vehicle(uav)?.model)
    }

    fn vehicle(&self, uav: UavId) -> Result<&Vehicle, SessionError> {
        self.vehicles
            .get(uav as usize)
            .ok_or(SessionError::NoSuchUav(uav))
    }

    fn vehicle_mut(&mut self, uav: UavId) -> Result<&mut Vehicle, SessionError> {
        self.vehicles
            .get_mut(uav as usize)
            .ok_or(SessionError::NoSuchUav(uav))
    }

    pub fn snapshot(&self, uav: UavId) -> Result<UavSnapshot, SessionError> {
        Ok(self.vehicle(uav)?.snapshot())
    }

    pub fn snapshots(&self) -> Vec<UavSnapshot> {
        self.vehicles.iter().map(Vehicle::snapshot).collect()
    }

    /// Latches `input`; it is applied at every step until replaced. A
    /// rejected command leaves the previous one in place.
    pub fn set_control(&mut self, uav: UavId, input: ControlInput) -> Result<(), SessionError> {
        let v = self.vehicle_mut(uav)?;
        if v.kind == UavKind::Hitl {
            return Err(SessionError::HitlImmutable(uav));
        }
        input.validate(v.model.motor_count())?;
        v.command = input;
        Ok(())
    }

    pub fn command(&self, uav: UavId) -> Result<&ControlInput, SessionError> {
        Ok(&self.vehicle(uav)?.command)
    }

    /// Adopts an external pose verbatim and moves the cell lifecycle with it.
    pub fn set_hitl_pose(
        &mut self,
        uav: UavId,
        position: Vector3<f64>,
        rotation: Matrix3<f64>,
        timestamp: f64,
    ) -> Result<(), SessionError> {
        let v = self.vehicle_mut(uav)?;
        if v.kind != UavKind::Hitl {
            return Err(SessionError::NotHitl(uav));
        }
        if !position.iter().chain([&timestamp]).all(|x| x.is_finite()) {
            return Err(SessionError::InvalidInput(
                "pose contains a non-finite value".into(),
            ));
        }
        if !is_rotation(&rotation) {
            return Err(SessionError::InvalidInput(
                "orientation is not a rotation matrix".into(),
            ));
        }
        v.state.position = position;
        v.state.rotation = rotation;
        v.pose_stamp = timestamp;
        self.update_world()
    }

    fn update_world(&mut self) -> Result<(), SessionError> {
        let observers: Vec<Vector3<f64>> = self.vehicles.iter().map(|v| v.state.position).collect();
        self.world
            .update_cells(&observers, self.config.spectator.map(Vector3::from))?;
        Ok(())
    }

    /// Advances `n` physics steps. Only available in stepped mode.
    pub fn step(&mut self, n: u64) -> Result<StepReport, SessionError> {
        if self.config.mode != Mode::Stepped {
            return Err(SessionError::BadMode(self.config.mode));
        }
        let mut frames = Vec::new();
        for _ in 0..n {
            frames.extend(self.advance()?);
        }
        Ok(StepReport {
            time: self.time(),
            steps: self.steps,
            states: self.snapshots(),
            frames,
        })
    }

    /// One physics step for every vehicle, then the cell lifecycle, then
    /// the sensors that fell due. The step is all-or-nothing: if any
    /// vehicle diverges, no state changes.
    pub(crate) fn advance(&mut self) -> Result<Vec<TaggedFrame>, SessionError> {
        let dt = self.config.dt;
        let results: Vec<Option<Result<Advance, SessionError>>> = self
            .vehicles
            .par_iter()
            .with_min_len(8)
            .map(|v| (v.kind == UavKind::Simulated).then(|| v.advance(dt)))
            .collect();
        let mut updates = Vec::with_capacity(results.len());
        for r in results {
            updates.push(r.transpose()?);
        }
        for (v, u) in self.vehicles.iter_mut().zip(updates) {
            if let Some(a) = u {
                v.state = a.state;
                v.controller = a.controller;
                v.desired = a.desired;
                v.acceleration = a.acceleration;
            }
        }
        self.steps += 1;
        self.update_world()?;

        let time = self.time();
        let jobs: Vec<(usize, Group, u64, f64)> = self
            .vehicles
            .iter_mut()
            .enumerate()
            .flat_map(|(i, v)| {
                v.sensors
                    .due(time)
                    .into_iter()
                    .map(move |(g, k, t)| (i, g, k, t))
            })
            .collect();
        if jobs.is_empty() {
            return Ok(Vec::new());
        }
        let (world, vehicles) = (&self.world, &self.vehicles);
        let frames: Vec<TaggedFrame> = jobs
            .par_iter()
            .flat_map_iter(|&(i, g, k, t)| {
                let v = &vehicles[i];
                v.sense(world, g, k, t)
                    .into_iter()
                    .map(move |frame| TaggedFrame { uav: v.id, frame })
            })
            .collect();
        for f in &frames {
            self.latest.insert((f.uav, f.frame.kind()), f.frame.clone());
        }
        Ok(frames)
    }

    /// Computes a frame of `kind` now, at the vehicle's current pose. HITL
    /// vehicles stamp it with their last pose time.
    pub fn sample_sensor(
        &mut self,
        uav: UavId,
        kind: SensorKind,
    ) -> Result<SensorFrame, SessionError> {
        let time = self.time();
        let group = Group::of(kind);
        let v = self.vehicle_mut(uav)?;
        if !v.has(group) {
            return Err(SessionError::NoSensor {
                uav,
                kind: kind.name(),
            });
        }
        // On-demand draws use indices disjoint from scheduled frames.
        let index = (1 << 63) | v.requests;
        v.requests += 1;
        let stamp = if v.kind == UavKind::Hitl {
            v.pose_stamp
        } else {
            time
        };
        let v = &self.vehicles[uav as usize];
        let frames = v.sense(&self.world, group, index, stamp);
        Ok(frames
            .into_iter()
            .find(|f| f.kind() == kind)
            .expect("group yields every kind it covers"))
    }

    /// The most recent scheduled frame of `kind`, if any was produced.
    pub fn latest_frame(
        &self,
        uav: UavId,
        kind: SensorKind,
    ) -> Result<Option<SensorFrame>, SessionError> {
        let v = self.vehicle(uav)?;
        if !v.has(Group::of(kind)) {
            return Err(SessionError::NoSensor {
                uav,
                kind: kind.name(),
            });
        }
        Ok(self.latest.get(&(uav, kind)).cloned())
    }

    pub fn status(&self) -> Status {
        let (wall_time, lag) = match self.pacing {
            Some(p) => {
                let wall = p.started.elapsed().as_secs_f64();
                let target = p.sim_start + wall * self.config.realtime_factor;
                (wall, (target - self.time()).max(0.0))
            }
            None => (0.0, 0.0),
        };
        Status {
            mode: self.config.mode,
            sim_time: self.time(),
            wall_time,
            lag,
            steps: self.steps,
            running: self.pacing.is_some(),
            active_cells: self.world.active_cells().len(),
        }
    }

    pub(crate) fn start_pacing(&mut self) -> Result<(), SessionError> {
        if self.config.mode != Mode::Realtime {
            return Err(SessionError::BadMode(self.config.mode));
        }
        if self.pacing.is_none() {
            self.pacing = Some(Pacing {
                started: Instant::now(),
                sim_start: self.time(),
            });
        }
        Ok(())
    }

    pub(crate) fn stop_pacing(&mut self) {
        self.pacing = None;
    }

    /// Wall-clock time until the next step is due, or zero if it is
    /// already due. `None` when not pacing.
    pub(crate) fn next_step_in(&self) -> Option<Duration> {
        let p = self.pacing?;
        let due = (self.time() + self.config.dt - p.sim_start) / self.config.realtime_factor;
        Some(Duration::from_secs_f64(
            (due - p.started.elapsed().as_secs_f64()).max(0.0),
        ))
    }
}
