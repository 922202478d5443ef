//! Virtual sensors: inertial and navigation samples computed from the
//! vehicle state, and ray-cast LiDAR and camera frames computed from the
//! world.
//!
//! World frame convention: x north, y west, z up.

mod camera;
mod export;
mod lidar;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dynamics::{ModelError, UavState};
use crate::worldgen::hash3;

pub use camera::{depth_image, label_image, render_camera, CameraConfig, DepthImage, LabelImage};
pub use export::{
    decode_point_cloud, encode_point_cloud, point_cloud_ascii, write_pfm, write_pgm, DecodedPoint,
    SensorFrame, SensorKind, POINT_RECORD_SIZE,
};
pub use lidar::{lidar_scan, LidarConfig, LidarPoint, PointCloud};

const EARTH_RADIUS: f64 = 6_378_137.0;

/// Additive Gaussian noise with a constant bias for one channel group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    /// Standard deviation, sensor units.
    pub sigma: f64,
    pub bias: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            sigma: 0.0,
            bias: 0.0,
            seed: 0,
        }
    }
}

impl NoiseSpec {
    pub const fn none() -> Self {
        Self {
            sigma: 0.0,
            bias: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self, field: &str) -> Result<(), ModelError> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(ModelError::invalid(
                format!("{field}.sigma"),
                format!("must be >= 0, got {}", self.sigma),
            ));
        }
        if !self.bias.is_finite() {
            return Err(ModelError::invalid(
                format!("{field}.bias"),
                "must be finite",
            ));
        }
        Ok(())
    }

    /// Noise source for sample `index`; the draws depend only on
    /// `(seed, index)`.
    pub fn stream(&self, index: u64) -> NoiseStream {
        self.channel_stream(0, index)
    }

    /// Like [`stream`](Self::stream), for one of several channel groups
    /// sharing a seed. Different channels give independent draws.
    pub fn channel_stream(&self, channel: u64, index: u64) -> NoiseStream {
        let key = hash3(
            self.seed,
            index,
            0x5e45_0a15 ^ channel.wrapping_mul(0x9e37_79b9_7f4a_7c15),
        );
        NoiseStream {
            spec: *self,
            rng: ChaCha8Rng::seed_from_u64(key),
        }
    }
}

pub struct NoiseStream {
    spec: NoiseSpec,
    rng: ChaCha8Rng,
}

impl NoiseStream {
    #[inline]
    pub fn sample(&mut self) -> f64 {
        if self.spec.sigma == 0.0 {
            return self.spec.bias;
        }
        let z: f64 = self.rng.sample(StandardNormal);
        self.spec.bias + self.spec.sigma * z
    }

    pub fn vector(&mut self) -> Vector3<f64> {
        let x = self.sample();
        let y = self.sample();
        let z = self.sample();
        Vector3::new(x, y, z)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImuNoise {
    /// m/s².
    pub accel: NoiseSpec,
    /// rad/s.
    pub gyro: NoiseSpec,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    /// Specific force, m/s², body frame.
    pub accel: Vector3<f64>,
    /// rad/s, body frame.
    pub gyro: Vector3<f64>,
}

/// Accelerometer and gyroscope reading. `acceleration` is the world-frame
/// r̈; the accelerometer reports `Rᵀ(r̈ − g)`.
pub fn imu_sample(
    s: &UavState,
    acceleration: &Vector3<f64>,
    gravity: &Vector3<f64>,
    noise: &ImuNoise,
    index: u64,
) -> ImuSample {
    let specific = s.rotation.transpose() * (acceleration - gravity);
    ImuSample {
        accel: specific + noise.accel.channel_stream(0, index).vector(),
        gyro: s.angular_velocity + noise.gyro.channel_stream(1, index).vector(),
    }
}

/// Geodetic anchor of the local world frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeoOrigin {
    pub latitude_deg: f64,
    pub longitude_deg: f64,
    /// m.
    pub altitude: f64,
}

impl Default for GeoOrigin {
    fn default() -> Self {
        Self {
            latitude_deg: 50.0766,
            longitude_deg: 14.4180,
            altitude: 200.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NavConfig {
    pub origin: GeoOrigin,
    /// Magnetic reference direction, world frame.
    pub north: [f64; 3],
    /// m.
    pub gnss: NoiseSpec,
    /// m.
    pub baro: NoiseSpec,
    pub mag: NoiseSpec,
}

impl Default for NavConfig {
    fn default() -> Self {
        Self {
            origin: GeoOrigin::default(),
            north: [1.0, 0.0, 0.0],
            gnss: NoiseSpec::none(),
            baro: NoiseSpec::none(),
            mag: NoiseSpec::none(),
        }
    }
}

impl NavConfig {
    pub fn validate(&self, field: &str) -> Result<(), ModelError> {
        self.gnss.validate(&format!("{field}.gnss"))?;
        self.baro.validate(&format!("{field}.baro"))?;
        self.mag.validate(&format!("{field}.mag"))?;
        let n = Vector3::from(self.north);
        if !(n.norm() > 1e-9 && n.iter().all(|v| v.is_finite())) {
            return Err(ModelError::invalid(
                format!("{field}.north"),
                "must be a finite non-zero vector",
            ));
        }
        let o = &self.origin;
        if !((-89.0..=89.0).contains(&o.latitude_deg)
            && o.longitude_deg.is_finite()
            && o.altitude.is_finite())
        {
            return Err(ModelError::invalid(
                format!("{field}.origin"),
                "latitude must be within ±89°",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GnssSample {
    /// Local world-frame position, m.
    pub position: Vector3<f64>,
    pub latitude_deg: f64,
    pub longitude_deg: f64,
    /// m.
    pub altitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaroSample {
    /// Height above the world origin, m.
    pub altitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MagSample {
    /// Reference direction in the body frame.
    pub field: Vector3<f64>,
}

/// GNSS, barometer and magnetometer readings for sample `index`.
pub fn nav_samples(
    s: &UavState,
    cfg: &NavConfig,
    index: u64,
) -> (GnssSample, BaroSample, MagSample) {
    let position = s.position + cfg.gnss.channel_stream(2, index).vector();
    let (latitude_deg, longitude_deg) = local_to_geodetic(&cfg.origin, &position);
    let gnss = GnssSample {
        position,
        latitude_deg,
        longitude_deg,
        altitude: cfg.origin.altitude + position.z,
    };
    let baro = BaroSample {
        altitude: s.position.z + cfg.baro.channel_stream(3, index).sample(),
    };
    let mag = MagSample {
        field: body_field(&s.rotation, &Vector3::from(cfg.north))
            + cfg.mag.channel_stream(4, index).vector(),
    };
    (gnss, baro, mag)
}

fn body_field(r: &Matrix3<f64>, north: &Vector3<f64>) -> Vector3<f64> {
    r.transpose() * north.normalize()
}

/// Flat-earth conversion around the origin: x north, y west.
pub fn local_to_geodetic(origin: &GeoOrigin, p: &Vector3<f64>) -> (f64, f64) {
    let lat0 = origin.latitude_deg.to_radians();
    let lat = lat0 + p.x / EARTH_RADIUS;
    let lon = origin.longitude_deg.to_radians() - p.y / (EARTH_RADIUS * lat0.cos());
    (lat.to_degrees(), lon.to_degrees())
}

/// Emits frames on a fixed period grid while the simulation advances in
/// fixed steps. Frame `k ≥ 1` carries timestamp `k · period` and is due at
/// the first step whose time reaches it.
#[derive(Debug, Clone, PartialEq)]
pub struct RateSchedule {
    period: f64,
    next: u64,
}

impl RateSchedule {
    pub fn new(rate: f64, dt: f64) -> Result<Self, ModelError> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(ModelError::invalid(
                "rate",
                format!("must be > 0, got {rate}"),
            ));
        }
        if rate > 1.0 / dt * (1.0 + 1e-9) {
            return Err(ModelError::invalid(
                "rate",
                format!("{rate} Hz exceeds the physics rate {} Hz", 1.0 / dt),
            ));
        }
        Ok(Self {
            period: 1.0 / rate,
            next: 1,
        })
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    /// Frames emitted so far.
    pub fn emitted(&self) -> u64 {
        self.next - 1
    }

    /// Called after the step that brought simulated time to `time`.
    /// Returns the frame index and timestamp if a frame is due.
    pub fn poll(&mut self, time: f64) -> Option<(u64, f64)> {
        let stamp = self.next as f64 * self.period;
        if time >= stamp - 1e-9 * self.period.max(1.0) {
            let k = self.next;
            self.next += 1;
            Some((k, stamp))
        } else {
            None
        }
    }
}
