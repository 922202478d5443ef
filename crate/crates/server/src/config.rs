//! Declarative session configuration, read from TOML.

use std::fmt;

use rotorsim_core::control::CascadeGains;
use rotorsim_core::dynamics::{
    AllocationModel, ModelError, PropellerParams, RigidBodyModel, UavModel, DEFAULT_DT,
    DEFAULT_GRAVITY,
};
use rotorsim_core::sensors::{
    CameraConfig, GeoOrigin, ImuNoise, LidarConfig, NavConfig, NoiseSpec,
};
use rotorsim_core::worldgen::TerrainParams;
use rotorsim_core::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Stepped,
    Realtime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub mode: Mode,
    /// Simulated seconds per wall-clock second in real-time mode.
    pub realtime_factor: f64,
    /// Physics step, s.
    pub dt: f64,
    pub world: TerrainParams,
    /// Extra observer for the cell lifecycle, world frame.
    pub spectator: Option<[f64; 3]>,
    pub uavs: Vec<UavConfig>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Stepped,
            realtime_factor: 1.0,
            dt: DEFAULT_DT,
            world: TerrainParams::default(),
            spectator: None,
            uavs: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UavKind {
    #[default]
    Simulated,
    /// Pose supplied externally; no dynamics.
    Hitl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UavConfig {
    pub kind: UavKind,
    /// m, world frame.
    pub position: [f64; 3],
    /// rad.
    pub heading: f64,
    pub airframe: AirframeConfig,
    pub gains: CascadeGains,
    pub sensors: SensorsConfig,
}

impl Default for UavConfig {
    fn default() -> Self {
        Self {
            kind: UavKind::Simulated,
            position: [0.0; 3],
            heading: 0.0,
            airframe: AirframeConfig::default(),
            gains: CascadeGains::default(),
            sensors: SensorsConfig::default(),
        }
    }
}

/// Physical description of a vehicle. Without `allocation_rows` the
/// vehicle is a quadrotor in X configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AirframeConfig {
    /// kg.
    pub mass: f64,
    /// Principal moments, kg·m².
    pub inertia: [f64; 3],
    /// Products of inertia (xy, xz, yz), kg·m².
    pub inertia_products: [f64; 3],
    /// m/s², world frame.
    pub gravity: [f64; 3],
    /// Distance between opposite rotors, m.
    pub arm_diagonal: f64,
    pub propellers: PropellerParams,
    /// Thrust, roll, pitch and yaw rows of a custom allocation matrix.
    pub allocation_rows: Option<[Vec<f64>; 4]>,
}

impl Default for AirframeConfig {
    fn default() -> Self {
        let body = RigidBodyModel::default();
        Self {
            mass: body.mass,
            inertia: [
                body.inertia[(0, 0)],
                body.inertia[(1, 1)],
                body.inertia[(2, 2)],
            ],
            inertia_products: [0.0; 3],
            gravity: DEFAULT_GRAVITY.into(),
            arm_diagonal: 0.4,
            propellers: PropellerParams::default(),
            allocation_rows: None,
        }
    }
}

impl AirframeConfig {
    pub fn model(&self) -> Result<UavModel, ModelError> {
        let [jx, jy, jz] = self.inertia;
        let [xy, xz, yz] = self.inertia_products;
        let body = RigidBodyModel {
            mass: self.mass,
            inertia: Matrix3::new(jx, xy, xz, xy, jy, yz, xz, yz, jz),
            gravity: Vector3::from(self.gravity),
        };
        let allocation = match &self.allocation_rows {
            None => AllocationModel::quad_x(self.arm_diagonal, self.propellers.torque_constant),
            Some(rows) => AllocationModel::from_rows(rows.clone(), self.arm_diagonal),
        };
        let allocation = allocation.map_err(config_field)?;
        UavModel::new(self.propellers, allocation, body).map_err(config_field)
    }
}

/// Renames core model fields to where they sit in [`AirframeConfig`].
fn config_field(e: ModelError) -> ModelError {
    let field = match e.field.as_str() {
        "allocation.matrix" => "allocation_rows".to_string(),
        "allocation.arm_diagonal" => "arm_diagonal".to_string(),
        f => f.strip_prefix("body.").unwrap_or(f).to_string(),
    };
    ModelError {
        field,
        reason: e.reason,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImuConfig {
    /// Hz.
    pub rate: f64,
    pub noise: ImuNoise,
}

impl Default for ImuConfig {
    fn default() -> Self {
        Self {
            rate: 250.0,
            noise: ImuNoise::default(),
        }
    }
}

/// GNSS, barometer and magnetometer, sampled together.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NavSensorConfig {
    /// Hz.
    pub rate: f64,
    pub origin: GeoOrigin,
    /// Magnetic reference direction, world frame.
    pub north: [f64; 3],
    /// m.
    pub gnss: NoiseSpec,
    /// m.
    pub baro: NoiseSpec,
    pub mag: NoiseSpec,
}

impl Default for NavSensorConfig {
    fn default() -> Self {
        Self::from_nav(10.0, NavConfig::default())
    }
}

impl NavSensorConfig {
    pub fn from_nav(rate: f64, n: NavConfig) -> Self {
        Self {
            rate,
            origin: n.origin,
            north: n.north,
            gnss: n.gnss,
            baro: n.baro,
            mag: n.mag,
        }
    }

    pub fn nav(&self) -> NavConfig {
        NavConfig {
            origin: self.origin,
            north: self.north,
            gnss: self.gnss,
            baro: self.baro,
            mag: self.mag,
        }
    }
}

/// Sensors mounted at the vehicle origin, aligned with the body frame.
/// Absent entries are disabled.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorsConfig {
    pub imu: Option<ImuConfig>,
    pub nav: Option<NavSensorConfig>,
    pub lidar: Option<LidarConfig>,
    pub camera: Option<CameraConfig>,
}

/// Every problem found in a configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub issues: Vec<ModelError>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lines: Vec<String> = self.issues.iter().map(|e| e.to_string()).collect();
        write!(f, "invalid configuration: {}", lines.join("; "))
    }
}

impl std::error::Error for ConfigError {}

impl From<ModelError> for ConfigError {
    fn from(e: ModelError) -> Self {
        Self { issues: vec![e] }
    }
}

fn prefixed(prefix: &str, e: ModelError) -> ModelError {
    ModelError {
        field: format!("{prefix}.{}", e.field),
        reason: e.reason,
    }
}

impl SessionConfig {
    /// Parses TOML, reporting the path of the offending field on failure.
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let de = toml::Deserializer::parse(text)
            .map_err(|e| ModelError::invalid("<document>", e.to_string().trim().to_string()))?;
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ModelError::invalid(
                if path == "." {
                    "<document>".to_string()
                } else {
                    path
                },
                e.inner().message(),
            )
            .into()
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Collects every invalid field rather than stopping at the first.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut issues = Vec::new();
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            issues.push(ModelError::invalid(
                "dt",
                format!("must be > 0, got {}", self.dt),
            ));
        }
        if !(self.realtime_factor > 0.0 && self.realtime_factor.is_finite()) {
            issues.push(ModelError::invalid(
                "realtime_factor",
                format!("must be > 0, got {}", self.realtime_factor),
            ));
        }
        if let Err(e) = self.world.validate() {
            issues.push(e);
        }
        if self
            .spectator
            .is_some_and(|p| p.iter().any(|v| !v.is_finite()))
        {
            issues.push(ModelError::invalid("spectator", "must be finite"));
        }
        if self.uavs.is_empty() {
            issues.push(ModelError::invalid(
                "uavs",
                "at least one simulated or HITL vehicle is required",
            ));
        }
        for (i, u) in self.uavs.iter().enumerate() {
            let at = format!("uavs[{i}]");
            if u.position
                .iter()
                .chain([&u.heading])
                .any(|v| !v.is_finite())
            {
                issues.push(ModelError::invalid(
                    format!("{at}.position"),
                    "position and heading must be finite",
                ));
            }
            if let Err(e) = u.airframe.model() {
                issues.push(prefixed(&format!("{at}.airframe"), e));
            }
            if let Err(e) = u.gains.validate() {
                issues.push(prefixed(&at, e));
            }
            issues.extend(
                u.sensors
                    .problems(self.dt)
                    .into_iter()
                    .map(|e| prefixed(&format!("{at}.sensors"), e)),
            );
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(ConfigError { issues })
        }
    }
}

impl SensorsConfig {
    fn problems(&self, dt: f64) -> Vec<ModelError> {
        let mut out = Vec::new();
        let rate = |name: &str, rate: f64, out: &mut Vec<ModelError>| {
            if !(rate > 0.0 && rate.is_finite()) {
                out.push(ModelError::invalid(
                    format!("{name}.rate"),
                    format!("must be > 0, got {rate}"),
                ));
            } else if dt > 0.0 && rate > (1.0 + 1e-9) / dt {
                out.push(ModelError::invalid(
                    format!("{name}.rate"),
                    format!("{rate} Hz exceeds the physics rate"),
                ));
            }
        };
        if let Some(imu) = &self.imu {
            rate("imu", imu.rate, &mut out);
            out.extend(imu.noise.accel.validate("imu.noise.accel").err());
            out.extend(imu.noise.gyro.validate("imu.noise.gyro").err());
        }
        if let Some(nav) = &self.nav {
            rate("nav", nav.rate, &mut out);
            out.extend(nav.nav().validate("nav").err());
        }
        if let Some(lidar) = &self.lidar {
            match lidar.validate("lidar") {
                Ok(()) => rate("lidar", lidar.rate, &mut out),
                Err(e) => out.push(e),
            }
        }
        if let Some(camera) = &self.camera {
            match camera.validate("camera") {
                Ok(()) => rate("camera", camera.rate, &mut out),
                Err(e) => out.push(e),
            }
        }
        out
    }
}
