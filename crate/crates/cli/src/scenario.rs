//! Scenario files: a session, a timed command script, outputs and a
//! duration.
//!
//! ```toml
//! duration = 10.0
//!
//! # Merged into every [[session.uavs]] entry; keys given there win.
//! [defaults]
//! sensors.imu = { rate = 100.0 }
//!
//! [session.world]
//! seed = 3
//!
//! [[session.uavs]]
//! position = [0.0, 0.0, 2.0]
//!
//! [[commands]]
//! time = 1.0
//! uav = 0
//! input.position_heading = { position = [5.0, 0.0, 4.0], heading = 0.0 }
//!
//! [outputs]
//! sensors = ["imu"]
//! ```

use rotorsim_core::control::{ControlGroups, ControlInput};
use rotorsim_core::dynamics::ModelError;
use rotorsim_core::sensors::SensorKind;
use rotorsim_core::{Matrix3, Vector3};
use rotorsim_server::{ConfigError, Mode, SessionConfig};
use serde::{Deserialize, Serialize};

/// A command as written in a scenario file. Vectors are world frame except
/// the body rate; `rotation` is row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InputSpec {
    ActuatorThrottles(Vec<f64>),
    ControlGroups {
        roll: f64,
        pitch: f64,
        yaw: f64,
        collective: f64,
    },
    RateThrottle {
        rate: [f64; 3],
        throttle: f64,
    },
    AttitudeThrottle {
        rotation: [f64; 9],
        throttle: f64,
    },
    AccelHeading {
        acceleration: [f64; 3],
        heading: f64,
    },
    AccelHeadingRate {
        acceleration: [f64; 3],
        heading_rate: f64,
    },
    VelocityHeading {
        velocity: [f64; 3],
        heading: f64,
    },
    VelocityHeadingRate {
        velocity: [f64; 3],
        heading_rate: f64,
    },
    PositionHeading {
        position: [f64; 3],
        heading: f64,
    },
}

impl From<&InputSpec> for ControlInput {
    fn from(s: &InputSpec) -> Self {
        let v = |a: &[f64; 3]| Vector3::from(*a);
        match s {
            InputSpec::ActuatorThrottles(t) => ControlInput::ActuatorThrottles(t.clone()),
            &InputSpec::ControlGroups {
                roll,
                pitch,
                yaw,
                collective,
            } => ControlInput::ControlGroups(ControlGroups {
                roll,
                pitch,
                yaw,
                collective,
            }),
            InputSpec::RateThrottle { rate, throttle } => ControlInput::RateThrottle {
                rate: v(rate),
                throttle: *throttle,
            },
            InputSpec::AttitudeThrottle { rotation, throttle } => ControlInput::AttitudeThrottle {
                rotation: Matrix3::from_row_slice(rotation),
                throttle: *throttle,
            },
            InputSpec::AccelHeading {
                acceleration,
                heading,
            } => ControlInput::AccelHeading {
                acceleration: v(acceleration),
                heading: *heading,
            },
            InputSpec::AccelHeadingRate {
                acceleration,
                heading_rate,
            } => ControlInput::AccelHeadingRate {
                acceleration: v(acceleration),
                heading_rate: *heading_rate,
            },
            InputSpec::VelocityHeading { velocity, heading } => ControlInput::VelocityHeading {
                velocity: v(velocity),
                heading: *heading,
            },
            InputSpec::VelocityHeadingRate {
                velocity,
                heading_rate,
            } => ControlInput::VelocityHeadingRate {
                velocity: v(velocity),
                heading_rate: *heading_rate,
            },
            InputSpec::PositionHeading { position, heading } => ControlInput::PositionHeading {
                position: v(position),
                heading: *heading,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedCommand {
    /// Simulated time at which the command is latched, s.
    pub time: f64,
    pub uav: u32,
    pub input: InputSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Outputs {
    /// Write `trace.csv`.
    pub trace: bool,
    /// Trace every n-th step.
    pub trace_every: u32,
    /// Sensor kinds to dump, by name (imu, gnss, baro, mag, lidar, depth,
    /// label).
    pub sensors: Vec<String>,
}

impl Default for Outputs {
    fn default() -> Self {
        Self {
            trace: true,
            trace_every: 1,
            sensors: Vec::new(),
        }
    }
}

impl Outputs {
    pub fn sensor_kinds(&self) -> Vec<SensorKind> {
        self.sensors
            .iter()
            .filter_map(|n| kind_by_name(n))
            .collect()
    }
}

pub fn kind_by_name(name: &str) -> Option<SensorKind> {
    SensorKind::ALL.into_iter().find(|k| k.name() == name)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    /// Simulated seconds.
    pub duration: f64,
    #[serde(default)]
    pub session: SessionConfig,
    #[serde(default)]
    pub commands: Vec<ScriptedCommand>,
    #[serde(default)]
    pub outputs: Outputs,
}

/// Recursively merges `defaults` under `target`; keys already in `target`
/// are kept.
fn merge_defaults(target: &mut toml::Table, defaults: &toml::Table) {
    for (k, v) in defaults {
        match (target.get_mut(k), v) {
            (Some(toml::Value::Table(t)), toml::Value::Table(d)) => merge_defaults(t, d),
            (Some(_), _) => {}
            (None, _) => {
                target.insert(k.clone(), v.clone());
            }
        }
    }
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ModelError::invalid(field, reason).into()
}

impl Scenario {
    /// Parses without validating. Errors name the offending field path.
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let mut doc: toml::Table = text.parse().map_err(|e: toml::de::Error| {
            invalid("<document>", e.to_string().trim().to_string())
        })?;
        match doc.remove("defaults") {
            None => {}
            Some(toml::Value::Table(defaults)) => {
                if let Some(toml::Value::Table(session)) = doc.get_mut("session") {
                    if let Some(toml::Value::Array(uavs)) = session.get_mut("uavs") {
                        for u in uavs.iter_mut() {
                            if let toml::Value::Table(t) = u {
                                merge_defaults(t, &defaults);
                            }
                        }
                    }
                }
            }
            Some(_) => return Err(invalid("defaults", "must be a table")),
        }
        serde_path_to_error::deserialize(toml::Value::Table(doc)).map_err(|e| {
            let path = e.path().to_string();
            invalid(
                if path == "." {
                    "<document>".to_string()
                } else {
                    path
                },
                e.inner().to_string(),
            )
        })
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid("<file>", format!("{}: {e}", path.display())))?;
        let s = Self::from_toml(&text)?;
        s.validate()?;
        Ok(s)
    }

    /// Every field explicit, defaults folded into each vehicle.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn steps(&self) -> u64 {
        (self.duration / self.session.dt).round() as u64
    }

    /// Collects every invalid field.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut issues = Vec::new();
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            issues.push(ModelError::invalid(
                "duration",
                format!("must be > 0, got {}", self.duration),
            ));
        }
        if self.session.mode != Mode::Stepped {
            issues.push(ModelError::invalid(
                "session.mode",
                "scenarios run in stepped mode",
            ));
        }
        if let Err(e) = self.session.validate() {
            issues.extend(e.issues.into_iter().map(|i| ModelError {
                field: format!("session.{}", i.field),
                reason: i.reason,
            }));
        }
        let mut last = 0.0;
        for (i, c) in self.commands.iter().enumerate() {
            if !(c.time >= 0.0 && c.time.is_finite()) {
                issues.push(ModelError::invalid(
                    format!("commands[{i}].time"),
                    "must be finite and >= 0",
                ));
            } else if c.time < last {
                issues.push(ModelError::invalid(
                    format!("commands[{i}].time"),
                    format!("times must be non-decreasing, {} follows {last}", c.time),
                ));
            } else {
                last = c.time;
            }
            if c.uav as usize >= self.session.uavs.len() {
                issues.push(ModelError::invalid(
                    format!("commands[{i}].uav"),
                    format!("no vehicle {}", c.uav),
                ));
            }
        }
        if self.outputs.trace_every == 0 {
            issues.push(ModelError::invalid("outputs.trace_every", "must be >= 1"));
        }
        for (i, n) in self.outputs.sensors.iter().enumerate() {
            if kind_by_name(n).is_none() {
                issues.push(ModelError::invalid(
                    format!("outputs.sensors[{i}]"),
                    format!("unknown sensor {n:?}"),
                ));
            }
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(ConfigError { issues })
        }
    }
}
