//! Command resolution.
//!
//! Every command modality is reduced to per-motor desired angular velocities
//! through a fixed cascade:
//!
//! ```text
//! position ─P─▶ velocity ─PID─▶ acceleration ─▶ attitude + thrust
//!          attitude ─P (SO(3) error)─▶ body rate ─PID─▶ torque
//! (thrust, torque) ─Γ⁺─▶ motor forces ─√(F/k)─▶ ω_d
//! ```
//!
//! Each modality enters the cascade at its own level. Per-actuator throttles
//! and control groups bypass it.

mod pid;

pub use pid::{saturate, PidGains, PidState};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{self, AllocationModel, PropellerParams, UavModel, UavState, Wrench};
use crate::math;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("command contains a non-finite value")]
    NonFinite,
    #[error("time step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("expected {expected} actuator throttles, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("desired attitude is not a rotation matrix")]
    NotRotation,
    #[error("desired thrust direction is undefined (|a − g| = {0:e})")]
    DegenerateThrust(f64),
    #[error("desired heading cannot be realised with a horizontal thrust axis")]
    DegenerateHeading,
}

/// Normalized roll, pitch and yaw in `[−1, 1]` plus collective throttle in
/// `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlGroups {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
    pub collective: f64,
}

/// The nine command modalities, lowest to highest level.
#[derive(Debug, Clone, PartialEq)]
pub enum ControlInput {
    /// (a) Per-motor throttle in `[0, 1]`.
    ActuatorThrottles(Vec<f64>),
    /// (b) Normalized control groups.
    ControlGroups(ControlGroups),
    /// (c) Body rate (rad/s) and collective throttle.
    RateThrottle { rate: Vector3<f64>, throttle: f64 },
    /// (d) Attitude and collective throttle.
    AttitudeThrottle {
        rotation: Matrix3<f64>,
        throttle: f64,
    },
    /// (e) World acceleration (m/s²) and heading (rad).
    AccelHeading {
        acceleration: Vector3<f64>,
        heading: f64,
    },
    /// (f) World acceleration and heading rate (rad/s).
    AccelHeadingRate {
        acceleration: Vector3<f64>,
        heading_rate: f64,
    },
    /// (g) World velocity (m/s) and heading.
    VelocityHeading {
        velocity: Vector3<f64>,
        heading: f64,
    },
    /// (h) World velocity and heading rate.
    VelocityHeadingRate {
        velocity: Vector3<f64>,
        heading_rate: f64,
    },
    /// (i) World position (m) and heading.
    PositionHeading {
        position: Vector3<f64>,
        heading: f64,
    },
}

/// Discriminant of [`ControlInput`], in modality order (a)–(i).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    ActuatorThrottles,
    ControlGroups,
    RateThrottle,
    AttitudeThrottle,
    AccelHeading,
    AccelHeadingRate,
    VelocityHeading,
    VelocityHeadingRate,
    PositionHeading,
}

impl Modality {
    pub const ALL: [Modality; 9] = [
        Modality::ActuatorThrottles,
        Modality::ControlGroups,
        Modality::RateThrottle,
        Modality::AttitudeThrottle,
        Modality::AccelHeading,
        Modality::AccelHeadingRate,
        Modality::VelocityHeading,
        Modality::VelocityHeadingRate,
        Modality::PositionHeading,
    ];

    /// Wire code, 0 for (a) through 8 for (i).
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }
}

impl ControlInput {
    pub fn modality(&self) -> Modality {
        match self {
            ControlInput::ActuatorThrottles(_) => Modality::ActuatorThrottles,
            ControlInput::ControlGroups(_) => Modality::ControlGroups,
            ControlInput::RateThrottle { .. } => Modality::RateThrottle,
            ControlInput::AttitudeThrottle { .. } => Modality::AttitudeThrottle,
            ControlInput::AccelHeading { .. } => Modality::AccelHeading,
            ControlInput::AccelHeadingRate { .. } => Modality::AccelHeadingRate,
            ControlInput::VelocityHeading { .. } => Modality::VelocityHeading,
            ControlInput::VelocityHeadingRate { .. } => Modality::VelocityHeadingRate,
            ControlInput::PositionHeading { .. } => Modality::PositionHeading,
        }
    }

    /// Zero throttle on every motor.
    pub fn idle(motor_count: usize) -> Self {
        ControlInput::ActuatorThrottles(vec![0.0; motor_count])
    }

    /// All scalars of the command, for finiteness checks.
    fn scalars(&self) -> Vec<f64> {
        match self {
            ControlInput::ActuatorThrottles(t) => t.clone(),
            ControlInput::ControlGroups(g) => vec![g.roll, g.pitch, g.yaw, g.collective],
            ControlInput::RateThrottle { rate, throttle } => {
                rate.iter().copied().chain([*throttle]).collect()
            }
            ControlInput::AttitudeThrottle { rotation, throttle } => {
                rotation.iter().copied().chain([*throttle]).collect()
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
            } => v.iter().copied().chain([*s]).collect(),
        }
    }

    /// Checks finiteness, throttle count and that attitudes are rotations.
    pub fn validate(&self, motor_count: usize) -> Result<(), ControlError> {
        if self.scalars().iter().any(|v| !v.is_finite()) {
            return Err(ControlError::NonFinite);
        }
        match self {
            ControlInput::ActuatorThrottles(t) if t.len() != motor_count => {
                Err(ControlError::LengthMismatch {
                    expected: motor_count,
                    got: t.len(),
                })
            }
            ControlInput::AttitudeThrottle { rotation, .. } if !math::is_rotation(rotation) => {
                Err(ControlError::NotRotation)
            }
            _ => Ok(()),
        }
    }
}

/// Gains and per-stage saturation limits of the cascade.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CascadeGains {
    /// 1/s
    pub position_p: f64,
    pub velocity: PidGains,
    /// 1/s
    pub attitude_p: f64,
    pub rate: PidGains,
    /// Velocity demand limit, m/s.
    pub max_velocity: f64,
    /// Acceleration demand limit, m/s².
    pub max_acceleration: f64,
    /// Body-rate demand limit, rad/s.
    pub max_body_rate: f64,
    /// Angular-acceleration demand limit, rad/s².
    pub max_angular_acceleration: f64,
}

impl Default for CascadeGains {
    fn default() -> Self {
        Self {
            position_p: 1.0,
            velocity: PidGains::new(3.0, 0.1, 0.3),
            attitude_p: 6.0,
            rate: PidGains::new(4.0, 0.2, 0.05),
            max_velocity: 8.0,
            max_acceleration: 6.0,
            max_body_rate: 6.0,
            max_angular_acceleration: 60.0,
        }
    }
}

impl CascadeGains {
    pub fn validate(&self) -> Result<(), dynamics::ModelError> {
        let gains = [
            ("position_p", self.position_p),
            ("velocity.kp", self.velocity.kp),
            ("velocity.ki", self.velocity.ki),
            ("velocity.kd", self.velocity.kd),
            ("attitude_p", self.attitude_p),
            ("rate.kp", self.rate.kp),
            ("rate.ki", self.rate.ki),
            ("rate.kd", self.rate.kd),
        ];
        for (name, g) in gains {
            if !(g >= 0.0 && g.is_finite()) {
                return Err(dynamics::ModelError::invalid(
                    format!("gains.{name}"),
                    "must be >= 0",
                ));
            }
        }
        let limits = [
            ("max_velocity", self.max_velocity),
            ("max_acceleration", self.max_acceleration),
            ("max_body_rate", self.max_body_rate),
            ("max_angular_acceleration", self.max_angular_acceleration),
        ];
        for (name, l) in limits {
            if !(l > 0.0 && l.is_finite()) {
                return Err(dynamics::ModelError::invalid(
                    format!("gains.{name}"),
                    "must be > 0",
                ));
            }
        }
        Ok(())
    }
}

/// Per-vehicle controller memory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ControllerState {
    pub velocity_pid: PidState,
    pub rate_pid: PidState,
    /// Integrated heading reference for the heading-rate modalities.
    pub heading_reference: Option<f64>,
    last_modality: Option<Modality>,
}

impl ControllerState {
    pub fn reset(&mut self) {
        *self = Self::default();
    }
}

/// What [`resolve`] commanded.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutput {
    /// Desired motor speeds, rad/s, within `[0, ω_max]`.
    pub motor_speeds: Vec<f64>,
    /// Thrust and torque demand, for modalities that go through the cascade.
    pub wrench: Option<Wrench>,
    /// Some demand was clipped (throttle range, thrust or motor limits).
    pub saturated: bool,
}

/// Desired attitude and collective thrust realising an acceleration demand.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttitudeTarget {
    pub rotation: Matrix3<f64>,
    /// N
    pub thrust: f64,
    pub saturated: bool,
}

/// `throttle · ω_max`; out-of-range throttles are clamped and flagged.
pub fn throttle_to_speed(p: &PropellerParams, throttle: f64) -> (f64, bool) {
    let clamped = throttle.clamp(0.0, 1.0);
    (clamped * p.max_speed, clamped != throttle)
}

/// Collective thrust when every motor spins at `throttle · ω_max`.
fn throttle_to_thrust(model: &UavModel, throttle: f64) -> (f64, bool) {
    let (speed, clamped) = throttle_to_speed(model.propellers(), throttle);
    let thrust = model.motor_count() as f64 * model.propellers().thrust_coefficient * speed * speed;
    (thrust, clamped)
}

/// Per-motor throttles from control groups.
///
/// Each torque row of Γ is scaled by the sum of its absolute entries, so a
/// full-scale group command moves the summed throttle magnitude by one; the
/// signs follow Γ.
pub fn mix_control_groups(a: &AllocationModel, groups: &ControlGroups) -> Vec<f64> {
    let demand = [groups.roll, groups.pitch, groups.yaw];
    let norms: Vec<f64> = (1..4)
        .map(|row| {
            (0..a.motor_count())
                .map(|m| a.entry(row, m).abs())
                .sum::<f64>()
        })
        .collect();
    (0..a.motor_count())
        .map(|m| {
            let mut t = groups.collective;
            for (k, d) in demand.iter().enumerate() {
                if norms[k] > 0.0 {
                    t += d * a.entry(k + 1, m) / norms[k];
                }
            }
            t.clamp(0.0, 1.0)
        })
        .collect()
}

/// Rotation vector taking the current attitude to the desired one,
/// expressed in the body frame: `log(Rᵀ R_d)`.
pub fn attitude_error(r: &Matrix3<f64>, r_desired: &Matrix3<f64>) -> Vector3<f64> {
    math::log_so3(&(r.transpose() * r_desired))
}

/// Attitude and thrust producing acceleration `acceleration` with the body
/// x axis pointing along `heading`.
pub fn accel_to_attitude(
    acceleration: &Vector3<f64>,
    heading: f64,
    model: &UavModel,
) -> Result<AttitudeTarget, ControlError> {
    let body = model.body();
    let specific = acceleration - body.gravity;
    let norm = specific.norm();
    if !(norm > 1e-6) {
        return Err(ControlError::DegenerateThrust(norm));
    }
    let b3 = specific / norm;
    let (s, c) = heading.sin_cos();
    let h = Vector3::new(c, s, 0.0);
    // b₁ lies in the vertical plane through h and is orthogonal to b₃, so its
    // horizontal projection is parallel to h.
    let b1 = (h * b3.z - Vector3::z() * h.dot(&b3)) * b3.z.signum();
    let b1_norm = b1.norm();
    if b1_norm < 1e-9 || b1.x.hypot(b1.y) < 1e-9 * b1_norm {
        return Err(ControlError::DegenerateHeading);
    }
    let b1 = b1 / b1_norm;
    let b2 = b3.cross(&b1);
    let rotation = Matrix3::from_columns(&[b1, b2, b3]);

    let mut thrust = body.mass * norm;
    let max = model.max_collective_thrust();
    let saturated = thrust > max;
    if saturated {
        thrust = max;
    }
    Ok(AttitudeTarget {
        rotation,
        thrust,
        saturated,
    })
}

/// Reduces `input` to desired motor speeds for one physics step.
pub fn resolve(
    input: &ControlInput,
    s: &UavState,
    model: &UavModel,
    gains: &CascadeGains,
    cs: &mut ControllerState,
    dt: f64,
) -> Result<ControlOutput, ControlError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(ControlError::InvalidStep(dt));
    }
    input.validate(model.motor_count())?;
    let modality = input.modality();
    if cs.last_modality != Some(modality) {
        cs.reset();
        cs.last_modality = Some(modality);
    }
    let p = model.propellers();

    match input {
        ControlInput::ActuatorThrottles(t) => {
            let mut saturated = false;
            let motor_speeds = t
                .iter()
                .map(|t| {
                    let (w, c) = throttle_to_speed(p, *t);
                    saturated |= c;
                    w
                })
                .collect();
            return Ok(ControlOutput {
                motor_speeds,
                wrench: None,
                saturated,
            });
        }
        ControlInput::ControlGroups(g) => {
            let motor_speeds = mix_control_groups(model.allocation(), g)
                .into_iter()
                .map(|t| throttle_to_speed(p, t).0)
                .collect();
            return Ok(ControlOutput {
                motor_speeds,
                wrench: None,
                saturated: false,
            });
        }
        _ => {}
    }

    let mut saturated = false;
    let (rate, thrust) = match input {
        ControlInput::RateThrottle { rate, throttle } => {
            let (thrust, c) = throttle_to_thrust(model, *throttle);
            saturated |= c;
            (*rate, thrust)
        }
        ControlInput::AttitudeThrottle { rotation, throttle } => {
            let (thrust, c) = throttle_to_thrust(model, *throttle);
            saturated |= c;
            (attitude_stage(s, rotation, gains), thrust)
        }
        _ => {
            let (acceleration, heading) = translational_stage(input, s, gains, cs, dt);
            let target = accel_to_attitude(&acceleration, heading, model)?;
            saturated |= target.saturated;
            let mut rate = attitude_stage(s, &target.rotation, gains);
            if let ControlInput::AccelHeadingRate { heading_rate, .. }
            | ControlInput::VelocityHeadingRate { heading_rate, .. } = input
            {
                // Feed the commanded yaw rate forward so a constant turn is
                // tracked without lag.
                rate += s.rotation.transpose() * Vector3::z() * *heading_rate;
            }
            (rate, target.thrust)
        }
    };

    let torque = rate_stage(s, &rate, model, gains, cs, dt);
    let wrench = Wrench::new(thrust, torque);
    let (motor_speeds, clipped) = wrench_to_speeds(model, &wrench);
    Ok(ControlOutput {
        motor_speeds,
        wrench: Some(wrench),
        saturated: saturated | clipped,
    })
}

/// Acceleration demand and heading reference for modalities (e)–(i).
fn translational_stage(
    input: &ControlInput,
    s: &UavState,
    gains: &CascadeGains,
    cs: &mut ControllerState,
    dt: f64,
) -> (Vector3<f64>, f64) {
    let velocity_loop = |cs: &mut ControllerState, v_desired: Vector3<f64>| {
        let v_desired = saturate(v_desired, gains.max_velocity);
        cs.velocity_pid.update(
            &gains.velocity,
            v_desired - s.velocity,
            dt,
            gains.max_acceleration,
        )
    };
    match input {
        ControlInput::AccelHeading {
            acceleration,
            heading,
        } => (*acceleration, *heading),
        ControlInput::AccelHeadingRate {
            acceleration,
            heading_rate,
        } => (*acceleration, advance_heading(cs, s, *heading_rate, dt)),
        ControlInput::VelocityHeading { velocity, heading } => {
            (velocity_loop(cs, *velocity), *heading)
        }
        ControlInput::VelocityHeadingRate {
            velocity,
            heading_rate,
        } => {
            let heading = advance_heading(cs, s, *heading_rate, dt);
            (velocity_loop(cs, *velocity), heading)
        }
        ControlInput::PositionHeading { position, heading } => {
            let v_desired = (position - s.position) * gains.position_p;
            (velocity_loop(cs, v_desired), *heading)
        }
        _ => unreachable!("lower modalities do not use the translational loops"),
    }
}

/// Integrates the heading reference; the first call starts from the current
/// heading.
fn advance_heading(cs: &mut ControllerState, s: &UavState, rate: f64, dt: f64) -> f64 {
    let current = cs
        .heading_reference
        .unwrap_or_else(|| dynamics::heading(&s.rotation).unwrap_or(0.0));
    let next = current + rate * dt;
    cs.heading_reference = Some(next);
    next
}

fn attitude_stage(s: &UavState, r_desired: &Matrix3<f64>, gains: &CascadeGains) -> Vector3<f64> {
    saturate(
        attitude_error(&s.rotation, r_desired) * gains.attitude_p,
        gains.max_body_rate,
    )
}

/// Body torque from the rate loop: `J α_d + ω × J ω`.
fn rate_stage(
    s: &UavState,
    rate: &Vector3<f64>,
    model: &UavModel,
    gains: &CascadeGains,
    cs: &mut ControllerState,
    dt: f64,
) -> Vector3<f64> {
    let w = &s.angular_velocity;
    let alpha = cs
        .rate_pid
        .update(&gains.rate, rate - w, dt, gains.max_angular_acceleration);
    let j = &model.body().inertia;
    j * alpha + w.cross(&(j * w))
}

/// Inverts a wrench through Γ⁺; negative forces are clamped to zero and
/// speeds to `ω_max`. Returns whether anything was clipped.
pub fn wrench_to_speeds(model: &UavModel, wrench: &Wrench) -> (Vec<f64>, bool) {
    let p = model.propellers();
    let mut clipped = false;
    let speeds = model
        .allocation()
        .invert(wrench)
        .into_iter()
        .map(|f| {
            if f < 0.0 {
                clipped = true;
            }
            let w = (f.max(0.0) / p.thrust_coefficient).sqrt();
            if w > p.max_speed {
                clipped = true;
            }
            w.min(p.max_speed)
        })
        .collect();
    (speeds, clipped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::DEFAULT_DT;

    fn hover_state(model: &UavModel) -> UavState {
        let mut s = UavState::at_rest(Vector3::new(0.0, 0.0, 10.0), 0.0, 4);
        s.motor_speeds = vec![model.hover_speed(); 4];
        s
    }

    #[test]
    fn throttle_examples() {
        let p = PropellerParams {
            max_speed: 1000.0,
            ..Default::default()
        };
        assert_eq!(throttle_to_speed(&p, 0.0), (0.0, false));
        assert_eq!(throttle_to_speed(&p, 1.0), (1000.0, false));
        assert_eq!(throttle_to_speed(&p, 0.5), (500.0, false));
        assert_eq!(throttle_to_speed(&p, 1.5), (1000.0, true));
        assert_eq!(throttle_to_speed(&p, -0.1), (0.0, true));
    }

    #[test]
    fn control_group_mixing() {
        let a = AllocationModel::quad_x(0.4, 0.016).unwrap();
        let pure = ControlGroups {
            roll: 0.0,
            pitch: 0.0,
            yaw: 0.0,
            collective: 0.5,
        };
        assert_eq!(mix_control_groups(&a, &pure), vec![0.5; 4]);

        let yaw = ControlGroups { yaw: 1.0, ..pure };
        let t = mix_control_groups(&a, &yaw);
        let delta = 0.25;
        let expected = [0.5 - delta, 0.5 - delta, 0.5 + delta, 0.5 + delta];
        for (got, want) in t.iter().zip(expected) {
            assert!((got - want).abs() < 1e-15);
        }
        let full = ControlGroups {
            roll: 1.0,
            pitch: 0.0,
            yaw: 0.0,
            collective: 1.0,
        };
        assert!(mix_control_groups(&a, &full)
            .iter()
            .all(|t| (0.0..=1.0).contains(t)));
    }

    #[test]
    fn attitude_error_examples() {
        let i = Matrix3::identity();
        assert_eq!(attitude_error(&i, &i), Vector3::zeros());
        let e = attitude_error(&i, &math::rotation_z(30f64.to_radians()));
        assert!((e - Vector3::new(0.0, 0.0, 0.523_598_775_598_298_8)).norm() < 1e-12);
        // Half turn does not panic and has magnitude π.
        let e = attitude_error(&i, &math::rotation_y(std::f64::consts::PI));
        assert!((e.norm() - std::f64::consts::PI).abs() < 1e-9);
    }

    #[test]
    fn accel_to_attitude_examples() {
        let model = UavModel::default();
        let hover = accel_to_attitude(&Vector3::zeros(), 0.0, &model).unwrap();
        assert!((hover.rotation - Matrix3::identity()).abs().max() < 1e-15);
        assert!((hover.thrust - 2.0 * 9.81).abs() < 1e-12);

        let up = accel_to_attitude(&Vector3::new(0.0, 0.0, 9.81), 0.0, &model).unwrap();
        assert!((up.thrust - 39.24).abs() < 1e-12);
        assert!((up.rotation - Matrix3::identity()).abs().max() < 1e-15);

        let err = accel_to_attitude(&model.body().gravity, 0.0, &model).unwrap_err();
        assert!(matches!(err, ControlError::DegenerateThrust(_)));

        let huge = accel_to_attitude(&Vector3::new(0.0, 0.0, 1000.0), 0.0, &model).unwrap();
        assert!(huge.saturated);
        assert_eq!(huge.thrust, model.max_collective_thrust());
    }

    #[test]
    fn actuator_throttles_pass_through() {
        let model = UavModel::default();
        let s = hover_state(&model);
        let mut cs = ControllerState::default();
        let out = resolve(
            &ControlInput::ActuatorThrottles(vec![0.5; 4]),
            &s,
            &model,
            &CascadeGains::default(),
            &mut cs,
            DEFAULT_DT,
        )
        .unwrap();
        assert_eq!(out.motor_speeds, vec![550.0; 4]);
    }

    #[test]
    fn attitude_hold_commands_no_torque() {
        let model = UavModel::default();
        let s = hover_state(&model);
        let mut cs = ControllerState::default();
        let throttle = model.hover_speed() / model.propellers().max_speed;
        let out = resolve(
            &ControlInput::AttitudeThrottle {
                rotation: s.rotation,
                throttle,
            },
            &s,
            &model,
            &CascadeGains::default(),
            &mut cs,
            DEFAULT_DT,
        )
        .unwrap();
        let w = out.wrench.unwrap();
        assert!(w.torque.norm() <= 1e-6);
        assert!((w.thrust - 2.0 * 9.81).abs() < 1e-9);
    }

    #[test]
    fn modality_equivalence_at_rest() {
        let model = UavModel::default();
        let s = hover_state(&model);
        let weight = 2.0 * 9.81;
        let inputs = [
            ControlInput::PositionHeading {
                position: s.position,
                heading: 0.0,
            },
            ControlInput::VelocityHeading {
                velocity: Vector3::zeros(),
                heading: 0.0,
            },
            ControlInput::AccelHeading {
                acceleration: Vector3::zeros(),
                heading: 0.0,
            },
        ];
        for input in inputs {
            let mut cs = ControllerState::default();
            let out = resolve(
                &input,
                &s,
                &model,
                &CascadeGains::default(),
                &mut cs,
                DEFAULT_DT,
            )
            .unwrap();
            let thrust = out.wrench.unwrap().thrust;
            assert!(
                (thrust - weight).abs() <= 0.01 * weight,
                "{input:?}: {thrust}"
            );
        }
    }

    #[test]
    fn heading_rate_reference_advances_by_rate_times_dt() {
        let model = UavModel::default();
        let s = hover_state(&model);
        let mut cs = ControllerState::default();
        let rate = 0.3;
        let input = ControlInput::AccelHeadingRate {
            acceleration: Vector3::zeros(),
            heading_rate: rate,
        };
        let mut previous = None;
        for _ in 0..10 {
            resolve(
                &input,
                &s,
                &model,
                &CascadeGains::default(),
                &mut cs,
                DEFAULT_DT,
            )
            .unwrap();
            let now = cs.heading_reference.unwrap();
            if let Some(prev) = previous {
                assert_eq!(now, prev + rate * DEFAULT_DT);
            } else {
                assert_eq!(now, rate * DEFAULT_DT);
            }
            previous = Some(now);
        }
    }

    #[test]
    fn non_finite_commands_are_rejected() {
        let model = UavModel::default();
        let s = hover_state(&model);
        let mut cs = ControllerState::default();
        let input = ControlInput::PositionHeading {
            position: Vector3::new(f64::NAN, 0.0, 0.0),
            heading: 0.0,
        };
        let err = resolve(
            &input,
            &s,
            &model,
            &CascadeGains::default(),
            &mut cs,
            DEFAULT_DT,
        )
        .unwrap_err();
        assert_eq!(err, ControlError::NonFinite);
        let bad_rot = ControlInput::AttitudeThrottle {
            rotation: Matrix3::identity() * 2.0,
            throttle: 0.5,
        };
        assert_eq!(
            resolve(
                &bad_rot,
                &s,
                &model,
                &CascadeGains::default(),
                &mut cs,
                DEFAULT_DT
            )
            .unwrap_err(),
            ControlError::NotRotation
        );
    }

    #[test]
    fn modality_codes_round_trip() {
        for m in Modality::ALL {
            assert_eq!(Modality::from_code(m.code()), Some(m));
        }
        assert_eq!(Modality::from_code(9), None);
    }
}
