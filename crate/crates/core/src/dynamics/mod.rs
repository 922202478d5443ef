//! Multirotor dynamics.
//!
//! Each propeller produces thrust `F = k ω²` and follows a first-order lag
//! `ω̇ = −(ω − ω_d) / τ_m` towards its commanded speed. The allocation matrix
//! maps the per-motor forces to collective thrust and body torques, which
//! drive the rigid body:
//!
//! ```text
//! ṙ = v
//! v̇ = R (0, 0, F_t)ᵀ / m + g
//! Ṙ = R Ω,            Ω v = ω × v
//! ω̇ = J⁻¹ (τ − ω × J ω)
//! ```
//!
//! The whole state (including motor speeds) is integrated with classic RK4.

mod allocation;

pub use allocation::{AllocationModel, Wrench};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math;

/// Default physics step.
pub const DEFAULT_DT: f64 = 1.0 / 250.0;

/// Default gravity vector in the world frame (z up).
pub const DEFAULT_GRAVITY: Vector3<f64> = Vector3::new(0.0, 0.0, -9.81);

/// An invalid model parameter, tagged with the offending field.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{field}: {reason}")]
pub struct ModelError {
    pub field: String,
    pub reason: String,
}

impl ModelError {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("propeller speed must be non-negative, got {0}")]
    NegativeSpeed(f64),
    #[error("expected {expected} motor values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("time step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("non-finite {quantity} after integration step")]
    NonFinite { quantity: &'static str },
    #[error("heading undefined: body x axis is (nearly) vertical, |h| = {0:e}")]
    DegenerateHeading(f64),
}

/// Propeller and motor constants shared by all motors of a vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropellerParams {
    /// k, N·s²·rad⁻².
    pub thrust_coefficient: f64,
    /// τ_m, s.
    pub time_constant: f64,
    /// ω_max, rad/s.
    pub max_speed: f64,
    /// c_tf, torque per unit thrust (m).
    pub torque_constant: f64,
}

impl Default for PropellerParams {
    fn default() -> Self {
        Self {
            thrust_coefficient: 2.2e-5,
            time_constant: 0.03,
            max_speed: 1100.0,
            torque_constant: 0.016,
        }
    }
}

impl PropellerParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        positive("propellers.thrust_coefficient", self.thrust_coefficient)?;
        positive("propellers.time_constant", self.time_constant)?;
        positive("propellers.max_speed", self.max_speed)?;
        if !(self.torque_constant >= 0.0 && self.torque_constant.is_finite()) {
            return Err(ModelError::invalid(
                "propellers.torque_constant",
                "must be >= 0",
            ));
        }
        Ok(())
    }

    /// Largest thrust a single propeller can produce.
    pub fn max_thrust(&self) -> f64 {
        self.thrust_coefficient * self.max_speed * self.max_speed
    }
}

fn positive(field: &str, value: f64) -> Result<(), ModelError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(ModelError::invalid(
            field,
            format!("must be > 0, got {value}"),
        ))
    }
}

/// Mass properties of the airframe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidBodyModel {
    /// kg
    pub mass: f64,
    /// kg·m², body frame.
    pub inertia: Matrix3<f64>,
    /// m/s², world frame.
    pub gravity: Vector3<f64>,
}

impl Default for RigidBodyModel {
    fn default() -> Self {
        Self {
            mass: 2.0,
            inertia: Matrix3::from_diagonal(&Vector3::new(0.02, 0.02, 0.04)),
            gravity: DEFAULT_GRAVITY,
        }
    }
}

impl RigidBodyModel {
    pub fn validate(&self) -> Result<(), ModelError> {
        positive("body.mass", self.mass)?;
        let j = &self.inertia;
        if j.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::invalid(
                "body.inertia",
                "entries must be finite",
            ));
        }
        if (j - j.transpose()).abs().max() > 1e-12 {
            return Err(ModelError::invalid("body.inertia", "must be symmetric"));
        }
        if j.cholesky().is_none() {
            return Err(ModelError::invalid(
                "body.inertia",
                "must be positive definite",
            ));
        }
        if self.gravity.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::invalid("body.gravity", "must be finite"));
        }
        Ok(())
    }
}

/// A complete, validated vehicle model.
#[derive(Debug, Clone, PartialEq)]
pub struct UavModel {
    propellers: PropellerParams,
    allocation: AllocationModel,
    body: RigidBodyModel,
    inertia_inv: Matrix3<f64>,
}

impl UavModel {
    pub fn new(
        propellers: PropellerParams,
        allocation: AllocationModel,
        body: RigidBodyModel,
    ) -> Result<Self, ModelError> {
        propellers.validate()?;
        body.validate()?;
        let inertia_inv = body
            .inertia
            .try_inverse()
            .ok_or_else(|| ModelError::invalid("body.inertia", "must be invertible"))?;
        Ok(Self {
            propellers,
            allocation,
            body,
            inertia_inv,
        })
    }

    /// Quadrotor X preset built from the given constants.
    pub fn quad_x(
        propellers: PropellerParams,
        arm_diagonal: f64,
        body: RigidBodyModel,
    ) -> Result<Self, ModelError> {
        let allocation = AllocationModel::quad_x(arm_diagonal, propellers.torque_constant)?;
        Self::new(propellers, allocation, body)
    }

    pub fn propellers(&self) -> &PropellerParams {
        &self.propellers
    }

    pub fn allocation(&self) -> &AllocationModel {
        &self.allocation
    }

    pub fn body(&self) -> &RigidBodyModel {
        &self.body
    }

    pub fn inertia_inv(&self) -> &Matrix3<f64> {
        &self.inertia_inv
    }

    pub fn motor_count(&self) -> usize {
        self.allocation.motor_count()
    }

    /// Collective thrust available with every motor at full speed.
    pub fn max_collective_thrust(&self) -> f64 {
        self.motor_count() as f64 * self.propellers.max_thrust()
    }

    /// Common motor speed producing a thrust equal to the weight.
    pub fn hover_speed(&self) -> f64 {
        let weight = self.body.mass * self.body.gravity.norm();
        (weight / (self.motor_count() as f64 * self.propellers.thrust_coefficient)).sqrt()
    }
}

impl Default for UavModel {
    /// m = 2 kg, J = diag(0.02, 0.02, 0.04), d = 0.4 m, k = 2.2e−5,
    /// c_tf = 0.016, ω_max = 1100 rad/s, τ_m = 30 ms.
    fn default() -> Self {
        Self::quad_x(PropellerParams::default(), 0.4, RigidBodyModel::default())
            .expect("default airframe is valid")
    }
}

/// Full simulated state of one vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct UavState {
    /// m, world frame.
    pub position: Vector3<f64>,
    /// m/s, world frame.
    pub velocity: Vector3<f64>,
    /// World ← body.
    pub rotation: Matrix3<f64>,
    /// rad/s, body frame.
    pub angular_velocity: Vector3<f64>,
    /// rad/s, one per motor.
    pub motor_speeds: Vec<f64>,
}

impl UavState {
    /// At rest at `position` with the given heading and motors stopped.
    pub fn at_rest(position: Vector3<f64>, heading: f64, motor_count: usize) -> Self {
        Self {
            position,
            velocity: Vector3::zeros(),
            rotation: math::rotation_z(heading),
            angular_velocity: Vector3::zeros(),
            motor_speeds: vec![0.0; motor_count],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.velocity.iter().all(|v| v.is_finite())
            && self.rotation.iter().all(|v| v.is_finite())
            && self.angular_velocity.iter().all(|v| v.is_finite())
            && self.motor_speeds.iter().all(|v| v.is_finite())
    }

    fn first_non_finite(&self) -> Option<&'static str> {
        fn bad<'a>(mut it: impl Iterator<Item = &'a f64>) -> bool {
            it.any(|v| !v.is_finite())
        }
        if bad(self.position.iter()) {
            Some("position")
        } else if bad(self.velocity.iter()) {
            Some("velocity")
        } else if bad(self.rotation.iter()) {
            Some("rotation")
        } else if bad(self.angular_velocity.iter()) {
            Some("angular velocity")
        } else if bad(self.motor_speeds.iter()) {
            Some("motor speed")
        } else {
            None
        }
    }
}

/// Time derivative of [`UavState`].
#[derive(Debug, Clone, PartialEq)]
pub struct StateDerivative {
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
    /// Ṙ = R Ω.
    pub rotation_rate: Matrix3<f64>,
    pub angular_acceleration: Vector3<f64>,
    pub motor_accelerations: Vec<f64>,
}

/// Thrust of one propeller, `k ω²`.
pub fn thrust_from_speed(p: &PropellerParams, speed: f64) -> Result<f64, DynamicsError> {
    if speed < 0.0 || speed.is_nan() {
        return Err(DynamicsError::NegativeSpeed(speed));
    }
    Ok(p.thrust_coefficient * speed * speed)
}

/// First-order motor lag, `−(ω − ω_d) / τ_m`.
#[inline]
pub fn motor_derivative(p: &PropellerParams, speed: f64, desired: f64) -> f64 {
    -(speed - desired) / p.time_constant
}

/// Continuous-time dynamics at state `s` under commanded motor speeds.
///
/// Commands are clamped to `[0, ω_max]`; missing entries count as zero.
pub fn state_derivative(model: &UavModel, s: &UavState, desired: &[f64]) -> StateDerivative {
    let p = &model.propellers;
    let n = model.motor_count();
    let mut forces = [0.0; 16];
    let mut heap_forces = Vec::new();
    let forces: &mut [f64] = if n <= forces.len() {
        &mut forces[..n]
    } else {
        heap_forces.resize(n, 0.0);
        &mut heap_forces
    };

    let mut motor_accelerations = Vec::with_capacity(n);
    for (i, (&w, f)) in s.motor_speeds.iter().zip(forces.iter_mut()).enumerate() {
        let wd = desired
            .get(i)
            .copied()
            .unwrap_or(0.0)
            .clamp(0.0, p.max_speed);
        motor_accelerations.push(motor_derivative(p, w, wd));
        // Intermediate RK stages may undershoot zero slightly; thrust is k ω².
        *f = p.thrust_coefficient * w * w;
    }
    let wrench = model.allocation.allocate_unchecked(forces);

    let body = &model.body;
    let w = &s.angular_velocity;
    let jw = body.inertia * w;
    let angular_acceleration = model.inertia_inv * (wrench.torque - w.cross(&jw));
    let acceleration = s.rotation.column(2) * (wrench.thrust / body.mass) + body.gravity;

    StateDerivative {
        velocity: s.velocity,
        acceleration,
        rotation_rate: s.rotation * math::skew(w),
        angular_acceleration,
        motor_accelerations,
    }
}

fn advance(s: &UavState, d: &StateDerivative, h: f64) -> UavState {
    UavState {
        position: s.position + d.velocity * h,
        velocity: s.velocity + d.acceleration * h,
        rotation: s.rotation + d.rotation_rate * h,
        angular_velocity: s.angular_velocity + d.angular_acceleration * h,
        motor_speeds: s
            .motor_speeds
            .iter()
            .zip(&d.motor_accelerations)
            .map(|(w, a)| w + a * h)
            .collect(),
    }
}

/// One classic Runge–Kutta step of length `dt`.
///
/// Commands are held constant over the step. After the step the rotation is
/// re-orthonormalized (Gram–Schmidt) and motor speeds are clamped to
/// `[0, ω_max]`.
pub fn rk4_step(
    model: &UavModel,
    s: &UavState,
    desired: &[f64],
    dt: f64,
) -> Result<UavState, DynamicsError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(DynamicsError::InvalidStep(dt));
    }
    let n = model.motor_count();
    if s.motor_speeds.len() != n {
        return Err(DynamicsError::LengthMismatch {
            expected: n,
            got: s.motor_speeds.len(),
        });
    }
    if desired.len() != n {
        return Err(DynamicsError::LengthMismatch {
            expected: n,
            got: desired.len(),
        });
    }

    let k1 = state_derivative(model, s, desired);
    let k2 = state_derivative(model, &advance(s, &k1, 0.5 * dt), desired);
    let k3 = state_derivative(model, &advance(s, &k2, 0.5 * dt), desired);
    let k4 = state_derivative(model, &advance(s, &k3, dt), desired);

    let h6 = dt / 6.0;
    let comb3 = |a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>, d: &Vector3<f64>| {
        (a + (b + c) * 2.0 + d) * h6
    };
    let max_speed = model.propellers.max_speed;
    let next = UavState {
        position: s.position + comb3(&k1.velocity, &k2.velocity, &k3.velocity, &k4.velocity),
        velocity: s.velocity
            + comb3(
                &k1.acceleration,
                &k2.acceleration,
                &k3.acceleration,
                &k4.acceleration,
            ),
        rotation: math::orthonormalize(
            &(s.rotation
                + (k1.rotation_rate
                    + (k2.rotation_rate + k3.rotation_rate) * 2.0
                    + k4.rotation_rate)
                    * h6),
        ),
        angular_velocity: s.angular_velocity
            + comb3(
                &k1.angular_acceleration,
                &k2.angular_acceleration,
                &k3.angular_acceleration,
                &k4.angular_acceleration,
            ),
        motor_speeds: (0..n)
            .map(|i| {
                let inc = k1.motor_accelerations[i]
                    + 2.0 * (k2.motor_accelerations[i] + k3.motor_accelerations[i])
                    + k4.motor_accelerations[i];
                (s.motor_speeds[i] + inc * h6).clamp(0.0, max_speed)
            })
            .collect(),
    };
    match next.first_non_finite() {
        Some(quantity) => Err(DynamicsError::NonFinite { quantity }),
        None => Ok(next),
    }
}

/// Heading angle of the body x axis projected onto the horizontal plane,
/// in `(−π, π]`.
pub fn heading(r: &Matrix3<f64>) -> Result<f64, DynamicsError> {
    let (hx, hy) = (r[(0, 0)], r[(1, 0)]);
    let norm = hx.hypot(hy);
    if !(norm >= 1e-9) {
        return Err(DynamicsError::DegenerateHeading(norm));
    }
    let eta = hy.atan2(hx);
    Ok(if eta <= -std::f64::consts::PI {
        std::f64::consts::PI
    } else {
        eta
    })
}
