use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
}

impl PidGains {
    pub const fn new(kp: f64, ki: f64, kd: f64) -> Self {
        Self { kp, ki, kd }
    }
}

/// Integrator and previous-error memory of one vector PID loop.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PidState {
    pub integral: Vector3<f64>,
    pub previous_error: Option<Vector3<f64>>,
}

impl PidState {
    pub fn reset(&mut self) {
        *self = Self::default();
    }

    /// One PID update. The integral contribution is clamped per axis to
    /// `limit` (anti-windup) and the output vector is saturated to norm
    /// `limit`.
    pub fn update(
        &mut self,
        gains: &PidGains,
        error: Vector3<f64>,
        dt: f64,
        limit: f64,
    ) -> Vector3<f64> {
        self.integral += error * dt;
        if gains.ki > 0.0 {
            let bound = limit / gains.ki;
            self.integral = self.integral.map(|v| v.clamp(-bound, bound));
        }
        let derivative = match self.previous_error {
            Some(prev) => (error - prev) / dt,
            None => Vector3::zeros(),
        };
        self.previous_error = Some(error);
        saturate(
            gains.kp * error + gains.ki * self.integral + gains.kd * derivative,
            limit,
        )
    }
}

/// Scales `v` down to norm `limit` if it is longer.
pub fn saturate(v: Vector3<f64>, limit: f64) -> Vector3<f64> {
    let n = v.norm();
    if n > limit {
        v * (limit / n)
    } else {
        v
    }
}
