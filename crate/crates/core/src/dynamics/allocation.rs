//! Force/torque allocation: the linear map from per-motor thrust forces to
//! collective thrust and body torques.

use nalgebra::{DMatrix, Matrix4, Vector3, Vector4};

use super::ModelError;

/// Collective thrust along the body z axis and body-frame torques.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wrench {
    /// N
    pub thrust: f64,
    /// N·m, body frame.
    pub torque: Vector3<f64>,
}

impl Wrench {
    pub fn new(thrust: f64, torque: Vector3<f64>) -> Self {
        Self { thrust, torque }
    }

    fn as_vector(&self) -> Vector4<f64> {
        Vector4::new(self.thrust, self.torque.x, self.torque.y, self.torque.z)
    }
}

/// A 4 × n allocation matrix together with its right pseudo-inverse.
///
/// Row 0 maps forces to collective thrust, rows 1–3 to the body torques.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationModel {
    /// Γ stored column-wise, one column per motor.
    columns: Vec<Vector4<f64>>,
    /// Γ⁺ = Γᵀ(ΓΓᵀ)⁻¹ stored row-wise, one row per motor.
    pseudo_inverse: Vec<Vector4<f64>>,
    arm_diagonal: f64,
}

impl AllocationModel {
    /// Quadrotor in X configuration with frame diagonal `d` and torque
    /// constant `c_tf`.
    pub fn quad_x(arm_diagonal: f64, torque_constant: f64) -> Result<Self, ModelError> {
        let a = arm_diagonal / std::f64::consts::SQRT_2;
        let c = torque_constant;
        Self::from_rows(
            [
                vec![1.0, 1.0, 1.0, 1.0],
                vec![-a, a, a, -a],
                vec![-a, a, -a, a],
                vec![-c, -c, c, c],
            ],
            arm_diagonal,
        )
    }

    /// Builds a model from the four rows of Γ.
    pub fn from_rows(rows: [Vec<f64>; 4], arm_diagonal: f64) -> Result<Self, ModelError> {
        let n = rows[0].len();
        if n < 3 {
            return Err(ModelError::invalid(
                "allocation.matrix",
                "at least 3 motors are required",
            ));
        }
        if rows.iter().any(|r| r.len() != n) {
            return Err(ModelError::invalid(
                "allocation.matrix",
                "rows differ in length",
            ));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(ModelError::invalid(
                "allocation.matrix",
                "entries must be finite",
            ));
        }
        if !(arm_diagonal > 0.0 && arm_diagonal.is_finite()) {
            return Err(ModelError::invalid(
                "allocation.arm_diagonal",
                "must be > 0",
            ));
        }
        let columns: Vec<Vector4<f64>> = (0..n)
            .map(|j| Vector4::new(rows[0][j], rows[1][j], rows[2][j], rows[3][j]))
            .collect();

        let gamma = DMatrix::from_fn(4, n, |i, j| columns[j][i]);
        let singular = gamma.singular_values();
        let max = singular.max();
        if !(max > 0.0) || singular.min() <= 1e-12 * max {
            return Err(ModelError::invalid(
                "allocation.matrix",
                "must have full row rank",
            ));
        }
        let mut gram = Matrix4::zeros();
        for c in &columns {
            gram += c * c.transpose();
        }
        let gram_inv = gram
            .try_inverse()
            .ok_or_else(|| ModelError::invalid("allocation.matrix", "must have full row rank"))?;
        let pseudo_inverse = columns.iter().map(|c| gram_inv * c).collect();

        Ok(Self {
            columns,
            pseudo_inverse,
            arm_diagonal,
        })
    }

    pub fn motor_count(&self) -> usize {
        self.columns.len()
    }

    pub fn arm_diagonal(&self) -> f64 {
        self.arm_diagonal
    }

    /// Entry `(row, motor)` of Γ.
    pub fn entry(&self, row: usize, motor: usize) -> f64 {
        self.columns[motor][row]
    }

    /// The rows of Γ.
    pub fn rows(&self) -> [Vec<f64>; 4] {
        std::array::from_fn(|i| self.columns.iter().map(|c| c[i]).collect())
    }

    /// Γ · forces.
    pub fn allocate(&self, forces: &[f64]) -> Result<Wrench, super::DynamicsError> {
        if forces.len() != self.columns.len() {
            return Err(super::DynamicsError::LengthMismatch {
                expected: self.columns.len(),
                got: forces.len(),
            });
        }
        Ok(self.allocate_unchecked(forces))
    }

    pub(crate) fn allocate_unchecked(&self, forces: &[f64]) -> Wrench {
        let mut out = Vector4::zeros();
        for (c, f) in self.columns.iter().zip(forces) {
            out += c * *f;
        }
        Wrench::new(out[0], Vector3::new(out[1], out[2], out[3]))
    }

    /// Minimum-norm per-motor forces producing `wrench`: Γ⁺ · (F_t, τ).
    ///
    /// The result may contain negative forces when the wrench is not
    /// reachable by the propulsion system.
    pub fn invert(&self, wrench: &Wrench) -> Vec<f64> {
        let w = wrench.as_vector();
        self.pseudo_inverse.iter().map(|row| row.dot(&w)).collect()
    }
}
