//! Small SO(3) helpers shared by the dynamics, controller and sensors.

use nalgebra::{Matrix3, UnitQuaternion, Vector3};

/// Tolerance used when checking that a matrix is a rotation.
pub const SO3_TOLERANCE: f64 = 1e-9;

/// The angular-velocity tensor: `skew(w) * v == w.cross(v)`.
#[inline]
pub fn skew(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Inverse of [`skew`] applied to the antisymmetric part of `m`.
#[inline]
pub fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

/// Gram–Schmidt on the columns of `m`; the third column is rebuilt as the
/// cross product so the result always has determinant +1.
pub fn orthonormalize(m: &Matrix3<f64>) -> Matrix3<f64> {
    let c0 = m.column(0).normalize();
    let c1 = m.column(1).into_owned();
    let c1 = (c1 - c0 * c0.dot(&c1)).normalize();
    let c2 = c0.cross(&c1);
    Matrix3::from_columns(&[c0, c1, c2])
}

/// Largest absolute entry of `RᵀR − I`.
pub fn orthogonality_error(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).abs().max()
}

/// Whether `r` is a proper rotation within [`SO3_TOLERANCE`].
pub fn is_rotation(r: &Matrix3<f64>) -> bool {
    r.iter().all(|v| v.is_finite())
        && orthogonality_error(r) <= SO3_TOLERANCE
        && (r.determinant() - 1.0).abs() <= SO3_TOLERANCE
}

/// Rotation by `angle` about the world vertical axis.
pub fn rotation_z(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Rotation by `angle` about the y axis.
pub fn rotation_y(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

/// Rotation by `angle` about the x axis.
pub fn rotation_x(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

/// Exponential map from a rotation vector to a rotation matrix (Rodrigues).
pub fn exp_so3(v: &Vector3<f64>) -> Matrix3<f64> {
    let theta = v.norm();
    let k = skew(v);
    if theta < 1e-8 {
        return Matrix3::identity() + k + 0.5 * k * k;
    }
    let a = theta.sin() / theta;
    let b = (1.0 - theta.cos()) / (theta * theta);
    Matrix3::identity() + a * k + b * k * k
}

/// Logarithm map of a rotation matrix, returned as a rotation vector.
///
/// Angles at (or numerically near) π take the axis from the symmetric part
/// `(R + I) / 2 = a aᵀ`, where the antisymmetric part carries no signal.
pub fn log_so3(r: &Matrix3<f64>) -> Vector3<f64> {
    let cos = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let theta = cos.acos();
    let w = vee(r);
    if theta < 1e-6 {
        // sin θ ≈ θ; first-order series of θ / sin θ.
        return w * (1.0 + theta * theta / 6.0);
    }
    if std::f64::consts::PI - theta > 1e-6 {
        return w * (theta / theta.sin());
    }
    let s = (r + Matrix3::identity()) * 0.5;
    let (col, _) = (0..3)
        .map(|i| (i, s[(i, i)]))
        .fold((0, f64::MIN), |best, c| if c.1 > best.1 { c } else { best });
    let mut axis: Vector3<f64> = s.column(col).into_owned();
    axis /= axis.norm();
    // Near π the antisymmetric part still fixes the sign of the axis.
    if axis.dot(&w) < 0.0 {
        axis = -axis;
    }
    axis * theta
}

/// Unit quaternion `(w, x, y, z)` with non-negative scalar part.
pub fn quaternion_wxyz(r: &Matrix3<f64>) -> [f64; 4] {
    let q = UnitQuaternion::from_matrix(r);
    let (w, x, y, z) = (q.w, q.i, q.j, q.k);
    if w < 0.0 {
        [-w, -x, -y, -z]
    } else {
        [w, x, y, z]
    }
}

/// Rotation matrix for a unit quaternion `(w, x, y, z)`.
pub fn rotation_from_wxyz(q: [f64; 4]) -> Matrix3<f64> {
    let q = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]));
    *q.to_rotation_matrix().matrix()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn skew_matches_cross_product() {
        let w = Vector3::new(0.3, -1.2, 2.0);
        let v = Vector3::new(-0.7, 0.1, 0.4);
        assert!((skew(&w) * v - w.cross(&v)).norm() < 1e-15);
        assert_eq!(vee(&skew(&w)), w);
    }

    #[test]
    fn orthonormalize_repairs_drift() {
        let mut r = rotation_z(0.4) * rotation_x(0.2);
        r[(0, 1)] += 1e-6;
        r[(2, 2)] -= 3e-7;
        let fixed = orthonormalize(&r);
        assert!(orthogonality_error(&fixed) < 1e-15);
        assert!((fixed.determinant() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn log_inverts_exp() {
        for v in [
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1e-9, 0.0, -2e-9),
            Vector3::new(0.3, -0.2, 0.1),
            Vector3::new(0.0, 2.5, 1.0),
            Vector3::new(0.0, 0.0, PI - 1e-8),
        ] {
            let back = log_so3(&exp_so3(&v));
            assert!((back - v).norm() < 1e-7, "{v} -> {back}");
        }
    }

    #[test]
    fn log_at_half_turn_returns_axis() {
        let r = rotation_x(PI);
        let v = log_so3(&r);
        assert!((v.norm() - PI).abs() < 1e-12);
        assert!((v.normalize().x.abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quaternion_round_trip() {
        let r = rotation_z(1.1) * rotation_y(-0.3) * rotation_x(0.8);
        let q = quaternion_wxyz(&r);
        assert!(q[0] >= 0.0);
        assert!((rotation_from_wxyz(q) - r).abs().max() < 1e-12);
    }
}
