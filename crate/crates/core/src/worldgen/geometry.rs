//! Rays, boxes and the two primitive kinds the world is made of.

use nalgebra::Vector3;

/// Hits closer than this to the ray origin are ignored.
pub const T_MIN: f64 = 1e-9;

#[derive(Debug, Clone, Copy)]
pub struct Ray {
    pub origin: Vector3<f64>,
    pub direction: Vector3<f64>,
    pub inv_direction: Vector3<f64>,
}

impl Ray {
    pub fn new(origin: Vector3<f64>, direction: Vector3<f64>) -> Self {
        // Zero components get +∞ whatever their sign. An origin on a slab
        // plane then yields NaN, which the slab test ignores.
        let inv = |d: f64| if d == 0.0 { f64::INFINITY } else { 1.0 / d };
        Self {
            origin,
            direction,
            inv_direction: direction.map(inv),
        }
    }

    #[inline]
    pub fn at(&self, t: f64) -> Vector3<f64> {
        self.origin + self.direction * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Aabb {
    pub fn empty() -> Self {
        Self {
            min: Vector3::repeat(f64::INFINITY),
            max: Vector3::repeat(f64::NEG_INFINITY),
        }
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vector3<f64>>) -> Self {
        let mut b = Self::empty();
        for p in points {
            b.grow(p);
        }
        b
    }

    #[inline]
    pub fn grow(&mut self, p: &Vector3<f64>) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    #[inline]
    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.min.x > self.max.x
    }

    #[inline]
    pub fn centroid(&self) -> Vector3<f64> {
        (self.min + self.max) * 0.5
    }

    pub fn surface_area(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let d = self.max - self.min;
        2.0 * (d.x * d.y + d.y * d.z + d.z * d.x)
    }

    /// Entry distance of the ray into the box, if it enters before `t_max`.
    #[inline]
    pub fn hit(&self, ray: &Ray, t_max: f64) -> Option<f64> {
        let mut t0: f64 = 0.0;
        let mut t1 = t_max;
        for a in 0..3 {
            let inv = ray.inv_direction[a];
            let mut near = (self.min[a] - ray.origin[a]) * inv;
            let mut far = (self.max[a] - ray.origin[a]) * inv;
            if near > far {
                std::mem::swap(&mut near, &mut far);
            }
            t0 = if near > t0 { near } else { t0 };
            t1 = if far < t1 { far } else { t1 };
            if t0 > t1 {
                return None;
            }
        }
        Some(t0)
    }
}

/// Möller–Trumbore. Returns `(t, u, v)` with barycentric `u`, `v` for
/// vertices `b` and `c`.
#[inline]
pub fn intersect_triangle(
    ray: &Ray,
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    c: &Vector3<f64>,
    t_max: f64,
) -> Option<(f64, f64, f64)> {
    intersect_triangle_edges(ray, a, &(b - a), &(c - a), t_max)
}

/// [`intersect_triangle`] with the edges `b − a` and `c − a` precomputed.
#[inline]
pub fn intersect_triangle_edges(
    ray: &Ray,
    a: &Vector3<f64>,
    e1: &Vector3<f64>,
    e2: &Vector3<f64>,
    t_max: f64,
) -> Option<(f64, f64, f64)> {
    let p = ray.direction.cross(e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let s = ray.origin - a;
    let u = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(e1);
    let v = ray.direction.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&q) * inv;
    (t > T_MIN && t <= t_max).then_some((t, u, v))
}

/// Vertical capped cylinder, used as the ray proxy of a tree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cylinder {
    pub center_x: f64,
    pub center_y: f64,
    pub radius: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl Cylinder {
    pub fn bounds(&self) -> Aabb {
        Aabb {
            min: Vector3::new(
                self.center_x - self.radius,
                self.center_y - self.radius,
                self.z_min,
            ),
            max: Vector3::new(
                self.center_x + self.radius,
                self.center_y + self.radius,
                self.z_max,
            ),
        }
    }

    /// Nearest intersection `(t, outward normal)`.
    pub fn intersect(&self, ray: &Ray, t_max: f64) -> Option<(f64, Vector3<f64>)> {
        let mut best: Option<(f64, Vector3<f64>)> = None;
        let mut consider = |t: f64, n: Vector3<f64>| {
            if t > T_MIN && t <= t_max && best.is_none_or(|(bt, _)| t < bt) {
                best = Some((t, n));
            }
        };

        let (ox, oy) = (ray.origin.x - self.center_x, ray.origin.y - self.center_y);
        let (dx, dy) = (ray.direction.x, ray.direction.y);
        let a = dx * dx + dy * dy;
        if a > 1e-18 {
            let b = ox * dx + oy * dy;
            let c = ox * ox + oy * oy - self.radius * self.radius;
            let disc = b * b - a * c;
            if disc >= 0.0 {
                let sq = disc.sqrt();
                for t in [(-b - sq) / a, (-b + sq) / a] {
                    let z = ray.origin.z + ray.direction.z * t;
                    if z >= self.z_min && z <= self.z_max {
                        let n = Vector3::new(ox + dx * t, oy + dy * t, 0.0) / self.radius;
                        consider(t, n);
                    }
                }
            }
        }
        if ray.direction.z != 0.0 {
            for (z, nz) in [(self.z_max, 1.0), (self.z_min, -1.0)] {
                let t = (z - ray.origin.z) / ray.direction.z;
                let (px, py) = (ox + dx * t, oy + dy * t);
                if px * px + py * py <= self.radius * self.radius {
                    consider(t, Vector3::new(0.0, 0.0, nz));
                }
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_hit_and_miss() {
        let b = Aabb {
            min: Vector3::new(-1.0, -1.0, -1.0),
            max: Vector3::new(1.0, 1.0, 1.0),
        };
        let down = Ray::new(Vector3::new(0.0, 0.0, 5.0), Vector3::new(0.0, 0.0, -1.0));
        assert_eq!(b.hit(&down, 100.0), Some(4.0));
        assert_eq!(b.hit(&down, 3.0), None);
        let away = Ray::new(Vector3::new(0.0, 0.0, 5.0), Vector3::new(0.0, 0.0, 1.0));
        assert_eq!(b.hit(&away, 100.0), None);
        // Axis-parallel ray starting on a slab plane.
        let edge = Ray::new(Vector3::new(1.0, 0.0, 5.0), Vector3::new(0.0, 0.0, -1.0));
        assert_eq!(edge.origin.x, b.max.x);
        assert!(b.hit(&edge, 100.0).is_some());
    }

    #[test]
    fn triangle_hit() {
        let (a, b, c) = (
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(2.0, 0.0, 0.0),
            Vector3::new(0.0, 2.0, 0.0),
        );
        let ray = Ray::new(Vector3::new(0.5, 0.5, 3.0), Vector3::new(0.0, 0.0, -1.0));
        let (t, u, v) = intersect_triangle(&ray, &a, &b, &c, 10.0).unwrap();
        assert_eq!((t, u, v), (3.0, 0.25, 0.25));
        let outside = Ray::new(Vector3::new(1.5, 1.5, 3.0), Vector3::new(0.0, 0.0, -1.0));
        assert!(intersect_triangle(&outside, &a, &b, &c, 10.0).is_none());
    }

    #[test]
    fn cylinder_side_and_cap() {
        let cyl = Cylinder {
            center_x: 0.0,
            center_y: 0.0,
            radius: 1.0,
            z_min: 0.0,
            z_max: 10.0,
        };
        let side = Ray::new(Vector3::new(-5.0, 0.0, 5.0), Vector3::new(1.0, 0.0, 0.0));
        let (t, n) = cyl.intersect(&side, 100.0).unwrap();
        assert!((t - 4.0).abs() < 1e-12);
        assert!((n - Vector3::new(-1.0, 0.0, 0.0)).norm() < 1e-12);
        let top = Ray::new(Vector3::new(0.3, 0.2, 20.0), Vector3::new(0.0, 0.0, -1.0));
        let (t, n) = cyl.intersect(&top, 100.0).unwrap();
        assert!((t - 10.0).abs() < 1e-12);
        assert_eq!(n, Vector3::z());
        let over = Ray::new(Vector3::new(-5.0, 0.0, 11.0), Vector3::new(1.0, 0.0, 0.0));
        assert!(cyl.intersect(&over, 100.0).is_none());
    }
}
