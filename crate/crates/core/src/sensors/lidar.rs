use std::f64::consts::TAU;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::NoiseSpec;
use crate::dynamics::ModelError;
use crate::worldgen::{Ray, WorldState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LidarConfig {
    pub horizontal_rays: u32,
    pub vertical_rays: u32,
    /// rad.
    pub horizontal_fov: f64,
    /// rad.
    pub vertical_fov: f64,
    /// Elevation of the middle of the vertical fan, rad.
    pub vertical_center: f64,
    /// m.
    pub max_range: f64,
    /// Hz.
    pub rate: f64,
    /// Range noise along the ray, m.
    pub noise: NoiseSpec,
    pub intensity: bool,
    pub labels: bool,
}

impl Default for LidarConfig {
    fn default() -> Self {
        Self {
            horizontal_rays: 1024,
            vertical_rays: 32,
            horizontal_fov: TAU,
            vertical_fov: 45f64.to_radians(),
            vertical_center: 0.0,
            max_range: 100.0,
            rate: 10.0,
            noise: NoiseSpec::none(),
            intensity: true,
            labels: true,
        }
    }
}

impl LidarConfig {
    pub fn validate(&self, field: &str) -> Result<(), ModelError> {
        if self.horizontal_rays == 0 || self.vertical_rays == 0 {
            return Err(ModelError::invalid(
                format!("{field}.horizontal_rays"),
                "ray counts must be >= 1",
            ));
        }
        if (self.horizontal_rays as u64) * (self.vertical_rays as u64) > 1 << 24 {
            return Err(ModelError::invalid(
                format!("{field}.horizontal_rays"),
                "more than 2^24 rays per scan",
            ));
        }
        for (name, fov) in [
            ("horizontal_fov", self.horizontal_fov),
            ("vertical_fov", self.vertical_fov),
        ] {
            if !(fov > 0.0 && fov <= TAU + 1e-12) {
                return Err(ModelError::invalid(
                    format!("{field}.{name}"),
                    format!("must be in (0, 2π], got {fov}"),
                ));
            }
        }
        if !self.vertical_center.is_finite() {
            return Err(ModelError::invalid(
                format!("{field}.vertical_center"),
                "must be finite",
            ));
        }
        if !(self.max_range > 0.0 && self.max_range.is_finite()) {
            return Err(ModelError::invalid(
                format!("{field}.max_range"),
                "must be > 0",
            ));
        }
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return Err(ModelError::invalid(format!("{field}.rate"), "must be > 0"));
        }
        self.noise.validate(&format!("{field}.noise"))
    }

    pub fn ray_count(&self) -> usize {
        self.horizontal_rays as usize * self.vertical_rays as usize
    }

    /// Azimuth of column `i`. A full circle has no duplicated endpoint.
    pub fn azimuth(&self, i: u32) -> f64 {
        let n = self.horizontal_rays;
        if self.horizontal_fov >= TAU - 1e-12 {
            -std::f64::consts::PI + TAU * i as f64 / n as f64
        } else if n == 1 {
            0.0
        } else {
            -0.5 * self.horizontal_fov + self.horizontal_fov * i as f64 / (n - 1) as f64
        }
    }

    /// Elevation of row `j`.
    pub fn elevation(&self, j: u32) -> f64 {
        let n = self.vertical_rays;
        if n == 1 {
            self.vertical_center
        } else {
            self.vertical_center - 0.5 * self.vertical_fov
                + self.vertical_fov * j as f64 / (n - 1) as f64
        }
    }

    /// Unit direction of ray `index = j · horizontal_rays + i`, sensor frame.
    pub fn direction(&self, index: u32) -> Vector3<f64> {
        let (i, j) = (index % self.horizontal_rays, index / self.horizontal_rays);
        let (az, el) = (self.azimuth(i), self.elevation(j));
        Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarPoint {
    pub ray_index: u32,
    /// Sensor frame, m.
    pub position: Vector3<f64>,
    /// m.
    pub range: f64,
    pub intensity: Option<f64>,
    pub label: Option<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    /// s.
    pub timestamp: f64,
    pub points: Vec<LidarPoint>,
}

/// One scan from the sensor pose `(origin, rotation)`, world ← sensor.
///
/// Rays are cast in parallel. Range noise is then applied in ray order
/// from the stream for `scan_index`, so the result does not depend on
/// thread scheduling.
pub fn lidar_scan(
    world: &WorldState,
    origin: &Vector3<f64>,
    rotation: &Matrix3<f64>,
    cfg: &LidarConfig,
    timestamp: f64,
    scan_index: u64,
) -> PointCloud {
    let directions: Vec<Vector3<f64>> = (0..cfg.ray_count() as u32)
        .map(|k| cfg.direction(k))
        .collect();
    let hits: Vec<Option<(f64, f64, u8)>> = directions
        .par_iter()
        .with_min_len(256)
        .map(|d| {
            let ray = Ray::new(*origin, rotation * d);
            world
                .cast(&ray, cfg.max_range)
                .map(|h| (h.distance, h.material_intensity, h.semantic_label))
        })
        .collect();

    let mut noise = cfg.noise.stream(scan_index);
    let mut points = Vec::with_capacity(hits.len());
    for (k, hit) in hits.into_iter().enumerate() {
        let Some((distance, intensity, label)) = hit else {
            continue;
        };
        let range = (distance + noise.sample()).clamp(0.0, cfg.max_range);
        points.push(LidarPoint {
            ray_index: k as u32,
            position: directions[k] * range,
            range,
            intensity: cfg.intensity.then_some(intensity),
            label: cfg.labels.then_some(label),
        });
    }
    PointCloud { timestamp, points }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::worldgen::{CellIndex, TerrainParams};
    use std::f64::consts::FRAC_PI_2;

    fn flat_world() -> WorldState {
        let p = TerrainParams {
            amplitude: 0.0,
            grid_resolution: 3,
            forest_density: 0.0,
            ..Default::default()
        };
        WorldState::with_cells(
            p,
            [
                CellIndex::new(0, 0),
                CellIndex::new(-1, 0),
                CellIndex::new(0, -1),
                CellIndex::new(-1, -1),
            ],
        )
        .unwrap()
    }

    #[test]
    fn nadir_ray_measures_height() {
        let cfg = LidarConfig {
            horizontal_rays: 1,
            vertical_rays: 1,
            vertical_center: -FRAC_PI_2,
            ..Default::default()
        };
        let cloud = lidar_scan(
            &flat_world(),
            &Vector3::new(0.0, 0.0, 10.0),
            &Matrix3::identity(),
            &cfg,
            0.0,
            0,
        );
        assert_eq!(cloud.points.len(), 1);
        assert!((cloud.points[0].range - 10.0).abs() < 1e-12);
        assert_eq!(cloud.points[0].label, Some(1));
    }

    #[test]
    fn sky_is_empty() {
        let cfg = LidarConfig {
            horizontal_rays: 16,
            vertical_rays: 4,
            vertical_center: 1.0,
            vertical_fov: 0.5,
            ..Default::default()
        };
        let cloud = lidar_scan(
            &flat_world(),
            &Vector3::new(0.0, 0.0, 10.0),
            &Matrix3::identity(),
            &cfg,
            0.0,
            0,
        );
        assert!(cloud.points.is_empty());
    }

    #[test]
    fn grid_layout() {
        let cfg = LidarConfig {
            horizontal_rays: 4,
            vertical_rays: 3,
            vertical_fov: 0.4,
            ..Default::default()
        };
        assert_eq!(cfg.azimuth(0), -std::f64::consts::PI);
        assert_eq!(cfg.azimuth(2), 0.0);
        assert_eq!(cfg.elevation(0), -0.2);
        assert_eq!(cfg.elevation(2), 0.2);
        assert!((cfg.direction(2 * 4 + 2).norm() - 1.0).abs() < 1e-15);
        let sector = LidarConfig {
            horizontal_rays: 3,
            horizontal_fov: 1.0,
            ..cfg
        };
        assert_eq!(
            (sector.azimuth(0), sector.azimuth(1), sector.azimuth(2)),
            (-0.5, 0.0, 0.5)
        );
    }

    #[test]
    fn noise_is_reproducible_and_bounded() {
        let cfg = LidarConfig {
            horizontal_rays: 64,
            vertical_rays: 8,
            vertical_center: -0.6,
            vertical_fov: 0.4,
            max_range: 30.0,
            noise: NoiseSpec {
                sigma: 0.05,
                bias: 0.0,
                seed: 5,
            },
            ..Default::default()
        };
        let w = flat_world();
        let o = Vector3::new(1.0, 2.0, 10.0);
        let a = lidar_scan(&w, &o, &Matrix3::identity(), &cfg, 0.1, 3);
        let b = lidar_scan(&w, &o, &Matrix3::identity(), &cfg, 0.1, 3);
        assert_eq!(a, b);
        assert!(!a.points.is_empty());
        assert!(a.points.iter().all(|p| p.range <= cfg.max_range));
        let c = lidar_scan(&w, &o, &Matrix3::identity(), &cfg, 0.2, 4);
        assert_ne!(a.points[0].range, c.points[0].range);
    }
}
