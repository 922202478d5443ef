use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::ModelError;
use crate::worldgen::{Ray, WorldState, SKY_LABEL};

/// Pinhole camera looking along the sensor x axis, image u to the right
/// (−y) and v downward (−z).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraConfig {
    pub width: u32,
    pub height: u32,
    /// rad.
    pub horizontal_fov: f64,
    /// Hz.
    pub rate: f64,
    /// Depth rays beyond this range count as misses, m.
    pub max_range: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            width: 160,
            height: 120,
            horizontal_fov: 90f64.to_radians(),
            rate: 10.0,
            max_range: 1000.0,
        }
    }
}

impl CameraConfig {
    pub fn validate(&self, field: &str) -> Result<(), ModelError> {
        if self.width == 0 || self.height == 0 || self.width > 16384 || self.height > 16384 {
            return Err(ModelError::invalid(
                format!("{field}.width"),
                "image size must be within 1..=16384",
            ));
        }
        if !(self.horizontal_fov > 0.0 && self.horizontal_fov < std::f64::consts::PI) {
            return Err(ModelError::invalid(
                format!("{field}.horizontal_fov"),
                "must be in (0, π)",
            ));
        }
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return Err(ModelError::invalid(format!("{field}.rate"), "must be > 0"));
        }
        if !(self.max_range > 0.0 && self.max_range.is_finite()) {
            return Err(ModelError::invalid(
                format!("{field}.max_range"),
                "must be > 0",
            ));
        }
        Ok(())
    }

    pub fn focal_length(&self) -> f64 {
        0.5 * self.width as f64 / (0.5 * self.horizontal_fov).tan()
    }

    /// Unit ray through the centre of pixel `(u, v)`, sensor frame.
    pub fn pixel_direction(&self, u: u32, v: u32) -> Vector3<f64> {
        let f = self.focal_length();
        let y = -(u as f64 + 0.5 - 0.5 * self.width as f64);
        let z = -(v as f64 + 0.5 - 0.5 * self.height as f64);
        Vector3::new(f, y, z).normalize()
    }

    /// Vertical FOV implied by the aspect ratio.
    pub fn vertical_fov(&self) -> f64 {
        2.0 * (0.5 * self.height as f64 / self.focal_length()).atan()
    }
}

/// Row-major per-pixel Euclidean range, `+∞` for misses.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: u32,
    pub height: u32,
    pub timestamp: f64,
    pub data: Vec<f32>,
}

/// Row-major per-pixel class, 255 for misses.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelImage {
    pub width: u32,
    pub height: u32,
    pub timestamp: f64,
    pub data: Vec<u8>,
}

/// Depth and label images from one set of rays.
pub fn render_camera(
    world: &WorldState,
    origin: &Vector3<f64>,
    rotation: &Matrix3<f64>,
    cfg: &CameraConfig,
    timestamp: f64,
) -> (DepthImage, LabelImage) {
    let (w, h) = (cfg.width, cfg.height);
    let pixels: Vec<(f32, u8)> = (0..w * h)
        .into_par_iter()
        .with_min_len(256)
        .map(|k| {
            let ray = Ray::new(*origin, rotation * cfg.pixel_direction(k % w, k / w));
            match world.cast(&ray, cfg.max_range) {
                Some(hit) => (hit.distance as f32, hit.semantic_label),
                None => (f32::INFINITY, SKY_LABEL),
            }
        })
        .collect();
    let (depth, labels) = pixels.into_iter().unzip();
    (
        DepthImage {
            width: w,
            height: h,
            timestamp,
            data: depth,
        },
        LabelImage {
            width: w,
            height: h,
            timestamp,
            data: labels,
        },
    )
}

pub fn depth_image(
    world: &WorldState,
    origin: &Vector3<f64>,
    rotation: &Matrix3<f64>,
    cfg: &CameraConfig,
    timestamp: f64,
) -> DepthImage {
    render_camera(world, origin, rotation, cfg, timestamp).0
}

pub fn label_image(
    world: &WorldState,
    origin: &Vector3<f64>,
    rotation: &Matrix3<f64>,
    cfg: &CameraConfig,
    timestamp: f64,
) -> LabelImage {
    render_camera(world, origin, rotation, cfg, timestamp).1
}
