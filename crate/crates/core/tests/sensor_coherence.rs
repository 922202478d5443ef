//! Sensor outputs against independent per-ray queries of the world.

use rotorsim_core::math::{exp_so3, rotation_y};
use rotorsim_core::sensors::{lidar_scan, render_camera, CameraConfig, LidarConfig, NoiseSpec};
use rotorsim_core::worldgen::{terrain_height, CellIndex, TerrainParams, WorldState, SKY_LABEL};
use rotorsim_core::{Matrix3, Vector3};

fn forest() -> WorldState {
    let p = TerrainParams {
        seed: 5,
        grid_resolution: 33,
        amplitude: 10.0,
        forest_density: 0.01,
        ..Default::default()
    };
    let cells = (-1..=1).flat_map(|iy| (-1..=1).map(move |ix| CellIndex::new(ix, iy)));
    WorldState::with_cells(p, cells).unwrap()
}

fn sensor_pose(w: &WorldState) -> (Vector3<f64>, Matrix3<f64>) {
    let ground = terrain_height(40.0, 60.0, w.params());
    (
        Vector3::new(40.0, 60.0, ground + 3.0),
        exp_so3(&Vector3::new(0.05, -0.1, 0.7)),
    )
}

#[test]
fn lidar_points_match_per_ray_raycasts() {
    let w = forest();
    let (origin, rotation) = sensor_pose(&w);
    let cfg = LidarConfig {
        horizontal_rays: 360,
        vertical_rays: 16,
        max_range: 80.0,
        ..Default::default()
    };
    let cloud = lidar_scan(&w, &origin, &rotation, &cfg, 1.5, 0);
    assert_eq!(cloud.timestamp, 1.5);

    let mut points = cloud.points.iter().peekable();
    let mut labels_seen = std::collections::BTreeSet::new();
    for k in 0..cfg.ray_count() as u32 {
        let d = cfg.direction(k);
        let want = w.raycast(origin, rotation * d, cfg.max_range).unwrap();
        let got = points.next_if(|p| p.ray_index == k);
        match (got, want) {
            (Some(p), Some(h)) => {
                assert_eq!(p.range, h.distance, "ray {k}");
                assert_eq!(p.intensity, Some(h.material_intensity));
                assert_eq!(p.label, Some(h.semantic_label));
                assert_eq!(p.position, d * h.distance);
                labels_seen.insert(h.semantic_label);
            }
            (None, None) => {}
            other => panic!("ray {k}: {other:?}"),
        }
    }
    assert!(points.next().is_none());
    // Terrain and trees both appear in the scan.
    assert!(labels_seen.len() >= 2, "{labels_seen:?}");
}

#[test]
fn disabled_channels_are_absent() {
    let w = forest();
    let (origin, rotation) = sensor_pose(&w);
    let cfg = LidarConfig {
        horizontal_rays: 64,
        vertical_rays: 4,
        intensity: false,
        labels: false,
        ..Default::default()
    };
    let cloud = lidar_scan(&w, &origin, &rotation, &cfg, 0.0, 0);
    assert!(!cloud.points.is_empty());
    assert!(cloud
        .points
        .iter()
        .all(|p| p.intensity.is_none() && p.label.is_none()));
}

#[test]
fn depth_and_label_images_match_per_pixel_raycasts() {
    let w = forest();
    let (origin, _) = sensor_pose(&w);
    // Pitched down 30° so the image holds ground, trees and sky.
    let rotation = exp_so3(&Vector3::new(0.0, 0.0, 1.1)) * rotation_y(30f64.to_radians());
    let cfg = CameraConfig {
        width: 8,
        height: 8,
        horizontal_fov: 100f64.to_radians(),
        max_range: 120.0,
        ..Default::default()
    };
    let (depth, labels) = render_camera(&w, &origin, &rotation, &cfg, 2.0);
    assert_eq!((depth.width, depth.height, depth.data.len()), (8, 8, 64));
    assert_eq!(labels.data.len(), 64);
    let mut sky = 0;
    for v in 0..8 {
        for u in 0..8 {
            let k = (v * 8 + u) as usize;
            match w
                .raycast(origin, rotation * cfg.pixel_direction(u, v), cfg.max_range)
                .unwrap()
            {
                Some(h) => {
                    assert_eq!(depth.data[k], h.distance as f32, "pixel ({u}, {v})");
                    assert_eq!(labels.data[k], h.semantic_label);
                }
                None => {
                    assert_eq!(depth.data[k], f32::INFINITY);
                    assert_eq!(labels.data[k], SKY_LABEL);
                    sky += 1;
                }
            }
        }
    }
    assert!(sky > 0 && sky < 64, "{sky}");
}

fn moments(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[test]
fn noise_stream_statistics() {
    let spec = NoiseSpec {
        sigma: 0.3,
        bias: 0.05,
        seed: 9,
    };
    let xs: Vec<f64> = (0..1000u64)
        .flat_map(|i| {
            let mut s = spec.stream(i);
            (0..100).map(move |_| s.sample())
        })
        .collect();
    assert_eq!(xs.len(), 100_000);
    let (mean, sd) = moments(&xs);
    assert!((sd - 0.3).abs() <= 0.05 * 0.3, "sigma {sd}");
    assert!((mean - 0.05).abs() <= 0.05 * 0.3, "mean {mean}");
}

#[test]
fn lidar_range_noise_statistics() {
    // Flat ground well inside range so clamping never applies.
    let p = TerrainParams {
        amplitude: 0.0,
        forest_density: 0.0,
        grid_resolution: 5,
        ..Default::default()
    };
    let w = WorldState::with_cells(p, [CellIndex::new(0, 0)]).unwrap();
    let origin = Vector3::new(50.0, 50.0, 10.0);
    let down = rotation_y(90f64.to_radians());
    let base = LidarConfig {
        horizontal_rays: 250,
        vertical_rays: 100,
        horizontal_fov: 60f64.to_radians(),
        vertical_fov: 60f64.to_radians(),
        max_range: 100.0,
        ..Default::default()
    };
    let noisy = LidarConfig {
        noise: NoiseSpec {
            sigma: 0.02,
            bias: 0.0,
            seed: 3,
        },
        ..base.clone()
    };
    let mut residuals = Vec::new();
    for scan in 0..4 {
        let clean = lidar_scan(&w, &origin, &down, &base, 0.0, scan);
        let dirty = lidar_scan(&w, &origin, &down, &noisy, 0.0, scan);
        assert_eq!(clean.points.len(), base.ray_count());
        for (c, d) in clean.points.iter().zip(&dirty.points) {
            assert_eq!(c.ray_index, d.ray_index);
            residuals.push(d.range - c.range);
        }
    }
    assert_eq!(residuals.len(), 100_000);
    let (mean, sd) = moments(&residuals);
    assert!((sd - 0.02).abs() <= 0.05 * 0.02, "sigma {sd}");
    assert!(mean.abs() <= 0.05 * 0.02, "mean {mean}");
}
