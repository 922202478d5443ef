//! Throughput benchmarks: dynamics stepping, multi-vehicle real-time
//! factor and LiDAR scan rate.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rotorsim_core::control::ControlInput;
use rotorsim_core::sensors::{lidar_scan, LidarConfig};
use rotorsim_core::worldgen::{terrain_height, TerrainParams, WorldState};
use rotorsim_core::{Matrix3, Vector3};
use rotorsim_server::{Session, SessionConfig, UavConfig};
use serde::Serialize;

/// Ray counts of the LiDAR suite.
pub const LIDAR_RAYS: [u32; 6] = [128, 256, 1024, 4096, 8192, 32768];
pub const SWARM_SIZES: [usize; 4] = [1, 10, 100, 400];
pub const DYNAMICS_SIZES: [usize; 4] = [1, 2, 4, 8];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    /// Vehicles or rays, depending on the suite.
    pub size: u64,
    pub value: f64,
    pub unit: &'static str,
    pub iterations: u64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub suite: &'static str,
    pub size_label: &'static str,
    pub scene: Option<String>,
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn table(&self) -> String {
        let mut out = String::new();
        if let Some(scene) = &self.scene {
            let _ = writeln!(out, "scene: {scene}");
        }
        let unit = self.rows.first().map_or("", |r| r.unit);
        let _ = writeln!(
            out,
            "{:>10}  {:>14}  {:>10}  {:>9}",
            self.size_label, unit, "iterations", "seconds"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:>10}  {:>14.1}  {:>10}  {:>9.3}",
                r.size, r.value, r.iterations, r.seconds
            );
        }
        out
    }

    pub fn json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Runs `f` until `budget` has elapsed and at least `min` times. Returns
/// (iterations, seconds).
fn measure(budget: Duration, min: u64, mut f: impl FnMut()) -> (u64, f64) {
    let start = Instant::now();
    let mut n = 0;
    while n < min || start.elapsed() < budget {
        f();
        n += 1;
    }
    (n, start.elapsed().as_secs_f64())
}

/// Hovering vehicles on a 5 m grid over flat ground, no sensors.
pub fn hover_session(count: usize) -> Session {
    let side = (count as f64).sqrt().ceil() as usize;
    let uavs = (0..count)
        .map(|i| UavConfig {
            position: [5.0 * (i % side) as f64, 5.0 * (i / side) as f64, 10.0],
            ..Default::default()
        })
        .collect();
    let world = TerrainParams {
        amplitude: 0.0,
        forest_density: 0.0,
        grid_resolution: 5,
        ..Default::default()
    };
    let mut s = Session::new(SessionConfig {
        world,
        uavs,
        ..Default::default()
    })
    .expect("valid benchmark session");
    for i in 0..count as u32 {
        let p = s.snapshot(i).expect("vehicle exists").state.position;
        s.set_control(
            i,
            ControlInput::PositionHeading {
                position: p,
                heading: 0.0,
            },
        )
        .expect("finite command");
    }
    s
}

/// Session steps per second for a few vehicle counts.
pub fn dynamics(budget: Duration) -> BenchReport {
    let rows = DYNAMICS_SIZES
        .iter()
        .map(|&n| {
            let mut s = hover_session(n);
            let (iterations, seconds) = measure(budget, 100, || {
                s.step(100).expect("hover is stable");
            });
            let steps = iterations * 100;
            BenchRow {
                size: n as u64,
                value: steps as f64 / seconds,
                unit: "steps/s",
                iterations: steps,
                seconds,
            }
        })
        .collect();
    BenchReport {
        suite: "dynamics",
        size_label: "uavs",
        scene: None,
        rows,
    }
}

/// Simulated seconds per wall-clock second at the default 250 Hz step.
pub fn swarm_factor(count: usize, budget: Duration) -> BenchRow {
    let mut s = hover_session(count);
    let dt = s.config().dt;
    let (iterations, seconds) = measure(budget, 25, || {
        s.step(10).expect("hover is stable");
    });
    let steps = iterations * 10;
    BenchRow {
        size: count as u64,
        value: steps as f64 * dt / seconds,
        unit: "realtime x",
        iterations: steps,
        seconds,
    }
}

pub fn swarm(sizes: &[usize], budget: Duration) -> BenchReport {
    BenchReport {
        suite: "swarm",
        size_label: "uavs",
        scene: None,
        rows: sizes.iter().map(|&n| swarm_factor(n, budget)).collect(),
    }
}

/// Nine forested cells at 97×97 vertices each, with the sensor 2 m above
/// the ground at the centre cell.
pub fn lidar_scene() -> (WorldState, Vector3<f64>) {
    let p = TerrainParams {
        grid_resolution: 97,
        forest_density: 0.01,
        ..Default::default()
    };
    let mut w = WorldState::new(p.clone()).expect("valid benchmark terrain");
    let (x, y) = (50.0, 50.0);
    w.update_cells(&[Vector3::new(x, y, 0.0)], None)
        .expect("finite observer");
    (w, Vector3::new(x, y, terrain_height(x, y, &p) + 2.0))
}

/// 360° fan with 8 rows below 1024 rays and 32 rows from there on.
pub fn lidar_config(rays: u32) -> LidarConfig {
    let vertical = if rays >= 1024 { 32 } else { 8 };
    LidarConfig {
        horizontal_rays: rays / vertical,
        vertical_rays: vertical,
        max_range: 100.0,
        ..Default::default()
    }
}

pub fn lidar_rate(
    world: &WorldState,
    origin: &Vector3<f64>,
    rays: u32,
    budget: Duration,
) -> BenchRow {
    let cfg = lidar_config(rays);
    let mut k = 0;
    let (iterations, seconds) = measure(budget, 3, || {
        std::hint::black_box(lidar_scan(
            world,
            origin,
            &Matrix3::identity(),
            &cfg,
            0.0,
            k,
        ));
        k += 1;
    });
    BenchRow {
        size: rays as u64,
        value: iterations as f64 / seconds,
        unit: "scans/s",
        iterations,
        seconds,
    }
}

pub fn lidar(rays: &[u32], budget: Duration) -> BenchReport {
    let (world, origin) = lidar_scene();
    let scene = format!(
        "{} cells, {} triangles",
        world.active_cells().len(),
        world.triangle_count()
    );
    let rows = rays
        .iter()
        .map(|&n| lidar_rate(&world, &origin, n, budget))
        .collect();
    BenchReport {
        suite: "lidar",
        size_label: "rays",
        scene: Some(scene),
        rows,
    }
}
