use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Duration;

use rotorsim_cli::bench;
use rotorsim_cli::trace::read_dump;
use rotorsim_cli::{run_scenario, Scenario};

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name)
}

fn rotorsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rotorsim"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn trace_matches_golden_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = rotorsim(&["run", golden("fall.toml").to_str().unwrap(), "--out", out]);
    assert!(o.status.success(), "{}", stderr(&o));
    let got = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    let want = std::fs::read_to_string(golden("fall_trace.csv")).unwrap();
    assert_eq!(got, want);

    // The recorded values are the free-fall solution.
    for line in got.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        let (t, z0) = (v[0], if v[1] == 0.0 { 10.0 } else { 20.0 });
        assert!((v[4] - (z0 - 0.5 * 9.81 * t * t)).abs() < 1e-12, "{line}");
        assert!((v[7] + 9.81 * t).abs() < 1e-12, "{line}");
    }
}

#[test]
fn hover_holds_position() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/hover.toml");
    let s = Scenario::load(&scenario).unwrap();
    let summary = run_scenario(&s, dir.path()).unwrap();
    assert_eq!(summary.steps, 1250);
    let trace = std::fs::read_to_string(summary.trace.unwrap()).unwrap();
    let last: Vec<f64> = trace
        .lines()
        .last()
        .unwrap()
        .split(',')
        .map(|x| x.parse().unwrap())
        .collect();
    assert_eq!(last[0], 5.0);
    let start = s.session.uavs[0].position;
    let drift = ((last[2] - start[0]).powi(2)
        + (last[3] - start[1]).powi(2)
        + (last[4] - start[2]).powi(2))
    .sqrt();
    assert!(drift <= 0.05, "drift {drift}");
}

#[test]
fn negative_mass_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    let text = std::fs::read_to_string(golden("fall.toml")).unwrap();
    std::fs::write(
        &path,
        text.replacen(
            "position = [1.0, 2.0, 10.0]",
            "position = [1.0, 2.0, 10.0]\nairframe.mass = -1.0",
            1,
        ),
    )
    .unwrap();
    let o = rotorsim(&[
        "run",
        path.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(
        stderr(&o).contains("session.uavs[0].airframe.mass"),
        "{}",
        stderr(&o)
    );
    assert!(!dir.path().join("trace.csv").exists());
}

#[test]
fn unknown_field_is_reported_with_its_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    let text = std::fs::read_to_string(golden("fall.toml")).unwrap();
    std::fs::write(&path, text.replace("forest_density", "forest_densty")).unwrap();
    let o = rotorsim(&[
        "run",
        path.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(
        stderr(&o).contains("session.world.forest_densty"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn divergence_has_its_own_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("blowup.toml");
    // Gravity large enough that the first integration step overflows.
    let text = std::fs::read_to_string(golden("fall.toml"))
        .unwrap()
        .replace("duration = 0.012", "duration = 2.0")
        .replacen(
            "position = [1.0, 2.0, 10.0]",
            "position = [1.0, 2.0, 10.0]\nairframe.gravity = [0.0, 0.0, -1e308]",
            1,
        );
    std::fs::write(&path, text).unwrap();
    let o = rotorsim(&[
        "run",
        path.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("diverged"), "{}", stderr(&o));
    // Rows up to the failure are kept.
    let trace = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 3);
}

#[test]
fn overrides_change_seed_and_step() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = rotorsim(&[
        "run",
        golden("fall.toml").to_str().unwrap(),
        "--out",
        out,
        "--dt",
        "0.006",
        "--seed",
        "9",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let trace = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    // 0.012 s at 6 ms is two steps: three rows per vehicle.
    assert_eq!(trace.lines().count(), 1 + 3 * 2);
    assert!(trace.lines().last().unwrap().starts_with("0.012,1,"));
    let o = rotorsim(&[
        "run",
        golden("fall.toml").to_str().unwrap(),
        "--out",
        out,
        "--dt=-1",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("session.dt"), "{}", stderr(&o));
}

#[test]
fn repeated_runs_write_identical_files() {
    let scenario = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/waypoint.toml");
    let mut s = Scenario::load(&scenario).unwrap();
    s.duration = 3.0;
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = run_scenario(&s, a.path()).unwrap();
    let rb = run_scenario(&s, b.path()).unwrap();
    assert_eq!(ra.dumps.len(), 2);
    for (pa, pb) in ra
        .trace
        .iter()
        .chain(&ra.dumps)
        .zip(rb.trace.iter().chain(&rb.dumps))
    {
        assert_eq!(pa.file_name(), pb.file_name());
        assert!(
            std::fs::read(pa).unwrap() == std::fs::read(pb).unwrap(),
            "{} differs",
            pa.display()
        );
    }
    let lidar = std::fs::read(a.path().join("sensors/uav0_lidar.bin")).unwrap();
    let records = read_dump(&lidar).unwrap();
    assert_eq!(records.len(), 30);
    for (k, (t, payload)) in records.iter().enumerate() {
        assert!((t - 0.1 * (k + 1) as f64).abs() < 1e-12);
        let n = u32::from_le_bytes(payload[..4].try_into().unwrap()) as usize;
        assert_eq!(payload.len(), 4 + 21 * n);
    }
}

#[test]
fn dump_world_writes_a_mesh() {
    let dir = tempfile::tempdir().unwrap();
    let o = rotorsim(&[
        "dump-world",
        golden("fall.toml").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let obj = std::fs::read_to_string(dir.path().join("world.obj")).unwrap();
    let vertices = obj.lines().filter(|l| l.starts_with("v ")).count();
    let faces = obj.lines().filter(|l| l.starts_with("f ")).count();
    assert!(vertices > 0 && faces > 0);
}

#[test]
fn bench_reports_every_row() {
    let short = Duration::from_millis(20);
    let report = bench::lidar(&bench::LIDAR_RAYS, short);
    let rays: Vec<u64> = report.rows.iter().map(|r| r.size).collect();
    assert_eq!(rays, [128, 256, 1024, 4096, 8192, 32768]);
    for r in &report.rows {
        assert_eq!(
            bench::lidar_config(r.size as u32).ray_count() as u64,
            r.size
        );
        assert!(r.value > 0.0);
    }
    let swarm = bench::swarm(&[1], short);
    assert!(swarm.rows[0].value > 1.0, "{:?}", swarm.rows[0]);
    let dynamics = bench::dynamics(short);
    assert!(dynamics.rows.iter().all(|r| r.value > 0.0));
    let json: serde_json::Value = serde_json::from_str(&report.json()).unwrap();
    assert_eq!(json["rows"].as_array().unwrap().len(), 6);
    assert!(report.table().lines().count() >= 7);
}

#[test]
fn serve_port_comes_from_the_environment() {
    let o = Command::new(env!("CARGO_BIN_EXE_rotorsim"))
        .args(["serve", "--help"])
        .output()
        .unwrap();
    assert!(String::from_utf8_lossy(&o.stdout).contains("ROTORSIM_PORT"));
}
