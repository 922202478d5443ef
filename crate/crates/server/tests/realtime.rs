use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use rotorsim_core::control::ControlInput;
use rotorsim_core::worldgen::TerrainParams;
use rotorsim_core::Vector3;
use rotorsim_server::{Client, Mode, RealtimeRunner, Server, Session, SessionConfig, UavConfig};

fn realtime(factor: f64) -> SessionConfig {
    SessionConfig {
        mode: Mode::Realtime,
        realtime_factor: factor,
        world: TerrainParams {
            amplitude: 0.0,
            forest_density: 0.0,
            grid_resolution: 5,
            ..Default::default()
        },
        uavs: vec![UavConfig {
            position: [0.0, 0.0, 5.0],
            ..Default::default()
        }],
        ..Default::default()
    }
}

fn paced_ratio(factor: f64) -> f64 {
    let session = Arc::new(Mutex::new(Session::new(realtime(factor)).unwrap()));
    let runner = RealtimeRunner::start(session.clone()).unwrap();
    thread::sleep(Duration::from_millis(1000));
    let status = session.lock().unwrap().status();
    assert!(status.running);
    runner.stop().unwrap();
    assert!(!session.lock().unwrap().status().running);
    status.sim_time / status.wall_time
}

#[test]
fn simulated_time_tracks_wall_time() {
    for factor in [1.0, 2.0] {
        let ratio = paced_ratio(factor);
        assert!(
            (ratio / factor - 1.0).abs() < 0.02,
            "factor {factor}: ratio {ratio}"
        );
    }
}

#[test]
fn commands_interleave_with_paced_steps() {
    let h = Server::bind("127.0.0.1:0").unwrap().spawn().unwrap();
    let mut c = Client::connect(h.addr()).unwrap();
    c.create(&realtime(1.0)).unwrap();
    c.set_control(
        0,
        ControlInput::PositionHeading {
            position: Vector3::new(0.0, 0.0, 8.0),
            heading: 0.0,
        },
    )
    .unwrap();
    c.realtime_start().unwrap();
    // Starting twice is harmless.
    c.realtime_start().unwrap();
    thread::sleep(Duration::from_millis(300));
    let mid = c.status().unwrap();
    assert!(mid.running && mid.sim_time > 0.2, "{mid:?}");
    // Stepping by hand is refused while paced.
    assert!(c.step(1, false).is_err());
    c.realtime_stop().unwrap();
    let after = c.status().unwrap();
    assert!(!after.running);
    thread::sleep(Duration::from_millis(100));
    assert_eq!(c.status().unwrap().steps, after.steps);
}
