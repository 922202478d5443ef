use rotorsim_core::control::ControlInput;
use rotorsim_core::math::{exp_so3, rotation_y};
use rotorsim_core::sensors::{LidarConfig, NoiseSpec, SensorFrame, SensorKind};
use rotorsim_core::worldgen::TerrainParams;
use rotorsim_core::{Matrix3, Vector3};
use rotorsim_server::config::{ImuConfig, NavSensorConfig, SensorsConfig};
use rotorsim_server::{Mode, Session, SessionConfig, SessionError, UavConfig, UavKind};

fn flat_world() -> TerrainParams {
    TerrainParams {
        amplitude: 0.0,
        forest_density: 0.0,
        grid_resolution: 5,
        visibility_range: 80.0,
        ..Default::default()
    }
}

fn uav(position: [f64; 3]) -> UavConfig {
    UavConfig {
        position,
        ..Default::default()
    }
}

fn session(uavs: Vec<UavConfig>) -> Session {
    Session::new(SessionConfig {
        world: flat_world(),
        uavs,
        ..Default::default()
    })
    .unwrap()
}

fn noisy_imu() -> ImuConfig {
    let mut c = ImuConfig::default();
    c.noise.accel = NoiseSpec {
        sigma: 0.05,
        bias: 0.01,
        seed: 4,
    };
    c.noise.gyro = NoiseSpec {
        sigma: 0.002,
        bias: 0.0,
        seed: 4,
    };
    c
}

#[test]
fn cell_set_covers_the_visibility_disc() {
    // At the centre of cell (0, 0) with range 80 m the four edge neighbours
    // are 50 m away and the diagonals 70.7 m, so all nine are in range and
    // the next ring (150 m) is not.
    let s = session(vec![uav([50.0, 50.0, 5.0])]);
    assert_eq!(s.status().active_cells, 9);
    let s = Session::new(SessionConfig {
        world: TerrainParams {
            visibility_range: 60.0,
            ..flat_world()
        },
        uavs: vec![uav([50.0, 50.0, 5.0])],
        ..Default::default()
    })
    .unwrap();
    assert_eq!(s.status().active_cells, 5);
}

#[test]
fn one_second_of_steps_yields_scheduled_frames() {
    let mut u = uav([50.0, 50.0, 5.0]);
    u.sensors = SensorsConfig {
        imu: Some(ImuConfig::default()),
        nav: Some(NavSensorConfig::default()),
        lidar: Some(LidarConfig {
            horizontal_rays: 16,
            vertical_rays: 2,
            ..Default::default()
        }),
        camera: None,
    };
    let mut s = session(vec![u]);
    let report = s.step(250).unwrap();
    assert_eq!(report.steps, 250);
    assert!((report.time - 1.0).abs() < 1e-12, "{}", report.time);

    let stamps = |kind: SensorKind| -> Vec<f64> {
        report
            .frames
            .iter()
            .filter(|f| f.frame.kind() == kind)
            .map(|f| f.frame.timestamp())
            .collect()
    };
    let lidar = stamps(SensorKind::Lidar);
    assert_eq!(lidar.len(), 10);
    for (k, t) in lidar.iter().enumerate() {
        assert!((t - (k + 1) as f64 * 0.1).abs() < 1e-12, "{t}");
    }
    assert_eq!(stamps(SensorKind::Imu).len(), 250);
    for kind in [SensorKind::Gnss, SensorKind::Baro, SensorKind::Mag] {
        assert_eq!(stamps(kind).len(), 10);
    }
    let latest = s.latest_frame(0, SensorKind::Lidar).unwrap().unwrap();
    assert!((latest.timestamp() - 1.0).abs() < 1e-12);
    assert!(matches!(
        s.latest_frame(0, SensorKind::Depth),
        Err(SessionError::NoSensor { .. })
    ));
}

#[test]
fn idle_vehicle_falls_ballistically() {
    let mut s = session(vec![uav([10.0, 10.0, 100.0])]);
    let g = s.model(0).unwrap().body().gravity;
    let report = s.step(500).unwrap();
    let t = report.time;
    let st = &report.states[0].state;
    let want = Vector3::new(10.0, 10.0, 100.0) + 0.5 * g * t * t;
    assert!(
        (st.position - want).norm() < 1e-9,
        "{} vs {}",
        st.position,
        want
    );
    assert!((st.velocity - g * t).norm() < 1e-9);
}

#[test]
fn identical_sessions_step_identically() {
    let mk = || {
        let mut a = uav([0.0, 0.0, 5.0]);
        a.sensors.imu = Some(noisy_imu());
        a.sensors.lidar = Some(LidarConfig {
            horizontal_rays: 32,
            vertical_rays: 4,
            noise: NoiseSpec {
                sigma: 0.05,
                bias: 0.0,
                seed: 1,
            },
            ..Default::default()
        });
        let mut s = session(vec![a, uav([30.0, 0.0, 5.0])]);
        s.set_control(
            0,
            ControlInput::PositionHeading {
                position: Vector3::new(3.0, -2.0, 8.0),
                heading: 0.4,
            },
        )
        .unwrap();
        s.set_control(
            1,
            ControlInput::VelocityHeading {
                velocity: Vector3::new(1.0, 0.0, 0.5),
                heading: 0.0,
            },
        )
        .unwrap();
        s
    };
    let (mut a, mut b) = (mk(), mk());
    for _ in 0..5 {
        assert_eq!(a.step(100).unwrap(), b.step(100).unwrap());
    }
}

#[test]
fn vehicles_do_not_interact() {
    let cmd = ControlInput::PositionHeading {
        position: Vector3::new(2.0, 1.0, 6.0),
        heading: 0.3,
    };
    let mut alone = session(vec![uav([0.0, 0.0, 5.0])]);
    let mut pair = session(vec![uav([0.0, 0.0, 5.0]), uav([1.0, 0.0, 5.0])]);
    alone.set_control(0, cmd.clone()).unwrap();
    pair.set_control(0, cmd).unwrap();
    pair.set_control(
        1,
        ControlInput::VelocityHeading {
            velocity: Vector3::new(0.0, 3.0, 0.0),
            heading: 1.0,
        },
    )
    .unwrap();
    let a = alone.step(400).unwrap();
    let p = pair.step(400).unwrap();
    assert_eq!(a.states[0].state, p.states[0].state);
    assert_ne!(p.states[0].state.position, p.states[1].state.position);
}

#[test]
fn shared_noise_config_gives_each_vehicle_its_own_stream() {
    let mut a = uav([0.0, 0.0, 5.0]);
    a.sensors.imu = Some(noisy_imu());
    let mut b = a.clone();
    b.position = [0.0, 0.0, 5.0];
    let mut s = session(vec![a, b]);
    let r = s.step(1).unwrap();
    let imu: Vec<&SensorFrame> = r.frames.iter().map(|f| &f.frame).collect();
    assert_eq!(imu.len(), 2);
    assert_eq!(r.states[0].state, r.states[1].state);
    assert_ne!(imu[0], imu[1]);
}

#[test]
fn rejected_command_keeps_the_previous_one() {
    let mut s = session(vec![uav([0.0, 0.0, 5.0])]);
    let good = ControlInput::VelocityHeading {
        velocity: Vector3::new(1.0, 0.0, 0.0),
        heading: 0.0,
    };
    s.set_control(0, good.clone()).unwrap();
    let bad = ControlInput::VelocityHeading {
        velocity: Vector3::new(f64::NAN, 0.0, 0.0),
        heading: 0.0,
    };
    assert!(matches!(
        s.set_control(0, bad),
        Err(SessionError::InvalidInput(_))
    ));
    assert_eq!(s.command(0).unwrap(), &good);
    let wrong_len = ControlInput::ActuatorThrottles(vec![0.5; 3]);
    assert!(s.set_control(0, wrong_len).is_err());
    assert_eq!(s.command(0).unwrap(), &good);
    assert!(matches!(
        s.set_control(7, good),
        Err(SessionError::NoSuchUav(7))
    ));
}

fn hitl_session(sensors: SensorsConfig) -> Session {
    let h = UavConfig {
        kind: UavKind::Hitl,
        position: [20.0, 20.0, 10.0],
        sensors,
        ..Default::default()
    };
    session(vec![h, uav([0.0, 0.0, 5.0])])
}

#[test]
fn hitl_vehicle_takes_poses_not_commands() {
    let mut s = hitl_session(SensorsConfig::default());
    let cmd = ControlInput::idle(4);
    assert!(matches!(
        s.set_control(0, cmd),
        Err(SessionError::HitlImmutable(0))
    ));
    assert!(matches!(
        s.set_hitl_pose(1, Vector3::zeros(), Matrix3::identity(), 0.0),
        Err(SessionError::NotHitl(1))
    ));
    let skew = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
    assert!(matches!(
        s.set_hitl_pose(0, Vector3::zeros(), skew, 0.0),
        Err(SessionError::InvalidInput(_))
    ));

    let r = exp_so3(&Vector3::new(0.2, -0.1, 1.0));
    let p = Vector3::new(150.0, 30.0, 12.0);
    s.set_hitl_pose(0, p, r, 3.25).unwrap();
    let report = s.step(50).unwrap();
    let st = &report.states[0].state;
    assert_eq!((st.position, st.rotation), (p, r));
    assert_eq!(st.velocity, Vector3::zeros());
    // The lifecycle follows the new pose: cell (1, 0) is now active.
    assert!(s
        .world()
        .active_cells()
        .iter()
        .any(|c| (c.ix, c.iy) == (1, 0)));
}

#[test]
fn hitl_nadir_lidar_sees_the_ground_at_pose_height() {
    let lidar = LidarConfig {
        horizontal_rays: 1,
        vertical_rays: 1,
        horizontal_fov: 0.1,
        vertical_fov: 0.1,
        ..Default::default()
    };
    let mut s = hitl_session(SensorsConfig {
        lidar: Some(lidar),
        ..Default::default()
    });
    // Body x pointing straight down.
    s.set_hitl_pose(
        0,
        Vector3::new(40.0, 60.0, 10.0),
        rotation_y(90f64.to_radians()),
        7.5,
    )
    .unwrap();
    let SensorFrame::PointCloud(cloud) = s.sample_sensor(0, SensorKind::Lidar).unwrap() else {
        panic!()
    };
    assert_eq!(cloud.timestamp, 7.5);
    assert_eq!(cloud.points.len(), 1);
    assert!(
        (cloud.points[0].range - 10.0).abs() < 1e-9,
        "{}",
        cloud.points[0].range
    );
}

#[test]
fn hitl_imu_reads_the_gravity_reaction() {
    let mut s = hitl_session(SensorsConfig {
        imu: Some(ImuConfig::default()),
        ..Default::default()
    });
    let g = s.model(0).unwrap().body().gravity;
    let r = exp_so3(&Vector3::new(0.3, 0.5, -0.8));
    s.set_hitl_pose(0, Vector3::new(20.0, 20.0, 10.0), r, 1.0)
        .unwrap();
    let SensorFrame::Imu { timestamp, sample } = s.sample_sensor(0, SensorKind::Imu).unwrap()
    else {
        panic!()
    };
    assert_eq!(timestamp, 1.0);
    assert!((sample.accel - r.transpose() * -g).norm() < 1e-12);
    assert_eq!(sample.gyro, Vector3::zeros());
}

#[test]
fn stepping_is_refused_in_realtime_mode() {
    let mut s = Session::new(SessionConfig {
        mode: Mode::Realtime,
        world: flat_world(),
        uavs: vec![uav([0.0, 0.0, 5.0])],
        ..Default::default()
    })
    .unwrap();
    assert!(matches!(
        s.step(1),
        Err(SessionError::BadMode(Mode::Realtime))
    ));
}

#[test]
fn invalid_configuration_is_reported_by_field() {
    let mut u = uav([0.0, 0.0, 5.0]);
    u.airframe.mass = -1.0;
    let err = match Session::new(SessionConfig {
        uavs: vec![u],
        ..Default::default()
    }) {
        Err(SessionError::Config(e)) => e,
        other => panic!("{:?}", other.err()),
    };
    assert_eq!(err.issues[0].field, "uavs[0].airframe.mass");
}
