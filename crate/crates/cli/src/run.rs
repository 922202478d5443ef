//! Headless execution of a scenario.

use std::fs::File;
use std::io::{self, BufWriter};
use std::path::{Path, PathBuf};

use rotorsim_core::control::ControlInput;
use rotorsim_core::dynamics::ModelError;
use rotorsim_server::{ConfigError, Session, SessionError};
use thiserror::Error;

use crate::scenario::Scenario;
use crate::trace::{SensorDumps, TraceWriter};

pub const TRACE_FILE: &str = "trace.csv";
pub const SENSOR_DIR: &str = "sensors";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("simulation diverged at t = {time} s: {source}")]
    Diverged { time: f64, source: SessionError },
    #[error("simulation failed at t = {time} s: {source}")]
    Session { time: f64, source: SessionError },
    #[error("output: {0}")]
    Io(#[from] io::Error),
}

impl RunError {
    /// 2 for configuration errors, 3 for divergence, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Config(_) => 2,
            RunError::Diverged { .. } => 3,
            RunError::Session { .. } | RunError::Io(_) => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub steps: u64,
    pub time: f64,
    pub trace: Option<PathBuf>,
    pub dumps: Vec<PathBuf>,
}

/// Command-line overrides applied on top of the scenario file.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub dt: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, s: &mut Scenario) {
        if let Some(seed) = self.seed {
            s.session.world.seed = seed;
        }
        if let Some(dt) = self.dt {
            s.session.dt = dt;
        }
    }
}

/// Runs the scenario to completion in stepped mode, writing the trace and
/// sensor dumps under `out`. Commands whose time has been reached are
/// latched before the step that starts at or after that time.
pub fn run_scenario(scenario: &Scenario, out: &Path) -> Result<RunSummary, RunError> {
    scenario.validate()?;
    let mut session = Session::new(scenario.session.clone()).map_err(|e| match e {
        SessionError::Config(c) => RunError::Config(c),
        other => RunError::Config(ModelError::invalid("session", other.to_string()).into()),
    })?;
    std::fs::create_dir_all(out)?;

    let motors = (0..session.uav_count() as u32)
        .map(|i| session.model(i).map(|m| m.motor_count()).unwrap_or(0))
        .max();
    let trace_path = out.join(TRACE_FILE);
    let mut trace = match scenario.outputs.trace {
        true => Some(TraceWriter::new(
            BufWriter::new(File::create(&trace_path)?),
            motors.unwrap_or(0),
        )?),
        false => None,
    };
    let mut dumps = SensorDumps::new(&out.join(SENSOR_DIR), scenario.outputs.sensor_kinds());
    if let Some(t) = &mut trace {
        for s in session.snapshots() {
            t.row(0.0, &s)?;
        }
    }

    let dt = scenario.session.dt;
    let total = scenario.steps();
    let every = scenario.outputs.trace_every as u64;
    let mut pending = scenario.commands.iter().enumerate().peekable();
    for k in 0..total {
        let now = k as f64 * dt;
        while let Some((i, c)) = pending.next_if(|(_, c)| c.time <= now + 1e-9 * dt) {
            session
                .set_control(c.uav, ControlInput::from(&c.input))
                .map_err(|e| {
                    RunError::Config(
                        ModelError::invalid(format!("commands[{i}]"), e.to_string()).into(),
                    )
                })?;
        }
        let report = session.step(1).map_err(|e| match e {
            SessionError::Diverged { .. } => RunError::Diverged {
                time: now,
                source: e,
            },
            e => RunError::Session {
                time: now,
                source: e,
            },
        });
        let report = match report {
            Ok(r) => r,
            Err(e) => {
                // Keep what was recorded up to the failure.
                if let Some(t) = trace.take() {
                    t.finish()?;
                }
                dumps.finish()?;
                return Err(e);
            }
        };
        for f in &report.frames {
            dumps.record(f.uav, &f.frame)?;
        }
        if let Some(t) = &mut trace {
            if (k + 1) % every == 0 {
                for s in &report.states {
                    t.row(report.time, s)?;
                }
            }
        }
    }
    if let Some(t) = trace.take() {
        t.finish()?;
    }
    Ok(RunSummary {
        steps: session.steps(),
        time: session.time(),
        trace: scenario.outputs.trace.then_some(trace_path),
        dumps: dumps.finish()?,
    })
}
