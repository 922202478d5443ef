use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rotorsim_cli::{bench, run_scenario, Overrides, Scenario};
use rotorsim_core::worldgen::WorldState;
use rotorsim_core::Vector3;
use rotorsim_server::protocol::DEFAULT_PORT;
use rotorsim_server::Server;

#[derive(Parser)]
#[command(name = "rotorsim", version, about = "Headless multirotor simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the world seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the physics step, s.
    #[arg(long)]
    dt: Option<f64>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            dt: self.dt,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Dynamics,
    Lidar,
    Swarm,
    All,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file to completion.
    Run {
        scenario: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Measure throughput.
    Bench {
        #[arg(value_enum, default_value = "all")]
        suite: Suite,
        /// Wall-clock budget per row, s.
        #[arg(long, default_value_t = 1.0)]
        seconds: f64,
        /// Directory for JSON reports.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Serve sessions over TCP.
    Serve {
        #[arg(long, env = "ROTORSIM_PORT", default_value_t = DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
    /// Write the cells active at the scenario's start as an OBJ mesh.
    DumpWorld {
        scenario: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

fn load(path: &Path, overrides: Overrides) -> Result<Scenario, ExitCode> {
    let mut s = match Scenario::load(path) {
        Ok(s) => s,
        Err(e) => return Err(config_failure(&e)),
    };
    overrides.apply(&mut s);
    s.validate().map_err(|e| config_failure(&e))?;
    Ok(s)
}

fn config_failure(e: &rotorsim_server::ConfigError) -> ExitCode {
    for issue in &e.issues {
        eprintln!("error: {}: {}", issue.field, issue.reason);
    }
    ExitCode::from(2)
}

fn failure(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(1)
}

fn write_report(dir: &Path, report: &bench::BenchReport) -> std::io::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!("bench_{}.json", report.suite));
    std::fs::write(&path, report.json())?;
    Ok(path)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run { scenario, common } => {
            let s = match load(&scenario, common.overrides()) {
                Ok(s) => s,
                Err(code) => return code,
            };
            match run_scenario(&s, &common.out) {
                Ok(summary) => {
                    println!("{} steps, {:.3} s simulated", summary.steps, summary.time);
                    for p in summary.trace.iter().chain(&summary.dumps) {
                        println!("wrote {}", p.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(rotorsim_cli::RunError::Config(e)) => config_failure(&e),
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(e.exit_code())
                }
            }
        }
        Command::Bench {
            suite,
            seconds,
            out,
        } => {
            if !(seconds > 0.0 && seconds.is_finite()) {
                eprintln!("error: --seconds: must be > 0");
                return ExitCode::from(2);
            }
            let budget = Duration::from_secs_f64(seconds);
            let suites = match suite {
                Suite::All => vec![Suite::Dynamics, Suite::Swarm, Suite::Lidar],
                one => vec![one],
            };
            for s in suites {
                let report = match s {
                    Suite::Dynamics => bench::dynamics(budget),
                    Suite::Swarm => bench::swarm(&bench::SWARM_SIZES, budget),
                    Suite::Lidar | Suite::All => bench::lidar(&bench::LIDAR_RAYS, budget),
                };
                println!("[{}]\n{}", report.suite, report.table());
                match write_report(&out, &report) {
                    Ok(p) => println!("wrote {}\n", p.display()),
                    Err(e) => return failure(e),
                }
            }
            ExitCode::SUCCESS
        }
        Command::Serve { port, host } => {
            let server = match Server::bind((host.as_str(), port)) {
                Ok(s) => s,
                Err(e) => return failure(format!("bind {host}:{port}: {e}")),
            };
            match server.local_addr() {
                Ok(a) => log::info!("listening on {a}"),
                Err(e) => return failure(e),
            }
            match server.run() {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => failure(e),
            }
        }
        Command::DumpWorld { scenario, common } => {
            let s = match load(&scenario, common.overrides()) {
                Ok(s) => s,
                Err(code) => return code,
            };
            let mut world = match WorldState::new(s.session.world.clone()) {
                Ok(w) => w,
                Err(e) => return failure(e),
            };
            let observers: Vec<Vector3<f64>> = s
                .session
                .uavs
                .iter()
                .map(|u| Vector3::from(u.position))
                .collect();
            if let Err(e) = world.update_cells(&observers, s.session.spectator.map(Vector3::from)) {
                return failure(e);
            }
            let path = common.out.join("world.obj");
            let written = std::fs::create_dir_all(&common.out)
                .and_then(|_| File::create(&path))
                .and_then(|f| world.write_obj(BufWriter::new(f)));
            match written {
                Ok(()) => {
                    println!(
                        "wrote {} ({} cells, {} triangles)",
                        path.display(),
                        world.active_cells().len(),
                        world.triangle_count()
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => failure(e),
            }
        }
    }
}
