use std::fs;
use std::io::{self, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use glovekit::calibration::{
    CalibrationProfile, CouplingMap, ForceFeedbackMap, DEFAULT_JOINT_RANGE,
};
use glovekit::control::{Gains, PlantParams, CONTROL_RATE_HZ, MOVEMENT_DURATION_S};
use glovekit::emulator::{run_emulator, Emulator, Pacing};
use glovekit::model::{
    BasisConfig, TrajectoryModel, DEFAULT_EPS_REG, DEFAULT_NUM_BASIS, DEFAULT_RIDGE,
};
use glovekit::pipeline::transport::{self, TransportSpec};
use glovekit::pipeline::{self, DemoFile, RecordSettings, TactileProfile};
use glovekit::protocol::STREAM_RATE_HZ;
use glovekit::Error;

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_TRANSPORT: u8 = 4;

#[derive(Parser)]
#[command(
    name = "glovekit",
    version,
    about = "Sensor-glove recording, movement-primitive training and reproduction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Stream a virtual glove's sensor frames to a transport.
    #[command(name = "glove-emulate")]
    Emulate {
        /// Emulator config (flat `key = value` file).
        #[arg(long)]
        config: PathBuf,
        /// Seconds of stream to produce.
        #[arg(long)]
        duration: f64,
        /// Write as fast as possible instead of pacing at the frame rate.
        #[arg(long)]
        fast: bool,
        /// pipe | tcp:PORT | file:PATH
        #[arg(long)]
        transport: String,
        /// Overrides the config seed and DEMO_SEED.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Capture per-channel flex extrema and write a calibration profile.
    Calibrate {
        /// pipe | tcp:[HOST:]PORT | file:PATH | emu:CONFIG
        #[arg(long)]
        transport: String,
        #[arg(long)]
        duration: f64,
        #[arg(long, default_value_t = STREAM_RATE_HZ)]
        stream_rate: f64,
        #[arg(long, default_value_t = DEFAULT_JOINT_RANGE.0)]
        joint_min: f64,
        #[arg(long, default_value_t = DEFAULT_JOINT_RANGE.1)]
        joint_max: f64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Record one demonstration from a glove stream.
    Record {
        /// pipe | tcp:[HOST:]PORT | file:PATH | emu:CONFIG
        #[arg(long)]
        transport: String,
        #[arg(long)]
        calibration: PathBuf,
        /// Joint coupling map; defaults to thumb/index/middle/ring+little.
        #[arg(long)]
        coupling: Option<PathBuf>,
        #[arg(long, default_value_t = MOVEMENT_DURATION_S)]
        duration: f64,
        #[arg(long, default_value_t = STREAM_RATE_HZ)]
        stream_rate: f64,
        #[arg(long, default_value_t = CONTROL_RATE_HZ)]
        control_rate: f64,
        /// Seed for an `emu:` transport; overrides the config seed and DEMO_SEED.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Send scripted tactile forces to the glove as PWM commands.
    Feedback {
        /// tactile-v1 file
        #[arg(long)]
        tactile: PathBuf,
        /// pipe | tcp:[HOST:]PORT | file:PATH
        #[arg(long)]
        transport: String,
        /// Tactile reading that maps to full duty cycle.
        #[arg(long)]
        f_max: f64,
        #[arg(long)]
        fast: bool,
    },
    /// Fit a movement-primitive model to demonstrations.
    Train {
        #[arg(required = true)]
        demos: Vec<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_NUM_BASIS)]
        num_basis: usize,
        /// Basis width in phase units; defaults to the center spacing.
        #[arg(long)]
        width: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_RIDGE)]
        ridge: f64,
        #[arg(long, default_value_t = DEFAULT_EPS_REG)]
        eps_reg: f64,
        /// Fixed observation-noise variance (rad^2) instead of the estimate.
        #[arg(long)]
        noise_var: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Track the model's mean trajectory on the simulated plant.
    Reproduce {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = MOVEMENT_DURATION_S)]
        duration: f64,
        #[arg(long, default_value_t = CONTROL_RATE_HZ)]
        control_rate: f64,
        #[arg(long, default_value_t = 5.0)]
        kp: f64,
        #[arg(long, default_value_t = 0.2)]
        kd: f64,
        #[arg(long, default_value_t = 0.01)]
        inertia: f64,
        #[arg(long, default_value_t = 0.05)]
        damping: f64,
        #[arg(long, default_value_t = 2.0)]
        torque_limit: f64,
        /// Tracking CSV output.
        #[arg(long)]
        out: PathBuf,
        /// Per-joint error summary output.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Score demonstrations against a model.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(required = true)]
        demos: Vec<PathBuf>,
        /// Plot-ready CSV (time, mean, std, demos).
        #[arg(long)]
        plot: Option<PathBuf>,
        /// Per-demo, per-joint report CSV.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

fn exit_code(err: &Error) -> u8 {
    match err.root() {
        Error::InvalidArgument(_) => EXIT_USAGE,
        Error::Transport(_) => EXIT_TRANSPORT,
        _ => EXIT_DATA,
    }
}

fn seed_override(flag: Option<u64>) -> Result<Option<u64>, Error> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("DEMO_SEED") {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::InvalidArgument(format!("DEMO_SEED is not an integer: {s:?}"))),
        Err(_) => Ok(None),
    }
}

fn read_text(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path.display().to_string()))
}

fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    fs::write(path, text).map_err(|e| Error::from(e).in_file(path.display().to_string()))
}

fn load<T>(path: &Path, parse: impl FnOnce(&str) -> Result<T, Error>) -> Result<T, Error> {
    parse(&read_text(path)?).map_err(|e| e.in_file(path.display().to_string()))
}

fn parse_transport(s: &str) -> Result<TransportSpec, Error> {
    s.parse()
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Emulate {
            config,
            duration,
            fast,
            transport,
            seed,
        } => {
            let mut cfg = transport::load_emulator_config(&config)?;
            if let Some(seed) = seed_override(seed)? {
                cfg.seed = seed;
            }
            let pacing = if fast { Pacing::Fast } else { Pacing::RealTime };
            let mut emu = Emulator::new(cfg)?;
            let report = match parse_transport(&transport)? {
                TransportSpec::Pipe => {
                    let mut out = io::BufWriter::new(io::stdout().lock());
                    run_emulator(&mut emu, duration, pacing, &mut out, None)?
                }
                TransportSpec::File(path) => {
                    let file = fs::File::create(&path)
                        .map_err(|e| Error::Transport(format!("create {}: {e}", path.display())))?;
                    let mut out = io::BufWriter::new(file);
                    run_emulator(&mut emu, duration, pacing, &mut out, None)?
                }
                TransportSpec::Tcp { host, port } => {
                    let listener = TcpListener::bind((host.as_str(), port))
                        .map_err(|e| Error::Transport(format!("bind {host}:{port}: {e}")))?;
                    eprintln!("listening on {}", listener.local_addr()?);
                    transport::serve_tcp(listener, &mut emu, duration, pacing)?
                }
                TransportSpec::Emulator(_) => {
                    return Err(Error::InvalidArgument(
                        "emulator cannot stream into emu:".into(),
                    ))
                }
            };
            eprintln!(
                "frames written: {}; last pwm: {}",
                report.frames_written,
                emu.last_pwm()
            );
            if report.closed_early {
                return Err(Error::Transport(format!(
                    "transport closed after {} frames",
                    report.frames_written
                )));
            }
        }
        Command::Calibrate {
            transport,
            duration,
            stream_rate,
            joint_min,
            joint_max,
            seed,
            out,
        } => {
            let spec = parse_transport(&transport)?;
            let reader = transport::open_reader(&spec, duration, seed_override(seed)?)?;
            let cap = pipeline::capture_extrema(reader, duration, stream_rate)?;
            eprintln!(
                "frames received: {}; bytes skipped: {}",
                cap.frames_received, cap.bytes_skipped
            );
            let profile = cap.extrema.finalize(joint_min, joint_max)?;
            write_text(&out, &profile.to_text())?;
        }
        Command::Record {
            transport,
            calibration,
            coupling,
            duration,
            stream_rate,
            control_rate,
            seed,
            out,
        } => {
            let profile = load(&calibration, CalibrationProfile::parse)?;
            let coupling = match coupling {
                Some(path) => load(&path, CouplingMap::parse)?,
                None => CouplingMap::default_hand(),
            };
            let settings = RecordSettings {
                duration,
                stream_rate,
                control_rate,
                profile,
                coupling,
            };
            settings.validate()?;
            let spec = parse_transport(&transport)?;
            let reader = transport::open_reader(&spec, duration, seed_override(seed)?)?;
            let outcome = pipeline::record(reader, &settings)?;
            write_text(&out, &outcome.demo.to_text())?;
            eprintln!(
                "frames received: {}/{}; bytes skipped: {}; rows: {}",
                outcome.frames_received,
                outcome.frames_expected,
                outcome.bytes_skipped,
                outcome.demo.samples()
            );
            if !outcome.complete() {
                return Err(Error::Transport(format!(
                    "stream ended after {} of {} bytes; wrote partial demo",
                    outcome.bytes_received,
                    outcome.frames_expected * glovekit::protocol::FRAME_LEN as u64
                )));
            }
        }
        Command::Feedback {
            tactile,
            transport,
            f_max,
            fast,
        } => {
            let profile = load(&tactile, TactileProfile::parse)?;
            let map = ForceFeedbackMap::with_full_scale(f_max)?;
            let mut sink = transport::open_command_writer(&parse_transport(&transport)?)?;
            let pacing = if fast { Pacing::Fast } else { Pacing::RealTime };
            let report = pipeline::feedback_loop(&profile, &map, &mut sink, pacing)?;
            eprintln!("commands sent: {}", report.sent.len());
            if let Some(last) = report.sent.last() {
                eprintln!("last command: {last}");
            }
            if report.closed_early {
                return Err(Error::Transport("transport closed during feedback".into()));
            }
        }
        Command::Train {
            demos,
            num_basis,
            width,
            ridge,
            eps_reg,
            noise_var,
            out,
        } => {
            let files = demos
                .iter()
                .map(|p| load(p, DemoFile::parse))
                .collect::<Result<Vec<_>, _>>()?;
            let mut basis = BasisConfig::new(num_basis)?.with_ridge(ridge)?;
            if let Some(w) = width {
                basis = BasisConfig::with_params(num_basis, w, ridge, true)?;
            }
            let outcome = pipeline::train(&files, &basis, eps_reg)?;
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            let mut model = outcome.model;
            if let Some(v) = noise_var {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "noise variance must be >= 0, got {v}"
                    )));
                }
                let dims = model.dims();
                model = model.with_noise(nalgebra::DVector::from_element(dims, v))?;
            }
            write_text(&out, &model.to_text())?;
            let mut stdout = io::stdout().lock();
            writeln!(
                stdout,
                "K {} D {} N {} weight dims {}",
                model.basis().num_basis(),
                model.dims(),
                outcome.demos,
                model.weight_mean().len()
            )?;
            writeln!(stdout, "joint,residual_rms_rad")?;
            for (l, r) in model.labels().iter().zip(&outcome.residual_rms) {
                writeln!(stdout, "{l},{r:.6e}")?;
            }
        }
        Command::Reproduce {
            model,
            duration,
            control_rate,
            kp,
            kd,
            inertia,
            damping,
            torque_limit,
            out,
            summary,
        } => {
            let gains = Gains::new(kp, kd)?;
            let plant = PlantParams::new(inertia, damping, torque_limit)?;
            let model = load(&model, TrajectoryModel::parse)?;
            let result = pipeline::reproduce(
                &model,
                duration,
                control_rate,
                &vec![gains; model.dims()],
                &plant,
            )?;
            write_text(&out, &result.to_csv(model.labels())?)?;
            let text = pipeline::tracking_summary(&result, model.labels());
            match summary {
                Some(path) => write_text(&path, &text)?,
                None => print!("{text}"),
            }
        }
        Command::Eval {
            model,
            demos,
            plot,
            report,
        } => {
            let model = load(&model, TrajectoryModel::parse)?;
            let files = demos
                .iter()
                .map(|p| load(p, DemoFile::parse))
                .collect::<Result<Vec<_>, _>>()?;
            let (eval, plot_csv) = pipeline::eval(&model, &files)?;
            if let Some(path) = plot {
                write_text(&path, &plot_csv)?;
            }
            let text = eval.summary();
            match report {
                Some(path) => write_text(&path, &text)?,
                None => print!("{text}"),
            }
            eprintln!("overall band coverage: {:.4}", eval.overall_coverage());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
