//! Virtual glove.
//!
//! Produces a deterministic sinusoid-per-channel flex stream at a fixed rate
//! and records the last force-feedback command it was sent.

use std::f64::consts::TAU;
use std::io::{self, Write};
use std::sync::mpsc::Receiver;
use std::thread;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::protocol::{encode_frame, PwmCommand, SensorFrame, CHANNELS, MAX_RAW, STREAM_RATE_HZ};
use crate::textfmt::{fmt_f64, KeyValues};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waveform {
    /// counts
    pub offset: f64,
    /// counts
    pub amplitude: f64,
    /// Hz
    pub frequency: f64,
    /// rad
    pub phase: f64,
}

impl Waveform {
    pub const fn constant(offset: f64) -> Self {
        Waveform {
            offset,
            amplitude: 0.0,
            frequency: 0.0,
            phase: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmulatorConfig {
    pub rate: f64,
    pub channels: [Waveform; CHANNELS],
    /// Standard deviation of additive Gaussian noise, in counts.
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for EmulatorConfig {
    fn default() -> Self {
        EmulatorConfig {
            rate: STREAM_RATE_HZ,
            channels: [Waveform::constant(512.0); CHANNELS],
            noise_std: 0.0,
            seed: 0,
        }
    }
}

impl EmulatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rate.is_finite() && self.rate > 0.0) {
            return Err(Error::invalid(format!(
                "rate must be > 0, got {}",
                self.rate
            )));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::invalid("noise_std must be finite and >= 0"));
        }
        for (i, w) in self.channels.iter().enumerate() {
            if !(0.0..=f64::from(MAX_RAW)).contains(&w.offset) {
                return Err(Error::invalid(format!(
                    "channel {i} offset {} outside [0, {MAX_RAW}]",
                    w.offset
                )));
            }
            if !(w.amplitude.is_finite() && w.amplitude >= 0.0) {
                return Err(Error::invalid(format!(
                    "channel {i} amplitude must be >= 0"
                )));
            }
            if !w.frequency.is_finite() || !w.phase.is_finite() {
                return Err(Error::invalid(format!(
                    "channel {i} waveform must be finite"
                )));
            }
        }
        Ok(())
    }

    /// Parses the flat `key = value` config format.
    ///
    /// ```text
    /// rate = 350
    /// seed = 7
    /// noise_std = 4
    /// ch0.offset = 512
    /// ch0.amplitude = 300
    /// ch0.frequency = 0.1
    /// ch0.phase = 0
    /// ```
    ///
    /// Missing keys keep their defaults (350 Hz, constant 512, no noise, seed 0).
    pub fn parse(text: &str) -> Result<Self> {
        let kv = KeyValues::parse(text, '=')?;
        let mut cfg = EmulatorConfig::default();
        for (key, value) in kv.iter() {
            let num = || -> Result<f64> {
                value
                    .parse::<f64>()
                    .map_err(|_| Error::parse(format!("{key}: not a number: {value:?}")))
            };
            match key {
                "rate" => cfg.rate = num()?,
                "noise_std" => cfg.noise_std = num()?,
                "seed" => {
                    cfg.seed = value
                        .parse()
                        .map_err(|_| Error::parse(format!("seed: not an integer: {value:?}")))?
                }
                _ => {
                    let (ch, field) = key
                        .strip_prefix("ch")
                        .and_then(|rest| rest.split_once('.'))
                        .ok_or_else(|| Error::parse(format!("unknown key {key:?}")))?;
                    let idx: usize = ch
                        .parse()
                        .ok()
                        .filter(|&i| i < CHANNELS)
                        .ok_or_else(|| Error::parse(format!("bad channel in key {key:?}")))?;
                    let w = &mut cfg.channels[idx];
                    match field {
                        "offset" => w.offset = num()?,
                        "amplitude" => w.amplitude = num()?,
                        "frequency" => w.frequency = num()?,
                        "phase" => w.phase = num()?,
                        _ => return Err(Error::parse(format!("unknown key {key:?}"))),
                    }
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("rate = {}\n", fmt_f64(self.rate)));
        out.push_str(&format!("seed = {}\n", self.seed));
        out.push_str(&format!("noise_std = {}\n", fmt_f64(self.noise_std)));
        for (i, w) in self.channels.iter().enumerate() {
            out.push_str(&format!("ch{i}.offset = {}\n", fmt_f64(w.offset)));
            out.push_str(&format!("ch{i}.amplitude = {}\n", fmt_f64(w.amplitude)));
            out.push_str(&format!("ch{i}.frequency = {}\n", fmt_f64(w.frequency)));
            out.push_str(&format!("ch{i}.phase = {}\n", fmt_f64(w.phase)));
        }
        out
    }

    /// Number of frames a run of `duration` seconds emits: `floor(duration * rate)`.
    pub fn frame_count(&self, duration: f64) -> u64 {
        floor_count(duration * self.rate)
    }
}

/// `floor(x)` tolerant to products like `0.29 * 100` landing a hair below an integer.
pub(crate) fn floor_count(x: f64) -> u64 {
    if x <= 0.0 {
        return 0;
    }
    (x + 1e-9 * x.max(1.0)).floor() as u64
}

#[derive(Debug, Clone)]
pub struct Emulator {
    config: EmulatorConfig,
    steps: u64,
    last_pwm: PwmCommand,
    rng: ChaCha8Rng,
}

impl Emulator {
    pub fn new(config: EmulatorConfig) -> Result<Self> {
        config.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Emulator {
            config,
            steps: 0,
            last_pwm: PwmCommand::OFF,
            rng,
        })
    }

    pub fn config(&self) -> &EmulatorConfig {
        &self.config
    }

    /// Simulated clock in seconds.
    pub fn time(&self) -> f64 {
        self.steps as f64 / self.config.rate
    }

    pub fn last_pwm(&self) -> PwmCommand {
        self.last_pwm
    }

    pub fn handle_pwm(&mut self, cmd: PwmCommand) {
        self.last_pwm = cmd;
    }

    /// Samples every channel at the current clock, then advances by `1 / rate`.
    pub fn step(&mut self) -> SensorFrame {
        let t = self.time();
        let mut channels = [0u16; CHANNELS];
        for (out, w) in channels.iter_mut().zip(&self.config.channels) {
            let mut v = w.offset + w.amplitude * (TAU * w.frequency * t + w.phase).sin();
            if self.config.noise_std > 0.0 {
                let z: f64 = StandardNormal.sample(&mut self.rng);
                v += self.config.noise_std * z;
            }
            *out = v.round().clamp(0.0, f64::from(MAX_RAW)) as u16;
        }
        self.steps += 1;
        SensorFrame::new(channels).expect("clamped channel values")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pacing {
    /// One frame every `1 / rate` seconds of wall time.
    RealTime,
    /// As fast as the transport accepts bytes.
    Fast,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunReport {
    pub frames_written: u64,
    /// The transport went away before all frames were written.
    pub closed_early: bool,
}

fn is_closed(e: &io::Error) -> bool {
    matches!(
        e.kind(),
        io::ErrorKind::BrokenPipe
            | io::ErrorKind::ConnectionReset
            | io::ErrorKind::ConnectionAborted
            | io::ErrorKind::NotConnected
            | io::ErrorKind::UnexpectedEof
            | io::ErrorKind::WriteZero
    )
}

/// Streams `floor(duration * rate)` encoded frames into `sink`.
///
/// PWM commands arriving on `pwm_rx` are applied between frames. A closed
/// transport ends the run cleanly; other I/O errors are returned.
pub fn run_emulator<W: Write>(
    emulator: &mut Emulator,
    duration: f64,
    pacing: Pacing,
    sink: &mut W,
    pwm_rx: Option<&Receiver<PwmCommand>>,
) -> Result<RunReport> {
    if !(duration.is_finite() && duration > 0.0) {
        return Err(Error::invalid(format!(
            "duration must be > 0, got {duration}"
        )));
    }
    let total = emulator.config.frame_count(duration);
    let period = Duration::from_secs_f64(1.0 / emulator.config.rate);
    let start = Instant::now();
    let mut report = RunReport {
        frames_written: 0,
        closed_early: false,
    };
    for i in 0..total {
        if let Some(rx) = pwm_rx {
            while let Ok(cmd) = rx.try_recv() {
                emulator.handle_pwm(cmd);
            }
        }
        if pacing == Pacing::RealTime {
            let due = start + period.mul_f64(i as f64);
            let now = Instant::now();
            if due > now {
                thread::sleep(due - now);
            }
        }
        let bytes = encode_frame(&emulator.step());
        match sink.write_all(&bytes) {
            Ok(()) => report.frames_written += 1,
            Err(e) if is_closed(&e) => {
                report.closed_early = true;
                return Ok(report);
            }
            Err(e) => return Err(e.into()),
        }
        if pacing == Pacing::RealTime {
            if let Err(e) = sink.flush() {
                if is_closed(&e) {
                    report.closed_early = true;
                    return Ok(report);
                }
                return Err(e.into());
            }
        }
    }
    match sink.flush() {
        Err(e) if !is_closed(&e) => Err(e.into()),
        _ => Ok(report),
    }
}

/// Encodes a full fast-mode run into memory.
pub fn emulate_to_vec(config: &EmulatorConfig, duration: f64) -> Result<Vec<u8>> {
    let mut emu = Emulator::new(config.clone())?;
    let mut out =
        Vec::with_capacity(config.frame_count(duration) as usize * crate::protocol::FRAME_LEN);
    run_emulator(&mut emu, duration, Pacing::Fast, &mut out, None)?;
    Ok(out)
}
