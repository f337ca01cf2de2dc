//! Flex-reading calibration, glove-to-robot joint coupling and the tactile
//! force-feedback map.

use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};
use crate::protocol::{PwmCommand, SensorFrame, CHANNELS};
use crate::textfmt::{fmt_f64, parse_f64, Lines};

pub const CALIB_HEADER: &str = "calib-v1";
pub const COUPLING_HEADER: &str = "coupling-v1";

pub const FINGER_NAMES: [&str; CHANNELS] = ["thumb", "index", "middle", "ring", "little"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelCalibration {
    pub raw_min: u16,
    pub raw_max: u16,
    /// rad
    pub joint_min: f64,
    /// rad
    pub joint_max: f64,
}

impl ChannelCalibration {
    fn validate(&self, channel: usize) -> Result<()> {
        if self.raw_min >= self.raw_max {
            return Err(Error::invalid(format!(
                "channel {channel}: raw_min {} must be < raw_max {}",
                self.raw_min, self.raw_max
            )));
        }
        if !(self.joint_min.is_finite() && self.joint_max.is_finite())
            || self.joint_min > self.joint_max
        {
            return Err(Error::invalid(format!(
                "channel {channel}: joint range [{}, {}] is not ordered",
                self.joint_min, self.joint_max
            )));
        }
        Ok(())
    }

    /// Linear map of a raw reading onto `[joint_min, joint_max]`, clamping
    /// readings outside the calibrated range.
    pub fn to_angle(&self, raw: u16) -> f64 {
        let raw = raw.clamp(self.raw_min, self.raw_max);
        if raw == self.raw_max {
            return self.joint_max;
        }
        let s = f64::from(raw - self.raw_min) / f64::from(self.raw_max - self.raw_min);
        (self.joint_min + s * (self.joint_max - self.joint_min)).min(self.joint_max)
    }

    /// Scale from counts to radians.
    pub fn radians_per_count(&self) -> f64 {
        (self.joint_max - self.joint_min) / f64::from(self.raw_max - self.raw_min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationProfile {
    channels: [ChannelCalibration; CHANNELS],
}

impl CalibrationProfile {
    pub fn new(channels: [ChannelCalibration; CHANNELS]) -> Result<Self> {
        for (i, c) in channels.iter().enumerate() {
            c.validate(i)?;
        }
        Ok(CalibrationProfile { channels })
    }

    pub fn channels(&self) -> &[ChannelCalibration; CHANNELS] {
        &self.channels
    }

    pub fn raw_to_angle(&self, frame: &SensorFrame) -> [f64; CHANNELS] {
        let mut out = [0.0; CHANNELS];
        for ((o, c), &raw) in out.iter_mut().zip(&self.channels).zip(frame.channels()) {
            *o = c.to_angle(raw);
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{CALIB_HEADER}\n# channel raw_min raw_max joint_min joint_max\n");
        for (i, c) in self.channels.iter().enumerate() {
            out.push_str(&format!(
                "{i} {} {} {} {}\n",
                c.raw_min,
                c.raw_max,
                fmt_f64(c.joint_min),
                fmt_f64(c.joint_max)
            ));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = Lines::new(text);
        if lines.expect_line("header")?.trim() != CALIB_HEADER {
            return Err(Error::parse(format!("missing `{CALIB_HEADER}` header")));
        }
        let mut seen = [None; CHANNELS];
        while let Some(line) = lines.next_line() {
            if line.trim_start().starts_with('#') {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            let [ch, rmin, rmax, jmin, jmax] = toks[..] else {
                return Err(Error::parse(format!(
                    "line {}: expected 5 fields, found {}",
                    lines.line_no(),
                    toks.len()
                )));
            };
            let idx: usize = ch
                .parse()
                .ok()
                .filter(|&i| i < CHANNELS)
                .ok_or_else(|| Error::parse(format!("bad channel index {ch:?}")))?;
            let raw = |t: &str| {
                t.parse::<u16>()
                    .ok()
                    .filter(|&v| v <= crate::protocol::MAX_RAW)
                    .ok_or_else(|| Error::parse(format!("bad raw value {t:?}")))
            };
            if seen[idx].is_some() {
                return Err(Error::parse(format!("channel {idx} listed twice")));
            }
            seen[idx] = Some(ChannelCalibration {
                raw_min: raw(rmin)?,
                raw_max: raw(rmax)?,
                joint_min: parse_f64(jmin, "joint_min")?,
                joint_max: parse_f64(jmax, "joint_max")?,
            });
        }
        let mut channels = [ChannelCalibration {
            raw_min: 0,
            raw_max: 1,
            joint_min: 0.0,
            joint_max: 0.0,
        }; CHANNELS];
        for (i, (slot, c)) in channels.iter_mut().zip(seen).enumerate() {
            *slot = c.ok_or_else(|| Error::parse(format!("channel {i} missing")))?;
        }
        CalibrationProfile::new(channels)
    }
}

/// Running per-channel min/max over observed frames.
#[derive(Debug, Clone, Default)]
pub struct ExtremaBuilder {
    extrema: Option<([u16; CHANNELS], [u16; CHANNELS])>,
}

impl ExtremaBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn observe(&mut self, frame: &SensorFrame) {
        let ch = frame.channels();
        match &mut self.extrema {
            None => self.extrema = Some((*ch, *ch)),
            Some((lo, hi)) => {
                for i in 0..CHANNELS {
                    lo[i] = lo[i].min(ch[i]);
                    hi[i] = hi[i].max(ch[i]);
                }
            }
        }
    }

    pub fn extrema(&self) -> Option<([u16; CHANNELS], [u16; CHANNELS])> {
        self.extrema
    }

    /// Builds a profile mapping the observed range of every channel onto
    /// `[joint_min, joint_max]`.
    pub fn finalize(&self, joint_min: f64, joint_max: f64) -> Result<CalibrationProfile> {
        let (lo, hi) = self.extrema.ok_or(Error::IncompleteCalibration(0))?;
        if let Some(i) = (0..CHANNELS).find(|&i| lo[i] >= hi[i]) {
            return Err(Error::IncompleteCalibration(i));
        }
        let mut channels = [ChannelCalibration {
            raw_min: 0,
            raw_max: 1,
            joint_min,
            joint_max,
        }; CHANNELS];
        for (i, c) in channels.iter_mut().enumerate() {
            c.raw_min = lo[i];
            c.raw_max = hi[i];
        }
        CalibrationProfile::new(channels)
    }
}

/// Default joint range per finger joint: `[0, pi/2]` rad.
pub const DEFAULT_JOINT_RANGE: (f64, f64) = (0.0, FRAC_PI_2);

/// Maps the five glove angles onto robot joints, each output a convex
/// combination of the glove channels.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMap {
    outputs: Vec<(String, [f64; CHANNELS])>,
}

impl CouplingMap {
    pub fn new(outputs: Vec<(String, [f64; CHANNELS])>) -> Result<Self> {
        if outputs.is_empty() {
            return Err(Error::invalid("coupling map has no outputs"));
        }
        for (label, w) in &outputs {
            if label.is_empty() || label.contains(|c: char| c.is_whitespace() || c == ',') {
                return Err(Error::invalid(format!("bad joint label {label:?}")));
            }
            if w.iter().any(|&x| !(x.is_finite() && x >= 0.0)) {
                return Err(Error::invalid(format!(
                    "{label}: weights must be finite and >= 0"
                )));
            }
            let sum: f64 = w.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!(
                    "{label}: weights sum to {sum}, not 1"
                )));
            }
        }
        Ok(CouplingMap { outputs })
    }

    pub fn identity() -> Self {
        let outputs = FINGER_NAMES
            .iter()
            .enumerate()
            .map(|(i, name)| {
                let mut w = [0.0; CHANNELS];
                w[i] = 1.0;
                (name.to_string(), w)
            })
            .collect();
        CouplingMap { outputs }
    }

    /// Thumb, index and middle pass through; ring and little drive one
    /// coupled joint with equal weight.
    pub fn default_hand() -> Self {
        CouplingMap {
            outputs: vec![
                ("thumb".into(), [1.0, 0.0, 0.0, 0.0, 0.0]),
                ("index".into(), [0.0, 1.0, 0.0, 0.0, 0.0]),
                ("middle".into(), [0.0, 0.0, 1.0, 0.0, 0.0]),
                ("ring_little".into(), [0.0, 0.0, 0.0, 0.5, 0.5]),
            ],
        }
    }

    pub fn dims(&self) -> usize {
        self.outputs.len()
    }

    pub fn labels(&self) -> Vec<String> {
        self.outputs.iter().map(|(l, _)| l.clone()).collect()
    }

    pub fn weights(&self) -> impl Iterator<Item = &[f64; CHANNELS]> {
        self.outputs.iter().map(|(_, w)| w)
    }

    pub fn apply(&self, glove_angles: &[f64]) -> Result<Vec<f64>> {
        if glove_angles.len() != CHANNELS {
            return Err(Error::DimensionMismatch {
                expected: CHANNELS,
                actual: glove_angles.len(),
            });
        }
        Ok(self
            .outputs
            .iter()
            .map(|(_, w)| w.iter().zip(glove_angles).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn to_text(&self) -> String {
        let mut out =
            format!("{COUPLING_HEADER}\n# joint w_thumb w_index w_middle w_ring w_little\n");
        for (label, w) in &self.outputs {
            out.push_str(label);
            for x in w {
                out.push(' ');
                out.push_str(&fmt_f64(*x));
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = Lines::new(text);
        if lines.expect_line("header")?.trim() != COUPLING_HEADER {
            return Err(Error::parse(format!("missing `{COUPLING_HEADER}` header")));
        }
        let mut outputs = Vec::new();
        while let Some(line) = lines.next_line() {
            if line.trim_start().starts_with('#') {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != CHANNELS + 1 {
                return Err(Error::parse(format!(
                    "line {}: expected a label and {CHANNELS} weights",
                    lines.line_no()
                )));
            }
            let mut w = [0.0; CHANNELS];
            for (x, t) in w.iter_mut().zip(&toks[1..]) {
                *x = parse_f64(t, "weight")?;
            }
            outputs.push((toks[0].to_string(), w));
        }
        CouplingMap::new(outputs)
    }
}

impl Default for CouplingMap {
    fn default() -> Self {
        Self::default_hand()
    }
}

/// Proportional tactile-to-vibration map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForceFeedbackMap {
    f_max: f64,
    scale: [f64; CHANNELS],
}

impl ForceFeedbackMap {
    pub fn new(f_max: f64, scale: [f64; CHANNELS]) -> Result<Self> {
        if !(f_max.is_finite() && f_max > 0.0) {
            return Err(Error::invalid(format!("f_max must be > 0, got {f_max}")));
        }
        if scale.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::invalid("per-finger scale must be finite and >= 0"));
        }
        Ok(ForceFeedbackMap { f_max, scale })
    }

    pub fn with_full_scale(f_max: f64) -> Result<Self> {
        Self::new(f_max, [1.0; CHANNELS])
    }

    pub fn f_max(&self) -> f64 {
        self.f_max
    }

    /// `clamp(round(255 * scale * force / f_max), 0, 255)`, rounding half away from zero.
    pub fn tactile_to_pwm(&self, finger: usize, force: f64) -> u8 {
        let v = (255.0 * self.scale[finger] * force / self.f_max).round();
        if v.is_nan() {
            return 0;
        }
        v.clamp(0.0, 255.0) as u8
    }

    pub fn command(&self, forces: &[f64; CHANNELS]) -> PwmCommand {
        let mut duty = [0u8; CHANNELS];
        for (i, d) in duty.iter_mut().enumerate() {
            *d = self.tactile_to_pwm(i, forces[i]);
        }
        PwmCommand::new(duty)
    }
}
