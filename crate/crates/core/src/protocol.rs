//! Glove wire protocol.
//!
//! The glove streams flex-sensor samples as fixed 13-byte frames and accepts
//! force-feedback commands as ASCII lines.
//!
//! ```text
//! ,------+-----------------------------------+-------+------,
//! | SYNC | CH0 | CH1 | CH2 | CH3 | CH4       | XOR   | TERM |
//! | 0xA5 | u16 little-endian, 10 bytes total | 1     | 0x0A |
//! '------+-----------------------------------+-------+------'
//! ```
//!
//! The checksum is the XOR of the 10 payload bytes only. Each channel is a
//! 10-bit ADC reading in `[0, 1023]`.
//!
//! Commands going the other way look like `P 255 0 0 0 128\n`.

use std::fmt;

use crate::error::{Error, Result};

pub const CHANNELS: usize = 5;
pub const FRAME_LEN: usize = 13;
pub const SYNC: u8 = 0xA5;
pub const TERMINATOR: u8 = 0x0A;
pub const MAX_RAW: u16 = 1023;

/// Nominal frame rate of the glove stream (Hz).
pub const STREAM_RATE_HZ: f64 = 350.0;
/// Serial line rate of the glove link.
pub const BAUD_RATE: u32 = 115_200;

/// One 5-channel flex-sensor sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct SensorFrame {
    channels: [u16; CHANNELS],
}

impl SensorFrame {
    pub fn new(channels: [u16; CHANNELS]) -> Result<Self> {
        if let Some((i, v)) = channels.iter().enumerate().find(|(_, &v)| v > MAX_RAW) {
            return Err(Error::invalid(format!(
                "channel {i} value {v} exceeds {MAX_RAW}"
            )));
        }
        Ok(SensorFrame { channels })
    }

    pub fn channels(&self) -> &[u16; CHANNELS] {
        &self.channels
    }
}

/// Force-feedback duty cycles for the five fingertip motors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct PwmCommand {
    pub duty: [u8; CHANNELS],
}

impl PwmCommand {
    pub const OFF: PwmCommand = PwmCommand {
        duty: [0; CHANNELS],
    };

    pub fn new(duty: [u8; CHANNELS]) -> Self {
        PwmCommand { duty }
    }

    /// Builds a command from wider integers, rejecting anything outside `[0, 255]`.
    pub fn from_values(values: [i64; CHANNELS]) -> Result<Self> {
        let mut duty = [0u8; CHANNELS];
        for (i, (&v, d)) in values.iter().zip(duty.iter_mut()).enumerate() {
            *d = u8::try_from(v).map_err(|_| {
                Error::invalid(format!("pwm value {v} on channel {i} outside [0, 255]"))
            })?;
        }
        Ok(PwmCommand { duty })
    }
}

impl fmt::Display for PwmCommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c, d, e] = self.duty;
        write!(f, "P {a} {b} {c} {d} {e}")
    }
}

fn checksum(payload: &[u8]) -> u8 {
    payload.iter().fold(0, |acc, b| acc ^ b)
}

/// Encodes a frame into its 13-byte wire representation.
pub fn encode_frame(frame: &SensorFrame) -> [u8; FRAME_LEN] {
    let mut out = [0u8; FRAME_LEN];
    out[0] = SYNC;
    for (i, v) in frame.channels.iter().enumerate() {
        out[1 + 2 * i..3 + 2 * i].copy_from_slice(&v.to_le_bytes());
    }
    out[11] = checksum(&out[1..11]);
    out[12] = TERMINATOR;
    out
}

/// Encodes raw channel values, rejecting readings above 1023.
pub fn encode_channels(channels: [u16; CHANNELS]) -> Result<[u8; FRAME_LEN]> {
    SensorFrame::new(channels).map(|f| encode_frame(&f))
}

/// Validates a candidate frame starting at `bytes[0] == SYNC`.
fn try_frame(bytes: &[u8]) -> Option<SensorFrame> {
    debug_assert!(bytes.len() >= FRAME_LEN);
    if bytes[12] != TERMINATOR || checksum(&bytes[1..11]) != bytes[11] {
        return None;
    }
    let mut channels = [0u16; CHANNELS];
    for (i, ch) in channels.iter_mut().enumerate() {
        *ch = u16::from_le_bytes([bytes[1 + 2 * i], bytes[2 + 2 * i]]);
    }
    // A checksum-valid frame can still carry an impossible reading.
    SensorFrame::new(channels).ok()
}

/// Incremental decoder for the sensor stream.
///
/// Feed arbitrary chunks; complete frames come out in order and any trailing
/// partial frame is kept for the next call. Bytes that cannot start a valid
/// frame are dropped and counted in [`StreamParser::bytes_skipped`].
#[derive(Debug, Default, Clone)]
pub struct StreamParser {
    buffer: Vec<u8>,
    frames_decoded: u64,
    bytes_skipped: u64,
    // stream offset of buffer[0]
    position: u64,
}

impl StreamParser {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn frames_decoded(&self) -> u64 {
        self.frames_decoded
    }

    pub fn bytes_skipped(&self) -> u64 {
        self.bytes_skipped
    }

    /// Total number of bytes fed so far.
    pub fn bytes_received(&self) -> u64 {
        self.position + self.buffer.len() as u64
    }

    pub fn pending(&self) -> usize {
        self.buffer.len()
    }

    /// Decodes every complete frame in `bytes` (plus any pending bytes).
    pub fn decode(&mut self, bytes: &[u8]) -> Vec<SensorFrame> {
        let mut frames = Vec::new();
        self.decode_each(bytes, |_, f| frames.push(f));
        frames
    }

    /// Like [`decode`](Self::decode), but pairs each frame with the stream
    /// offset of its sync byte.
    pub fn decode_with_offsets(&mut self, bytes: &[u8]) -> Vec<(u64, SensorFrame)> {
        let mut frames = Vec::new();
        self.decode_each(bytes, |offset, f| frames.push((offset, f)));
        frames
    }

    fn decode_each(&mut self, bytes: &[u8], mut emit: impl FnMut(u64, SensorFrame)) {
        self.buffer.extend_from_slice(bytes);
        let buf = &self.buffer;
        let mut pos = 0;
        while pos < buf.len() {
            if buf[pos] != SYNC {
                let next = buf[pos..]
                    .iter()
                    .position(|&b| b == SYNC)
                    .map_or(buf.len(), |off| pos + off);
                self.bytes_skipped += (next - pos) as u64;
                pos = next;
                continue;
            }
            if buf.len() - pos < FRAME_LEN {
                break;
            }
            match try_frame(&buf[pos..pos + FRAME_LEN]) {
                Some(frame) => {
                    emit(self.position + pos as u64, frame);
                    self.frames_decoded += 1;
                    pos += FRAME_LEN;
                }
                None => {
                    self.bytes_skipped += 1;
                    pos += 1;
                }
            }
        }
        self.buffer.drain(..pos);
        self.position += pos as u64;
    }
}

/// One-shot decode of a complete byte sequence.
pub fn decode_stream(parser: &mut StreamParser, bytes: &[u8]) -> Vec<SensorFrame> {
    parser.decode(bytes)
}

/// Formats a command as the ASCII line sent to the glove.
pub fn encode_pwm_command(cmd: &PwmCommand) -> String {
    format!("{cmd}\n")
}

/// Parses a host command line such as `P 10 20 30 40 50\n`.
pub fn parse_pwm_command(line: &str) -> Result<PwmCommand> {
    let line = line
        .strip_suffix('\n')
        .map(|l| l.strip_suffix('\r').unwrap_or(l))
        .unwrap_or(line);
    let mut tokens = line.split(' ');
    match tokens.next() {
        Some("P") => {}
        Some(verb) => return Err(Error::parse(format!("unknown command verb {verb:?}"))),
        None => return Err(Error::parse("empty command")),
    }
    let fields: Vec<&str> = tokens.collect();
    if fields.len() != CHANNELS {
        return Err(Error::parse(format!(
            "expected {CHANNELS} pwm values, found {}",
            fields.len()
        )));
    }
    let mut duty = [0u8; CHANNELS];
    for (d, tok) in duty.iter_mut().zip(&fields) {
        if tok.is_empty() || !tok.bytes().all(|b| b.is_ascii_digit()) {
            return Err(Error::parse(format!("non-numeric pwm value {tok:?}")));
        }
        *d = tok
            .parse::<u8>()
            .map_err(|_| Error::parse(format!("pwm value {tok} outside [0, 255]")))?;
    }
    Ok(PwmCommand { duty })
}
