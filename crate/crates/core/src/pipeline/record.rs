use std::io::{ErrorKind, Read};
use std::sync::mpsc;
use std::thread;

use nalgebra::DMatrix;

use crate::calibration::{CalibrationProfile, CouplingMap, ExtremaBuilder};
use crate::emulator::floor_count;
use crate::error::{Error, Result};
use crate::pipeline::formats::DemoFile;
use crate::protocol::{SensorFrame, StreamParser, FRAME_LEN};

const CHUNK: usize = 4096;
const QUEUE_DEPTH: usize = 32;

#[derive(Debug, Clone)]
pub struct RecordSettings {
    /// s
    pub duration: f64,
    /// Hz
    pub stream_rate: f64,
    /// Hz
    pub control_rate: f64,
    pub profile: CalibrationProfile,
    pub coupling: CouplingMap,
}

impl RecordSettings {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("duration", self.duration),
            ("stream rate", self.stream_rate),
            ("control rate", self.control_rate),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.expected_frames() < 2 {
            return Err(Error::invalid(
                "recording must span at least 2 stream frames",
            ));
        }
        if self.output_rows() < 2 {
            return Err(Error::invalid(
                "recording must span at least 2 control steps",
            ));
        }
        Ok(())
    }

    pub fn expected_frames(&self) -> u64 {
        floor_count(self.duration * self.stream_rate)
    }

    pub fn output_rows(&self) -> usize {
        floor_count(self.duration * self.control_rate) as usize
    }
}

#[derive(Debug, Clone)]
pub struct RecordOutcome {
    pub demo: DemoFile,
    pub frames_received: u64,
    pub frames_expected: u64,
    pub bytes_skipped: u64,
    pub bytes_received: u64,
}

impl RecordOutcome {
    pub fn complete(&self) -> bool {
        !self.demo.partial
    }
}

/// Where decoded frames sit in the stream: frame slot (offset / 13) and
/// payload.
type Slotted = (u64, SensorFrame);

/// Reads the transport on a separate thread and decodes on this one, with a
/// bounded queue in between. Stops once `byte_budget` stream bytes have been
/// seen or the transport ends.
fn read_frames<R: Read + Send + 'static>(
    reader: R,
    byte_budget: u64,
) -> Result<(Vec<Slotted>, StreamParser)> {
    let (tx, rx) = mpsc::sync_channel::<std::io::Result<Vec<u8>>>(QUEUE_DEPTH);
    let handle = thread::spawn(move || {
        let mut reader = reader;
        loop {
            let mut buf = vec![0u8; CHUNK];
            match reader.read(&mut buf) {
                Ok(0) => break,
                Ok(n) => {
                    buf.truncate(n);
                    if tx.send(Ok(buf)).is_err() {
                        break;
                    }
                }
                Err(e) if e.kind() == ErrorKind::Interrupted => continue,
                Err(e) => {
                    let _ = tx.send(Err(e));
                    break;
                }
            }
        }
    });

    let mut parser = StreamParser::new();
    let mut frames = Vec::new();
    let mut finished_early = false;
    for chunk in rx.iter() {
        let chunk = chunk.map_err(|e| Error::Transport(format!("read: {e}")))?;
        let remaining = byte_budget - parser.bytes_received();
        let take = (chunk.len() as u64).min(remaining) as usize;
        for (offset, frame) in parser.decode_with_offsets(&chunk[..take]) {
            frames.push((offset / FRAME_LEN as u64, frame));
        }
        if parser.bytes_received() >= byte_budget {
            finished_early = true;
            break;
        }
    }
    drop(rx);
    // The reader may still be blocked on a live device; only join when it is done.
    if !finished_early {
        let _ = handle.join();
    }
    Ok((frames, parser))
}

/// Records one demonstration: decode, calibrate, couple, then resample onto
/// the control grid.
///
/// Frames lost to corruption leave gaps that are bridged by linear
/// interpolation, using each surviving frame's position in the stream as its
/// timestamp. A transport that ends before the requested duration yields a
/// file flagged `partial` covering only the received span.
pub fn record<R: Read + Send + 'static>(
    reader: R,
    settings: &RecordSettings,
) -> Result<RecordOutcome> {
    settings.validate()?;
    let expected = settings.expected_frames();
    let (frames, parser) = read_frames(reader, expected * FRAME_LEN as u64)?;
    if frames.len() < 2 {
        return Err(Error::Transport(format!(
            "received {} valid frames, need at least 2",
            frames.len()
        )));
    }
    let complete = parser.bytes_received() >= expected * FRAME_LEN as u64;

    let dims = settings.coupling.dims();
    let mut slots = Vec::with_capacity(frames.len());
    let mut joints = Vec::with_capacity(frames.len() * dims);
    for (slot, frame) in &frames {
        let angles = settings.profile.raw_to_angle(frame);
        joints.extend(settings.coupling.apply(&angles)?);
        slots.push(*slot as f64);
    }
    let series = DMatrix::from_row_slice(frames.len(), dims, &joints);

    let rows = if complete {
        settings.output_rows()
    } else {
        let last_time = slots[slots.len() - 1] / settings.stream_rate;
        (floor_count(last_time * settings.control_rate) as usize + 1).min(settings.output_rows())
    };
    if rows < 2 {
        return Err(Error::Transport(
            "stream ended before two control steps".into(),
        ));
    }
    let ratio = settings.stream_rate / settings.control_rate;
    let values = interpolate_at_slots(&slots, &series, (0..rows).map(|j| j as f64 * ratio));
    let mut demo = DemoFile::new(
        settings.coupling.labels(),
        1.0 / settings.control_rate,
        values,
    )?;
    demo.partial = !complete;
    Ok(RecordOutcome {
        demo,
        frames_received: frames.len() as u64,
        frames_expected: expected,
        bytes_skipped: parser.bytes_skipped(),
        bytes_received: parser.bytes_received(),
    })
}

/// Linear interpolation of rows sampled at increasing `slots`, holding the
/// end values outside the sampled range.
fn interpolate_at_slots(
    slots: &[f64],
    series: &DMatrix<f64>,
    targets: impl ExactSizeIterator<Item = f64>,
) -> DMatrix<f64> {
    let dims = series.ncols();
    let mut out = DMatrix::zeros(targets.len(), dims);
    let last = slots.len() - 1;
    let mut hi = 0usize;
    for (j, x) in targets.enumerate() {
        while hi < last && slots[hi] < x {
            hi += 1;
        }
        for d in 0..dims {
            out[(j, d)] = if x <= slots[0] {
                series[(0, d)]
            } else if x >= slots[last] {
                series[(last, d)]
            } else if slots[hi] == x {
                series[(hi, d)]
            } else {
                let lo = hi - 1;
                let frac = (x - slots[lo]) / (slots[hi] - slots[lo]);
                series[(lo, d)] + frac * (series[(hi, d)] - series[(lo, d)])
            };
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct CalibrationCapture {
    pub extrema: ExtremaBuilder,
    pub frames_received: u64,
    pub bytes_skipped: u64,
}

/// Captures per-channel extrema over `duration` seconds of stream.
pub fn capture_extrema<R: Read + Send + 'static>(
    reader: R,
    duration: f64,
    stream_rate: f64,
) -> Result<CalibrationCapture> {
    if !(duration > 0.0 && stream_rate > 0.0) {
        return Err(Error::invalid("duration and stream rate must be > 0"));
    }
    let budget = floor_count(duration * stream_rate) * FRAME_LEN as u64;
    let (frames, parser) = read_frames(reader, budget)?;
    let mut extrema = ExtremaBuilder::new();
    for (_, f) in &frames {
        extrema.observe(f);
    }
    Ok(CalibrationCapture {
        extrema,
        frames_received: frames.len() as u64,
        bytes_skipped: parser.bytes_skipped(),
    })
}
