use std::io::Write;
use std::thread;
use std::time::{Duration, Instant};

use crate::calibration::ForceFeedbackMap;
use crate::emulator::Pacing;
use crate::error::{Error, Result};
use crate::pipeline::formats::TactileProfile;
use crate::protocol::{encode_pwm_command, PwmCommand};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeedbackReport {
    pub sent: Vec<PwmCommand>,
    pub closed_early: bool,
}

/// Maps each tactile sample to a PWM command and writes it to `sink`.
///
/// In real-time mode a command is sent at its sample's timestamp. A closed
/// transport ends the loop with whatever was sent so far.
pub fn feedback_loop<W: Write>(
    profile: &TactileProfile,
    map: &ForceFeedbackMap,
    sink: &mut W,
    pacing: Pacing,
) -> Result<FeedbackReport> {
    let start = Instant::now();
    let t0 = profile.samples.first().map_or(0.0, |(t, _)| *t);
    let mut report = FeedbackReport {
        sent: Vec::with_capacity(profile.samples.len()),
        closed_early: false,
    };
    for (t, forces) in &profile.samples {
        if pacing == Pacing::RealTime {
            let due = start + Duration::from_secs_f64((t - t0).max(0.0));
            let now = Instant::now();
            if due > now {
                thread::sleep(due - now);
            }
        }
        let cmd = map.command(forces);
        let line = encode_pwm_command(&cmd);
        if let Err(e) = sink.write_all(line.as_bytes()).and_then(|_| sink.flush()) {
            use std::io::ErrorKind::*;
            if matches!(
                e.kind(),
                BrokenPipe | ConnectionReset | ConnectionAborted | NotConnected | WriteZero
            ) {
                report.closed_early = true;
                return Ok(report);
            }
            return Err(Error::Transport(format!("write: {e}")));
        }
        report.sent.push(cmd);
    }
    Ok(report)
}
