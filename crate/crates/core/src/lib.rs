//! Sensor-glove teleoperation and imitation learning without hardware.
//!
//! * [`protocol`]: the glove's framed sensor stream and PWM command lines
//! * [`emulator`]: a deterministic virtual glove
//! * [`calibration`]: flex-to-angle maps, joint coupling, tactile-to-PWM
//! * [`model`]: probabilistic movement primitives learned from demonstrations
//! * [`control`]: PD tracking on a simulated joint plant, rate conversion
//! * [`pipeline`]: record, train, reproduce and evaluate

pub mod calibration;
pub mod control;
pub mod emulator;
pub mod error;
pub mod model;
pub mod pipeline;
pub mod protocol;
mod textfmt;

pub use error::{Error, Result};
