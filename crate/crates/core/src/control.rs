//! Per-joint PD impedance tracking on a decoupled second-order plant, plus
//! rate conversion between the glove stream and the control loop.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::textfmt::fmt_f64;

/// Control-loop rate of the reproduction phase (Hz).
pub const CONTROL_RATE_HZ: f64 = 200.0;
/// Movement duration of one demonstration (s).
pub const MOVEMENT_DURATION_S: f64 = 15.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gains {
    /// N·m/rad
    pub kp: f64,
    /// N·m·s/rad
    pub kd: f64,
}

impl Gains {
    pub fn new(kp: f64, kd: f64) -> Result<Self> {
        if !(kp.is_finite() && kp > 0.0) {
            return Err(Error::invalid(format!("Kp must be > 0, got {kp}")));
        }
        if !(kd.is_finite() && kd >= 0.0) {
            return Err(Error::invalid(format!("Kd must be >= 0, got {kd}")));
        }
        Ok(Gains { kp, kd })
    }
}

impl Default for Gains {
    fn default() -> Self {
        Gains { kp: 5.0, kd: 0.2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantParams {
    /// kg·m²
    pub inertia: f64,
    /// N·m·s/rad
    pub damping: f64,
    /// N·m
    pub torque_limit: f64,
}

impl PlantParams {
    pub fn new(inertia: f64, damping: f64, torque_limit: f64) -> Result<Self> {
        if !(inertia.is_finite() && inertia > 0.0) {
            return Err(Error::invalid(format!(
                "inertia must be > 0, got {inertia}"
            )));
        }
        if !(damping.is_finite() && damping >= 0.0) {
            return Err(Error::invalid(format!(
                "damping must be >= 0, got {damping}"
            )));
        }
        if !(torque_limit.is_finite() && torque_limit > 0.0) {
            return Err(Error::invalid(format!(
                "torque limit must be > 0, got {torque_limit}"
            )));
        }
        Ok(PlantParams {
            inertia,
            damping,
            torque_limit,
        })
    }
}

impl Default for PlantParams {
    fn default() -> Self {
        PlantParams {
            inertia: 0.01,
            damping: 0.05,
            torque_limit: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct JointState {
    /// rad
    pub angle: f64,
    /// rad/s
    pub velocity: f64,
}

impl JointState {
    pub fn at_rest(angle: f64) -> Self {
        JointState {
            angle,
            velocity: 0.0,
        }
    }
}

/// `clamp(Kp (q_des - q) + Kd (qd_des - qd), ±limit)`.
pub fn pd_torque(gains: &Gains, torque_limit: f64, desired: JointState, actual: JointState) -> f64 {
    let tau =
        gains.kp * (desired.angle - actual.angle) + gains.kd * (desired.velocity - actual.velocity);
    tau.clamp(-torque_limit, torque_limit)
}

/// One semi-implicit Euler step of `m qdd = tau - b qd`.
pub fn step_plant(plant: &PlantParams, state: JointState, torque: f64, dt: f64) -> JointState {
    let velocity = state.velocity + dt * (torque - plant.damping * state.velocity) / plant.inertia;
    JointState {
        angle: state.angle + dt * velocity,
        velocity,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackingResult {
    pub rate: f64,
    pub reference: DMatrix<f64>,
    pub executed: DMatrix<f64>,
    pub rmse: Vec<f64>,
    pub max_abs_error: Vec<f64>,
}

impl TrackingResult {
    pub fn error(&self) -> DMatrix<f64> {
        &self.reference - &self.executed
    }

    /// CSV with `time` then `ref_<j>,exec_<j>,err_<j>` per joint.
    pub fn to_csv(&self, labels: &[String]) -> Result<String> {
        let dims = self.reference.ncols();
        if labels.len() != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                actual: labels.len(),
            });
        }
        let mut out = String::from("time");
        for l in labels {
            out.push_str(&format!(",ref_{l},exec_{l},err_{l}"));
        }
        out.push('\n');
        for t in 0..self.reference.nrows() {
            out.push_str(&fmt_f64(t as f64 / self.rate));
            for d in 0..dims {
                let r = self.reference[(t, d)];
                let e = self.executed[(t, d)];
                out.push(',');
                out.push_str(&fmt_f64(r));
                out.push(',');
                out.push_str(&fmt_f64(e));
                out.push(',');
                out.push_str(&fmt_f64(r - e));
            }
            out.push('\n');
        }
        Ok(out)
    }
}

/// Tracks `reference` (`T x D`, sampled at `rate`) with one PD loop per joint.
///
/// Each joint starts at rest on the first reference sample. Step `i` drives
/// the plant towards `reference[i]` with the backward-difference reference
/// velocity, and `executed[i]` is the state after that step.
pub fn simulate_tracking(
    reference: &DMatrix<f64>,
    gains: &[Gains],
    plant: &PlantParams,
    rate: f64,
) -> Result<TrackingResult> {
    let (samples, dims) = reference.shape();
    if reference.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("reference contains non-finite values"));
    }
    if samples == 0 || dims == 0 {
        return Err(Error::invalid("empty reference"));
    }
    if gains.len() != dims {
        return Err(Error::DimensionMismatch {
            expected: dims,
            actual: gains.len(),
        });
    }
    if !(rate.is_finite() && rate > 0.0) {
        return Err(Error::invalid(format!("rate must be > 0, got {rate}")));
    }
    let dt = 1.0 / rate;
    let mut executed = DMatrix::zeros(samples, dims);
    let mut rmse = Vec::with_capacity(dims);
    let mut max_abs_error = Vec::with_capacity(dims);
    for d in 0..dims {
        let mut state = JointState::at_rest(reference[(0, d)]);
        let mut sum_sq = 0.0;
        let mut max_err: f64 = 0.0;
        for t in 0..samples {
            let velocity = if t == 0 {
                0.0
            } else {
                (reference[(t, d)] - reference[(t - 1, d)]) * rate
            };
            let desired = JointState {
                angle: reference[(t, d)],
                velocity,
            };
            let tau = pd_torque(&gains[d], plant.torque_limit, desired, state);
            state = step_plant(plant, state, tau, dt);
            executed[(t, d)] = state.angle;
            let err = reference[(t, d)] - state.angle;
            sum_sq += err * err;
            max_err = max_err.max(err.abs());
        }
        rmse.push((sum_sq / samples as f64).sqrt());
        max_abs_error.push(max_err);
    }
    Ok(TrackingResult {
        rate,
        reference: reference.clone(),
        executed,
        rmse,
        max_abs_error,
    })
}

/// Resamples `series` from `from_rate` to `to_rate` by linear interpolation.
///
/// Output has `floor((T - 1) * to_rate / from_rate) + 1` rows; row `j` is the
/// series at source time `j / to_rate`.
pub fn resample_linear(
    series: &DMatrix<f64>,
    from_rate: f64,
    to_rate: f64,
) -> Result<DMatrix<f64>> {
    if !(from_rate.is_finite() && from_rate > 0.0 && to_rate.is_finite() && to_rate > 0.0) {
        return Err(Error::invalid("rates must be > 0"));
    }
    let samples = series.nrows();
    if samples < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 samples, got {samples}"
        )));
    }
    if from_rate == to_rate {
        return Ok(series.clone());
    }
    let out_len =
        crate::emulator::floor_count((samples - 1) as f64 * to_rate / from_rate) as usize + 1;
    let positions = (0..out_len).map(|j| j as f64 * from_rate / to_rate);
    Ok(interpolate_rows(series, positions, out_len))
}

/// Linear interpolation of `series` at fractional row positions, holding the
/// end values outside `[0, T - 1]`.
pub(crate) fn interpolate_rows(
    series: &DMatrix<f64>,
    positions: impl Iterator<Item = f64>,
    out_len: usize,
) -> DMatrix<f64> {
    let (samples, dims) = series.shape();
    let last = samples - 1;
    let mut out = DMatrix::zeros(out_len, dims);
    for (j, pos) in positions.take(out_len).enumerate() {
        let pos = pos.clamp(0.0, last as f64);
        let lo = (pos.floor() as usize).min(last);
        let frac = pos - lo as f64;
        for d in 0..dims {
            out[(j, d)] = if frac == 0.0 || lo == last {
                series[(lo, d)]
            } else {
                let a = series[(lo, d)];
                let b = series[(lo + 1, d)];
                a + frac * (b - a)
            };
        }
    }
    out
}
