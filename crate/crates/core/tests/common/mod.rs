//! Shared fixtures and independent reference computations for the
//! integration tests. Nothing in here calls into the library's numerics.

#![allow(dead_code)]

use std::f64::consts::FRAC_PI_2;

use glovekit::calibration::{CalibrationProfile, CouplingMap};
use glovekit::control::{Gains, PlantParams, TrackingResult};
use glovekit::emulator::EmulatorConfig;
use glovekit::model::{BasisConfig, TrajectoryModel, DEFAULT_EPS_REG};
use glovekit::pipeline::transport::spawn_emulator;
use glovekit::pipeline::{self, DemoFile, EvalReport, RecordSettings};

pub const SWEEP_CONF: &str = include_str!("../../fixtures/calibration_sweep.conf");
pub const CUP_CONF: &str = include_str!("../../fixtures/cup_stacking.conf");
pub const COUPLING13: &str = include_str!("../../fixtures/coupling13.txt");
pub const TACTILE_RAMP: &str = include_str!("../../fixtures/tactile_ramp.txt");

pub const DEMO_SEEDS: [u64; 2] = [11, 12];

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        let pivot_row = a[col].clone();
        for row in col + 1..n {
            let f = a[row][col] / pivot_row[col];
            for (x, p) in a[row][col..].iter_mut().zip(&pivot_row[col..]) {
                *x -= f * p;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Normalized Gaussian features, evaluated from the defining formula.
pub fn oracle_features(phase: f64, k: usize, width: f64) -> Vec<f64> {
    let centers: Vec<f64> = if k == 1 {
        vec![0.5]
    } else {
        (0..k).map(|i| i as f64 / (k - 1) as f64).collect()
    };
    let raw: Vec<f64> = centers
        .iter()
        .map(|c| (-(phase - c).powi(2) / (2.0 * width * width)).exp())
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.iter().map(|v| v / sum).collect()
}

/// Ridge weights via explicitly assembled normal equations, one column at a time.
pub fn oracle_ridge(values: &[Vec<f64>], k: usize, width: f64, lambda: f64) -> Vec<Vec<f64>> {
    let t = values.len();
    let d = values[0].len();
    let phi: Vec<Vec<f64>> = (0..t)
        .map(|i| oracle_features(i as f64 / (t - 1) as f64, k, width))
        .collect();
    let mut normal = vec![vec![0.0; k]; k];
    for row in &phi {
        for a in 0..k {
            for b in 0..k {
                normal[a][b] += row[a] * row[b];
            }
        }
    }
    for (a, r) in normal.iter_mut().enumerate() {
        r[a] += lambda;
    }
    (0..d)
        .map(|dim| {
            let rhs: Vec<f64> = (0..k)
                .map(|a| (0..t).map(|i| phi[i][a] * values[i][dim]).sum())
                .collect();
            gauss_solve(normal.clone(), rhs)
        })
        .collect()
}

/// Unbiased sample covariance, one entry at a time.
pub fn oracle_covariance(samples: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = samples.len();
    let dim = samples[0].len();
    let mean: Vec<f64> = (0..dim)
        .map(|j| samples.iter().map(|s| s[j]).sum::<f64>() / n as f64)
        .collect();
    let mut cov = vec![vec![0.0; dim]; dim];
    for a in 0..dim {
        for b in 0..dim {
            let mut acc = 0.0;
            for s in samples {
                acc += (s[a] - mean[a]) * (s[b] - mean[b]);
            }
            cov[a][b] = acc / (n - 1) as f64;
        }
    }
    (mean, cov)
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
pub fn oracle_cholesky(m: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = m.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let v = m[i][i] - s;
                if v <= 0.0 {
                    return None;
                }
                l[i][j] = v.sqrt();
            } else {
                l[i][j] = (m[i][j] - s) / l[j][j];
            }
        }
    }
    Some(l)
}

/// Everything the synthetic cup-stacking run produces.
pub struct CupRun {
    pub profile: CalibrationProfile,
    pub coupling: CouplingMap,
    pub demos: Vec<DemoFile>,
    pub clean: DemoFile,
    pub model: TrajectoryModel,
    pub tracking: TrackingResult,
    pub eval: EvalReport,
    pub noise_counts: f64,
}

impl CupRun {
    /// Injected sensor noise mapped into each joint, in radians.
    pub fn injected_noise_std(&self) -> Vec<f64> {
        self.coupling
            .weights()
            .map(|w| {
                w.iter()
                    .zip(self.profile.channels())
                    .map(|(wi, c)| {
                        let s = wi * self.noise_counts * c.radians_per_count();
                        s * s
                    })
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    }
}

pub fn record_settings(profile: &CalibrationProfile, coupling: &CouplingMap) -> RecordSettings {
    RecordSettings {
        duration: 15.0,
        stream_rate: 350.0,
        control_rate: 200.0,
        profile: profile.clone(),
        coupling: coupling.clone(),
    }
}

/// Calibrate, record two noisy 15 s demonstrations of 13 joints, train,
/// reproduce and evaluate, all against the emulator in fast mode.
pub fn run_cup_stacking() -> CupRun {
    let sweep = EmulatorConfig::parse(SWEEP_CONF).unwrap();
    let cap = pipeline::capture_extrema(spawn_emulator(sweep, 3.0).unwrap(), 3.0, 350.0).unwrap();
    let profile = cap.extrema.finalize(0.0, FRAC_PI_2).unwrap();
    let coupling = CouplingMap::parse(COUPLING13).unwrap();
    let settings = record_settings(&profile, &coupling);

    let base = EmulatorConfig::parse(CUP_CONF).unwrap();
    let demos: Vec<DemoFile> = DEMO_SEEDS
        .iter()
        .map(|&seed| {
            let cfg = EmulatorConfig {
                seed,
                ..base.clone()
            };
            let out = pipeline::record(spawn_emulator(cfg, 15.0).unwrap(), &settings).unwrap();
            assert!(out.complete());
            out.demo
        })
        .collect();
    let clean_cfg = EmulatorConfig {
        noise_std: 0.0,
        ..base.clone()
    };
    let clean = pipeline::record(spawn_emulator(clean_cfg, 15.0).unwrap(), &settings)
        .unwrap()
        .demo;

    let model = pipeline::train(&demos, &BasisConfig::default(), DEFAULT_EPS_REG)
        .unwrap()
        .model;
    let tracking = pipeline::reproduce(
        &model,
        15.0,
        200.0,
        &vec![Gains::default(); model.dims()],
        &PlantParams::default(),
    )
    .unwrap();
    let (eval, _) = pipeline::eval(&model, &demos).unwrap();
    CupRun {
        profile,
        coupling,
        demos,
        clean,
        model,
        tracking,
        eval,
        noise_counts: base.noise_std,
    }
}

pub fn rmse(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}
