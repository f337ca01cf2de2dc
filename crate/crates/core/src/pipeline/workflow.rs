//! Train, reproduce and evaluate.

use nalgebra::DMatrix;

use crate::control::{simulate_tracking, Gains, PlantParams, TrackingResult};
use crate::emulator::floor_count;
use crate::error::{Error, Result};
use crate::model::{BasisConfig, Demonstration, TrajectoryModel};
use crate::pipeline::formats::DemoFile;
use crate::textfmt::fmt_f64;

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: TrajectoryModel,
    pub demos: usize,
    /// Per joint, RMS of the ridge-fit residual over all demos.
    pub residual_rms: Vec<f64>,
    pub warnings: Vec<String>,
}

pub fn train(demos: &[DemoFile], basis: &BasisConfig, eps_reg: f64) -> Result<TrainOutcome> {
    let first = demos
        .first()
        .ok_or_else(|| Error::invalid("no demonstrations given"))?;
    for d in demos {
        if d.dims() != first.dims() {
            return Err(Error::ShapeMismatch(format!(
                "demos have {} and {} joints",
                first.dims(),
                d.dims()
            )));
        }
        if (d.dt - first.dt).abs() > 1e-12 * first.dt {
            return Err(Error::ShapeMismatch(format!(
                "demos sampled at dt {} and {}",
                first.dt, d.dt
            )));
        }
    }
    let mut warnings = Vec::new();
    if demos.len() == 1 {
        warnings
            .push("only one demonstration: weight covariance is the regularizer alone".to_string());
    }
    if demos.iter().any(|d| d.partial) {
        warnings.push("training on a partial recording".to_string());
    }
    let demonstrations = demos
        .iter()
        .map(DemoFile::to_demonstration)
        .collect::<Result<Vec<_>>>()?;
    let fit = TrajectoryModel::fit(&demonstrations, first.labels.clone(), basis, eps_reg)?;
    let mut sum_sq = vec![0.0; first.dims()];
    let mut count = 0usize;
    for (demo, w) in demonstrations.iter().zip(&fit.weights) {
        let residual = demo.values() - w.reconstruct(basis, demo.samples())?;
        for (d, s) in sum_sq.iter_mut().enumerate() {
            *s += residual.column(d).norm_squared();
        }
        count += demo.samples();
    }
    let residual_rms = sum_sq.iter().map(|s| (s / count as f64).sqrt()).collect();
    Ok(TrainOutcome {
        model: fit.model,
        demos: demos.len(),
        residual_rms,
        warnings,
    })
}

/// Tracks the model's mean trajectory for `duration` seconds at `rate`.
pub fn reproduce(
    model: &TrajectoryModel,
    duration: f64,
    rate: f64,
    gains: &[Gains],
    plant: &PlantParams,
) -> Result<TrackingResult> {
    if !(duration.is_finite() && duration > 0.0 && rate.is_finite() && rate > 0.0) {
        return Err(Error::invalid("duration and rate must be > 0"));
    }
    if gains.len() != model.dims() {
        return Err(Error::DimensionMismatch {
            expected: model.dims(),
            actual: gains.len(),
        });
    }
    let samples = floor_count(duration * rate) as usize;
    if samples < 2 {
        return Err(Error::invalid(
            "reproduction must span at least 2 control steps",
        ));
    }
    let reference = model.mean_trajectory(samples)?;
    simulate_tracking(&reference, gains, plant, rate)
}

pub fn tracking_summary(result: &TrackingResult, labels: &[String]) -> String {
    let mut out = String::from("joint,rmse_rad,max_abs_error_rad\n");
    for (i, l) in labels.iter().enumerate() {
        out.push_str(&format!(
            "{l},{},{}\n",
            fmt_f64(result.rmse[i]),
            fmt_f64(result.max_abs_error[i])
        ));
    }
    out
}

#[derive(Debug, Clone)]
pub struct DemoEval {
    pub log_likelihood: f64,
    pub per_joint_log_likelihood: Vec<f64>,
    /// Fraction of samples with `|y - mean| <= 2 std`, per joint.
    pub coverage: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub labels: Vec<String>,
    pub demos: Vec<DemoEval>,
    pub mean: DMatrix<f64>,
    pub std: DMatrix<f64>,
    pub dt: f64,
}

impl EvalReport {
    /// Fraction of all samples of all demos inside the band.
    pub fn overall_coverage(&self) -> f64 {
        let n = (self.demos.len() * self.labels.len()) as f64;
        self.demos
            .iter()
            .flat_map(|d| d.coverage.iter())
            .sum::<f64>()
            / n
    }

    pub fn summary(&self) -> String {
        let mut out = String::from("demo,joint,log_likelihood_nats,band_coverage\n");
        for (k, demo) in self.demos.iter().enumerate() {
            for (d, l) in self.labels.iter().enumerate() {
                out.push_str(&format!(
                    "{k},{l},{},{}\n",
                    fmt_f64(demo.per_joint_log_likelihood[d]),
                    fmt_f64(demo.coverage[d])
                ));
            }
            out.push_str(&format!(
                "{k},total,{},{}\n",
                fmt_f64(demo.log_likelihood),
                fmt_f64(demo.coverage.iter().sum::<f64>() / demo.coverage.len() as f64)
            ));
        }
        out
    }
}

const BAND_WIDTH_STD: f64 = 2.0;

/// Log-likelihood and ±2 std band coverage of each demo under the model.
pub fn eval(model: &TrajectoryModel, demos: &[DemoFile]) -> Result<(EvalReport, String)> {
    let first = demos
        .first()
        .ok_or_else(|| Error::invalid("no demonstrations given"))?;
    let samples = first.samples();
    for d in demos {
        if d.dims() != model.dims() {
            return Err(Error::DimensionMismatch {
                expected: model.dims(),
                actual: d.dims(),
            });
        }
        if d.samples() != samples {
            return Err(Error::ShapeMismatch(format!(
                "demos have {samples} and {} samples",
                d.samples()
            )));
        }
    }
    let mean = model.mean_trajectory(samples)?;
    let std = model.marginal_std(samples)?;
    let mut evals = Vec::with_capacity(demos.len());
    for d in demos {
        let demo = Demonstration::new(d.values.clone(), d.dt)?;
        let per_joint = model.log_likelihood_per_joint(&demo)?;
        let coverage = (0..model.dims())
            .map(|j| {
                let inside = (0..samples)
                    .filter(|&t| {
                        (d.values[(t, j)] - mean[(t, j)]).abs() <= BAND_WIDTH_STD * std[(t, j)]
                    })
                    .count();
                inside as f64 / samples as f64
            })
            .collect();
        evals.push(DemoEval {
            log_likelihood: per_joint.iter().sum(),
            per_joint_log_likelihood: per_joint,
            coverage,
        });
    }
    let report = EvalReport {
        labels: model.labels().to_vec(),
        demos: evals,
        mean,
        std,
        dt: first.dt,
    };
    let plot = plot_csv(&report, demos);
    Ok((report, plot))
}

/// `time`, then `mean_<j>,std_<j>,demo<k>_<j>` per joint.
fn plot_csv(report: &EvalReport, demos: &[DemoFile]) -> String {
    let mut out = String::from("time");
    for l in &report.labels {
        out.push_str(&format!(",mean_{l},std_{l}"));
        for k in 0..demos.len() {
            out.push_str(&format!(",demo{k}_{l}"));
        }
    }
    out.push('\n');
    for t in 0..report.mean.nrows() {
        out.push_str(&fmt_f64(t as f64 * report.dt));
        for j in 0..report.labels.len() {
            out.push(',');
            out.push_str(&fmt_f64(report.mean[(t, j)]));
            out.push(',');
            out.push_str(&fmt_f64(report.std[(t, j)]));
            for d in demos {
                out.push(',');
                out.push_str(&fmt_f64(d.values[(t, j)]));
            }
        }
        out.push('\n');
    }
    out
}
