//! Probabilistic movement primitives.
//!
//! Each joint trajectory is modelled as `y_t = phi(t)^T w_d + eps` with a
//! normalized Gaussian feature vector `phi`. Weights are fitted per
//! demonstration by ridge least squares; a Gaussian over the stacked weights
//! of all joints is then estimated from the sample mean and covariance across
//! demonstrations.

mod basis;

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

pub use self::basis::{phase_at, BasisConfig, DEFAULT_NUM_BASIS, DEFAULT_RIDGE};
use crate::error::{Error, Result};
use crate::textfmt::{fmt_f64, parse_f64, parse_usize, Lines};

pub const MODEL_HEADER: &str = "promp-v1";
pub const DEFAULT_EPS_REG: f64 = 1e-8;
/// Reciprocal condition number below which an unregularized solve is refused.
pub const MIN_RCOND: f64 = 1e-12;

/// A uniformly sampled joint-angle trajectory, `T x D`.
#[derive(Debug, Clone, PartialEq)]
pub struct Demonstration {
    values: DMatrix<f64>,
    dt: f64,
}

impl Demonstration {
    pub fn new(values: DMatrix<f64>, dt: f64) -> Result<Self> {
        if values.nrows() < 2 {
            return Err(Error::invalid(format!(
                "demonstration needs at least 2 samples, got {}",
                values.nrows()
            )));
        }
        if values.ncols() < 1 {
            return Err(Error::invalid("demonstration has no dimensions"));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::invalid(format!("dt must be > 0, got {dt}")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("demonstration contains non-finite values"));
        }
        Ok(Demonstration { values, dt })
    }

    /// Builds from row vectors.
    pub fn from_rows(rows: &[Vec<f64>], dt: f64) -> Result<Self> {
        let dims = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dims) {
            return Err(Error::ShapeMismatch("ragged demonstration rows".into()));
        }
        let values = DMatrix::from_fn(rows.len(), dims, |i, j| rows[i][j]);
        Self::new(values, dt)
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn dims(&self) -> usize {
        self.values.ncols()
    }
}

/// `K x D` basis weights, one column per joint.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix(pub DMatrix<f64>);

impl WeightMatrix {
    pub fn num_basis(&self) -> usize {
        self.0.nrows()
    }

    pub fn dims(&self) -> usize {
        self.0.ncols()
    }

    /// Column-major stacking: joint `d` occupies `[d*K, (d+1)*K)`.
    pub fn stacked(&self) -> DVector<f64> {
        DVector::from_column_slice(self.0.as_slice())
    }

    /// `Phi w`, evaluated on the demonstration's own phase grid.
    pub fn reconstruct(&self, basis: &BasisConfig, samples: usize) -> Result<DMatrix<f64>> {
        Ok(basis.design_matrix(samples)? * &self.0)
    }
}

/// Ridge estimate `w_d = (Phi^T Phi + lambda I)^-1 Phi^T tau_d` for every joint.
///
/// All joints share one factorization of the `K x K` normal matrix.
pub fn fit_weights(demo: &Demonstration, basis: &BasisConfig) -> Result<WeightMatrix> {
    let phi = basis.design_matrix(demo.samples())?;
    let mut normal = phi.tr_mul(&phi);
    for k in 0..basis.num_basis() {
        normal[(k, k)] += basis.ridge();
    }
    if basis.ridge() == 0.0 {
        let rcond = reciprocal_condition(&normal);
        if rcond.is_nan() || rcond < MIN_RCOND {
            return Err(Error::SingularSystem(rcond));
        }
    }
    let rhs = phi.tr_mul(&demo.values);
    let chol = normal.cholesky().ok_or(Error::SingularSystem(0.0))?;
    Ok(WeightMatrix(chol.solve(&rhs)))
}

/// Ratio of smallest to largest eigenvalue of a symmetric PSD matrix.
fn reciprocal_condition(m: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(m.clone()).eigenvalues;
    let max = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    if max <= 0.0 {
        return 0.0;
    }
    (min / max).max(0.0)
}

/// Sample mean and unbiased sample covariance of the stacked weights, with
/// `eps_reg * I` added to the covariance. A single sample gets `eps_reg * I`.
pub fn fit_distribution(
    weights: &[WeightMatrix],
    eps_reg: f64,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let first = weights
        .first()
        .ok_or_else(|| Error::invalid("need at least one weight matrix"))?;
    if !(eps_reg.is_finite() && eps_reg >= 0.0) {
        return Err(Error::invalid(format!(
            "eps_reg must be >= 0, got {eps_reg}"
        )));
    }
    let (k, d) = (first.num_basis(), first.dims());
    if let Some(bad) = weights.iter().find(|w| w.num_basis() != k || w.dims() != d) {
        return Err(Error::ShapeMismatch(format!(
            "weights are {k}x{d} and {}x{}",
            bad.num_basis(),
            bad.dims()
        )));
    }
    let n = weights.len();
    let anchor = first.stacked();
    // Shifted accumulation so identical samples give an exactly zero spread.
    let mut shift = DVector::zeros(anchor.len());
    for w in &weights[1..] {
        shift += w.stacked() - &anchor;
    }
    let mean = &anchor + shift / n as f64;

    let dim = anchor.len();
    let mut cov = DMatrix::zeros(dim, dim);
    if n > 1 {
        for w in weights {
            let dev = w.stacked() - &mean;
            cov.ger(1.0, &dev, &dev, 1.0);
        }
        cov /= (n - 1) as f64;
        // Symmetrize away rounding asymmetry from the rank-1 updates.
        for i in 0..dim {
            for j in 0..i {
                let avg = 0.5 * (cov[(i, j)] + cov[(j, i)]);
                cov[(i, j)] = avg;
                cov[(j, i)] = avg;
            }
        }
    }
    for i in 0..dim {
        cov[(i, i)] += eps_reg;
    }
    Ok((mean, cov))
}

/// Per-joint pooled residual variance `sum r^2 / (n - 1)` over all
/// demonstrations and samples, floored at `eps_reg`.
pub fn estimate_noise(
    demos: &[Demonstration],
    weights: &[WeightMatrix],
    basis: &BasisConfig,
    eps_reg: f64,
) -> Result<DVector<f64>> {
    if demos.is_empty() || demos.len() != weights.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} demonstrations but {} weight matrices",
            demos.len(),
            weights.len()
        )));
    }
    let dims = demos[0].dims();
    let mut sum_sq = DVector::zeros(dims);
    let mut count = 0usize;
    for (demo, w) in demos.iter().zip(weights) {
        if demo.dims() != dims || w.dims() != dims {
            return Err(Error::ShapeMismatch(
                "joint count differs across demonstrations".into(),
            ));
        }
        let residual = demo.values() - w.reconstruct(basis, demo.samples())?;
        for d in 0..dims {
            sum_sq[d] += residual.column(d).norm_squared();
        }
        count += demo.samples();
    }
    let denom = (count.max(2) - 1) as f64;
    Ok(sum_sq.map(|s: f64| (s / denom).max(eps_reg)))
}

/// Gaussian distribution over trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryModel {
    basis: BasisConfig,
    labels: Vec<String>,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    noise: DVector<f64>,
    eps_reg: f64,
}

/// Everything produced while fitting a model.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub model: TrajectoryModel,
    pub weights: Vec<WeightMatrix>,
}

impl TrajectoryModel {
    pub fn new(
        basis: BasisConfig,
        labels: Vec<String>,
        mean: DVector<f64>,
        cov: DMatrix<f64>,
        noise: DVector<f64>,
        eps_reg: f64,
    ) -> Result<Self> {
        let dims = noise.len();
        let kd = basis.num_basis() * dims;
        if dims == 0 {
            return Err(Error::invalid("model has no dimensions"));
        }
        if labels.len() != dims {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for {dims} joints",
                labels.len()
            )));
        }
        if mean.len() != kd || cov.nrows() != kd || cov.ncols() != kd {
            return Err(Error::ShapeMismatch(format!(
                "expected mean of length {kd} and {kd}x{kd} covariance"
            )));
        }
        if noise.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("observation noise must be finite and >= 0"));
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("model parameters must be finite"));
        }
        if !(eps_reg.is_finite() && eps_reg >= 0.0) {
            return Err(Error::invalid("eps_reg must be >= 0"));
        }
        Ok(TrajectoryModel {
            basis,
            labels,
            mean,
            cov,
            noise,
            eps_reg,
        })
    }

    /// Fits weights per demonstration, then the weight distribution and the
    /// observation noise.
    pub fn fit(
        demos: &[Demonstration],
        labels: Vec<String>,
        basis: &BasisConfig,
        eps_reg: f64,
    ) -> Result<FitOutcome> {
        let dims = demos
            .first()
            .ok_or_else(|| Error::invalid("need at least one demonstration"))?
            .dims();
        if let Some(bad) = demos.iter().find(|d| d.dims() != dims) {
            return Err(Error::ShapeMismatch(format!(
                "demonstrations have {dims} and {} joints",
                bad.dims()
            )));
        }
        let weights = demos
            .iter()
            .map(|d| fit_weights(d, basis))
            .collect::<Result<Vec<_>>>()?;
        let (mean, cov) = fit_distribution(&weights, eps_reg)?;
        let noise = estimate_noise(demos, &weights, basis, eps_reg)?;
        let model = TrajectoryModel::new(basis.clone(), labels, mean, cov, noise, eps_reg)?;
        Ok(FitOutcome { model, weights })
    }

    pub fn basis(&self) -> &BasisConfig {
        &self.basis
    }

    pub fn dims(&self) -> usize {
        self.noise.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn weight_mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn weight_cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn noise(&self) -> &DVector<f64> {
        &self.noise
    }

    pub fn eps_reg(&self) -> f64 {
        self.eps_reg
    }

    /// Replaces the observation-noise diagonal.
    pub fn with_noise(mut self, noise: DVector<f64>) -> Result<Self> {
        if noise.len() != self.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                actual: noise.len(),
            });
        }
        if noise.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("observation noise must be finite and >= 0"));
        }
        self.noise = noise;
        Ok(self)
    }

    fn mean_weights(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.basis.num_basis(), self.dims(), self.mean.as_slice())
    }

    /// `T x D` mean trajectory `Phi mu_w`.
    pub fn mean_trajectory(&self, samples: usize) -> Result<DMatrix<f64>> {
        Ok(self.basis.design_matrix(samples)? * self.mean_weights())
    }

    /// `T x D` marginal standard deviation `sqrt(phi^T Sigma_dd phi + sigma_y,d^2)`.
    pub fn marginal_std(&self, samples: usize) -> Result<DMatrix<f64>> {
        let phi = self.basis.design_matrix(samples)?;
        let k = self.basis.num_basis();
        let mut out = DMatrix::zeros(samples, self.dims());
        for d in 0..self.dims() {
            let block = self.cov.view((d * k, d * k), (k, k));
            // rows of phi * block, dotted with rows of phi
            let projected = &phi * block;
            for t in 0..samples {
                let q = projected.row(t).dot(&phi.row(t)).max(0.0);
                out[(t, d)] = (q + self.noise[d]).sqrt();
            }
        }
        Ok(out)
    }

    /// `sum_t log N(y_t | Phi_t mu_w, Sigma_y)` in nats.
    pub fn log_likelihood(&self, demo: &Demonstration) -> Result<f64> {
        Ok(self.log_likelihood_per_joint(demo)?.iter().sum())
    }

    /// Per-joint terms of [`log_likelihood`](Self::log_likelihood).
    pub fn log_likelihood_per_joint(&self, demo: &Demonstration) -> Result<Vec<f64>> {
        if demo.dims() != self.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                actual: demo.dims(),
            });
        }
        let mean = self.mean_trajectory(demo.samples())?;
        let t = demo.samples() as f64;
        Ok((0..self.dims())
            .map(|d| {
                let var = self.noise[d];
                let sq: f64 = (demo.values().column(d) - mean.column(d)).norm_squared();
                -0.5 * t * (2.0 * PI * var).ln() - sq / (2.0 * var)
            })
            .collect())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let line = |out: &mut String, key: &str, vals: &mut dyn Iterator<Item = f64>| {
            out.push_str(key);
            for v in vals {
                out.push(' ');
                out.push_str(&fmt_f64(v));
            }
            out.push('\n');
        };
        out.push_str(MODEL_HEADER);
        out.push('\n');
        out.push_str(&format!("num_basis {}\n", self.basis.num_basis()));
        out.push_str(&format!("dims {}\n", self.dims()));
        line(&mut out, "width", &mut std::iter::once(self.basis.width()));
        line(&mut out, "ridge", &mut std::iter::once(self.basis.ridge()));
        line(&mut out, "eps_reg", &mut std::iter::once(self.eps_reg));
        out.push_str(&format!("normalize {}\n", u8::from(self.basis.normalize())));
        out.push_str("labels");
        for l in &self.labels {
            out.push(' ');
            out.push_str(l);
        }
        out.push('\n');
        line(&mut out, "centers", &mut self.basis.centers().into_iter());
        line(&mut out, "mean", &mut self.mean.iter().copied());
        out.push_str("cov\n");
        for row in self.cov.row_iter() {
            let row: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        line(&mut out, "noise", &mut self.noise.iter().copied());
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = Lines::new(text);
        if lines.expect_line("header")?.trim() != MODEL_HEADER {
            return Err(Error::parse(format!("missing `{MODEL_HEADER}` header")));
        }
        let scalar = |lines: &mut Lines, key: &str| -> Result<String> {
            match lines.expect_key(key)?[..] {
                [v] => Ok(v.to_string()),
                _ => Err(Error::parse(format!("`{key}` takes one value"))),
            }
        };
        let floats = |toks: Vec<&str>, key: &str, len: usize| -> Result<Vec<f64>> {
            if toks.len() != len {
                return Err(Error::parse(format!(
                    "`{key}` needs {len} values, found {}",
                    toks.len()
                )));
            }
            toks.iter().map(|t| parse_f64(t, key)).collect()
        };
        let k = parse_usize(&scalar(&mut lines, "num_basis")?, "num_basis")?;
        let d = parse_usize(&scalar(&mut lines, "dims")?, "dims")?;
        let width = parse_f64(&scalar(&mut lines, "width")?, "width")?;
        let ridge = parse_f64(&scalar(&mut lines, "ridge")?, "ridge")?;
        let eps_reg = parse_f64(&scalar(&mut lines, "eps_reg")?, "eps_reg")?;
        let normalize = match scalar(&mut lines, "normalize")?.as_str() {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::parse(format!(
                    "normalize must be 0 or 1, got {other}"
                )))
            }
        };
        let basis = BasisConfig::with_params(k, width, ridge, normalize)?;
        let labels: Vec<String> = lines
            .expect_key("labels")?
            .into_iter()
            .map(String::from)
            .collect();
        let centers = floats(lines.expect_key("centers")?, "centers", k)?;
        if centers != basis.centers() {
            return Err(Error::parse("centers are not evenly spaced over [0, 1]"));
        }
        let kd = k * d;
        let mean = floats(lines.expect_key("mean")?, "mean", kd)?;
        if !lines.expect_key("cov")?.is_empty() {
            return Err(Error::parse("`cov` header takes no values"));
        }
        let mut cov = DMatrix::zeros(kd, kd);
        for i in 0..kd {
            let row = lines.expect_line("covariance row")?;
            let vals = floats(row.split_whitespace().collect(), "cov", kd)?;
            for (j, v) in vals.into_iter().enumerate() {
                cov[(i, j)] = v;
            }
        }
        let noise = floats(lines.expect_key("noise")?, "noise", d)?;
        if let Some(extra) = lines.next_line() {
            return Err(Error::parse(format!("trailing content {extra:?}")));
        }
        TrajectoryModel::new(
            basis,
            labels,
            DVector::from_vec(mean),
            cov,
            DVector::from_vec(noise),
            eps_reg,
        )
    }
}
