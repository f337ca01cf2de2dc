use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Gaussian basis over normalized phase `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisConfig {
    num_basis: usize,
    width: f64,
    ridge: f64,
    normalize: bool,
}

pub const DEFAULT_NUM_BASIS: usize = 20;
pub const DEFAULT_RIDGE: f64 = 1e-6;

impl BasisConfig {
    /// `num_basis` evenly spaced centers with width equal to the center spacing
    /// and the default ridge.
    pub fn new(num_basis: usize) -> Result<Self> {
        let width = if num_basis > 1 {
            1.0 / (num_basis - 1) as f64
        } else {
            1.0
        };
        Self::with_params(num_basis, width, DEFAULT_RIDGE, true)
    }

    pub fn with_params(num_basis: usize, width: f64, ridge: f64, normalize: bool) -> Result<Self> {
        if num_basis == 0 {
            return Err(Error::invalid("need at least one basis function"));
        }
        if !(width.is_finite() && width > 0.0) {
            return Err(Error::invalid(format!(
                "basis width must be > 0, got {width}"
            )));
        }
        if !(ridge.is_finite() && ridge >= 0.0) {
            return Err(Error::invalid(format!("ridge must be >= 0, got {ridge}")));
        }
        Ok(BasisConfig {
            num_basis,
            width,
            ridge,
            normalize,
        })
    }

    pub fn with_ridge(mut self, ridge: f64) -> Result<Self> {
        if !(ridge.is_finite() && ridge >= 0.0) {
            return Err(Error::invalid(format!("ridge must be >= 0, got {ridge}")));
        }
        self.ridge = ridge;
        Ok(self)
    }

    pub fn num_basis(&self) -> usize {
        self.num_basis
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn normalize(&self) -> bool {
        self.normalize
    }

    /// Centers `k / (K - 1)`; a single basis sits at `0.5`.
    pub fn centers(&self) -> Vec<f64> {
        if self.num_basis == 1 {
            return vec![0.5];
        }
        let last = (self.num_basis - 1) as f64;
        (0..self.num_basis).map(|k| k as f64 / last).collect()
    }

    /// Feature vector at `phase`.
    pub fn row(&self, phase: f64) -> Result<Vec<f64>> {
        if !(0.0..=1.0).contains(&phase) {
            return Err(Error::invalid(format!("phase {phase} outside [0, 1]")));
        }
        let mut row = Vec::with_capacity(self.num_basis);
        self.fill_row(phase, &mut row);
        Ok(row)
    }

    fn fill_row(&self, phase: f64, row: &mut Vec<f64>) {
        let denom = 2.0 * self.width * self.width;
        row.clear();
        row.extend(self.centers().into_iter().map(|c| {
            let d = phase - c;
            (-d * d / denom).exp()
        }));
        if self.normalize {
            let sum: f64 = row.iter().sum();
            // Far outside every center all bumps underflow; fall back to the nearest.
            if sum > 0.0 {
                row.iter_mut().for_each(|x| *x /= sum);
            } else {
                let nearest = self
                    .centers()
                    .iter()
                    .enumerate()
                    .min_by(|a, b| (a.1 - phase).abs().total_cmp(&(b.1 - phase).abs()))
                    .map(|(i, _)| i)
                    .unwrap_or(0);
                row.iter_mut().for_each(|x| *x = 0.0);
                row[nearest] = 1.0;
            }
        }
    }

    /// `T x K` feature matrix at phases `i / (T - 1)`.
    pub fn design_matrix(&self, samples: usize) -> Result<DMatrix<f64>> {
        if samples < 2 {
            return Err(Error::invalid(format!(
                "need at least 2 samples, got {samples}"
            )));
        }
        let mut phi = DMatrix::zeros(samples, self.num_basis);
        let mut row = Vec::with_capacity(self.num_basis);
        for i in 0..samples {
            self.fill_row(phase_at(i, samples), &mut row);
            for (k, v) in row.iter().enumerate() {
                phi[(i, k)] = *v;
            }
        }
        Ok(phi)
    }
}

impl Default for BasisConfig {
    fn default() -> Self {
        BasisConfig::new(DEFAULT_NUM_BASIS).expect("valid default basis")
    }
}

/// Normalized time of sample `i` out of `samples`.
pub fn phase_at(i: usize, samples: usize) -> f64 {
    i as f64 / (samples - 1) as f64
}
