//! Target and auxiliary density models.
//!
//! A model exposes its potential energy `U(q) = -log f(q)` (up to a constant
//! that is fixed per model), the gradient of the potential, and, when exact
//! sampling is available, a sampler. Gaussians and Gaussian mixtures carry
//! their normalization constants; the logistic-regression posterior is kept
//! unnormalized.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::RngCore;

use crate::linalg::{Mat, SymMatrix};
use crate::rng::{standard_normal, uniform01};

pub const LN_2PI: f64 = 1.837877066409345483560659472811;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelError {
    DimensionMismatch,
    NoSampler,
    CovarianceNotSpd,
    NonFiniteGradient,
    EmptyMixture,
    InvalidWeights,
    EmptyDataset,
    NonFiniteData,
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msg = match self {
            ModelError::DimensionMismatch => "input dimension does not match the model",
            ModelError::NoSampler => "model does not support exact sampling",
            ModelError::CovarianceNotSpd => "covariance matrix is not positive definite",
            ModelError::NonFiniteGradient => "gradient has non-finite entries",
            ModelError::EmptyMixture => "mixture needs at least one component",
            ModelError::InvalidWeights => "mixture weights must be positive",
            ModelError::EmptyDataset => "dataset has no rows",
            ModelError::NonFiniteData => "dataset contains non-finite values",
        };
        f.write_str(msg)
    }
}

/// A target or auxiliary distribution: potential energy, gradient, and
/// (when available) exact sampling.
pub trait DensityModel {
    fn dim(&self) -> usize;

    /// `-log` density up to a constant that is consistent across all calls
    /// on the same model.
    fn potential(&self, q: &[f64]) -> f64;

    fn grad_potential(&self, q: &[f64], out: &mut [f64]);

    fn has_sampler(&self) -> bool {
        false
    }

    fn sample_into(&self, _rng: &mut dyn RngCore, _out: &mut [f64]) -> Result<(), ModelError> {
        Err(ModelError::NoSampler)
    }

    /// Hessian of the potential. The default takes central differences of
    /// the gradient with step `1e-5·(1+|qᵢ|)`; models with closed forms
    /// override it.
    fn hessian_potential(&self, q: &[f64]) -> Mat {
        let d = self.dim();
        let mut h = Mat::zeros(d, d);
        let mut qp = q.to_vec();
        let mut g_plus = vec![0.0; d];
        let mut g_minus = vec![0.0; d];
        for j in 0..d {
            let step = 1e-5 * (1.0 + q[j].abs());
            qp[j] = q[j] + step;
            self.grad_potential(&qp, &mut g_plus);
            qp[j] = q[j] - step;
            self.grad_potential(&qp, &mut g_minus);
            qp[j] = q[j];
            for i in 0..d {
                h[(i, j)] = (g_plus[i] - g_minus[i]) / (2.0 * step);
            }
        }
        // Symmetrize round-off and finite-difference skew.
        crate::linalg::symmetrize(&h)
    }

    fn try_potential(&self, q: &[f64]) -> Result<f64, ModelError> {
        if q.len() != self.dim() {
            return Err(ModelError::DimensionMismatch);
        }
        Ok(self.potential(q))
    }

    fn try_grad_potential(&self, q: &[f64]) -> Result<Vec<f64>, ModelError> {
        if q.len() != self.dim() {
            return Err(ModelError::DimensionMismatch);
        }
        let mut out = vec![0.0; q.len()];
        self.grad_potential(q, &mut out);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFiniteGradient);
        }
        Ok(out)
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Result<Vec<f64>, ModelError> {
        let mut out = vec![0.0; self.dim()];
        self.sample_into(rng, &mut out)?;
        Ok(out)
    }
}

/// Multivariate Gaussian with cached Cholesky factor, precision matrix and
/// log-determinant.
#[derive(Debug, Clone)]
pub struct GaussianDensity {
    mean: Vec<f64>,
    covariance: SymMatrix,
    chol: Mat,
    precision: Mat,
    log_norm_const: f64,
}

impl GaussianDensity {
    pub fn new(mean: Vec<f64>, covariance: SymMatrix) -> Result<Self, ModelError> {
        if mean.len() != covariance.dim() {
            return Err(ModelError::DimensionMismatch);
        }
        let chol = covariance
            .as_mat()
            .cholesky()
            .ok_or(ModelError::CovarianceNotSpd)?;
        let precision = covariance
            .as_mat()
            .inverse_spd()
            .ok_or(ModelError::CovarianceNotSpd)?;
        let d = mean.len();
        let log_det: f64 = (0..d).map(|i| 2.0 * libm::log(chol[(i, i)])).sum();
        let log_norm_const = 0.5 * (d as f64 * LN_2PI + log_det);
        Ok(GaussianDensity { mean, covariance, chol, precision, log_norm_const })
    }

    /// Isotropic Gaussian `N(mean, sigma² I)`.
    pub fn isotropic(mean: Vec<f64>, sigma: f64) -> Result<Self, ModelError> {
        let d = mean.len();
        let cov = SymMatrix::diag(&vec![sigma * sigma; d]);
        GaussianDensity::new(mean, cov)
    }

    pub fn standard(dim: usize) -> Self {
        GaussianDensity::isotropic(vec![0.0; dim], 1.0).expect("unit covariance is SPD")
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn covariance(&self) -> &SymMatrix {
        &self.covariance
    }

    pub fn precision(&self) -> &Mat {
        &self.precision
    }

    pub fn log_density(&self, q: &[f64]) -> f64 {
        -self.potential(q)
    }
}

impl DensityModel for GaussianDensity {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn potential(&self, q: &[f64]) -> f64 {
        debug_assert_eq!(q.len(), self.mean.len());
        let d = self.mean.len();
        let mut quad = 0.0;
        for i in 0..d {
            let mut row = 0.0;
            for j in 0..d {
                row += self.precision[(i, j)] * (q[j] - self.mean[j]);
            }
            quad += (q[i] - self.mean[i]) * row;
        }
        0.5 * quad + self.log_norm_const
    }

    fn grad_potential(&self, q: &[f64], out: &mut [f64]) {
        let d = self.mean.len();
        debug_assert_eq!(q.len(), d);
        for i in 0..d {
            let mut acc = 0.0;
            for j in 0..d {
                acc += self.precision[(i, j)] * (q[j] - self.mean[j]);
            }
            out[i] = acc;
        }
    }

    fn has_sampler(&self) -> bool {
        true
    }

    fn sample_into(&self, rng: &mut dyn RngCore, out: &mut [f64]) -> Result<(), ModelError> {
        let d = self.mean.len();
        if out.len() != d {
            return Err(ModelError::DimensionMismatch);
        }
        let z: Vec<f64> = (0..d).map(|_| standard_normal(rng)).collect();
        for i in 0..d {
            let mut acc = self.mean[i];
            for j in 0..=i {
                acc += self.chol[(i, j)] * z[j];
            }
            out[i] = acc;
        }
        Ok(())
    }

    fn hessian_potential(&self, _q: &[f64]) -> Mat {
        self.precision.clone()
    }
}

/// Mixture of Gaussians with normalized positive weights.
#[derive(Debug, Clone)]
pub struct GaussianMixtureDensity {
    components: Vec<GaussianDensity>,
    weights: Vec<f64>,
    log_weights: Vec<f64>,
}

impl GaussianMixtureDensity {
    pub fn new(components: Vec<GaussianDensity>, weights: Vec<f64>) -> Result<Self, ModelError> {
        if components.is_empty() {
            return Err(ModelError::EmptyMixture);
        }
        if weights.len() != components.len() || weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(ModelError::InvalidWeights);
        }
        let d = components[0].dim();
        if components.iter().any(|c| c.dim() != d) {
            return Err(ModelError::DimensionMismatch);
        }
        let total: f64 = weights.iter().sum();
        let weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let log_weights = weights.iter().map(|w| libm::log(*w)).collect();
        Ok(GaussianMixtureDensity { components, weights, log_weights })
    }

    pub fn components(&self) -> &[GaussianDensity] {
        &self.components
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    /// Log density by log-sum-exp over components with max-subtraction.
    pub fn log_density(&self, q: &[f64]) -> f64 {
        let mut terms: Vec<f64> = Vec::with_capacity(self.components.len());
        let mut max = f64::NEG_INFINITY;
        for (c, lw) in self.components.iter().zip(&self.log_weights) {
            let t = lw + c.log_density(q);
            if t > max {
                max = t;
            }
            terms.push(t);
        }
        if !max.is_finite() {
            return max;
        }
        let sum: f64 = terms.iter().map(|t| libm::exp(t - max)).sum();
        max + libm::log(sum)
    }
}

impl DensityModel for GaussianMixtureDensity {
    fn dim(&self) -> usize {
        self.components[0].dim()
    }

    fn potential(&self, q: &[f64]) -> f64 {
        -self.log_density(q)
    }

    fn grad_potential(&self, q: &[f64], out: &mut [f64]) {
        // Responsibility-weighted combination of the component gradients.
        let d = self.dim();
        let k = self.components.len();
        let mut log_terms = Vec::with_capacity(k);
        let mut max = f64::NEG_INFINITY;
        for (c, lw) in self.components.iter().zip(&self.log_weights) {
            let t = lw + c.log_density(q);
            if t > max {
                max = t;
            }
            log_terms.push(t);
        }
        out.fill(0.0);
        if !max.is_finite() {
            return;
        }
        let norm: f64 = log_terms.iter().map(|t| libm::exp(t - max)).sum();
        let mut grad_c = vec![0.0; d];
        for (c, t) in self.components.iter().zip(&log_terms) {
            let resp = libm::exp(t - max) / norm;
            if resp == 0.0 {
                continue;
            }
            c.grad_potential(q, &mut grad_c);
            for i in 0..d {
                out[i] += resp * grad_c[i];
            }
        }
    }

    fn has_sampler(&self) -> bool {
        true
    }

    fn sample_into(&self, rng: &mut dyn RngCore, out: &mut [f64]) -> Result<(), ModelError> {
        let u = uniform01(rng);
        let mut acc = 0.0;
        let mut idx = self.components.len() - 1;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                idx = i;
                break;
            }
        }
        self.components[idx].sample_into(rng, out)
    }
}

/// Bayesian logistic-regression posterior (unnormalized): Gaussian prior
/// times the Bernoulli likelihood of binary labels under a sigmoid link.
#[derive(Debug, Clone)]
pub struct BlrPosterior {
    /// Row-major N×d design matrix; first column is the intercept.
    design: Vec<f64>,
    labels: Vec<f64>,
    n_rows: usize,
    prior: GaussianDensity,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)` without overflow.
fn log1pexp(z: f64) -> f64 {
    if z > 0.0 {
        z + libm::log1p(libm::exp(-z))
    } else {
        libm::log1p(libm::exp(z))
    }
}

impl BlrPosterior {
    pub fn new(design: Vec<f64>, labels: Vec<f64>, prior: GaussianDensity) -> Result<Self, ModelError> {
        let d = prior.dim();
        if labels.is_empty() {
            return Err(ModelError::EmptyDataset);
        }
        if design.len() != labels.len() * d {
            return Err(ModelError::DimensionMismatch);
        }
        if design.iter().chain(labels.iter()).any(|v| !v.is_finite()) {
            return Err(ModelError::NonFiniteData);
        }
        Ok(BlrPosterior { design, n_rows: labels.len(), labels, prior })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn prior(&self) -> &GaussianDensity {
        &self.prior
    }

    pub fn design_row(&self, n: usize) -> &[f64] {
        let d = self.prior.dim();
        &self.design[n * d..(n + 1) * d]
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    /// Log likelihood `log P(T | q)` of the full dataset.
    pub fn log_likelihood(&self, q: &[f64]) -> f64 {
        let d = self.prior.dim();
        let mut acc = 0.0;
        for n in 0..self.n_rows {
            let row = &self.design[n * d..(n + 1) * d];
            let z: f64 = row.iter().zip(q).map(|(x, qi)| x * qi).sum();
            acc += self.labels[n] * z - log1pexp(z);
        }
        acc
    }
}

impl DensityModel for BlrPosterior {
    fn dim(&self) -> usize {
        self.prior.dim()
    }

    fn potential(&self, q: &[f64]) -> f64 {
        self.prior.potential(q) - self.log_likelihood(q)
    }

    fn grad_potential(&self, q: &[f64], out: &mut [f64]) {
        let d = self.prior.dim();
        self.prior.grad_potential(q, out);
        for n in 0..self.n_rows {
            let row = &self.design[n * d..(n + 1) * d];
            let z: f64 = row.iter().zip(q.iter()).map(|(x, qi)| x * qi).sum();
            let resid = sigmoid(z) - self.labels[n];
            for i in 0..d {
                out[i] += resid * row[i];
            }
        }
    }
}
