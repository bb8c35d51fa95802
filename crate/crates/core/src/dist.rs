//! Seeded sampling primitives: skew normal calibrated to zero mean and a
//! target standard deviation, multivariate normal, empirical-distribution
//! resampling, and Bernoulli draws.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Skew normal specified by its shape parameter and the standard deviation of
/// the calibrated zero-mean variate.
///
/// The location and scale are derived so that the distribution has mean zero
/// and standard deviation `target_sd`: with `delta = shape / sqrt(1 + shape^2)`,
/// `scale = target_sd / sqrt(1 - 2 delta^2 / pi)` and
/// `location = -scale * delta * sqrt(2 / pi)`. Shape zero degenerates exactly
/// to `N(0, target_sd^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkewNormalSpec {
    shape: f64,
    target_sd: f64,
}

impl SkewNormalSpec {
    pub fn new(shape: f64, target_sd: f64) -> Result<Self> {
        if !shape.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "skew normal shape must be finite, got {shape}"
            )));
        }
        if !(target_sd > 0.0) || !target_sd.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "skew normal target sd must be positive and finite, got {target_sd}"
            )));
        }
        Ok(Self { shape, target_sd })
    }

    /// Plain normal with the given standard deviation (shape = 0).
    pub fn normal(target_sd: f64) -> Result<Self> {
        Self::new(0.0, target_sd)
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    pub fn target_sd(&self) -> f64 {
        self.target_sd
    }

    pub fn delta(&self) -> f64 {
        self.shape / (1.0 + self.shape * self.shape).sqrt()
    }

    /// Derived (location, scale) giving mean zero and sd `target_sd`.
    pub fn location_scale(&self) -> (f64, f64) {
        let d = self.delta();
        let scale = self.target_sd / (1.0 - 2.0 * d * d / PI).sqrt();
        let location = -scale * d * (2.0 / PI).sqrt();
        (location, scale)
    }
}

/// Draw `n` i.i.d. values from the calibrated skew normal.
///
/// Uses the constructive representation
/// `X = location + scale * (delta * |Z0| + sqrt(1 - delta^2) * Z1)`
/// with independent standard normal `Z0`, `Z1`.
pub fn sample_skew_normal(spec: &SkewNormalSpec, n: usize, stream: RngStream) -> Vec<f64> {
    let (location, scale) = spec.location_scale();
    let delta = spec.delta();
    let tail = (1.0 - delta * delta).sqrt();
    let mut rng = stream.rng();
    (0..n)
        .map(|_| {
            let z0: f64 = rng.sample(StandardNormal);
            let z1: f64 = rng.sample(StandardNormal);
            location + scale * (delta * z0.abs() + tail * z1)
        })
        .collect()
}

/// Multivariate normal sampler with the Cholesky factor computed once.
///
/// A plain factorization is attempted first; if it fails, a diagonal jitter of
/// `1e-12 * trace / p` is added so near-singular coefficient covariances stay
/// usable. An all-zero covariance yields the mean exactly.
pub struct MvnSampler {
    mean: DVector<f64>,
    factor: Option<DMatrix<f64>>,
}

impl MvnSampler {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let p = mean.len();
        if cov.nrows() != p || cov.ncols() != p {
            return Err(Error::InvalidInput(format!(
                "covariance is {}x{} but mean has length {p}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        if cov.iter().all(|&c| c == 0.0) {
            return Ok(Self { mean, factor: None });
        }
        let factor = match Cholesky::new(cov.clone()) {
            Some(chol) => chol.unpack(),
            None => {
                let jitter = 1e-12 * cov.trace() / p as f64;
                let mut jittered = cov;
                for i in 0..p {
                    jittered[(i, i)] += jitter;
                }
                Cholesky::new(jittered)
                    .ok_or_else(|| {
                        Error::Numeric(
                            "covariance is not positive semidefinite (Cholesky failed even with jitter)"
                                .to_string(),
                        )
                    })?
                    .unpack()
            }
        };
        Ok(Self {
            mean,
            factor: Some(factor),
        })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// One draw `mean + L z` with `z` standard normal.
    pub fn draw(&self, stream: RngStream) -> DVector<f64> {
        match &self.factor {
            None => self.mean.clone(),
            Some(l) => {
                let mut rng = stream.rng();
                let z = DVector::from_fn(self.mean.len(), |_, _| rng.sample(StandardNormal));
                &self.mean + l * z
            }
        }
    }
}

/// One draw from `N(mean, cov)`.
pub fn sample_mvn(mean: &DVector<f64>, cov: &DMatrix<f64>, stream: RngStream) -> Result<DVector<f64>> {
    Ok(MvnSampler::new(mean.clone(), cov.clone())?.draw(stream))
}

/// `n` i.i.d. uniform-with-replacement draws from `values`.
pub fn empirical_draw(values: &[f64], n: usize, stream: RngStream) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::InvalidInput(
            "empirical draw from an empty value pool".to_string(),
        ));
    }
    let mut rng = stream.rng();
    Ok((0..n)
        .map(|_| values[rng.random_range(0..values.len())])
        .collect())
}

/// One Bernoulli draw: 1 with probability `p`.
pub fn sample_bernoulli(p: f64, stream: RngStream) -> Result<u8> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!(
            "Bernoulli probability must lie in [0, 1], got {p}"
        )));
    }
    Ok(u8::from(stream.rng().random::<f64>() < p))
}
