use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenvalues down to `-EIGEN_CLAMP` are treated as round-off and set to 0.
pub const EIGEN_CLAMP: f64 = 1e-6;

const SYMMETRY_TOL: f64 = 1e-8;

/// Mean and covariance of a set of embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub n: usize,
}

impl GaussianStats {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>, n: usize) -> Result<Self> {
        let d = mean.len();
        if cov.shape() != (d, d) {
            return Err(Error::invalid(format!("covariance is {:?} for a {d}-dim mean", cov.shape())));
        }
        if n < 2 {
            return Err(Error::invalid("statistics need at least two samples"));
        }
        if (&cov - cov.transpose()).amax() > SYMMETRY_TOL {
            return Err(Error::invalid("covariance is not symmetric"));
        }
        Ok(Self { mean, cov, n })
    }

    /// Sample mean and unbiased covariance.
    pub fn from_samples(samples: &[Vec<f64>]) -> Result<Self> {
        let n = samples.len();
        if n < 2 {
            return Err(Error::invalid("statistics need at least two samples"));
        }
        let d = samples[0].len();
        if samples.iter().any(|s| s.len() != d) {
            return Err(Error::invalid("samples differ in dimension"));
        }
        let x = DMatrix::from_fn(n, d, |i, j| samples[i][j]);
        let mean = x.row_mean().transpose();
        let centred = DMatrix::from_fn(n, d, |i, j| x[(i, j)] - mean[j]);
        let mut cov = centred.transpose() * &centred / (n - 1) as f64;
        cov = (&cov + cov.transpose()) * 0.5;
        Self::new(mean, cov, n)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

fn clamped_eigenvalues(m: DMatrix<f64>, what: &str) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    let mut eig = SymmetricEigen::new(m);
    for v in eig.eigenvalues.iter_mut() {
        if !v.is_finite() || *v < -EIGEN_CLAMP {
            return Err(Error::NumericalFailure(format!("{what} has eigenvalue {v}")));
        }
        *v = v.max(0.0);
    }
    Ok(eig)
}

/// `‖μa − μb‖² + tr(Σa + Σb − 2 (Σa Σb)^½)`. The trace of the square root is
/// taken from the eigenvalues of the symmetric product `Σa^½ Σb Σa^½`.
pub fn frechet_distance(a: &GaussianStats, b: &GaussianStats) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::invalid(format!("dimension mismatch: {} vs {}", a.dim(), b.dim())));
    }
    let eig = clamped_eigenvalues(a.cov.clone(), "first covariance")?;
    let root = &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt)) * eig.eigenvectors.transpose();
    let prod = &root * &b.cov * &root;
    let prod = (&prod + prod.transpose()) * 0.5;
    let cross: f64 = clamped_eigenvalues(prod, "covariance product")?.eigenvalues.iter().map(|v| v.sqrt()).sum();
    let d = (&a.mean - &b.mean).norm_squared() + a.cov.trace() + b.cov.trace() - 2.0 * cross;
    Ok(d.max(0.0))
}
