//! FastICA for the data-driven source space.
//!
//! Fixed-point iteration with the log-cosh contrast (g = tanh), symmetric
//! orthogonalization and PCA whitening. Deterministic for a given seed.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{sym_eig, SymmetricMatrix};
use crate::source::{project_matrix, SourceProjection};
use crate::timeseries::TimeSeriesMatrix;

/// Trained unmixing model: `S = Phi X`.
#[derive(Debug, Clone)]
pub struct UnmixingModel {
    /// Unmixing matrix, components x channels.
    phi: Array2<f64>,
    /// Pseudo-inverse patterns, channels x components.
    mixing: Array2<f64>,
    pub n_iterations: usize,
    pub converged: bool,
    pub seed: u64,
}

impl UnmixingModel {
    pub fn unmixing(&self) -> &Array2<f64> {
        &self.phi
    }

    pub fn mixing(&self) -> &Array2<f64> {
        &self.mixing
    }

    /// Pattern (mixing column) of component `index`.
    pub fn pattern(&self, index: usize) -> Result<Array1<f64>> {
        if index >= self.phi.nrows() {
            return Err(Error::InvalidIndex {
                index,
                sources: self.phi.nrows(),
            });
        }
        Ok(self.mixing.column(index).to_owned())
    }
}

impl SourceProjection for UnmixingModel {
    fn project(&self, x: &TimeSeriesMatrix) -> Result<TimeSeriesMatrix> {
        project_matrix(&self.phi, x)
    }

    fn n_sources(&self) -> usize {
        self.phi.nrows()
    }

    fn n_channels(&self) -> usize {
        self.phi.ncols()
    }
}

/// Symmetric orthogonalization `W <- (W W^T)^-1/2 W`.
fn symmetric_decorrelate(w: &Array2<f64>) -> Result<Array2<f64>> {
    let wwt = SymmetricMatrix::from_symmetrizing(w.dot(&w.t()))?;
    let eig = sym_eig(&wwt);
    let k = eig.eigenvalues.len();
    let mut inv_sqrt = Array2::zeros((k, k));
    for i in 0..k {
        if eig.eigenvalues[i] <= 0.0 {
            return Err(Error::RankZero);
        }
        inv_sqrt[[i, i]] = 1.0 / eig.eigenvalues[i].sqrt();
    }
    Ok(eig
        .eigenvectors
        .dot(&inv_sqrt)
        .dot(&eig.eigenvectors.t())
        .dot(w))
}

/// Extracts maximally non-Gaussian components from a recording.
///
/// Rows of the result's unmixing matrix are orthonormal in whitened space.
/// When the fixed-point iteration does not reach `tol` within `max_iter`
/// sweeps the model is still returned, flagged `converged = false`.
pub fn fast_ica(
    x: &TimeSeriesMatrix,
    n_components: usize,
    seed: u64,
    tol: f64,
    max_iter: usize,
) -> Result<UnmixingModel> {
    let n_c = x.n_channels();
    let n_t = x.n_samples();
    if n_components == 0 || n_components > n_c {
        return Err(Error::InvalidRequest {
            context: format!("{n_components} components from {n_c} channels"),
        });
    }
    if n_t < 2 * n_c {
        return Err(Error::InsufficientSamples {
            got: n_t,
            needed: 2 * n_c,
        });
    }

    // center channels
    let mut centered = x.data().clone();
    for mut row in centered.rows_mut() {
        let mean = row.sum() / n_t as f64;
        row.mapv_inplace(|v| v - mean);
    }

    // PCA whitening, retaining n_components directions
    let cov = SymmetricMatrix::from_symmetrizing(centered.dot(&centered.t()) / n_t as f64)?;
    let eig = sym_eig(&cov);
    let lambda_max = eig.eigenvalues[0];
    if lambda_max <= 0.0 {
        return Err(Error::RankZero);
    }
    let mut k = Array2::zeros((n_components, n_c));
    let mut k_pinv = Array2::zeros((n_c, n_components));
    for i in 0..n_components {
        let lambda = eig.eigenvalues[i];
        if lambda <= 1e-12 * lambda_max {
            return Err(Error::RankZero);
        }
        let sqrt = lambda.sqrt();
        for j in 0..n_c {
            k[[i, j]] = eig.eigenvectors[[j, i]] / sqrt;
            k_pinv[[j, i]] = eig.eigenvectors[[j, i]] * sqrt;
        }
    }
    let whitened = k.dot(&centered);

    // fixed-point iteration
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = Array2::from_shape_fn((n_components, n_components), |_| {
        rng.sample::<f64, _>(StandardNormal)
    });
    let mut w = symmetric_decorrelate(&init)?;
    let mut converged = false;
    let mut n_iterations = 0;
    let inv_t = 1.0 / n_t as f64;
    for iter in 0..max_iter {
        n_iterations = iter + 1;
        let u = w.dot(&whitened);
        let g = u.mapv(f64::tanh);
        let g_prime_mean: Vec<f64> = g
            .rows()
            .into_iter()
            .map(|row| row.iter().map(|v| 1.0 - v * v).sum::<f64>() * inv_t)
            .collect();
        let mut w_new = g.dot(&whitened.t()) * inv_t;
        for (i, mut row) in w_new.rows_mut().into_iter().enumerate() {
            row.zip_mut_with(&w.row(i), |a, &b| *a -= g_prime_mean[i] * b);
        }
        let w_new = symmetric_decorrelate(&w_new)?;

        // max absolute change of the unmixing directions
        let delta = (0..n_components)
            .map(|i| {
                let dot: f64 = w_new
                    .row(i)
                    .iter()
                    .zip(w.row(i).iter())
                    .map(|(a, b)| a * b)
                    .sum();
                (1.0 - dot.abs()).abs()
            })
            .fold(0.0f64, f64::max);
        w = w_new;
        if delta < tol {
            converged = true;
            break;
        }
    }

    let phi = w.dot(&k);
    let mixing = k_pinv.dot(&w.t());
    Ok(UnmixingModel {
        phi,
        mixing,
        n_iterations,
        converged,
        seed,
    })
}
