//! Regularized linear inverse for the anatomically constrained source space.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::linalg::spd_solve;
use crate::source::{project_matrix, LeadField, SourceProjection};
use crate::timeseries::TimeSeriesMatrix;

/// Linear inverse operator `M = A^T (lambda I + A A^T)^-1`, sources x
/// channels.
///
/// With an identity source prior this is the ridge-regularized least-squares
/// (minimum-norm) solution of the forward model.
#[derive(Debug, Clone)]
pub struct InverseOperator {
    m: Array2<f64>,
    lambda: f64,
}

impl InverseOperator {
    pub fn matrix(&self) -> &Array2<f64> {
        &self.m
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

impl SourceProjection for InverseOperator {
    fn project(&self, x: &TimeSeriesMatrix) -> Result<TimeSeriesMatrix> {
        apply_inverse(self, x)
    }

    fn n_sources(&self) -> usize {
        self.m.nrows()
    }

    fn n_channels(&self) -> usize {
        self.m.ncols()
    }
}

/// Builds the inverse operator for a lead field.
///
/// Solving `(lambda I + A A^T) Y = A` column-wise and transposing avoids
/// forming any explicit matrix inverse. `lambda = 1` reproduces the plain
/// minimum-norm estimate.
pub fn mne_inverse_operator(a: &LeadField, lambda: f64) -> Result<InverseOperator> {
    if !lambda.is_finite() || lambda <= 0.0 {
        return Err(Error::InvalidRegularization { lambda });
    }
    let n_c = a.n_channels();
    let mut gram = a.matrix().dot(&a.matrix().t());
    for i in 0..n_c {
        gram[[i, i]] += lambda;
    }
    let y = spd_solve(&gram, a.matrix())?;
    Ok(InverseOperator {
        m: y.t().to_owned(),
        lambda,
    })
}

/// Projects a recording into the anatomical source space: `S = M X`.
pub fn apply_inverse(op: &InverseOperator, x: &TimeSeriesMatrix) -> Result<TimeSeriesMatrix> {
    project_matrix(&op.m, x)
}
