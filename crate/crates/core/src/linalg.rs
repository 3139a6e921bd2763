//! Covariance estimation, symmetric and generalized eigendecomposition.
//!
//! The symmetric solver is a Householder tridiagonalization + implicit-QL
//! port in the JAMA/EISPACK lineage. The generalized problem for a matrix
//! pair is reduced to a symmetric one by whitening the right-hand matrix;
//! no nonsymmetric solver is used anywhere.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::timeseries::EpochSet;

/// Real square matrix validated to be symmetric and finite.
#[derive(Debug, Clone)]
pub struct SymmetricMatrix {
    data: Array2<f64>,
}

impl SymmetricMatrix {
    /// Accepts a matrix whose asymmetry is below `1e-10` of its largest
    /// entry.
    pub fn new(data: Array2<f64>) -> Result<Self> {
        let (r, c) = data.dim();
        if r != c {
            return Err(Error::ShapeMismatch {
                context: format!("{r}x{c} matrix is not square"),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "symmetric matrix".into(),
            });
        }
        let scale = data.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        let mut asymmetry = 0.0f64;
        for i in 0..r {
            for j in (i + 1)..c {
                asymmetry = asymmetry.max((data[[i, j]] - data[[j, i]]).abs());
            }
        }
        if asymmetry > 1e-10 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::SymmetryViolation { asymmetry });
        }
        Ok(Self { data })
    }

    /// Symmetrizes `0.5 * (M + M^T)` before validating; for matrices that
    /// are symmetric up to rounding noise.
    pub fn from_symmetrizing(data: Array2<f64>) -> Result<Self> {
        let sym = 0.5 * (&data + &data.t());
        Self::new(sym)
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.data
    }
}

/// Eigenpairs sorted by non-increasing eigenvalue; eigenvectors in columns.
#[derive(Debug, Clone)]
pub struct EigenSolution {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Array2<f64>,
}

/// Result of the generalized problem `C_z w = lambda C w`.
///
/// Eigenvectors (columns) are normalized so `w^T C w = 1` on the retained
/// subspace; `reduced_rank` flags that rank-deficient directions of `C` were
/// dropped.
#[derive(Debug, Clone)]
pub struct GevdSolution {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Array2<f64>,
    pub rank: usize,
    pub reduced_rank: bool,
}

/// Plain covariance of an epoch set: `N^-1 sum_e X(e) X(e)^T`.
///
/// Outer products are taken over the samples as given; removing per-epoch
/// channel means beforehand is the caller's responsibility (see
/// [`EpochSet::demeaned`]).
pub fn covariance(epochs: &EpochSet) -> Result<SymmetricMatrix> {
    if epochs.n_epochs() == 0 {
        return Err(Error::NoData);
    }
    let n_c = epochs.n_channels();
    let mut acc = Array2::<f64>::zeros((n_c, n_c));
    for ep in epochs.data().outer_iter() {
        acc = acc + ep.dot(&ep.t());
    }
    acc /= epochs.n_epochs() as f64;
    SymmetricMatrix::from_symmetrizing(acc)
}

/// Centers `z` and scales it to unit variance (population); a constant
/// vector maps to all zeros.
pub fn standardize(z: &[f64]) -> Vec<f64> {
    let n = z.len() as f64;
    let mean = z.iter().sum::<f64>() / n;
    let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if var > 0.0 {
        let inv = 1.0 / var.sqrt();
        z.iter().map(|v| (v - mean) * inv).collect()
    } else {
        vec![0.0; z.len()]
    }
}

/// Label-weighted covariance `N^-1 sum_e z(e) X(e) X(e)^T` with `z`
/// standardized to zero mean and unit variance first.
pub fn weighted_covariance(epochs: &EpochSet, z: &[f64]) -> Result<SymmetricMatrix> {
    weighted_covariance_raw(epochs, &standardize(z))
}

/// Same as [`weighted_covariance`] but uses the weights exactly as given.
pub fn weighted_covariance_raw(epochs: &EpochSet, z: &[f64]) -> Result<SymmetricMatrix> {
    if epochs.n_epochs() == 0 {
        return Err(Error::NoData);
    }
    if z.len() != epochs.n_epochs() {
        return Err(Error::ShapeMismatch {
            context: format!("{} weights for {} epochs", z.len(), epochs.n_epochs()),
        });
    }
    let n_c = epochs.n_channels();
    let mut acc = Array2::<f64>::zeros((n_c, n_c));
    for (ep, &w) in epochs.data().outer_iter().zip(z) {
        acc = acc + w * ep.dot(&ep.t());
    }
    acc /= epochs.n_epochs() as f64;
    SymmetricMatrix::from_symmetrizing(acc)
}

// Householder reduction to tridiagonal form (JAMA tred2).
fn tridiagonalize(d: &mut Array1<f64>, v: &mut Array2<f64>, e: &mut [f64]) {
    let n = d.len();
    for j in 0..n {
        d[j] = v[[n - 1, j]];
    }

    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[[i - 1, j]];
                v[[i, j]] = 0.0;
                v[[j, i]] = 0.0;
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for item in e.iter_mut().take(i) {
                *item = 0.0;
            }

            for j in 0..i {
                f = d[j];
                v[[j, i]] = f;
                g = e[j] + v[[j, j]] * f;
                for k in (j + 1)..i {
                    g += v[[k, j]] * d[k];
                    e[k] += v[[k, j]] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[[k, j]] -= f * e[k] + g * d[k];
                }
                d[j] = v[[i - 1, j]];
                v[[i, j]] = 0.0;
            }
        }
        d[i] = h;
    }

    for i in 0..(n - 1) {
        v[[n - 1, i]] = v[[i, i]];
        v[[i, i]] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[[k, i + 1]] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[[k, i + 1]] * v[[k, j]];
                }
                for k in 0..=i {
                    v[[k, j]] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[[k, i + 1]] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[[n - 1, j]];
        v[[n - 1, j]] = 0.0;
    }
    v[[n - 1, n - 1]] = 1.0;
    e[0] = 0.0;
}

// Implicit QL iteration on the tridiagonal form (JAMA tql2).
fn tridiagonal_ql(d: &mut Array1<f64>, v: &mut Array2<f64>, e: &mut [f64]) {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let mut f = 0.0;
    let mut tst1 = 0.0f64;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= f64::EPSILON * tst1 {
                break;
            }
            m += 1;
        }

        if m > l {
            loop {
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for i in (l + 2)..n {
                    d[i] -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);

                    for k in 0..n {
                        h = v[[k, i + 1]];
                        v[[k, i + 1]] = s * v[[k, i]] + c * h;
                        v[[k, i]] = c * v[[k, i]] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;

                if e[l].abs() <= f64::EPSILON * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
}

/// Full eigendecomposition of a symmetric matrix.
///
/// Residuals `||M v - lambda v||` come out at machine precision relative to
/// `||M||`; eigenvectors are orthonormal. Eigenvalues are returned in
/// non-increasing order with ties kept in original-index order.
pub fn sym_eig(m: &SymmetricMatrix) -> EigenSolution {
    let n = m.dim();
    let mut v = m.data().clone();
    let mut d = Array1::zeros(n);
    let mut e = vec![0.0; n];
    tridiagonalize(&mut d, &mut v, &mut e);
    tridiagonal_ql(&mut d, &mut v, &mut e);

    // descending, stable in the original column order
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[j].partial_cmp(&d[i]).unwrap());
    let eigenvalues: Vec<f64> = order.iter().map(|&i| d[i]).collect();
    let mut eigenvectors = Array2::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.column_mut(dst).assign(&v.column(src));
    }
    EigenSolution {
        eigenvalues,
        eigenvectors,
    }
}

/// Whitening transform `P` of a positive semi-definite matrix: `P C P^T = I`
/// on the retained subspace.
///
/// Eigendirections below `rank_tol` times the largest eigenvalue are
/// dropped, so `P` has shape `rank x n`.
pub fn whiten(c: &SymmetricMatrix, rank_tol: f64) -> Result<Array2<f64>> {
    let eig = sym_eig(c);
    let lambda_max = eig.eigenvalues.first().copied().unwrap_or(0.0);
    if lambda_max <= 0.0 {
        return Err(Error::RankZero);
    }
    let retained: Vec<usize> = (0..eig.eigenvalues.len())
        .filter(|&i| eig.eigenvalues[i] >= rank_tol * lambda_max && eig.eigenvalues[i] > 0.0)
        .collect();
    let n = c.dim();
    let mut p = Array2::zeros((retained.len(), n));
    for (row, &i) in retained.iter().enumerate() {
        let inv_sqrt = 1.0 / eig.eigenvalues[i].sqrt();
        for j in 0..n {
            p[[row, j]] = eig.eigenvectors[[j, i]] * inv_sqrt;
        }
    }
    Ok(p)
}

/// Solves `C_z W = Lambda C W` for a symmetric pair.
///
/// `C` is regularized as `(1 - shrinkage) C + shrinkage (tr C / n) I` and
/// whitened; the symmetric eigenproblem of the whitened `C_z` is then mapped
/// back. Eigenvalues are sorted in non-increasing order and each column `w`
/// satisfies `w^T C w = 1` (with `C` the regularized matrix).
pub fn generalized_eig(
    c_z: &SymmetricMatrix,
    c: &SymmetricMatrix,
    shrinkage: f64,
) -> Result<GevdSolution> {
    if !(0.0..=1.0).contains(&shrinkage) {
        return Err(Error::InvalidRequest {
            context: format!("shrinkage {shrinkage} outside [0, 1]"),
        });
    }
    let n = c.dim();
    if c_z.dim() != n {
        return Err(Error::ShapeMismatch {
            context: format!("C_z is {}x{}, C is {n}x{n}", c_z.dim(), c_z.dim()),
        });
    }

    let c_reg = if shrinkage > 0.0 {
        let mu = c.data().diag().sum() / n as f64;
        let mut reg = c.data() * (1.0 - shrinkage);
        for i in 0..n {
            reg[[i, i]] += shrinkage * mu;
        }
        SymmetricMatrix::new(reg)?
    } else {
        c.clone()
    };

    let p = whiten(&c_reg, 1e-12)?;
    let rank = p.nrows();
    let whitened = p.dot(c_z.data()).dot(&p.t());
    let eig = sym_eig(&SymmetricMatrix::from_symmetrizing(whitened)?);
    let eigenvectors = p.t().dot(&eig.eigenvectors);

    Ok(GevdSolution {
        eigenvalues: eig.eigenvalues,
        eigenvectors,
        rank,
        reduced_rank: rank < n,
    })
}

/// Cholesky factor `L` (lower triangular) of a symmetric positive definite
/// matrix.
pub(crate) fn cholesky(a: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[[i, j]];
            for k in 0..j {
                sum -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if sum <= 0.0 {
                    return Err(Error::NotPositiveDefinite);
                }
                l[[i, j]] = sum.sqrt();
            } else {
                l[[i, j]] = sum / l[[j, j]];
            }
        }
    }
    Ok(l)
}

/// Solves `A X = B` for symmetric positive definite `A` via Cholesky.
pub(crate) fn spd_solve(a: &Array2<f64>, b: &Array2<f64>) -> Result<Array2<f64>> {
    let l = cholesky(a)?;
    let n = a.nrows();
    let mut x = b.clone();
    for mut col in x.columns_mut() {
        // forward substitution L y = b
        for i in 0..n {
            let mut sum = col[i];
            for k in 0..i {
                sum -= l[[i, k]] * col[k];
            }
            col[i] = sum / l[[i, i]];
        }
        // back substitution L^T x = y
        for i in (0..n).rev() {
            let mut sum = col[i];
            for k in (i + 1)..n {
                sum -= l[[k, i]] * col[k];
            }
            col[i] = sum / l[[i, i]];
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeseries::{epoch, TimeSeriesMatrix};
    use ndarray::{arr2, Array3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn epochs_from(data: Array3<f64>) -> EpochSet {
        // package raw epoch blocks through the public constructor
        let (n_e, n_c, len) = data.dim();
        let mut flat = Array2::zeros((n_c, n_e * len));
        for e in 0..n_e {
            for c in 0..n_c {
                for t in 0..len {
                    flat[[c, e * len + t]] = data[[e, c, t]];
                }
            }
        }
        let x = TimeSeriesMatrix::new(flat, len as f64, None).unwrap();
        epoch(&x, 1.0).unwrap()
    }

    use ndarray::Array2;

    fn random_symmetric(n: usize, seed: u64) -> SymmetricMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = Array2::from_shape_fn((n, n), |_| rng.sample::<f64, _>(StandardNormal));
        SymmetricMatrix::from_symmetrizing(&g + &g.t()).unwrap()
    }

    fn random_spd(n: usize, seed: u64) -> SymmetricMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = Array2::from_shape_fn((n, n), |_| rng.sample::<f64, _>(StandardNormal));
        let mut spd = g.dot(&g.t()) / n as f64;
        for i in 0..n {
            spd[[i, i]] += 0.5;
        }
        SymmetricMatrix::from_symmetrizing(spd).unwrap()
    }

    #[test]
    fn covariance_single_epoch_by_hand() {
        let mut data = Array3::zeros((1, 2, 2));
        data[[0, 0, 0]] = 1.0;
        data[[0, 0, 1]] = 1.0;
        data[[0, 1, 0]] = -1.0;
        data[[0, 1, 1]] = -1.0;
        let c = covariance(&epochs_from(data)).unwrap();
        assert_eq!(c.data(), &arr2(&[[2.0, -2.0], [-2.0, 2.0]]));
    }

    #[test]
    fn covariance_of_zeros_is_zero() {
        let c = covariance(&epochs_from(Array3::zeros((3, 2, 4)))).unwrap();
        assert!(c.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn covariance_white_noise_approaches_scaled_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let len = 500;
        let data = Array3::from_shape_fn((100, 2, len), |_| rng.sample::<f64, _>(StandardNormal));
        let c = covariance(&epochs_from(data)).unwrap();
        let l = len as f64;
        for i in 0..2 {
            for j in 0..2 {
                let expected = if i == j { l } else { 0.0 };
                assert!(
                    (c.data()[[i, j]] - expected).abs() <= 0.05 * l,
                    "C[{i},{j}] = {}",
                    c.data()[[i, j]]
                );
            }
        }
    }

    #[test]
    fn covariance_is_positive_semidefinite() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let data = Array3::from_shape_fn((5, 4, 50), |_| rng.sample::<f64, _>(StandardNormal));
        let c = covariance(&epochs_from(data)).unwrap();
        let eig = sym_eig(&c);
        let max = eig.eigenvalues[0];
        let min = *eig.eigenvalues.last().unwrap();
        assert!(min >= -1e-10 * max, "min eigenvalue {min}");
    }

    #[test]
    fn covariance_empty_is_error() {
        let set = epochs_from(Array3::zeros((1, 2, 8)));
        let empty = set.subset(&[]);
        assert!(matches!(covariance(&empty), Err(Error::NoData)));
    }

    #[test]
    fn weighted_covariance_constant_labels_vanish() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data = Array3::from_shape_fn((4, 2, 10), |_| rng.sample::<f64, _>(StandardNormal));
        let c_z = weighted_covariance(&epochs_from(data), &[5.0; 4]).unwrap();
        assert!(c_z.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn weighted_covariance_two_epoch_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let data = Array3::from_shape_fn((2, 2, 10), |_| rng.sample::<f64, _>(StandardNormal));
        let set = epochs_from(data);
        let c_z = weighted_covariance(&set, &[2.0, 1.0]).unwrap();
        // standardized labels are (+1, -1)
        let x1 = set.epoch(0).to_owned();
        let x2 = set.epoch(1).to_owned();
        let expected = (x1.dot(&x1.t()) - x2.dot(&x2.t())) / 2.0;
        for (a, b) in c_z.data().iter().zip(expected.iter()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn weighted_covariance_length_mismatch() {
        let set = epochs_from(Array3::zeros((3, 2, 8)));
        assert!(matches!(
            weighted_covariance(&set, &[1.0, 2.0]),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn standardized_weights_sum_to_zero() {
        let z = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0];
        let s = standardize(&z);
        assert!(s.iter().sum::<f64>().abs() <= 1e-12);
        let var: f64 = s.iter().map(|v| v * v).sum::<f64>() / s.len() as f64;
        assert!((var - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn sym_eig_diagonal() {
        let m = SymmetricMatrix::new(arr2(&[[3.0, 0.0], [0.0, 1.0]])).unwrap();
        let eig = sym_eig(&m);
        assert_eq!(eig.eigenvalues, vec![3.0, 1.0]);
        assert!((eig.eigenvectors[[0, 0]].abs() - 1.0).abs() <= 1e-12);
        assert!((eig.eigenvectors[[1, 1]].abs() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn sym_eig_two_by_two_by_characteristic_polynomial() {
        let m = SymmetricMatrix::new(arr2(&[[2.0, 1.0], [1.0, 2.0]])).unwrap();
        let eig = sym_eig(&m);
        assert!((eig.eigenvalues[0] - 3.0).abs() <= 1e-12);
        assert!((eig.eigenvalues[1] - 1.0).abs() <= 1e-12);
        let inv_sqrt2 = 1.0 / 2.0f64.sqrt();
        let v0 = eig.eigenvectors.column(0);
        assert!((v0[0].abs() - inv_sqrt2).abs() <= 1e-12);
        assert!((v0[0] - v0[1]).abs() <= 1e-12);
        let v1 = eig.eigenvectors.column(1);
        assert!((v1[0] + v1[1]).abs() <= 1e-12);
    }

    #[test]
    fn sym_eig_identity() {
        let m = SymmetricMatrix::new(Array2::eye(4)).unwrap();
        let eig = sym_eig(&m);
        assert!(eig.eigenvalues.iter().all(|&l| (l - 1.0).abs() <= 1e-14));
    }

    #[test]
    fn sym_eig_residual_and_orthonormality() {
        for seed in 0..5 {
            let m = random_symmetric(6, seed);
            let eig = sym_eig(&m);
            let norm = m.data().iter().fold(0.0f64, |acc, &v| acc.max(v.abs()));
            for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
                let v = eig.eigenvectors.column(i);
                let residual = m.data().dot(&v) - lambda * &v.to_owned();
                let r = residual.iter().map(|x| x * x).sum::<f64>().sqrt();
                assert!(r <= 1e-8 * norm, "residual {r} at pair {i}");
            }
            let vtv = eig.eigenvectors.t().dot(&eig.eigenvectors);
            for i in 0..6 {
                for j in 0..6 {
                    let expected = if i == j { 1.0 } else { 0.0 };
                    assert!((vtv[[i, j]] - expected).abs() <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn asymmetric_input_rejected() {
        let m = arr2(&[[1.0, 2.0], [0.5, 1.0]]);
        assert!(matches!(
            SymmetricMatrix::new(m),
            Err(Error::SymmetryViolation { .. })
        ));
    }

    #[test]
    fn whiten_scaled_identity() {
        let c = SymmetricMatrix::new(Array2::eye(2) * 4.0).unwrap();
        let p = whiten(&c, 1e-10).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let expected = if i == j { 0.5 } else { 0.0 };
                assert!((p[[i, j]] - expected).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn whiten_drops_null_directions() {
        let c = SymmetricMatrix::new(arr2(&[[1.0, 0.0], [0.0, 0.0]])).unwrap();
        let p = whiten(&c, 1e-10).unwrap();
        assert_eq!(p.dim(), (1, 2));
        assert!((p[[0, 0]].abs() - 1.0).abs() <= 1e-12);
        assert!(p[[0, 1]].abs() <= 1e-12);
    }

    #[test]
    fn whiten_random_spd_gives_identity() {
        for seed in 0..5 {
            let c = random_spd(5, 100 + seed);
            let p = whiten(&c, 1e-12).unwrap();
            let id = p.dot(c.data()).dot(&p.t());
            for i in 0..5 {
                for j in 0..5 {
                    let expected = if i == j { 1.0 } else { 0.0 };
                    assert!((id[[i, j]] - expected).abs() <= 1e-8);
                }
            }
        }
    }

    #[test]
    fn whiten_zero_matrix_is_error() {
        let c = SymmetricMatrix::new(Array2::zeros((3, 3))).unwrap();
        assert!(matches!(whiten(&c, 1e-10), Err(Error::RankZero)));
    }

    #[test]
    fn gevd_identity_right_side_reduces_to_sym_eig() {
        let c_z = random_symmetric(4, 11);
        let c = SymmetricMatrix::new(Array2::eye(4)).unwrap();
        let gevd = generalized_eig(&c_z, &c, 0.0).unwrap();
        let plain = sym_eig(&c_z);
        for (a, b) in gevd.eigenvalues.iter().zip(plain.eigenvalues.iter()) {
            assert!((a - b).abs() <= 1e-10);
        }
        for i in 0..4 {
            let dot: f64 = gevd
                .eigenvectors
                .column(i)
                .iter()
                .zip(plain.eigenvectors.column(i).iter())
                .map(|(x, y)| x * y)
                .sum();
            assert!((dot.abs() - 1.0).abs() <= 1e-10, "direction {i}: {dot}");
        }
    }

    #[test]
    fn gevd_diagonal_pair() {
        let c_z = SymmetricMatrix::new(arr2(&[[2.0, 0.0], [0.0, 1.0]])).unwrap();
        let c = SymmetricMatrix::new(Array2::eye(2)).unwrap();
        let gevd = generalized_eig(&c_z, &c, 0.0).unwrap();
        assert!((gevd.eigenvalues[0] - 2.0).abs() <= 1e-12);
        assert!((gevd.eigenvectors[[0, 0]].abs() - 1.0).abs() <= 1e-12);
        assert!(gevd.eigenvectors[[1, 0]].abs() <= 1e-12);
    }

    #[test]
    fn gevd_residual_and_rayleigh_optimality() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let c_z = random_symmetric(5, 1000);
        let c = random_spd(5, 2000);
        let gevd = generalized_eig(&c_z, &c, 0.0).unwrap();
        let norm_cz = c_z.data().iter().fold(0.0f64, |m, &v| m.max(v.abs()));

        for (i, &lambda) in gevd.eigenvalues.iter().enumerate() {
            let w = gevd.eigenvectors.column(i).to_owned();
            let lhs = c_z.data().dot(&w);
            let rhs = c.data().dot(&w) * lambda;
            let r = (&lhs - &rhs).iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(r <= 1e-8 * norm_cz, "pair {i} residual {r}");
            // normalization w^T C w = 1
            let wcw = w.dot(&c.data().dot(&w));
            assert!((wcw - 1.0).abs() <= 1e-8);
        }

        let mut best = f64::NEG_INFINITY;
        for _ in 0..10_000 {
            let u = Array1::from_shape_fn(5, |_| rng.sample::<f64, _>(StandardNormal));
            let ucu = u.dot(&c.data().dot(&u));
            let q = u.dot(&c_z.data().dot(&u)) / ucu;
            best = best.max(q);
        }
        assert!(
            gevd.eigenvalues[0] >= best - 1e-6 * (1.0 + best.abs()),
            "top eigenvalue {} vs brute force {best}",
            gevd.eigenvalues[0]
        );
    }

    #[test]
    fn gevd_scale_equivariance() {
        let c_z = random_symmetric(5, 31);
        let c = random_spd(5, 32);
        let alpha = 3.7;
        let scaled = SymmetricMatrix::new(c_z.data() * alpha).unwrap();
        let base = generalized_eig(&c_z, &c, 0.0).unwrap();
        let big = generalized_eig(&scaled, &c, 0.0).unwrap();
        for (a, b) in base.eigenvalues.iter().zip(big.eigenvalues.iter()) {
            assert!((alpha * a - b).abs() <= 1e-8 * (1.0 + b.abs()));
        }
        for i in 0..5 {
            let u = base.eigenvectors.column(i);
            let v = big.eigenvectors.column(i);
            let dot: f64 = u.iter().zip(v.iter()).map(|(x, y)| x * y).sum();
            let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((dot.abs() / (nu * nv) - 1.0).abs() <= 1e-8, "direction {i}");
        }
    }

    #[test]
    fn gevd_rank_deficient_falls_back_with_flag() {
        let c = SymmetricMatrix::new(arr2(&[[1.0, 0.0], [0.0, 0.0]])).unwrap();
        let c_z = SymmetricMatrix::new(arr2(&[[2.0, 0.0], [0.0, 3.0]])).unwrap();
        let gevd = generalized_eig(&c_z, &c, 0.0).unwrap();
        assert!(gevd.reduced_rank);
        assert_eq!(gevd.rank, 1);
        assert_eq!(gevd.eigenvalues.len(), 1);
    }

    #[test]
    fn spd_solve_recovers_solution() {
        let a = random_spd(6, 5).into_inner();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x_true = Array2::from_shape_fn((6, 3), |_| rng.sample::<f64, _>(StandardNormal));
        let b = a.dot(&x_true);
        let x = spd_solve(&a, &b).unwrap();
        for (got, want) in x.iter().zip(x_true.iter()) {
            assert!((got - want).abs() <= 1e-9);
        }
    }
}
