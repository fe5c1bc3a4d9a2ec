//! Small dense symmetric eigen-decomposition and helpers.
//!
//! The pose solver needs eigenvectors of matrices no larger than 12x12, so a
//! cyclic Jacobi sweep is used instead of pulling in a LAPACK-style backend.
//! The sweep is deterministic: identical inputs give bit-identical results.

use nalgebra::{DMatrix, DVector, Matrix3};

use crate::error::{Error, Result};

/// Eigen-decomposition of a real symmetric matrix.
///
/// `values` are sorted ascending; column `j` of `vectors` is the unit
/// eigenvector for `values[j]`.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix.
///
/// Convergence: the off-diagonal Frobenius norm must fall below
/// `1e-12 * ||A||_F` (for positive semi-definite inputs this is at least as
/// tight as the same fraction of the trace). Sweeps are capped at 64, far
/// beyond what sizes up to 12 need.
pub fn sym_eigen(mat: &DMatrix<f64>) -> SymEigen {
    let n = mat.nrows();
    assert_eq!(n, mat.ncols(), "sym_eigen needs a square matrix");
    let mut a = mat.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let tol = 1e-12 * mat.norm().max(f64::MIN_POSITIVE);

    for _sweep in 0..64 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if (2.0 * off).sqrt() < tol {
            break;
        }
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                // tan of the rotation angle, smaller root for stability
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| a[(i, i)]));
    let mut vectors = DMatrix::<f64>::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &v.column(src));
    }
    SymEigen { values, vectors }
}

/// Least-squares solve of `A x = b` through the eigen pseudo-inverse of
/// `A^T A`. Eigenvalues below `1e-12` of the largest are treated as zero.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let ata = a.transpose() * a;
    let atb = a.transpose() * b;
    let eig = sym_eigen(&ata);
    let lmax = eig.values.iter().cloned().fold(0.0_f64, f64::max);
    let cutoff = 1e-12 * lmax.max(f64::MIN_POSITIVE);
    let n = ata.nrows();
    let mut x = DVector::<f64>::zeros(n);
    for j in 0..n {
        let lambda = eig.values[j];
        if lambda > cutoff {
            let coef = eig.vectors.column(j).dot(&atb) / lambda;
            x += coef * eig.vectors.column(j);
        }
    }
    x
}

/// Projects a near-orthonormal matrix onto the closest proper rotation.
///
/// Uses the symmetric polar factor `M (M^T M)^{-1/2}`; fails if the result is
/// a reflection or the input is rank-deficient.
pub fn nearest_rotation(m: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    let mtm = m.transpose() * m;
    let eig = sym_eigen(&DMatrix::from_column_slice(3, 3, mtm.as_slice()));
    let mut inv_sqrt = Matrix3::zeros();
    for j in 0..3 {
        let lambda = eig.values[j];
        if lambda <= 1e-12 {
            return Err(Error::InvalidRotation { err: f64::INFINITY });
        }
        let vj = nalgebra::Vector3::new(
            eig.vectors[(0, j)],
            eig.vectors[(1, j)],
            eig.vectors[(2, j)],
        );
        inv_sqrt += (vj * vj.transpose()) / lambda.sqrt();
    }
    let r = m * inv_sqrt;
    if r.determinant() < 0.0 {
        return Err(Error::InvalidRotation { err: 2.0 });
    }
    Ok(r)
}

/// Frobenius distance of `R^T R` from the identity plus the determinant
/// deviation; used to grade how close a matrix is to a proper rotation.
pub fn orthonormality_error(m: &Matrix3<f64>) -> f64 {
    let gram = m.transpose() * m;
    let fro = (gram - Matrix3::identity()).norm();
    fro.max((m.determinant() - 1.0).abs())
}
