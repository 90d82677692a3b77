//! Dense symmetric eigensolver (cyclic Jacobi).
//!
//! Laplacians handled here are small (a few dozen nodes per sub-graph, a few
//! hundred for whole-buffer diagnostics), so the quadratic-per-sweep Jacobi
//! method is fast enough, and it delivers eigenvectors that are orthonormal to
//! working precision, which the gradient and functional-map code rely on.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;
/// Magnitudes closer than this count as tied when choosing the sign pivot.
const SIGN_TIE_TOL: f64 = 1e-12;

/// Ascending eigenvalues with matching orthonormal eigenvectors (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    eigenvalues: Array1<f64>,
    eigenvectors: Array2<f64>,
}

impl SpectralDecomposition {
    pub fn eigenvalues(&self) -> ArrayView1<'_, f64> {
        self.eigenvalues.view()
    }

    /// Column `j` pairs with `eigenvalues()[j]`.
    pub fn eigenvectors(&self) -> ArrayView2<'_, f64> {
        self.eigenvectors.view()
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// `U diag(λ) Uᵀ`.
    pub fn reconstruct(&self) -> Array2<f64> {
        let scaled = &self.eigenvectors * &self.eigenvalues.view().insert_axis(Axis(0));
        scaled.dot(&self.eigenvectors.t())
    }
}

fn check_symmetric(m: ArrayView2<'_, f64>) -> Result<()> {
    let (n, c) = m.dim();
    if n != c || n == 0 {
        return Err(Error::InvalidInput(format!(
            "eigh needs a non-empty square matrix, got {n}x{c}"
        )));
    }
    let scale = m.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    for i in 0..n {
        for j in 0..=i {
            let (a, b) = (m[[i, j]], m[[j, i]]);
            if !a.is_finite() || !b.is_finite() {
                return Err(Error::InvalidInput(format!("non-finite entry at ({i}, {j})")));
            }
            if (a - b).abs() > 1e-12 * scale {
                return Err(Error::InvalidInput(format!(
                    "matrix is not symmetric at ({i}, {j}): {a} vs {b}"
                )));
            }
        }
    }
    Ok(())
}

/// Full eigendecomposition of a symmetric matrix.
///
/// Eigenvalues come back ascending. Each eigenvector is signed so that its
/// largest-magnitude entry is positive (lowest index wins among equal
/// magnitudes), which makes the output a deterministic function of the input.
pub fn eigh(matrix: ArrayView2<'_, f64>) -> Result<SpectralDecomposition> {
    check_symmetric(matrix)?;
    let n = matrix.nrows();
    let mut a = Array2::from_shape_fn((n, n), |(i, j)| 0.5 * (matrix[[i, j]] + matrix[[j, i]]));
    let mut v = Array2::<f64>::eye(n);

    let total: f64 = a.iter().map(|x| x * x).sum();
    let tol = (f64::EPSILON * f64::EPSILON) * total.max(f64::MIN_POSITIVE);

    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| a[[i, j]] * a[[i, j]])
            .sum();
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let app = a[[p, p]];
                let aqq = a[[q, q]];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                a[[p, q]] = 0.0;
                a[[q, p]] = 0.0;
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }

    let diag: Vec<f64> = (0..n).map(|i| a[[i, i]]).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| diag[x].total_cmp(&diag[y]).then(x.cmp(&y)));

    let eigenvalues = Array1::from_iter(order.iter().map(|&i| diag[i]));
    let mut eigenvectors = Array2::zeros((n, n));
    for (col, &src) in order.iter().enumerate() {
        let mut vec = v.column(src).to_owned();
        let mut pivot = 0;
        for (i, x) in vec.iter().enumerate() {
            if x.abs() > vec[pivot].abs() + SIGN_TIE_TOL {
                pivot = i;
            }
        }
        if vec[pivot] < 0.0 {
            vec.mapv_inplace(|x| -x);
        }
        eigenvectors.column_mut(col).assign(&vec);
    }

    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    })
}
