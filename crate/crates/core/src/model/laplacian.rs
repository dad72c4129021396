use std::f64::consts::PI;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

pub const POWER_ITERATION_TOL: f64 = 1e-6;
pub const POWER_ITERATION_MAX: usize = 10_000;

/// `2 L_sym / lambda_max - I` for a weighted adjacency matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledLaplacian {
    pub matrix: Array2<f64>,
    pub lambda_max: f64,
}

/// Symmetric normalized Laplacian `I - D^-1/2 A D^-1/2`. Isolated nodes get a
/// zero row and column in the propagation term.
pub fn normalized_laplacian(adjacency: &Array2<f64>) -> Result<Array2<f64>> {
    let n = adjacency.nrows();
    if adjacency.ncols() != n {
        return Err(Error::shape("laplacian", "square adjacency", format!("{:?}", adjacency.dim())));
    }
    let degree: Array1<f64> = adjacency.sum_axis(ndarray::Axis(1));
    if degree.iter().all(|&d| d <= 0.0) {
        return Err(Error::ZeroGraph);
    }
    let inv_sqrt = degree.mapv(|d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 });
    let mut lap = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let off = adjacency[[i, j]] * inv_sqrt[i] * inv_sqrt[j];
            lap[[i, j]] = if i == j { 1.0 - off } else { -off };
        }
    }
    // exact symmetry regardless of rounding in the products above
    for i in 0..n {
        for j in (i + 1)..n {
            lap[[j, i]] = lap[[i, j]];
        }
    }
    Ok(lap)
}

/// Vectors carried by the block power iteration. Laplacians of near-uniform
/// dense graphs often have their top eigenvalues in tight clusters, which a
/// single vector separates only after thousands of steps.
const BLOCK: usize = 4;

/// Largest eigenvalue of a symmetric positive semi-definite matrix by block
/// power iteration with a Rayleigh-Ritz step. Stops once the top Ritz pair
/// `(theta, y)` has residual `|My - theta y| <= tol * theta`, which places an
/// eigenvalue within `tol * theta` of the estimate. Returns the estimate and
/// the number of iterations used.
pub fn largest_eigenvalue(m: &Array2<f64>, tol: f64, max_iter: usize) -> (f64, usize) {
    let n = m.nrows();
    if n == 0 {
        return (0.0, 0);
    }
    let b = BLOCK.min(n);
    // alternating ramp, then high-frequency cosines
    let mut v = Array2::from_shape_fn((n, b), |(i, j)| {
        if j == 0 {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            sign * (1.0 + (i % 5) as f64 / 5.0)
        } else {
            (PI * (i as f64 + 0.5) * (n - j) as f64 / n as f64).cos() + 0.01 * (i % 7) as f64
        }
    });
    orthonormalize(&mut v);
    let mut lambda = 0.0;
    for iter in 1..=max_iter {
        let mut w = m.dot(&v);
        let (values, vectors) = symmetric_eigen(&v.t().dot(&w));
        let top = (0..b).fold(0, |best, j| if values[j] > values[best] { j } else { best });
        lambda = values[top];
        if !(lambda > 0.0) {
            return (0.0, iter);
        }
        let y = vectors.column(top);
        let residual = w.dot(&y) - v.dot(&y) * lambda;
        if residual.dot(&residual).sqrt() <= tol * lambda {
            return (lambda, iter);
        }
        orthonormalize(&mut w);
        v = w;
    }
    (lambda, max_iter)
}

/// Modified Gram-Schmidt on the columns; a column that collapses is reset to
/// a unit coordinate vector and re-orthogonalized.
fn orthonormalize(v: &mut Array2<f64>) {
    let (n, b) = v.dim();
    for j in 0..b {
        for attempt in 0..=n {
            for k in 0..j {
                let proj = v.column(k).dot(&v.column(j));
                let qk = v.column(k).to_owned();
                v.column_mut(j).scaled_add(-proj, &qk);
            }
            let norm = v.column(j).dot(&v.column(j)).sqrt();
            if norm > 1e-10 {
                v.column_mut(j).mapv_inplace(|x| x / norm);
                break;
            }
            let mut fresh = Array1::zeros(n);
            fresh[(j + attempt) % n] = 1.0;
            v.column_mut(j).assign(&fresh);
        }
    }
}

/// Eigenvalues and eigenvectors (as columns) of a small symmetric matrix by
/// cyclic Jacobi rotations.
fn symmetric_eigen(a: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let n = a.nrows();
    let mut a = a.clone();
    let mut vectors = Array2::<f64>::eye(n);
    for i in 0..n {
        for j in (i + 1)..n {
            let mean = 0.5 * (a[[i, j]] + a[[j, i]]);
            a[[i, j]] = mean;
            a[[j, i]] = mean;
        }
    }
    for _sweep in 0..64 {
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off += a[[i, j]] * a[[i, j]];
                }
            }
        }
        let scale: f64 = a.iter().map(|x| x * x).sum();
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = if theta == 0.0 {
                    1.0
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[[k, p]], a[[k, q]]);
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[[p, k]], a[[q, k]]);
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (vectors[[k, p]], vectors[[k, q]]);
                    vectors[[k, p]] = c * vkp - s * vkq;
                    vectors[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[[i, i]]).collect(), vectors)
}

pub fn scaled_laplacian(adjacency: &Array2<f64>) -> Result<ScaledLaplacian> {
    let mut matrix = normalized_laplacian(adjacency)?;
    let (lambda_max, iterations) = largest_eigenvalue(&matrix, POWER_ITERATION_TOL, POWER_ITERATION_MAX);
    if iterations == POWER_ITERATION_MAX {
        log::warn!("power iteration hit {POWER_ITERATION_MAX} iterations, lambda_max ~ {lambda_max}");
    }
    if !(lambda_max > 0.0) {
        return Err(Error::ZeroGraph);
    }
    let scale = 2.0 / lambda_max;
    matrix.mapv_inplace(|x| x * scale);
    for i in 0..matrix.nrows() {
        matrix[[i, i]] -= 1.0;
    }
    Ok(ScaledLaplacian { matrix, lambda_max })
}
