//! Chebyshev spectral graph convolution `Y = sum_k T_k(L) X Theta_k`.

use ndarray::{linalg::general_mat_mul, Array2};

use crate::error::{Error, Result};

/// `K` filter taps, each `in_channels x out_channels`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChebFilter {
    pub taps: Vec<Array2<f64>>,
}

impl ChebFilter {
    pub fn new(taps: Vec<Array2<f64>>) -> Result<Self> {
        let first = taps
            .first()
            .ok_or_else(|| Error::Invalid("Chebyshev filter needs at least one tap".into()))?;
        let dim = first.dim();
        if let Some(bad) = taps.iter().find(|t| t.dim() != dim) {
            return Err(Error::shape("Chebyshev taps", format!("{dim:?}"), format!("{:?}", bad.dim())));
        }
        Ok(ChebFilter { taps })
    }

    pub fn order(&self) -> usize {
        self.taps.len()
    }

    pub fn in_channels(&self) -> usize {
        self.taps[0].nrows()
    }

    pub fn out_channels(&self) -> usize {
        self.taps[0].ncols()
    }
}

/// `[T_0 X, T_1 X, ..., T_{K-1} X]` via the three-term recurrence.
///
/// `laplacian` may be `None` only when `order == 1`.
pub fn chebyshev_basis(x: &Array2<f64>, laplacian: Option<&Array2<f64>>, order: usize) -> Result<Vec<Array2<f64>>> {
    let mut basis = Vec::with_capacity(order);
    basis.push(x.clone());
    if order == 1 {
        return Ok(basis);
    }
    let lap = laplacian.ok_or_else(|| Error::Invalid(format!("Chebyshev order {order} requires a Laplacian")))?;
    if lap.dim() != (x.nrows(), x.nrows()) {
        return Err(Error::shape(
            "Chebyshev basis",
            format!("{0}x{0} Laplacian", x.nrows()),
            format!("{:?}", lap.dim()),
        ));
    }
    basis.push(lap.dot(x));
    for k in 2..order {
        let mut next = basis[k - 2].clone();
        general_mat_mul(2.0, lap, &basis[k - 1], -1.0, &mut next);
        basis.push(next);
    }
    Ok(basis)
}

/// Adjoint of [`chebyshev_basis`]: map gradients w.r.t. each `T_k X` back to
/// a gradient w.r.t. `X`. Consumes the per-tap gradients.
pub fn chebyshev_basis_backward(mut grads: Vec<Array2<f64>>, laplacian: Option<&Array2<f64>>) -> Array2<f64> {
    let order = grads.len();
    if order == 1 {
        return grads.pop().expect("one tap");
    }
    let lap = laplacian.expect("order > 1 requires a Laplacian");
    for k in (2..order).rev() {
        let (head, tail) = grads.split_at_mut(k);
        let gk = &tail[0];
        // T_k = 2 L T_{k-1} - T_{k-2}; L is symmetric
        general_mat_mul(2.0, lap, gk, 1.0, &mut head[k - 1]);
        head[k - 2] -= gk;
    }
    grads.truncate(2);
    let g1 = grads.pop().expect("tap 1");
    let mut g0 = grads.pop().expect("tap 0");
    general_mat_mul(1.0, lap, &g1, 1.0, &mut g0);
    g0
}

/// Accumulate `sum_k basis[k] . taps[k]` into `out`.
pub(crate) fn project_into(basis: &[Array2<f64>], taps: &[Array2<f64>], out: &mut Array2<f64>) {
    for (z, theta) in basis.iter().zip(taps) {
        general_mat_mul(1.0, z, theta, 1.0, out);
    }
}

pub fn cheb_conv(x: &Array2<f64>, laplacian: Option<&Array2<f64>>, filter: &ChebFilter) -> Result<Array2<f64>> {
    if x.ncols() != filter.in_channels() {
        return Err(Error::shape("cheb_conv input", format!("{} channels", filter.in_channels()), x.ncols()));
    }
    let basis = chebyshev_basis(x, laplacian, filter.order())?;
    let mut out = Array2::zeros((x.nrows(), filter.out_channels()));
    project_into(&basis, &filter.taps, &mut out);
    Ok(out)
}
