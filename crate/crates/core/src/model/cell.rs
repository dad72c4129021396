//! Peephole graph-convolutional LSTM cell and its reverse pass.
//!
//! ```text
//! i  = sigmoid(Gx_i + Gh_i + w_ci * c + b_i)
//! f  = sigmoid(Gx_f + Gh_f + w_cf * c + b_f)
//! c' = f * c + i * tanh(Gx_c + Gh_c + b_c)
//! o  = sigmoid(Gx_o + Gh_o + w_co * c' + b_o)
//! h' = o * tanh(c')
//! ```
//!
//! `Gx` and `Gh` are Chebyshev convolutions of the input and previous hidden
//! state, or plain dense maps for the adjacency-free baseline.

use ndarray::{linalg::general_mat_mul, Array2, Axis};

use crate::error::{Error, Result};

use super::cheb::{chebyshev_basis, chebyshev_basis_backward, project_into};
use super::params::CellParams;

/// How node signals are mixed before the gate projections.
#[derive(Debug, Clone, Copy)]
pub enum Propagation<'a> {
    /// Chebyshev polynomials of a scaled Laplacian.
    Graph(&'a Array2<f64>),
    /// Node rows processed independently.
    Dense,
}

impl<'a> Propagation<'a> {
    fn laplacian(self) -> Option<&'a Array2<f64>> {
        match self {
            Propagation::Graph(l) => Some(l),
            Propagation::Dense => None,
        }
    }

    fn basis(self, x: &Array2<f64>, order: usize) -> Result<Vec<Array2<f64>>> {
        match self {
            Propagation::Graph(l) => chebyshev_basis(x, Some(l), order),
            Propagation::Dense if order == 1 => Ok(vec![x.clone()]),
            Propagation::Dense => Err(Error::Invalid(format!(
                "dense propagation supports only order 1, got {order}"
            ))),
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Activations of one step kept for the reverse pass.
#[derive(Debug, Clone)]
pub struct StepCache {
    zx: Vec<Array2<f64>>,
    zh: Vec<Array2<f64>>,
    c_prev: Array2<f64>,
    /// `N x 4H` post-activation gates `[i | f | g | o]`.
    gates: Array2<f64>,
    c: Array2<f64>,
    tanh_c: Array2<f64>,
}

/// One recurrent step. Returns `(h', c', cache)`.
pub fn step_forward(
    cell: &CellParams,
    x: &Array2<f64>,
    h: &Array2<f64>,
    c: &Array2<f64>,
    prop: Propagation<'_>,
) -> Result<(Array2<f64>, Array2<f64>, StepCache)> {
    let hidden = cell.hidden();
    let n = x.nrows();
    let in_channels = cell.theta_x[0].nrows();
    if x.ncols() != in_channels {
        return Err(Error::shape("LSTM cell input", format!("{in_channels} channels"), x.ncols()));
    }
    if h.dim() != (n, hidden) || c.dim() != (n, hidden) {
        return Err(Error::shape(
            "LSTM cell state",
            format!("{n}x{hidden}"),
            format!("{:?} / {:?}", h.dim(), c.dim()),
        ));
    }
    let order = cell.order();
    let zx = prop.basis(x, order)?;
    let zh = prop.basis(h, order)?;

    let mut pre = Array2::zeros((n, 4 * hidden));
    pre += &cell.bias;
    project_into(&zx, &cell.theta_x, &mut pre);
    project_into(&zh, &cell.theta_h, &mut pre);

    let mut gates = pre;
    let mut c_new = Array2::zeros((n, hidden));
    let mut tanh_c = Array2::zeros((n, hidden));
    let mut h_new = Array2::zeros((n, hidden));
    for node in 0..n {
        let mut row = gates.row_mut(node);
        let row = row.as_slice_mut().expect("contiguous gate row");
        for j in 0..hidden {
            let c_old = c[[node, j]];
            let i = sigmoid(row[j] + cell.peep_i[j] * c_old);
            let f = sigmoid(row[hidden + j] + cell.peep_f[j] * c_old);
            let g = row[2 * hidden + j].tanh();
            let cn = f * c_old + i * g;
            let o = sigmoid(row[3 * hidden + j] + cell.peep_o[j] * cn);
            let tc = cn.tanh();
            row[j] = i;
            row[hidden + j] = f;
            row[2 * hidden + j] = g;
            row[3 * hidden + j] = o;
            c_new[[node, j]] = cn;
            tanh_c[[node, j]] = tc;
            h_new[[node, j]] = o * tc;
        }
    }
    let cache = StepCache {
        zx,
        zh,
        c_prev: c.clone(),
        gates,
        c: c_new.clone(),
        tanh_c,
    };
    Ok((h_new, c_new, cache))
}

/// Reverse of [`step_forward`]. `dh` and `dc` are the loss gradients w.r.t.
/// `h'` and `c'`; parameter gradients are accumulated into `grads`. Returns
/// the gradients w.r.t. the previous `(h, c)`; the hidden gradient is skipped
/// when `need_dh` is false.
pub fn step_backward(
    cell: &CellParams,
    cache: &StepCache,
    dh: &Array2<f64>,
    dc: &Array2<f64>,
    grads: &mut CellParams,
    prop: Propagation<'_>,
    need_dh: bool,
) -> (Option<Array2<f64>>, Array2<f64>) {
    let hidden = cell.hidden();
    let n = dh.nrows();
    let mut d_pre = Array2::zeros((n, 4 * hidden));
    let mut dc_prev = Array2::zeros((n, hidden));
    for node in 0..n {
        let gates = cache.gates.row(node);
        let mut dp = d_pre.row_mut(node);
        for j in 0..hidden {
            let (i, f, g, o) = (gates[j], gates[hidden + j], gates[2 * hidden + j], gates[3 * hidden + j]);
            let c_old = cache.c_prev[[node, j]];
            let cn = cache.c[[node, j]];
            let tc = cache.tanh_c[[node, j]];
            let dhn = dh[[node, j]];

            let d_o = dhn * tc;
            let da_o = d_o * o * (1.0 - o);
            let mut dcn = dc[[node, j]] + dhn * o * (1.0 - tc * tc) + da_o * cell.peep_o[j];

            let da_i = dcn * g * i * (1.0 - i);
            let da_f = dcn * c_old * f * (1.0 - f);
            let da_g = dcn * i * (1.0 - g * g);

            grads.peep_o[j] += da_o * cn;
            grads.peep_i[j] += da_i * c_old;
            grads.peep_f[j] += da_f * c_old;

            dcn *= f;
            dc_prev[[node, j]] = dcn + da_i * cell.peep_i[j] + da_f * cell.peep_f[j];

            dp[j] = da_i;
            dp[hidden + j] = da_f;
            dp[2 * hidden + j] = da_g;
            dp[3 * hidden + j] = da_o;
        }
    }

    grads.bias += &d_pre.sum_axis(Axis(0));
    for (z, g) in cache.zx.iter().zip(grads.theta_x.iter_mut()) {
        general_mat_mul(1.0, &z.t(), &d_pre, 1.0, g);
    }
    for (z, g) in cache.zh.iter().zip(grads.theta_h.iter_mut()) {
        general_mat_mul(1.0, &z.t(), &d_pre, 1.0, g);
    }
    let dh_prev = need_dh.then(|| {
        let d_basis: Vec<Array2<f64>> = cell.theta_h.iter().map(|theta| d_pre.dot(&theta.t())).collect();
        chebyshev_basis_backward(d_basis, prop.laplacian())
    });
    (dh_prev, dc_prev)
}
