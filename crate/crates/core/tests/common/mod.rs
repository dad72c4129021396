//! Independent oracles and instance builders shared by the integration tests.
#![allow(dead_code)]

use firngraph::model::{self, Architecture, CellParams, ModelInput, ModelKind, ModelParams};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rows: usize, cols: usize, scale: f64, rng: &mut impl Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-scale..scale))
}

/// Symmetric, nonnegative, zero diagonal, every node connected.
pub fn random_adjacency(n: usize, rng: &mut impl Rng) -> Array2<f64> {
    let mut a = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let w = rng.random_range(0.05..1.0);
            a[[i, j]] = w;
            a[[j, i]] = w;
        }
    }
    a
}

/// Materialize `T_k(L)` for `k < order` by the matrix recursion.
pub fn dense_chebyshev_polynomials(l: &Array2<f64>, order: usize) -> Vec<Array2<f64>> {
    let n = l.nrows();
    let mut ts = vec![Array2::<f64>::eye(n)];
    if order > 1 {
        ts.push(l.clone());
    }
    for k in 2..order {
        let next = 2.0 * matmul(l, &ts[k - 1]) - &ts[k - 2];
        ts.push(next);
    }
    ts
}

/// Triple-loop product, deliberately not using ndarray's kernels.
pub fn matmul(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let (n, m) = a.dim();
    let p = b.ncols();
    assert_eq!(m, b.nrows());
    let mut out = Array2::zeros((n, p));
    for i in 0..n {
        for j in 0..p {
            let mut s = 0.0;
            for k in 0..m {
                s += a[[i, k]] * b[[k, j]];
            }
            out[[i, j]] = s;
        }
    }
    out
}

/// `sum_k T_k(L) X Theta_k` from materialized polynomials.
pub fn chebyshev_oracle(x: &Array2<f64>, l: &Array2<f64>, taps: &[Array2<f64>]) -> Array2<f64> {
    let ts = dense_chebyshev_polynomials(l, taps.len());
    let mut y = Array2::zeros((x.nrows(), taps[0].ncols()));
    for (t, theta) in ts.iter().zip(taps) {
        y += &matmul(&matmul(t, x), theta);
    }
    y
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One peephole cell step evaluated entry by entry from the gate equations.
pub fn scalar_cell_step(
    cell: &CellParams,
    x: &Array2<f64>,
    h: &Array2<f64>,
    c: &Array2<f64>,
    l: Option<&Array2<f64>>,
) -> (Array2<f64>, Array2<f64>) {
    let hidden = cell.peep_i.len();
    let n = x.nrows();
    let k = cell.theta_x.len();
    let ts = match l {
        Some(l) => dense_chebyshev_polynomials(l, k),
        None => vec![Array2::eye(n)],
    };
    // conv(v, taps, gate)[node][j] = sum_k sum_m sum_c T_k[node][m] v[m][c] taps_k[c][gate*H + j]
    let conv = |v: &Array2<f64>, taps: &[Array2<f64>], gate: usize, node: usize, j: usize| {
        let mut s = 0.0;
        for (t, theta) in ts.iter().zip(taps) {
            for m in 0..n {
                if t[[node, m]] == 0.0 {
                    continue;
                }
                for ch in 0..v.ncols() {
                    s += t[[node, m]] * v[[m, ch]] * theta[[ch, gate * hidden + j]];
                }
            }
        }
        s
    };
    let mut h_new = Array2::zeros((n, hidden));
    let mut c_new = Array2::zeros((n, hidden));
    for node in 0..n {
        for j in 0..hidden {
            let pre = |gate: usize| conv(x, &cell.theta_x, gate, node, j) + conv(h, &cell.theta_h, gate, node, j) + cell.bias[gate * hidden + j];
            let c_old = c[[node, j]];
            let i = sig(pre(0) + cell.peep_i[j] * c_old);
            let f = sig(pre(1) + cell.peep_f[j] * c_old);
            let cn = f * c_old + i * pre(2).tanh();
            let o = sig(pre(3) + cell.peep_o[j] * cn);
            c_new[[node, j]] = cn;
            h_new[[node, j]] = o * cn.tanh();
        }
    }
    (h_new, c_new)
}

pub fn hardswish(x: f64) -> f64 {
    if x <= -3.0 {
        0.0
    } else if x >= 3.0 {
        x
    } else {
        x * (x + 3.0) / 6.0
    }
}

/// Dense head without dropout, entry by entry.
pub fn scalar_head(params: &ModelParams, encoded: &Array2<f64>) -> Array2<f64> {
    let head = &params.head;
    let n = encoded.nrows();
    let mut y = Array2::zeros((n, head.w2.ncols()));
    for node in 0..n {
        let z1: Vec<f64> = (0..head.w1.ncols())
            .map(|j| {
                head.b1[j]
                    + (0..encoded.ncols())
                        .map(|c| hardswish(encoded[[node, c]]) * head.w1[[c, j]])
                        .sum::<f64>()
            })
            .collect();
        for o in 0..head.w2.ncols() {
            y[[node, o]] = head.b2[o] + z1.iter().enumerate().map(|(j, z)| hardswish(*z) * head.w2[[j, o]]).sum::<f64>();
        }
    }
    y
}

/// Evaluation-mode output of a recurrent model through the scalar oracles.
pub fn scalar_recurrent_forward(params: &ModelParams, input: &ModelInput) -> Array2<f64> {
    let cells = match &params.encoder {
        model::Encoder::Recurrent(c) => c,
        _ => panic!("recurrent model expected"),
    };
    let n = input.nodes();
    let hidden = params.arch.hidden;
    let mut h = Array2::zeros((n, hidden));
    let mut c = Array2::zeros((n, hidden));
    let l = if params.arch.kind == ModelKind::Lstm { None } else { input.laplacian.as_ref() };
    for (t, x) in input.frames.iter().enumerate() {
        let cell = &cells[if params.arch.stacked { t } else { 0 }];
        let (h2, c2) = scalar_cell_step(cell, x, &h, &c, l);
        h = h2;
        c = c2;
    }
    scalar_head(params, &h)
}

pub fn tiny_arch(kind: ModelKind, stacked: bool) -> Architecture {
    Architecture {
        kind,
        in_channels: if kind == ModelKind::Gcn { 5 } else { 3 },
        hidden: 3,
        cheb_k: if kind == ModelKind::Lstm { 1 } else { 2 },
        steps: 3,
        stacked,
        head_hidden: 4,
        outputs: 5,
        dropout: 0.2,
    }
}

/// Random tiny instance: N = 4 nodes, inputs, targets and a scaled Laplacian.
pub fn tiny_instance(arch: &Architecture, seed: u64) -> (ModelParams, ModelInput, Array2<f64>) {
    let mut r = rng(seed);
    let n = 4;
    let mut params = ModelParams::init(*arch, &mut r).unwrap();
    // nonzero biases and peepholes so their gradients are exercised
    for t in params.tensors_mut() {
        for v in t.iter_mut() {
            *v += r.random_range(-0.3..0.3);
        }
    }
    let frames_count = if arch.kind.is_recurrent() { arch.steps } else { 1 };
    let frames = (0..frames_count).map(|_| random_matrix(n, arch.in_channels, 1.0, &mut r)).collect();
    let laplacian = if arch.kind == ModelKind::Lstm {
        None
    } else {
        Some(firngraph::model::scaled_laplacian(&random_adjacency(n, &mut r)).unwrap().matrix)
    };
    let target = random_matrix(n, arch.outputs, 1.0, &mut r);
    (params, ModelInput { frames, laplacian }, target)
}

/// Loss under the dropout mask drawn from `mask_seed`.
pub fn loss_with_mask(params: &ModelParams, input: &ModelInput, target: &Array2<f64>, mask_seed: u64) -> f64 {
    let mut r = rng(mask_seed);
    let (pred, _) = model::forward_tape(params, input, Some(&mut r)).unwrap();
    model::mse_loss(&pred, target).unwrap()
}

pub struct GradientCheck {
    pub name: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

/// Relative error with the denominator floored at 1e-6, so entries whose
/// true gradient is (near) zero are judged on absolute error instead.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Central differences with step `h` for every parameter entry.
pub fn finite_difference_check(
    params: &ModelParams,
    input: &ModelInput,
    target: &Array2<f64>,
    mask_seed: u64,
    h: f64,
) -> Vec<GradientCheck> {
    let mut r = rng(mask_seed);
    let (_, _, grads) = model::loss_and_gradients(params, input, target, Some(&mut r)).unwrap();
    let analytic: Vec<(String, Vec<f64>)> = grads
        .named_tensors()
        .into_iter()
        .map(|(name, _, d)| (name, d.to_vec()))
        .collect();
    let mut out = Vec::new();
    for (t, (name, values)) in analytic.iter().enumerate() {
        for (i, &a) in values.iter().enumerate() {
            let mut plus = params.clone();
            plus.tensors_mut()[t][i] += h;
            let mut minus = params.clone();
            minus.tensors_mut()[t][i] -= h;
            let numeric = (loss_with_mask(&plus, input, target, mask_seed) - loss_with_mask(&minus, input, target, mask_seed))
                / (2.0 * h);
            out.push(GradientCheck {
                name: name.clone(),
                index: i,
                analytic: a,
                numeric,
                rel_error: relative_error(a, numeric),
            });
        }
    }
    out
}

/// All eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn jacobi_eigenvalues(m: &Array2<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut a = m.clone();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[[i, j]] * a[[i, j]])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[[p, q]].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * a[[p, q]]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
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
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[[i, i]]).collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// `P M P^T` for the permutation sending row `i` to row `perm[i]`.
pub fn permute_rows(m: &Array2<f64>, perm: &[usize]) -> Array2<f64> {
    let mut out = m.clone();
    for (i, &p) in perm.iter().enumerate() {
        out.row_mut(p).assign(&m.row(i));
    }
    out
}

pub fn permute_symmetric(m: &Array2<f64>, perm: &[usize]) -> Array2<f64> {
    let n = m.nrows();
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            out[[perm[i], perm[j]]] = m[[i, j]];
        }
    }
    out
}

pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
