//! Numerical core: Chebyshev graph convolution, the graph-convolutional LSTM,
//! the GCN and LSTM baselines, the shared dense head, MSE loss, exact
//! reverse-mode gradients and Adam.

pub mod adam;
pub mod cell;
pub mod cheb;
pub mod checkpoint;
pub mod head;
pub mod laplacian;
pub mod params;

use ndarray::Array2;
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{StaticGraphSample, TemporalGraphSample};

pub use adam::{AdamConfig, AdamState};
pub use cell::Propagation;
pub use cheb::{cheb_conv, ChebFilter};
pub use head::hardswish;
pub use laplacian::{scaled_laplacian, ScaledLaplacian};
pub use params::{Architecture, CellParams, ConvParams, Encoder, HeadParams, ModelKind, ModelParams};

/// Model-ready tensors for one sample.
#[derive(Debug, Clone)]
pub struct ModelInput {
    /// Recurrent models: one `N x C` matrix per step. Static GCN: a single
    /// `N x 12` matrix.
    pub frames: Vec<Array2<f64>>,
    /// Scaled Laplacian; absent for the adjacency-free LSTM.
    pub laplacian: Option<Array2<f64>>,
}

impl ModelInput {
    pub fn temporal(sample: &TemporalGraphSample, with_graph: bool) -> Result<Self> {
        let laplacian = if with_graph {
            Some(scaled_laplacian(&sample.adjacency)?.matrix)
        } else {
            None
        };
        Ok(ModelInput {
            frames: sample.frames.clone(),
            laplacian,
        })
    }

    pub fn static_graph(sample: &StaticGraphSample) -> Result<Self> {
        Ok(ModelInput {
            frames: vec![sample.features.clone()],
            laplacian: Some(scaled_laplacian(&sample.adjacency)?.matrix),
        })
    }

    /// Build the input a model of `kind` expects from a normalized temporal
    /// sample.
    pub fn for_kind(kind: ModelKind, sample: &TemporalGraphSample) -> Result<Self> {
        match kind {
            ModelKind::GcnLstm => Self::temporal(sample, true),
            ModelKind::Lstm => Self::temporal(sample, false),
            ModelKind::Gcn => Self::static_graph(&StaticGraphSample::from(sample)),
        }
    }

    pub fn nodes(&self) -> usize {
        self.frames.first().map_or(0, |f| f.nrows())
    }

    pub fn channels(&self) -> usize {
        self.frames.first().map_or(0, |f| f.ncols())
    }
}

#[derive(Debug, Clone)]
enum EncoderTape {
    Recurrent(Vec<cell::StepCache>),
    Graph(Vec<Array2<f64>>),
}

/// Everything the reverse pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    encoder: EncoderTape,
    head: head::HeadCache,
}

fn propagation<'a>(params: &ModelParams, input: &'a ModelInput) -> Result<Propagation<'a>> {
    match (params.arch.kind, &input.laplacian) {
        (ModelKind::Lstm, _) => Ok(Propagation::Dense),
        (_, Some(l)) => Ok(Propagation::Graph(l)),
        (_, None) if params.arch.cheb_k == 1 => Ok(Propagation::Dense),
        (kind, None) => Err(Error::Invalid(format!("{kind} model needs a Laplacian"))),
    }
}

fn check_input(params: &ModelParams, input: &ModelInput) -> Result<()> {
    let arch = &params.arch;
    let expected_frames = if arch.kind.is_recurrent() { arch.steps } else { 1 };
    if input.frames.len() != expected_frames {
        return Err(Error::shape("model input", format!("{expected_frames} frames"), input.frames.len()));
    }
    let n = input.nodes();
    for f in &input.frames {
        if f.dim() != (n, arch.in_channels) {
            return Err(Error::shape(
                "model input frame",
                format!("{n}x{}", arch.in_channels),
                format!("{}x{}", f.nrows(), f.ncols()),
            ));
        }
    }
    if let Some(l) = &input.laplacian {
        if l.dim() != (n, n) {
            return Err(Error::shape("Laplacian", format!("{n}x{n}"), format!("{:?}", l.dim())));
        }
    }
    Ok(())
}

/// Forward pass keeping activations. Dropout is active only when `dropout_rng`
/// is given.
pub fn forward_tape<R: Rng>(
    params: &ModelParams,
    input: &ModelInput,
    dropout_rng: Option<&mut R>,
) -> Result<(Array2<f64>, Tape)> {
    check_input(params, input)?;
    let prop = propagation(params, input)?;
    let n = input.nodes();
    let (encoded, encoder_tape) = match &params.encoder {
        Encoder::Recurrent(cells) => {
            let hidden = params.arch.hidden;
            let mut h = Array2::zeros((n, hidden));
            let mut c = Array2::zeros((n, hidden));
            let mut caches = Vec::with_capacity(input.frames.len());
            for (t, x) in input.frames.iter().enumerate() {
                let cell = &cells[if params.arch.stacked { t } else { 0 }];
                let (h_next, c_next, cache) = cell::step_forward(cell, x, &h, &c, prop)?;
                h = h_next;
                c = c_next;
                caches.push(cache);
            }
            (h, EncoderTape::Recurrent(caches))
        }
        Encoder::Graph(conv) => {
            let basis = cheb::chebyshev_basis(&input.frames[0], prop_laplacian(prop), conv.filter.order())?;
            let mut out = Array2::zeros((n, conv.filter.out_channels()));
            out += &conv.bias;
            cheb::project_into(&basis, &conv.filter.taps, &mut out);
            (out, EncoderTape::Graph(basis))
        }
    };
    let mask = match (dropout_rng, params.arch.dropout > 0.0) {
        (Some(rng), true) => Some(head::dropout_mask(n, params.arch.head_hidden, params.arch.dropout, rng)),
        _ => None,
    };
    let (y, head_cache) = head::head_forward(&params.head, &encoded, mask);
    Ok((
        y,
        Tape {
            encoder: encoder_tape,
            head: head_cache,
        },
    ))
}

fn prop_laplacian(prop: Propagation<'_>) -> Option<&Array2<f64>> {
    match prop {
        Propagation::Graph(l) => Some(l),
        Propagation::Dense => None,
    }
}

/// Evaluation-mode forward pass (no dropout).
pub fn predict(params: &ModelParams, input: &ModelInput) -> Result<Array2<f64>> {
    forward_tape::<rand_chacha::ChaCha8Rng>(params, input, None).map(|(y, _)| y)
}

/// Gradients of a scalar loss w.r.t. every parameter given `d_out`, the loss
/// gradient w.r.t. the model output of the forward pass recorded in `tape`.
pub fn backward(params: &ModelParams, input: &ModelInput, tape: &Tape, d_out: &Array2<f64>) -> Result<ModelParams> {
    let prop = propagation(params, input)?;
    let mut grads = params.zeros_like();
    let d_encoded = head::head_backward(&params.head, &tape.head, d_out, &mut grads.head);
    match (&params.encoder, &mut grads.encoder, &tape.encoder) {
        (Encoder::Recurrent(cells), Encoder::Recurrent(cell_grads), EncoderTape::Recurrent(caches)) => {
            let mut dh = d_encoded;
            let mut dc = Array2::zeros(dh.dim());
            for (t, cache) in caches.iter().enumerate().rev() {
                let idx = if params.arch.stacked { t } else { 0 };
                let (dh_prev, dc_prev) =
                    cell::step_backward(&cells[idx], cache, &dh, &dc, &mut cell_grads[idx], prop, t > 0);
                dc = dc_prev;
                if let Some(d) = dh_prev {
                    dh = d;
                }
            }
        }
        (Encoder::Graph(_), Encoder::Graph(conv_grads), EncoderTape::Graph(basis)) => {
            conv_grads.bias += &d_encoded.sum_axis(ndarray::Axis(0));
            for (z, g) in basis.iter().zip(conv_grads.filter.taps.iter_mut()) {
                ndarray::linalg::general_mat_mul(1.0, &z.t(), &d_encoded, 1.0, g);
            }
        }
        _ => return Err(Error::Invalid("tape does not match model encoder".into())),
    }
    Ok(grads)
}

/// Mean squared error over every entry.
pub fn mse_loss(pred: &Array2<f64>, target: &Array2<f64>) -> Result<f64> {
    if pred.dim() != target.dim() {
        return Err(Error::shape("mse_loss", format!("{:?}", target.dim()), format!("{:?}", pred.dim())));
    }
    let n = pred.len() as f64;
    Ok(pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n)
}

pub fn mse_grad(pred: &Array2<f64>, target: &Array2<f64>) -> Array2<f64> {
    let scale = 2.0 / pred.len() as f64;
    (pred - target) * scale
}

/// Loss, prediction and exact parameter gradients for one sample. A given
/// dropout stream fixes the sampled mask for the paired passes.
pub fn loss_and_gradients<R: Rng>(
    params: &ModelParams,
    input: &ModelInput,
    target: &Array2<f64>,
    dropout_rng: Option<&mut R>,
) -> Result<(f64, Array2<f64>, ModelParams)> {
    let (pred, tape) = forward_tape(params, input, dropout_rng)?;
    let loss = mse_loss(&pred, target)?;
    let grads = backward(params, input, &tape, &mse_grad(&pred, target))?;
    Ok((loss, pred, grads))
}

fn forward_with_mode<R: Rng>(params: &ModelParams, input: &ModelInput, rng: &mut R, training: bool) -> Result<Array2<f64>> {
    let rng = training.then_some(rng);
    forward_tape(params, input, rng).map(|(y, _)| y)
}

fn expect_kind(params: &ModelParams, kind: ModelKind) -> Result<()> {
    if params.arch.kind != kind {
        return Err(Error::Invalid(format!("expected {kind} parameters, got {}", params.arch.kind)));
    }
    Ok(())
}

/// Graph-convolutional LSTM over a normalized temporal sample.
pub fn forward_gcn_lstm<R: Rng>(
    sample: &TemporalGraphSample,
    params: &ModelParams,
    rng: &mut R,
    training: bool,
) -> Result<Array2<f64>> {
    expect_kind(params, ModelKind::GcnLstm)?;
    forward_with_mode(params, &ModelInput::temporal(sample, true)?, rng, training)
}

/// Single graph convolution over a normalized static sample.
pub fn forward_gcn_baseline<R: Rng>(
    sample: &StaticGraphSample,
    params: &ModelParams,
    rng: &mut R,
    training: bool,
) -> Result<Array2<f64>> {
    expect_kind(params, ModelKind::Gcn)?;
    forward_with_mode(params, &ModelInput::static_graph(sample)?, rng, training)
}

/// Per-node LSTM over the yearly feature matrices, no adjacency.
pub fn forward_lstm_baseline<R: Rng>(
    frames: &[Array2<f64>],
    params: &ModelParams,
    rng: &mut R,
    training: bool,
) -> Result<Array2<f64>> {
    expect_kind(params, ModelKind::Lstm)?;
    let input = ModelInput {
        frames: frames.to_vec(),
        laplacian: None,
    };
    forward_with_mode(params, &input, rng, training)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn mse_examples() {
        let t = Array2::from_elem((256, 5), 3.0);
        assert_eq!(mse_loss(&t, &t).unwrap(), 0.0);
        assert_eq!(mse_loss(&(&t + 2.0), &t).unwrap(), 4.0);
        assert_eq!(mse_loss(&array![[3.0, 4.0]], &array![[0.0, 0.0]]).unwrap(), 12.5);
        assert!(mse_loss(&array![[1.0]], &array![[1.0, 2.0]]).is_err());
    }
}
