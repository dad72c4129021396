use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{FEATURE_STEPS, NODE_CHANNELS, STATIC_CHANNELS, TARGET_YEARS};

use super::cheb::ChebFilter;

pub const DEFAULT_HIDDEN: usize = 64;
pub const DEFAULT_CHEB_K: usize = 3;
pub const HEAD_HIDDEN: usize = 32;
pub const DEFAULT_DROPOUT: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Chebyshev graph-convolutional LSTM over the yearly graph sequence.
    GcnLstm,
    /// One Chebyshev graph convolution over the 12-feature static graph.
    Gcn,
    /// Peephole LSTM per node, no adjacency.
    Lstm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::GcnLstm, ModelKind::Gcn, ModelKind::Lstm];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::GcnLstm => "gcn_lstm",
            ModelKind::Gcn => "gcn",
            ModelKind::Lstm => "lstm",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            ModelKind::GcnLstm => 0,
            ModelKind::Gcn => 1,
            ModelKind::Lstm => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.code() == code)
    }

    pub fn is_recurrent(self) -> bool {
        !matches!(self, ModelKind::Gcn)
    }

    pub fn uses_graph(self) -> bool {
        !matches!(self, ModelKind::Lstm)
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "gcn_lstm" | "gcn-lstm" => Ok(ModelKind::GcnLstm),
            "gcn" => Ok(ModelKind::Gcn),
            "lstm" => Ok(ModelKind::Lstm),
            other => Err(Error::Invalid(format!(
                "unknown model kind {other:?} (expected gcn_lstm, gcn or lstm)"
            ))),
        }
    }
}

/// Shape hyperparameters of a model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub kind: ModelKind,
    pub in_channels: usize,
    pub hidden: usize,
    /// Chebyshev order; the dense LSTM baseline always uses 1.
    pub cheb_k: usize,
    /// Recurrent steps (ignored by the static GCN).
    pub steps: usize,
    /// One independent cell per step instead of one shared cell.
    pub stacked: bool,
    pub head_hidden: usize,
    pub outputs: usize,
    pub dropout: f64,
}

impl Architecture {
    /// Full-size architecture for `kind` on the standard ten-year samples.
    pub fn standard(kind: ModelKind, cheb_k: usize, hidden: usize, stacked: bool, dropout: f64) -> Self {
        Architecture {
            kind,
            in_channels: if kind == ModelKind::Gcn { STATIC_CHANNELS } else { NODE_CHANNELS },
            hidden,
            cheb_k: if kind == ModelKind::Lstm { 1 } else { cheb_k },
            steps: FEATURE_STEPS,
            stacked,
            head_hidden: HEAD_HIDDEN,
            outputs: TARGET_YEARS,
            dropout,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Invalid(msg));
        if self.cheb_k == 0 || self.cheb_k > 16 {
            return bad(format!("Chebyshev order must lie in 1..=16, got {}", self.cheb_k));
        }
        if self.kind == ModelKind::Lstm && self.cheb_k != 1 {
            return bad("the LSTM baseline has no graph term, cheb_k must be 1".into());
        }
        if self.in_channels == 0 || self.hidden == 0 || self.head_hidden == 0 || self.outputs == 0 {
            return bad("layer widths must be positive".into());
        }
        if self.kind.is_recurrent() && self.steps == 0 {
            return bad("recurrent models need at least one step".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        Ok(())
    }

    fn cell_count(&self) -> usize {
        if self.stacked {
            self.steps
        } else {
            1
        }
    }
}

/// One peephole LSTM cell whose input and hidden maps are Chebyshev filters.
/// Gate columns are laid out `[input | forget | candidate | output]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellParams {
    /// `K` taps of `in_channels x 4H`.
    pub theta_x: Vec<Array2<f64>>,
    /// `K` taps of `H x 4H`.
    pub theta_h: Vec<Array2<f64>>,
    pub bias: Array1<f64>,
    pub peep_i: Array1<f64>,
    pub peep_f: Array1<f64>,
    pub peep_o: Array1<f64>,
}

impl CellParams {
    pub fn zeros(in_channels: usize, hidden: usize, k: usize) -> Self {
        CellParams {
            theta_x: vec![Array2::zeros((in_channels, 4 * hidden)); k],
            theta_h: vec![Array2::zeros((hidden, 4 * hidden)); k],
            bias: Array1::zeros(4 * hidden),
            peep_i: Array1::zeros(hidden),
            peep_f: Array1::zeros(hidden),
            peep_o: Array1::zeros(hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.peep_i.len()
    }

    pub fn order(&self) -> usize {
        self.theta_x.len()
    }

    /// Filter for one gate (0 = input, 1 = forget, 2 = candidate, 3 = output).
    pub fn gate_filter(&self, gate: usize, recurrent: bool) -> ChebFilter {
        let h = self.hidden();
        let taps = if recurrent { &self.theta_h } else { &self.theta_x };
        ChebFilter {
            taps: taps
                .iter()
                .map(|t| t.slice(ndarray::s![.., gate * h..(gate + 1) * h]).to_owned())
                .collect(),
        }
    }
}

/// Single graph convolution layer with bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    pub filter: ChebFilter,
    pub bias: Array1<f64>,
}

/// `Hardswish -> dense -> Hardswish -> dropout -> dense`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Encoder {
    Recurrent(Vec<CellParams>),
    Graph(ConvParams),
}

/// Every learnable tensor of a model plus the architecture it was built for.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub arch: Architecture,
    pub encoder: Encoder,
    pub head: HeadParams,
}

fn uniform_matrix(rows: usize, cols: usize, bound: f64, rng: &mut impl Rng) -> Array2<f64> {
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    Array2::from_shape_simple_fn((rows, cols), || dist.sample(rng))
}

impl ModelParams {
    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        let encoder = if arch.kind.is_recurrent() {
            Encoder::Recurrent(
                (0..arch.cell_count())
                    .map(|_| CellParams::zeros(arch.in_channels, arch.hidden, arch.cheb_k))
                    .collect(),
            )
        } else {
            Encoder::Graph(ConvParams {
                filter: ChebFilter {
                    taps: vec![Array2::zeros((arch.in_channels, arch.hidden)); arch.cheb_k],
                },
                bias: Array1::zeros(arch.hidden),
            })
        };
        Ok(ModelParams {
            arch,
            encoder,
            head: HeadParams {
                w1: Array2::zeros((arch.hidden, arch.head_hidden)),
                b1: Array1::zeros(arch.head_hidden),
                w2: Array2::zeros((arch.head_hidden, arch.outputs)),
                b2: Array1::zeros(arch.outputs),
            },
        })
    }

    /// Filters uniform in `+-sqrt(1 / (K * fan_in))`, biases and peepholes zero.
    pub fn init(arch: Architecture, rng: &mut impl Rng) -> Result<Self> {
        let mut p = Self::zeros(arch)?;
        let k = arch.cheb_k as f64;
        let bound = |fan_in: usize, taps: f64| (1.0 / (taps * fan_in as f64)).sqrt();
        match &mut p.encoder {
            Encoder::Recurrent(cells) => {
                for cell in cells {
                    for t in &mut cell.theta_x {
                        *t = uniform_matrix(t.nrows(), t.ncols(), bound(arch.in_channels, k), rng);
                    }
                    for t in &mut cell.theta_h {
                        *t = uniform_matrix(t.nrows(), t.ncols(), bound(arch.hidden, k), rng);
                    }
                }
            }
            Encoder::Graph(conv) => {
                for t in &mut conv.filter.taps {
                    *t = uniform_matrix(t.nrows(), t.ncols(), bound(arch.in_channels, k), rng);
                }
            }
        }
        p.head.w1 = uniform_matrix(arch.hidden, arch.head_hidden, bound(arch.hidden, 1.0), rng);
        p.head.w2 = uniform_matrix(arch.head_hidden, arch.outputs, bound(arch.head_hidden, 1.0), rng);
        Ok(p)
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.arch).expect("architecture already validated")
    }

    /// Named views of every tensor in a fixed order.
    pub fn named_tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        fn view<'a, D: ndarray::Dimension>(
            out: &mut Vec<(String, Vec<usize>, &'a [f64])>,
            name: String,
            a: &'a ndarray::Array<f64, D>,
        ) {
            out.push((name, a.shape().to_vec(), a.as_slice().expect("standard layout")));
        }
        let mut out = Vec::new();
        match &self.encoder {
            Encoder::Recurrent(cells) => {
                for (c, cell) in cells.iter().enumerate() {
                    for (k, t) in cell.theta_x.iter().enumerate() {
                        view(&mut out, format!("cell{c}.theta_x.{k}"), t);
                    }
                    for (k, t) in cell.theta_h.iter().enumerate() {
                        view(&mut out, format!("cell{c}.theta_h.{k}"), t);
                    }
                    view(&mut out, format!("cell{c}.bias"), &cell.bias);
                    view(&mut out, format!("cell{c}.peep_i"), &cell.peep_i);
                    view(&mut out, format!("cell{c}.peep_f"), &cell.peep_f);
                    view(&mut out, format!("cell{c}.peep_o"), &cell.peep_o);
                }
            }
            Encoder::Graph(conv) => {
                for (k, t) in conv.filter.taps.iter().enumerate() {
                    view(&mut out, format!("conv.theta.{k}"), t);
                }
                view(&mut out, "conv.bias".into(), &conv.bias);
            }
        }
        view(&mut out, "head.w1".into(), &self.head.w1);
        view(&mut out, "head.b1".into(), &self.head.b1);
        view(&mut out, "head.w2".into(), &self.head.w2);
        view(&mut out, "head.b2".into(), &self.head.b2);
        out
    }

    /// Mutable slices in the same order as [`named_tensors`](Self::named_tensors).
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        fn slice<D: ndarray::Dimension>(a: &mut ndarray::Array<f64, D>) -> &mut [f64] {
            a.as_slice_mut().expect("standard layout")
        }
        let mut out: Vec<&mut [f64]> = Vec::new();
        match &mut self.encoder {
            Encoder::Recurrent(cells) => {
                for cell in cells {
                    out.extend(cell.theta_x.iter_mut().map(slice));
                    out.extend(cell.theta_h.iter_mut().map(slice));
                    out.push(slice(&mut cell.bias));
                    out.push(slice(&mut cell.peep_i));
                    out.push(slice(&mut cell.peep_f));
                    out.push(slice(&mut cell.peep_o));
                }
            }
            Encoder::Graph(conv) => {
                out.extend(conv.filter.taps.iter_mut().map(slice));
                out.push(slice(&mut conv.bias));
            }
        }
        out.push(slice(&mut self.head.w1));
        out.push(slice(&mut self.head.b1));
        out.push(slice(&mut self.head.w2));
        out.push(slice(&mut self.head.b2));
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.named_tensors().iter().map(|(_, _, d)| d.len()).sum()
    }

    /// `self += scale * other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &ModelParams, scale: f64) {
        let src: Vec<&[f64]> = other.named_tensors().into_iter().map(|(_, _, d)| d).collect();
        for (dst, src) in self.tensors_mut().into_iter().zip(src) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
    }

    /// Order-sensitive digest of every parameter bit pattern.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        for (name, shape, data) in self.named_tensors() {
            hasher.update(name.as_bytes());
            for d in shape {
                hasher.update((d as u64).to_le_bytes());
            }
            for v in data {
                hasher.update(v.to_bits().to_le_bytes());
            }
        }
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
