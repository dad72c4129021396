//! Geographic graph construction: haversine inverse-distance adjacency,
//! temporal and static graph samples, and feature/weight normalization.
//!
//! # Graph file format (version 1)
//!
//! Little-endian throughout. Features, adjacency and targets are stored as
//! 32-bit floats; normalization statistics as 64-bit floats.
//!
//! ```text
//! magic             4 bytes  "FGGR"
//! version           u16      1
//! reserved          u16      0
//! count             u32      number of samples
//! train_count       u32      samples [0, train_count) are the training split
//! nodes             u32      N
//! steps             u32      T (10)
//! channels          u32      C (3: latitude, longitude, thickness)
//! targets           u32      Y (5)
//! first_target_year i32      calendar year of target column 0
//! feature_mean      C x f64
//! feature_std       C x f64
//! weight_min        f64
//! weight_max        f64
//! fitted_on_len     u16, then UTF-8 bytes
//! count x sample:
//!   id_len          u16, then UTF-8 bytes
//!   features        T*N*C x f32  step-major, then node, then channel
//!   adjacency       N*N x f32    row-major
//!   targets         N*Y x f32    node-major, columns oldest year first
//! ```

use std::io::Cursor;
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{s, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::codec;
use crate::error::{Error, Result};
use crate::ingest::ThicknessRecord;

/// Earth radius in kilometres.
pub const EARTH_RADIUS_KM: f64 = 6371.0;
/// Distances below this are clamped before taking the reciprocal.
pub const MIN_DISTANCE_KM: f64 = 1e-3;

/// Feature years per sample (oldest first).
pub const FEATURE_STEPS: usize = 10;
/// Target years per sample.
pub const TARGET_YEARS: usize = 5;
/// Node channels in a temporal frame: latitude, longitude, thickness.
pub const NODE_CHANNELS: usize = 3;
pub const THICKNESS_CHANNEL: usize = 2;
/// Static feature width: latitude, longitude and ten thickness columns.
pub const STATIC_CHANNELS: usize = 2 + FEATURE_STEPS;

const GRAPH_MAGIC: &[u8; 4] = b"FGGR";
pub const GRAPH_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Self {
        GeoPoint { lat, lon }
    }
}

fn hav(theta: f64) -> f64 {
    let s = (theta / 2.0).sin();
    s * s
}

/// Great-circle distance in kilometres.
pub fn haversine_km(p: GeoPoint, q: GeoPoint) -> f64 {
    let (phi_p, phi_q) = (p.lat.to_radians(), q.lat.to_radians());
    let d_phi = phi_q - phi_p;
    let d_lambda = (q.lon - p.lon).to_radians();
    let h = hav(d_phi) + phi_p.cos() * phi_q.cos() * hav(d_lambda);
    2.0 * EARTH_RADIUS_KM * h.clamp(0.0, 1.0).sqrt().asin()
}

/// Fully connected inverse-distance adjacency with a zero diagonal.
pub fn build_adjacency(lats: &[f64], lons: &[f64]) -> Array2<f64> {
    let n = lats.len();
    debug_assert_eq!(n, lons.len());
    let mut adj = Array2::zeros((n, n));
    for i in 0..n {
        let p = GeoPoint::new(lats[i], lons[i]);
        for j in (i + 1)..n {
            let d = haversine_km(p, GeoPoint::new(lats[j], lons[j]));
            let w = 1.0 / d.max(MIN_DISTANCE_KM);
            adj[[i, j]] = w;
            adj[[j, i]] = w;
        }
    }
    adj
}

/// Ten yearly graphs over the same nodes plus five target years.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalGraphSample {
    pub segment_id: String,
    /// `T` frames of `N x 3`, oldest year first.
    pub frames: Vec<Array2<f64>>,
    pub adjacency: Array2<f64>,
    /// `N x 5`, oldest target year first.
    pub targets: Array2<f64>,
}

impl TemporalGraphSample {
    pub fn nodes(&self) -> usize {
        self.adjacency.nrows()
    }
}

/// Single graph whose nodes carry all ten feature years at once.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticGraphSample {
    pub segment_id: String,
    /// `N x 12`: latitude, longitude, then thickness oldest year first.
    pub features: Array2<f64>,
    pub adjacency: Array2<f64>,
    pub targets: Array2<f64>,
}

impl From<&TemporalGraphSample> for StaticGraphSample {
    fn from(sample: &TemporalGraphSample) -> Self {
        let n = sample.nodes();
        let steps = sample.frames.len();
        let mut features = Array2::zeros((n, 2 + steps));
        if let Some(first) = sample.frames.first() {
            features.slice_mut(s![.., 0..2]).assign(&first.slice(s![.., 0..2]));
        }
        for (t, frame) in sample.frames.iter().enumerate() {
            features
                .column_mut(2 + t)
                .assign(&frame.column(THICKNESS_CHANNEL));
        }
        StaticGraphSample {
            segment_id: sample.segment_id.clone(),
            features,
            adjacency: sample.adjacency.clone(),
            targets: sample.targets.clone(),
        }
    }
}

/// Split a usable record into ten feature frames (1997..2006 for a 2012
/// flight) and five targets (2007..2011). Layers deeper than the fifteenth
/// below the surface are dropped.
pub fn build_temporal_sample(record: &ThicknessRecord) -> Result<TemporalGraphSample> {
    let needed = FEATURE_STEPS + TARGET_YEARS;
    if record.thickness.nrows() < needed {
        return Err(Error::InsufficientLayers {
            segment_id: record.segment_id.clone(),
            found: record.layer_count(),
            required: needed + 1,
        });
    }
    let n = record.columns();
    // thickness row 0 is the youngest layer.
    let targets = Array2::from_shape_fn((n, TARGET_YEARS), |(c, j)| {
        record.thickness[[TARGET_YEARS - 1 - j, c]]
    });
    let frames = (0..FEATURE_STEPS)
        .map(|t| {
            let row = needed - 1 - t;
            Array2::from_shape_fn((n, NODE_CHANNELS), |(c, ch)| match ch {
                0 => record.latitudes[c],
                1 => record.longitudes[c],
                _ => record.thickness[[row, c]],
            })
        })
        .collect();
    Ok(TemporalGraphSample {
        segment_id: record.segment_id.clone(),
        frames,
        adjacency: build_adjacency(&record.latitudes, &record.longitudes),
        targets,
    })
}

pub fn build_static_sample(record: &ThicknessRecord) -> Result<StaticGraphSample> {
    Ok(StaticGraphSample::from(&build_temporal_sample(record)?))
}

/// Which samples the normalization statistics are fitted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormScope {
    /// Training split only.
    Train,
    /// Every usable sample, train and test together.
    All,
}

impl std::str::FromStr for NormScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(NormScope::Train),
            "all" => Ok(NormScope::All),
            other => Err(Error::Invalid(format!(
                "unknown normalization scope {other:?} (expected train or all)"
            ))),
        }
    }
}

impl std::fmt::Display for NormScope {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NormScope::Train => "train",
            NormScope::All => "all",
        })
    }
}

/// Z-score statistics per node channel and min-max bounds for edge weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
    pub weight_min: f64,
    pub weight_max: f64,
    pub fitted_on: String,
}

/// Sum with a fixed pairwise reduction tree.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if values.len() <= BLOCK {
        values.iter().sum()
    } else {
        let mid = values.len() / 2;
        pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
    }
}

/// Pool every channel over all nodes, frames and samples; pool weights over
/// every off-diagonal adjacency entry.
pub fn fit_normalization(
    samples: &[TemporalGraphSample],
    fitted_on: impl Into<String>,
) -> Result<NormalizationStats> {
    let first = samples
        .first()
        .ok_or_else(|| Error::Invalid("cannot fit normalization on an empty sample set".into()))?;
    let channels = first.frames.first().map_or(0, |f| f.ncols());
    let mut feature_mean = Vec::with_capacity(channels);
    let mut feature_std = Vec::with_capacity(channels);
    for ch in 0..channels {
        let mut values = Vec::new();
        for sample in samples {
            for frame in &sample.frames {
                if frame.ncols() != channels {
                    return Err(Error::shape("normalization fit", format!("{channels} channels"), frame.ncols()));
                }
                values.extend(frame.column(ch).iter().copied());
            }
        }
        let count = values.len() as f64;
        let mean = pairwise_sum(&values) / count;
        let squares: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
        let std = (pairwise_sum(&squares) / count).sqrt();
        if !(std > 0.0) {
            return Err(Error::DegenerateChannel { channel: ch });
        }
        feature_mean.push(mean);
        feature_std.push(std);
    }

    let mut weight_min = f64::INFINITY;
    let mut weight_max = f64::NEG_INFINITY;
    for sample in samples {
        for ((i, j), &w) in sample.adjacency.indexed_iter() {
            if i != j {
                weight_min = weight_min.min(w);
                weight_max = weight_max.max(w);
            }
        }
    }
    if !weight_min.is_finite() {
        // single-node graphs carry no edges
        weight_min = 0.0;
        weight_max = 0.0;
    }
    Ok(NormalizationStats {
        feature_mean,
        feature_std,
        weight_min,
        weight_max,
        fitted_on: fitted_on.into(),
    })
}

fn normalize_weights(adjacency: &Array2<f64>, stats: &NormalizationStats) -> Array2<f64> {
    let span = stats.weight_max - stats.weight_min;
    Array2::from_shape_fn(adjacency.dim(), |(i, j)| {
        if i == j {
            0.0
        } else if span > 0.0 {
            ((adjacency[[i, j]] - stats.weight_min) / span).clamp(0.0, 1.0)
        } else {
            1.0
        }
    })
}

fn normalize_columns(features: &mut Array2<f64>, stats: &NormalizationStats, channel_of: impl Fn(usize) -> usize) {
    for (col, mut column) in features.axis_iter_mut(Axis(1)).enumerate() {
        let ch = channel_of(col);
        let (mean, std) = (stats.feature_mean[ch], stats.feature_std[ch]);
        column.mapv_inplace(|x| (x - mean) / std);
    }
}

/// Z-score node features and min-max edge weights. Targets stay in pixels.
pub fn apply_normalization(sample: &TemporalGraphSample, stats: &NormalizationStats) -> Result<TemporalGraphSample> {
    let channels = stats.feature_mean.len();
    let mut out = sample.clone();
    for frame in &mut out.frames {
        if frame.ncols() != channels {
            return Err(Error::shape(
                format!("normalizing {}", sample.segment_id),
                format!("{channels} channels"),
                frame.ncols(),
            ));
        }
        normalize_columns(frame, stats, |c| c);
    }
    out.adjacency = normalize_weights(&sample.adjacency, stats);
    Ok(out)
}

/// Static counterpart of [`apply_normalization`]: latitude and longitude use
/// their own statistics, every thickness column the pooled thickness ones.
pub fn apply_normalization_static(sample: &StaticGraphSample, stats: &NormalizationStats) -> Result<StaticGraphSample> {
    if stats.feature_mean.len() != NODE_CHANNELS {
        return Err(Error::shape("static normalization", NODE_CHANNELS, stats.feature_mean.len()));
    }
    let mut out = sample.clone();
    normalize_columns(&mut out.features, stats, |c| c.min(THICKNESS_CHANNEL));
    out.adjacency = normalize_weights(&sample.adjacency, stats);
    Ok(out)
}

/// Normalized temporal samples together with the statistics used.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphFile {
    pub stats: NormalizationStats,
    /// Leading samples that belong to the training split; the rest are test.
    pub train_count: usize,
    pub first_target_year: i32,
    pub samples: Vec<TemporalGraphSample>,
}

impl GraphFile {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let (nodes, steps, channels, targets) = self.dims();
        let mut buf = Vec::new();
        buf.extend_from_slice(GRAPH_MAGIC);
        buf.write_u16::<LittleEndian>(GRAPH_VERSION)?;
        buf.write_u16::<LittleEndian>(0)?;
        if self.train_count > self.samples.len() {
            return Err(Error::Invalid(format!(
                "train_count {} exceeds {} samples",
                self.train_count,
                self.samples.len()
            )));
        }
        for v in [self.samples.len(), self.train_count, nodes, steps, channels, targets] {
            buf.write_u32::<LittleEndian>(v as u32)?;
        }
        buf.write_i32::<LittleEndian>(self.first_target_year)?;
        if self.stats.feature_mean.len() != channels || self.stats.feature_std.len() != channels {
            return Err(Error::shape("graph file statistics", channels, self.stats.feature_mean.len()));
        }
        codec::write_f64s(&mut buf, self.stats.feature_mean.iter().copied())?;
        codec::write_f64s(&mut buf, self.stats.feature_std.iter().copied())?;
        codec::write_f64s(&mut buf, [self.stats.weight_min, self.stats.weight_max])?;
        codec::write_str(&mut buf, &self.stats.fitted_on)?;
        for sample in &self.samples {
            if sample.frames.len() != steps
                || sample.nodes() != nodes
                || sample.targets.dim() != (nodes, targets)
                || sample.frames.iter().any(|f| f.dim() != (nodes, channels))
            {
                return Err(Error::shape(
                    format!("graph sample {}", sample.segment_id),
                    format!("{steps} frames of {nodes}x{channels}, {nodes}x{targets} targets"),
                    format!("{} frames, {} nodes", sample.frames.len(), sample.nodes()),
                ));
            }
            codec::write_str(&mut buf, &sample.segment_id)?;
            for frame in &sample.frames {
                codec::write_f32s(&mut buf, frame.iter().copied())?;
            }
            codec::write_f32s(&mut buf, sample.adjacency.iter().copied())?;
            codec::write_f32s(&mut buf, sample.targets.iter().copied())?;
        }
        Ok(buf)
    }

    fn dims(&self) -> (usize, usize, usize, usize) {
        match self.samples.first() {
            Some(s) => (
                s.nodes(),
                s.frames.len(),
                s.frames.first().map_or(0, |f| f.ncols()),
                s.targets.ncols(),
            ),
            None => (0, FEATURE_STEPS, self.stats.feature_mean.len(), TARGET_YEARS),
        }
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        const WHAT: &str = "graph file";
        let mut r = Cursor::new(bytes);
        codec::expect_magic(&mut r, GRAPH_MAGIC, WHAT)?;
        codec::expect_version(&mut r, GRAPH_VERSION, WHAT)?;
        let mut dims = [0usize; 6];
        for d in &mut dims {
            *d = r.read_u32::<LittleEndian>()? as usize;
        }
        let [count, train_count, nodes, steps, channels, targets] = dims;
        if train_count > count {
            return Err(Error::format(WHAT, format!("train_count {train_count} exceeds {count} samples")));
        }
        let first_target_year = r.read_i32::<LittleEndian>()?;
        let feature_mean = codec::read_f64s(&mut r, channels)?;
        let feature_std = codec::read_f64s(&mut r, channels)?;
        let weight_min = r.read_f64::<LittleEndian>()?;
        let weight_max = r.read_f64::<LittleEndian>()?;
        let fitted_on = codec::read_str(&mut r, WHAT)?;
        let per_sample = 4 * (steps * nodes * channels + nodes * nodes + nodes * targets);
        let mut samples = Vec::with_capacity(count.min(1 << 12));
        for _ in 0..count {
            let segment_id = codec::read_str(&mut r, WHAT)?;
            if bytes.len() - (r.position() as usize) < per_sample {
                return Err(Error::format(WHAT, format!("sample {segment_id} is truncated")));
            }
            let frames = (0..steps)
                .map(|_| {
                    let v = codec::read_f32s(&mut r, nodes * channels)?;
                    Array2::from_shape_vec((nodes, channels), v).map_err(|e| Error::format(WHAT, e.to_string()))
                })
                .collect::<Result<Vec<_>>>()?;
            let adjacency = Array2::from_shape_vec((nodes, nodes), codec::read_f32s(&mut r, nodes * nodes)?)
                .map_err(|e| Error::format(WHAT, e.to_string()))?;
            let target = Array2::from_shape_vec((nodes, targets), codec::read_f32s(&mut r, nodes * targets)?)
                .map_err(|e| Error::format(WHAT, e.to_string()))?;
            samples.push(TemporalGraphSample {
                segment_id,
                frames,
                adjacency,
                targets: target,
            });
        }
        codec::expect_eof(&mut r, WHAT)?;
        Ok(GraphFile {
            stats: NormalizationStats {
                feature_mean,
                feature_std,
                weight_min,
                weight_max,
                fitted_on,
            },
            train_count,
            first_target_year,
            samples,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        codec::write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&codec::read_file(path)?)
    }

    pub fn train_samples(&self) -> &[TemporalGraphSample] {
        &self.samples[..self.train_count]
    }

    pub fn test_samples(&self) -> &[TemporalGraphSample] {
        &self.samples[self.train_count..]
    }
}

/// True if `m` equals its transpose bit for bit.
pub fn is_exactly_symmetric(m: ArrayView2<f64>) -> bool {
    m.nrows() == m.ncols() && m.indexed_iter().all(|((i, j), &v)| v.to_bits() == m[[j, i]].to_bits())
}
