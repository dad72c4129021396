//! Synthetic layer-thickness corpora.
//!
//! Each node-year thickness is
//!
//! ```text
//! base + S(x) + a_t(x) + e
//! ```
//!
//! where `S` is a static sinusoidal field over geographic position shared by
//! the whole corpus, `a_t` is a per-segment anomaly whose mode coefficients
//! follow a stationary AR(1) process across years with coefficient `rho`,
//! and `e` is i.i.d. Gaussian noise truncated at four standard deviations.
//! The anomaly is spatially smooth, so neighbouring nodes share it: graph
//! mixing helps estimate it through the noise, while its persistence across
//! years is what a recurrent model can exploit. Thicknesses are rounded to
//! whole pixels and kept at or above one pixel.

use std::f64::consts::PI;

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::graph::{TemporalGraphSample, THICKNESS_CHANNEL, TARGET_YEARS};
use crate::ingest::{Dataset, SegmentRecord, DEFAULT_SURFACE_YEAR};
use crate::kv::KeyValues;
use crate::rng::{keyed_rng, STREAM_SYNTH_FIELD, STREAM_SYNTH_SEGMENT};

pub const SYNTH_COLUMNS: usize = 256;
/// Pixel row of the surface line in generated records.
const SURFACE_ROW: u32 = 40;
/// cos(72 deg): longitude scale of the planar coordinates the fields live in.
const LON_SCALE: f64 = 0.309_016_994_374_947_4;
const SPATIAL_MODES: usize = 4;
const ANOMALY_WAVES: usize = 2;
const NOISE_TRUNCATION: f64 = 4.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub n_segments: usize,
    /// Labeled tops per record, surface included.
    pub layers: usize,
    pub base_thickness: f64,
    /// Shortest wavelength of the spatial fields, in degrees.
    pub spatial_scale: f64,
    /// Standard deviation of the static spatial field, in pixels.
    pub spatial_amplitude: f64,
    pub temporal_ar: f64,
    /// Marginal standard deviation of the temporal anomaly, in pixels.
    pub temporal_std: f64,
    pub noise_std: f64,
    /// Along-track spacing of consecutive columns, in degrees.
    pub flight_step: f64,
    pub seed: u64,
    pub surface_year: i32,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            n_segments: 100,
            layers: 16,
            base_thickness: 12.0,
            spatial_scale: 0.02,
            spatial_amplitude: 3.0,
            temporal_ar: 0.8,
            temporal_std: 4.0,
            noise_std: 2.0,
            flight_step: 1.3e-4,
            seed: 0,
            surface_year: DEFAULT_SURFACE_YEAR,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Invalid(m));
        if self.layers < 2 {
            return bad(format!("layers must be at least 2, got {}", self.layers));
        }
        if !(0.0..=1.0).contains(&self.temporal_ar) {
            return bad(format!("temporal_ar must lie in [0, 1], got {}", self.temporal_ar));
        }
        for (name, v) in [
            ("spatial_scale", self.spatial_scale),
            ("flight_step", self.flight_step),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [
            ("base_thickness", self.base_thickness),
            ("spatial_amplitude", self.spatial_amplitude),
            ("temporal_std", self.temporal_std),
            ("noise_std", self.noise_std),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        Ok(())
    }

    /// Parse a `key = value` parameter file; unspecified keys keep defaults.
    pub fn from_kv_text(text: &str) -> Result<Self> {
        let mut kv = KeyValues::parse(text, "synth params")?;
        let mut p = SynthParams::default();
        macro_rules! take {
            ($($field:ident),*) => {$(
                if let Some(v) = kv.take(stringify!($field))? {
                    p.$field = v;
                }
            )*};
        }
        take!(
            n_segments,
            layers,
            base_thickness,
            spatial_scale,
            spatial_amplitude,
            temporal_ar,
            temporal_std,
            noise_std,
            flight_step,
            seed,
            surface_year
        );
        kv.finish()?;
        p.validate()?;
        Ok(p)
    }

    pub fn to_kv_text(&self) -> String {
        format!(
            "n_segments = {}\nlayers = {}\nbase_thickness = {}\nspatial_scale = {}\nspatial_amplitude = {}\n\
             temporal_ar = {}\ntemporal_std = {}\nnoise_std = {}\nflight_step = {}\nseed = {}\nsurface_year = {}\n",
            self.n_segments,
            self.layers,
            self.base_thickness,
            self.spatial_scale,
            self.spatial_amplitude,
            self.temporal_ar,
            self.temporal_std,
            self.noise_std,
            self.flight_step,
            self.seed,
            self.surface_year
        )
    }
}

#[derive(Debug, Clone, Copy)]
struct Wave {
    amplitude: f64,
    /// Unit direction in planar (lat, lon * LON_SCALE) coordinates.
    direction: (f64, f64),
    wavelength: f64,
    phase: f64,
}

impl Wave {
    fn random(rng: &mut impl Rng, amplitude: f64, wavelength: f64) -> Self {
        let angle = rng.random_range(0.0..2.0 * PI);
        Wave {
            amplitude,
            direction: (angle.cos(), angle.sin()),
            wavelength,
            phase: rng.random_range(0.0..2.0 * PI),
        }
    }

    fn shape(&self, x: (f64, f64)) -> f64 {
        let along = self.direction.0 * x.0 + self.direction.1 * x.1;
        (2.0 * PI * along / self.wavelength + self.phase).sin()
    }

    /// Lipschitz constant of `shape` per unit planar distance.
    fn slope(&self) -> f64 {
        2.0 * PI / self.wavelength
    }
}

fn planar(lat: f64, lon: f64) -> (f64, f64) {
    (lat, lon * LON_SCALE)
}

fn wavelength(params: &SynthParams, mode: usize) -> f64 {
    params.spatial_scale * (1.0 + 0.75 * mode as f64)
}

fn spatial_field(params: &SynthParams) -> Vec<Wave> {
    let mut rng = keyed_rng(params.seed, &[STREAM_SYNTH_FIELD]);
    let amplitude = params.spatial_amplitude * (2.0 / SPATIAL_MODES as f64).sqrt();
    (0..SPATIAL_MODES)
        .map(|m| {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            Wave::random(&mut rng, sign * amplitude, wavelength(params, m))
        })
        .collect()
}

/// A generated record plus the generator's own bound on the thickness
/// difference between adjacent columns of the same layer.
#[derive(Debug, Clone)]
pub struct SyntheticSegment {
    pub record: SegmentRecord,
    pub adjacent_step_bound: f64,
}

fn normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Generate segment `index`; identical `(params, index)` give identical output.
pub fn generate_segment(params: &SynthParams, index: usize) -> Result<SyntheticSegment> {
    params.validate()?;
    let field = spatial_field(params);
    let mut rng = keyed_rng(params.seed, &[STREAM_SYNTH_SEGMENT, index as u64]);
    let years = params.layers - 1;

    // flight line
    let lat0: f64 = rng.random_range(67.0..77.0);
    let lon0 = rng.random_range(-50.0..-30.0);
    let heading = rng.random_range(0.0..2.0 * PI);
    let step_lat = params.flight_step * heading.cos();
    let step_lon = params.flight_step * heading.sin() / lat0.to_radians().cos();
    let latitudes: Vec<f64> = (0..SYNTH_COLUMNS).map(|c| lat0 + c as f64 * step_lat).collect();
    let longitudes: Vec<f64> = (0..SYNTH_COLUMNS).map(|c| lon0 + c as f64 * step_lon).collect();

    // anomaly: one segment-wide mode plus smooth waves, each AR(1) over years
    let mode_std = params.temporal_std / 2f64.sqrt();
    let waves: Vec<Wave> = (0..ANOMALY_WAVES)
        .map(|m| Wave::random(&mut rng, 1.0, wavelength(params, m)))
        .collect();
    let rho = params.temporal_ar;
    let innovation = (1.0 - rho * rho).max(0.0).sqrt();
    // coefficients[t][m], t = 0 is the oldest year
    let mut coefficients = vec![vec![0.0; ANOMALY_WAVES + 1]; years];
    for m in 0..=ANOMALY_WAVES {
        let mut b = mode_std * normal(&mut rng);
        for row in coefficients.iter_mut() {
            row[m] = b;
            b = rho * b + innovation * mode_std * normal(&mut rng);
        }
    }

    let mut thickness = Array2::<u32>::zeros((years, SYNTH_COLUMNS));
    for c in 0..SYNTH_COLUMNS {
        let x = planar(latitudes[c], longitudes[c]);
        let static_part: f64 = params.base_thickness + field.iter().map(|w| w.amplitude * w.shape(x)).sum::<f64>();
        for (t, coef) in coefficients.iter().enumerate() {
            let anomaly = coef[0] + waves.iter().zip(&coef[1..]).map(|(w, b)| b * w.shape(x)).sum::<f64>();
            let smooth = static_part + anomaly;
            let mut value = 0.0;
            for _ in 0..64 {
                let noise = truncated_noise(&mut rng, params.noise_std);
                value = (smooth + noise).round();
                if value >= 1.0 {
                    break;
                }
            }
            // row 0 is the youngest layer
            thickness[[years - 1 - t, c]] = value.max(1.0) as u32;
        }
    }

    let mut tops = Array2::<u32>::zeros((params.layers, SYNTH_COLUMNS));
    for c in 0..SYNTH_COLUMNS {
        tops[[0, c]] = SURFACE_ROW;
        for t in 0..years {
            tops[[t + 1, c]] = tops[[t, c]] + thickness[[t, c]];
        }
    }

    let field_slope: f64 = field.iter().map(|w| w.amplitude.abs() * w.slope()).sum();
    let anomaly_slope: f64 = waves
        .iter()
        .enumerate()
        .map(|(m, w)| {
            let peak = coefficients.iter().map(|row| row[m + 1].abs()).fold(0.0, f64::max);
            peak * w.slope()
        })
        .sum();
    let adjacent_step_bound =
        (field_slope + anomaly_slope) * params.flight_step + 2.0 * NOISE_TRUNCATION * params.noise_std + 1.0;

    let record = SegmentRecord::new(
        format!("synth_{:x}_{index:05}", params.seed),
        latitudes,
        longitudes,
        tops,
    )?;
    Ok(SyntheticSegment {
        record,
        adjacent_step_bound,
    })
}

fn truncated_noise(rng: &mut impl Rng, std: f64) -> f64 {
    if std == 0.0 {
        return 0.0;
    }
    loop {
        let z = normal(rng);
        if z.abs() <= NOISE_TRUNCATION {
            return std * z;
        }
    }
}

pub fn generate_dataset(params: &SynthParams) -> Result<Dataset> {
    let records = (0..params.n_segments)
        .map(|i| generate_segment(params, i).map(|s| s.record))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset::new(params.surface_year, records))
}

/// Predict every target year as the node's mean feature-year thickness.
/// Expects an unnormalized sample.
pub fn persistence_baseline(sample: &TemporalGraphSample) -> Array2<f64> {
    let n = sample.nodes();
    let steps = sample.frames.len() as f64;
    let mut out = Array2::zeros((n, TARGET_YEARS));
    for node in 0..n {
        let mean = sample.frames.iter().map(|f| f[[node, THICKNESS_CHANNEL]]).sum::<f64>() / steps;
        out.row_mut(node).fill(mean);
    }
    out
}
