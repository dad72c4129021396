//! Labeled echogram ingestion: layer-top extraction from binary masks,
//! thickness computation, usability filtering and train/test split plans.
//!
//! # Dataset file format (version 1)
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic         4 bytes   "FGDS"
//! version       u16       1
//! reserved      u16       0
//! surface_year  i32       year of the flight (layer directly below the surface = surface_year - 1)
//! count         u32       number of records
//! count x record:
//!   id_len      u16
//!   id          id_len bytes, UTF-8
//!   columns     u32       N (256 for real echograms)
//!   layers      u32       L, number of labeled layer tops including the surface
//!   latitudes   N x f64   degrees
//!   longitudes  N x f64   degrees
//!   layer_tops  L*N x u32 row-major by layer: all N columns of layer 0, then layer 1, ...
//! ```

use std::collections::HashSet;
use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use log::{info, warn};
use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::codec;
use crate::error::{Error, Result};
use crate::rng::keyed_rng;

/// Minimum number of labeled tops: the surface plus five target and ten
/// feature layer tops.
pub const MIN_USABLE_LAYERS: usize = 16;

pub const DEFAULT_SURFACE_YEAR: i32 = 2012;

const DATASET_MAGIC: &[u8; 4] = b"FGDS";
pub const DATASET_VERSION: u16 = 1;

/// One radar image: per-column coordinates and layer-top pixel rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentRecord {
    pub segment_id: String,
    pub latitudes: Vec<f64>,
    pub longitudes: Vec<f64>,
    /// `L x N` pixel rows, row 0 is the surface.
    pub layer_tops: Array2<u32>,
}

impl SegmentRecord {
    /// Build a record, checking coordinate ranges, shapes and monotone tops.
    pub fn new(
        segment_id: impl Into<String>,
        latitudes: Vec<f64>,
        longitudes: Vec<f64>,
        layer_tops: Array2<u32>,
    ) -> Result<Self> {
        let record = SegmentRecord {
            segment_id: segment_id.into(),
            latitudes,
            longitudes,
            layer_tops,
        };
        record.validate()?;
        Ok(record)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.latitudes.len();
        if self.longitudes.len() != n {
            return Err(Error::shape(
                format!("coordinates of {}", self.segment_id),
                format!("{n} longitudes"),
                self.longitudes.len(),
            ));
        }
        if self.layer_tops.ncols() != n {
            return Err(Error::shape(
                format!("layer tops of {}", self.segment_id),
                format!("{n} columns"),
                self.layer_tops.ncols(),
            ));
        }
        if self.layer_tops.nrows() == 0 {
            return Err(Error::Invalid(format!("{} has no layer tops", self.segment_id)));
        }
        validate_coordinates(&self.latitudes, &self.longitudes)?;
        compute_thicknesses(&self.layer_tops).map(|_| ())
    }

    pub fn columns(&self) -> usize {
        self.latitudes.len()
    }

    /// Number of labeled layer tops, surface included.
    pub fn layer_count(&self) -> usize {
        self.layer_tops.nrows()
    }

    pub fn thickness_record(&self, surface_year: i32) -> Result<ThicknessRecord> {
        let thickness = compute_thicknesses(&self.layer_tops)?;
        let year_labels = (0..thickness.nrows())
            .map(|t| surface_year - 1 - t as i32)
            .collect();
        Ok(ThicknessRecord {
            segment_id: self.segment_id.clone(),
            latitudes: self.latitudes.clone(),
            longitudes: self.longitudes.clone(),
            thickness,
            year_labels,
        })
    }
}

/// Per-column annual layer thicknesses, in pixels, youngest layer first.
#[derive(Debug, Clone, PartialEq)]
pub struct ThicknessRecord {
    pub segment_id: String,
    pub latitudes: Vec<f64>,
    pub longitudes: Vec<f64>,
    /// `(L-1) x N`; row t lies between layer tops t and t+1. Row 0 is the
    /// layer directly beneath the surface line.
    pub thickness: Array2<f64>,
    /// Calendar year of each thickness row.
    pub year_labels: Vec<i32>,
}

impl ThicknessRecord {
    /// Number of labeled layer tops the record was derived from.
    pub fn layer_count(&self) -> usize {
        self.thickness.nrows() + 1
    }

    pub fn columns(&self) -> usize {
        self.latitudes.len()
    }
}

/// One train/test partition of the usable records.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub trial_index: usize,
    pub seed: u64,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

impl SplitPlan {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        codec::write_atomic(path, text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = codec::read_file(path)?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}

fn validate_coordinates(lats: &[f64], lons: &[f64]) -> Result<()> {
    for (i, (&lat, &lon)) in lats.iter().zip(lons).enumerate() {
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            return Err(Error::Invalid(format!(
                "coordinate {i} out of range: ({lat}, {lon})"
            )));
        }
    }
    Ok(())
}

/// Row index of the first white pixel of every white run, per column.
///
/// `mask` is `H x W`; the result is `L x W` where every column must carry the
/// same number `L` of runs.
pub fn extract_layer_tops(mask: &Array2<bool>) -> Result<Array2<u32>> {
    let (height, width) = mask.dim();
    let mut columns: Vec<Vec<u32>> = Vec::with_capacity(width);
    for c in 0..width {
        let mut tops = Vec::new();
        let mut prev = false;
        for r in 0..height {
            let white = mask[[r, c]];
            if white && !prev {
                tops.push(r as u32);
            }
            prev = white;
        }
        if tops.is_empty() {
            return Err(Error::EmptyColumn { column: c });
        }
        columns.push(tops);
    }
    let layers = columns.first().map_or(0, Vec::len);
    if let Some((c, col)) = columns.iter().enumerate().find(|(_, col)| col.len() != layers) {
        return Err(Error::ColumnCountMismatch {
            column: c,
            expected: layers,
            found: col.len(),
        });
    }
    Ok(Array2::from_shape_fn((layers, width), |(t, c)| columns[c][t]))
}

/// Consecutive top differences: `thickness[t][c] = tops[t+1][c] - tops[t][c]`.
pub fn compute_thicknesses(layer_tops: &Array2<u32>) -> Result<Array2<f64>> {
    let (layers, width) = layer_tops.dim();
    let rows = layers.saturating_sub(1);
    let mut out = Array2::zeros((rows, width));
    for t in 0..rows {
        for c in 0..width {
            let upper = layer_tops[[t, c]];
            let lower = layer_tops[[t + 1, c]];
            if lower <= upper {
                return Err(Error::NonMonotonicTops {
                    layer: t,
                    column: c,
                    upper,
                    lower,
                });
            }
            out[[t, c]] = f64::from(lower - upper);
        }
    }
    Ok(out)
}

/// Keep records with at least `min_layers` labeled tops, preserving order.
pub fn filter_usable(records: Vec<ThicknessRecord>, min_layers: usize) -> Vec<ThicknessRecord> {
    let before = records.len();
    let kept: Vec<_> = records
        .into_iter()
        .filter(|r| r.layer_count() >= min_layers)
        .collect();
    info!(
        "usable records: {} of {} (minimum {} layers)",
        kept.len(),
        before,
        min_layers
    );
    kept
}

/// Number of training records for a split of `n` at `train_fraction`.
pub fn train_count(n: usize, train_fraction: f64) -> usize {
    ((train_fraction * n as f64) + 1e-9).floor() as usize
}

/// `n_trials` seeded uniform permutations of `ids`, each cut into train and
/// test at `floor(train_fraction * N)`.
pub fn make_splits<S: AsRef<str>>(
    ids: &[S],
    n_trials: usize,
    train_fraction: f64,
    seed: u64,
) -> Result<Vec<SplitPlan>> {
    if ids.len() < 2 {
        return Err(Error::Invalid(format!(
            "need at least 2 usable records to split, found {}",
            ids.len()
        )));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Invalid(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id.as_ref()) {
            return Err(Error::Invalid(format!("duplicate segment id {}", id.as_ref())));
        }
    }
    let n_train = train_count(ids.len(), train_fraction).clamp(1, ids.len() - 1);
    let plans = (0..n_trials)
        .map(|trial| {
            let mut order: Vec<String> = ids.iter().map(|s| s.as_ref().to_owned()).collect();
            let mut rng = keyed_rng(seed, &[crate::rng::STREAM_SPLIT, trial as u64]);
            order.shuffle(&mut rng);
            let test_ids = order.split_off(n_train);
            SplitPlan {
                trial_index: trial,
                seed,
                train_ids: order,
                test_ids,
            }
        })
        .collect();
    Ok(plans)
}

/// Decode a labeled mask image; pixels at or above mid-gray are white.
pub fn load_mask(path: &Path) -> Result<Array2<bool>> {
    let img = image::open(path)
        .map_err(|e| Error::Image {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?
        .to_luma8();
    let (w, h) = img.dimensions();
    Ok(Array2::from_shape_fn((h as usize, w as usize), |(r, c)| {
        img.get_pixel(c as u32, r as u32)[0] >= 128
    }))
}

/// Parse a geolocation table: one `lat lon` pair per line, separated by
/// whitespace or a comma. Blank lines and `#` comments are skipped.
pub fn parse_geo_table(text: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut lats = Vec::new();
    let mut lons = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|ch: char| ch == ',' || ch.is_whitespace())
            .filter(|f| !f.is_empty())
            .collect();
        if fields.len() != 2 {
            return Err(Error::format(
                "geolocation table",
                format!("line {}: expected 2 fields, found {}", lineno + 1, fields.len()),
            ));
        }
        let parse = |s: &str| {
            s.parse::<f64>().map_err(|_| {
                Error::format("geolocation table", format!("line {}: bad number {s:?}", lineno + 1))
            })
        };
        lats.push(parse(fields[0])?);
        lons.push(parse(fields[1])?);
    }
    validate_coordinates(&lats, &lons)?;
    Ok((lats, lons))
}

/// Outcome of ingesting a mask directory.
#[derive(Debug)]
pub struct IngestSummary {
    pub records: Vec<SegmentRecord>,
    pub rejected: Vec<(String, Error)>,
    pub too_shallow: usize,
}

/// Ingest every `<id>.png` under `masks_dir` paired with `<id>.txt` or
/// `<id>.csv` under `geo_dir`. Invalid segments are logged and skipped.
pub fn ingest_directory(masks_dir: &Path, geo_dir: &Path, min_layers: usize) -> Result<IngestSummary> {
    let mut mask_paths: Vec<PathBuf> = fs::read_dir(masks_dir)
        .map_err(|e| Error::io(masks_dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .is_some_and(|ext| ext.eq_ignore_ascii_case("png"))
        })
        .collect();
    mask_paths.sort();

    let mut records = Vec::new();
    let mut rejected = Vec::new();
    let mut too_shallow = 0;
    for mask_path in mask_paths {
        let id = mask_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        match ingest_segment(&id, &mask_path, geo_dir) {
            Ok(record) if record.layer_count() < min_layers => {
                too_shallow += 1;
                info!("{id}: {} layers, below minimum {min_layers}", record.layer_count());
            }
            Ok(record) => records.push(record),
            Err(err) => {
                warn!("{id}: rejected: {err}");
                rejected.push((id, err));
            }
        }
    }
    Ok(IngestSummary {
        records,
        rejected,
        too_shallow,
    })
}

fn ingest_segment(id: &str, mask_path: &Path, geo_dir: &Path) -> Result<SegmentRecord> {
    let geo_path = ["txt", "csv"]
        .iter()
        .map(|ext| geo_dir.join(format!("{id}.{ext}")))
        .find(|p| p.exists())
        .ok_or_else(|| Error::Invalid(format!("no geolocation table for segment {id} in {}", geo_dir.display())))?;
    let text = fs::read_to_string(&geo_path).map_err(|e| Error::io(&geo_path, e))?;
    let (lats, lons) = parse_geo_table(&text)?;
    let mask = load_mask(mask_path)?;
    if mask.ncols() != lats.len() {
        return Err(Error::shape(
            format!("segment {id}"),
            format!("{} mask columns (one per geolocation row)", lats.len()),
            mask.ncols(),
        ));
    }
    let tops = extract_layer_tops(&mask)?;
    SegmentRecord::new(id, lats, lons, tops)
}

/// A set of segment records sharing one flight year.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub surface_year: i32,
    pub records: Vec<SegmentRecord>,
}

impl Dataset {
    pub fn new(surface_year: i32, records: Vec<SegmentRecord>) -> Self {
        Dataset {
            surface_year,
            records,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        buf.extend_from_slice(DATASET_MAGIC);
        buf.write_u16::<LittleEndian>(DATASET_VERSION)?;
        buf.write_u16::<LittleEndian>(0)?;
        buf.write_i32::<LittleEndian>(self.surface_year)?;
        buf.write_u32::<LittleEndian>(self.records.len() as u32)?;
        for rec in &self.records {
            codec::write_str(&mut buf, &rec.segment_id)?;
            buf.write_u32::<LittleEndian>(rec.columns() as u32)?;
            buf.write_u32::<LittleEndian>(rec.layer_count() as u32)?;
            codec::write_f64s(&mut buf, rec.latitudes.iter().copied())?;
            codec::write_f64s(&mut buf, rec.longitudes.iter().copied())?;
            for &top in rec.layer_tops.iter() {
                buf.write_u32::<LittleEndian>(top)?;
            }
        }
        Ok(buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        const WHAT: &str = "dataset file";
        let mut r = Cursor::new(bytes);
        codec::expect_magic(&mut r, DATASET_MAGIC, WHAT)?;
        codec::expect_version(&mut r, DATASET_VERSION, WHAT)?;
        let surface_year = r.read_i32::<LittleEndian>()?;
        let count = r.read_u32::<LittleEndian>()? as usize;
        let mut records = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let id = codec::read_str(&mut r, WHAT)?;
            let columns = r.read_u32::<LittleEndian>()? as usize;
            let layers = r.read_u32::<LittleEndian>()? as usize;
            let remaining = bytes.len() - r.position() as usize;
            if columns.saturating_mul(16 + 4 * layers) > remaining {
                return Err(Error::format(WHAT, format!("record {id} is truncated")));
            }
            let lats = codec::read_f64s(&mut r, columns)?;
            let lons = codec::read_f64s(&mut r, columns)?;
            let mut tops = vec![0u32; layers * columns];
            r.read_u32_into::<LittleEndian>(&mut tops)?;
            let tops = Array2::from_shape_vec((layers, columns), tops)
                .map_err(|e| Error::format(WHAT, e.to_string()))?;
            records.push(SegmentRecord::new(id, lats, lons, tops)?);
        }
        codec::expect_eof(&mut r, WHAT)?;
        Ok(Dataset {
            surface_year,
            records,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        codec::write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&codec::read_file(path)?)
    }

    /// Thickness records for every segment, in file order.
    pub fn thickness_records(&self) -> Result<Vec<ThicknessRecord>> {
        self.records
            .iter()
            .map(|r| r.thickness_record(self.surface_year))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn mask_from_tops(height: usize, tops: &[&[usize]]) -> Array2<bool> {
        let mut mask = Array2::from_elem((height, tops.len()), false);
        for (c, col) in tops.iter().enumerate() {
            for &r in col.iter() {
                mask[[r, c]] = true;
            }
        }
        mask
    }

    #[test]
    fn run_tops_of_a_single_column() {
        let mask = mask_from_tops(50, &[&[10, 25, 43]]);
        let tops = extract_layer_tops(&mask).unwrap();
        assert_eq!(tops.column(0).to_vec(), vec![10, 25, 43]);
    }

    #[test]
    fn three_column_mask() {
        let mask = mask_from_tops(50, &[&[5, 20], &[6, 21], &[5, 22]]);
        let tops = extract_layer_tops(&mask).unwrap();
        assert_eq!(tops, array![[5, 6, 5], [20, 21, 22]]);
    }

    #[test]
    fn wide_runs_contribute_their_first_row() {
        let mask = mask_from_tops(30, &[&[3, 4, 5, 12, 13]]);
        let tops = extract_layer_tops(&mask).unwrap();
        assert_eq!(tops.column(0).to_vec(), vec![3, 12]);
    }

    #[test]
    fn all_black_column_is_rejected() {
        let mask = mask_from_tops(20, &[&[2, 8], &[]]);
        assert!(matches!(
            extract_layer_tops(&mask),
            Err(Error::EmptyColumn { column: 1 })
        ));
    }

    #[test]
    fn columns_must_agree_on_layer_count() {
        let mask = mask_from_tops(20, &[&[2, 8], &[3, 9, 15]]);
        assert!(matches!(
            extract_layer_tops(&mask),
            Err(Error::ColumnCountMismatch {
                column: 1,
                expected: 2,
                found: 3
            })
        ));
    }

    #[test]
    fn thickness_is_consecutive_difference() {
        let t = compute_thicknesses(&array![[10], [25], [43]]).unwrap();
        assert_eq!(t, array![[15.0], [18.0]]);
        let t = compute_thicknesses(&array![[0], [7], [19], [40]]).unwrap();
        assert_eq!(t, array![[7.0], [12.0], [21.0]]);
    }

    #[test]
    fn zero_thickness_is_rejected() {
        assert!(matches!(
            compute_thicknesses(&array![[10], [10]]),
            Err(Error::NonMonotonicTops { .. })
        ));
    }

    fn record_with_layers(id: &str, layers: usize) -> ThicknessRecord {
        let tops = Array2::from_shape_fn((layers, 2), |(t, _)| (t * 5) as u32);
        SegmentRecord::new(id, vec![70.0, 70.001], vec![-40.0, -40.0], tops)
            .unwrap()
            .thickness_record(DEFAULT_SURFACE_YEAR)
            .unwrap()
    }

    #[test]
    fn filter_keeps_records_at_threshold() {
        let records = vec![
            record_with_layers("a", 14),
            record_with_layers("b", 16),
            record_with_layers("c", 20),
        ];
        let kept = filter_usable(records, MIN_USABLE_LAYERS);
        let ids: Vec<_> = kept.iter().map(|r| r.segment_id.as_str()).collect();
        assert_eq!(ids, ["b", "c"]);
        assert!(filter_usable(Vec::new(), 16).is_empty());
    }

    #[test]
    fn year_labels_count_down_from_surface_year() {
        let rec = record_with_layers("a", 16);
        assert_eq!(rec.year_labels.len(), 15);
        assert_eq!(rec.year_labels[0], 2011);
        assert_eq!(rec.year_labels[14], 1997);
    }

    #[test]
    fn split_sizes() {
        let ids: Vec<String> = (0..5).map(|i| format!("s{i}")).collect();
        let plans = make_splits(&ids, 5, 0.8, 1).unwrap();
        for p in &plans {
            assert_eq!(p.train_ids.len(), 4);
            assert_eq!(p.test_ids.len(), 1);
        }
        assert!(make_splits(&ids[..1], 5, 0.8, 1).is_err());
    }

    #[test]
    fn splits_are_reproducible_and_vary_by_trial() {
        let ids: Vec<String> = (0..40).map(|i| format!("s{i}")).collect();
        let a = make_splits(&ids, 5, 0.8, 99).unwrap();
        let b = make_splits(&ids, 5, 0.8, 99).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0].test_ids, a[1].test_ids);
        let c = make_splits(&ids, 5, 0.8, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn geo_table_accepts_commas_and_whitespace() {
        let (lat, lon) = parse_geo_table("# lat lon\n70.5, -40.25\n70.6\t-40.3\n\n").unwrap();
        assert_eq!(lat, vec![70.5, 70.6]);
        assert_eq!(lon, vec![-40.25, -40.3]);
        assert!(parse_geo_table("95.0 10.0").is_err());
        assert!(parse_geo_table("1.0 2.0 3.0").is_err());
    }

    #[test]
    fn dataset_rejects_bad_magic_and_trailing_bytes() {
        let ds = Dataset::new(2012, vec![]);
        let mut bytes = ds.to_bytes().unwrap();
        assert_eq!(Dataset::from_bytes(&bytes).unwrap(), ds);
        bytes.push(0);
        assert!(Dataset::from_bytes(&bytes).is_err());
        assert!(Dataset::from_bytes(b"NOPE....").is_err());
    }
}
