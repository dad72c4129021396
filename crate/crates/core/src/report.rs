//! Report artifacts regenerated from saved trial files: one SVG per target
//! year showing predicted and true thickness along the concatenated test
//! flight lines, plus the CSV behind the plots.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use plotters::prelude::*;

use crate::codec;
use crate::error::{Error, Result};
use crate::train::{SamplePrediction, TrialFile};

const WIDTH: u32 = 1200;
const HEIGHT: u32 = 400;

/// Long-format table: one row per segment, node and year.
pub fn curves_csv(file: &TrialFile, predictions: &[&SamplePrediction]) -> String {
    let mut out = String::from("segment_id,node,year,truth,predicted\n");
    for p in predictions {
        for (node, (truth, pred)) in p.truth.iter().zip(&p.predicted).enumerate() {
            for (y, year) in file.report.years.iter().enumerate() {
                let _ = writeln!(out, "{},{node},{year},{},{}", p.segment_id, truth[y], pred[y]);
            }
        }
    }
    out
}

fn series(predictions: &[&SamplePrediction], year: usize) -> (Vec<(f64, f64)>, Vec<(f64, f64)>) {
    let mut truth = Vec::new();
    let mut pred = Vec::new();
    let mut x = 0.0;
    for p in predictions {
        for (t, q) in p.truth.iter().zip(&p.predicted) {
            truth.push((x, t[year]));
            pred.push((x, q[year]));
            x += 1.0;
        }
    }
    (truth, pred)
}

pub fn render_year_svg(file: &TrialFile, predictions: &[&SamplePrediction], year: usize) -> Result<String> {
    let (truth, pred) = series(predictions, year);
    let x_max = truth.len().max(2) as f64 - 1.0;
    let (lo, hi) = truth
        .iter()
        .chain(&pred)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, y)| (lo.min(y), hi.max(y)));
    let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 1.0) };
    let pad = ((hi - lo) * 0.05).max(0.5);
    let title = format!(
        "{} trial {}: {} thickness",
        file.report.model, file.report.trial_index, file.report.years[year]
    );
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, (WIDTH, HEIGHT)).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let mut chart = ChartBuilder::on(&root)
            .caption(title, ("sans-serif", 18))
            .margin(10)
            .x_label_area_size(35)
            .y_label_area_size(50)
            .build_cartesian_2d(0.0..x_max, (lo - pad)..(hi + pad))
            .map_err(plot_err)?;
        chart
            .configure_mesh()
            .x_desc("trace (concatenated test segments)")
            .y_desc("thickness (px)")
            .disable_mesh()
            .draw()
            .map_err(plot_err)?;
        chart
            .draw_series(LineSeries::new(truth, BLACK.stroke_width(1)))
            .map_err(plot_err)?
            .label("truth")
            .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], BLACK));
        chart
            .draw_series(LineSeries::new(pred, RED.stroke_width(1)))
            .map_err(plot_err)?
            .label("predicted")
            .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], RED));
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(plot_err)?;
        root.present().map_err(plot_err)?;
    }
    Ok(svg)
}

fn plot_err<E: std::fmt::Display>(e: E) -> Error {
    Error::Plot(e.to_string())
}

/// Write `curves.csv` and `year_<year>.svg` for each target year into
/// `out_dir`. With `segment` given, only that test segment is drawn.
pub fn write_trial_report(file: &TrialFile, out_dir: &Path, segment: Option<&str>) -> Result<Vec<PathBuf>> {
    let predictions: Vec<&SamplePrediction> = file
        .predictions
        .iter()
        .filter(|p| segment.is_none_or(|s| p.segment_id == s))
        .collect();
    if predictions.is_empty() {
        return Err(Error::Invalid(match segment {
            Some(s) => format!("trial file has no test segment {s}"),
            None => "trial file holds no predictions".into(),
        }));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    let csv_path = out_dir.join("curves.csv");
    codec::write_atomic(&csv_path, curves_csv(file, &predictions).as_bytes())?;
    written.push(csv_path);
    for (y, year) in file.report.years.iter().enumerate() {
        let path = out_dir.join(format!("year_{year}.svg"));
        codec::write_atomic(&path, render_year_svg(file, &predictions, y)?.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelKind;
    use crate::train::TrialReport;

    fn file() -> TrialFile {
        TrialFile {
            report: TrialReport {
                model: ModelKind::GcnLstm,
                trial_index: 0,
                seed: 1,
                epochs: 1,
                years: (2007..2012).collect(),
                per_year_rmse: vec![0.0; 5],
                total_rmse: 0.0,
                train_rmse: 0.0,
                epoch_losses: vec![1.0],
                parameter_count: 1,
                parameter_hash: String::new(),
                wall_time: Default::default(),
            },
            predictions: vec![SamplePrediction {
                segment_id: "a".into(),
                predicted: vec![vec![1.0, 2.0, 3.0, 4.0, 5.0], vec![1.5; 5]],
                truth: vec![vec![1.0; 5], vec![2.0; 5]],
            }],
        }
    }

    #[test]
    fn csv_rows() {
        let f = file();
        let preds: Vec<_> = f.predictions.iter().collect();
        let csv = curves_csv(&f, &preds);
        assert_eq!(csv.lines().count(), 1 + 2 * 5);
        assert_eq!(csv.lines().nth(2), Some("a,0,2008,1,2"));
    }

    #[test]
    fn writes_one_svg_per_year() {
        let dir = tempfile::tempdir().unwrap();
        let paths = write_trial_report(&file(), dir.path(), None).unwrap();
        assert_eq!(paths.len(), 6);
        let svg = std::fs::read_to_string(dir.path().join("year_2009.svg")).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(write_trial_report(&file(), dir.path(), Some("zzz")).is_err());
    }
}
