use firngraph::graph::{build_temporal_sample, haversine_km, GeoPoint};
use firngraph::ingest::{compute_thicknesses, Dataset};
use firngraph::synth::{generate_dataset, generate_segment, persistence_baseline, SynthParams, SYNTH_COLUMNS};
use proptest::prelude::*;

fn params_strategy() -> impl Strategy<Value = SynthParams> {
    (
        0.0..=1.0f64,
        0.0..4.0f64,
        0.0..6.0f64,
        0.0..3.0f64,
        0.005..0.1f64,
        any::<u64>(),
        16usize..20,
    )
        .prop_map(|(rho, amp, tstd, noise, scale, seed, layers)| SynthParams {
            n_segments: 2,
            layers,
            temporal_ar: rho,
            spatial_amplitude: amp,
            temporal_std: tstd,
            noise_std: noise,
            spatial_scale: scale,
            seed,
            ..SynthParams::default()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn generated_records_are_valid(params in params_strategy(), index in 0usize..1000) {
        let seg = generate_segment(&params, index).unwrap();
        let rec = &seg.record;
        prop_assert_eq!(rec.columns(), SYNTH_COLUMNS);
        prop_assert_eq!(rec.layer_count(), params.layers);
        rec.validate().unwrap();
        let th = compute_thicknesses(&rec.layer_tops).unwrap();
        prop_assert!(th.iter().all(|&v| v >= 1.0));
        let spacing = haversine_km(
            GeoPoint::new(rec.latitudes[0], rec.longitudes[0]),
            GeoPoint::new(rec.latitudes[1], rec.longitudes[1]),
        );
        let expected = params.flight_step.to_radians() * 6371.0;
        prop_assert!((spacing - expected).abs() <= 0.01 * expected, "{} vs {}", spacing, expected);
    }

    #[test]
    fn adjacent_columns_respect_the_smoothness_bound(params in params_strategy(), index in 0usize..1000) {
        let seg = generate_segment(&params, index).unwrap();
        let th = compute_thicknesses(&seg.record.layer_tops).unwrap();
        for row in th.rows() {
            for w in row.as_slice().unwrap().windows(2) {
                prop_assert!((w[1] - w[0]).abs() <= seg.adjacent_step_bound);
            }
        }
    }

    #[test]
    fn generation_is_deterministic(params in params_strategy(), index in 0usize..1000) {
        let a = generate_segment(&params, index).unwrap().record;
        let b = generate_segment(&params, index).unwrap().record;
        prop_assert_eq!(a, b);
    }
}

#[test]
fn independent_years_are_uncorrelated() {
    let params = SynthParams {
        n_segments: 40,
        temporal_ar: 0.0,
        spatial_amplitude: 0.0,
        ..SynthParams::default()
    };
    let ds = generate_dataset(&params).unwrap();
    let mut pairs = Vec::new();
    for rec in ds.thickness_records().unwrap() {
        for t in 0..rec.thickness.nrows() - 1 {
            for c in 0..rec.columns() {
                pairs.push((rec.thickness[[t, c]], rec.thickness[[t + 1, c]]));
            }
        }
    }
    assert!(pairs.len() >= 10_000);
    let n = pairs.len() as f64;
    let (mx, my) = pairs.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0 / n, b + p.1 / n));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in &pairs {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    let r = sxy / (sxx * syy).sqrt();
    assert!(r.abs() < 0.1, "r = {r}");
}

#[test]
fn persistent_years_are_correlated() {
    let params = SynthParams {
        n_segments: 10,
        temporal_ar: 0.95,
        spatial_amplitude: 0.0,
        noise_std: 0.5,
        ..SynthParams::default()
    };
    let recs = generate_dataset(&params).unwrap().thickness_records().unwrap();
    let (mut sxy, mut sxx, mut syy, mut sx, mut sy, mut n) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for rec in &recs {
        for t in 0..rec.thickness.nrows() - 1 {
            for c in 0..rec.columns() {
                let (x, y) = (rec.thickness[[t, c]], rec.thickness[[t + 1, c]]);
                sx += x;
                sy += y;
                sxy += x * y;
                sxx += x * x;
                syy += y * y;
                n += 1.0;
            }
        }
    }
    let cov = sxy / n - sx * sy / (n * n);
    let r = cov / ((sxx / n - (sx / n).powi(2)) * (syy / n - (sy / n).powi(2))).sqrt();
    assert!(r > 0.5, "r = {r}");
}

#[test]
fn persistence_is_exact_in_a_frozen_world() {
    let params = SynthParams {
        n_segments: 3,
        temporal_ar: 1.0,
        spatial_amplitude: 0.0,
        noise_std: 0.0,
        ..SynthParams::default()
    };
    for rec in generate_dataset(&params).unwrap().thickness_records().unwrap() {
        let sample = build_temporal_sample(&rec).unwrap();
        let pred = persistence_baseline(&sample);
        assert_eq!(pred, sample.targets);
    }
}

#[test]
fn dataset_survives_serialization() {
    let ds = generate_dataset(&SynthParams {
        n_segments: 3,
        ..SynthParams::default()
    })
    .unwrap();
    assert_eq!(Dataset::from_bytes(&ds.to_bytes().unwrap()).unwrap(), ds);
}
