use std::collections::HashSet;

use firngraph::graph::build_temporal_sample;
use firngraph::ingest::{
    compute_thicknesses, extract_layer_tops, filter_usable, make_splits, train_count, Dataset, SegmentRecord,
    MIN_USABLE_LAYERS,
};
use firngraph::Error;
use ndarray::Array2;
use proptest::prelude::*;

/// Layer tops per column, strictly increasing, with at least one black row
/// between consecutive one-pixel lines.
fn tops_strategy() -> impl Strategy<Value = Array2<u32>> {
    (1usize..8, 1usize..6).prop_flat_map(|(layers, width)| {
        prop::collection::vec(prop::collection::vec(2u32..9, layers), width).prop_map(move |gaps| {
            Array2::from_shape_fn((layers, width), |(t, c)| gaps[c][..=t].iter().sum::<u32>())
        })
    })
}

fn render(tops: &Array2<u32>, line_width: u32) -> Array2<bool> {
    let height = tops.iter().max().copied().unwrap_or(0) as usize + line_width as usize + 3;
    let mut mask = Array2::from_elem((height, tops.ncols()), false);
    for ((_, c), &top) in tops.indexed_iter() {
        for r in top..top + line_width {
            mask[[r as usize, c]] = true;
        }
    }
    mask
}

proptest! {
    #[test]
    fn tops_survive_a_render_round_trip(tops in tops_strategy(), width in 1u32..2) {
        let mask = render(&tops, width);
        prop_assert_eq!(extract_layer_tops(&mask).unwrap(), tops);
    }

    #[test]
    fn thickness_is_consecutive_differences(tops in tops_strategy()) {
        let th = compute_thicknesses(&tops).unwrap();
        prop_assert_eq!(th.nrows(), tops.nrows() - 1);
        for ((t, c), &v) in th.indexed_iter() {
            prop_assert!(v > 0.0);
            prop_assert_eq!(v, f64::from(tops[[t + 1, c]] - tops[[t, c]]));
        }
        // summing thicknesses rebuilds every top from the surface line
        for c in 0..tops.ncols() {
            let mut acc = f64::from(tops[[0, c]]);
            for t in 0..th.nrows() {
                acc += th[[t, c]];
                prop_assert_eq!(acc, f64::from(tops[[t + 1, c]]));
            }
        }
    }

    #[test]
    fn non_monotone_tops_are_rejected(tops in tops_strategy(), pick in any::<prop::sample::Index>()) {
        prop_assume!(tops.nrows() >= 2);
        let mut bad = tops.clone();
        let c = pick.index(tops.ncols());
        bad[[1, c]] = bad[[0, c]];
        let rejected = matches!(compute_thicknesses(&bad), Err(Error::NonMonotonicTops { layer: 0, .. }));
        prop_assert!(rejected);
    }

    #[test]
    fn splits_partition_the_ids(n in 2usize..80, trials in 1usize..6, seed in any::<u64>(), frac in 0.05f64..0.95) {
        let ids: Vec<String> = (0..n).map(|i| format!("seg{i:03}")).collect();
        let plans = make_splits(&ids, trials, frac, seed).unwrap();
        prop_assert_eq!(plans.len(), trials);
        let n_train = train_count(n, frac).clamp(1, n - 1);
        for (i, plan) in plans.iter().enumerate() {
            prop_assert_eq!(plan.trial_index, i);
            prop_assert_eq!(plan.train_ids.len(), n_train);
            let train: HashSet<_> = plan.train_ids.iter().collect();
            let test: HashSet<_> = plan.test_ids.iter().collect();
            prop_assert!(train.is_disjoint(&test));
            prop_assert_eq!(train.len() + test.len(), n);
        }
        prop_assert_eq!(make_splits(&ids, trials, frac, seed).unwrap(), plans);
    }
}

#[test]
fn split_sizes_for_the_full_corpus() {
    assert_eq!(train_count(568, 0.8), 454);
    let ids: Vec<String> = (0..568).map(|i| i.to_string()).collect();
    let plans = make_splits(&ids, 5, 0.8, 11).unwrap();
    assert!(plans.iter().all(|p| p.train_ids.len() == 454 && p.test_ids.len() == 114));
    assert_ne!(plans[0].test_ids, plans[1].test_ids);
}

#[test]
fn duplicate_ids_and_tiny_sets_are_rejected() {
    assert!(make_splits(&["a", "a", "b"], 1, 0.8, 0).is_err());
    assert!(make_splits(&["a"], 1, 0.8, 0).is_err());
    assert!(make_splits(&["a", "b"], 1, 1.0, 0).is_err());
}

fn record(id: &str, layers: usize) -> SegmentRecord {
    let n = 4;
    let tops = Array2::from_shape_fn((layers, n), |(t, c)| (10 + 3 * t + (c % 2) * t) as u32);
    SegmentRecord::new(
        id,
        (0..n).map(|c| 72.0 + c as f64 * 1e-3).collect(),
        (0..n).map(|c| -40.0 + c as f64 * 1e-3).collect(),
        tops,
    )
    .unwrap()
}

#[test]
fn usability_threshold_is_sixteen_tops() {
    let records: Vec<_> = [15, 16, 18]
        .iter()
        .map(|&l| record(&format!("r{l}"), l).thickness_record(2012).unwrap())
        .collect();
    let kept = filter_usable(records.clone(), MIN_USABLE_LAYERS);
    let ids: Vec<_> = kept.iter().map(|r| r.segment_id.as_str()).collect();
    assert_eq!(ids, ["r16", "r18"]);
    assert!(matches!(build_temporal_sample(&records[0]), Err(Error::InsufficientLayers { .. })));
}

#[test]
fn sample_layout_follows_year_labels() {
    let rec = record("r", 18).thickness_record(2012).unwrap();
    assert_eq!(rec.year_labels[0], 2011);
    let sample = build_temporal_sample(&rec).unwrap();
    assert_eq!(sample.frames.len(), 10);
    for node in 0..4 {
        for j in 0..5 {
            // target column j is year 2007 + j, i.e. thickness row 4 - j
            assert_eq!(sample.targets[[node, j]], rec.thickness[[4 - j, node]]);
        }
        for t in 0..10 {
            // frame t is year 1997 + t, i.e. thickness row 14 - t
            assert_eq!(sample.frames[t][[node, 2]], rec.thickness[[14 - t, node]]);
            assert_eq!(sample.frames[t][[node, 0]], rec.latitudes[node]);
        }
    }
}

#[test]
fn dataset_bytes_round_trip() {
    let ds = Dataset::new(2012, vec![record("a", 16), record("b", 17)]);
    let bytes = ds.to_bytes().unwrap();
    let back = Dataset::from_bytes(&bytes).unwrap();
    assert_eq!(back, ds);
    assert_eq!(back.to_bytes().unwrap(), bytes);
    for cut in [0, 3, bytes.len() / 2, bytes.len() - 1] {
        assert!(Dataset::from_bytes(&bytes[..cut]).is_err());
    }
    let mut wrong_version = bytes.clone();
    wrong_version[4] ^= 0xff;
    assert!(Dataset::from_bytes(&wrong_version).is_err());
}
