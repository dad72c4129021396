mod common;

use common::{finite_difference_check, tiny_arch, tiny_instance};
use firngraph::model::ModelKind;

const STEP: f64 = 1e-5;
const TOLERANCE: f64 = 1e-4;

fn check(kind: ModelKind, stacked: bool, seeds: &[u64]) {
    for &seed in seeds {
        let (params, input, target) = tiny_instance(&tiny_arch(kind, stacked), seed);
        let checks = finite_difference_check(&params, &input, &target, seed + 1000, STEP);
        assert!(!checks.is_empty());
        let worst = checks
            .iter()
            .max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
            .unwrap();
        assert!(
            worst.rel_error < TOLERANCE,
            "{kind} seed {seed}: {}[{}] analytic {} numeric {} rel {}",
            worst.name,
            worst.index,
            worst.analytic,
            worst.numeric,
            worst.rel_error
        );
    }
}

#[test]
fn gcn_lstm_gradients_match_finite_differences() {
    check(ModelKind::GcnLstm, false, &[1, 2, 3, 4]);
}

#[test]
fn stacked_gcn_lstm_gradients_match_finite_differences() {
    check(ModelKind::GcnLstm, true, &[5, 6, 7]);
}

#[test]
fn lstm_gradients_match_finite_differences() {
    check(ModelKind::Lstm, false, &[8, 9, 10]);
}

#[test]
fn gcn_gradients_match_finite_differences() {
    check(ModelKind::Gcn, false, &[11, 12, 13]);
}

#[test]
fn every_parameter_entry_is_checked() {
    let (params, input, target) = tiny_instance(&tiny_arch(ModelKind::GcnLstm, false), 1);
    let checks = finite_difference_check(&params, &input, &target, 7, STEP);
    // 2 taps of 3x12 and 2 taps of 3x12, bias 12, peepholes 3x3, head 3x4+4+4x5+5
    assert_eq!(checks.len(), 72 + 72 + 12 + 9 + 12 + 4 + 20 + 5);
    assert!(checks.iter().any(|c| c.name.contains("theta_h.1") && c.analytic.abs() > 1e-6));
}

#[test]
fn higher_order_filters_match_finite_differences() {
    for k in [3, 4] {
        for kind in [ModelKind::GcnLstm, ModelKind::Gcn] {
            let mut arch = tiny_arch(kind, false);
            arch.cheb_k = k;
            for seed in [20, 21, 22] {
                let (params, input, target) = tiny_instance(&arch, seed);
                let checks = finite_difference_check(&params, &input, &target, seed, STEP);
                let worst = checks.iter().map(|c| c.rel_error).fold(0.0, f64::max);
                assert!(worst < TOLERANCE, "{kind} K={k} seed {seed}: {worst}");
            }
        }
    }
}
