mod common;

use common::{end_to_end_f32, end_to_end_f64, layer_checks};

#[test]
fn every_layer_backward_matches_finite_differences() {
    for seed in [1, 2] {
        for c in layer_checks(seed) {
            assert!(
                c.max_rel < 1e-3,
                "{}: relative error {:.3e}",
                c.name,
                c.max_rel
            );
        }
    }
}

#[test]
fn small_networks_match_finite_differences_in_f64() {
    for c in end_to_end_f64(3) {
        assert!(
            c.max_rel < 1e-3,
            "{}: relative error {:.3e}",
            c.name,
            c.max_rel
        );
    }
}

#[test]
fn small_networks_match_finite_differences_in_f32() {
    for (c, checked, skipped) in end_to_end_f32(4) {
        assert!(
            c.max_rel < 1e-2,
            "{}: relative error {:.3e}",
            c.name,
            c.max_rel
        );
        assert!(
            skipped * 10 <= checked,
            "{}: {skipped} kinked points vs {checked}",
            c.name
        );
    }
}
