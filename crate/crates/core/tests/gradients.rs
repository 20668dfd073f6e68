mod common;

use std::collections::BTreeSet;

use common::{grad_case, layer_kinds, max_gradient_error};

#[test]
fn random_networks_match_finite_differences() {
    let mut kinds = BTreeSet::new();
    for i in 0..40 {
        let case = grad_case(i);
        kinds.extend(layer_kinds(&case.spec));
        let err = max_gradient_error(&case, 1e-6, 1e-8);
        assert!(err.checked > 0);
        assert!(err.relative <= 1e-3, "case {i} ({:?}): relative error {:e}", case.spec.layers, err.relative);
    }
    let all: BTreeSet<_> = ["dense", "relu", "dropout", "batch_norm", "embedding", "softmax", "sigmoid"]
        .into_iter()
        .collect();
    assert_eq!(kinds, all);
}
