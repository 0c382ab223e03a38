mod common;

use common::synthetic::{closed_form_check, recovery_errors};

#[test]
fn spans_exact_means_online_is_exact() {
    let errors = recovery_errors(20);
    assert_eq!(errors.len(), 20);
    for (i, e) in errors.iter().enumerate() {
        assert!(*e <= 1e-9, "point {i}: e_u = {e:e}");
    }
}

#[test]
fn closed_form_solution_is_correct() {
    assert!(closed_form_check(&[0.7, 1.3]) <= 1e-12);
}
