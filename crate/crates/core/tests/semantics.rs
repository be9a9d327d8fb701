mod common;

use common::suites::{additivity_suite, closed_form_suite, volatility_suite};

#[test]
fn closed_forms_hold() {
    let fails = closed_form_suite();
    assert!(fails.is_empty(), "{fails:#?}");
}

#[test]
fn branches_add_up_and_disabled_ones_vanish() {
    let (worst, fails) = additivity_suite(200);
    assert!(fails.is_empty(), "{fails:#?}");
    assert!(worst <= 1e-9);
}

#[test]
fn volatility_mask_semantics() {
    let fails = volatility_suite();
    assert!(fails.is_empty(), "{fails:#?}");
}
