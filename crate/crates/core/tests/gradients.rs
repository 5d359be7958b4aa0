//! Analytic gradients against central finite differences.

#[path = "support/gradsuite.rs"]
mod gradsuite;

use gradsuite::Case;

fn assert_all(cases: Vec<Case>) {
    let failed: Vec<String> = cases
        .iter()
        .filter(|c| !c.passes())
        .map(|c| format!("{}: rel err {:.2e} at {} (tol {:.0e})", c.name, c.result.max_rel_err, c.result.worst, c.tol))
        .collect();
    assert!(failed.is_empty(), "{}", failed.join("\n"));
}

#[test]
fn mlp_activations_and_heads() {
    assert_all(gradsuite::mlp_cases());
}

#[test]
fn sr_input_gradient() {
    assert_all(gradsuite::sr_input_cases());
}

#[test]
fn slice_module_heads() {
    assert_all(gradsuite::slice_module_cases());
}

#[test]
fn end_to_end_pipeline() {
    assert_all(gradsuite::pipeline_cases());
}
