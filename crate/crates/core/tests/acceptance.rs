//! Acceptance criteria, one test each. Every test prints a single
//! PASS/FAIL line with the measured figures.

use qsd_core::verify::{self, CriterionResult, VerifyOptions};

fn report(r: CriterionResult) {
    println!("{}", r.line());
    assert!(r.passed, "criterion {} failed: {}", r.id, r.detail);
}

#[test]
fn criterion_01_brownian_critical_point() {
    report(verify::criterion_1());
}

#[test]
fn criterion_02_brownian_c1() {
    report(verify::criterion_2());
}

#[test]
fn criterion_03_brownian_mu_xi() {
    report(verify::criterion_3());
}

#[test]
fn criterion_04_erlang_worked_example() {
    report(verify::criterion_4());
}

#[test]
fn criterion_05_expansion_vs_transform() {
    report(verify::criterion_5());
}

#[test]
fn criterion_06_tauberian_agreement() {
    report(verify::criterion_6());
}

#[test]
fn criterion_07_rate_law() {
    report(verify::criterion_7());
}

#[test]
fn criterion_08_simulation_cross_check() {
    report(verify::criterion_8(&VerifyOptions::default()));
}

#[test]
fn criterion_09_density_inversion() {
    report(verify::criterion_9());
}

#[test]
fn criterion_10_property_suite() {
    report(verify::criterion_10());
}
