//! Integrated likelihood under a uniform prior against exact integer
//! arithmetic.

mod common;

use blockquery::{integrated_log_likelihood, BlockStats, Convention, Graph, Labeling, PriorConfig};
use common::*;

#[test]
fn uniform_prior_matches_binomial_closed_form() {
    let worst = closed_form_max_relative_error(300);
    assert!(worst < 1e-9, "relative error {worst}");
}

#[test]
fn single_block_by_hand() {
    // Three nodes, one undirected edge, one class: N = 3, e = 1, so the
    // score is -ln(4 * 3).
    let g = Graph::from_edges(3, Convention::undirected(), [(0, 1)]).unwrap();
    let stats = BlockStats::compute(&g, &Labeling::uniform(3, 1)).unwrap();
    let got = integrated_log_likelihood(&stats, &PriorConfig::default());
    assert!((got + 12f64.ln()).abs() < 1e-12);
    assert!((uniform_prior_closed_form(&g, &[0, 0, 0], 1) + 12f64.ln()).abs() < 1e-12);
}

#[test]
fn big_integer_logarithm() {
    let x = num_bigint::BigUint::from(10u32).pow(400);
    assert!((ln_big(&x) - 400.0 * 10f64.ln()).abs() / (400.0 * 10f64.ln()) < 1e-14);
    assert_eq!(ln_big(&num_bigint::BigUint::from(1u32)), 0.0);
}
