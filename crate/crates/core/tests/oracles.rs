//! Brute-force oracles against the optimized metric, scoring and report
//! paths on small random instances.

mod common;

use common::ORACLE_CHECKS;

const SEEDS: u64 = 200;

fn run(name: &str) {
    let (_, check) = ORACLE_CHECKS.iter().find(|(n, _)| *n == name).unwrap();
    for seed in 0..SEEDS {
        if let Err(e) = check(seed) {
            panic!("{name}: {e}");
        }
    }
}

#[test]
fn shape_matches_counting_oracle() {
    run("shape");
}

#[test]
fn dcr_matches_all_pairs_oracle() {
    run("dcr_rate");
}

#[test]
fn auc_matches_pair_counting() {
    run("roc_auc");
}

#[test]
fn quartiles_match_sorting_oracle() {
    run("quartile_summary");
}

#[test]
fn cost_matches_hand_computation() {
    for seed in 0..SEEDS {
        common::cost_matches_hand(seed).unwrap();
    }
}
