mod common;

use common::{
    c, fixtures, ids, random_chain, real_matrix, reals, stationary_oracle, taboo_oracle,
    transition_of,
};
use isored::markov::{
    band_check, reduced_kernel, simulate_stopped_chain, stationary_distribution, taboo_matrix,
    taboo_probability, verify_return_identity, verify_stationary_restriction, MarkovChain,
};
use isored::reduction::reduced_matrix_by_length;
use isored::structural::{compute_depths, find_structural_set};
use isored::Error;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn chain_of(name: &str) -> (MarkovChain, Vec<usize>, serde_json::Value) {
    let f = fixtures()[name].clone();
    let n = f["n"].as_u64().unwrap() as usize;
    let chain = MarkovChain::new(transition_of(n, &f["transition"])).unwrap();
    (chain, ids(&f["set"]), f)
}

#[test]
fn cycles_have_forced_return_times() {
    let two = MarkovChain::new(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
    let expected = reals(&fixtures()["two_cycle"]["taboo_11"]);
    for (k, &e) in expected.iter().enumerate() {
        assert_eq!(taboo_probability(&two, &[0], 0, 0, k + 1).unwrap(), e);
    }
    assert_eq!(verify_return_identity(&two, &[0]).unwrap().max(), 0.0);

    let three = MarkovChain::from_column_stochastic(&common::graph_of(
        3,
        &fixtures()["three_cycle"]["edges"],
    ))
    .unwrap();
    let expected = reals(&fixtures()["three_cycle"]["taboo_11"]);
    for (k, &e) in expected.iter().enumerate() {
        assert_eq!(taboo_probability(&three, &[0], 0, 0, k + 1).unwrap(), e);
    }
    assert_eq!(verify_return_identity(&three, &[0]).unwrap().max(), 0.0);
    assert_eq!(verify_stationary_restriction(&three, &[0]).unwrap(), 0.0);
}

#[test]
fn chain8_taboo_matrices() {
    let (chain, s, f) = chain_of("chain8");
    for (k, m) in f["taboo"].as_array().unwrap().iter().enumerate() {
        let ours = taboo_matrix(&chain, &s, k + 1).unwrap();
        assert!((ours - real_matrix(m)).amax() < 1e-12, "n = {}", k + 1);
    }
    let kernel = reduced_kernel(&chain, &s).unwrap();
    assert!((&kernel - real_matrix(&f["kernel"])).amax() < 1e-12);
    for a in 0..kernel.nrows() {
        assert!((kernel.row(a).sum() - 1.0).abs() < 1e-10);
    }
    let id = verify_return_identity(&chain, &s).unwrap();
    assert!(id.max() < 1e-12, "{id:?}");
    assert!(id.row_sum < 1e-10);
}

#[test]
fn chain10_stationary_restriction() {
    let (chain, s, f) = chain_of("chain10");
    let q = stationary_distribution(chain.transition()).unwrap();
    for (a, b) in q.iter().zip(reals(&f["stationary"])) {
        assert!((a - b).abs() < 1e-12);
    }
    let d = verify_stationary_restriction(&chain, &s).unwrap();
    assert!(d < 1e-10, "{d}");
    let restricted = reals(&f["restricted"]);
    let reduced = reals(&f["reduced_stationary"]);
    for (a, b) in restricted.iter().zip(&reduced) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn chain3_stopped_chain_frequencies() {
    let (chain, s, f) = chain_of("chain3");
    let kernel = real_matrix(&f["kernel"]);
    assert!((reduced_kernel(&chain, &s).unwrap() - &kernel).amax() < 1e-14);
    let sample = simulate_stopped_chain(&chain, &s, 1_000_000, 42, 0).unwrap();
    let band = band_check(&sample, &kernel);
    assert_eq!(band.entries, 4);
    assert!(band.fraction() >= 0.95, "{band:?}");
    assert!(band.max_total_variation < 0.01);

    let again = simulate_stopped_chain(&chain, &s, 1_000_000, 42, 0).unwrap();
    assert_eq!(sample.to_json(), again.to_json());
}

#[test]
fn invalid_chains_and_sets() {
    assert!(MarkovChain::new(DMatrix::from_row_slice(2, 2, &[0.5, 0.4, 1.0, 0.0])).is_err());
    assert!(MarkovChain::new(DMatrix::from_row_slice(2, 2, &[1.5, -0.5, 1.0, 0.0])).is_err());
    let lazy = MarkovChain::new(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.5, 0.5])).unwrap();
    assert!(matches!(
        verify_return_identity(&lazy, &[0]),
        Err(Error::InvalidMode(_))
    ));
    assert!(verify_return_identity(&lazy, &[0, 1]).is_ok());

    let split = MarkovChain::new(DMatrix::identity(2, 2)).unwrap();
    assert!(matches!(
        stationary_distribution(split.transition()),
        Err(Error::Ambiguous)
    ));

    // State 1 is absorbing and never reaches the set {0}.
    let trap = MarkovChain::new(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 1.0])).unwrap();
    assert!(matches!(
        simulate_stopped_chain(&trap, &[0], 100, 1, 1),
        Err(Error::StuckSimulation(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn taboo_equals_branch_sums(n in 3usize..13, degree in 1.5f64..3.0, seed in any::<u64>(), extra in any::<u16>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_chain(&mut rng, n, degree);
        let chain = MarkovChain::new(p.clone()).unwrap();
        let graph = chain.to_graph();
        let mut s = find_structural_set(&graph, c(1.0), 1e-12).unwrap().members().to_vec();
        for v in 0..n {
            if extra >> (v % 16) & 1 == 1 && !s.contains(&v) {
                s.push(v);
            }
        }
        s.sort_unstable();
        let set = compute_depths(&graph, &s, c(1.0), 1e-12).unwrap();
        let longest = n - s.len() + 1;
        for len in 1..=longest + 1 {
            let oracle = taboo_oracle(&p, &s, len);
            let dp = taboo_matrix(&chain, &s, len).unwrap();
            let branches = reduced_matrix_by_length(&graph, &set, c(1.0), len, 1e-12).unwrap();
            prop_assert!((&dp - &oracle).amax() < 1e-12);
            prop_assert!((branches.map(|z| z.re) - &oracle).amax() < 1e-12);
        }
        prop_assert!(verify_return_identity(&chain, &s).unwrap().max() < 1e-12);
        let kernel = reduced_kernel(&chain, &s).unwrap();
        for a in 0..s.len() {
            prop_assert!((kernel.row(a).sum() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn stationary_restriction_matches_reduced_chain(n in 3usize..11, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_chain(&mut rng, n, 2.5);
        let chain = MarkovChain::new(p.clone()).unwrap();
        let s = find_structural_set(&chain.to_graph(), c(1.0), 1e-12).unwrap().members().to_vec();
        let q = stationary_oracle(&p);
        let ours = stationary_distribution(&p).unwrap();
        prop_assert!((&ours - &q).amax() < 1e-12);
        prop_assert!(verify_stationary_restriction(&chain, &s).unwrap() < 1e-10);
    }
}
