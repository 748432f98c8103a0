mod common;

use std::collections::BTreeSet;

use common::{
    brute_branches, dominant_oracle, extended_oracle, fixtures, graph_of, ids, paths, real_matrix,
};
use isored::bench::{generate_random_graph, random_admissible_update, ExperimentConfig, OpKind};
use isored::update::{DeltaOp, GraphDelta, StoredState, UpdateOptions};
use isored::{Error, WeightedDigraph};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

fn stochastic(n: usize, edges: &Value) -> WeightedDigraph {
    let mut g = graph_of(n, edges);
    g.mark_stochastic(1e-9).unwrap();
    g
}

fn branch_vertices(state: &StoredState) -> BTreeSet<Vec<usize>> {
    state
        .branches()
        .iter()
        .map(|b| b.vertices().to_vec())
        .collect()
}

/// Compares an updated state with the frozen post-update fixture.
fn check_case(case: &Value, n: usize) -> (StoredState, isored::update::UpdateOutcome) {
    let before = stochastic(n, &case["before"]);
    let mut state = StoredState::build(
        before,
        Some(&ids(&case["set_before"])),
        UpdateOptions::default(),
    )
    .unwrap();
    let delta = GraphDelta::from_json(&case["delta"].to_string()).unwrap();
    let outcome = state.apply_delta(&delta).unwrap();

    assert!(case["structural"].as_bool().unwrap());
    assert_eq!(
        state.structural().members(),
        ids(&case["set_after"]).as_slice()
    );
    assert_eq!(branch_vertices(&state), paths(&case["branches"]));
    let after = graph_of(n, &case["after"]);
    for (i, j, w) in after.edges() {
        assert!(
            (state.graph().weight(i, j) - w).norm() < 1e-15,
            "weight ({i}, {j})"
        );
    }
    assert_eq!(state.graph().n_edges(), after.n_edges());
    assert!((&state.extended().entries - real_matrix(&case["extended"])).amax() < 1e-12);
    let dominant = common::reals(&case["dominant"]);
    for (a, b) in state.eigen().real_vector().iter().zip(&dominant) {
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }
    (state, outcome)
}

#[test]
fn promotion_case() {
    let case = &fixtures()["updates"]["promote"];
    let (state, outcome) = check_case(case, 3);
    assert_eq!(outcome.promoted, vec![2]);
    assert!(!outcome.structural_fallback);
    assert!(state.check_equivalence().unwrap().holds(1e-12, 1e-8));
}

#[test]
fn edge_from_structural_vertex() {
    let case = &fixtures()["updates"]["from_structural"];
    let (state, outcome) = check_case(case, 3);
    assert!(outcome.promoted.is_empty());
    assert!(outcome.changes.deleted.is_empty());
    let added: BTreeSet<Vec<usize>> = outcome
        .changes
        .added
        .iter()
        .map(|b| b.vertices().to_vec())
        .collect();
    let expected: BTreeSet<Vec<usize>> = [vec![0, 2], vec![0, 2, 0]].into_iter().collect();
    assert_eq!(added, expected);
    assert!(state.check_equivalence().unwrap().holds(1e-12, 1e-8));
}

#[test]
fn removing_an_edge_on_one_branch() {
    let case = &fixtures()["updates"]["remove_single"];
    let (state, outcome) = check_case(case, 5);
    let deleted: Vec<Vec<usize>> = outcome
        .changes
        .deleted
        .iter()
        .map(|b| b.vertices().to_vec())
        .collect();
    assert_eq!(deleted, vec![ids(&case["removed_branch"])]);
    assert!(outcome.changes.added.is_empty());
    assert!(outcome.promoted.is_empty());
    assert!(state.check_equivalence().unwrap().holds(1e-12, 1e-8));
}

fn small_state() -> StoredState {
    let case = &fixtures()["updates"]["promote"];
    StoredState::build(
        stochastic(3, &case["before"]),
        Some(&[0]),
        UpdateOptions::default(),
    )
    .unwrap()
}

#[test]
fn inadmissible_deltas_leave_the_state_untouched() {
    let state = small_state();
    let bad = [
        // Vertex 1 (id 0) keeps no in-edge.
        vec![
            DeltaOp::RemoveEdge { i: 2, j: 0 },
            DeltaOp::RemoveEdge { i: 1, j: 0 },
        ],
        vec![DeltaOp::AddVertex],
        vec![DeltaOp::AddEdge { i: 0, j: 1, w: 0.5 }],
        vec![DeltaOp::AddEdge { i: 0, j: 0, w: 0.5 }],
        vec![DeltaOp::RemoveEdge { i: 0, j: 2 }],
        vec![DeltaOp::RemoveVertex { v: 7 }],
        vec![DeltaOp::AddEdge {
            i: 0,
            j: 2,
            w: -1.0,
        }],
    ];
    for ops in bad {
        let mut s = state.clone();
        assert!(
            s.apply_delta(&GraphDelta::new(ops.clone())).is_err(),
            "{ops:?}"
        );
        assert_eq!(s.graph(), state.graph());
        assert_eq!(s.branches(), state.branches());
        assert_eq!(s.extended(), state.extended());
    }
    assert!(matches!(
        GraphDelta::from_json(r#"[{"op": "remove_vertex", "v": 0}]"#),
        Err(Error::InvalidInput(_))
    ));
    assert!(GraphDelta::from_json(r#"[{"op": "teleport"}]"#).is_err());
}

#[test]
fn vertex_added_with_its_edges_is_one_atomic_delta() {
    let mut state = small_state();
    let delta = GraphDelta::from_json(
        r#"[{"op": "add_vertex"}, {"op": "add_edge", "i": 4, "j": 1, "w": 0.5},
            {"op": "add_edge", "i": 3, "j": 4, "w": 1.0}]"#,
    )
    .unwrap();
    let outcome = state.apply_delta(&delta).unwrap();
    assert_eq!(outcome.new_vertices, vec![3]);
    assert_eq!(state.graph().n_vertices(), 4);
    let eq = state.check_equivalence().unwrap();
    assert!(eq.holds(1e-12, 1e-8), "{eq:?}");
    let oracle = dominant_oracle(state.graph());
    for (a, b) in state.eigen().real_vector().iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-8);
    }
}

#[test]
fn empty_delta_costs_only_iteration_and_lift() {
    let mut state = small_state();
    let before = state.clone();
    let outcome = state.apply_delta(&GraphDelta::default()).unwrap();
    assert_eq!(outcome.report.costs.step3, 0);
    assert_eq!(outcome.report.costs.step4, 0);
    assert!(outcome.report.costs.step5 > 0);
    assert_eq!(state.branches(), before.branches());
    assert_eq!(state.extended(), before.extended());
}

#[test]
fn saved_state_round_trips_and_detects_corruption() {
    let cfg = ExperimentConfig {
        n: 12,
        ..Default::default()
    };
    let g = generate_random_graph(&cfg, 9).unwrap();
    let state = StoredState::build(g, None, UpdateOptions::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    state.save(dir.path()).unwrap();
    let loaded = StoredState::load(dir.path(), UpdateOptions::default()).unwrap();
    assert_eq!(loaded.branches(), state.branches());
    assert_eq!(loaded.extended(), state.extended());
    assert!(loaded.check_equivalence().unwrap().holds(1e-12, 1e-8));

    let mut bad = loaded.clone();
    let (i, j) = (
        state.structural().members()[0],
        state.structural().members()[0],
    );
    bad.corrupt_matrix_entry(i, j, state.extended().get(i, j) + 1e-6);
    let eq = bad.check_equivalence().unwrap();
    assert!(!eq.holds(1e-12, 1e-8));
    assert!(eq.matrix_deviation > 9e-7);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn incremental_equals_scratch(
        n in 5usize..30,
        degree in 2.0f64..3.0,
        p in 1usize..=3,
        kind in 0usize..5,
        seed in any::<u64>(),
    ) {
        let cfg = ExperimentConfig { n, avg_degree: degree, ..Default::default() };
        let g = generate_random_graph(&cfg, seed).unwrap();
        let state = StoredState::build(g, None, UpdateOptions::default()).unwrap();
        let kinds: &[OpKind] = match kind {
            0 => &[OpKind::AddEdge],
            1 => &[OpKind::RemoveEdge],
            2 => &[OpKind::AddVertex, OpKind::AddEdge],
            3 => &[OpKind::RemoveVertex],
            _ => &[OpKind::AddEdge, OpKind::RemoveEdge],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let Ok((delta, next, outcome)) =
            random_admissible_update(&state, p, kinds, kind == 4, &mut rng, 50)
        else {
            return Ok(());
        };

        // Promotions and drops explain every change of S.
        let mut expected: BTreeSet<usize> = state.structural().members().iter().copied().collect();
        expected.extend(outcome.promoted.iter().copied());
        for v in &outcome.dropped {
            expected.remove(v);
        }
        if !outcome.structural_fallback {
            let got: BTreeSet<usize> = next.structural().members().iter().copied().collect();
            prop_assert_eq!(got, expected, "delta {}", delta.to_json());
        }

        let members = next.structural().members();
        prop_assert_eq!(branch_vertices(&next), brute_branches(next.graph(), members));
        let oracle = extended_oracle(next.graph(), members);
        prop_assert!((&next.extended().entries - oracle).amax() < 1e-12);
        let dominant = dominant_oracle(next.graph());
        for (a, b) in next.eigen().real_vector().iter().zip(&dominant) {
            prop_assert!((a - b).abs() < 1e-8);
        }
        prop_assert!(next.check_equivalence().unwrap().holds(1e-12, 1e-8));
    }
}
