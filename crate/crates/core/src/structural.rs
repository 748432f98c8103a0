//! Structural sets: validation, greedy search, the depth hierarchy and the
//! nilpotency characterisation of the complement block.
//!
//! A nonempty vertex set `S` is λ-structural when every cycle that is not a
//! loop meets `S`, and no vertex outside `S` carries a loop of weight `λ`.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::WeightedDigraph;

/// Outcome of [`validate_structural`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StructuralCheck {
    Valid,
    /// A cycle (listed without repeating its first vertex) that avoids `S`.
    NonLoopCycle(Vec<usize>),
    /// A vertex outside `S` whose loop weight equals λ.
    LoopAtLambda(usize),
}

impl StructuralCheck {
    pub fn is_valid(&self) -> bool {
        matches!(self, StructuralCheck::Valid)
    }
}

impl fmt::Display for StructuralCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StructuralCheck::Valid => write!(f, "valid"),
            StructuralCheck::NonLoopCycle(c) => write!(f, "cycle {c:?} avoids the set"),
            StructuralCheck::LoopAtLambda(v) => {
                write!(
                    f,
                    "vertex {v} outside the set has loop weight equal to lambda"
                )
            }
        }
    }
}

/// A validated λ-structural set together with its depth hierarchy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructuralSet {
    members: Vec<usize>,
    in_set: Vec<bool>,
    lambda: Complex64,
    depth_of: Vec<Option<usize>>,
    max_depth: usize,
}

impl StructuralSet {
    /// Sorted member ids.
    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, v: usize) -> bool {
        self.in_set.get(v).copied().unwrap_or(false)
    }

    pub fn lambda(&self) -> Complex64 {
        self.lambda
    }

    /// Depth of `v`; `None` for removed or unknown vertices.
    pub fn depth(&self, v: usize) -> Option<usize> {
        self.depth_of.get(v).copied().flatten()
    }

    /// Depth of `(G, S)`, the largest vertex depth.
    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    /// Membership mask indexed by vertex id.
    pub fn mask(&self) -> &[bool] {
        &self.in_set
    }

    /// Live vertices outside the set, increasing.
    pub fn complement(&self) -> Vec<usize> {
        self.depth_of
            .iter()
            .enumerate()
            .filter(|&(v, d)| d.is_some() && !self.in_set[v])
            .map(|(v, _)| v)
            .collect()
    }

    /// `levels()[k]` lists the vertices of depth exactly `k`.
    pub fn levels(&self) -> Vec<Vec<usize>> {
        let mut levels = vec![Vec::new(); self.max_depth + 1];
        for (v, d) in self.depth_of.iter().enumerate() {
            if let Some(d) = d {
                levels[*d].push(v);
            }
        }
        levels
    }

    /// `|S_j|` for `j = 0..=max_depth`, where `S_j` holds the vertices of depth `≤ j`.
    pub fn cumulative_sizes(&self) -> Vec<usize> {
        let mut acc = 0;
        self.levels()
            .iter()
            .map(|l| {
                acc += l.len();
                acc
            })
            .collect()
    }

    /// Live vertices ordered by increasing depth, ties by id.
    pub fn depth_order(&self) -> Vec<usize> {
        self.levels().concat()
    }
}

fn membership(graph: &WeightedDigraph, s: &[usize]) -> Result<Vec<bool>> {
    if s.is_empty() {
        return Err(Error::invalid("structural set must be nonempty"));
    }
    let mut mask = vec![false; graph.capacity()];
    for &v in s {
        graph.check_vertex(v)?;
        mask[v] = true;
    }
    Ok(mask)
}

/// Finds a non-loop cycle inside the subgraph induced by the vertices with
/// `mask[v] == false`.
fn find_cycle_outside(graph: &WeightedDigraph, mask: &[bool]) -> Option<Vec<usize>> {
    cycles_outside(graph, mask, true).into_iter().next()
}

/// One cycle per DFS back edge in the subgraph induced by unmasked vertices,
/// ignoring loops. With `first_only` the search stops at the first cycle.
fn cycles_outside(graph: &WeightedDigraph, mask: &[bool], first_only: bool) -> Vec<Vec<usize>> {
    const WHITE: u8 = 0;
    const GRAY: u8 = 1;
    const BLACK: u8 = 2;
    let n = graph.capacity();
    let mut color = vec![WHITE; n];
    let mut cycles = Vec::new();
    let succ: Vec<Vec<usize>> = (0..n)
        .map(|v| {
            if !graph.is_alive(v) || mask[v] {
                Vec::new()
            } else {
                graph
                    .successors(v)
                    .map(|(w, _)| w)
                    .filter(|&w| w != v && !mask[w])
                    .collect()
            }
        })
        .collect();

    for root in graph.vertices() {
        if mask[root] || color[root] != WHITE {
            continue;
        }
        let mut stack: Vec<(usize, usize)> = vec![(root, 0)];
        color[root] = GRAY;
        while let Some(&mut (v, ref mut next)) = stack.last_mut() {
            if let Some(&w) = succ[v].get(*next) {
                *next += 1;
                match color[w] {
                    WHITE => {
                        color[w] = GRAY;
                        stack.push((w, 0));
                    }
                    GRAY => {
                        let start = stack.iter().position(|&(x, _)| x == w).unwrap();
                        cycles.push(stack[start..].iter().map(|&(x, _)| x).collect());
                        if first_only {
                            return cycles;
                        }
                    }
                    _ => {}
                }
            } else {
                color[v] = BLACK;
                stack.pop();
            }
        }
    }
    cycles
}

fn loop_hits(w: Complex64, lambda: Complex64, tol: f64) -> bool {
    (w - lambda).norm() <= tol
}

/// Checks both structural-set conditions for `s` at `lambda`.
///
/// Loop weights are compared with `lambda` up to the absolute tolerance `tol`.
pub fn validate_structural(
    graph: &WeightedDigraph,
    s: &[usize],
    lambda: Complex64,
    tol: f64,
) -> Result<StructuralCheck> {
    let mask = membership(graph, s)?;
    if let Some(c) = find_cycle_outside(graph, &mask) {
        return Ok(StructuralCheck::NonLoopCycle(c));
    }
    for v in graph.vertices() {
        if !mask[v] && loop_hits(graph.loop_weight(v), lambda, tol) {
            return Ok(StructuralCheck::LoopAtLambda(v));
        }
    }
    Ok(StructuralCheck::Valid)
}

/// Greedy structural-set search.
///
/// Vertices whose loop weight equals `lambda` are forced in first. Then, while
/// the complement still contains a non-loop cycle, the vertex lying on the most
/// DFS-detected cycles joins the set (ties go to the smaller id). A final pass
/// drops members that no longer close any cycle. The result is valid but not
/// necessarily of minimum size.
pub fn find_structural_set(
    graph: &WeightedDigraph,
    lambda: Complex64,
    tol: f64,
) -> Result<StructuralSet> {
    if graph.n_vertices() == 0 {
        return Err(Error::invalid("graph has no vertices"));
    }
    let n = graph.capacity();
    let mut mask = vec![false; n];
    let mut forced = vec![false; n];
    for v in graph.vertices() {
        if loop_hits(graph.loop_weight(v), lambda, tol) {
            mask[v] = true;
            forced[v] = true;
        }
    }

    let mut added = Vec::new();
    loop {
        let cycles = cycles_outside(graph, &mask, false);
        if cycles.is_empty() {
            break;
        }
        let mut hits = vec![0usize; n];
        for c in &cycles {
            for &v in c {
                hits[v] += 1;
            }
        }
        let best = (0..n)
            .max_by_key(|&v| (hits[v], std::cmp::Reverse(v)))
            .unwrap();
        mask[best] = true;
        added.push(best);
    }

    // Drop redundant members, most recent first.
    for &v in added.iter().rev() {
        let members = mask.iter().filter(|&&m| m).count();
        if members > 1 && !closes_cycle(graph, &mask, v) {
            mask[v] = false;
        }
    }

    if !mask.iter().any(|&m| m) {
        let first = graph.vertices().next().unwrap();
        mask[first] = true;
    }
    let members: Vec<usize> = (0..n).filter(|&v| mask[v]).collect();
    compute_depths(graph, &members, lambda, tol)
}

/// Whether `v` would lie on a non-loop cycle if it left the set.
fn closes_cycle(graph: &WeightedDigraph, mask: &[bool], v: usize) -> bool {
    let mut seen = vec![false; graph.capacity()];
    let mut stack: Vec<usize> = Vec::new();
    for (w, _) in graph.successors(v) {
        if w != v && !mask[w] && !seen[w] {
            seen[w] = true;
            stack.push(w);
        }
    }
    while let Some(x) = stack.pop() {
        for (w, _) in graph.successors(x) {
            if w == v {
                return true;
            }
            if w != x && !mask[w] && !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    false
}

/// Builds the depth hierarchy of `(graph, s)`.
///
/// Members of `s` have depth 0. Any other vertex has depth one more than the
/// deepest of its out-neighbours (its own loop excluded), so a vertex whose
/// out-neighbours all lie in `s` has depth 1.
pub fn compute_depths(
    graph: &WeightedDigraph,
    s: &[usize],
    lambda: Complex64,
    tol: f64,
) -> Result<StructuralSet> {
    let check = validate_structural(graph, s, lambda, tol)?;
    if !check.is_valid() {
        return Err(Error::NotStructural(check));
    }
    let n = graph.capacity();
    let mask = membership(graph, s)?;
    let mut depth_of: Vec<Option<usize>> = vec![None; n];
    for v in graph.vertices() {
        if mask[v] {
            depth_of[v] = Some(0);
        }
    }
    // Post-order over the acyclic complement.
    for root in graph.vertices() {
        if depth_of[root].is_some() {
            continue;
        }
        let mut stack = vec![(root, false)];
        while let Some((v, expanded)) = stack.pop() {
            if depth_of[v].is_some() {
                continue;
            }
            if expanded {
                let d = graph
                    .successors(v)
                    .filter(|&(w, _)| w != v)
                    .map(|(w, _)| depth_of[w].expect("successor depth resolved"))
                    .max()
                    .map_or(1, |d| d + 1);
                depth_of[v] = Some(d);
            } else {
                stack.push((v, true));
                for (w, _) in graph.successors(v) {
                    if w != v && depth_of[w].is_none() {
                        stack.push((w, false));
                    }
                }
            }
        }
    }
    let max_depth = depth_of.iter().flatten().copied().max().unwrap_or(0);
    let mut members: Vec<usize> = s.to_vec();
    members.sort_unstable();
    members.dedup();
    Ok(StructuralSet {
        members,
        in_set: mask,
        lambda,
        depth_of,
        max_depth,
    })
}

/// Smallest `k` with `(M_S̄)^k = 0`, judged on the sparsity pattern of the
/// complement block (loops included); `None` when no power vanishes. An empty
/// complement gives `Some(0)`.
pub fn nilpotency_index(graph: &WeightedDigraph, s: &[usize]) -> Option<usize> {
    let mut mask = vec![false; graph.capacity()];
    for &v in s {
        if v < mask.len() {
            mask[v] = true;
        }
    }
    let comp: Vec<usize> = graph.vertices().filter(|&v| !mask[v]).collect();
    let m = comp.len();
    if m == 0 {
        return Some(0);
    }
    let mut pos = vec![usize::MAX; graph.capacity()];
    for (k, &v) in comp.iter().enumerate() {
        pos[v] = k;
    }
    let words = m.div_ceil(64);
    let mut adj = vec![vec![0u64; words]; m];
    for (a, &v) in comp.iter().enumerate() {
        for (w, _) in graph.successors(v) {
            let b = pos[w];
            if b != usize::MAX {
                adj[a][b / 64] |= 1 << (b % 64);
            }
        }
    }
    let is_zero = |p: &[Vec<u64>]| p.iter().all(|r| r.iter().all(|&x| x == 0));
    let mut power = adj.clone();
    let mut k = 1;
    while !is_zero(&power) {
        if k > m {
            return None;
        }
        let mut next = vec![vec![0u64; words]; m];
        for (row, out) in power.iter().zip(next.iter_mut()) {
            for (wi, &word) in row.iter().enumerate() {
                let mut bits = word;
                while bits != 0 {
                    let b = wi * 64 + bits.trailing_zeros() as usize;
                    bits &= bits - 1;
                    for (o, &x) in out.iter_mut().zip(&adj[b]) {
                        *o |= x;
                    }
                }
            }
        }
        power = next;
        k += 1;
    }
    Some(k)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = 1e-12;

    fn one() -> Complex64 {
        Complex64::new(1.0, 0.0)
    }

    /// 1→2→3→1 with unit weights (zero-based ids 0, 1, 2).
    fn three_cycle() -> WeightedDigraph {
        WeightedDigraph::from_edges(3, [(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0)]).unwrap()
    }

    /// 4→3→2→1 (zero-based 3→2→1→0).
    fn path4() -> WeightedDigraph {
        WeightedDigraph::from_edges(4, [(3, 2, 1.0), (2, 1, 1.0), (1, 0, 1.0)]).unwrap()
    }

    #[test]
    fn validate_three_cycle() {
        let g = three_cycle();
        assert!(validate_structural(&g, &[0], one(), TOL)
            .unwrap()
            .is_valid());
        assert!(validate_structural(&g, &[1], one(), TOL)
            .unwrap()
            .is_valid());
        assert!(matches!(
            validate_structural(&g, &[], one(), TOL),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            validate_structural(&g, &[7], one(), TOL),
            Err(Error::MissingVertex(7))
        ));
    }

    #[test]
    fn cycle_witness_avoids_set() {
        let g = WeightedDigraph::from_edges(
            4,
            [
                (0, 1, 1.0),
                (1, 2, 1.0),
                (2, 1, 1.0),
                (2, 3, 1.0),
                (3, 0, 1.0),
            ],
        )
        .unwrap();
        match validate_structural(&g, &[0], one(), TOL).unwrap() {
            StructuralCheck::NonLoopCycle(c) => {
                let mut c = c;
                c.sort();
                assert_eq!(c, vec![1, 2]);
            }
            other => panic!("expected cycle, got {other:?}"),
        }
    }

    #[test]
    fn loop_at_lambda_witness() {
        let mut g = three_cycle();
        g.add_edge(1, 1, 1.0).unwrap();
        assert_eq!(
            validate_structural(&g, &[0], one(), TOL).unwrap(),
            StructuralCheck::LoopAtLambda(1)
        );
        // Any other lambda is fine: loops never count as cycles.
        assert!(validate_structural(&g, &[0], Complex64::new(2.0, 0.0), TOL)
            .unwrap()
            .is_valid());
    }

    #[test]
    fn find_on_three_cycle_gives_singleton() {
        let s = find_structural_set(&three_cycle(), one(), TOL).unwrap();
        assert_eq!(s.members(), &[0]);
    }

    #[test]
    fn find_on_dag_gives_single_vertex() {
        let s = find_structural_set(&path4(), one(), TOL).unwrap();
        assert_eq!(s.len(), 1);
        assert!(validate_structural(&path4(), s.members(), one(), TOL)
            .unwrap()
            .is_valid());
    }

    #[test]
    fn find_forces_loops_at_lambda() {
        let g =
            WeightedDigraph::from_edges(3, [(0, 0, 1.0), (1, 1, 1.0), (2, 2, 1.0), (0, 1, 0.5)])
                .unwrap();
        let s = find_structural_set(&g, one(), TOL).unwrap();
        assert_eq!(s.members(), &[0, 1, 2]);
    }

    #[test]
    fn find_breaks_overlapping_cycles() {
        // Two triangles sharing vertex 2, plus a 2-cycle 4↔5.
        let g = WeightedDigraph::from_edges(
            6,
            [
                (0, 1, 1.0),
                (1, 2, 1.0),
                (2, 0, 1.0),
                (2, 3, 1.0),
                (3, 4, 1.0),
                (4, 2, 1.0),
                (4, 5, 1.0),
                (5, 4, 1.0),
            ],
        )
        .unwrap();
        let s = find_structural_set(&g, one(), TOL).unwrap();
        assert!(validate_structural(&g, s.members(), one(), TOL)
            .unwrap()
            .is_valid());
        assert!(
            s.len() <= 2,
            "greedy should pick 2 and 4, got {:?}",
            s.members()
        );
    }

    #[test]
    fn depths_three_cycle() {
        let s = compute_depths(&three_cycle(), &[0], one(), TOL).unwrap();
        assert_eq!(s.depth(0), Some(0));
        assert_eq!(s.depth(2), Some(1));
        assert_eq!(s.depth(1), Some(2));
        assert_eq!(s.max_depth(), 2);
        assert_eq!(s.cumulative_sizes(), vec![1, 2, 3]);
        assert_eq!(s.depth_order(), vec![0, 2, 1]);
    }

    #[test]
    fn depths_path_and_full_set() {
        let s = compute_depths(&path4(), &[0], one(), TOL).unwrap();
        for v in 0..4 {
            assert_eq!(s.depth(v), Some(v));
        }
        let all = compute_depths(&three_cycle(), &[0, 1, 2], one(), TOL).unwrap();
        assert_eq!(all.max_depth(), 0);
        assert!(all.complement().is_empty());
    }

    #[test]
    fn depths_reject_non_structural() {
        let g = WeightedDigraph::from_edges(3, [(1, 2, 1.0), (2, 1, 1.0)]).unwrap();
        assert!(matches!(
            compute_depths(&g, &[0], one(), TOL),
            Err(Error::NotStructural(StructuralCheck::NonLoopCycle(_)))
        ));
    }

    #[test]
    fn depth_ignores_own_loop() {
        let mut g = three_cycle();
        g.add_edge(2, 2, 0.5).unwrap();
        let s = compute_depths(&g, &[0], one(), TOL).unwrap();
        assert_eq!(s.depth(2), Some(1));
    }

    #[test]
    fn nilpotency_examples() {
        assert_eq!(nilpotency_index(&three_cycle(), &[0]), Some(2));
        assert_eq!(nilpotency_index(&three_cycle(), &[0, 1, 2]), Some(0));
        assert_eq!(nilpotency_index(&path4(), &[0]), Some(3));
        let mut g = three_cycle();
        g.add_edge(1, 1, 0.5).unwrap();
        assert_eq!(nilpotency_index(&g, &[0]), None);
        assert_eq!(nilpotency_index(&three_cycle(), &[]), None);
    }

    #[test]
    fn tombstones_are_ignored() {
        let mut g = three_cycle();
        g.remove_vertex(1).unwrap();
        let s = find_structural_set(&g, one(), TOL).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.depth(1), None);
        assert_eq!(nilpotency_index(&g, &[0]), Some(1));
    }
}
