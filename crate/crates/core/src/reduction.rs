//! Branches of `(G, S)` and the reduced matrices built from them.
//!
//! A branch is a path `(i_0, …, i_p)` whose interior vertices all lie outside
//! `S`. Its weight at `λ` is
//!
//! ```text
//! ω(β, λ) = ω(i_0, i_1) · Π_{ℓ=1}^{p-1} ω(i_ℓ, i_{ℓ+1}) / (λ − ω(i_ℓ, i_ℓ))
//! ```
//!
//! and `R_ij(G, S, λ)` sums the weights of all branches from `i` to `j`. The
//! reduced matrix is the `S × S` block of these sums; the extended reduced
//! matrix keeps every pair `i, j ∈ V` (stochastic case, `λ = 1`).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::graph::WeightedDigraph;
use crate::structural::StructuralSet;

/// A branch, identified by its vertex sequence.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Branch(Arc<[usize]>);

impl Branch {
    /// Wraps a vertex sequence of at least two vertices.
    pub fn new(vertices: impl Into<Arc<[usize]>>) -> Self {
        let v = vertices.into();
        assert!(v.len() >= 2, "a branch has length at least 1");
        Branch(v)
    }

    pub fn vertices(&self) -> &[usize] {
        &self.0
    }

    /// Number of edges `p`.
    pub fn len(&self) -> usize {
        self.0.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn start(&self) -> usize {
        self.0[0]
    }

    pub fn end(&self) -> usize {
        self.0[self.0.len() - 1]
    }

    pub fn interior(&self) -> &[usize] {
        &self.0[1..self.0.len() - 1]
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.0.windows(2).map(|w| (w[0], w[1]))
    }

    pub fn contains_edge(&self, i: usize, j: usize) -> bool {
        self.edges().any(|e| e == (i, j))
    }

    /// Whether the sequence is a path: interior vertices pairwise distinct and
    /// distinct from both endpoints (the endpoints may coincide).
    pub fn is_simple(&self) -> bool {
        let inner = self.interior();
        let mut seen = BTreeSet::new();
        for &v in inner {
            if v == self.start() || v == self.end() || !seen.insert(v) {
                return false;
            }
        }
        true
    }
}

impl fmt::Debug for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Branch{:?}", &*self.0)
    }
}

impl Serialize for Branch {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.0.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Branch {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<usize>::deserialize(d)?;
        if v.len() < 2 {
            return Err(serde::de::Error::custom(
                "branch needs at least two vertices",
            ));
        }
        Ok(Branch(v.into()))
    }
}

/// All branches of `(G, S)` with start, end, endpoint-pair and interior indices.
///
/// Equality compares the branch collections only; the indices are derived.
#[derive(Clone, Debug, Default)]
pub struct BranchSet {
    branches: BTreeSet<Branch>,
    by_endpoints: BTreeMap<(usize, usize), BTreeSet<Branch>>,
    from: Vec<BTreeSet<Branch>>,
    to: Vec<BTreeSet<Branch>>,
    through: Vec<BTreeSet<Branch>>,
}

impl BranchSet {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            from: vec![BTreeSet::new(); n],
            to: vec![BTreeSet::new(); n],
            through: vec![BTreeSet::new(); n],
            ..Default::default()
        }
    }

    pub fn capacity(&self) -> usize {
        self.from.len()
    }

    /// Grows the per-vertex indices to cover ids `< n`.
    pub fn ensure_capacity(&mut self, n: usize) {
        if n > self.from.len() {
            self.from.resize(n, BTreeSet::new());
            self.to.resize(n, BTreeSet::new());
            self.through.resize(n, BTreeSet::new());
        }
    }

    pub fn len(&self) -> usize {
        self.branches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.branches.is_empty()
    }

    pub fn contains(&self, b: &Branch) -> bool {
        self.branches.contains(b)
    }

    /// Branches in lexicographic order.
    pub fn iter(&self) -> impl Iterator<Item = &Branch> {
        self.branches.iter()
    }

    pub fn insert(&mut self, b: Branch) -> bool {
        if self.branches.contains(&b) {
            return false;
        }
        let top = b.vertices().iter().copied().max().unwrap();
        self.ensure_capacity(top + 1);
        self.by_endpoints
            .entry((b.start(), b.end()))
            .or_default()
            .insert(b.clone());
        self.from[b.start()].insert(b.clone());
        self.to[b.end()].insert(b.clone());
        for &v in b.interior() {
            self.through[v].insert(b.clone());
        }
        self.branches.insert(b);
        true
    }

    pub fn remove(&mut self, b: &Branch) -> bool {
        if !self.branches.remove(b) {
            return false;
        }
        let key = (b.start(), b.end());
        if let Some(bucket) = self.by_endpoints.get_mut(&key) {
            bucket.remove(b);
            if bucket.is_empty() {
                self.by_endpoints.remove(&key);
            }
        }
        self.from[b.start()].remove(b);
        self.to[b.end()].remove(b);
        for &v in b.interior() {
            self.through[v].remove(b);
        }
        true
    }

    /// `𝓑_ij`.
    pub fn between(&self, i: usize, j: usize) -> impl Iterator<Item = &Branch> {
        self.by_endpoints.get(&(i, j)).into_iter().flatten()
    }

    pub fn has_branch_between(&self, i: usize, j: usize) -> bool {
        self.by_endpoints.contains_key(&(i, j))
    }

    /// `𝓑_{i*}`.
    pub fn starting_at(&self, i: usize) -> &BTreeSet<Branch> {
        static EMPTY: BTreeSet<Branch> = BTreeSet::new();
        self.from.get(i).unwrap_or(&EMPTY)
    }

    /// `𝓑_{*j}`.
    pub fn ending_at(&self, j: usize) -> &BTreeSet<Branch> {
        static EMPTY: BTreeSet<Branch> = BTreeSet::new();
        self.to.get(j).unwrap_or(&EMPTY)
    }

    /// `𝓑_{*i*}`: branches having `i` as an interior vertex.
    pub fn through(&self, i: usize) -> &BTreeSet<Branch> {
        static EMPTY: BTreeSet<Branch> = BTreeSet::new();
        self.through.get(i).unwrap_or(&EMPTY)
    }

    /// The largest of the per-vertex bucket sizes `|𝓑_{*i*}|`, `|𝓑_{*i}|`, `|𝓑_{i*}|`.
    pub fn m_statistic(&self) -> usize {
        self.from
            .iter()
            .chain(&self.to)
            .chain(&self.through)
            .map(BTreeSet::len)
            .max()
            .unwrap_or(0)
    }

    /// Longest branch length, 0 for an empty set.
    pub fn max_len(&self) -> usize {
        self.branches.iter().map(Branch::len).max().unwrap_or(0)
    }

    /// JSON manifest: a list of one-based vertex sequences.
    pub fn to_manifest(&self) -> String {
        let seqs: Vec<Vec<usize>> = self
            .branches
            .iter()
            .map(|b| b.vertices().iter().map(|v| v + 1).collect())
            .collect();
        serde_json::to_string(&serde_json::json!({ "branches": seqs }))
            .expect("manifest serialization cannot fail")
    }

    pub fn from_manifest(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Manifest {
            branches: Vec<Vec<usize>>,
        }
        let doc: Manifest = serde_json::from_str(text)?;
        let mut set = BranchSet::default();
        for seq in doc.branches {
            if seq.len() < 2 || seq.contains(&0) {
                return Err(Error::invalid("malformed branch in manifest"));
            }
            set.insert(Branch::new(seq.iter().map(|v| v - 1).collect::<Vec<_>>()));
        }
        Ok(set)
    }
}

impl PartialEq for BranchSet {
    fn eq(&self, other: &Self) -> bool {
        self.branches == other.branches
    }
}

impl FromIterator<Branch> for BranchSet {
    fn from_iter<T: IntoIterator<Item = Branch>>(iter: T) -> Self {
        let mut set = BranchSet::default();
        for b in iter {
            set.insert(b);
        }
        set
    }
}

/// Every branch starting at `start`, by depth-first search that only descends
/// into vertices outside the set.
fn branches_from(graph: &WeightedDigraph, in_set: &[bool], start: usize) -> Vec<Branch> {
    let mut out = Vec::new();
    let mut path = vec![start];
    let mut on_path = vec![false; graph.capacity()];
    on_path[start] = true;
    // Iterator positions per path vertex.
    let succ = |v: usize| -> Vec<usize> { graph.successors(v).map(|(w, _)| w).collect() };
    let mut frames: Vec<(Vec<usize>, usize)> = vec![(succ(start), 0)];
    while let Some((next, pos)) = frames.last_mut() {
        let Some(&w) = next.get(*pos) else {
            frames.pop();
            let v = path.pop().unwrap();
            on_path[v] = false;
            continue;
        };
        *pos += 1;
        let depth = path.len();
        let here = *path.last().unwrap();
        if depth == 1 {
            // First edge: any out-edge, loops included.
            path.push(w);
            out.push(Branch::new(path.clone()));
            path.pop();
            if w != start && !in_set[w] {
                path.push(w);
                on_path[w] = true;
                frames.push((succ(w), 0));
            }
            continue;
        }
        if w == here || (on_path[w] && w != start) {
            continue;
        }
        path.push(w);
        out.push(Branch::new(path.clone()));
        path.pop();
        if w != start && !in_set[w] {
            path.push(w);
            on_path[w] = true;
            frames.push((succ(w), 0));
        }
    }
    out
}

/// Enumerates all branches of `(graph, S)` for a membership mask.
pub fn enumerate_branches_masked(graph: &WeightedDigraph, in_set: &[bool]) -> BranchSet {
    let starts: Vec<usize> = graph.vertices().collect();
    let per_start: Vec<Vec<Branch>> = starts
        .par_iter()
        .map(|&s| branches_from(graph, in_set, s))
        .collect();
    let mut set = BranchSet::with_capacity(graph.capacity());
    for b in per_start.into_iter().flatten() {
        set.insert(b);
    }
    set
}

/// Enumerates all branches of `(graph, structural)`.
pub fn enumerate_branches(graph: &WeightedDigraph, structural: &StructuralSet) -> BranchSet {
    let mut mask = structural.mask().to_vec();
    mask.resize(graph.capacity(), false);
    enumerate_branches_masked(graph, &mask)
}

/// `ω(β, λ)`. Interior denominators within `tol` of zero are an error.
pub fn branch_weight(
    graph: &WeightedDigraph,
    branch: &Branch,
    lambda: Complex64,
    tol: f64,
) -> Result<Complex64> {
    let v = branch.vertices();
    let mut w = graph.weight(v[0], v[1]);
    if !graph.has_edge(v[0], v[1]) {
        return Err(Error::MissingEdge(v[0], v[1]));
    }
    for l in 1..v.len() - 1 {
        let (a, b) = (v[l], v[l + 1]);
        if !graph.has_edge(a, b) {
            return Err(Error::MissingEdge(a, b));
        }
        let denom = lambda - graph.loop_weight(a);
        if denom.norm() <= tol {
            return Err(Error::SingularWeight { vertex: a });
        }
        w *= graph.weight(a, b) / denom;
    }
    Ok(w)
}

/// Plain product of edge weights: the branch weight at `λ = 1` in a loop-free
/// graph.
pub fn branch_product(graph: &WeightedDigraph, branch: &Branch) -> f64 {
    branch.edges().map(|(a, b)| graph.weight(a, b).re).product()
}

/// The `S × S` matrix `R_S(G, λ)`, rows and columns ordered like `members`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedMatrix {
    pub members: Vec<usize>,
    pub lambda: Complex64,
    pub entries: DMatrix<Complex64>,
}

impl ReducedMatrix {
    /// Sums branch weights over `branches` for the endpoint pairs in `members`.
    /// When `length` is given only branches of that length are summed.
    pub fn from_branches(
        graph: &WeightedDigraph,
        branches: &BranchSet,
        members: &[usize],
        lambda: Complex64,
        length: Option<usize>,
        tol: f64,
    ) -> Result<Self> {
        let s = members.len();
        let mut entries = DMatrix::zeros(s, s);
        for (a, &i) in members.iter().enumerate() {
            for (b, &j) in members.iter().enumerate() {
                let mut acc = Complex64::new(0.0, 0.0);
                for br in branches.between(i, j) {
                    if length.is_none_or(|p| br.len() == p) {
                        acc += branch_weight(graph, br, lambda, tol)?;
                    }
                }
                entries[(a, b)] = acc;
            }
        }
        Ok(Self {
            members: members.to_vec(),
            lambda,
            entries,
        })
    }

    /// Entry `R_ij` by vertex ids.
    pub fn get(&self, i: usize, j: usize) -> Option<Complex64> {
        let a = self.members.iter().position(|&v| v == i)?;
        let b = self.members.iter().position(|&v| v == j)?;
        Some(self.entries[(a, b)])
    }

    /// Real part, failing if any imaginary part exceeds `tol`.
    pub fn to_real(&self, tol: f64) -> Result<DMatrix<f64>> {
        if self.entries.iter().any(|z| z.im.abs() > tol) {
            return Err(Error::InvalidMode("reduced matrix is not real".into()));
        }
        Ok(self.entries.map(|z| z.re))
    }
}

/// `R_S(G, λ)` from a fresh branch enumeration.
pub fn reduced_matrix(
    graph: &WeightedDigraph,
    structural: &StructuralSet,
    lambda: Complex64,
    tol: f64,
) -> Result<ReducedMatrix> {
    let branches = enumerate_branches(graph, structural);
    ReducedMatrix::from_branches(graph, &branches, structural.members(), lambda, None, tol)
}

/// `R^(p)`: the reduced matrix restricted to branches of length `p`.
pub fn reduced_matrix_by_length(
    graph: &WeightedDigraph,
    structural: &StructuralSet,
    lambda: Complex64,
    p: usize,
    tol: f64,
) -> Result<DMatrix<Complex64>> {
    if p == 0 {
        return Err(Error::invalid("branch length must be at least 1"));
    }
    let branches = enumerate_branches(graph, structural);
    Ok(
        ReducedMatrix::from_branches(graph, &branches, structural.members(), lambda, Some(p), tol)?
            .entries,
    )
}

/// The `N × N` matrix of `R_ij(G, S)` at `λ = 1` over all vertex pairs,
/// indexed by vertex id (tombstone rows and columns stay zero).
#[derive(Clone, Debug, PartialEq)]
pub struct ExtendedReducedMatrix {
    pub entries: DMatrix<f64>,
}

impl ExtendedReducedMatrix {
    pub fn from_branches(graph: &WeightedDigraph, branches: &BranchSet) -> Self {
        let n = graph.capacity();
        let mut entries = DMatrix::zeros(n, n);
        for b in branches.iter() {
            entries[(b.start(), b.end())] += branch_product(graph, b);
        }
        Self { entries }
    }

    /// The `S × S` block, which is `R_S(G)` at `λ = 1`.
    pub fn reduced_block(&self, members: &[usize]) -> DMatrix<f64> {
        let s = members.len();
        DMatrix::from_fn(s, s, |a, b| self.entries[(members[a], members[b])])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    /// Grows to `n × n`, padding with zeros.
    pub fn resize(&mut self, n: usize) {
        if n > self.entries.nrows() {
            let old = std::mem::replace(&mut self.entries, DMatrix::zeros(0, 0));
            self.entries = old.resize(n, n, 0.0);
        }
    }

    /// Sparse JSON: `{"n": N, "entries": [[i, j, value], …]}` with one-based ids.
    pub fn to_json(&self) -> String {
        let n = self.entries.nrows();
        let mut triples = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let x = self.entries[(i, j)];
                if x != 0.0 {
                    triples.push(serde_json::json!([i + 1, j + 1, x]));
                }
            }
        }
        serde_json::to_string(&serde_json::json!({ "n": n, "entries": triples }))
            .expect("matrix serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Doc {
            n: usize,
            entries: Vec<(usize, usize, f64)>,
        }
        let doc: Doc = serde_json::from_str(text)?;
        let mut entries = DMatrix::zeros(doc.n, doc.n);
        for (i, j, x) in doc.entries {
            if i == 0 || j == 0 || i > doc.n || j > doc.n {
                return Err(Error::invalid("matrix entry index out of range"));
            }
            entries[(i - 1, j - 1)] = x;
        }
        Ok(Self { entries })
    }
}

/// `R̄_S(G)` for a stochastic graph and a 1-structural set.
pub fn extended_reduced_matrix(
    graph: &WeightedDigraph,
    structural: &StructuralSet,
) -> Result<ExtendedReducedMatrix> {
    if !graph.is_stochastic() {
        return Err(Error::InvalidMode(
            "extended reduced matrix needs a graph marked stochastic".into(),
        ));
    }
    if (structural.lambda() - Complex64::new(1.0, 0.0)).norm() > 0.0 {
        return Err(Error::InvalidMode(
            "extended reduced matrix is defined at lambda = 1".into(),
        ));
    }
    let branches = enumerate_branches(graph, structural);
    Ok(ExtendedReducedMatrix::from_branches(graph, &branches))
}
