//! Incremental maintenance of the dominant eigenvector of a column-stochastic
//! graph under vertex and edge modifications.
//!
//! [`StoredState`] keeps the graph, a 1-structural set `S`, all branches of
//! `(G, S)`, the extended reduced matrix, and the dominant eigenvectors of the
//! reduced matrix and of `M_G`. [`StoredState::apply_delta`] runs the update:
//!
//! 1. edit the graph and renormalise the touched columns;
//! 2. promote an edge's tail into `S` when the edge closes a cycle outside `S`;
//! 3. add and delete branches;
//! 4. fold branch weight changes into the extended reduced matrix;
//! 5. recompute the reduced dominant eigenvector;
//! 6. lift it to the whole graph.
//!
//! Steps 1 to 4 run once per operation; 5 and 6 once per delta. A delta is
//! applied to a copy and committed only if every operation succeeds and the
//! result is again stochastic, loop-free and primitive.

mod cost;
mod persist;

use std::collections::BTreeSet;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use cost::{
    lift_cost, simplex_bound, CostBounds, CostReport, MeasConditions, Measurements, StepCosts,
    WithinBounds,
};

use crate::error::{Error, Result};
use crate::graph::{WeightedDigraph, DEFAULT_TOL, STOCHASTIC_TOL};
use crate::reduction::{
    branch_product, enumerate_branches, Branch, BranchSet, ExtendedReducedMatrix,
};
use crate::spectral::{
    graph_residual, is_primitive, lift_eigenvector, power_iteration, EigenPair, PowerOptions,
    Primitivity,
};
use crate::structural::{compute_depths, find_structural_set, StructuralSet};

/// One modification. Vertex ids are zero-based; a vertex added earlier in the
/// same delta has id `capacity` at the time of its addition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DeltaOp {
    AddVertex,
    /// Inserts `(i, j)` with raw weight `w`; column `j` is renormalised afterwards.
    AddEdge {
        i: usize,
        j: usize,
        w: f64,
    },
    RemoveEdge {
        i: usize,
        j: usize,
    },
    RemoveVertex {
        v: usize,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
enum WireOp {
    AddVertex,
    AddEdge { i: usize, j: usize, w: f64 },
    RemoveEdge { i: usize, j: usize },
    RemoveVertex { v: usize },
}

/// An ordered list of modifications.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GraphDelta {
    pub ops: Vec<DeltaOp>,
}

impl GraphDelta {
    pub fn new(ops: Vec<DeltaOp>) -> Self {
        Self { ops }
    }

    /// Number of operations.
    pub fn p(&self) -> usize {
        self.ops.len()
    }

    /// Parses a JSON array of operations with one-based ids, e.g.
    /// `[{"op": "add_edge", "i": 1, "j": 2, "w": 0.5}, {"op": "remove_vertex", "v": 3}]`.
    pub fn from_json(text: &str) -> Result<Self> {
        let wire: Vec<WireOp> = serde_json::from_str(text)?;
        let id = |v: usize| {
            v.checked_sub(1)
                .ok_or_else(|| Error::invalid("delta vertex ids are one-based"))
        };
        let ops = wire
            .into_iter()
            .map(|op| {
                Ok(match op {
                    WireOp::AddVertex => DeltaOp::AddVertex,
                    WireOp::AddEdge { i, j, w } => DeltaOp::AddEdge {
                        i: id(i)?,
                        j: id(j)?,
                        w,
                    },
                    WireOp::RemoveEdge { i, j } => DeltaOp::RemoveEdge {
                        i: id(i)?,
                        j: id(j)?,
                    },
                    WireOp::RemoveVertex { v } => DeltaOp::RemoveVertex { v: id(v)? },
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { ops })
    }

    pub fn to_json(&self) -> String {
        let wire: Vec<WireOp> = self
            .ops
            .iter()
            .map(|op| match *op {
                DeltaOp::AddVertex => WireOp::AddVertex,
                DeltaOp::AddEdge { i, j, w } => WireOp::AddEdge {
                    i: i + 1,
                    j: j + 1,
                    w,
                },
                DeltaOp::RemoveEdge { i, j } => WireOp::RemoveEdge { i: i + 1, j: j + 1 },
                DeltaOp::RemoveVertex { v } => WireOp::RemoveVertex { v: v + 1 },
            })
            .collect();
        serde_json::to_string(&wire).expect("delta serialization cannot fail")
    }
}

#[derive(Clone, Copy, Debug)]
pub struct UpdateOptions {
    /// Iteration budget `ℓ` used by the cost model.
    pub ell: usize,
    /// Power iteration settings for the reduced matrix.
    pub power: PowerOptions,
    /// Column-sum tolerance for stochasticity.
    pub stochastic_tol: f64,
    /// Tolerance for comparing loop weights with λ = 1.
    pub lambda_tol: f64,
    /// Threshold for reading `a ≪ b` as `a ≤ ratio · b`.
    pub ratio: f64,
    /// Largest accepted delta; `None` means unlimited.
    pub max_ops: Option<usize>,
}

impl Default for UpdateOptions {
    fn default() -> Self {
        Self {
            ell: 10,
            power: PowerOptions {
                max_iters: 1_000_000,
                tol: 1e-15,
                primitivity: Primitivity::Trusted,
                shift: 0.0,
            },
            stochastic_tol: STOCHASTIC_TOL,
            lambda_tol: DEFAULT_TOL,
            ratio: 0.1,
            max_ops: None,
        }
    }
}

/// Branches touched by an update, in the order they were processed.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BranchChanges {
    pub added: Vec<Branch>,
    pub deleted: Vec<Branch>,
    /// Branches kept but reweighted by a column renormalisation.
    pub reweighted: Vec<Branch>,
}

/// What an update did, with its cost report.
#[derive(Clone, Debug)]
pub struct UpdateOutcome {
    pub changes: BranchChanges,
    /// Vertices added to `S` by the promotion rule, in order.
    pub promoted: Vec<usize>,
    /// Members of `S` that were removed from the graph.
    pub dropped: Vec<usize>,
    /// Ids assigned to added vertices.
    pub new_vertices: Vec<usize>,
    /// Set when the maintained structural set had to be replaced by a fresh
    /// search (branches and matrix were then rebuilt from scratch).
    pub structural_fallback: bool,
    pub report: CostReport,
    /// Power iteration outcome on the reduced matrix.
    pub reduced: EigenPair,
}

/// Stored data of the update algorithm.
#[derive(Clone, Debug)]
pub struct StoredState {
    graph: WeightedDigraph,
    structural: StructuralSet,
    branches: BranchSet,
    extended: ExtendedReducedMatrix,
    reduced_eigen: EigenPair,
    eigen: EigenPair,
    options: UpdateOptions,
}

/// Result of comparing a stored state with a recomputation from its graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Equivalence {
    pub structural_valid: bool,
    pub branches_equal: bool,
    pub missing_branches: usize,
    pub extra_branches: usize,
    /// Largest entrywise difference of the extended reduced matrices.
    pub matrix_deviation: f64,
    /// `‖M_G u − u‖ / ‖u‖` for the stored dominant eigenvector.
    pub eigen_residual: f64,
    /// Largest difference between stored and recomputed dominant eigenvectors.
    pub eigen_deviation: f64,
}

impl Equivalence {
    pub fn holds(&self, matrix_tol: f64, eigen_tol: f64) -> bool {
        self.structural_valid
            && self.branches_equal
            && self.matrix_deviation <= matrix_tol
            && self.eigen_deviation <= eigen_tol
    }
}

/// Checks the standing assumptions: stochastic columns, no loops, weights in
/// `(0, 1]`, primitivity of `M_G`.
pub fn check_assumptions(graph: &WeightedDigraph, tol: f64) -> Result<()> {
    graph.check_stochastic(tol)?;
    let (compact, _) = graph.compact();
    if !is_primitive(&compact.to_dense_real()) {
        return Err(Error::NotPrimitive);
    }
    Ok(())
}

/// Dominant eigenvector of a reduced block. A periodic block is iterated as
/// `R + I`, which has the same dominant eigenvector.
pub(crate) fn reduced_dominant(
    block: &nalgebra::DMatrix<f64>,
    opts: &PowerOptions,
) -> Result<EigenPair> {
    let mut o = *opts;
    o.primitivity = Primitivity::Trusted;
    if !is_primitive(block) {
        o.shift = 1.0;
    }
    power_iteration(block, &o)
}

fn lift_dominant(
    graph: &WeightedDigraph,
    structural: &StructuralSet,
    reduced: &EigenPair,
    tol: f64,
) -> Result<EigenPair> {
    let one = Complex64::new(1.0, 0.0);
    let lifted = lift_eigenvector(graph, structural, one, &reduced.vector, tol)?;
    let mut pair = lifted.normalized_l1_positive();
    pair.residual = graph_residual(graph, one, &pair.dense(graph.capacity()));
    pair.converged = reduced.converged;
    pair.iterations = reduced.iterations;
    Ok(pair)
}

/// Structural set, branches and extended reduced matrix of `(graph, members)`
/// computed from nothing.
pub fn scratch(
    graph: &WeightedDigraph,
    members: &[usize],
    lambda_tol: f64,
) -> Result<(StructuralSet, BranchSet, ExtendedReducedMatrix)> {
    let structural = compute_depths(graph, members, Complex64::new(1.0, 0.0), lambda_tol)?;
    let branches = enumerate_branches(graph, &structural);
    let extended = ExtendedReducedMatrix::from_branches(graph, &branches);
    Ok((structural, branches, extended))
}

impl StoredState {
    /// Validates the assumptions and computes all stored data. Without `s` a
    /// structural set is found greedily.
    pub fn build(
        mut graph: WeightedDigraph,
        s: Option<&[usize]>,
        options: UpdateOptions,
    ) -> Result<Self> {
        check_assumptions(&graph, options.stochastic_tol)?;
        graph.mark_stochastic(options.stochastic_tol)?;
        let one = Complex64::new(1.0, 0.0);
        let members = match s {
            Some(s) => s.to_vec(),
            None => find_structural_set(&graph, one, options.lambda_tol)?
                .members()
                .to_vec(),
        };
        let (structural, branches, extended) = scratch(&graph, &members, options.lambda_tol)?;
        let reduced_eigen = reduced_dominant(
            &extended.reduced_block(structural.members()),
            &options.power,
        )?;
        let eigen = lift_dominant(&graph, &structural, &reduced_eigen, options.lambda_tol)?;
        let reduced_eigen = EigenPair {
            support: structural.members().to_vec(),
            ..reduced_eigen
        };
        Ok(Self {
            graph,
            structural,
            branches,
            extended,
            reduced_eigen,
            eigen,
            options,
        })
    }

    pub fn graph(&self) -> &WeightedDigraph {
        &self.graph
    }

    pub fn structural(&self) -> &StructuralSet {
        &self.structural
    }

    pub fn branches(&self) -> &BranchSet {
        &self.branches
    }

    pub fn extended(&self) -> &ExtendedReducedMatrix {
        &self.extended
    }

    /// L1-normalised dominant eigenvector of the reduced matrix, over `S`.
    pub fn reduced_eigen(&self) -> &EigenPair {
        &self.reduced_eigen
    }

    /// L1-normalised dominant eigenvector of `M_G`, over the live vertices.
    pub fn eigen(&self) -> &EigenPair {
        &self.eigen
    }

    pub fn options(&self) -> &UpdateOptions {
        &self.options
    }

    pub fn measurements(&self, p: usize) -> Measurements {
        Measurements {
            n: self.graph.n_vertices(),
            s: self.structural.len(),
            k: self.structural.max_depth(),
            m: self.branches.m_statistic(),
            ell: self.options.ell,
            p,
        }
    }

    /// Runs the six-step update. On error the state is left untouched.
    pub fn apply_delta(&mut self, delta: &GraphDelta) -> Result<UpdateOutcome> {
        if let Some(max) = self.options.max_ops {
            if delta.p() > max {
                return Err(Error::invalid(format!(
                    "delta has {} operations, at most {max} allowed",
                    delta.p()
                )));
            }
        }
        let before = self.measurements(delta.p());
        let mut session = Session::new(self.clone());
        for op in &delta.ops {
            session.apply(*op)?;
        }
        let (state, outcome) = session.finish(before)?;
        *self = state;
        Ok(outcome)
    }

    /// Recomputes everything from the stored graph and stored `S` and compares.
    pub fn check_equivalence(&self) -> Result<Equivalence> {
        let members = self.structural.members();
        let structural_valid = compute_depths(
            &self.graph,
            members,
            Complex64::new(1.0, 0.0),
            self.options.lambda_tol,
        )
        .is_ok();
        let (structural, branches, extended) = if structural_valid {
            scratch(&self.graph, members, self.options.lambda_tol)?
        } else {
            let found = find_structural_set(
                &self.graph,
                Complex64::new(1.0, 0.0),
                self.options.lambda_tol,
            )?;
            scratch(&self.graph, found.members(), self.options.lambda_tol)?
        };
        let missing = branches
            .iter()
            .filter(|b| !self.branches.contains(b))
            .count();
        let extra = self
            .branches
            .iter()
            .filter(|b| !branches.contains(b))
            .count();
        let n = self.graph.capacity();
        let mut matrix_deviation = if self.extended.entries.nrows() == n {
            (&self.extended.entries - &extended.entries).amax()
        } else {
            f64::INFINITY
        };
        if matrix_deviation.is_nan() {
            matrix_deviation = f64::INFINITY;
        }
        let reduced = reduced_dominant(
            &extended.reduced_block(structural.members()),
            &self.options.power,
        )?;
        let fresh = lift_dominant(&self.graph, &structural, &reduced, self.options.lambda_tol)?;
        let stored = self.eigen.dense(n);
        let fresh_dense = fresh.dense(n);
        let eigen_deviation = stored
            .iter()
            .zip(&fresh_dense)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        Ok(Equivalence {
            structural_valid,
            branches_equal: missing == 0 && extra == 0,
            missing_branches: missing,
            extra_branches: extra,
            matrix_deviation,
            eigen_residual: graph_residual(&self.graph, Complex64::new(1.0, 0.0), &stored),
            eigen_deviation,
        })
    }
}

/// Working copy during [`StoredState::apply_delta`].
struct Session {
    state: StoredState,
    in_s: Vec<bool>,
    changes: BranchChanges,
    costs: StepCosts,
    step1_entries: u64,
    step2_checks: u64,
    promoted: Vec<usize>,
    dropped: Vec<usize>,
    new_vertices: Vec<usize>,
    structural_fallback: bool,
}

impl Session {
    fn new(state: StoredState) -> Self {
        let mut in_s = state.structural.mask().to_vec();
        in_s.resize(state.graph.capacity(), false);
        Self {
            state,
            in_s,
            changes: BranchChanges::default(),
            costs: StepCosts::default(),
            step1_entries: 0,
            step2_checks: 0,
            promoted: Vec::new(),
            dropped: Vec::new(),
            new_vertices: Vec::new(),
            structural_fallback: false,
        }
    }

    /// Adds `sign · ω(β)` to the matrix; `len(β)` multiply-adds.
    fn fold(&mut self, b: &Branch, sign: f64) {
        let (s, e) = (b.start(), b.end());
        let w = branch_product(&self.state.graph, b);
        let entry = &mut self.state.extended.entries[(s, e)];
        *entry += sign * w;
        if !self.state.branches.has_branch_between(s, e) {
            *entry = 0.0;
        }
        self.costs.step4 += b.len() as u64;
    }

    fn delete_branch(&mut self, b: Branch) {
        self.state.branches.remove(&b);
        self.fold(&b, -1.0);
        self.costs.step3 += b.vertices().len() as u64;
        self.changes.deleted.push(b);
    }

    fn add_branch(&mut self, b: Branch) {
        if self.state.branches.insert(b.clone()) {
            self.fold(&b, 1.0);
            self.costs.step3 += b.vertices().len() as u64;
            self.changes.added.push(b);
        }
    }

    /// Branches that contain an edge into one of `cols`.
    fn branches_into(&self, cols: &[usize]) -> BTreeSet<Branch> {
        let mut out = BTreeSet::new();
        for &j in cols {
            out.extend(self.state.branches.ending_at(j).iter().cloned());
            out.extend(self.state.branches.through(j).iter().cloned());
        }
        out
    }

    /// Runs `edit` on the graph, then renormalises `cols`, keeping the matrix
    /// in step: affected branches are subtracted before and added back after.
    fn with_renormalized<F>(&mut self, cols: &[usize], edit: F) -> Result<()>
    where
        F: FnOnce(&mut WeightedDigraph) -> Result<()>,
    {
        let affected = self.branches_into(cols);
        for b in &affected {
            self.fold(b, -1.0);
        }
        edit(&mut self.state.graph)?;
        for &j in cols {
            if self.state.graph.is_alive(j) && self.state.graph.in_degree(j) > 0 {
                self.step1_entries += self.state.graph.in_degree(j) as u64;
                self.state.graph.normalize_column(j)?;
            }
        }
        for b in affected {
            self.fold(&b, 1.0);
            self.costs.step3 += b.vertices().len() as u64;
            self.changes.reweighted.push(b);
        }
        Ok(())
    }

    /// Moves `v` into `S`. Every branch through `v` splits into a prefix and a
    /// suffix ending and starting at `v`, both of which are branches already.
    fn promote(&mut self, v: usize) {
        self.in_s[v] = true;
        let through: Vec<Branch> = self.state.branches.through(v).iter().cloned().collect();
        for b in through {
            self.delete_branch(b);
        }
        self.promoted.push(v);
    }

    fn check_live(&self, v: usize) -> Result<()> {
        self.state.graph.check_vertex(v)
    }

    fn apply(&mut self, op: DeltaOp) -> Result<()> {
        match op {
            DeltaOp::AddVertex => {
                let v = self.state.graph.add_vertex();
                let n = self.state.graph.capacity();
                self.state.branches.ensure_capacity(n);
                self.state.extended.resize(n);
                self.in_s.resize(n, false);
                self.new_vertices.push(v);
                Ok(())
            }
            DeltaOp::AddEdge { i, j, w } => self.add_edge(i, j, w),
            DeltaOp::RemoveEdge { i, j } => self.remove_edge(i, j),
            DeltaOp::RemoveVertex { v } => self.remove_vertex(v),
        }
    }

    fn add_edge(&mut self, i: usize, j: usize, w: f64) -> Result<()> {
        self.check_live(i)?;
        self.check_live(j)?;
        if i == j {
            return Err(Error::invalid(format!("loop at vertex {i} is not allowed")));
        }
        if !(w > 0.0 && w.is_finite()) {
            return Err(Error::invalid(format!(
                "edge ({i}, {j}) needs a positive weight"
            )));
        }
        if self.state.graph.has_edge(i, j) {
            return Err(Error::DuplicateEdge(i, j));
        }

        // Step 2: a path j ⇝ i outside S closes a cycle through the new edge.
        self.step2_checks += 1;
        if !self.in_s[i] && !self.in_s[j] && self.state.branches.has_branch_between(j, i) {
            self.promote(i);
        }

        // Steps 1, 3, 4 for the renormalised column.
        self.step1_entries += 1;
        self.with_renormalized(&[j], |g| g.add_edge(i, j, w))?;

        // New branches α·(i, j)·γ; α is empty when i ∈ S, γ is empty when j ∈ S.
        let mut heads: Vec<Option<Branch>> = vec![None];
        if !self.in_s[i] {
            heads.extend(self.state.branches.ending_at(i).iter().cloned().map(Some));
        }
        let mut tails: Vec<Option<Branch>> = vec![None];
        if !self.in_s[j] {
            tails.extend(self.state.branches.starting_at(j).iter().cloned().map(Some));
        }
        for head in &heads {
            for tail in &tails {
                let mut seq: Vec<usize> = match head {
                    Some(a) => a.vertices().to_vec(),
                    None => vec![i],
                };
                match tail {
                    Some(g) => seq.extend_from_slice(g.vertices()),
                    None => seq.push(j),
                }
                let b = Branch::new(seq);
                debug_assert!(b.is_simple(), "concatenation {b:?} repeats a vertex");
                if b.is_simple() {
                    self.add_branch(b);
                }
            }
        }
        Ok(())
    }

    fn remove_edge(&mut self, i: usize, j: usize) -> Result<()> {
        self.check_live(i)?;
        self.check_live(j)?;
        if !self.state.graph.has_edge(i, j) {
            return Err(Error::MissingEdge(i, j));
        }
        let using: Vec<Branch> = self
            .state
            .branches
            .starting_at(i)
            .iter()
            .chain(self.state.branches.through(i))
            .filter(|b| b.contains_edge(i, j))
            .cloned()
            .collect();
        for b in using {
            self.delete_branch(b);
        }
        self.step1_entries += 1;
        self.with_renormalized(&[j], |g| g.remove_edge(i, j).map(|_| ()))
    }

    fn remove_vertex(&mut self, v: usize) -> Result<()> {
        self.check_live(v)?;
        let touching: BTreeSet<Branch> = self
            .state
            .branches
            .starting_at(v)
            .iter()
            .chain(self.state.branches.ending_at(v))
            .chain(self.state.branches.through(v))
            .cloned()
            .collect();
        for b in touching {
            self.delete_branch(b);
        }
        let outs: Vec<usize> = self
            .state
            .graph
            .successors(v)
            .map(|(j, _)| j)
            .filter(|&j| j != v)
            .collect();
        self.step1_entries +=
            (self.state.graph.out_degree(v) + self.state.graph.in_degree(v)) as u64;
        self.with_renormalized(&outs, |g| g.remove_vertex(v))?;
        let n = self.state.graph.capacity();
        for x in 0..n {
            self.state.extended.entries[(v, x)] = 0.0;
            self.state.extended.entries[(x, v)] = 0.0;
        }
        if self.in_s[v] {
            self.in_s[v] = false;
            self.dropped.push(v);
            if !self.state.graph.vertices().any(|x| self.in_s[x]) {
                let first = self.state.graph.vertices().next();
                if let Some(x) = first {
                    self.promote(x);
                }
            }
        }
        Ok(())
    }

    fn finish(mut self, before: Measurements) -> Result<(StoredState, UpdateOutcome)> {
        let opts = self.state.options;
        check_assumptions(&self.state.graph, opts.stochastic_tol)?;
        self.state.graph.mark_stochastic(opts.stochastic_tol)?;

        let one = Complex64::new(1.0, 0.0);
        let members: Vec<usize> = self
            .state
            .graph
            .vertices()
            .filter(|&v| self.in_s[v])
            .collect();
        self.state.structural =
            match compute_depths(&self.state.graph, &members, one, opts.lambda_tol) {
                Ok(s) => s,
                Err(Error::NotStructural(_)) | Err(Error::InvalidInput(_)) => {
                    self.structural_fallback = true;
                    let found = find_structural_set(&self.state.graph, one, opts.lambda_tol)?;
                    let (structural, branches, extended) =
                        scratch(&self.state.graph, found.members(), opts.lambda_tol)?;
                    self.state.branches = branches;
                    self.state.extended = extended;
                    structural
                }
                Err(e) => return Err(e),
            };

        // Step 5.
        let structural = &self.state.structural;
        let block = self.state.extended.reduced_block(structural.members());
        let reduced = reduced_dominant(&block, &opts.power)?;
        let s_new = structural.len() as u64;
        self.costs.step5 = opts.ell as u64 * s_new.pow(3);

        // Step 6.
        let eigen = lift_dominant(&self.state.graph, structural, &reduced, opts.lambda_tol)?;
        self.costs.step6 = lift_cost(&structural.cumulative_sizes());

        let reduced = EigenPair {
            support: structural.members().to_vec(),
            ..reduced
        };
        self.state.reduced_eigen = reduced.clone();
        self.state.eigen = eigen;

        let after = self.state.measurements(before.p);
        let report = CostReport::new(
            before,
            after,
            self.costs,
            self.step1_entries,
            self.step2_checks,
            opts.ratio,
        );
        let outcome = UpdateOutcome {
            changes: self.changes,
            promoted: self.promoted,
            dropped: self.dropped,
            new_vertices: self.new_vertices,
            structural_fallback: self.structural_fallback,
            report,
            reduced,
        };
        Ok((self.state, outcome))
    }
}
