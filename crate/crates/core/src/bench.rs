//! Random sparse stochastic graphs, random admissible deltas, the cost
//! experiment and the verification suite.
//!
//! Graph model: a random Hamiltonian cycle (so the graph is strongly
//! connected) plus uniformly chosen extra non-loop edges up to
//! `round(avg_degree · N)` edges in total. Weights are uniform on
//! `[0.05, 1)` before every column is normalised to sum to one. Samples that
//! are not primitive are rejected and redrawn.

use std::fmt::Write as _;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{WeightedDigraph, DEFAULT_TOL};
use crate::markov::{verify_return_identity, verify_stationary_restriction, MarkovChain};
use crate::spectral::{
    is_primitive, lift_eigenvector, power_iteration, verify_eigen_restriction, PowerOptions,
    Primitivity,
};
use crate::structural::find_structural_set;
use crate::update::{
    simplex_bound, CostReport, DeltaOp, Equivalence, GraphDelta, StoredState, UpdateOptions,
    UpdateOutcome,
};

/// Savings threshold used in experiment summaries.
pub const SAVINGS_THRESHOLD: f64 = 0.7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Vertex count, at least 3.
    pub n: usize,
    /// Average out-degree, at least 1.
    pub avg_degree: f64,
    /// Delta size.
    pub p: usize,
    /// Iteration budget of the cost model.
    pub ell: usize,
    pub trials: usize,
    pub seed: u64,
    /// `a ≪ b` is read as `a ≤ ratio · b`.
    pub ratio: f64,
    /// Reject non-primitive samples (disable only for degenerate tests).
    pub require_primitive: bool,
    /// Compare each updated state with a recomputation from scratch.
    pub check_equivalence: bool,
    /// Always include one promotion-forcing edge insertion when possible.
    pub force_promotion: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 60,
            avg_degree: 2.5,
            p: 3,
            ell: 10,
            trials: 50,
            seed: 0,
            ratio: 0.1,
            require_primitive: true,
            check_equivalence: false,
            force_promotion: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 3 {
            return Err(Error::invalid("experiment needs N >= 3"));
        }
        if !(self.avg_degree >= 1.0) {
            return Err(Error::invalid("average degree must be at least 1"));
        }
        if self.trials == 0 {
            return Err(Error::invalid("at least one trial is required"));
        }
        if !(self.ratio > 0.0) {
            return Err(Error::invalid("ratio must be positive"));
        }
        Ok(())
    }
}

/// Attempts before [`generate_random_graph`] gives up.
pub const GENERATION_ATTEMPTS: usize = 1000;

/// Seeded random column-stochastic graph (see the module docs for the model).
pub fn generate_random_graph(config: &ExperimentConfig, seed: u64) -> Result<WeightedDigraph> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..GENERATION_ATTEMPTS {
        let g = sample_graph(config.n, config.avg_degree, &mut rng);
        if !config.require_primitive || is_primitive(&g.to_dense_real()) {
            return Ok(g);
        }
    }
    Err(Error::GenerationFailed(GENERATION_ATTEMPTS))
}

fn sample_graph(n: usize, avg_degree: f64, rng: &mut ChaCha8Rng) -> WeightedDigraph {
    let mut g = WeightedDigraph::new(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    for k in 0..n {
        let (i, j) = (order[k], order[(k + 1) % n]);
        g.add_edge(i, j, rng.random_range(0.05..1.0)).unwrap();
    }
    let target = ((avg_degree * n as f64).round() as usize).min(n * (n - 1));
    while g.n_edges() < target {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        if i != j && !g.has_edge(i, j) {
            g.add_edge(i, j, rng.random_range(0.05..1.0)).unwrap();
        }
    }
    for j in 0..n {
        g.normalize_column(j).expect("every column has an in-edge");
    }
    g.mark_stochastic(crate::graph::STOCHASTIC_TOL)
        .expect("normalised columns");
    g
}

/// Kinds of operations [`random_delta`] may draw.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OpKind {
    AddEdge,
    RemoveEdge,
    /// A new vertex with one out-edge and one in-edge (three operations).
    AddVertex,
    RemoveVertex,
}

pub const ALL_KINDS: [OpKind; 4] = [
    OpKind::AddEdge,
    OpKind::RemoveEdge,
    OpKind::AddVertex,
    OpKind::RemoveVertex,
];

/// An edge insertion that triggers the promotion rule: both endpoints outside
/// `S` and a branch from `j` back to `i`.
pub fn promotion_edge(state: &StoredState, rng: &mut ChaCha8Rng) -> Option<DeltaOp> {
    let g = state.graph();
    let s = state.structural();
    let mut candidates = Vec::new();
    for i in g.vertices().filter(|&v| !s.contains(v)) {
        for j in g.vertices().filter(|&v| !s.contains(v)) {
            if i != j && !g.has_edge(i, j) && state.branches().has_branch_between(j, i) {
                candidates.push((i, j));
            }
        }
    }
    let &(i, j) = candidates.get(rng.random_range(0..candidates.len().max(1)))?;
    Some(DeltaOp::AddEdge {
        i,
        j,
        w: rng.random_range(0.05..1.0),
    })
}

/// Random delta of exactly `p` operations drawn from `kinds`. Operations are
/// chosen against a scratch copy of the graph so that each one refers to live
/// vertices and existing or absent edges as required, and no column is left
/// empty; primitivity is not guaranteed.
pub fn random_delta(
    graph: &WeightedDigraph,
    p: usize,
    kinds: &[OpKind],
    rng: &mut ChaCha8Rng,
) -> GraphDelta {
    let mut g = graph.clone();
    let mut ops = Vec::with_capacity(p);
    let mut guard = 0;
    while ops.len() < p && guard < 1000 {
        guard += 1;
        let kind = kinds[rng.random_range(0..kinds.len())];
        let live: Vec<usize> = g.vertices().collect();
        let pick = |rng: &mut ChaCha8Rng| live[rng.random_range(0..live.len())];
        match kind {
            OpKind::AddEdge => {
                let (i, j) = (pick(rng), pick(rng));
                if i != j && !g.has_edge(i, j) {
                    let w = rng.random_range(0.05..1.0);
                    g.add_edge(i, j, w).unwrap();
                    ops.push(DeltaOp::AddEdge { i, j, w });
                }
            }
            OpKind::RemoveEdge => {
                let edges: Vec<(usize, usize)> = g
                    .edges()
                    .filter(|&(_, j, _)| g.in_degree(j) >= 2)
                    .map(|(i, j, _)| (i, j))
                    .collect();
                if let Some(&(i, j)) = edges.get(rng.random_range(0..edges.len().max(1))) {
                    g.remove_edge(i, j).unwrap();
                    ops.push(DeltaOp::RemoveEdge { i, j });
                }
            }
            OpKind::AddVertex => {
                if p - ops.len() >= 3 {
                    let (x, y) = (pick(rng), pick(rng));
                    let v = g.add_vertex();
                    g.add_edge(v, x, 1.0).unwrap();
                    g.add_edge(y, v, 1.0).unwrap();
                    ops.push(DeltaOp::AddVertex);
                    ops.push(DeltaOp::AddEdge {
                        i: v,
                        j: x,
                        w: rng.random_range(0.05..1.0),
                    });
                    ops.push(DeltaOp::AddEdge {
                        i: y,
                        j: v,
                        w: rng.random_range(0.05..1.0),
                    });
                }
            }
            OpKind::RemoveVertex => {
                let v = pick(rng);
                let ok = live.len() > 3 && g.successors(v).all(|(j, _)| g.in_degree(j) >= 2);
                if ok {
                    g.remove_vertex(v).unwrap();
                    ops.push(DeltaOp::RemoveVertex { v });
                }
            }
        }
    }
    GraphDelta::new(ops)
}

/// Draws random deltas until one applies cleanly; returns it with the updated
/// state. With `force_promotion`, the first operation is a promotion-forcing
/// edge when the state has one.
pub fn random_admissible_update(
    state: &StoredState,
    p: usize,
    kinds: &[OpKind],
    force_promotion: bool,
    rng: &mut ChaCha8Rng,
    attempts: usize,
) -> Result<(GraphDelta, StoredState, UpdateOutcome)> {
    let mut last = Error::GenerationFailed(attempts);
    for _ in 0..attempts {
        let mut ops = Vec::new();
        if force_promotion && p > 0 {
            if let Some(op) = promotion_edge(state, rng) {
                ops.push(op);
            }
        }
        let mut g = state.graph().clone();
        if let Some(DeltaOp::AddEdge { i, j, w }) = ops.first().copied() {
            g.add_edge(i, j, w)?;
        }
        ops.extend(random_delta(&g, p - ops.len(), kinds, rng).ops);
        let delta = GraphDelta::new(ops);
        let mut next = state.clone();
        match next.apply_delta(&delta) {
            Ok(outcome) => return Ok((delta, next, outcome)),
            Err(e) => last = e,
        }
    }
    Err(match last {
        Error::GenerationFailed(_) => Error::GenerationFailed(attempts),
        e => Error::IterationFailed {
            iterations: attempts,
            reason: format!("no admissible delta found; last error: {e}"),
            trace: Vec::new(),
        },
    })
}

/// Per-trial seed derived from the experiment seed.
pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    seed ^ (trial as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub delta: Option<String>,
    pub report: Option<CostReport>,
    pub promoted: usize,
    pub equivalence: Option<Equivalence>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SavingsStats {
    pub min: f64,
    pub median: f64,
    pub mean: f64,
    pub max: f64,
}

impl SavingsStats {
    fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let mid = v.len() / 2;
        let median = if v.len().is_multiple_of(2) {
            (v[mid - 1] + v[mid]) / 2.0
        } else {
            v[mid]
        };
        Some(Self {
            min: v[0],
            median,
            mean: v.iter().sum::<f64>() / v.len() as f64,
            max: v[v.len() - 1],
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub completed: usize,
    pub failed: usize,
    pub savings: Option<SavingsStats>,
    pub bound_savings: Option<SavingsStats>,
    /// Completed trials whose recorded savings exceed 70%.
    pub fraction_over_threshold: f64,
    /// Completed trials whose bound-based savings exceed 70%.
    pub fraction_bound_over_threshold: f64,
    /// Completed trials meeting all measurement relations before the update.
    pub fraction_meas: f64,
    /// Completed trials whose recorded costs respect every bound.
    pub fraction_within_bounds: f64,
    /// Trials whose incremental state differed from the recomputation.
    pub equivalence_failures: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub trials: Vec<TrialResult>,
    pub summary: ExperimentSummary,
}

fn run_trial(config: &ExperimentConfig, trial: usize) -> TrialResult {
    let seed = trial_seed(config.seed, trial);
    let mut result = TrialResult {
        trial,
        seed,
        delta: None,
        report: None,
        promoted: 0,
        equivalence: None,
        error: None,
    };
    let run = || -> Result<(GraphDelta, StoredState, UpdateOutcome)> {
        let graph = generate_random_graph(config, seed)?;
        let options = UpdateOptions {
            ell: config.ell,
            ratio: config.ratio,
            ..Default::default()
        };
        let state = StoredState::build(graph, None, options)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed.rotate_left(17));
        random_admissible_update(
            &state,
            config.p,
            &ALL_KINDS,
            config.force_promotion,
            &mut rng,
            200,
        )
    };
    match run() {
        Ok((delta, state, outcome)) => {
            result.delta = Some(delta.to_json());
            result.promoted = outcome.promoted.len();
            result.report = Some(outcome.report);
            if config.check_equivalence {
                match state.check_equivalence() {
                    Ok(eq) => result.equivalence = Some(eq),
                    Err(e) => result.error = Some(e.to_string()),
                }
            }
        }
        Err(e) => result.error = Some(e.to_string()),
    }
    result
}

/// Runs `config.trials` independent trials in parallel. Failed trials are kept
/// in the report with their error and left out of the statistics.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let mut trials: Vec<TrialResult> = (0..config.trials)
        .into_par_iter()
        .map(|t| run_trial(config, t))
        .collect();
    trials.sort_by_key(|t| t.trial);

    let reports: Vec<&CostReport> = trials.iter().filter_map(|t| t.report.as_ref()).collect();
    let completed = reports.len();
    let frac = |count: usize| {
        if completed == 0 {
            0.0
        } else {
            count as f64 / completed as f64
        }
    };
    let savings: Vec<f64> = reports.iter().map(|r| r.savings).collect();
    let bound: Vec<f64> = reports.iter().map(|r| r.bound_savings).collect();
    let summary = ExperimentSummary {
        completed,
        failed: trials.len() - completed,
        savings: SavingsStats::of(&savings),
        bound_savings: SavingsStats::of(&bound),
        fraction_over_threshold: frac(savings.iter().filter(|&&s| s > SAVINGS_THRESHOLD).count()),
        fraction_bound_over_threshold: frac(
            bound.iter().filter(|&&s| s > SAVINGS_THRESHOLD).count(),
        ),
        fraction_meas: frac(reports.iter().filter(|r| r.meas_before.all()).count()),
        fraction_within_bounds: frac(reports.iter().filter(|r| r.within.all()).count()),
        equivalence_failures: trials
            .iter()
            .filter(|t| {
                t.equivalence
                    .as_ref()
                    .is_some_and(|e| !e.holds(1e-12, 1e-8))
            })
            .count(),
    };
    Ok(ExperimentReport {
        config: config.clone(),
        trials,
        summary,
    })
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    /// One row per completed trial, for plotting.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("trial,seed,n,s,k,m,p,ell,savings,bound_savings,meas,within_bounds\n");
        for t in &self.trials {
            if let Some(r) = &t.report {
                let b = &r.before;
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{:.6},{:.6},{},{}",
                    t.trial,
                    t.seed,
                    b.n,
                    b.s,
                    b.k,
                    b.m,
                    r.after.p,
                    b.ell,
                    r.savings,
                    r.bound_savings,
                    r.meas_before.all(),
                    r.within.all()
                )
                .unwrap();
            }
        }
        out
    }

    /// Savings histogram over `[0, 1]` as CSV rows `lower,upper,count`.
    pub fn savings_histogram(&self, bins: usize) -> String {
        let bins = bins.max(1);
        let mut counts = vec![0usize; bins];
        for r in self.trials.iter().filter_map(|t| t.report.as_ref()) {
            let x = r.savings.clamp(0.0, 1.0);
            let b = ((x * bins as f64) as usize).min(bins - 1);
            counts[b] += 1;
        }
        let mut out = String::from("lower,upper,count\n");
        for (b, c) in counts.iter().enumerate() {
            writeln!(
                out,
                "{:.3},{:.3},{c}",
                b as f64 / bins as f64,
                (b + 1) as f64 / bins as f64
            )
            .unwrap();
        }
        out
    }

    pub fn to_table(&self) -> String {
        let s = &self.summary;
        let mut out = String::new();
        writeln!(
            out,
            "N={} avg_degree={} p={} ell={} trials={} seed={}",
            self.config.n,
            self.config.avg_degree,
            self.config.p,
            self.config.ell,
            self.config.trials,
            self.config.seed
        )
        .unwrap();
        writeln!(out, "completed {} failed {}", s.completed, s.failed).unwrap();
        if let Some(st) = &s.savings {
            writeln!(
                out,
                "savings   min {:.2}% median {:.2}% mean {:.2}% max {:.2}%",
                100.0 * st.min,
                100.0 * st.median,
                100.0 * st.mean,
                100.0 * st.max
            )
            .unwrap();
        }
        if let Some(st) = &s.bound_savings {
            writeln!(
                out,
                "bounded   min {:.2}% median {:.2}% mean {:.2}% max {:.2}%",
                100.0 * st.min,
                100.0 * st.median,
                100.0 * st.mean,
                100.0 * st.max
            )
            .unwrap();
        }
        writeln!(
            out,
            "savings > 70%          {:.1}%",
            100.0 * s.fraction_over_threshold
        )
        .unwrap();
        writeln!(
            out,
            "bound savings > 70%    {:.1}%",
            100.0 * s.fraction_bound_over_threshold
        )
        .unwrap();
        writeln!(
            out,
            "meas relations hold    {:.1}%",
            100.0 * s.fraction_meas
        )
        .unwrap();
        writeln!(
            out,
            "within all bounds      {:.1}%",
            100.0 * s.fraction_within_bounds
        )
        .unwrap();
        if self.config.check_equivalence {
            writeln!(out, "equivalence failures   {}", s.equivalence_failures).unwrap();
        }
        out
    }
}

/// Outcome of one named check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub subject: String,
    /// `None` when the check does not apply to the subject.
    pub passed: Option<bool>,
    pub value: Option<f64>,
    pub tolerance: Option<f64>,
    pub detail: String,
}

impl CheckResult {
    fn measured(name: &str, subject: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            subject: subject.into(),
            passed: Some(value <= tolerance),
            value: Some(value),
            tolerance: Some(tolerance),
            detail: String::new(),
        }
    }

    fn failed(name: &str, subject: &str, detail: String) -> Self {
        Self {
            name: name.into(),
            subject: subject.into(),
            passed: Some(false),
            value: None,
            tolerance: None,
            detail,
        }
    }

    fn skipped(name: &str, subject: &str, detail: String) -> Self {
        Self {
            name: name.into(),
            subject: subject.into(),
            passed: None,
            value: None,
            tolerance: None,
            detail,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed != Some(false))
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| c.passed == Some(false))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let status = match c.passed {
                Some(true) => "PASS",
                Some(false) => "FAIL",
                None => "SKIP",
            };
            let value = c
                .value
                .map(|v| format!("{v:.3e} <= {:.1e}", c.tolerance.unwrap_or(0.0)))
                .unwrap_or_default();
            writeln!(
                out,
                "{status} {:<24} {:<16} {value} {}",
                c.name, c.subject, c.detail
            )
            .unwrap();
        }
        out
    }
}

/// Tolerances used by the verification suite.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyTolerances {
    pub eigen_pair: f64,
    pub taboo: f64,
    pub stationary: f64,
    pub matrix: f64,
    pub eigen: f64,
}

impl Default for VerifyTolerances {
    fn default() -> Self {
        Self {
            eigen_pair: 1e-9,
            taboo: 1e-12,
            stationary: 1e-10,
            matrix: 1e-12,
            eigen: 1e-8,
        }
    }
}

/// Checks on a column-stochastic graph: restriction and lift of the
/// dominant eigenvector, the taboo identity, and the stationary restriction.
pub fn verify_graph(
    graph: &WeightedDigraph,
    subject: &str,
    tol: &VerifyTolerances,
) -> Vec<CheckResult> {
    let mut out = Vec::new();
    let one = Complex64::new(1.0, 0.0);
    let structural = match find_structural_set(graph, one, DEFAULT_TOL) {
        Ok(s) => s,
        Err(e) => {
            out.push(CheckResult::failed(
                "structural-set",
                subject,
                e.to_string(),
            ));
            return out;
        }
    };

    let dense = graph.to_dense_real();
    let primitive = is_primitive(&dense);
    let opts = PowerOptions {
        primitivity: Primitivity::Trusted,
        shift: if primitive { 0.0 } else { 1.0 },
        max_iters: 1_000_000,
        tol: 1e-15,
    };
    match power_iteration(&dense, &opts) {
        Ok(pair) if (pair.lambda.re - 1.0).abs() < 1e-9 => {
            match verify_eigen_restriction(graph, &structural, &pair, DEFAULT_TOL) {
                Ok(r) => out.push(CheckResult::measured(
                    "eigen-restriction",
                    subject,
                    r,
                    tol.eigen_pair,
                )),
                Err(e) => out.push(CheckResult::failed(
                    "eigen-restriction",
                    subject,
                    e.to_string(),
                )),
            }
            let u_s: Vec<Complex64> = structural
                .members()
                .iter()
                .map(|&v| pair.vector[v])
                .collect();
            match lift_eigenvector(graph, &structural, one, &u_s, DEFAULT_TOL) {
                Ok(lifted) => {
                    let dot: Complex64 = lifted
                        .vector
                        .iter()
                        .zip(&pair.vector)
                        .map(|(a, b)| a.conj() * b)
                        .sum();
                    let na: f64 = lifted
                        .vector
                        .iter()
                        .map(|z| z.norm_sqr())
                        .sum::<f64>()
                        .sqrt();
                    let nb: f64 = pair.vector.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                    let gap = 1.0 - dot.norm() / (na * nb);
                    out.push(CheckResult::measured(
                        "eigen-lift",
                        subject,
                        gap.max(0.0),
                        tol.eigen_pair,
                    ));
                }
                Err(e) => out.push(CheckResult::failed("eigen-lift", subject, e.to_string())),
            }
        }
        Ok(pair) => out.push(CheckResult::skipped(
            "eigen-restriction",
            subject,
            format!("dominant eigenvalue {} is not 1", pair.lambda.re),
        )),
        Err(e) => out.push(CheckResult::failed(
            "eigen-restriction",
            subject,
            e.to_string(),
        )),
    }

    match MarkovChain::from_column_stochastic(graph) {
        Ok(chain) => {
            match verify_return_identity(&chain, structural.members()) {
                Ok(r) => out.push(CheckResult::measured(
                    "taboo-identity",
                    subject,
                    r.max(),
                    tol.taboo,
                )),
                Err(Error::InvalidMode(msg)) => {
                    out.push(CheckResult::skipped("taboo-identity", subject, msg))
                }
                Err(e) => out.push(CheckResult::failed(
                    "taboo-identity",
                    subject,
                    e.to_string(),
                )),
            }
            match verify_stationary_restriction(&chain, structural.members()) {
                Ok(d) => out.push(CheckResult::measured(
                    "stationary-restriction",
                    subject,
                    d,
                    tol.stationary,
                )),
                Err(e @ (Error::Ambiguous | Error::InvalidMode(_))) => out.push(
                    CheckResult::skipped("stationary-restriction", subject, e.to_string()),
                ),
                Err(e) => out.push(CheckResult::failed(
                    "stationary-restriction",
                    subject,
                    e.to_string(),
                )),
            }
        }
        Err(e) => {
            out.push(CheckResult::skipped(
                "taboo-identity",
                subject,
                e.to_string(),
            ));
            out.push(CheckResult::skipped(
                "stationary-restriction",
                subject,
                e.to_string(),
            ));
        }
    }

    if primitive {
        match StoredState::build(
            graph.clone(),
            Some(structural.members()),
            UpdateOptions::default(),
        ) {
            Ok(state) => out.push(equivalence_check("stored-state", subject, &state, tol)),
            Err(e) => out.push(CheckResult::failed("stored-state", subject, e.to_string())),
        }
    } else {
        out.push(CheckResult::skipped(
            "stored-state",
            subject,
            "graph is not primitive".into(),
        ));
    }
    out
}

/// Compares a stored state with its recomputation.
pub fn equivalence_check(
    name: &str,
    subject: &str,
    state: &StoredState,
    tol: &VerifyTolerances,
) -> CheckResult {
    match state.check_equivalence() {
        Ok(eq) if eq.holds(tol.matrix, tol.eigen) => {
            CheckResult::measured(name, subject, eq.matrix_deviation.max(eq.eigen_deviation), tol.matrix.max(tol.eigen))
        }
        Ok(eq) => CheckResult::failed(
            name,
            subject,
            format!(
                "structural {} branches {} (missing {}, extra {}) matrix deviation {:.3e} eigen deviation {:.3e}",
                eq.structural_valid,
                eq.branches_equal,
                eq.missing_branches,
                eq.extra_branches,
                eq.matrix_deviation,
                eq.eigen_deviation
            ),
        ),
        Err(e) => CheckResult::failed(name, subject, e.to_string()),
    }
}

/// Samples `samples` random points of the simplex `Δ^m_N` for each `m` in
/// `1..=m_max` and returns the largest `F(x) / bound` seen (at most 1 when the
/// bound holds) together with the arithmetic-progression gap.
pub fn lemma_sampling(m_max: usize, samples: usize, n: f64, seed: u64) -> Result<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut ap_gap: f64 = 0.0;
    for m in 1..=m_max {
        let mut x = vec![0.0; m + 1];
        for _ in 0..samples {
            for v in x.iter_mut().take(m) {
                *v = rng.random_range(0.0..n);
            }
            x[m] = n;
            x[..m].sort_by(f64::total_cmp);
            let (f, bound) = simplex_bound(&x)?;
            if bound > n * n / 2.0 {
                return Ok((f64::INFINITY, ap_gap));
            }
            worst = worst.max(f / bound);
        }
        let ap: Vec<f64> = (0..=m)
            .map(|i| (i + 1) as f64 * n / (m + 1) as f64)
            .collect();
        let (f, bound) = simplex_bound(&ap)?;
        ap_gap = ap_gap.max((f - bound).abs() / bound);
    }
    Ok((worst, ap_gap))
}

/// The full suite: checks for each given graph and, per seed, for a random
/// graph with `n` vertices, an incremental update compared with
/// recomputation, and simplex-lemma sampling.
pub fn verify_suite(
    graphs: &[(String, WeightedDigraph)],
    seeds: &[u64],
    n: usize,
    tol: &VerifyTolerances,
) -> VerifyReport {
    let mut report = VerifyReport::default();
    for (name, g) in graphs {
        report.checks.extend(verify_graph(g, name, tol));
    }
    let config = ExperimentConfig {
        n,
        avg_degree: 2.5,
        ..Default::default()
    };
    let per_seed: Vec<Vec<CheckResult>> = seeds
        .par_iter()
        .map(|&seed| {
            let subject = format!("seed {seed}");
            let mut out = Vec::new();
            let graph = match generate_random_graph(&config, seed) {
                Ok(g) => g,
                Err(e) => return vec![CheckResult::failed("generate", &subject, e.to_string())],
            };
            out.extend(verify_graph(&graph, &subject, tol));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let update = StoredState::build(graph, None, UpdateOptions::default())
                .and_then(|s| random_admissible_update(&s, 3, &ALL_KINDS, true, &mut rng, 200));
            match update {
                Ok((_, state, _)) => out.push(equivalence_check(
                    "incremental-update",
                    &subject,
                    &state,
                    tol,
                )),
                Err(e) => out.push(CheckResult::failed(
                    "incremental-update",
                    &subject,
                    e.to_string(),
                )),
            }
            match lemma_sampling(20, 1000, 100.0, seed) {
                Ok((worst, gap)) => {
                    out.push(CheckResult::measured("simplex-lemma", &subject, worst, 1.0));
                    out.push(CheckResult::measured(
                        "simplex-lemma-equality",
                        &subject,
                        gap,
                        1e-9,
                    ));
                }
                Err(e) => out.push(CheckResult::failed(
                    "simplex-lemma",
                    &subject,
                    e.to_string(),
                )),
            }
            out
        })
        .collect();
    for c in per_seed {
        report.checks.extend(c);
    }
    report
}

/// Column-stochastic unit 3-cycle `0 → 1 → 2 → 0`.
pub fn three_cycle() -> WeightedDigraph {
    let mut g = WeightedDigraph::from_edges(3, [(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0)]).unwrap();
    g.mark_stochastic(crate::graph::STOCHASTIC_TOL).unwrap();
    g
}
