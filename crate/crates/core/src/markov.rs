//! The reduced matrix of a Markov chain as a first-return kernel.
//!
//! Transition matrices here are row-stochastic, `P[(i, j)] = p_ij`, and the
//! associated graph carries `ω(i, j) = p_ij`. Graphs in the column-stochastic
//! convention of the update module are converted by transposition.
//!
//! For a 1-structural set `S` without loops outside `S`, the length-`n` part of
//! `R_S(G)` is the taboo probability of first re-entering `S` at step `n`, and
//! the chain observed at its successive visits to `S` has kernel `R_S(G)`.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{WeightedDigraph, DEFAULT_TOL};
use crate::reduction::{enumerate_branches, ReducedMatrix};
use crate::structural::{compute_depths, StructuralSet};

/// Row sums must be within this of one.
pub const ROW_SUM_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct MarkovChain {
    transition: DMatrix<f64>,
}

impl MarkovChain {
    pub fn new(transition: DMatrix<f64>) -> Result<Self> {
        let n = transition.nrows();
        if n == 0 || transition.ncols() != n {
            return Err(Error::invalid(
                "transition matrix must be nonempty and square",
            ));
        }
        for i in 0..n {
            let row = transition.row(i);
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::invalid(format!(
                    "row {} has entries outside [0, 1]",
                    i + 1
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::invalid(format!("row {} sums to {sum}", i + 1)));
            }
        }
        Ok(Self { transition })
    }

    /// Chain whose transition probabilities are the edge weights, `p_ij = ω(i, j)`.
    pub fn from_graph(graph: &WeightedDigraph) -> Result<Self> {
        if graph.has_tombstones() {
            return Err(Error::invalid("compact the graph before building a chain"));
        }
        if !graph.is_real() {
            return Err(Error::InvalidMode("transition weights must be real".into()));
        }
        Self::new(graph.to_dense_real())
    }

    /// Chain of a column-stochastic graph: `p_ij = ω(j, i)`.
    pub fn from_column_stochastic(graph: &WeightedDigraph) -> Result<Self> {
        Self::from_graph(&graph.transpose())
    }

    /// Graph with `ω(i, j) = p_ij`.
    pub fn to_graph(&self) -> WeightedDigraph {
        WeightedDigraph::from_dense_real(&self.transition).expect("square real matrix")
    }

    pub fn n_states(&self) -> usize {
        self.transition.nrows()
    }

    pub fn transition(&self) -> &DMatrix<f64> {
        &self.transition
    }

    pub fn p(&self, i: usize, j: usize) -> f64 {
        self.transition[(i, j)]
    }

    /// Whether every state reaches every other.
    pub fn is_irreducible(&self) -> bool {
        let n = self.n_states();
        let reach = |forward: bool| {
            let mut seen = vec![false; n];
            let mut queue = VecDeque::from([0]);
            seen[0] = true;
            while let Some(v) = queue.pop_front() {
                for w in 0..n {
                    let p = if forward {
                        self.transition[(v, w)]
                    } else {
                        self.transition[(w, v)]
                    };
                    if p > 0.0 && !seen[w] {
                        seen[w] = true;
                        queue.push_back(w);
                    }
                }
            }
            seen.iter().all(|&s| s)
        };
        reach(true) && reach(false)
    }

    fn state_mask(&self, s: &[usize]) -> Result<Vec<bool>> {
        if s.is_empty() {
            return Err(Error::invalid("state set must be nonempty"));
        }
        let mut mask = vec![false; self.n_states()];
        for &v in s {
            if v >= mask.len() {
                return Err(Error::MissingVertex(v));
            }
            mask[v] = true;
        }
        Ok(mask)
    }
}

/// `f[n−1][j] = P[X_n = j, X_k ∉ S for 0 < k < n | X_0 = i]` for `n = 1..=n_max`.
fn taboo_series(chain: &MarkovChain, mask: &[bool], i: usize, n_max: usize) -> Vec<Vec<f64>> {
    let n = chain.n_states();
    let mut out = Vec::with_capacity(n_max);
    let mut f: Vec<f64> = chain.transition.row(i).iter().copied().collect();
    for step in 1..=n_max {
        out.push(f.clone());
        if step == n_max {
            break;
        }
        let mut next = vec![0.0; n];
        for (k, &fk) in f.iter().enumerate() {
            if mask[k] || fk == 0.0 {
                continue;
            }
            for (j, x) in next.iter_mut().enumerate() {
                *x += fk * chain.transition[(k, j)];
            }
        }
        f = next;
    }
    out
}

/// Probability of going from `i` to `j` in exactly `n ≥ 1` steps while
/// avoiding `s` at every intermediate time.
pub fn taboo_probability(
    chain: &MarkovChain,
    s: &[usize],
    i: usize,
    j: usize,
    n: usize,
) -> Result<f64> {
    let mask = chain.state_mask(s)?;
    if i >= mask.len() {
        return Err(Error::MissingVertex(i));
    }
    if j >= mask.len() {
        return Err(Error::MissingVertex(j));
    }
    if n == 0 {
        return Err(Error::invalid("taboo probabilities start at n = 1"));
    }
    Ok(taboo_series(chain, &mask, i, n)[n - 1][j])
}

/// `S × S` matrix of length-`n` taboo probabilities, ordered like sorted `s`.
pub fn taboo_matrix(chain: &MarkovChain, s: &[usize], n: usize) -> Result<DMatrix<f64>> {
    let mask = chain.state_mask(s)?;
    if n == 0 {
        return Err(Error::invalid("taboo probabilities start at n = 1"));
    }
    let members: Vec<usize> = (0..mask.len()).filter(|&v| mask[v]).collect();
    let k = members.len();
    let mut out = DMatrix::zeros(k, k);
    for (a, &i) in members.iter().enumerate() {
        let f = &taboo_series(chain, &mask, i, n)[n - 1];
        for (b, &j) in members.iter().enumerate() {
            out[(a, b)] = f[j];
        }
    }
    Ok(out)
}

/// Deviations between branch sums and taboo probabilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReturnIdentity {
    /// `max_{i,j,n} |R^(n)_ij − taboo^(n)_ij|` over `n ≤ |S̄| + 1`.
    pub by_length: f64,
    /// `max_{i,j} |R_ij − Σ_n taboo^(n)_ij|`.
    pub total: f64,
    /// Largest taboo probability at `n = |S̄| + 2`, which must vanish.
    pub beyond: f64,
    /// Largest deviation of a row sum of `R_S(G)` from one.
    pub row_sum: f64,
}

impl ReturnIdentity {
    /// Largest of the branch-versus-taboo deviations (row sums excluded, since
    /// they equal one only when `S` is recurrent).
    pub fn max(&self) -> f64 {
        self.by_length.max(self.total).max(self.beyond)
    }
}

fn structural_for_chain(
    chain: &MarkovChain,
    s: &[usize],
) -> Result<(WeightedDigraph, StructuralSet)> {
    let graph = chain.to_graph();
    let mask = chain.state_mask(s)?;
    if let Some(v) = (0..mask.len()).find(|&v| !mask[v] && chain.p(v, v) != 0.0) {
        return Err(Error::InvalidMode(format!(
            "state {} outside the set has a self-transition",
            v + 1
        )));
    }
    let members: Vec<usize> = (0..mask.len()).filter(|&v| mask[v]).collect();
    let structural = compute_depths(&graph, &members, Complex64::new(1.0, 0.0), DEFAULT_TOL)
        .map_err(|e| match e {
            Error::NotStructural(w) => Error::InvalidMode(format!("set is not 1-structural: {w}")),
            other => other,
        })?;
    Ok((graph, structural))
}

/// Compares the length-partitioned reduced matrix at `λ = 1` with taboo
/// probabilities computed by dynamic programming.
///
/// Requires `s` to be 1-structural with no self-transitions outside it.
pub fn verify_return_identity(chain: &MarkovChain, s: &[usize]) -> Result<ReturnIdentity> {
    let (graph, structural) = structural_for_chain(chain, s)?;
    let mask = structural.mask();
    let members = structural.members();
    let n_max = (chain.n_states() - members.len()) + 1;
    let branches = enumerate_branches(&graph, &structural);
    let one = Complex64::new(1.0, 0.0);

    let series: Vec<Vec<Vec<f64>>> = members
        .iter()
        .map(|&i| taboo_series(chain, mask, i, n_max + 1))
        .collect();
    let full = ReducedMatrix::from_branches(&graph, &branches, members, one, None, DEFAULT_TOL)?;

    let mut report = ReturnIdentity {
        by_length: 0.0,
        total: 0.0,
        beyond: 0.0,
        row_sum: 0.0,
    };
    let mut sums = DMatrix::<f64>::zeros(members.len(), members.len());
    for n in 1..=n_max {
        let r =
            ReducedMatrix::from_branches(&graph, &branches, members, one, Some(n), DEFAULT_TOL)?;
        for a in 0..members.len() {
            for (b, &j) in members.iter().enumerate() {
                let t = series[a][n - 1][j];
                sums[(a, b)] += t;
                report.by_length = report.by_length.max((r.entries[(a, b)].re - t).abs());
            }
        }
    }
    for a in 0..members.len() {
        let mut row = 0.0;
        for (b, &j) in members.iter().enumerate() {
            let r = full.entries[(a, b)].re;
            row += r;
            report.total = report.total.max((r - sums[(a, b)]).abs());
            report.beyond = report.beyond.max(series[a][n_max][j]);
        }
        report.row_sum = report.row_sum.max((row - 1.0).abs());
    }
    Ok(report)
}

/// `R_S(G)` at `λ = 1` for a chain, rows and columns ordered like sorted `s`.
pub fn reduced_kernel(chain: &MarkovChain, s: &[usize]) -> Result<DMatrix<f64>> {
    let (graph, structural) = structural_for_chain(chain, s)?;
    let branches = enumerate_branches(&graph, &structural);
    let r = ReducedMatrix::from_branches(
        &graph,
        &branches,
        structural.members(),
        Complex64::new(1.0, 0.0),
        None,
        DEFAULT_TOL,
    )?;
    Ok(r.entries.map(|z| z.re))
}

/// Path of the chain observed at its visits to `S`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoppedChainSample {
    pub seed: u64,
    /// Steps of the underlying chain that were simulated.
    pub steps: usize,
    /// Sorted members of `S`; rows and columns of `counts` follow this order.
    pub states: Vec<usize>,
    /// `Y_0, Y_1, …` as vertex ids.
    #[serde(skip)]
    pub visits: Vec<usize>,
    /// `counts[a][b]` is the number of observed transitions `Y_n = a → Y_{n+1} = b`.
    pub counts: Vec<Vec<u64>>,
}

impl StoppedChainSample {
    /// Row-normalised counts; rows without transitions are zero.
    pub fn empirical(&self) -> DMatrix<f64> {
        let k = self.states.len();
        DMatrix::from_fn(k, k, |a, b| {
            let total: u64 = self.counts[a].iter().sum();
            if total == 0 {
                0.0
            } else {
                self.counts[a][b] as f64 / total as f64
            }
        })
    }

    /// JSON with seed, steps, one-based states, counts and the empirical matrix.
    pub fn to_json(&self) -> String {
        let emp = self.empirical();
        let rows: Vec<Vec<f64>> = (0..emp.nrows())
            .map(|a| emp.row(a).iter().copied().collect())
            .collect();
        let doc = serde_json::json!({
            "seed": self.seed,
            "steps": self.steps,
            "states": self.states.iter().map(|v| v + 1).collect::<Vec<_>>(),
            "visits": self.visits.len(),
            "counts": self.counts,
            "empirical": rows,
        });
        serde_json::to_string(&doc).expect("sample serialization cannot fail")
    }
}

/// Runs the chain for `steps` steps from `start` with a ChaCha8 stream seeded
/// by `seed` and records the visits to `s`.
///
/// Fails with [`Error::StuckSimulation`] when `s` is never visited.
pub fn simulate_stopped_chain(
    chain: &MarkovChain,
    s: &[usize],
    steps: usize,
    seed: u64,
    start: usize,
) -> Result<StoppedChainSample> {
    let mask = chain.state_mask(s)?;
    let n = chain.n_states();
    if start >= n {
        return Err(Error::MissingVertex(start));
    }
    let states: Vec<usize> = (0..n).filter(|&v| mask[v]).collect();
    let mut slot = vec![usize::MAX; n];
    for (a, &v) in states.iter().enumerate() {
        slot[v] = a;
    }
    let rows: Vec<(Vec<usize>, WeightedIndex<f64>)> = (0..n)
        .map(|i| {
            let targets: Vec<usize> = (0..n).filter(|&j| chain.p(i, j) > 0.0).collect();
            let weights: Vec<f64> = targets.iter().map(|&j| chain.p(i, j)).collect();
            let dist = WeightedIndex::new(weights).expect("rows of a chain sum to one");
            (targets, dist)
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![vec![0u64; states.len()]; states.len()];
    let mut visits = Vec::new();
    let mut x = start;
    if mask[x] {
        visits.push(x);
    }
    for _ in 0..steps {
        let (targets, dist) = &rows[x];
        x = targets[dist.sample(&mut rng)];
        if mask[x] {
            if let Some(&prev) = visits.last() {
                counts[slot[prev]][slot[x]] += 1;
            }
            visits.push(x);
        }
    }
    if visits.is_empty() {
        return Err(Error::StuckSimulation(steps));
    }
    Ok(StoppedChainSample {
        seed,
        steps,
        states,
        visits,
        counts,
    })
}

/// Per-entry 3-sigma binomial comparison of a sample against a kernel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandCheck {
    /// Entries compared (rows with at least one transition).
    pub entries: usize,
    pub within: usize,
    /// Largest total-variation distance between an empirical row and the kernel row.
    pub max_total_variation: f64,
}

impl BandCheck {
    pub fn fraction(&self) -> f64 {
        if self.entries == 0 {
            1.0
        } else {
            self.within as f64 / self.entries as f64
        }
    }
}

/// Checks `|p̂_ab − R_ab| ≤ 3 √(R_ab (1 − R_ab) / n_a)` entrywise, with `n_a`
/// the transitions observed out of row `a`.
pub fn band_check(sample: &StoppedChainSample, kernel: &DMatrix<f64>) -> BandCheck {
    let emp = sample.empirical();
    let mut check = BandCheck {
        entries: 0,
        within: 0,
        max_total_variation: 0.0,
    };
    for a in 0..emp.nrows() {
        let n_a: u64 = sample.counts[a].iter().sum();
        if n_a == 0 {
            continue;
        }
        let mut tv = 0.0;
        for b in 0..emp.ncols() {
            let r = kernel[(a, b)];
            let sigma = (r * (1.0 - r) / n_a as f64).max(0.0).sqrt();
            let diff = (emp[(a, b)] - r).abs();
            tv += diff;
            check.entries += 1;
            if diff <= 3.0 * sigma + 1e-12 {
                check.within += 1;
            }
        }
        check.max_total_variation = check.max_total_variation.max(tv / 2.0);
    }
    check
}

/// Stationary distribution `q P = q`, `Σ q = 1`, of a row-stochastic matrix by
/// a dense LU solve. Requires irreducibility.
pub fn stationary_distribution(p: &DMatrix<f64>) -> Result<DVector<f64>> {
    let chain = MarkovChain {
        transition: p.clone(),
    };
    if !chain.is_irreducible() {
        return Err(Error::Ambiguous);
    }
    let n = p.nrows();
    let mut a = p.transpose() - DMatrix::identity(n, n);
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    a.lu()
        .solve(&b)
        .ok_or_else(|| Error::invalid("stationary system is singular"))
}

/// `max_j |q_S(j) − π_R(j)|` where `q_S` is the stationary distribution of the
/// chain restricted to `s` and renormalised, and `π_R` the stationary
/// distribution of `R_S(G)` viewed as a chain on `s`.
pub fn verify_stationary_restriction(chain: &MarkovChain, s: &[usize]) -> Result<f64> {
    let q = stationary_distribution(&chain.transition)?;
    let r = reduced_kernel(chain, s)?;
    let pi = stationary_distribution(&r)?;
    let mut members = s.to_vec();
    members.sort_unstable();
    members.dedup();
    let mass: f64 = members.iter().map(|&v| q[v]).sum();
    Ok(members
        .iter()
        .enumerate()
        .map(|(a, &v)| (q[v] / mass - pi[a]).abs())
        .fold(0.0, f64::max))
}
