//! Eigenpairs of reduced matrices and their lift back to the whole graph.
//!
//! If `M_G u = λ0 u` and `S` is λ0-structural, the restriction `u_S` is an
//! eigenvector of `R_S(G, λ0)` for the same eigenvalue. Conversely an
//! eigenvector of the reduced matrix determines `u` one depth level at a time:
//!
//! ```text
//! u_ℓ = Σ_j ω(ℓ, j) / (λ0 − ω(ℓ, ℓ)) · u_j      (ℓ of depth k, j of depth < k)
//! ```

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::WeightedDigraph;
use crate::reduction::{enumerate_branches, reduced_matrix, ReducedMatrix};
use crate::structural::StructuralSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// Entries sum to one (dominant, non-negative vectors).
    L1Positive,
    /// Euclidean norm one.
    L2Unit,
    /// Scale inherited from the input.
    AsGiven,
}

/// An eigenvalue with an eigenvector indexed by `support`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenPair {
    pub lambda: Complex64,
    /// Vertex (or row) ids, one per vector entry.
    pub support: Vec<usize>,
    pub vector: Vec<Complex64>,
    pub normalization: Normalization,
    /// `‖M v − λ v‖ / ‖v‖` against the matrix the pair was computed for.
    pub residual: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl EigenPair {
    pub fn real_vector(&self) -> Vec<f64> {
        self.vector.iter().map(|z| z.re).collect()
    }

    /// Vector scattered into a length-`n` array by support id.
    pub fn dense(&self, n: usize) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        for (&v, &x) in self.support.iter().zip(&self.vector) {
            out[v] = x;
        }
        out
    }

    pub fn normalized_l2(mut self) -> Self {
        let norm = l2(&self.vector);
        if norm > 0.0 {
            for x in &mut self.vector {
                *x /= norm;
            }
        }
        self.normalization = Normalization::L2Unit;
        self
    }

    /// Scales so the entries sum to one. Meant for vectors that are a
    /// complex multiple of a non-negative vector.
    pub fn normalized_l1_positive(mut self) -> Self {
        let sum: Complex64 = self.vector.iter().sum();
        if sum.norm() > 0.0 {
            for x in &mut self.vector {
                *x /= sum;
            }
        }
        self.normalization = Normalization::L1Positive;
        self
    }

    /// JSON with one-based support ids and `[re, im]` entries.
    pub fn to_json(&self) -> String {
        let doc = serde_json::json!({
            "lambda": [self.lambda.re, self.lambda.im],
            "normalization": self.normalization,
            "support": self.support.iter().map(|v| v + 1).collect::<Vec<_>>(),
            "vector": self.vector.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>(),
            "residual": self.residual,
            "converged": self.converged,
            "iterations": self.iterations,
        });
        serde_json::to_string(&doc).expect("eigenpair serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Doc {
            lambda: (f64, f64),
            normalization: Normalization,
            support: Vec<usize>,
            vector: Vec<(f64, f64)>,
            #[serde(default)]
            residual: f64,
            #[serde(default = "yes")]
            converged: bool,
            #[serde(default)]
            iterations: usize,
        }
        fn yes() -> bool {
            true
        }
        let d: Doc = serde_json::from_str(text)?;
        if d.support.len() != d.vector.len() || d.support.contains(&0) {
            return Err(Error::invalid("eigenvector support and entries disagree"));
        }
        Ok(Self {
            lambda: Complex64::new(d.lambda.0, d.lambda.1),
            support: d.support.iter().map(|v| v - 1).collect(),
            vector: d
                .vector
                .iter()
                .map(|&(re, im)| Complex64::new(re, im))
                .collect(),
            normalization: d.normalization,
            residual: d.residual,
            converged: d.converged,
            iterations: d.iterations,
        })
    }
}

pub(crate) fn l2(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// How [`power_iteration`] establishes primitivity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Primitivity {
    /// Verify that a power of the sparsity pattern is entrywise positive.
    Check,
    /// The caller vouches for it.
    Trusted,
}

#[derive(Clone, Copy, Debug)]
pub struct PowerOptions {
    /// Iteration cap `ℓ`.
    pub max_iters: usize,
    /// Stop once the L1 change between iterates drops below this.
    pub tol: f64,
    pub primitivity: Primitivity,
    /// Iterate `A + shift·I`; the shift is removed from the eigenvalue.
    pub shift: f64,
}

impl Default for PowerOptions {
    fn default() -> Self {
        Self {
            max_iters: 100_000,
            tol: 1e-14,
            primitivity: Primitivity::Check,
            shift: 0.0,
        }
    }
}

fn pattern_bits(m: &DMatrix<f64>) -> Vec<Vec<u64>> {
    let n = m.nrows();
    let words = n.div_ceil(64);
    let mut rows = vec![vec![0u64; words]; n];
    for i in 0..n {
        for j in 0..n {
            if m[(i, j)] != 0.0 {
                rows[i][j / 64] |= 1 << (j % 64);
            }
        }
    }
    rows
}

fn bool_product(a: &[Vec<u64>], b: &[Vec<u64>]) -> Vec<Vec<u64>> {
    let words = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| {
            let mut out = vec![0u64; words];
            for (wi, &word) in row.iter().enumerate() {
                let mut bits = word;
                while bits != 0 {
                    let k = wi * 64 + bits.trailing_zeros() as usize;
                    bits &= bits - 1;
                    for (o, &x) in out.iter_mut().zip(&b[k]) {
                        *o |= x;
                    }
                }
            }
            out
        })
        .collect()
}

/// Whether a non-negative square matrix is primitive, i.e. its power
/// `(n−1)² + 1` (Wielandt's bound) is entrywise positive.
pub fn is_primitive(m: &DMatrix<f64>) -> bool {
    let n = m.nrows();
    if n == 0 || m.ncols() != n || m.iter().any(|&x| x < 0.0) {
        return false;
    }
    let full = |p: &[Vec<u64>]| {
        p.iter()
            .all(|row| (0..n).all(|j| row[j / 64] & (1 << (j % 64)) != 0))
    };
    let base = pattern_bits(m);
    let mut exp = (n - 1) * (n - 1) + 1;
    let mut result: Option<Vec<Vec<u64>>> = None;
    let mut square = base;
    while exp > 0 {
        if exp & 1 == 1 {
            result = Some(match result {
                None => square.clone(),
                Some(r) => bool_product(&r, &square),
            });
        }
        exp >>= 1;
        if exp > 0 {
            square = bool_product(&square, &square);
        }
    }
    result.is_some_and(|r| full(&r))
}

/// Dominant eigenpair of a non-negative matrix by power iteration from the
/// uniform vector. The vector is L1-normalised and non-negative.
///
/// Hitting the iteration cap is not an error: the last iterate comes back with
/// `converged == false` and its residual.
pub fn power_iteration(matrix: &DMatrix<f64>, opts: &PowerOptions) -> Result<EigenPair> {
    let n = matrix.nrows();
    if n == 0 || matrix.ncols() != n {
        return Err(Error::invalid(
            "power iteration needs a nonempty square matrix",
        ));
    }
    if matrix.iter().any(|&x| x < 0.0 || !x.is_finite()) {
        return Err(Error::invalid(
            "power iteration needs a non-negative matrix",
        ));
    }
    if opts.primitivity == Primitivity::Check && !is_primitive(matrix) {
        return Err(Error::NotPrimitive);
    }
    let mut v = DVector::from_element(n, 1.0 / n as f64);
    let mut lambda = 0.0;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iters {
        iterations += 1;
        let mut w = matrix * &v;
        if opts.shift != 0.0 {
            w.axpy(opts.shift, &v, 1.0);
        }
        let norm = w.lp_norm(1);
        if norm == 0.0 {
            return Err(Error::IterationFailed {
                iterations,
                reason: "iterate vanished".into(),
                trace: Vec::new(),
            });
        }
        w /= norm;
        lambda = norm - opts.shift;
        let change = (&w - &v).lp_norm(1);
        v = w;
        if change < opts.tol {
            converged = true;
            break;
        }
    }
    let residual = (matrix * &v - lambda * &v).lp_norm(1) / v.lp_norm(1);
    Ok(EigenPair {
        lambda: Complex64::new(lambda, 0.0),
        support: (0..n).collect(),
        vector: v.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
        normalization: Normalization::L1Positive,
        residual,
        converged,
        iterations,
    })
}

/// `‖R_S(G, λ0) u_S − λ0 u_S‖ / ‖u_S‖` for an eigenpair of `M_G` whose support
/// covers the live vertices.
pub fn verify_eigen_restriction(
    graph: &WeightedDigraph,
    structural: &StructuralSet,
    pair: &EigenPair,
    tol: f64,
) -> Result<f64> {
    let full = pair.dense(
        graph
            .capacity()
            .max(pair.support.iter().max().map_or(0, |m| m + 1)),
    );
    let u_s: Vec<Complex64> = structural.members().iter().map(|&v| full[v]).collect();
    let norm_s = l2(&u_s);
    if norm_s <= 1e-12 * l2(&pair.vector) || norm_s == 0.0 {
        return Err(Error::DegenerateRestriction);
    }
    let r = reduced_matrix(graph, structural, pair.lambda, tol)?;
    let u = DVector::from_vec(u_s);
    let res = &r.entries * &u - &u * pair.lambda;
    Ok(res.norm() / norm_s)
}

/// Residual `‖M_G u − λ u‖ / ‖u‖` over the live vertices.
pub fn graph_residual(graph: &WeightedDigraph, lambda: Complex64, u: &[Complex64]) -> f64 {
    let mut num = 0.0;
    for i in graph.vertices() {
        let mut acc = -lambda * u[i];
        for (j, w) in graph.successors(i) {
            acc += w * u[j];
        }
        num += acc.norm_sqr();
    }
    let den = l2(u);
    if den == 0.0 {
        f64::INFINITY
    } else {
        num.sqrt() / den
    }
}

/// Reconstructs an eigenvector of `M_G` from an eigenvector `u_s` of the
/// reduced matrix (entries ordered like `structural.members()`).
///
/// Vertices are filled in increasing depth; each one reads only vertices of
/// smaller depth, so every vertex is written exactly once. The result keeps the
/// scale of `u_s` and is supported on the live vertices.
pub fn lift_eigenvector(
    graph: &WeightedDigraph,
    structural: &StructuralSet,
    lambda0: Complex64,
    u_s: &[Complex64],
    tol: f64,
) -> Result<EigenPair> {
    if u_s.len() != structural.len() {
        return Err(Error::invalid(format!(
            "reduced eigenvector has {} entries, structural set has {}",
            u_s.len(),
            structural.len()
        )));
    }
    let n = graph.capacity();
    let mut u = vec![Complex64::new(0.0, 0.0); n];
    for (&v, &x) in structural.members().iter().zip(u_s) {
        u[v] = x;
    }
    for v in structural.depth_order() {
        if structural.contains(v) {
            continue;
        }
        let denom = lambda0 - graph.loop_weight(v);
        if denom.norm() <= tol {
            return Err(Error::SingularWeight { vertex: v });
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, w) in graph.successors(v) {
            if j != v {
                acc += w * u[j];
            }
        }
        u[v] = acc / denom;
    }
    let residual = graph_residual(graph, lambda0, &u);
    let support: Vec<usize> = graph.vertices().collect();
    let vector = support.iter().map(|&v| u[v]).collect();
    Ok(EigenPair {
        lambda: lambda0,
        support,
        vector,
        normalization: Normalization::AsGiven,
        residual,
        converged: true,
        iterations: 0,
    })
}

/// Result of [`reduced_eigen_co_iteration`].
#[derive(Clone, Debug, PartialEq)]
pub struct CoIteration {
    pub lambda: f64,
    /// L2-unit eigenvector of `R_S(G, λ)`, ordered like the structural set.
    pub u_s: Vec<f64>,
    pub iterations: usize,
    /// `(λ_n, ‖R(λ_n) u_n − λ_n u_n‖)` per step.
    pub trace: Vec<(f64, f64)>,
}

/// Joint fixed-point iteration for the dominant eigenvalue and eigenvector of
/// `R_S(G, λ)` with non-negative real weights:
///
/// ```text
/// u_n = versor(R(λ_{n−1}) u_{n−1})
/// λ_n = ‖R(λ_{n−1}) u_{n−1}‖ / ‖u_{n−1}‖
/// ```
///
/// When successive eigenvalue steps stop shrinking the update is relaxed
/// geometrically, `λ_n = λ_{n−1}^{1−θ} ρ_n^θ`, halving `θ` each time. With
/// `θ = 1` this is the plain iteration above.
pub fn reduced_eigen_co_iteration(
    graph: &WeightedDigraph,
    structural: &StructuralSet,
    initial_lambda: f64,
    initial_u: Option<&[f64]>,
    max_iters: usize,
    tol: f64,
) -> Result<CoIteration> {
    if graph.edges().any(|(_, _, w)| w.im != 0.0 || w.re < 0.0) {
        return Err(Error::InvalidMode(
            "co-iteration needs non-negative real weights".into(),
        ));
    }
    if !(initial_lambda > 0.0) {
        return Err(Error::invalid("initial lambda must be positive"));
    }
    let s = structural.len();
    let mut u = match initial_u {
        Some(u0) if u0.len() == s => DVector::from_column_slice(u0),
        Some(_) => return Err(Error::invalid("initial vector length differs from |S|")),
        None => DVector::from_element(s, 1.0),
    };
    let n0 = u.norm();
    if n0 == 0.0 {
        return Err(Error::invalid("initial vector is zero"));
    }
    u /= n0;

    let branches = enumerate_branches(graph, structural);
    let eval = |lambda: f64| -> Result<DMatrix<f64>> {
        let r = ReducedMatrix::from_branches(
            graph,
            &branches,
            structural.members(),
            Complex64::new(lambda, 0.0),
            None,
            1e-12,
        )?;
        Ok(r.entries.map(|z| z.re))
    };

    let mut lambda = initial_lambda;
    let mut theta = 1.0;
    let mut prev_step = f64::INFINITY;
    let mut trace = Vec::new();
    for it in 0..=max_iters {
        let r = match eval(lambda) {
            Ok(r) => r,
            Err(e) => {
                return Err(Error::IterationFailed {
                    iterations: it,
                    reason: format!("reduced matrix not evaluable at {lambda}: {e}"),
                    trace,
                })
            }
        };
        let w = &r * &u;
        let residual = (&w - lambda * &u).norm();
        trace.push((lambda, residual));
        if residual <= tol * lambda.max(1.0) {
            return Ok(CoIteration {
                lambda,
                u_s: u.iter().copied().collect(),
                iterations: it,
                trace,
            });
        }
        if it == max_iters {
            break;
        }
        let rho = w.norm();
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::IterationFailed {
                iterations: it,
                reason: "iterate vanished or diverged".into(),
                trace,
            });
        }
        let mut next = lambda.powf(1.0 - theta) * rho.powf(theta);
        let mut step = (next - lambda).abs();
        while step >= prev_step && theta > 1.0 / 1024.0 {
            theta /= 2.0;
            next = lambda.powf(1.0 - theta) * rho.powf(theta);
            step = (next - lambda).abs();
        }
        prev_step = step.max(f64::MIN_POSITIVE);
        u = w / rho;
        lambda = next;
    }
    Err(Error::IterationFailed {
        iterations: max_iters,
        reason: "no convergence within the iteration cap".into(),
        trace,
    })
}
