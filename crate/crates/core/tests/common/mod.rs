//! Independent oracles and generators shared by the integration tests.
//!
//! None of these go through the reduction code: branches come from an
//! exhaustive walk over vertex sequences, reduced matrices from dense Schur
//! complements, spectra from nalgebra's complex Schur form and SVD.
#![allow(dead_code)]

use std::collections::BTreeSet;

use isored::WeightedDigraph;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

pub fn c(re: f64) -> C {
    C::new(re, 0.0)
}

pub fn fixtures() -> Value {
    serde_json::from_str(include_str!("../fixtures/derived.json")).unwrap()
}

pub fn complex_of(v: &Value) -> C {
    C::new(v[0].as_f64().unwrap(), v[1].as_f64().unwrap())
}

pub fn ids(v: &Value) -> Vec<usize> {
    v.as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_u64().unwrap() as usize - 1)
        .collect()
}

pub fn paths(v: &Value) -> BTreeSet<Vec<usize>> {
    v.as_array().unwrap().iter().map(ids).collect()
}

pub fn real_matrix(v: &Value) -> DMatrix<f64> {
    let rows = v.as_array().unwrap();
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.as_array().unwrap().len());
    DMatrix::from_fn(n, m, |i, j| rows[i][j].as_f64().unwrap())
}

pub fn complex_matrix(v: &Value) -> DMatrix<C> {
    let rows = v.as_array().unwrap();
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.as_array().unwrap().len());
    DMatrix::from_fn(n, m, |i, j| complex_of(&rows[i][j]))
}

pub fn reals(v: &Value) -> Vec<f64> {
    v.as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect()
}

/// Graph from fixture edges `[i, j, [re, im]]`.
pub fn graph_of(n: usize, edges: &Value) -> WeightedDigraph {
    let edges: Vec<(usize, usize, C)> = edges
        .as_array()
        .unwrap()
        .iter()
        .map(|e| {
            (
                e[0].as_u64().unwrap() as usize - 1,
                e[1].as_u64().unwrap() as usize - 1,
                complex_of(&e[2]),
            )
        })
        .collect();
    WeightedDigraph::from_edges(n, edges).unwrap()
}

/// Row-stochastic matrix from fixture triples `[i, j, p]`.
pub fn transition_of(n: usize, entries: &Value) -> DMatrix<f64> {
    let mut p = DMatrix::zeros(n, n);
    for e in entries.as_array().unwrap() {
        p[(
            e[0].as_u64().unwrap() as usize - 1,
            e[1].as_u64().unwrap() as usize - 1,
        )] = e[2].as_f64().unwrap();
    }
    p
}

/// Every simple vertex sequence `(v0, …, vk)`, `k ≥ 1`, following edges, with
/// interior outside `s`; `v0 = vk` is allowed. Exhaustive over sequences.
pub fn brute_branches(g: &WeightedDigraph, s: &[usize]) -> BTreeSet<Vec<usize>> {
    let n = g.capacity();
    let in_s: Vec<bool> = (0..n).map(|v| s.contains(&v)).collect();
    let mut out = BTreeSet::new();
    let mut stack: Vec<Vec<usize>> = g.vertices().map(|v| vec![v]).collect();
    while let Some(path) = stack.pop() {
        let last = *path.last().unwrap();
        if path.len() > 1 && (in_s[last] || last == path[0]) {
            continue;
        }
        for j in 0..n {
            if !g.has_edge(last, j) {
                continue;
            }
            let closes = j == path[0];
            if !closes && path.contains(&j) {
                continue;
            }
            let mut next = path.clone();
            next.push(j);
            out.insert(next.clone());
            if !closes {
                stack.push(next);
            }
        }
    }
    out
}

/// `M_SS + M_{S,S̄} (λI − M_{S̄S̄})^{-1} M_{S̄,S}` over live vertices.
pub fn schur_reduced(g: &WeightedDigraph, s: &[usize], lambda: C) -> DMatrix<C> {
    let m = g.to_dense();
    let rest: Vec<usize> = g.vertices().filter(|v| !s.contains(v)).collect();
    let mss = DMatrix::from_fn(s.len(), s.len(), |a, b| m[(s[a], s[b])]);
    if rest.is_empty() {
        return mss;
    }
    let msc = DMatrix::from_fn(s.len(), rest.len(), |a, b| m[(s[a], rest[b])]);
    let mcs = DMatrix::from_fn(rest.len(), s.len(), |a, b| m[(rest[a], s[b])]);
    let a = DMatrix::from_fn(rest.len(), rest.len(), |x, y| {
        let id = if x == y { lambda } else { c(0.0) };
        id - m[(rest[x], rest[y])]
    });
    let solved = a
        .lu()
        .solve(&mcs)
        .expect("λ is not a loop weight outside S");
    mss + msc * solved
}

/// `M + M_{·,S̄} (I − M_{S̄S̄})^{-1} M_{S̄,·}` for a graph without loops
/// outside `S`: every vertex pair, `λ = 1`.
pub fn extended_oracle(g: &WeightedDigraph, s: &[usize]) -> DMatrix<f64> {
    let m = g.to_dense_real();
    let n = m.nrows();
    let rest: Vec<usize> = g.vertices().filter(|v| !s.contains(v)).collect();
    if rest.is_empty() {
        return m;
    }
    let to = DMatrix::from_fn(n, rest.len(), |i, b| m[(i, rest[b])]);
    let from = DMatrix::from_fn(rest.len(), n, |a, j| m[(rest[a], j)]);
    let a = DMatrix::from_fn(rest.len(), rest.len(), |x, y| {
        f64::from(x == y) - m[(rest[x], rest[y])]
    });
    &m + to * a.lu().solve(&from).unwrap()
}

/// Eigenvalues from the complex Schur form.
pub fn eigenvalues(m: &DMatrix<C>) -> Vec<C> {
    let (_, t) = m.clone().schur().unpack();
    (0..t.nrows()).map(|i| t[(i, i)]).collect()
}

/// Eigenvalue condition number `1 / |yᴴx|` from unit left and right null
/// vectors of `M − λI`.
pub fn condition(m: &DMatrix<C>, lambda: C) -> f64 {
    let a = m - DMatrix::identity(m.nrows(), m.ncols()) * lambda;
    let x = null_vector(&a).0;
    let y = null_vector(&a.adjoint()).0;
    1.0 / y.dotc(&x).norm()
}

/// Eigenvalues with condition number at most `max`. A defective eigenvalue
/// splits under rounding into a ring of spurious, ill-conditioned ones.
pub fn well_conditioned(m: &DMatrix<C>, spectrum: &[C], max: f64) -> Vec<C> {
    spectrum
        .iter()
        .copied()
        .filter(|&l| condition(m, l) <= max)
        .collect()
}

/// Right singular vector of the smallest singular value, with the two
/// smallest singular values.
pub fn null_vector(a: &DMatrix<C>) -> (DVector<C>, f64, f64) {
    let svd = a.clone().svd(false, true);
    let v_t = svd.v_t.unwrap();
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&x, &y| svd.singular_values[x].total_cmp(&svd.singular_values[y]));
    let k = order[0];
    let v = DVector::from_fn(a.ncols(), |i, _| v_t[(k, i)].conj());
    let second = order
        .get(1)
        .map_or(f64::INFINITY, |&i| svd.singular_values[i]);
    (v, svd.singular_values[k], second)
}

/// Eigenvector of `M_G` (capacity-sized) for eigenvalue `lambda`.
pub fn eigenvector(g: &WeightedDigraph, lambda: C) -> DVector<C> {
    let m = g.to_dense();
    let a = &m - DMatrix::identity(m.nrows(), m.ncols()) * lambda;
    null_vector(&a).0
}

/// L1-normalised positive eigenvector of a column-stochastic `M_G` for
/// eigenvalue 1, on the live vertices (ascending ids).
pub fn dominant_oracle(g: &WeightedDigraph) -> Vec<f64> {
    let (compact, _) = g.compact();
    let u = eigenvector(&compact, c(1.0));
    let sum: C = u.iter().sum();
    u.iter().map(|z| (z / sum).re).collect()
}

/// `1 − |⟨a, b⟩| / (‖a‖ ‖b‖)`.
pub fn cosine_gap(a: &[C], b: &[C]) -> f64 {
    let dot: C = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
    let na = a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let nb = b.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    (1.0 - dot.norm() / (na * nb)).max(0.0)
}

/// First-return probabilities by matrix powers:
/// `P_SS` for `n = 1`, `P_{S,S̄} P_{S̄S̄}^{n−2} P_{S̄,S}` otherwise.
pub fn taboo_oracle(p: &DMatrix<f64>, s: &[usize], n: usize) -> DMatrix<f64> {
    let rest: Vec<usize> = (0..p.nrows()).filter(|v| !s.contains(v)).collect();
    let pss = DMatrix::from_fn(s.len(), s.len(), |a, b| p[(s[a], s[b])]);
    if n == 1 {
        return pss;
    }
    if rest.is_empty() {
        return DMatrix::zeros(s.len(), s.len());
    }
    let psc = DMatrix::from_fn(s.len(), rest.len(), |a, b| p[(s[a], rest[b])]);
    let pcs = DMatrix::from_fn(rest.len(), s.len(), |a, b| p[(rest[a], s[b])]);
    let pcc = DMatrix::from_fn(rest.len(), rest.len(), |a, b| p[(rest[a], rest[b])]);
    psc * pcc.pow((n - 2) as u32) * pcs
}

/// Stationary law of a row-stochastic matrix by a dense least-squares solve.
pub fn stationary_oracle(p: &DMatrix<f64>) -> DVector<f64> {
    let n = p.nrows();
    let mut a = DMatrix::zeros(n + 1, n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = p[(j, i)] - f64::from(i == j);
        }
        a[(n, i)] = 1.0;
    }
    let mut b = DVector::zeros(n + 1);
    b[n] = 1.0;
    let svd = a.svd(true, true);
    svd.solve(&b, 1e-14).unwrap()
}

/// Random sparse complex graph; loops allowed when `loops`.
pub fn random_complex_graph(
    rng: &mut ChaCha8Rng,
    n: usize,
    prob: f64,
    loops: bool,
) -> WeightedDigraph {
    let mut g = WeightedDigraph::new(n);
    for i in 0..n {
        for j in 0..n {
            if (i != j || loops) && rng.random::<f64>() < prob {
                let w = C::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                g.add_edge(i, j, w).unwrap();
            }
        }
    }
    g
}

/// Boolean-pattern primitivity by repeated squaring past Wielandt's bound.
pub fn pattern_primitive(m: &DMatrix<f64>) -> bool {
    let n = m.nrows();
    let mut a = m.map(|x| f64::from(x != 0.0));
    let mut power = 1usize;
    while power < (n - 1) * (n - 1) + 1 {
        a = (&a * &a).map(|x| f64::from(x != 0.0));
        power *= 2;
    }
    a.iter().all(|&x| x > 0.0)
}

/// Random irreducible aperiodic row-stochastic chain without self-loops:
/// a Hamiltonian cycle plus extra transitions up to `degree · n` in total.
pub fn random_chain(rng: &mut ChaCha8Rng, n: usize, degree: f64) -> DMatrix<f64> {
    loop {
        let mut order: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let mut p = DMatrix::zeros(n, n);
        for k in 0..n {
            p[(order[k], order[(k + 1) % n])] = rng.random_range(0.05..1.0);
        }
        let target = ((degree * n as f64) as usize).min(n * (n - 1));
        let mut count = n;
        while count < target {
            let (i, j) = (rng.random_range(0..n), rng.random_range(0..n));
            if i != j && p[(i, j)] == 0.0 {
                p[(i, j)] = rng.random_range(0.05..1.0);
                count += 1;
            }
        }
        for i in 0..n {
            let s: f64 = p.row(i).sum();
            p.row_mut(i).unscale_mut(s);
        }
        if pattern_primitive(&p) {
            return p;
        }
    }
}

/// Depth recursion evaluated directly: 0 on `s`, otherwise one more than
/// the deepest out-neighbour other than itself.
pub fn depth_oracle(g: &WeightedDigraph, s: &[usize]) -> Vec<Option<usize>> {
    fn go(g: &WeightedDigraph, s: &[usize], v: usize, memo: &mut Vec<Option<usize>>) -> usize {
        if let Some(d) = memo[v] {
            return d;
        }
        let d = if s.contains(&v) {
            0
        } else {
            let succ: Vec<usize> = g
                .successors(v)
                .map(|(j, _)| j)
                .filter(|&j| j != v)
                .collect();
            1 + succ
                .into_iter()
                .map(|j| go(g, s, j, memo))
                .max()
                .unwrap_or(0)
        };
        memo[v] = Some(d);
        d
    }
    let mut memo = vec![None; g.capacity()];
    for v in g.vertices() {
        go(g, s, v, &mut memo);
    }
    memo
}
