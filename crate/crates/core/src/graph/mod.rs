//! Weighted directed graphs with complex edge weights.
//!
//! A [`WeightedDigraph`] stores the weight function `ω(i, j)` of a directed
//! graph sparsely, row by row, and exposes the dense weighted adjacency matrix
//! `M_G = (ω(i, j))` on demand. Vertex ids are dense zero-based indices; the
//! on-disk formats in [`io`] use one-based ids.
//!
//! Removing a vertex leaves a tombstone so that the ids of the remaining
//! vertices do not move. [`WeightedDigraph::compact`] renumbers them.

pub mod io;

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Default absolute tolerance for comparing complex scalars.
pub const DEFAULT_TOL: f64 = 1e-12;

/// Tolerance for column sums of a stochastic matrix.
pub const STOCHASTIC_TOL: f64 = 1e-9;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct WeightedDigraph {
    /// `rows[i][j] = ω(i, j)`; only nonzero weights are stored.
    rows: Vec<BTreeMap<usize, Complex64>>,
    /// `cols[j]` holds every `i` with `(i, j)` an edge.
    cols: Vec<BTreeSet<usize>>,
    alive: Vec<bool>,
    stochastic: bool,
}

impl WeightedDigraph {
    /// Graph with `n` vertices and no edges.
    pub fn new(n: usize) -> Self {
        Self {
            rows: vec![BTreeMap::new(); n],
            cols: vec![BTreeSet::new(); n],
            alive: vec![true; n],
            stochastic: false,
        }
    }

    /// Builds a graph from `(i, j, weight)` triples. Zero weights are skipped.
    pub fn from_edges<I, W>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, W)>,
        W: Into<Complex64>,
    {
        let mut g = Self::new(n);
        for (i, j, w) in edges {
            let w = w.into();
            if w == Complex64::new(0.0, 0.0) {
                continue;
            }
            g.add_edge(i, j, w)?;
        }
        Ok(g)
    }

    /// Builds a graph whose weighted adjacency matrix is `m`.
    pub fn from_dense(m: &DMatrix<Complex64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::invalid("adjacency matrix must be square"));
        }
        let n = m.nrows();
        let mut g = Self::new(n);
        for i in 0..n {
            for j in 0..n {
                let w = m[(i, j)];
                if w != Complex64::new(0.0, 0.0) {
                    g.add_edge(i, j, w)?;
                }
            }
        }
        Ok(g)
    }

    pub fn from_dense_real(m: &DMatrix<f64>) -> Result<Self> {
        Self::from_dense(&m.map(|x| Complex64::new(x, 0.0)))
    }

    /// Number of id slots, including tombstones.
    pub fn capacity(&self) -> usize {
        self.alive.len()
    }

    /// Number of live vertices.
    pub fn n_vertices(&self) -> usize {
        self.alive.iter().filter(|&&a| a).count()
    }

    pub fn n_edges(&self) -> usize {
        self.rows.iter().map(BTreeMap::len).sum()
    }

    pub fn is_alive(&self, v: usize) -> bool {
        self.alive.get(v).copied().unwrap_or(false)
    }

    /// Live vertex ids in increasing order.
    pub fn vertices(&self) -> impl Iterator<Item = usize> + '_ {
        self.alive
            .iter()
            .enumerate()
            .filter_map(|(v, &a)| a.then_some(v))
    }

    pub fn has_tombstones(&self) -> bool {
        self.alive.iter().any(|&a| !a)
    }

    pub fn check_vertex(&self, v: usize) -> Result<()> {
        if self.is_alive(v) {
            Ok(())
        } else {
            Err(Error::MissingVertex(v))
        }
    }

    /// `ω(i, j)`, zero when `(i, j)` is not an edge.
    pub fn weight(&self, i: usize, j: usize) -> Complex64 {
        self.rows
            .get(i)
            .and_then(|r| r.get(&j))
            .copied()
            .unwrap_or_default()
    }

    pub fn loop_weight(&self, i: usize) -> Complex64 {
        self.weight(i, i)
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.rows.get(i).is_some_and(|r| r.contains_key(&j))
    }

    /// Out-neighbours `j` of `i` with `ω(i, j)`, loop included.
    pub fn successors(&self, i: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        self.rows[i].iter().map(|(&j, &w)| (j, w))
    }

    /// In-neighbours `i` of `j`, i.e. the nonzero rows of column `j`.
    pub fn predecessors(&self, j: usize) -> impl Iterator<Item = usize> + '_ {
        self.cols[j].iter().copied()
    }

    pub fn out_degree(&self, i: usize) -> usize {
        self.rows[i].len()
    }

    pub fn in_degree(&self, j: usize) -> usize {
        self.cols[j].len()
    }

    /// All edges `(i, j, ω(i, j))` in row-major order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.iter().map(move |(&j, &w)| (i, j, w)))
    }

    pub fn add_vertex(&mut self) -> usize {
        self.rows.push(BTreeMap::new());
        self.cols.push(BTreeSet::new());
        self.alive.push(true);
        self.stochastic = false;
        self.alive.len() - 1
    }

    /// Inserts a new edge. Fails if the edge exists or the weight is zero.
    pub fn add_edge(&mut self, i: usize, j: usize, w: impl Into<Complex64>) -> Result<()> {
        let w = w.into();
        self.check_vertex(i)?;
        self.check_vertex(j)?;
        if w == Complex64::new(0.0, 0.0) {
            return Err(Error::invalid(format!("edge ({i}, {j}) has zero weight")));
        }
        if self.rows[i].contains_key(&j) {
            return Err(Error::DuplicateEdge(i, j));
        }
        self.rows[i].insert(j, w);
        self.cols[j].insert(i);
        self.stochastic = false;
        Ok(())
    }

    /// Overwrites the weight of an existing edge.
    pub fn set_weight(&mut self, i: usize, j: usize, w: impl Into<Complex64>) -> Result<()> {
        let w = w.into();
        if w == Complex64::new(0.0, 0.0) {
            return Err(Error::invalid(format!("edge ({i}, {j}) has zero weight")));
        }
        match self.rows.get_mut(i).and_then(|r| r.get_mut(&j)) {
            Some(slot) => {
                *slot = w;
                self.stochastic = false;
                Ok(())
            }
            None => Err(Error::MissingEdge(i, j)),
        }
    }

    /// Removes an edge and returns its weight.
    pub fn remove_edge(&mut self, i: usize, j: usize) -> Result<Complex64> {
        let w = self
            .rows
            .get_mut(i)
            .and_then(|r| r.remove(&j))
            .ok_or(Error::MissingEdge(i, j))?;
        self.cols[j].remove(&i);
        self.stochastic = false;
        Ok(w)
    }

    /// Removes `v` with all incident edges, leaving a tombstone.
    pub fn remove_vertex(&mut self, v: usize) -> Result<()> {
        self.check_vertex(v)?;
        let outs: Vec<usize> = self.rows[v].keys().copied().collect();
        for j in outs {
            self.cols[j].remove(&v);
        }
        let ins: Vec<usize> = self.cols[v].iter().copied().collect();
        for i in ins {
            self.rows[i].remove(&v);
        }
        self.rows[v].clear();
        self.cols[v].clear();
        self.alive[v] = false;
        self.stochastic = false;
        Ok(())
    }

    /// Σ_i ω(i, j).
    pub fn column_sum(&self, j: usize) -> Complex64 {
        self.cols[j].iter().map(|&i| self.rows[i][&j]).sum()
    }

    /// Divides column `j` by its sum. Returns the scale factor applied.
    pub fn normalize_column(&mut self, j: usize) -> Result<f64> {
        let sum = self.column_sum(j);
        if sum.norm() == 0.0 {
            return Err(Error::Dangling(j));
        }
        if sum.im.abs() > DEFAULT_TOL || sum.re <= 0.0 {
            return Err(Error::InvalidMode(format!(
                "column {j} has non-positive real sum"
            )));
        }
        let scale = 1.0 / sum.re;
        let rows: Vec<usize> = self.cols[j].iter().copied().collect();
        for i in rows {
            if let Some(w) = self.rows[i].get_mut(&j) {
                *w *= scale;
            }
        }
        self.stochastic = false;
        Ok(scale)
    }

    /// Dense `capacity × capacity` weighted adjacency matrix; tombstones are zero.
    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let n = self.capacity();
        let mut m = DMatrix::zeros(n, n);
        for (i, j, w) in self.edges() {
            m[(i, j)] = w;
        }
        m
    }

    /// Real part of [`to_dense`](Self::to_dense).
    pub fn to_dense_real(&self) -> DMatrix<f64> {
        self.to_dense().map(|z| z.re)
    }

    pub fn is_real(&self) -> bool {
        self.edges().all(|(_, _, w)| w.im == 0.0)
    }

    /// Whether the graph satisfies: no loops, real weights in `(0, 1]` and
    /// every live column summing to one within `tol`.
    pub fn check_stochastic(&self, tol: f64) -> Result<()> {
        for (i, j, w) in self.edges() {
            if i == j {
                return Err(Error::InvalidMode(format!("loop at vertex {i}")));
            }
            if w.im != 0.0 || !(w.re > 0.0 && w.re <= 1.0 + tol) {
                return Err(Error::InvalidMode(format!(
                    "weight of ({i}, {j}) is not a probability"
                )));
            }
        }
        for j in self.vertices() {
            if self.cols[j].is_empty() {
                return Err(Error::Dangling(j));
            }
            let s = self.column_sum(j).re;
            if (s - 1.0).abs() > tol {
                return Err(Error::InvalidMode(format!("column {j} sums to {s}, not 1")));
            }
        }
        Ok(())
    }

    /// Validates stochasticity and sets the stochastic flag.
    pub fn mark_stochastic(&mut self, tol: f64) -> Result<()> {
        self.check_stochastic(tol)?;
        self.stochastic = true;
        Ok(())
    }

    /// Whether [`mark_stochastic`](Self::mark_stochastic) succeeded since the
    /// last mutation.
    pub fn is_stochastic(&self) -> bool {
        self.stochastic
    }

    /// Drops tombstones. Returns the compacted graph and, for every old id,
    /// its new id.
    pub fn compact(&self) -> (Self, Vec<Option<usize>>) {
        let mut map = vec![None; self.capacity()];
        let mut next = 0;
        for v in self.vertices() {
            map[v] = Some(next);
            next += 1;
        }
        let mut g = Self::new(next);
        for (i, j, w) in self.edges() {
            let (Some(a), Some(b)) = (map[i], map[j]) else {
                continue;
            };
            g.rows[a].insert(b, w);
            g.cols[b].insert(a);
        }
        g.stochastic = self.stochastic;
        (g, map)
    }

    /// Same graph with every edge reversed (`M_G` transposed).
    pub fn transpose(&self) -> Self {
        let mut g = Self::new(self.capacity());
        g.alive.clone_from(&self.alive);
        for (i, j, w) in self.edges() {
            g.rows[j].insert(i, w);
            g.cols[i].insert(j);
        }
        g
    }
}
