//! On-disk layout of a [`StoredState`]:
//!
//! ```text
//! graph.json              graph with tombstones
//! structural.json         {"members": [...]}, one-based
//! branches.json           branch manifest
//! matrix.json             extended reduced matrix, sparse
//! reduced_eigen.json      dominant eigenvector of the reduced matrix
//! eigen.json              dominant eigenvector of M_G
//! ```

use std::fs;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{check_assumptions, StoredState, UpdateOptions};
use crate::error::{Error, Result};
use crate::graph::io;
use crate::reduction::{BranchSet, ExtendedReducedMatrix};
use crate::spectral::EigenPair;
use crate::structural::compute_depths;

#[derive(Serialize, Deserialize)]
struct Members {
    members: Vec<usize>,
}

impl StoredState {
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        fs::write(dir.join("graph.json"), io::to_json(&self.graph))?;
        let members = Members {
            members: self.structural.members().iter().map(|v| v + 1).collect(),
        };
        fs::write(
            dir.join("structural.json"),
            serde_json::to_string(&members)?,
        )?;
        fs::write(dir.join("branches.json"), self.branches.to_manifest())?;
        fs::write(dir.join("matrix.json"), self.extended.to_json())?;
        fs::write(dir.join("reduced_eigen.json"), self.reduced_eigen.to_json())?;
        fs::write(dir.join("eigen.json"), self.eigen.to_json())?;
        Ok(())
    }

    /// Reads a saved state as is. The graph must satisfy the standing
    /// assumptions; the derived data is not recomputed, so a damaged state
    /// loads and is caught by [`StoredState::check_equivalence`].
    pub fn load(dir: impl AsRef<Path>, options: UpdateOptions) -> Result<Self> {
        let dir = dir.as_ref();
        let read = |name: &str| fs::read_to_string(dir.join(name));
        let mut graph = io::parse_json(&read("graph.json")?)?;
        check_assumptions(&graph, options.stochastic_tol)?;
        graph.mark_stochastic(options.stochastic_tol)?;
        let members: Members = serde_json::from_str(&read("structural.json")?)?;
        let members: Vec<usize> = members
            .members
            .iter()
            .map(|&v| {
                v.checked_sub(1)
                    .ok_or_else(|| Error::invalid("member ids are one-based"))
            })
            .collect::<Result<_>>()?;
        let structural = compute_depths(
            &graph,
            &members,
            Complex64::new(1.0, 0.0),
            options.lambda_tol,
        )?;
        let mut branches = BranchSet::from_manifest(&read("branches.json")?)?;
        branches.ensure_capacity(graph.capacity());
        let extended = ExtendedReducedMatrix::from_json(&read("matrix.json")?)?;
        if extended.entries.nrows() != graph.capacity() {
            return Err(Error::invalid("stored matrix size differs from the graph"));
        }
        let reduced_eigen = EigenPair::from_json(&read("reduced_eigen.json")?)?;
        let eigen = EigenPair::from_json(&read("eigen.json")?)?;
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

    /// Overwrites one extended reduced matrix entry. Intended for negative
    /// controls of the equivalence check.
    pub fn corrupt_matrix_entry(&mut self, i: usize, j: usize, value: f64) {
        self.extended.entries[(i, j)] = value;
    }
}
