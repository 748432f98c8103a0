//! Isospectral graph reduction.
//!
//! Given a weighted digraph `G` and a λ-structural vertex set `S`, the reduced
//! matrix `R_S(G, λ)` sums branch weights between the vertices of `S`. Every
//! eigenpair of `M_G` restricts to an eigenpair of the reduced matrix, and the
//! depth hierarchy of `(G, S)` lifts it back. On top of that the crate
//! provides the Markov-chain reading of the reduced matrix and an incremental
//! updater for the dominant eigenvector of a large sparse stochastic graph.

pub mod bench;
pub mod error;
pub mod graph;
pub mod markov;
pub mod reduction;
pub mod spectral;
pub mod structural;
pub mod update;

pub use error::{Error, Result};
pub use graph::WeightedDigraph;
pub use reduction::{Branch, BranchSet, ExtendedReducedMatrix, ReducedMatrix};
pub use spectral::{EigenPair, Normalization};
pub use structural::{StructuralCheck, StructuralSet};
