//! N2D: deep clustering via autoencoded embeddings re-embedded with a local
//! manifold learner and clustered shallowly.
//!
//! The pipeline composes three stages over a dataset `X`:
//!
//! 1. a fully connected autoencoder learns an initial representation,
//! 2. a manifold learner (UMAP-style fuzzy graph, exact t-SNE, or Isomap)
//!    re-embeds that representation,
//! 3. a shallow clusterer (full-covariance GMM or k-means) discovers the
//!    clusters, evaluated by accuracy under optimal assignment and NMI.
//!
//! Each stage can be ablated (skip the autoencoder, skip the manifold step)
//! to attribute performance.

extern crate blas_src;

pub mod ae;
pub mod cluster;
pub mod data;
pub mod error;
pub mod io;
pub mod linalg;
pub mod manifold;
pub mod metrics;
pub mod pipeline;

pub use error::{N2dError, Result};
