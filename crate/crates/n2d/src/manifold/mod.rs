//! Manifold re-embedding: a shared kNN substrate and three interchangeable
//! learners (fuzzy-graph layout, exact t-SNE, Isomap).

pub mod isomap;
pub mod knn;
pub mod spectral;
pub mod tsne;
pub mod umap;

pub use knn::{knn_graph, KnnMode, NeighborGraph};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{N2dError, Result};

/// Where an embedding's coordinates came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Raw,
    Autoencoded,
    Manifold(ManifoldKind),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManifoldKind {
    Umap,
    Tsne,
    Isomap,
    None,
}

impl std::fmt::Display for ManifoldKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ManifoldKind::Umap => "umap",
            ManifoldKind::Tsne => "tsne",
            ManifoldKind::Isomap => "isomap",
            ManifoldKind::None => "none",
        };
        f.write_str(s)
    }
}

/// n samples in an m-dimensional space, tagged with provenance.
#[derive(Debug, Clone)]
pub struct Embedding {
    pub coords: Array2<f64>,
    pub provenance: Provenance,
}

impl Embedding {
    pub fn new(coords: Array2<f64>, provenance: Provenance) -> Result<Self> {
        if coords.ncols() == 0 {
            return Err(N2dError::Precondition("embedding needs m >= 1".into()));
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(N2dError::Numerical(
                "embedding contains non-finite coordinates".into(),
            ));
        }
        Ok(Embedding { coords, provenance })
    }

    pub fn raw(coords: Array2<f64>) -> Result<Self> {
        Embedding::new(coords, Provenance::Raw)
    }

    pub fn n_samples(&self) -> usize {
        self.coords.nrows()
    }

    pub fn dim(&self) -> usize {
        self.coords.ncols()
    }
}

/// Per-learner parameters for [`manifold_fit`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ManifoldParams {
    Umap(umap::UmapConfig),
    Tsne(tsne::TsneConfig),
    Isomap(isomap::IsomapConfig),
    None,
}

impl ManifoldParams {
    pub fn kind(&self) -> ManifoldKind {
        match self {
            ManifoldParams::Umap(_) => ManifoldKind::Umap,
            ManifoldParams::Tsne(_) => ManifoldKind::Tsne,
            ManifoldParams::Isomap(_) => ManifoldKind::Isomap,
            ManifoldParams::None => ManifoldKind::None,
        }
    }
}

/// Dispatches to the configured manifold learner. `None` returns the input
/// unchanged so the pipeline can run its no-manifold ablation.
pub fn manifold_fit(emb: &Embedding, params: &ManifoldParams) -> Result<Embedding> {
    match params {
        ManifoldParams::Umap(cfg) => umap::umap_fit(emb, cfg),
        ManifoldParams::Tsne(cfg) => tsne::tsne_fit(emb, cfg),
        ManifoldParams::Isomap(cfg) => isomap::isomap_fit(emb, cfg),
        ManifoldParams::None => Ok(emb.clone()),
    }
}
