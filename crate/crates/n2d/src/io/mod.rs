//! Artifact serialization: a versioned binary tensor container plus CSV
//! import/export for embeddings and assignments.

pub mod container;
pub mod export;

pub use container::{load_container, save_container, Container};
