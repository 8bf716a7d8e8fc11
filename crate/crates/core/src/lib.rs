//! Barnes-Hut-SNE: t-SNE embeddings in O(N log N) time and O(N) memory.
//!
//! The pipeline is: load a data matrix ([`io`]), optionally reduce it with
//! PCA ([`pca`]), find exact nearest neighbors with a vantage-point tree
//! ([`vptree`]), build sparse input affinities ([`affinity`]), and optimize
//! the embedding ([`optimizer`]) with gradients approximated on a
//! quadtree/octree ([`spacetree`], [`gradient`]).
//!
//! ```no_run
//! use bhsne::{io, pipeline, RunConfig};
//!
//! let (data, labels) = io::load_csv("digits.csv", true)?;
//! let out = pipeline::embed(&data, labels.as_ref(), &RunConfig::default())?;
//! io::write_embedding("embedding.csv", &out.result.embedding, labels.as_ref())?;
//! # Ok::<(), bhsne::Error>(())
//! ```

pub mod affinity;
pub mod bench;
pub mod config;
pub mod error;
pub mod gradient;
pub mod io;
pub mod matrix;
pub mod metrics;
pub mod optimizer;
pub mod pca;
pub mod pipeline;
pub mod spacetree;
pub mod vptree;

pub use config::{Algorithm, Condition, RunConfig};
pub use error::{Error, Result};
pub use matrix::{DataMatrix, Embedding, LabelVector};
