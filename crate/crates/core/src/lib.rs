//! Incrementally trained CBOW embeddings, ridge projections between typed
//! word pairs, and a diachronic evaluation harness for those projections.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the usual choices: `f32` for trained embeddings (matching the
//! word2vec file formats) and `f64` for regression and evaluation.

pub mod cbow;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod gold;
pub mod linalg;
pub mod pipeline;
pub mod projection;
pub mod scalar;
pub mod stats;
pub mod synth;
pub mod w2v;

pub use crate::corpus::Corpus;
pub use crate::embedding::{cosine, nearest_neighbors, EmbeddingModel, NeighborList};
pub use crate::error::{Error, Result};
pub use crate::gold::RelationPair;
pub use crate::linalg::Matrix;
pub use crate::scalar::Scalar;

pub type Embeddings = EmbeddingModel<f32>;
pub type Embeddings64 = EmbeddingModel<f64>;
pub type TrainState32 = cbow::TrainState<f32>;
pub type TrainState64 = cbow::TrainState<f64>;
pub type Projection = projection::ProjectionMatrix<f64>;
pub type Projection32 = projection::ProjectionMatrix<f32>;
pub type Design = projection::DesignSystem<f64>;
