//! Corpus analysis for narrative flattening in story continuations.
//!
//! Given matched human and model continuations of the same story prefixes,
//! with sentence-level embeddings and affect probabilities, the crate
//! measures three facets of variation and attaches uncertainty to each:
//!
//! - thematic motion ([`theme`]): coefficient of variation of consecutive
//!   sentence-embedding jumps within a continuation;
//! - affective prevalence ([`affect`]): top-1 affect-family shares and
//!   affective charge;
//! - linguistic diversity ([`style`]): unbiased MMD² to the human style
//!   reference, across-story centroid variance, PCA views and in-manifold
//!   precision.
//!
//! [`stats`] supplies bootstrap intervals, mixed models and multiple-testing
//! correction, [`genclient`] talks to OpenAI-compatible endpoints to produce
//! continuations and embeddings, and [`pipeline`] ties everything into
//! report tables.

pub mod affect;
pub mod corpus;
pub mod formats;
pub mod genclient;
pub mod numeric;
pub mod pipeline;
pub mod seed;
pub mod stats;
pub mod style;
pub mod synth;
pub mod theme;
