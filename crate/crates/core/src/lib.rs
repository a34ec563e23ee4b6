//! Latent-space generative model of short product-search queries, together
//! with an attention-pooled trigram embedder, a hashed bag-of-trigrams
//! baseline, reformulation metrics and a Monte Carlo validation harness.
//!
//! Module map:
//!
//! * [`linalg`], [`rng`], [`types`]: shared vectors/matrices, the seeded
//!   random stream contract and the domain types.
//! * [`genmodel`]: products on the unit sphere emit trigram sequences through
//!   a per-position exponential/uniform mixture; queries are linked when their
//!   products are close.
//! * [`embedder`]: attention-weighted trigram averaging trained with a
//!   negative-sampling sigmoid loss and hand-derived gradients.
//! * [`baseline`]: 300-bucket hashed trigram bags with Bray-Curtis retrieval.
//! * [`eval`]: Query Precision@K, Product Recall@K, F1 and brute-force best
//!   achievable scores.
//! * [`theory`]: BLUE weights, estimator variances, PMI estimation and the
//!   per-position variance/attention reports.

pub mod baseline;
pub mod embedder;
pub mod error;
pub mod eval;
pub mod genmodel;
pub mod io;
pub mod kv;
pub mod linalg;
pub mod presets;
pub mod rng;
pub mod stats;
pub mod theory;
pub mod types;

pub use error::{Error, Result};
