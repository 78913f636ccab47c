//! Learning where a user wants objects put away.
//!
//! Pairwise "place together" ratings are factorized into biases and latent
//! factors, new users are fitted from a handful of probe ratings, objects
//! nobody has rated are scored through taxonomy experts, and the resulting
//! preference graph is split into containers by spectral clustering.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod catalog;
pub mod error;
pub mod evaluation;
pub mod experts;
pub mod factorization;
pub mod fixtures;
pub mod kmeans;
pub mod lbfgs;
pub mod partitioner;
pub mod probing;
pub mod ratings;

pub use catalog::{ContainerSet, ObjectCatalog, PairIndex};
pub use error::{Error, ErrorKind, Result};
pub use evaluation::{run_protocol, EvalReport, Method, ReportRow};
pub use experts::{ExpertMixture, KnownRatings, TaxonomyExpert};
pub use factorization::{FactorModel, StoredModel, TrainConfig};
pub use partitioner::{SpectralConfig, UserPreferences};
pub use probing::{Arrangement, NamedArrangement, ProbeSet, UserProfile};
pub use ratings::{RatingClass, RatingScale, RatingsDataset, RatingsMatrix};
