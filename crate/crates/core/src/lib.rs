//! Corpus analytics for the coupling between lexical style, author
//! attributes and social-network composition.
//!
//! The pipeline ingests timestamped messages, builds a mutual-mention
//! graph, assigns author gender from a first-name table, and then runs:
//!
//! * [`classifier`]: L2-regularized logistic regression over boolean
//!   bag-of-words features, with cross-validation and network-feature fusion.
//! * [`markers`]: Beta-Binomial tail tests for terms over-used by a group.
//! * [`categories`]: first-match word categorization and per-group shares.
//! * [`clustering`]: hard EM over log-linear sparse multinomials.
//! * [`network`] and [`stats`]: homophily statistics, correlations and
//!   Fisher intervals.
//! * [`synth`]: synthetic corpora with planted ground truth.
//!
//! Numeric code is generic over [`Real`] (implemented for `f32` and `f64`).
//! The aliases at the crate root fix the scalar to `f64`, which is what the
//! command-line pipeline uses.

// `!(x > y)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod categories;
pub mod classifier;
pub mod clustering;
pub mod corpus;
pub mod error;
pub mod features;
pub mod markers;
pub mod network;
pub mod pipeline;
pub mod rng;
pub mod stats;
pub mod synth;

mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

pub use corpus::{Author, Gender, NameGenderTable, RawMessage};
pub use features::{FeatureMode, Vocabulary};
pub use network::{HomophilyStats, SocialGraph};

pub type FeatureVector = features::FeatureVector<f64>;
pub type LogRegModel = classifier::LogRegModel<f64>;
pub type CvReport = classifier::CvReport<f64>;
pub type TrainConfig = classifier::TrainConfig<f64>;
pub type ClusterModel = clustering::ClusterModel<f64>;
pub type EmConfig = clustering::EmConfig<f64>;
pub type MarkerTable = markers::MarkerTable<f64>;
pub type CorrelationResult = stats::CorrelationResult<f64>;
pub type BinnedSeries = stats::BinnedSeries<f64>;

pub type FeatureVector32 = features::FeatureVector<f32>;
pub type LogRegModel32 = classifier::LogRegModel<f32>;
pub type ClusterModel32 = clustering::ClusterModel<f32>;
