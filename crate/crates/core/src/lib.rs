//! Monte-Carlo laboratory for the density of classifiers of small,
//! bias-free leaky-ReLU networks.
//!
//! Weight vectors are drawn uniformly from the unit hypersphere, their
//! true error is measured on a held-out set, and the resulting histogram
//! (the density of classifiers, [`DocHistogram`]) drives closed-form
//! predictions for the fraction of "bad" zero-training-error solutions.
//! The [`erm`] module samples those solutions by rejection so the
//! predictions can be checked against measured data.

pub mod bounds;
pub mod data;
pub mod doc;
pub mod erm;
mod error;
pub mod nn;
mod parallel;
pub mod sphere;
pub mod stats;

pub use bounds::{BoundCurve, BoundKind, BoundParams, Corollary1Bound};
pub use data::{GaussianProblem, LabeledDataset, Provenance};
pub use doc::{DocHistogram, DocSettings, EminPolicy};
pub use erm::{
    CorrelationDiagnostic, DataSource, QnSettings, QnSummary, SearchOutcome, TrialRecord, VolumePair, VolumeSettings,
};
pub use error::{Error, Result};
pub use nn::{Arch, WeightVector};
pub use sphere::{derive_stream, sample_unit_sphere, RngStream, GENERATOR_NAME};
