//! Metric learning with per-class latent examples and data-dependent
//! margins.
//!
//! Training alternates a latent stage ([`latent`]) that summarises each class
//! by a few latent examples, and a metric stage ([`metric_stage`]) that fits
//! a Mahalanobis metric on triplets over those latents. [`driver`] runs the
//! alternation, [`eval`] scores k-NN classification, [`io`] reads datasets
//! and reads/writes models.

pub mod bench;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod driver;
pub mod error;
pub mod eval;
pub mod io;
mod linalg;
pub mod latent;
pub mod metric;
pub mod metric_stage;
pub mod triplet;

pub use config::TrainConfig;
pub use dataset::Dataset;
pub use error::{Error, Result};
pub use latent::LatentModel;
pub use metric::Metric;
pub use triplet::TripletConstraint;
pub use driver::{train_mapml, train_random_triplet_baseline, TrainResult};
pub use eval::{evaluate, EvalReport, ReferenceMode, ReferenceSet};
