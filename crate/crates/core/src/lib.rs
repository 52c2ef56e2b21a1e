//! Self-distilled neural rankers.
//!
//! The crate is organised bottom-up:
//!
//! - [`data`]: query-grouped datasets, SVMLight I/O, synthetic generation, splits
//! - [`model`]: the feed-forward scoring network with hand-written backprop
//! - [`loss`]: pointwise, pairwise and listwise ranking losses with score gradients
//! - [`metrics`]: DCG / NDCG@k and dataset-level reports
//! - [`distill`]: teacher score transforms and the combined distillation objective
//! - [`train`]: Adam training with early stopping and the two-phase pipeline
//! - [`gradcheck`]: finite-difference checks of every analytic gradient
//! - [`theory`]: the one-parameter toy analysis and the noisy-label mixing sweep

pub mod config;
pub mod data;
pub mod distill;
pub mod gradcheck;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod theory;
pub mod train;

pub use data::{Dataset, QueryList, SyntheticConfig};
pub use distill::{DistillSpec, TeacherScores, TransformSpec};
pub use loss::LossKind;
pub use metrics::MetricReport;
pub use model::{ParamGrads, ScoringModel};
pub use train::{TrainConfig, TrainHistory};
