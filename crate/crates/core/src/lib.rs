//! Real-time score following against an annotated reference recording.
//!
//! Two trackers run side by side on one target feature stream:
//!
//! - [`hr_tracker`]: windowed on-line time warping at the 10 ms frame rate,
//!   optionally with jump hypotheses at part boundaries (repeat the current
//!   part, continue, or skip up to six parts ahead).
//! - [`lr_tracker`]: a 300 ms-rate tracker that considers the whole score,
//!   matches the last 30 LR frames diagonally with part-boundary jumps, links
//!   those matches over time and flags itself reliable when its position moves
//!   with a plausible tempo.
//!
//! The [`integrator`] combines both and redirects the HR tracker when the
//! reliable LR tracker disagrees with it. [`mismatch_sim`] fabricates
//! structurally edited target versions with exact ground truth, and
//! [`eval_oracle`] scores alignments and provides offline DTW for tests.

pub mod config;
pub mod corpus;
pub mod error;
pub mod eval_oracle;
pub mod features;
pub mod hr_tracker;
pub mod integrator;
pub mod io;
pub mod lr_tracker;
pub mod mismatch_sim;
pub mod score_model;
pub mod synth;

pub use error::{Error, Result};
pub use features::{cosine_distance, downsample_lr, extract_mfcc, FeatureSequence, MfccConfig, Resolution};
pub use hr_tracker::{HrConfig, HrMode, HrTracker};
pub use integrator::{run_tracking, Integrator, LrAnchor, Model, PositionReport, TrackerConfig};
pub use lr_tracker::{LrReport, LrTracker};
pub use score_model::{load_reference, locate, Location, PartTable, ScoreReference};
