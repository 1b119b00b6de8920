//! Domain adaptation for multichannel EMG posture classification.
//!
//! The crate is organised bottom-up:
//!
//! * [`signals`] turns raw recordings into windowed MAV / variance / waveform
//!   length feature vectors and handles z-score normalization.
//! * [`kernels`] and [`lssvm`] provide the Gaussian-kernel one-vs-all LS-SVM
//!   that every learner builds on, including closed-form leave-one-out
//!   residuals.
//! * [`adapt`] holds the three transfer learners: Multi Adapt, MKAL and the
//!   two-layer H-L2L stack.
//! * [`baselines`] and [`modelsel`] provide the reference systems and the
//!   cross-validated grid search.
//! * [`synth`] generates deterministic multi-subject cohorts with controllable
//!   domain shift.
//! * [`harness`] runs the three transfer experiments and computes learning
//!   curves, confusion matrices and the similarity/correlation analyses.

pub mod adapt;
pub mod baselines;
pub mod error;
pub mod harness;
pub mod io;
pub mod kernels;
pub mod lssvm;
pub mod modelsel;
pub mod rng;
pub mod signals;
pub mod synth;

pub use adapt::hl2l::Hl2lModel;
pub use adapt::ma::{BetaWeights, MaModel};
pub use adapt::mkal::{MkalConfig, MkalModel};
pub use adapt::sources::SourceScores;
pub use error::{Error, Result};
pub use harness::analysis::{ConfusionMatrix, LearningCurve};
pub use harness::{ExperimentConfig, ExperimentKind, Method};
pub use kernels::KernelSpec;
pub use lssvm::{LssvmModel, Prediction};
pub use modelsel::Grid;
pub use signals::{Condition, Dataset, FeatureMode, NormStats, Recording, WindowSpec};
pub use synth::{CohortConfig, SubjectSpec};

/// Dense row-major-by-convention matrix: rows are samples.
pub type Matrix = nalgebra::DMatrix<f64>;
