//! Offline multi-teacher knowledge assembly and a small distillation trainer.
//!
//! Teacher logits are dumped once, scored per sample against a preferred
//! knowledge distribution, and merged into a single soft target before the
//! student ever trains. Student training therefore costs the same as
//! single-teacher distillation no matter how many teachers contribute.

pub mod config;
pub mod datagen;
pub mod ensemble;
pub mod error;
pub mod harness;
pub mod matrix;
pub mod numerics;
pub mod preprocess;
pub mod trainer;

pub use config::{DistillConfig, Strategy};
pub use datagen::{gen_dataset, DataParams, Dataset, Modality, Prng, Split};
pub use ensemble::{
    assemble, build_targets, compute_weights, make_gtd, make_pkd, similarity_ce, similarity_kl,
    EnsembleWeights, LabelVector, PkdParams, TargetSet, TeacherBank, WeightMode,
};
pub use error::{FormatError, Result, UkdError};
pub use matrix::{LogitMatrix, Matrix, ProbMatrix};
pub use numerics::{cross_entropy_dist, entropy, kl_divergence, softmax_t, top1, Temperature};
pub use trainer::{evaluate, forward, train, StudentModel, TrainOutcome};
