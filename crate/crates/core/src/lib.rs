//! Adversarial attacks on multivariate Gaussian inference: white-box and
//! grey-box attack construction, convexity analysis and evaluation.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod apps;
pub mod convexity;
pub mod error;
pub mod eval;
pub mod gauss;
pub mod greybox;
pub mod linalg;
pub mod models;
pub mod objective;
pub mod solvers;
pub mod stochastics;

pub use convexity::{Classification, ConvexityReport};
pub use error::{Error, Result};
pub use gauss::{GaussianJoint, Partition};
pub use greybox::{Prior, SgaConfig, SgaVariant};
pub use linalg::{Matrix, Vector};
pub use objective::{AttackProblem, BoxRegion, ObjectiveWeights};
pub use solvers::{Method, SolveConfig, SolveReport};
pub use stochastics::SeededStream;
