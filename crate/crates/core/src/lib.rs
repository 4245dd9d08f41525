//! Entangled kernel learning for vector-valued regression.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alignment;
pub mod error;
pub mod features;
pub mod harness;
pub mod model_file;
pub mod ovk;
pub mod separability;
pub mod solver;
pub mod tensor;

pub use alignment::{centered_alignment, ekl_gradient, ekl_objective, learn_entangled_kernel, EklObjectiveConfig};
pub use error::{EklError, Result};
pub use features::{FeatureMap, FeatureMethod, ScalarKernel};
pub use ovk::EntangledModel;
pub use separability::{ppt_check, PptVerdict};
pub use solver::{FitMode, FitResult};
pub use tensor::BlockMatrix;
