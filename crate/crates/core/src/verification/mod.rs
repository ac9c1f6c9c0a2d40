//! Independent oracles: finite-difference gradients, a dense reference for
//! one attention block, and the ablation grid runner.

pub mod ablation;
pub mod dense;
pub mod gradcheck;

pub use ablation::{run_ablation_grid, AblationAxes, AblationRow};
pub use dense::{dense_attention_reference, dense_attention_weights};
pub use gradcheck::{compare_gradients, fd_gradient_check, FdReport, Precision, TensorReport, FD_FLOOR, FD_STEP_F32, FD_STEP_F64};
