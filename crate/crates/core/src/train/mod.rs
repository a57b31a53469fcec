//! Loss, optimizers, the epoch loop and the finite-difference gradient check.

pub mod fit;
pub mod gradcheck;
pub mod loss;
pub mod optim;
pub mod report;

pub use fit::{fit, fit_with, loss_and_accuracy, Augment, Example, FitOptions, NoAugment};
pub use gradcheck::{finite_diff_check, FdOptions, FdReport, Precision, Stencil};
pub use loss::{sample_gradients, sparse_ce_loss, sparse_ce_softmax_grad, SampleOutcome, PROB_FLOOR};
pub use optim::{adam_step, sgd_step, AdamConfig, AdamState, Optimizer, OptimizerKind};
pub use report::{EpochRecord, TrainReport};
