//! Gradients of multilayer perceptrons by error backpropagation, built on
//! derivative amplification coefficients and cross-checked against their
//! recursive definition and against finite differences.

pub mod backprop;
pub mod dac;
mod error;
pub mod gradcheck;
pub mod model;
pub mod network;
pub mod trainer;
pub mod verify;

pub use backprop::{
    backpropagate_error_coefficients, bp_reg, epsilon_regression, error_coefficients_by_definition,
    error_gradient, gradient_from_epsilon, output_error_coefficients, EpsilonVector,
    ErrorCoefficients, Gradient,
};
pub use dac::{
    dac_backward_table, dac_by_definition, dac_table_by_definition, output_jacobian_wrt_weights,
    DacTable, OutputJacobian,
};
pub use error::{Error, Result};
pub use gradcheck::{
    compare_gradients, finite_difference_gradient, finite_difference_output_jacobian, rel_error,
    ComparisonReport,
};
pub use model::{load_model, save_model, Model};
pub use network::{forward, init_weights, ActivationKind, ForwardTrace, Topology, WeightVector};
pub use trainer::{
    error_value, load_dataset, sgd_step, total_error, train, Dataset, TrainConfig, TrainHistory,
};
pub use verify::{run_verify, VerifyConfig, VerifyReport};
