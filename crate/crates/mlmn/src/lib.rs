//! Fine-grained fact / law-article matching.
//!
//! The crate ships a small tensor core with reverse-mode
//! differentiation, a corpus model with synthetic data generation, a
//! premise/conclusion article parser backed by a from-scratch random
//! forest, the multi-level matching network itself, a training and
//! evaluation harness, and a downstream penalty-term predictor.
//!
//! The numeric core is generic over the scalar; everything above it
//! runs in double precision via the aliases below.

pub mod cli;
pub mod corpus;
pub mod decision;
pub mod model;
pub mod numerics;
pub mod parser;
pub mod training;

/// Double-precision tensor used throughout the model stack.
pub type Tensor = numerics::Tensor<f64>;
/// Double-precision computation tape.
pub type Tape = numerics::Tape<f64>;
/// Handle to a node on a double-precision tape.
pub type Var = numerics::Var<f64>;
/// Double-precision Adam state.
pub type AdamState = numerics::AdamState<f64>;
pub type AdamConfig = numerics::AdamConfig<f64>;
