//! Dense tensors, a reverse-mode tape, layer kernels, Adam and a
//! finite-difference gradient checker.

mod gradcheck;
mod graph;
mod layers;
mod optim;
mod rng;
mod tensor;

pub use gradcheck::{grad_check, Coordinates};
pub use graph::{Graph, Var, PROB_CLAMP};
pub use layers::{
    check_dropout_rate, dropout, dropout_mask, layer_norm, sigmoid, LayerNormParams, LAYER_NORM_EPS,
};
pub use optim::{Adam, AdamConfig};
pub use rng::RngStream;
pub use tensor::{Gradients, ParamId, ParamStore, Real, Tensor};
