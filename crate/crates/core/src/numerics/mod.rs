//! Dense networks, analytic gradients, Adam, soft target updates and
//! Gumbel-Softmax sampling.

pub mod checkpoint;
pub mod gumbel;
pub mod net;
pub mod optim;
pub mod real;

pub use checkpoint::Bundle;
pub use gumbel::{
    argmax, gumbel_noise, gumbel_softmax_sample, gumbel_softmax_with_noise, log_sum_exp, softmax,
    GumbelSample,
};
pub use net::{Activation, Architecture, DenseNet, ForwardTrace, Gradients, Layer, LayerGradient};
pub use optim::{soft_update, AdamConfig, OptimState};
pub use real::{Precision, Real};
