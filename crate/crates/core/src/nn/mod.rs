//! Layers, network construction and hand-written backpropagation.

mod config;
mod network;
pub mod ops;

pub use config::{
    conv_output_dim, pool_output_dim, NetworkConfig, FACE_INPUT, FEATURE_MAPS, KERNEL_SIZE, MAX_CONVS, MOUTH_INPUT,
    POOL_SIZE,
};
pub use network::{ForwardMode, ForwardTrace, Gradients, Layer, LayerCache, Network, Params};
pub use ops::{
    conv_forward, dense_forward, dropout_forward, maxpool_forward, relu, relu_grad, sigmoid, softmax, Phase,
};
