//! A small CNN engine: convolution, max pooling, dense, ReLU, dropout and
//! softmax layers with hand-written backward passes, trained with Adam.

mod file;
pub mod kernels;
mod layers;
mod model;
mod network;
mod optim;
mod tensor;

pub use file::{decode_model, encode_model, load_model, save_model};
pub use layers::{
    conv2d, conv2d_backward, conv2d_padded, cross_entropy_loss, dropout, he_init, maxpool2d,
    maxpool2d_backward, relu, relu_backward, softmax, LayerSpec, Padding,
};
pub use model::{train, Classifier, TrainedModel};
pub use network::{frame_to_input, Network, NetworkConfig};
pub use optim::{adam_step, AdamState, TrainConfig};
pub use tensor::Tensor;
