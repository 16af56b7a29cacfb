//! A small convolutional network engine: NHWC tensors, layer kernels with
//! hand-written backward passes, sparse categorical cross-entropy, Adam and
//! a binary checkpoint format. Generic over [`Scalar`](crate::Scalar).

mod adam;
mod checkpoint;
mod loss;
mod model;
mod ops;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{
    checkpoint_bytes, checkpoint_from_bytes, load_checkpoint, save_checkpoint, MAGIC, VERSION,
};
pub use loss::{scc_loss, LossOutput, PROB_EPSILON};
pub use model::{
    argmax_rows, build_reference_model, Architecture, LayerSpec, LossAndGrads, Mode, Model, Shape,
    CLASS_COUNT,
};
pub use ops::{
    conv3x3_backward, conv3x3_forward, dense_backward, dense_forward, dropout_train, maxpool2x2,
    maxpool2x2_backward, relu, relu_backward, softmax, ConvGrads, DenseGrads,
};
pub use tensor::Tensor4;
