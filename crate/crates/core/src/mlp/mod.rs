//! Fully connected ReLU classifier trained on cross-entropy plus a per-layer soft nearest
//! neighbor term, with hand-written backpropagation and Adam.

mod adam;
mod checkpoint;
mod composite;
mod measure;
mod model;
mod train;

pub use adam::AdamState;
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use composite::{
    backward, composite_loss, CompositeLoss, CompositeLossConfig, LayerSnn, MetricPolicy, SnnTerm,
    COSINE_WIDTH_THRESHOLD,
};
pub use measure::{measure_layer_entanglement, LayerEntanglement, MeasureMode};
pub use model::{
    accuracy, cross_entropy, forward, softmax, ForwardTrace, Gradients, Layer, MlpSpec, Params,
};
pub use train::{evaluate, train, MetricsLog, MetricsRow, ObjectiveSpec, Schedule};

pub(crate) use model::{argmax, backprop, softmax_ce_grad};
