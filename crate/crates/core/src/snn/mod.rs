//! Soft nearest neighbor loss, temperature search, cross-set entanglement, and the
//! triplet-loss baseline.

mod batch;
mod loss;
mod optimize;
mod temperature;
mod triplet;


pub use batch::LabeledBatch;
pub use loss::{snn_loss, snn_loss_grad, SnnGradient, SnnResult};
pub(crate) use loss::{snn_loss_from_distances, snn_loss_grad_with_distances};
pub use optimize::{
    cross_set_entanglement, optimized_snn_loss, OptimizedSnn, DEFAULT_TEMPERATURE_STEPS,
    DEFAULT_TEMPERATURE_STEP_SIZE,
};
pub use temperature::{
    Temperature, TemperatureState, MAX_INVERSE_TEMPERATURE, MIN_INVERSE_TEMPERATURE,
};
pub use triplet::{
    sample_triplets, triplet_grad, triplet_grad_for, triplet_loss, triplet_loss_for, Triplet,
    TripletConfig, TripletLoss,
};
