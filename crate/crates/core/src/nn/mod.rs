//! Graph convolutional network, hand-derived gradients, Adam training and
//! weight persistence.

mod adam;
mod gcn;
mod io;
mod matrix;
mod train;

pub use adam::Adam;
pub use gcn::{
    argmax, cross_entropy, normalize_adjacency, softmax_rows, ForwardCache, GcnLayer, GcnModel,
    Gradients, Mode, ModelConfig, NormalizedAdjacency, BN_EPS, INPUT_WIDTH, PROB_CLAMP,
};
pub use io::{load_model, load_model_for, model_from_text, model_to_text, save_model};
pub use matrix::Matrix;
pub use train::{
    curves_csv, evaluate, smooth, top_k_accuracy, train, train_on_dataset, EpochRecord, Metrics,
    TrainConfig, TrainOutcome,
};
