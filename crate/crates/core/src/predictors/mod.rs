//! Downstream inference algorithms: K-NN collaborative filtering and a small
//! feed-forward network.

pub mod knn;
pub mod mlp;

pub use knn::{adjusted_cosine_similarity, knn_predict, knn_predict_all, KnnConfig};
pub use mlp::{
    gradient_check, load_checkpoint, mlp_predict_row, mlp_train, save_checkpoint,
    GradientCheckReport, MlpModel, TrainConfig, TrainReport,
};
