//! Synthetic multi-label dataset and trainer.
//!
//! Six geometric motifs, each confined to its own cell of a 3×2 grid, are
//! drawn independently with probability ½ on a noisy background. Because the
//! generator knows where every motif lies, explanations can be checked
//! against ground-truth masks.

mod augment;
mod classify;
mod dataset;
mod io;
mod train;

pub use augment::{augment, Augmentation, Rotation};
pub use classify::{
    bce_loss, evaluate_classifier, label_cooccurrence, metrics_from_predictions, predict, ClassifierMetrics, Counts,
    Scores,
};
pub use dataset::{generate_dataset, generate_sample, split_validation, DatasetConfig, Motif, SampleRecord};
pub use io::{labels_csv, load_dataset, save_dataset, sidecar_path, DATASET_MAGIC};
pub use train::{mean_loss, train, EpochLog, TrainConfig, TrainLog};
