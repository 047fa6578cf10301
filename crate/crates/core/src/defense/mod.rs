//! Defenses: rotation augmentation, MAD outlier detection on hidden
//! activations, and a t-SNE + RBF-SVM separability audit.

mod augment;
mod detect;
mod mad;
mod pca;
mod svm;
mod tsne;

pub use augment::{augment_rotations, rotate_at_inference, AugmentConfig, AugmentMode, AugmentedClassifier};
pub use detect::{
    detect_tsne_svm, evaluate_detector, mad_detection_report, AuditConfig, DetectionReport, TsneSvmOutcome,
};
pub use mad::{
    anomaly_index, mad, mad_detect, median, LabelMadReport, MadConfig, MadGrouping, MadReport, Scalarization,
    ANOMALY_THRESHOLD, MAD_SCALE,
};
pub use pca::{pca, Pca};
pub use svm::{
    grid_search_svm, kkt_violation, rbf_kernel, svm_accuracy, svm_predict, svm_train, GridChoice, SvmConfig,
    SvmModel,
};
pub use tsne::{affinities, kl_divergence, kl_gradient, similarities, tsne, Affinities, Embedding, EmbeddingConfig, TsneInit};
