//! Label noise: corruption of training labels and per-batch synthetic variants.

pub mod inject;
pub mod neighbors;
pub mod synthetic;

pub use inject::{cifar10_class_map, inject_asymmetric, inject_symmetric, NoiseKind, NoiseSpec};
pub use neighbors::{build_feature_index, topk_neighbors, FeatureIndex, DEFAULT_NEIGHBORS};
pub use synthetic::{generate_synthetic_labels, rho_from_fraction, SyntheticLabelSet};
