//! Distance-based uncertainty: datasets, standardization, reference sets,
//! and bounds on distances over boxes.

pub mod dataset;
pub mod distance;
pub mod kmeans;

pub use dataset::Dataset;
pub use distance::{
    alpha_limit, big_m, distance, max_dist_to_box, max_dist_to_zbox, min_dist_to_box,
    min_dist_to_zbox, min_distance, project_onto_box, Metric, RefKind, ReferenceSet,
    Standardizer,
};
pub use kmeans::{kmeans, KMeansResult};
