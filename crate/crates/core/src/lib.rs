//! Agglomerative clustering by unmasking.
//!
//! Clusters are joined when a linear classifier trained to tell them apart
//! loses accuracy quickly as its most discriminant features are removed.
//! The crate covers the whole pipeline: data loading ([`dataset`]), the
//! linear SVM ([`svm`]), pair scoring ([`unmasking`]), the merge loop
//! ([`clusterer`]) and evaluation with a k-means baseline ([`evaluation`]).

pub mod clusterer;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod matrix;
pub mod seed;
pub mod svm;
pub mod unmasking;

pub use clusterer::{
    assign_nearest, cluster, compute_centroids, ClusterResult, ClusterState, ClusteringConfig,
    InitStrategy, MergeMode, MergeRecord,
};
pub use dataset::{AugmentationSpec, Dataset, ImageShape, InputFormat};
pub use error::{Error, Result};
pub use matrix::Matrix;
pub use svm::{LinearModel, SvmConfig};
pub use unmasking::{unmask_pair, FeatureStep, UnmaskingConfig, UnmaskingCurve};
