//! Clustering metrics, significance testing and the k-means baseline.

mod contingency;
mod hungarian;
mod kmeans;
mod mcnemar;

use serde::{Deserialize, Serialize};

pub use self::contingency::{
    best_mapping, clustering_accuracy, correctness, entropy_of_counts, nmi, nmi_with,
    random_chance_acc, ContingencyTable, NmiNormalization,
};
pub use self::hungarian::solve_min_cost;
pub use self::kmeans::{kmeans, kmeans_single, KMeansConfig, KMeansResult};
pub use self::mcnemar::{mcnemar, McNemar, CHI2_1DOF_CRITICAL_001};

/// The metrics report written by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub acc: f64,
    pub nmi: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mcnemar: Option<McNemarReport>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McNemarReport {
    pub statistic: f64,
    pub significant: bool,
}

impl From<McNemar> for McNemarReport {
    fn from(m: McNemar) -> Self {
        Self {
            statistic: m.statistic,
            significant: m.significant,
        }
    }
}
