use rand::Rng;
use serde::{Deserialize, Serialize};

use super::AlgorithmId;
use crate::features::N_FEATURES;
use crate::{Error, Result};

pub const KNN_K: [usize; 6] = [1, 3, 5, 7, 9, 15];
pub const L2_RANGE: (f64, f64) = (1e-4, 1e2);
pub const MAX_EPOCHS_RANGE: (usize, usize) = (1, 500);
pub const VAR_SMOOTHING_RANGE: (f64, f64) = (1e-12, 1e-6);
pub const DEPTH_RANGE: (usize, usize) = (2, 20);
pub const MIN_LEAF_RANGE: (usize, usize) = (1, 20);
pub const TREES_RANGE: (usize, usize) = (1, 200);
/// Random search never proposes forests smaller than this.
pub const RF_SEARCH_MIN_TREES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Euclidean,
    Manhattan,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "snake_case", deny_unknown_fields)]
pub enum HyperParams {
    Knn {
        k: usize,
        metric: Metric,
    },
    LogisticRegression {
        l2: f64,
        max_epochs: usize,
    },
    Lda {
        shrinkage: f64,
    },
    GaussianNb {
        var_smoothing: f64,
    },
    DecisionTree {
        max_depth: usize,
        min_leaf: usize,
    },
    RandomForest {
        n_trees: usize,
        max_depth: usize,
        features_per_split: usize,
    },
}

fn in_range<T: PartialOrd + std::fmt::Display + Copy>(name: &str, v: T, (lo, hi): (T, T)) -> Result<()> {
    if v >= lo && v <= hi {
        Ok(())
    } else {
        Err(Error::HyperParams(format!("{name}={v} outside [{lo}, {hi}]")))
    }
}

fn log_uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    (rng.random_range(lo.ln()..=hi.ln())).exp().clamp(lo, hi)
}

impl HyperParams {
    pub fn algorithm(&self) -> AlgorithmId {
        match self {
            HyperParams::Knn { .. } => AlgorithmId::Knn,
            HyperParams::LogisticRegression { .. } => AlgorithmId::LogisticRegression,
            HyperParams::Lda { .. } => AlgorithmId::Lda,
            HyperParams::GaussianNb { .. } => AlgorithmId::GaussianNb,
            HyperParams::DecisionTree { .. } => AlgorithmId::DecisionTree,
            HyperParams::RandomForest { .. } => AlgorithmId::RandomForest,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            HyperParams::Knn { k, .. } => {
                if KNN_K.contains(&k) {
                    Ok(())
                } else {
                    Err(Error::HyperParams(format!("k={k} not in {KNN_K:?}")))
                }
            }
            HyperParams::LogisticRegression { l2, max_epochs } => {
                in_range("l2", l2, L2_RANGE)?;
                in_range("max_epochs", max_epochs, MAX_EPOCHS_RANGE)
            }
            HyperParams::Lda { shrinkage } => in_range("shrinkage", shrinkage, (0.0, 1.0)),
            HyperParams::GaussianNb { var_smoothing } => in_range("var_smoothing", var_smoothing, VAR_SMOOTHING_RANGE),
            HyperParams::DecisionTree { max_depth, min_leaf } => {
                in_range("max_depth", max_depth, DEPTH_RANGE)?;
                in_range("min_leaf", min_leaf, MIN_LEAF_RANGE)
            }
            HyperParams::RandomForest {
                n_trees,
                max_depth,
                features_per_split,
            } => {
                in_range("n_trees", n_trees, TREES_RANGE)?;
                in_range("max_depth", max_depth, DEPTH_RANGE)?;
                in_range("features_per_split", features_per_split, (1, N_FEATURES))
            }
        }
    }

    /// A reasonable starting configuration for each learner.
    pub fn default_for(algorithm: AlgorithmId) -> Self {
        match algorithm {
            AlgorithmId::Knn => HyperParams::Knn {
                k: 5,
                metric: Metric::Euclidean,
            },
            AlgorithmId::LogisticRegression => HyperParams::LogisticRegression {
                l2: 1.0,
                max_epochs: 100,
            },
            AlgorithmId::Lda => HyperParams::Lda { shrinkage: 0.0 },
            AlgorithmId::GaussianNb => HyperParams::GaussianNb { var_smoothing: 1e-9 },
            AlgorithmId::DecisionTree => HyperParams::DecisionTree {
                max_depth: 10,
                min_leaf: 2,
            },
            AlgorithmId::RandomForest => HyperParams::RandomForest {
                n_trees: 50,
                max_depth: 12,
                features_per_split: 4,
            },
        }
    }

    /// Uniform draw from the search domain of `algorithm`.
    pub fn sample(algorithm: AlgorithmId, rng: &mut impl Rng) -> Self {
        match algorithm {
            AlgorithmId::Knn => HyperParams::Knn {
                k: KNN_K[rng.random_range(0..KNN_K.len())],
                metric: if rng.random_bool(0.5) {
                    Metric::Euclidean
                } else {
                    Metric::Manhattan
                },
            },
            AlgorithmId::LogisticRegression => HyperParams::LogisticRegression {
                l2: log_uniform(rng, L2_RANGE),
                max_epochs: rng.random_range(10..=200),
            },
            AlgorithmId::Lda => HyperParams::Lda {
                shrinkage: rng.random_range(0.0..=1.0),
            },
            AlgorithmId::GaussianNb => HyperParams::GaussianNb {
                var_smoothing: log_uniform(rng, VAR_SMOOTHING_RANGE),
            },
            AlgorithmId::DecisionTree => HyperParams::DecisionTree {
                max_depth: rng.random_range(DEPTH_RANGE.0..=DEPTH_RANGE.1),
                min_leaf: rng.random_range(MIN_LEAF_RANGE.0..=MIN_LEAF_RANGE.1),
            },
            AlgorithmId::RandomForest => HyperParams::RandomForest {
                n_trees: rng.random_range(RF_SEARCH_MIN_TREES..=TREES_RANGE.1),
                max_depth: rng.random_range(DEPTH_RANGE.0..=DEPTH_RANGE.1),
                features_per_split: rng.random_range(1..=N_FEATURES),
            },
        }
    }
}
