//! The learner zoo and the versioned model envelope.
//!
//! Every learner standardizes features with statistics of its own training
//! data and outputs a genuine-class score in [0, 1]. A score above 0.5 means
//! genuine; exactly 0.5 is treated as impostor.

mod knn;
mod linear;
mod nb;
mod params;
mod scaler;
mod tree;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{Instance, Label};
use crate::features::{feature_names, FeatureVector, N_FEATURES};
use crate::{Error, ExecMode, Result};

pub use params::{HyperParams, Metric, RF_SEARCH_MIN_TREES};
pub use scaler::Scaler;
pub use tree::{bootstrap_indices, forest_tree_seed, Node, Tree};

pub const FORMAT_VERSION: u32 = 1;

pub type Row = [f64; N_FEATURES];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmId {
    Knn,
    LogisticRegression,
    Lda,
    GaussianNb,
    DecisionTree,
    RandomForest,
}

impl AlgorithmId {
    pub const ALL: [AlgorithmId; 6] = [
        AlgorithmId::Knn,
        AlgorithmId::LogisticRegression,
        AlgorithmId::Lda,
        AlgorithmId::GaussianNb,
        AlgorithmId::DecisionTree,
        AlgorithmId::RandomForest,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AlgorithmId::Knn => "knn",
            AlgorithmId::LogisticRegression => "logistic_regression",
            AlgorithmId::Lda => "lda",
            AlgorithmId::GaussianNb => "gaussian_nb",
            AlgorithmId::DecisionTree => "decision_tree",
            AlgorithmId::RandomForest => "random_forest",
        }
    }
}

impl fmt::Display for AlgorithmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AlgorithmId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AlgorithmId::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::HyperParams(format!("unknown algorithm {s:?}")))
    }
}

/// Algorithm-specific fitted parameters. All coordinates are in the
/// standardized space of the stored scaler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedState {
    Knn {
        scaler: Scaler,
        k: usize,
        metric: Metric,
        points: Vec<Vec<f64>>,
        genuine: Vec<bool>,
    },
    Linear {
        scaler: Scaler,
        weights: Vec<f64>,
        bias: f64,
    },
    GaussianNb {
        scaler: Scaler,
        /// Index 0 is impostor, 1 is genuine.
        log_prior: [f64; 2],
        mean: [Vec<f64>; 2],
        var: [Vec<f64>; 2],
    },
    Tree {
        scaler: Scaler,
        tree: Tree,
    },
    Forest {
        scaler: Scaler,
        trees: Vec<Tree>,
    },
}

impl FittedState {
    /// Genuine-class score for a raw (unstandardized) row.
    pub fn score(&self, row: &Row) -> f64 {
        match self {
            FittedState::Knn {
                scaler,
                k,
                metric,
                points,
                genuine,
            } => knn::score(&scaler.apply(row), *k, *metric, points, genuine),
            FittedState::Linear { scaler, weights, bias } => linear::score(&scaler.apply(row), weights, *bias),
            FittedState::GaussianNb {
                scaler,
                log_prior,
                mean,
                var,
            } => nb::score(&scaler.apply(row), log_prior, mean, var),
            FittedState::Tree { scaler, tree } => tree.score(&scaler.apply(row)),
            FittedState::Forest { scaler, trees } => {
                let z = scaler.apply(row);
                trees.iter().map(|t| t.score(&z)).sum::<f64>() / trees.len() as f64
            }
        }
    }

    pub fn predict(&self, row: &Row) -> Label {
        decide(self.score(row))
    }

    fn scaler(&self) -> &Scaler {
        match self {
            FittedState::Knn { scaler, .. }
            | FittedState::Linear { scaler, .. }
            | FittedState::GaussianNb { scaler, .. }
            | FittedState::Tree { scaler, .. }
            | FittedState::Forest { scaler, .. } => scaler,
        }
    }
}

/// Fail-closed decision rule.
pub fn decide(score: f64) -> Label {
    if score > 0.5 {
        Label::Genuine
    } else {
        Label::Impostor
    }
}

/// Fits a learner on raw rows. `y[i]` is true for genuine.
pub fn fit(params: &HyperParams, x: &[Row], y: &[bool], seed: u64, mode: ExecMode) -> Result<FittedState> {
    params.validate()?;
    if x.len() != y.len() {
        return Err(Error::Data(format!("{} rows but {} labels", x.len(), y.len())));
    }
    if let Some(i) = x.iter().position(|r| r.iter().any(|v| !v.is_finite())) {
        return Err(Error::Data(format!("row {i} has a non-finite feature")));
    }
    let n_gen = y.iter().filter(|&&g| g).count();
    if x.len() < 2 || n_gen == 0 || n_gen == y.len() {
        return Err(Error::DegenerateTraining(format!(
            "need both labels, got {n_gen} genuine of {}",
            y.len()
        )));
    }
    let scaler = Scaler::fit(x);
    let z: Vec<Row> = x.iter().map(|r| scaler.apply(r)).collect();
    Ok(match *params {
        HyperParams::Knn { k, metric } => FittedState::Knn {
            scaler,
            k,
            metric,
            points: z.iter().map(|r| r.to_vec()).collect(),
            genuine: y.to_vec(),
        },
        HyperParams::LogisticRegression { l2, max_epochs } => {
            let (weights, bias) = linear::fit_logistic(&z, y, l2, max_epochs);
            FittedState::Linear { scaler, weights, bias }
        }
        HyperParams::Lda { shrinkage } => {
            let (weights, bias) = linear::fit_lda(&z, y, shrinkage)?;
            FittedState::Linear { scaler, weights, bias }
        }
        HyperParams::GaussianNb { var_smoothing } => {
            let (log_prior, mean, var) = nb::fit(&z, y, var_smoothing);
            FittedState::GaussianNb {
                scaler,
                log_prior,
                mean,
                var,
            }
        }
        HyperParams::DecisionTree { max_depth, min_leaf } => {
            let idx: Vec<usize> = (0..z.len()).collect();
            let tree = Tree::grow(&z, y, &idx, max_depth, min_leaf, N_FEATURES, None);
            FittedState::Tree { scaler, tree }
        }
        HyperParams::RandomForest {
            n_trees,
            max_depth,
            features_per_split,
        } => {
            let trees = tree::grow_forest(&z, y, n_trees, max_depth, features_per_split, seed, mode);
            FittedState::Forest { scaler, trees }
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub algorithm: AlgorithmId,
    pub params: HyperParams,
    pub feature_order: Vec<String>,
    pub fitted_state: FittedState,
    pub train_seed: u64,
    pub cv_accuracy: Option<f64>,
}

/// Splits labelled instances into raw rows and genuine flags.
pub fn to_xy(instances: &[Instance]) -> Result<(Vec<Row>, Vec<bool>)> {
    let mut x = Vec::with_capacity(instances.len());
    let mut y = Vec::with_capacity(instances.len());
    for (i, inst) in instances.iter().enumerate() {
        y.push(match inst.label {
            Label::Genuine => true,
            Label::Impostor => false,
            Label::Unlabeled => return Err(Error::Data(format!("instance {i} is unlabeled"))),
        });
        x.push(*inst.features.values());
    }
    Ok((x, y))
}

pub fn train(params: &HyperParams, instances: &[Instance], seed: u64) -> Result<TrainedModel> {
    train_with_mode(params, instances, seed, ExecMode::Serial)
}

/// Like [`train`], but random forest trees are grown under `mode`. The
/// fitted state is identical in both modes.
pub fn train_with_mode(params: &HyperParams, instances: &[Instance], seed: u64, mode: ExecMode) -> Result<TrainedModel> {
    let (x, y) = to_xy(instances)?;
    let fitted = fit(params, &x, &y, seed, mode)?;
    Ok(TrainedModel::new(*params, fitted, seed, None))
}

impl TrainedModel {
    pub fn new(params: HyperParams, fitted_state: FittedState, train_seed: u64, cv_accuracy: Option<f64>) -> Self {
        TrainedModel {
            format_version: FORMAT_VERSION,
            algorithm: params.algorithm(),
            params,
            feature_order: feature_names(),
            fitted_state,
            train_seed,
            cv_accuracy,
        }
    }

    pub fn check_feature_order(&self, names: &[String]) -> Result<()> {
        if self.feature_order != names {
            return Err(Error::Schema(format!(
                "feature order mismatch: model has [{}], input has [{}]",
                self.feature_order.join(","),
                names.join(",")
            )));
        }
        Ok(())
    }

    pub fn predict_score(&self, features: &FeatureVector) -> Result<f64> {
        self.check_feature_order(&feature_names())?;
        Ok(self.fitted_state.score(features.values()))
    }

    pub fn predict(&self, features: &FeatureVector) -> Result<Label> {
        self.predict_score(features).map(decide)
    }

    /// Scores a vector whose columns are named by `names`.
    pub fn predict_named(&self, names: &[String], features: &FeatureVector) -> Result<Label> {
        self.check_feature_order(names)?;
        Ok(decide(self.fitted_state.score(features.values())))
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        Ok(serde_json::to_vec(self)?)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_slice(bytes).map_err(|e| Error::Format(format!("model payload: {e}")))?;
        let version = value
            .get("format_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::Format("model payload has no format_version".into()))?;
        if version != u64::from(FORMAT_VERSION) {
            return Err(Error::UnsupportedVersion {
                found: version,
                supported: FORMAT_VERSION,
            });
        }
        let model: TrainedModel =
            serde_json::from_value(value).map_err(|e| Error::Format(format!("model payload: {e}")))?;
        model.validate()?;
        Ok(model)
    }

    /// Structural checks on a model obtained other than via [`Self::from_json`].
    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion {
                found: u64::from(self.format_version),
                supported: FORMAT_VERSION,
            });
        }
        self.params.validate()?;
        if self.params.algorithm() != self.algorithm {
            return Err(Error::Format(format!(
                "algorithm {} does not match params for {}",
                self.algorithm,
                self.params.algorithm()
            )));
        }
        if self.fitted_state.scaler().dim() != N_FEATURES {
            return Err(Error::Format("scaler has the wrong dimension".into()));
        }
        if let Some(acc) = self.cv_accuracy {
            if !(0.0..=1.0).contains(&acc) {
                return Err(Error::Format(format!("cv_accuracy {acc} outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&bytes)
    }
}
