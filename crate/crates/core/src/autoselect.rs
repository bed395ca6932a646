//! Time-budgeted algorithm and hyperparameter search.
//!
//! The search evaluates the six default configurations first, then seeded
//! random draws, each scored by stratified k-fold CV accuracy. No evaluation
//! starts after the deadline, and an evaluation still running at the deadline
//! is abandoned at the next fold boundary, so the overrun is bounded by one
//! fold plus the final retrain. Results depend on wall-clock timing unless
//! `max_evaluations` is what stops the search.

use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::classifiers::{self, decide, to_xy, AlgorithmId, HyperParams, Row, TrainedModel};
use crate::dataset::{stratified_kfold, CvSplit, Label, UserDataset};
use crate::{exec, seed, Error, ExecMode, Result};

pub const DEFAULT_BUDGET_S: f64 = 60.0;
pub const DEFAULT_K_FOLDS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchBudget {
    pub wall_clock_s: f64,
    pub max_evaluations: Option<usize>,
    pub seed: u64,
}

impl SearchBudget {
    pub fn new(wall_clock_s: f64, seed: u64) -> Self {
        SearchBudget {
            wall_clock_s,
            max_evaluations: None,
            seed,
        }
    }

    pub fn with_max_evaluations(mut self, n: usize) -> Self {
        self.max_evaluations = Some(n);
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.wall_clock_s > 0.0 && self.wall_clock_s.is_finite()) {
            return Err(Error::Validation(format!("budget must be positive, got {} s", self.wall_clock_s)));
        }
        if self.max_evaluations == Some(0) {
            return Err(Error::Validation("max_evaluations must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub eval_index: usize,
    pub algorithm: AlgorithmId,
    pub params: HyperParams,
    /// `-inf` when training failed.
    pub cv_accuracy: f64,
    pub elapsed_s: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    pub entries: Vec<TraceEntry>,
    pub chosen: usize,
    /// Evaluations cut off by the deadline; not part of `entries`.
    pub abandoned: usize,
    /// Time spent in the abandoned evaluation before it was cut off.
    pub abandoned_elapsed_s: f64,
    pub total_elapsed_s: f64,
}

impl SearchTrace {
    pub fn chosen_entry(&self) -> &TraceEntry {
        &self.entries[self.chosen]
    }

    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "eval_index,algorithm,params_json,cv_accuracy,elapsed_s")?;
        for e in &self.entries {
            let params = serde_json::to_string(&e.params).map_err(std::io::Error::other)?;
            writeln!(
                w,
                "{},{},\"{}\",{},{}",
                e.eval_index,
                e.algorithm,
                params.replace('"', "\"\""),
                e.cv_accuracy,
                e.elapsed_s
            )?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).map_err(|e| Error::io(path, e))?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }
}

/// Index of the first maximum; `None` for an empty slice.
pub fn argmax_first(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        if best.is_none_or(|b| *v > values[b]) {
            best = Some(i);
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub model: TrainedModel,
    pub trace: SearchTrace,
    /// Out-of-fold genuine scores of the chosen configuration, one per
    /// dataset instance.
    pub oof_scores: Vec<f64>,
    pub labels: Vec<bool>,
}

impl Selection {
    pub fn oof_predictions(&self) -> Vec<Label> {
        self.oof_scores.iter().map(|&s| decide(s)).collect()
    }
}

#[derive(Debug)]
enum CvFailure {
    Deadline,
    Train(Error),
}

struct CvOutcome {
    accuracy: f64,
    oof: Vec<f64>,
}

fn run_cv(
    x: &[Row],
    y: &[bool],
    params: &HyperParams,
    split: &CvSplit,
    fit_seed: u64,
    mode: ExecMode,
    deadline: Option<Instant>,
) -> std::result::Result<CvOutcome, CvFailure> {
    let folds: Vec<usize> = (0..split.k()).collect();
    let per_fold = exec::try_map(mode, &folds, |&f| {
        if deadline.is_some_and(|d| Instant::now() >= d) {
            return Err(CvFailure::Deadline);
        }
        let train = split.train_indices(f);
        let tx: Vec<Row> = train.iter().map(|&i| x[i]).collect();
        let ty: Vec<bool> = train.iter().map(|&i| y[i]).collect();
        let fold_seed = seed::derive(fit_seed, &["fold", &f.to_string()]);
        let model = classifiers::fit(params, &tx, &ty, fold_seed, ExecMode::Serial).map_err(CvFailure::Train)?;
        let scores: Vec<(usize, f64)> = split.test_indices(f).iter().map(|&i| (i, model.score(&x[i]))).collect();
        Ok(scores)
    })?;
    let mut oof = vec![f64::NAN; x.len()];
    let mut acc_sum = 0.0;
    for scores in &per_fold {
        let correct = scores.iter().filter(|(i, s)| (decide(*s) == Label::Genuine) == y[*i]).count();
        acc_sum += correct as f64 / scores.len() as f64;
        for &(i, s) in scores {
            oof[i] = s;
        }
    }
    Ok(CvOutcome {
        accuracy: acc_sum / per_fold.len() as f64,
        oof,
    })
}

/// Mean held-out accuracy over the folds of `split`.
pub fn evaluate_config(ds: &UserDataset, params: &HyperParams, split: &CvSplit, seed_value: u64, mode: ExecMode) -> Result<f64> {
    let (x, y) = to_xy(&ds.instances)?;
    if split.n() != x.len() {
        return Err(Error::Split(format!("split covers {} instances, dataset has {}", split.n(), x.len())));
    }
    match run_cv(&x, &y, params, split, seed_value, mode, None) {
        Ok(o) => Ok(o.accuracy),
        Err(CvFailure::Train(e)) => Err(e),
        Err(CvFailure::Deadline) => unreachable!("no deadline was set"),
    }
}

/// Out-of-fold genuine scores of `params`, one per dataset instance, each
/// from the fold model that did not see it.
pub fn cross_val_scores(ds: &UserDataset, params: &HyperParams, split: &CvSplit, seed_value: u64, mode: ExecMode) -> Result<Vec<f64>> {
    let (x, y) = to_xy(&ds.instances)?;
    if split.n() != x.len() {
        return Err(Error::Split(format!("split covers {} instances, dataset has {}", split.n(), x.len())));
    }
    match run_cv(&x, &y, params, split, seed_value, mode, None) {
        Ok(o) => Ok(o.oof),
        Err(CvFailure::Train(e)) => Err(e),
        Err(CvFailure::Deadline) => unreachable!("no deadline was set"),
    }
}

/// The configuration proposed at position `i` of the search.
fn proposal(i: usize, rng: &mut rand_chacha::ChaCha8Rng) -> HyperParams {
    use rand::Rng;
    match AlgorithmId::ALL.get(i) {
        Some(&a) => HyperParams::default_for(a),
        None => {
            let a = AlgorithmId::ALL[rng.random_range(0..AlgorithmId::ALL.len())];
            HyperParams::sample(a, rng)
        }
    }
}

pub fn select_model(ds: &UserDataset, budget: &SearchBudget, k_folds: usize, mode: ExecMode) -> Result<Selection> {
    let start = Instant::now();
    budget.validate()?;
    let deadline = start + Duration::from_secs_f64(budget.wall_clock_s);
    let (x, y) = to_xy(&ds.instances)?;
    let split = stratified_kfold(ds, k_folds, seed::derive(budget.seed, &["cv"]))?;
    let fit_seed = seed::derive(budget.seed, &["fit"]);
    let mut rng = seed::rng(seed::derive(budget.seed, &["search"]));

    let mut entries: Vec<TraceEntry> = Vec::new();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut abandoned = 0;
    let mut abandoned_elapsed_s = 0.0;
    for i in 0.. {
        if budget.max_evaluations.is_some_and(|m| i >= m) || Instant::now() >= deadline {
            break;
        }
        let params = proposal(i, &mut rng);
        let t0 = Instant::now();
        let (accuracy, error, oof) = match run_cv(&x, &y, &params, &split, fit_seed, mode, Some(deadline)) {
            Ok(o) => (o.accuracy, None, Some(o.oof)),
            Err(CvFailure::Train(e)) => (f64::NEG_INFINITY, Some(e.to_string()), None),
            Err(CvFailure::Deadline) => {
                abandoned += 1;
                abandoned_elapsed_s = t0.elapsed().as_secs_f64();
                break;
            }
        };
        if Instant::now() > deadline {
            // Finished after the deadline: the result is not admissible.
            abandoned += 1;
            abandoned_elapsed_s = t0.elapsed().as_secs_f64();
            break;
        }
        if let Some(oof) = oof {
            if best.as_ref().is_none_or(|(b, _)| accuracy > *b) {
                best = Some((accuracy, oof));
            }
        }
        entries.push(TraceEntry {
            eval_index: i,
            algorithm: params.algorithm(),
            params,
            cv_accuracy: accuracy,
            elapsed_s: t0.elapsed().as_secs_f64(),
            error,
        });
    }

    if entries.is_empty() {
        return Err(Error::NoModel { evaluated: abandoned });
    }
    let accs: Vec<f64> = entries.iter().map(|e| e.cv_accuracy).collect();
    let chosen = argmax_first(&accs).unwrap_or(0);
    let params = entries[chosen].params;
    let fitted = classifiers::fit(&params, &x, &y, fit_seed, mode)?;
    let Some((cv_accuracy, oof_scores)) = best else {
        return Err(Error::DegenerateTraining(format!(
            "all {} evaluated configurations failed",
            entries.len()
        )));
    };
    let model = TrainedModel::new(params, fitted, fit_seed, Some(cv_accuracy));
    Ok(Selection {
        model,
        trace: SearchTrace {
            entries,
            chosen,
            abandoned,
            abandoned_elapsed_s,
            total_elapsed_s: start.elapsed().as_secs_f64(),
        },
        oof_scores,
        labels: y,
    })
}
