//! Cohort-level orchestration: recordings to instances to per-user models.

use serde::{Deserialize, Serialize};

use std::io::Write;
use std::time::Instant;

use crate::autoselect::{cross_val_scores, select_model, SearchBudget, DEFAULT_BUDGET_S, DEFAULT_K_FOLDS};
use crate::classifiers::{decide, AlgorithmId, HyperParams};
use crate::dataset::{assemble_user_dataset, by_subject, stratified_kfold, DatasetManifest, Instance};
use crate::evaluation::{cohort_report, cohort_stats, CohortReport, ConfusionCounts, MetricsReport, StatsRow};
use crate::signal::{self, Recording, PASSBAND_HI_HZ, PASSBAND_LO_HZ};
use crate::{exec, features, seed, Error, ExecMode, Result};

pub const DEFAULT_SEGMENTS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractConfig {
    pub n_segments: usize,
    pub lo_hz: f64,
    pub hi_hz: f64,
    pub seed: u64,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig {
            n_segments: DEFAULT_SEGMENTS,
            lo_hz: PASSBAND_LO_HZ,
            hi_hz: PASSBAND_HI_HZ,
            seed: 0,
        }
    }
}

/// Filter, segment and featurise one recording. Segment offsets come from a
/// seed derived from `cfg.seed` and the subject id.
pub fn extract_subject(rec: &Recording, cfg: &ExtractConfig, mode: ExecMode) -> Result<Vec<Instance>> {
    let filtered = signal::bandpass_filter(rec, cfg.lo_hz, cfg.hi_hz)?;
    let seg_seed = seed::derive(cfg.seed, &["segments", rec.subject_id()]);
    let segments = signal::random_segments(&filtered, cfg.n_segments, seg_seed)?;
    let feats = features::extract_all(&segments, mode)?;
    Ok(feats
        .into_iter()
        .enumerate()
        .map(|(i, f)| Instance::unlabeled(rec.subject_id(), i, f))
        .collect())
}

/// Instances of every recording, in input order. Recordings run in
/// parallel; segments within one recording run serially.
pub fn extract_cohort(recs: &[Recording], cfg: &ExtractConfig, mode: ExecMode) -> Result<Vec<Instance>> {
    let per = exec::try_map(mode, recs, |r| extract_subject(r, cfg, ExecMode::Serial))?;
    Ok(per.concat())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub budget_s: f64,
    pub k_folds: usize,
    pub seed: u64,
    /// Caps the search by count; with it set (and serial mode) runs are
    /// reproducible regardless of machine speed.
    pub max_evaluations: Option<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            budget_s: DEFAULT_BUDGET_S,
            k_folds: DEFAULT_K_FOLDS,
            seed: 0,
            max_evaluations: None,
        }
    }
}

/// What happened for one user of the cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserOutcome {
    pub user: String,
    pub counts: Option<ConfusionCounts>,
    pub algorithm: Option<AlgorithmId>,
    pub params: Option<HyperParams>,
    pub cv_accuracy: Option<f64>,
    pub evaluations: usize,
    pub elapsed_s: f64,
    pub manifest: Option<DatasetManifest>,
    pub error: Option<String>,
}

impl UserOutcome {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortRun {
    pub outcomes: Vec<UserOutcome>,
    /// Over the users that produced a model; `None` if none did.
    pub report: Option<CohortReport>,
    pub stats: Vec<StatsRow>,
    pub stats_error: Option<String>,
}

impl CohortRun {
    pub fn failures(&self) -> usize {
        self.outcomes.iter().filter(|o| o.failed()).count()
    }

    /// Report CSV: one row per user (failed users have empty
    /// cells and status `failed`), then `mean` and `sd` rows.
    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        let metric_cols = MetricsReport::COLUMNS.join(",");
        writeln!(w, "subject,genuine_granted,genuine_denied,impostor_granted,impostor_denied,{metric_cols},status")?;
        let rows = self.report.as_ref().map(|r| &r.rows[..]).unwrap_or(&[]);
        for o in &self.outcomes {
            match rows.iter().find(|r| r.user == o.user) {
                Some(r) => {
                    let c = &r.counts;
                    write!(
                        w,
                        "{},{},{},{},{}",
                        o.user, c.genuine_granted, c.genuine_denied, c.impostor_granted, c.impostor_denied
                    )?;
                    for v in r.metrics.values() {
                        write!(w, ",{v}")?;
                    }
                    writeln!(w, ",ok")?;
                }
                None => writeln!(w, "{}{},failed", o.user, ",".repeat(4 + MetricsReport::COLUMNS.len()))?,
            }
        }
        if let Some(r) = &self.report {
            for (name, m) in [("mean", &r.mean), ("sd", &r.sd)] {
                write!(w, "{name},,,,")?;
                for v in m.values() {
                    write!(w, ",{v}")?;
                }
                writeln!(w, ",summary")?;
            }
        }
        Ok(())
    }
}

fn evaluate_user(user: &str, own: &[Instance], pool: &[Instance], cfg: &EvalConfig, mode: ExecMode) -> UserOutcome {
    let t0 = Instant::now();
    let mut out = UserOutcome {
        user: user.to_string(),
        counts: None,
        algorithm: None,
        params: None,
        cv_accuracy: None,
        evaluations: 0,
        elapsed_s: 0.0,
        manifest: None,
        error: None,
    };
    let mut run = || -> Result<()> {
        let ds = assemble_user_dataset(user, own, pool, seed::derive(cfg.seed, &["assemble", user]))?;
        out.manifest = Some(ds.manifest());
        let mut budget = SearchBudget::new(cfg.budget_s, seed::derive(cfg.seed, &["search", user]));
        budget.max_evaluations = cfg.max_evaluations;
        let sel = select_model(&ds, &budget, cfg.k_folds, mode)?;
        // Report on a fresh fold assignment: the one the search maximised
        // over is optimistically biased for the winner.
        let report_seed = seed::derive(cfg.seed, &["report", user]);
        let split = stratified_kfold(&ds, cfg.k_folds, report_seed)?;
        let scores = cross_val_scores(&ds, &sel.model.params, &split, seed::derive(report_seed, &["fit"]), mode)?;
        let predicted: Vec<_> = scores.iter().map(|&s| decide(s)).collect();
        out.counts = Some(ConfusionCounts::from_predictions(&sel.labels, &predicted));
        out.algorithm = Some(sel.model.algorithm);
        out.params = Some(sel.model.params);
        out.cv_accuracy = sel.model.cv_accuracy;
        out.evaluations = sel.trace.entries.len();
        Ok(())
    };
    if let Err(e) = run() {
        out.error = Some(e.to_string());
    }
    out.elapsed_s = t0.elapsed().as_secs_f64();
    out
}

/// The per-user loop: every subject in turn is the genuine user and the
/// rest of the cohort is the impostor pool. Each user gets a balanced
/// dataset, a budgeted model search and pooled out-of-fold predictions of
/// the chosen configuration. Failures are recorded per user, not raised.
pub fn evaluate_cohort(instances: &[Instance], cfg: &EvalConfig, mode: ExecMode) -> Result<CohortRun> {
    let groups = by_subject(instances);
    if groups.len() < 2 {
        return Err(Error::Validation(format!(
            "cohort evaluation needs at least 2 subjects, got {}",
            groups.len()
        )));
    }
    let users: Vec<&String> = groups.keys().collect();
    let outcomes = exec::map(mode, &users, |u| {
        let pool: Vec<Instance> = groups
            .iter()
            .filter(|(s, _)| s != u)
            .flat_map(|(_, v)| v.iter().cloned())
            .collect();
        evaluate_user(u, &groups[*u], &pool, cfg, mode)
    });

    let rows: Vec<(String, ConfusionCounts)> = outcomes
        .iter()
        .filter_map(|o| o.counts.map(|c| (o.user.clone(), c)))
        .collect();
    let report = if rows.is_empty() { None } else { Some(cohort_report(&rows)?) };
    let (stats, stats_error) = match &report {
        None => (Vec::new(), Some("no user produced a model".to_string())),
        Some(r) => match cohort_stats(r, 0.5, 0.05) {
            Ok(s) => (s, None),
            Err(e) => (Vec::new(), Some(e.to_string())),
        },
    };
    Ok(CohortRun {
        outcomes,
        report,
        stats,
        stats_error,
    })
}
