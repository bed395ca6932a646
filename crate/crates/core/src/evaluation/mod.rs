//! Confusion metrics, kappa, cohort reports and the significance tests.

pub mod stats;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::Label;
use crate::{Error, Result};

pub use stats::{
    compare_to_chance, shapiro_wilk, t_one_sample, wilcoxon_one_sample, ChanceComparison, StatTestResult, TestKind,
};

/// Decision counts for one user. Genuine is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub genuine_granted: u64,
    pub genuine_denied: u64,
    pub impostor_granted: u64,
    pub impostor_denied: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, fn_: u64, fp: u64, tn: u64) -> Self {
        ConfusionCounts {
            genuine_granted: tp,
            genuine_denied: fn_,
            impostor_granted: fp,
            impostor_denied: tn,
        }
    }

    /// Counts from true genuine flags and predicted labels.
    pub fn from_predictions(truth: &[bool], predicted: &[Label]) -> Self {
        let mut c = ConfusionCounts::default();
        for (&g, &p) in truth.iter().zip(predicted) {
            let granted = p == Label::Genuine;
            match (g, granted) {
                (true, true) => c.genuine_granted += 1,
                (true, false) => c.genuine_denied += 1,
                (false, true) => c.impostor_granted += 1,
                (false, false) => c.impostor_denied += 1,
            }
        }
        c
    }

    pub fn genuine_total(&self) -> u64 {
        self.genuine_granted + self.genuine_denied
    }

    pub fn impostor_total(&self) -> u64 {
        self.impostor_granted + self.impostor_denied
    }

    pub fn total(&self) -> u64 {
        self.genuine_total() + self.impostor_total()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub tpr: f64,
    pub fpr: f64,
    pub tnr: f64,
    pub fnr: f64,
    pub accuracy: f64,
    pub kappa: f64,
}

impl MetricsReport {
    pub const COLUMNS: [&'static str; 6] = ["tpr", "fpr", "tnr", "fnr", "accuracy", "kappa"];

    pub fn values(&self) -> [f64; 6] {
        [self.tpr, self.fpr, self.tnr, self.fnr, self.accuracy, self.kappa]
    }

    fn from_values(v: [f64; 6]) -> Self {
        MetricsReport {
            tpr: v[0],
            fpr: v[1],
            tnr: v[2],
            fnr: v[3],
            accuracy: v[4],
            kappa: v[5],
        }
    }

    pub fn column(&self, name: &str) -> Option<f64> {
        Self::COLUMNS.iter().position(|c| *c == name).map(|i| self.values()[i])
    }
}

pub fn metrics(c: &ConfusionCounts) -> Result<MetricsReport> {
    let pos = c.genuine_total();
    let neg = c.impostor_total();
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(format!("need both classes, got {pos} genuine and {neg} impostor")));
    }
    let (tp, fn_, fp, tn) = (
        c.genuine_granted as f64,
        c.genuine_denied as f64,
        c.impostor_granted as f64,
        c.impostor_denied as f64,
    );
    let (pos, neg) = (pos as f64, neg as f64);
    let n = pos + neg;
    let po = (tp + tn) / n;
    let pe = ((tp + fp) * pos + (fn_ + tn) * neg) / (n * n);
    Ok(MetricsReport {
        tpr: tp / pos,
        fpr: fp / neg,
        tnr: tn / neg,
        fnr: fn_ / pos,
        accuracy: po,
        kappa: (po - pe) / (1.0 - pe),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserRow {
    pub user: String,
    pub counts: ConfusionCounts,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortReport {
    pub rows: Vec<UserRow>,
    pub mean: MetricsReport,
    /// Sample standard deviation (n - 1); 0 for a single row.
    pub sd: MetricsReport,
}

pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn cohort_report(rows: &[(String, ConfusionCounts)]) -> Result<CohortReport> {
    if rows.is_empty() {
        return Err(Error::UndefinedMetric("cohort report needs at least one user".into()));
    }
    let rows: Vec<UserRow> = rows
        .iter()
        .map(|(user, counts)| {
            Ok(UserRow {
                user: user.clone(),
                counts: *counts,
                metrics: metrics(counts)?,
            })
        })
        .collect::<Result<_>>()?;
    let mut mean = [0.0; 6];
    let mut sd = [0.0; 6];
    for j in 0..6 {
        let col: Vec<f64> = rows.iter().map(|r| r.metrics.values()[j]).collect();
        (mean[j], sd[j]) = mean_sd(&col);
    }
    Ok(CohortReport {
        rows,
        mean: MetricsReport::from_values(mean),
        sd: MetricsReport::from_values(sd),
    })
}

impl CohortReport {
    pub fn column(&self, name: &str) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.metrics.column(name)).collect()
    }

    /// Per-user rows in report column order.
    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(
            w,
            "subject,genuine_granted,genuine_denied,impostor_granted,impostor_denied,tpr,fpr,tnr,fnr,accuracy,kappa"
        )?;
        for r in &self.rows {
            let c = &r.counts;
            let m = &r.metrics;
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.user,
                c.genuine_granted,
                c.genuine_denied,
                c.impostor_granted,
                c.impostor_denied,
                m.tpr,
                m.fpr,
                m.tnr,
                m.fnr,
                m.accuracy,
                m.kappa
            )?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).map_err(|e| Error::io(path, e))?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let body = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(path, body).map_err(|e| Error::io(path, e))
    }
}

/// One line of the statistics report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub metric: String,
    pub test: TestKind,
    pub statistic: f64,
    pub p: f64,
    /// Location test chosen by the normality check.
    pub branch: TestKind,
}

/// Normality check and chance-level comparison of the accuracy, FPR and FNR
/// columns. Each metric yields its Shapiro-Wilk row followed by the row of
/// the location test it dispatched to.
pub fn cohort_stats(report: &CohortReport, null_value: f64, alpha: f64) -> Result<Vec<StatsRow>> {
    let mut out = Vec::new();
    for metric in ["accuracy", "fpr", "fnr"] {
        let cmp = compare_to_chance(&report.column(metric), null_value, alpha)?;
        out.push(StatsRow {
            metric: metric.into(),
            test: TestKind::ShapiroWilk,
            statistic: cmp.normality.statistic,
            p: cmp.normality.p_value,
            branch: cmp.branch,
        });
        out.push(StatsRow {
            metric: metric.into(),
            test: cmp.result.test,
            statistic: cmp.result.statistic,
            p: cmp.result.p_value,
            branch: cmp.branch,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
