use super::*;

/// Reference cohort: counts, then printed TPR, FPR, TNR, FNR, accuracy %, kappa.
pub(crate) const REFERENCE_ROWS: [(u64, u64, u64, u64, [f64; 4], u32, f64); 15] = [
    (500, 0, 0, 500, [1.0, 0.0, 1.0, 0.0], 100, 1.0),
    (436, 64, 16, 484, [0.872, 0.032, 0.968, 0.128], 92, 0.84),
    (493, 7, 25, 475, [0.986, 0.05, 0.95, 0.014], 97, 0.936),
    (420, 80, 49, 451, [0.84, 0.098, 0.902, 0.16], 87, 0.742),
    (474, 26, 7, 493, [0.948, 0.014, 0.986, 0.052], 97, 0.934),
    (450, 50, 8, 492, [0.9, 0.016, 0.984, 0.1], 94, 0.884),
    (475, 25, 9, 491, [0.95, 0.018, 0.982, 0.05], 97, 0.932),
    (476, 24, 14, 486, [0.952, 0.028, 0.972, 0.048], 96, 0.924),
    (469, 31, 8, 492, [0.938, 0.016, 0.984, 0.062], 96, 0.922),
    (482, 18, 7, 493, [0.964, 0.014, 0.986, 0.036], 98, 0.95),
    (466, 34, 9, 491, [0.932, 0.018, 0.982, 0.068], 96, 0.914),
    (472, 28, 6, 494, [0.944, 0.012, 0.988, 0.056], 97, 0.932),
    (465, 35, 8, 492, [0.93, 0.016, 0.984, 0.07], 96, 0.914),
    (478, 22, 0, 500, [0.956, 0.0, 1.0, 0.044], 98, 0.956),
    (451, 49, 8, 492, [0.902, 0.016, 0.984, 0.098], 94, 0.886),
];

fn table_rows() -> Vec<(String, ConfusionCounts)> {
    REFERENCE_ROWS
        .iter()
        .enumerate()
        .map(|(i, r)| (format!("SS{:02}", i + 1), ConfusionCounts::new(r.0, r.1, r.2, r.3)))
        .collect()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn table_rows_reproduce_printed_metrics() {
    for (i, r) in REFERENCE_ROWS.iter().enumerate() {
        let m = metrics(&ConfusionCounts::new(r.0, r.1, r.2, r.3)).unwrap();
        let printed = r.4;
        for (got, want) in [m.tpr, m.fpr, m.tnr, m.fnr].into_iter().zip(printed) {
            assert!(close(got, want, 5e-4), "row {i}: {got} vs {want}");
        }
        assert_eq!((m.accuracy * 100.0).round() as u32, r.5, "row {i}");
        assert!(close(m.kappa, r.6, 5e-4), "row {i}: kappa {} vs {}", m.kappa, r.6);
        assert_eq!(m.tpr + m.fnr, 1.0);
        assert_eq!(m.tnr + m.fpr, 1.0);
    }
}

#[test]
fn worked_rows() {
    let m = metrics(&ConfusionCounts::new(436, 64, 16, 484)).unwrap();
    assert!(close(m.tpr, 0.872, 1e-12) && close(m.fpr, 0.032, 1e-12));
    assert!(close(m.accuracy, 0.92, 1e-12) && close(m.kappa, 0.84, 1e-12));
    let m = metrics(&ConfusionCounts::new(420, 80, 49, 451)).unwrap();
    assert!(close(m.accuracy, 0.871, 1e-12) && close(m.kappa, 0.742, 1e-12));
}

#[test]
fn empty_class_is_undefined() {
    assert!(matches!(metrics(&ConfusionCounts::new(0, 0, 3, 4)), Err(Error::UndefinedMetric(_))));
    assert!(matches!(metrics(&ConfusionCounts::new(3, 4, 0, 0)), Err(Error::UndefinedMetric(_))));
}

#[test]
fn cohort_means_from_counts() {
    let r = cohort_report(&table_rows()).unwrap();
    // Accuracies are taken from the counts: their mean is 0.955533.
    assert!(close(r.mean.accuracy, 0.9567, 0.005));
    assert!(close(r.mean.accuracy, 0.9555333333333333, 1e-12));
    assert!(close(r.mean.tpr, 0.934, 1e-3));
    assert!(close(r.mean.tnr, 0.977, 1e-3));
    assert!(close(r.sd.tpr, 0.04, 0.005) && close(r.sd.tnr, 0.02, 0.005));
    assert_eq!(r.rows.len(), 15);
}

#[test]
fn cohort_small_cases() {
    let one = cohort_report(&[("a".into(), ConfusionCounts::new(5, 0, 0, 5))]).unwrap();
    assert_eq!(one.mean, one.rows[0].metrics);
    assert!(one.sd.values().iter().all(|&v| v == 0.0));
    let two = cohort_report(&[
        ("a".into(), ConfusionCounts::new(45, 5, 5, 45)),
        ("b".into(), ConfusionCounts::new(50, 0, 0, 50)),
    ])
    .unwrap();
    assert!(close(two.mean.accuracy, 0.95, 1e-12));
    assert!(close(two.sd.accuracy, 0.05f64.hypot(0.05), 1e-12));
    assert!(close(two.sd.accuracy, 0.0707, 1e-4));
}

#[test]
fn cohort_csv_layout() {
    let r = cohort_report(&table_rows()).unwrap();
    let mut buf = Vec::new();
    r.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 16);
    assert!(lines[0].starts_with("subject,genuine_granted,genuine_denied,impostor_granted,impostor_denied,tpr,fpr"));
    assert!(lines[2].starts_with("SS02,436,64,16,484,0.872,0.032,"));
}

#[test]
fn table_kappa_is_balanced_identity() {
    for (_, c) in table_rows() {
        let m = metrics(&c).unwrap();
        assert!(close(m.kappa, 2.0 * m.accuracy - 1.0, 1e-12));
    }
}

fn column(idx: usize) -> Vec<f64> {
    REFERENCE_ROWS.iter().map(|r| metrics(&ConfusionCounts::new(r.0, r.1, r.2, r.3)).unwrap().values()[idx]).collect()
}

fn accuracy_column() -> Vec<f64> {
    column(4)
}

// Reference values below were produced by an independent statistics
// package (scipy.stats) from the same inputs.

#[test]
fn shapiro_accuracy_column() {
    let r = shapiro_wilk(&accuracy_column()).unwrap();
    assert!(close(r.statistic, 0.8350950924220732, 1e-4), "{}", r.statistic);
    assert!(close(r.p_value, 0.010757215899458217, 1e-3), "{}", r.p_value);
}

fn reference_samples() -> Vec<(Vec<f64>, f64, f64)> {
    vec![
        ((0..10).map(|i| ((i + 1) as f64).powf(1.5)).collect(), 0.9518832958660252, 0.6908117466079987),
        (
            (0..15).map(|i| (i as f64 * 2.1).sin() * 3.0 + i as f64 * 0.1).collect(),
            0.9169840276368085,
            0.17324485684865526,
        ),
        ((0..30).map(|i| (1.0 + ((i * 37 + 11) % 53) as f64).ln()).collect(), 0.8480236103410091, 0.0005638401166923208),
        (
            (0..100).map(|i| (((i as f64 + 0.5) / 100.0 - 0.5) * 2.5).tan()).collect(),
            0.994565853185788,
            0.9622962274163318,
        ),
        (
            (0..500).map(|i| ((i * 7919) % 1000) as f64 / 1000.0 + 0.3 * (i as f64 * 0.37).sin()).collect(),
            0.9875635332088644,
            0.00029056641738474024,
        ),
    ]
}

#[test]
fn shapiro_reference_samples() {
    for (x, w, p) in reference_samples() {
        let r = shapiro_wilk(&x).unwrap();
        assert!(close(r.statistic, w, 1e-3), "n={}: W {} vs {w}", x.len(), r.statistic);
        assert!(close(r.p_value, p, 1e-2), "n={}: p {} vs {p}", x.len(), r.p_value);
    }
}

#[test]
fn shapiro_small_and_degenerate() {
    let r = shapiro_wilk(&[1.0, 2.0, 4.0]).unwrap();
    assert!(close(r.statistic, 0.9642857142857142, 1e-9) && close(r.p_value, 0.6368868450289689, 1e-6));
    assert!(matches!(shapiro_wilk(&[2.0; 8]), Err(Error::DegenerateSample(_))));
    assert!(shapiro_wilk(&[1.0, 2.0]).is_err());
}

#[test]
fn shapiro_normal_quantiles() {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let q: Vec<f64> = (1..=15).map(|i| normal.inverse_cdf((i as f64 - 0.375) / 15.25)).collect();
    let r = shapiro_wilk(&q).unwrap();
    assert!(r.statistic >= 0.98, "{}", r.statistic);
    assert!(close(r.statistic, 0.99680, 1e-4));
}

#[test]
fn shapiro_location_scale_invariant() {
    let x = accuracy_column();
    let w = shapiro_wilk(&x).unwrap().statistic;
    for (a, b) in [(3.0, -7.0), (1e-3, 5.0), (250.0, 0.0)] {
        let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        assert!(close(shapiro_wilk(&y).unwrap().statistic, w, 1e-9));
    }
}

#[test]
fn t_test_cases() {
    let r = t_one_sample(&[0.3, 0.7, 0.4, 0.6], 0.5).unwrap();
    assert!(r.statistic.abs() < 1e-12 && close(r.p_value, 1.0, 1e-12));
    let r = t_one_sample(&[0.0, 1.0], 0.0).unwrap();
    assert!(close(r.statistic, 1.0, 1e-12) && close(r.p_value, 0.5, 1e-12));
    assert!(matches!(t_one_sample(&[0.2, 0.2, 0.2], 0.5), Err(Error::DegenerateSample(_))));
}

#[test]
fn t_test_table_columns() {
    let fpr = t_one_sample(&column(1), 0.5).unwrap();
    assert!(close(fpr.statistic, -77.02737270835063, 1e-9), "{}", fpr.statistic);
    let fnr = t_one_sample(&column(3), 0.5).unwrap();
    assert!(close(fnr.statistic, -40.441243754597096, 1e-9), "{}", fnr.statistic);
    assert!(fnr.p_value < 1e-15);
}

#[test]
fn wilcoxon_table_columns() {
    let acc = wilcoxon_one_sample(&accuracy_column(), 0.5).unwrap();
    assert_eq!(acc.statistic, 120.0);
    assert!(close(acc.p_value, 6.103515625e-05, 1e-12));
    let fnr = wilcoxon_one_sample(&column(3), 0.5).unwrap();
    assert_eq!(fnr.statistic, 0.0);
}

#[test]
fn wilcoxon_ties_and_zeros() {
    let r = wilcoxon_one_sample(&[-1.0, 1.0], 0.0).unwrap();
    assert_eq!(r.statistic, 1.5);
    assert!(close(r.p_value, 1.0, 1e-12));
    let r = wilcoxon_one_sample(&[0.5, 0.5, 0.7, 0.2], 0.5).unwrap();
    assert_eq!(r.n, 2);
    assert!(matches!(wilcoxon_one_sample(&[0.5, 0.5], 0.5), Err(Error::DegenerateSample(_))));
}

#[test]
fn wilcoxon_reference_p_values() {
    let x: Vec<f64> = (0..12).map(|i| (i as f64 * 0.731) % 1.3 - 0.2).collect();
    let r = wilcoxon_one_sample(&x, 0.0).unwrap();
    assert_eq!(r.statistic.min(78.0 - r.statistic), 9.0);
    assert!(close(r.p_value, 0.01611328125, 1e-9));
    let y: Vec<f64> = (0..30).map(|i| (i as f64 * 1.7).sin() + 0.3).collect();
    let r = wilcoxon_one_sample(&y, 0.0).unwrap();
    assert_eq!(r.statistic.min(465.0 - r.statistic), 135.0);
    assert!(close(r.p_value, 0.04491890376548032, 1e-9));
}

#[test]
fn chance_comparison_branches() {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let q: Vec<f64> = (1..=15).map(|i| 0.6 + 0.05 * normal.inverse_cdf((i as f64 - 0.375) / 15.25)).collect();
    assert_eq!(compare_to_chance(&q, 0.5, 0.05).unwrap().branch, TestKind::TOneSample);
    let skewed = [0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.01, 0.0, 0.02];
    assert_eq!(compare_to_chance(&skewed, 0.5, 0.05).unwrap().branch, TestKind::WilcoxonOneSample);
    let acc = compare_to_chance(&accuracy_column(), 0.5, 0.05).unwrap();
    assert_eq!(acc.branch, TestKind::WilcoxonOneSample);
    assert_eq!(acc.result.statistic, 120.0);
    assert!(compare_to_chance(&[0.1, 0.9], 0.5, 0.05).is_err());
}

#[test]
fn stats_report_rows() {
    let r = cohort_report(&table_rows()).unwrap();
    let rows = cohort_stats(&r, 0.5, 0.05).unwrap();
    assert_eq!(rows.len(), 6);
    assert_eq!(rows[0].test, TestKind::ShapiroWilk);
    assert_eq!(rows[1].test, TestKind::WilcoxonOneSample);
    let fnr_loc = &rows[5];
    assert_eq!((fnr_loc.metric.as_str(), fnr_loc.test), ("fnr", TestKind::TOneSample));
    let json = serde_json::to_value(&rows[1]).unwrap();
    for key in ["metric", "test", "statistic", "p", "branch"] {
        assert!(json.get(key).is_some(), "{key}");
    }
}

use statrs::distribution::{ContinuousCDF, Normal};
