use super::Row;
use crate::features::N_FEATURES;
use crate::linalg::sigmoid;

type Moments = ([f64; 2], [Vec<f64>; 2], [Vec<f64>; 2]);

/// Per-class Gaussian moments. Every variance is inflated by
/// `var_smoothing` times the largest feature variance (1 when all are 0).
pub(super) fn fit(z: &[Row], y: &[bool], var_smoothing: f64) -> Moments {
    let n = z.len() as f64;
    let mut count = [0.0; 2];
    let mut mean = [vec![0.0; N_FEATURES], vec![0.0; N_FEATURES]];
    let mut var = [vec![0.0; N_FEATURES], vec![0.0; N_FEATURES]];
    for (r, &g) in z.iter().zip(y) {
        let c = usize::from(g);
        count[c] += 1.0;
        for j in 0..N_FEATURES {
            mean[c][j] += r[j];
        }
    }
    for c in 0..2 {
        for v in &mut mean[c] {
            *v /= count[c];
        }
    }
    for (r, &g) in z.iter().zip(y) {
        let c = usize::from(g);
        for j in 0..N_FEATURES {
            var[c][j] += (r[j] - mean[c][j]).powi(2);
        }
    }
    let mut max_total_var: f64 = 0.0;
    for j in 0..N_FEATURES {
        let m = z.iter().map(|r| r[j]).sum::<f64>() / n;
        max_total_var = max_total_var.max(z.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / n);
    }
    let eps = var_smoothing * if max_total_var > 0.0 { max_total_var } else { 1.0 };
    for c in 0..2 {
        for v in &mut var[c] {
            *v = *v / count[c] + eps;
        }
    }
    let log_prior = [(count[0] / n).ln(), (count[1] / n).ln()];
    (log_prior, mean, var)
}

pub(super) fn score(z: &Row, log_prior: &[f64; 2], mean: &[Vec<f64>; 2], var: &[Vec<f64>; 2]) -> f64 {
    let joint = |c: usize| {
        log_prior[c]
            - 0.5
                * (0..N_FEATURES)
                    .map(|j| (2.0 * std::f64::consts::PI * var[c][j]).ln() + (z[j] - mean[c][j]).powi(2) / var[c][j])
                    .sum::<f64>()
    };
    sigmoid(joint(1) - joint(0))
}
