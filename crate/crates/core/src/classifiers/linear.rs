use super::Row;
use crate::features::N_FEATURES;
use crate::linalg::{dot, sigmoid, solve_spd};
use crate::{Error, Result};

const D: usize = N_FEATURES;

pub(super) fn score(z: &Row, weights: &[f64], bias: f64) -> f64 {
    sigmoid(dot(z, weights) + bias)
}

/// log(1 + exp(-m)) without overflow.
fn softplus_neg(m: f64) -> f64 {
    if m > 0.0 {
        (-m).exp().ln_1p()
    } else {
        -m + m.exp().ln_1p()
    }
}

fn objective(z: &[Row], y: &[bool], w: &[f64], b: f64, l2: f64) -> f64 {
    let loss: f64 = z
        .iter()
        .zip(y)
        .map(|(r, &g)| {
            let m = dot(r, w) + b;
            softplus_neg(if g { m } else { -m })
        })
        .sum();
    loss + 0.5 * l2 * dot(w, w)
}

/// L2-penalised logistic regression by damped Newton steps. The intercept
/// is not penalised. Returns (weights, bias).
pub(super) fn fit_logistic(z: &[Row], y: &[bool], l2: f64, max_epochs: usize) -> (Vec<f64>, f64) {
    const P: usize = D + 1;
    let mut theta = vec![0.0; P];
    let n_gen = y.iter().filter(|&&g| g).count() as f64;
    theta[D] = (n_gen / (y.len() as f64 - n_gen)).ln();
    let mut current = objective(z, y, &theta[..D], theta[D], l2);
    for _ in 0..max_epochs {
        let mut grad = vec![0.0; P];
        let mut hess = vec![0.0; P * P];
        for (r, &g) in z.iter().zip(y) {
            let p = sigmoid(dot(r, &theta[..D]) + theta[D]);
            let err = p - f64::from(u8::from(g));
            let w = p * (1.0 - p);
            for i in 0..P {
                let xi = if i < D { r[i] } else { 1.0 };
                grad[i] += err * xi;
                for j in 0..=i {
                    let xj = if j < D { r[j] } else { 1.0 };
                    hess[i * P + j] += w * xi * xj;
                }
            }
        }
        for i in 0..P {
            for j in 0..i {
                hess[j * P + i] = hess[i * P + j];
            }
            let ridge = if i < D { l2 } else { 1e-10 };
            hess[i * P + i] += ridge;
            if i < D {
                grad[i] += l2 * theta[i];
            }
        }
        let Some(step) = solve_spd(&hess, &grad, P) else { break };
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let cand: Vec<f64> = theta.iter().zip(&step).map(|(a, s)| a - t * s).collect();
            let value = objective(z, y, &cand[..D], cand[D], l2);
            if value <= current {
                let moved = step.iter().map(|s| (t * s).abs()).fold(0.0, f64::max);
                theta = cand;
                improved = current - value > 1e-12 * current.abs().max(1.0) || moved > 1e-10;
                current = value;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    let bias = theta.pop().unwrap_or(0.0);
    (theta, bias)
}

/// Two-class LDA with the pooled covariance shrunk towards a scaled
/// identity. The log prior ratio goes into the bias, and the score is the
/// logistic of the discriminant, which is the class posterior.
pub(super) fn fit_lda(z: &[Row], y: &[bool], shrinkage: f64) -> Result<(Vec<f64>, f64)> {
    let mut mean = [[0.0; D]; 2];
    let mut count = [0usize; 2];
    for (r, &g) in z.iter().zip(y) {
        let c = usize::from(g);
        count[c] += 1;
        for j in 0..D {
            mean[c][j] += r[j];
        }
    }
    for c in 0..2 {
        for v in &mut mean[c] {
            *v /= count[c] as f64;
        }
    }
    let mut cov = vec![0.0; D * D];
    for (r, &g) in z.iter().zip(y) {
        let m = &mean[usize::from(g)];
        for i in 0..D {
            for j in 0..=i {
                cov[i * D + j] += (r[i] - m[i]) * (r[j] - m[j]);
            }
        }
    }
    let dof = if z.len() > 2 { z.len() - 2 } else { z.len() } as f64;
    for i in 0..D {
        for j in 0..=i {
            cov[i * D + j] /= dof;
            cov[j * D + i] = cov[i * D + j];
        }
    }
    let avg_var = (0..D).map(|i| cov[i * D + i]).sum::<f64>() / D as f64;
    for i in 0..D {
        for j in 0..D {
            cov[i * D + j] *= 1.0 - shrinkage;
        }
        cov[i * D + i] += shrinkage * avg_var + 1e-10;
    }
    let diff: Vec<f64> = (0..D).map(|j| mean[1][j] - mean[0][j]).collect();
    let w = solve_spd(&cov, &diff, D).ok_or_else(|| Error::DegenerateTraining("singular LDA covariance".into()))?;
    let mid: Vec<f64> = (0..D).map(|j| 0.5 * (mean[1][j] + mean[0][j])).collect();
    let bias = -dot(&w, &mid) + (count[1] as f64 / count[0] as f64).ln();
    Ok((w, bias))
}
