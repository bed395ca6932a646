//! Shapiro-Wilk (Royston's approximation), one-sample t and one-sample
//! Wilcoxon signed-rank tests.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::{Error, Result};

/// Largest number of non-zero differences for which the Wilcoxon p-value
/// is computed exactly.
pub const WILCOXON_EXACT_MAX_N: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    ShapiroWilk,
    TOneSample,
    WilcoxonOneSample,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatTestResult {
    pub test: TestKind,
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
    pub null_value: Option<f64>,
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &k| acc * x + k)
}

pub fn shapiro_wilk(values: &[f64]) -> Result<StatTestResult> {
    let n = values.len();
    if !(3..=5000).contains(&n) {
        return Err(Error::DegenerateSample(format!("Shapiro-Wilk needs 3 to 5000 values, got {n}")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateSample("non-finite value".into()));
    }
    let mut x = values.to_vec();
    x.sort_by(f64::total_cmp);
    let range = x[n - 1] - x[0];
    if !(range > 0.0) {
        return Err(Error::DegenerateSample("all values are equal".into()));
    }

    let nn2 = n / 2;
    let normal = std_normal();
    // Coefficients for the lower half, positive, largest first.
    let mut a = vec![0.0; nn2];
    if n == 3 {
        a[0] = std::f64::consts::FRAC_1_SQRT_2;
    } else {
        let an25 = n as f64 + 0.25;
        let m: Vec<f64> = (1..=nn2).map(|i| normal.inverse_cdf((i as f64 - 0.375) / an25)).collect();
        let summ2 = 2.0 * m.iter().map(|v| v * v).sum::<f64>();
        let ssumm2 = summ2.sqrt();
        let rsn = 1.0 / (n as f64).sqrt();
        const C1: [f64; 6] = [0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056];
        const C2: [f64; 6] = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];
        let a1 = poly(&C1, rsn) - m[0] / ssumm2;
        let (first, fac) = if n > 5 {
            let a2 = -m[1] / ssumm2 + poly(&C2, rsn);
            let fac = ((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1]) / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2)).sqrt();
            a[1] = a2;
            (2, fac)
        } else {
            let fac = ((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1)).sqrt();
            (1, fac)
        };
        a[0] = a1;
        for i in first..nn2 {
            a[i] = -m[i] / fac;
        }
    }

    // Scale by the range for numerical safety; W is scale-free.
    let xs: Vec<f64> = x.iter().map(|v| (v - x[0]) / range).collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let ssq: f64 = xs.iter().map(|v| (v - mean).powi(2)).sum();
    let num: f64 = (0..nn2).map(|i| a[i] * (xs[n - 1 - i] - xs[i])).sum();
    let w = (num * num / ssq).min(1.0);

    let p = if n == 3 {
        let pi6 = 6.0 / std::f64::consts::PI;
        let stqr = std::f64::consts::FRAC_PI_3;
        (pi6 * (w.sqrt().asin() - stqr)).max(0.0)
    } else {
        let w1 = (1.0 - w).ln();
        let an = n as f64;
        let (y, mu, sigma) = if n <= 11 {
            let gamma = poly(&[-2.273, 0.459], an);
            if w1 >= gamma {
                return Ok(sw_result(w, 0.0, n));
            }
            (
                -(gamma - w1).ln(),
                poly(&[0.544, -0.39978, 0.025054, -6.714e-4], an),
                poly(&[1.3822, -0.77857, 0.062767, -0.0020322], an).exp(),
            )
        } else {
            let xx = an.ln();
            (
                w1,
                poly(&[-1.5861, -0.31082, -0.083751, 0.0038915], xx),
                poly(&[-0.4803, -0.082676, 0.0030302], xx).exp(),
            )
        };
        normal.sf((y - mu) / sigma)
    };
    Ok(sw_result(w, p, n))
}

fn sw_result(w: f64, p: f64, n: usize) -> StatTestResult {
    StatTestResult {
        test: TestKind::ShapiroWilk,
        statistic: w,
        p_value: p.clamp(0.0, 1.0),
        n,
        null_value: None,
    }
}

/// Two-sided one-sample Student t-test.
pub fn t_one_sample(values: &[f64], null_value: f64) -> Result<StatTestResult> {
    let n = values.len();
    if n < 2 {
        return Err(Error::DegenerateSample(format!("t-test needs at least 2 values, got {n}")));
    }
    let (mean, sd) = super::mean_sd(values);
    if !(sd > 0.0) || values.iter().all(|&v| v == values[0]) {
        return Err(Error::DegenerateSample("zero standard deviation".into()));
    }
    let t = (mean - null_value) / (sd / (n as f64).sqrt());
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("positive dof");
    Ok(StatTestResult {
        test: TestKind::TOneSample,
        statistic: t,
        p_value: (2.0 * dist.sf(t.abs())).min(1.0),
        n,
        null_value: Some(null_value),
    })
}

/// Mid-ranks (1-based) of `v`, ties averaged.
fn mid_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = r;
        }
        i = j + 1;
    }
    ranks
}

/// One-sample Wilcoxon signed-rank test. W is the rank sum of the positive
/// differences; zero differences are dropped and ties get mid-ranks.
pub fn wilcoxon_one_sample(values: &[f64], null_value: f64) -> Result<StatTestResult> {
    let d: Vec<f64> = values.iter().map(|v| v - null_value).filter(|d| *d != 0.0).collect();
    let m = d.len();
    if m == 0 {
        return Err(Error::DegenerateSample("all differences are zero".into()));
    }
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let ranks = mid_ranks(&abs);
    let w: f64 = d.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();

    let p = if m <= WILCOXON_EXACT_MAX_N {
        // Doubled mid-ranks are integers; count sign assignments per sum.
        let r2: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let total: usize = r2.iter().sum();
        let mut counts = vec![0.0f64; total + 1];
        counts[0] = 1.0;
        for &r in &r2 {
            for s in (r..=total).rev() {
                counts[s] += counts[s - r];
            }
        }
        let all = 2f64.powi(m as i32);
        let w2 = (2.0 * w).round() as usize;
        let le: f64 = counts[..=w2].iter().sum::<f64>() / all;
        let ge: f64 = counts[w2..].iter().sum::<f64>() / all;
        (2.0 * le.min(ge)).min(1.0)
    } else {
        let mf = m as f64;
        let mean = mf * (mf + 1.0) / 4.0;
        let mut sorted = abs.clone();
        sorted.sort_by(f64::total_cmp);
        let mut tie_term = 0.0;
        let mut i = 0;
        while i < sorted.len() {
            let mut j = i;
            while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
                j += 1;
            }
            let t = (j - i + 1) as f64;
            tie_term += t * t * t - t;
            i = j + 1;
        }
        let var = mf * (mf + 1.0) * (2.0 * mf + 1.0) / 24.0 - tie_term / 48.0;
        let z = (w - mean) / var.sqrt();
        (2.0 * std_normal().sf(z.abs())).min(1.0)
    };
    Ok(StatTestResult {
        test: TestKind::WilcoxonOneSample,
        statistic: w,
        p_value: p,
        n: m,
        null_value: Some(null_value),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChanceComparison {
    pub normality: StatTestResult,
    pub branch: TestKind,
    pub result: StatTestResult,
}

/// Shapiro-Wilk first; p > alpha runs the t-test, otherwise Wilcoxon.
pub fn compare_to_chance(values: &[f64], null_value: f64, alpha: f64) -> Result<ChanceComparison> {
    if values.len() < 3 {
        return Err(Error::DegenerateSample(format!("need at least 3 values, got {}", values.len())));
    }
    let normality = shapiro_wilk(values)?;
    let result = if normality.p_value > alpha {
        t_one_sample(values, null_value)?
    } else {
        wilcoxon_one_sample(values, null_value)?
    };
    Ok(ChanceComparison {
        normality,
        branch: result.test,
        result,
    })
}
