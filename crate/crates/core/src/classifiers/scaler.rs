use serde::{Deserialize, Serialize};

use super::Row;
use crate::features::N_FEATURES;

/// Per-feature z-scoring with population statistics of the training rows.
/// Constant columns keep a unit scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Scaler {
    pub fn fit(x: &[Row]) -> Self {
        let n = x.len() as f64;
        let mut mean = vec![0.0; N_FEATURES];
        let mut scale = vec![1.0; N_FEATURES];
        for j in 0..N_FEATURES {
            let m = x.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = x.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            mean[j] = m;
            if sd > 1e-12 * m.abs() && sd > 0.0 {
                scale[j] = sd;
            }
        }
        Scaler { mean, scale }
    }

    pub fn dim(&self) -> usize {
        self.mean.len().min(self.scale.len())
    }

    pub fn apply(&self, row: &Row) -> Row {
        let mut out = [0.0; N_FEATURES];
        for j in 0..N_FEATURES {
            out[j] = (row[j] - self.mean[j]) / self.scale[j];
        }
        out
    }
}
