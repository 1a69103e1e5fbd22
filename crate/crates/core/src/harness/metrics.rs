use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::trial::TrialLog;

/// Tracking statistics of one trial. Lengths in mm, squares in mm^2.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub mean_abs_mm: f64,
    pub mse_mm2: f64,
    pub std_mm: f64,
    pub max_abs_mm: f64,
    /// Mean absolute muscle-length error over all muscles and ticks.
    pub muscle_mean_abs_mm: f64,
    pub muscle_mse_mm2: f64,
}

/// Mean absolute value, mean square and population standard deviation
/// of the absolute values.
pub fn error_stats(values: &[f64]) -> Result<(f64, f64, f64)> {
    if values.is_empty() {
        return Err(Error::EmptyLog);
    }
    let n = values.len() as f64;
    let mean = values.iter().map(|v| v.abs()).sum::<f64>() / n;
    let mse = values.iter().map(|v| v * v).sum::<f64>() / n;
    let var = values.iter().map(|v| (v.abs() - mean).powi(2)).sum::<f64>() / n;
    Ok((mean, mse, var.sqrt()))
}

/// Statistics over the Euclidean tip error and the muscle-length error.
pub fn compute_metrics(log: &TrialLog) -> Result<Metrics> {
    let norms: Vec<f64> = log.errors().map(|e| e.norm() * 1e3).collect();
    let (mean_abs_mm, mse_mm2, std_mm) = error_stats(&norms)?;
    let max_abs_mm = norms.iter().copied().fold(0.0, f64::max);
    let muscle: Vec<f64> = log
        .muscle_lengths
        .iter()
        .zip(log.muscle_lengths_desired.iter())
        .flat_map(|(l, d)| l.iter().zip(d.iter()).map(|(a, b)| (a - b) * 1e3))
        .collect();
    let (muscle_mean_abs_mm, muscle_mse_mm2) = if muscle.is_empty() {
        (0.0, 0.0)
    } else {
        let (m, s, _) = error_stats(&muscle)?;
        (m, s)
    };
    Ok(Metrics {
        mean_abs_mm,
        mse_mm2,
        std_mm,
        max_abs_mm,
        muscle_mean_abs_mm,
        muscle_mse_mm2,
    })
}
