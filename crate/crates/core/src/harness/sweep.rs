use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;

use super::metrics::compute_metrics;
use super::trial::{replay, DisturbanceSpec, Setup, TrialLog};

/// Load fractions of the rated load swept by default.
pub const DEFAULT_FRACTIONS: [f64; 7] = [0.0, 0.05, 0.10, 0.15, 0.20, 0.25, 0.30];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub fraction: f64,
    pub load_kg: f64,
    /// Mean over repetitions of the per-trial mean error.
    pub mean_abs_mm: f64,
    /// Spread of the per-trial mean error across repetitions.
    pub std_mm: f64,
    pub mse_mm2: f64,
    pub repetitions: usize,
    /// Repetitions whose integration diverged.
    pub diverged: usize,
}

/// Seed of repetition `rep` at condition `index`.
pub fn condition_seed(seed: u64, index: usize, rep: usize) -> u64 {
    seed ^ ((index as u64) << 32 | rep as u64).wrapping_mul(0xD134_2543_DE82_EF95)
}

/// Open-loop replay of `commands` under each load fraction. Without noise
/// the plant is deterministic, so a single repetition is run. Diverged
/// repetitions are counted, not raised, and left out of the averages.
/// `on_log` sees the first repetition of every condition.
pub fn disturbance_sweep(
    setup: &Setup,
    commands: &[Vec<f64>],
    base: &DisturbanceSpec,
    fractions: &[f64],
    repetitions: usize,
    seed: u64,
    on_log: &(dyn Fn(usize, &TrialLog) -> Result<()> + Sync),
) -> Result<Vec<SweepRow>> {
    let reps = if base.noise_amplitude == 0.0 {
        1
    } else {
        repetitions.max(1)
    };
    let jobs: Vec<(usize, usize)> = (0..fractions.len())
        .flat_map(|i| (0..reps).map(move |r| (i, r)))
        .collect();
    let results: Vec<Result<(usize, Option<(f64, f64)>)>> = jobs
        .into_par_iter()
        .map(|(i, rep)| {
            let dist = DisturbanceSpec {
                load_fraction: fractions[i],
                ..base.clone()
            };
            let log = replay(setup, commands, &dist, condition_seed(seed, i, rep))?;
            if rep == 0 {
                on_log(i, &log)?;
            }
            if !log.completed() {
                return Ok((i, None));
            }
            let m = compute_metrics(&log)?;
            Ok((i, Some((m.mean_abs_mm, m.mse_mm2))))
        })
        .collect();

    let mut per: Vec<Vec<Option<(f64, f64)>>> = vec![Vec::new(); fractions.len()];
    for r in results {
        let (i, v) = r?;
        per[i].push(v);
    }
    Ok(fractions
        .iter()
        .zip(per)
        .map(|(&fraction, runs)| {
            let ok: Vec<(f64, f64)> = runs.iter().flatten().copied().collect();
            let n = ok.len().max(1) as f64;
            let mean = if ok.is_empty() {
                f64::INFINITY
            } else {
                ok.iter().map(|r| r.0).sum::<f64>() / n
            };
            let std = (ok.iter().map(|r| (r.0 - mean).powi(2)).sum::<f64>() / n).sqrt();
            let mse = ok.iter().map(|r| r.1).sum::<f64>() / n;
            SweepRow {
                fraction,
                load_kg: fraction * base.rated_load,
                mean_abs_mm: mean,
                std_mm: std,
                mse_mm2: mse,
                repetitions: runs.len(),
                diverged: runs.len() - ok.len(),
            }
        })
        .collect())
}

/// True when `values` never drop by more than `tol` (relative) from one
/// entry to the next.
pub fn non_decreasing(values: &[f64], tol: f64) -> bool {
    values.windows(2).all(|w| w[1] >= w[0] * (1.0 - tol))
}
