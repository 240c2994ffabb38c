//! Tracking error metrics and benchmark comparison.

use serde::{Deserialize, Serialize};

use super::log::EpisodeLog;
use crate::error::{Error, Result};
use crate::trajectory::TrajectorySpec;

fn post_ramp(log: &EpisodeLog) -> impl Iterator<Item = &super::log::TickRecord> {
    let ramp = log.trajectory.map_or(0.0, |s| s.ramp_s);
    log.records.iter().filter(move |r| r.t_s >= ramp)
}

/// Root-mean-square task-space distance between the true and reference
/// positions over the post-ramp ticks (mm).
pub fn rmse_task(log: &EpisodeLog) -> Result<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for r in post_ramp(log) {
        sum += (0..3).map(|i| (r.x_true[i] - r.x_ref[i]).powi(2)).sum::<f64>();
        n += 1;
    }
    if n == 0 {
        return Err(Error::domain("no ticks after the ramp to evaluate"));
    }
    Ok((sum / n as f64).sqrt())
}

/// Per-channel RMSE between the true and reference tendon coordinates (mm).
pub fn rmse_tendon(log: &EpisodeLog) -> Result<[f64; 4]> {
    let (mut sum, mut n) = ([0.0; 4], 0usize);
    for r in post_ramp(log) {
        for ((s, t), q) in sum.iter_mut().zip(r.q_true).zip(r.q_ref) {
            *s += (t - q).powi(2);
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::domain("no ticks after the ramp to evaluate"));
    }
    Ok(sum.map(|s| (s / n as f64).sqrt()))
}

/// `(ss - bm) / bm` in percent.
pub fn percent_increase(rmse_bm: f64, rmse_ss: f64) -> f64 {
    100.0 * (rmse_ss - rmse_bm) / rmse_bm
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub trajectory: Option<TrajectorySpec>,
    pub rmse_bm_mm: f64,
    pub rmse_ss_mm: f64,
    pub increase_pct: f64,
    pub tendon_rmse_bm_mm: [f64; 4],
    pub tendon_rmse_ss_mm: [f64; 4],
}

/// Compares a self-sensing run against the benchmark run of the same trajectory.
pub fn evaluate(bm: &EpisodeLog, ss: &EpisodeLog) -> Result<ComparisonReport> {
    if bm.trajectory != ss.trajectory {
        return Err(Error::domain("benchmark and self-sensing logs track different trajectories"));
    }
    let rmse_bm = rmse_task(bm)?;
    let rmse_ss = rmse_task(ss)?;
    Ok(ComparisonReport {
        trajectory: bm.trajectory,
        rmse_bm_mm: rmse_bm,
        rmse_ss_mm: rmse_ss,
        increase_pct: percent_increase(rmse_bm, rmse_ss),
        tendon_rmse_bm_mm: rmse_tendon(bm)?,
        tendon_rmse_ss_mm: rmse_tendon(ss)?,
    })
}
