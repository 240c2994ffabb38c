//! Episode orchestration, telemetry and run summaries.

mod config;
mod episode;
mod log;
mod metrics;
mod train;

use serde::{Deserialize, Serialize};

pub use config::{
    ConfigEntries, ControlConfig, EstimatorConfig, MocapConfig, Mode, NoiseConfig, OpenLoopAxis, OpenLoopConfig,
    SignalConfig, SimConfig, KNOWN_KEYS,
};
pub use episode::{
    angle_range_deg, openloop_commands, openloop_voltage, run_closed_loop, run_openloop, run_openloop_from,
    training_pairs,
};
pub use log::{EpisodeLog, TickRecord, CSV_HEADER};
pub use metrics::{evaluate, percent_increase, rmse_task, rmse_tendon, ComparisonReport};
pub use train::{fit_logs, train_pipeline, TrainOutput};

use crate::control::FeedbackSource;
use crate::error::Result;
use crate::estimator::FitMetrics;

/// Machine-readable result of one CLI run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mode: Mode,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feedback: Option<FeedbackSource>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rmse_task_mm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rmse_tendon_mm: Option<[f64; 4]>,
    pub ticks: usize,
    pub max_command_kv: f64,
    pub saturated_ticks: [usize; 4],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub openloop_range_deg: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimator: Option<FitMetrics>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub comparisons: Vec<ComparisonReport>,
    pub config: SimConfig,
}

impl Summary {
    /// Summary of a single episode.
    pub fn for_episode(cfg: &SimConfig, log: &EpisodeLog) -> Result<Self> {
        let closed = log.feedback.is_some();
        Ok(Self {
            mode: cfg.mode,
            seed: cfg.seed,
            feedback: log.feedback,
            rmse_task_mm: if closed { Some(rmse_task(log)?) } else { None },
            rmse_tendon_mm: if closed { Some(rmse_tendon(log)?) } else { None },
            ticks: log.len(),
            max_command_kv: log.max_command(),
            saturated_ticks: log.saturation_counts(),
            openloop_range_deg: if closed {
                None
            } else {
                let (p, t) = angle_range_deg(log, 0.0);
                Some([p, t])
            },
            estimator: None,
            comparisons: Vec::new(),
            config: cfg.clone(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
