//! Estimator training from benchmark telemetry.

use super::config::SimConfig;
use super::episode::{run_closed_loop, training_pairs};
use super::log::EpisodeLog;
use crate::control::FeedbackSource;
use crate::error::Result;
use crate::estimator::{fit, FitOptions, ModelMetadata, PolyModel, SplitMode};

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: PolyModel,
    pub logs: Vec<EpisodeLog>,
}

/// Runs one benchmark episode per configured trajectory in parallel and fits
/// the voltage-to-angle model on their pooled telemetry.
pub fn train_pipeline(cfg: &SimConfig) -> Result<TrainOutput> {
    cfg.validate()?;
    let runs: Vec<SimConfig> = cfg.estimator.trajectories.iter().map(|&k| cfg.for_run(k)).collect();
    let results: Vec<Result<EpisodeLog>> = std::thread::scope(|s| {
        let handles: Vec<_> = runs
            .iter()
            .map(|c| s.spawn(move || run_closed_loop(c, FeedbackSource::GroundTruth, None)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("benchmark episode thread panicked"))
            .collect()
    });
    let logs = results.into_iter().collect::<Result<Vec<_>>>()?;
    let model = fit_logs(cfg, &logs)?;
    Ok(TrainOutput { model, logs })
}

/// Fits on the pooled ticks of the given logs, in log order.
pub fn fit_logs(cfg: &SimConfig, logs: &[EpisodeLog]) -> Result<PolyModel> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for log in logs {
        let (lx, ly) = training_pairs(log);
        x.extend(lx);
        y.extend(ly);
    }
    let opts = FitOptions {
        test_frac: cfg.estimator.test_frac,
        seed: cfg.seed,
        split: cfg.estimator.split,
    };
    let mut model = fit(&x, &y, &opts)?;
    model.metadata = Some(ModelMetadata {
        input_signal: format!(
            "sensing RMS, moving average {} then low-pass {} Hz",
            cfg.signal.ma_window, cfg.signal.lp_cutoff_sense_hz
        ),
        episodes: logs.iter().map(|l| l.label.clone()).collect(),
        split: match opts.split {
            SplitMode::Shuffle => "shuffle",
            SplitMode::Blocked => "blocked",
        }
        .into(),
        test_frac: opts.test_frac,
        seed: opts.seed,
    });
    Ok(model)
}
