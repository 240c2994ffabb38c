//! Per-tick episode telemetry.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::control::FeedbackSource;
use crate::error::Result;
use crate::trajectory::TrajectorySpec;

pub const CSV_HEADER: &str = "t_s,xr_x,xr_y,xr_z,x_x,x_y,x_z,xe_x,xe_y,xe_z,\
qr_1,qr_2,qr_3,qr_4,qe_1,qe_2,qe_3,qe_4,\
vcmd_1,vcmd_2,vcmd_3,vcmd_4,vh_1,vh_2,vh_3,vh_4,\
sat_1,sat_2,sat_3,sat_4";

/// One control tick.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TickRecord {
    pub t_s: f64,
    /// Reference position (mm).
    pub x_ref: [f64; 3],
    /// True end-effector position (mm).
    pub x_true: [f64; 3],
    /// Position the controller was fed (mm).
    pub x_est: [f64; 3],
    pub q_ref: [f64; 4],
    /// Tendon coordinates of the fed-back position.
    pub q_est: [f64; 4],
    /// Tendon coordinates of the true pose.
    pub q_true: [f64; 4],
    /// Commanded voltages (kV).
    pub v_cmd: [f64; 4],
    /// Filtered sensing voltages (V RMS).
    pub v_sense: [f64; 4],
    pub saturated: [bool; 4],
    /// True joint angles (rad).
    pub phi: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub label: String,
    pub trajectory: Option<TrajectorySpec>,
    pub feedback: Option<FeedbackSource>,
    pub records: Vec<TickRecord>,
}

impl EpisodeLog {
    pub fn new(label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn push(&mut self, r: TickRecord) {
        self.records.push(r);
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for r in &self.records {
            let mut line = format!("{:.4}", r.t_s + 0.0);
            for v in r
                .x_ref
                .iter()
                .chain(&r.x_true)
                .chain(&r.x_est)
                .chain(&r.q_ref)
                .chain(&r.q_est)
                .chain(&r.v_cmd)
                .chain(&r.v_sense)
            {
                // adding zero folds -0.0 into 0.0
                line.push_str(&format!(",{:.6}", v + 0.0));
            }
            for s in r.saturated {
                line.push_str(if s { ",1" } else { ",0" });
            }
            writeln!(w, "{line}")?;
        }
        w.flush()?;
        Ok(())
    }

    /// Highest commanded voltage over the episode (kV).
    pub fn max_command(&self) -> f64 {
        self.records
            .iter()
            .flat_map(|r| r.v_cmd)
            .fold(0.0, f64::max)
    }

    /// Ticks with the saturation flag set, per channel.
    pub fn saturation_counts(&self) -> [usize; 4] {
        let mut n = [0; 4];
        for r in &self.records {
            for (c, s) in n.iter_mut().zip(r.saturated) {
                *c += s as usize;
            }
        }
        n
    }
}
