//! Four-channel tendon-space PID with command filtering and amplifier scaling.
//!
//! Errors are `q_feedback - q_reference` (mm): a channel whose tendon is
//! longer than desired has to contract further, which takes more voltage.
//! Commands are in kV and never leave `[0, V_max]`.

use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{tendon_reference, GeometryParams, TendonMapping, TendonVector};
use crate::signal::LowPass;
use crate::trajectory::TrajectoryKind;

/// Default control rate (Hz).
pub const CONTROL_RATE_HZ: f64 = 200.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelGains {
    /// kV/mm
    pub kp: f64,
    /// kV/(mm s)
    pub ki: f64,
    /// kV per mm of measurement change over one control tick
    pub kd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PidGains {
    pub kp: [f64; 4],
    pub ki: [f64; 4],
    pub kd: [f64; 4],
}

impl PidGains {
    pub fn uniform(kp: f64, ki: f64, kd: f64) -> Self {
        Self {
            kp: [kp; 4],
            ki: [ki; 4],
            kd: [kd; 4],
        }
    }

    pub fn channel(&self, i: usize) -> ChannelGains {
        ChannelGains {
            kp: self.kp[i],
            ki: self.ki[i],
            kd: self.kd[i],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self
            .kp
            .iter()
            .chain(&self.ki)
            .chain(&self.kd)
            .all(|g| g.is_finite() && *g >= 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::domain("controller gains must be finite and non-negative"))
        }
    }
}

/// Which signal closes the loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackSource {
    /// Poses estimated from the muscles' own sensing voltages.
    SelfSensing,
    /// Emulated motion-capture poses.
    GroundTruth,
}

/// Tuned gain sets for the two trajectories and both feedback sources.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    LemniSs,
    LemniBm,
    StarSs,
    StarBm,
}

impl Preset {
    pub fn gains(self) -> PidGains {
        let ki = |v: [f64; 4]| v.map(|k| k * 1e-3);
        match self {
            Preset::LemniSs => PidGains {
                kp: [0.3, 0.75, 0.95, 0.85],
                ki: ki([1.0, 2.0, 2.0, 2.0]),
                kd: [0.0; 4],
            },
            Preset::LemniBm => PidGains {
                kp: [0.4, 0.85, 1.05, 0.95],
                ki: ki([2.0, 3.0, 3.0, 3.0]),
                kd: [0.5, 1.0, 1.0, 1.0],
            },
            Preset::StarSs => PidGains {
                kp: [0.45, 0.85, 0.8, 0.90],
                ki: ki([1.0, 2.0, 2.0, 2.0]),
                kd: [0.0; 4],
            },
            Preset::StarBm => PidGains {
                kp: [0.45, 0.95, 0.9, 0.95],
                ki: ki([1.0, 2.0, 2.0, 2.0]),
                kd: [0.5, 1.0, 1.0, 1.0],
            },
        }
    }

    pub fn trajectory(self) -> TrajectoryKind {
        match self {
            Preset::LemniSs | Preset::LemniBm => TrajectoryKind::Lemniscate,
            Preset::StarSs | Preset::StarBm => TrajectoryKind::Star,
        }
    }

    pub fn feedback(self) -> FeedbackSource {
        match self {
            Preset::LemniSs | Preset::StarSs => FeedbackSource::SelfSensing,
            Preset::LemniBm | Preset::StarBm => FeedbackSource::GroundTruth,
        }
    }

    pub fn for_run(kind: TrajectoryKind, feedback: FeedbackSource) -> Self {
        match (kind, feedback) {
            (TrajectoryKind::Lemniscate, FeedbackSource::SelfSensing) => Preset::LemniSs,
            (TrajectoryKind::Lemniscate, FeedbackSource::GroundTruth) => Preset::LemniBm,
            (TrajectoryKind::Star, FeedbackSource::SelfSensing) => Preset::StarSs,
            (TrajectoryKind::Star, FeedbackSource::GroundTruth) => Preset::StarBm,
        }
    }
}

impl FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lemni_ss" => Ok(Preset::LemniSs),
            "lemni_bm" => Ok(Preset::LemniBm),
            "star_ss" => Ok(Preset::StarSs),
            "star_bm" => Ok(Preset::StarBm),
            other => Err(Error::domain(format!("unknown preset '{other}'"))),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str(match self {
            Preset::LemniSs => "lemni_ss",
            Preset::LemniBm => "lemni_bm",
            Preset::StarSs => "star_ss",
            Preset::StarBm => "star_bm",
        })
    }
}

/// High-voltage amplifier output ratios per channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmplifierSet {
    /// Unit ratio on every channel.
    Ideal,
    /// The phi1 amplifier has twice the output ratio of the others.
    Hardware,
}

impl AmplifierSet {
    pub fn scales(self) -> [f64; 4] {
        match self {
            AmplifierSet::Ideal => [1.0; 4],
            AmplifierSet::Hardware => [2.0, 1.0, 1.0, 1.0],
        }
    }
}

impl FromStr for AmplifierSet {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ideal" => Ok(AmplifierSet::Ideal),
            "hardware" => Ok(AmplifierSet::Hardware),
            other => Err(Error::domain(format!("unknown amplifier set '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PidState {
    /// Integrated error (mm s).
    pub integral: f64,
    pub prev_measurement: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PidOutput {
    /// kV, within `[0, v_max]`.
    pub u: f64,
    /// The unclamped law exceeded `v_max`.
    pub saturated_high: bool,
}

/// One PID update. The derivative term is the change in the measurement since
/// the previous tick, not divided by `dt`; integration is frozen while the
/// output is clamped in the direction the error pushes, and the integral term
/// itself is bounded by `v_max`.
pub fn pid_step(
    gains: &ChannelGains,
    state: &mut PidState,
    error: f64,
    measurement: f64,
    dt: f64,
    v_max: f64,
) -> Result<PidOutput> {
    if !(dt > 0.0) {
        return Err(Error::domain("controller step needs dt > 0"));
    }
    if !error.is_finite() || !measurement.is_finite() {
        return Err(Error::ControllerFault {
            channel: usize::MAX,
            reason: format!("non-finite input (error = {error}, measurement = {measurement})"),
        });
    }
    let derivative = match state.prev_measurement {
        Some(prev) => measurement - prev,
        None => 0.0,
    };
    state.prev_measurement = Some(measurement);

    let bound = if gains.ki > 0.0 { v_max / gains.ki } else { f64::INFINITY };
    let candidate = (state.integral + error * dt).clamp(-bound, bound);
    let raw = gains.kp * error + gains.ki * candidate + gains.kd * derivative;
    let winding = (raw > v_max && error > 0.0) || (raw < 0.0 && error < 0.0);
    if !winding {
        state.integral = candidate;
    }
    let unclamped = gains.kp * error + gains.ki * state.integral + gains.kd * derivative;
    Ok(PidOutput {
        u: unclamped.clamp(0.0, v_max),
        saturated_high: unclamped > v_max,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput {
    pub q_ref: TendonMapping,
    pub q_feedback: TendonMapping,
    /// Voltages delivered to the muscles (kV).
    pub commands: [f64; 4],
    /// Per channel: command ceiling reached or a tendon mapping was clamped.
    pub saturated: [bool; 4],
}

#[derive(Debug, Clone)]
pub struct ControllerSettings {
    pub gains: PidGains,
    pub rate_hz: f64,
    pub v_max_kv: f64,
    pub cmd_cutoff_hz: f64,
    pub amp_scale: [f64; 4],
}

impl ControllerSettings {
    pub fn new(gains: PidGains) -> Self {
        Self {
            gains,
            rate_hz: CONTROL_RATE_HZ,
            v_max_kv: 5.5,
            cmd_cutoff_hz: 25.0,
            amp_scale: [1.0; 4],
        }
    }
}

/// Stateful four-channel controller stepped once per control tick.
#[derive(Debug, Clone)]
pub struct Controller {
    settings: ControllerSettings,
    pid: [PidState; 4],
    cmd_filter: [LowPass; 4],
    dt: f64,
}

impl Controller {
    pub fn new(settings: ControllerSettings) -> Result<Self> {
        settings.gains.validate()?;
        if !(settings.rate_hz > 0.0 && settings.rate_hz.is_finite()) {
            return Err(Error::domain("control rate must be positive"));
        }
        if settings.amp_scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::domain("amplifier scales must be positive"));
        }
        let dt = 1.0 / settings.rate_hz;
        let lp = LowPass::with_initial(settings.cmd_cutoff_hz, dt, 0.0)?;
        Ok(Self {
            pid: [PidState::default(); 4],
            cmd_filter: std::array::from_fn(|_| lp.clone()),
            dt,
            settings,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn pid_states(&self) -> &[PidState; 4] {
        &self.pid
    }

    pub fn settings(&self) -> &ControllerSettings {
        &self.settings
    }

    /// Tendon-space update from reference and feedback tendon coordinates.
    pub fn step(&mut self, q_ref: &TendonVector, q_fb: &TendonVector) -> Result<([f64; 4], [bool; 4])> {
        let v_max = self.settings.v_max_kv;
        let mut commands = [0.0; 4];
        let mut saturated = [false; 4];
        for i in 0..4 {
            let error = q_fb.0[i] - q_ref.0[i];
            let out = pid_step(&self.settings.gains.channel(i), &mut self.pid[i], error, q_fb.0[i], self.dt, v_max)
                .map_err(|e| match e {
                    Error::ControllerFault { reason, .. } => Error::ControllerFault { channel: i, reason },
                    other => other,
                })?;
            let filtered = self.cmd_filter[i].push(out.u);
            let applied = filtered * self.settings.amp_scale[i];
            commands[i] = applied.clamp(0.0, v_max);
            saturated[i] = out.saturated_high || applied >= v_max;
        }
        Ok((commands, saturated))
    }

    /// Maps reference and feedback positions into tendon space and steps the loop.
    pub fn control_step(
        &mut self,
        x_ref: &Vector3<f64>,
        x_feedback: &Vector3<f64>,
        geometry: &GeometryParams,
    ) -> Result<ControlOutput> {
        let q_ref = tendon_reference(x_ref, geometry)?;
        let q_feedback = tendon_reference(x_feedback, geometry)?;
        let (commands, mut saturated) = self.step(&q_ref.q, &q_feedback.q)?;
        if q_ref.saturated || q_feedback.saturated {
            saturated = [true; 4];
        }
        Ok(ControlOutput {
            q_ref,
            q_feedback,
            commands,
            saturated,
        })
    }
}
