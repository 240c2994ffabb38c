//! Flat `key = value` run configuration.
//!
//! One assignment per line, `#` starts a comment, list values are comma
//! separated with optional brackets. Unknown or repeated keys are rejected.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::control::{AmplifierSet, FeedbackSource, PidGains, Preset, CONTROL_RATE_HZ};
use crate::error::{Error, Result};
use crate::estimator::SplitMode;
use crate::plant::{calibrate_from_table, LoadStrain, PlantParams, STEP_RESPONSE_LOADS_KG, STEP_RESPONSE_TABLE};
use crate::trajectory::{TrajectoryKind, TrajectorySpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Openloop,
    Benchmark,
    Train,
    Selfsense,
    Evaluate,
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "openloop" => Ok(Mode::Openloop),
            "benchmark" => Ok(Mode::Benchmark),
            "train" => Ok(Mode::Train),
            "selfsense" => Ok(Mode::Selfsense),
            "evaluate" => Ok(Mode::Evaluate),
            other => Err(Error::domain(format!("unknown mode '{other}'"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str(match self {
            Mode::Openloop => "openloop",
            Mode::Benchmark => "benchmark",
            Mode::Train => "train",
            Mode::Selfsense => "selfsense",
            Mode::Evaluate => "evaluate",
        })
    }
}

/// Which antagonist pair(s) the open-loop experiment drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpenLoopAxis {
    PhiPair,
    ThetaPair,
    Both,
}

impl FromStr for OpenLoopAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "phi" | "phi_pair" => Ok(OpenLoopAxis::PhiPair),
            "theta" | "theta_pair" => Ok(OpenLoopAxis::ThetaPair),
            "both" => Ok(OpenLoopAxis::Both),
            other => Err(Error::domain(format!("unknown open-loop axis '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalConfig {
    pub ma_window: usize,
    pub lp_cutoff_sense_hz: f64,
    pub lp_cutoff_cmd_hz: f64,
    /// Measure sensing RMS from a synthesised carrier instead of the phasor gain.
    pub waveform_mode: bool,
    /// Extra transport delay on the sensing path (s).
    pub sense_delay_s: f64,
    /// Rate at which RMS values enter the filters (one per carrier period by default).
    pub sense_rate_hz: f64,
}

impl Default for SignalConfig {
    fn default() -> Self {
        Self {
            ma_window: 20,
            lp_cutoff_sense_hz: 40.0,
            lp_cutoff_cmd_hz: 25.0,
            waveform_mode: false,
            sense_delay_s: 0.0,
            sense_rate_hz: 2000.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlConfig {
    /// Gain preset; when unset the preset matching the run is used.
    pub preset: Option<Preset>,
    pub kp: Option<[f64; 4]>,
    pub ki: Option<[f64; 4]>,
    pub kd: Option<[f64; 4]>,
    pub rate_hz: f64,
    pub amp_scale: [f64; 4],
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            preset: None,
            kp: None,
            ki: None,
            kd: None,
            rate_hz: CONTROL_RATE_HZ,
            amp_scale: [1.0; 4],
        }
    }
}

impl ControlConfig {
    /// Gains for a run, starting from the configured or matching preset and
    /// applying explicit per-term overrides.
    pub fn gains_for(&self, kind: TrajectoryKind, feedback: FeedbackSource) -> PidGains {
        let mut g = self.preset.unwrap_or_else(|| Preset::for_run(kind, feedback)).gains();
        if let Some(kp) = self.kp {
            g.kp = kp;
        }
        if let Some(ki) = self.ki {
            g.ki = ki;
        }
        if let Some(kd) = self.kd {
            g.kd = kd;
        }
        g
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub sense_sigma_v: f64,
    pub mocap_sigma_mm: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            sense_sigma_v: 0.01,
            mocap_sigma_mm: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MocapConfig {
    pub rate_hz: f64,
    pub latency_s: f64,
}

impl Default for MocapConfig {
    fn default() -> Self {
        Self {
            rate_hz: 150.0,
            latency_s: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenLoopConfig {
    pub amplitude_kv: f64,
    pub freq_hz: f64,
    pub duration_s: f64,
    pub axis: OpenLoopAxis,
}

impl Default for OpenLoopConfig {
    fn default() -> Self {
        Self {
            amplitude_kv: 5.5,
            freq_hz: 3.0,
            duration_s: 5.0,
            axis: OpenLoopAxis::PhiPair,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub test_frac: f64,
    pub split: SplitMode,
    /// Benchmark episodes whose telemetry trains the model.
    pub trajectories: Vec<TrajectoryKind>,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            test_frac: 0.2,
            split: SplitMode::Shuffle,
            trajectories: vec![TrajectoryKind::Lemniscate, TrajectoryKind::Star],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub mode: Mode,
    pub seed: u64,
    pub plant: PlantParams,
    pub signal: SignalConfig,
    pub control: ControlConfig,
    pub trajectory: TrajectorySpec,
    pub noise: NoiseConfig,
    pub mocap: MocapConfig,
    pub openloop: OpenLoopConfig,
    pub estimator: EstimatorConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Benchmark,
            seed: 0,
            plant: PlantParams::default(),
            signal: SignalConfig::default(),
            control: ControlConfig::default(),
            trajectory: TrajectorySpec::lemniscate(),
            noise: NoiseConfig::default(),
            mocap: MocapConfig::default(),
            openloop: OpenLoopConfig::default(),
            estimator: EstimatorConfig::default(),
        }
    }
}

/// Raw assignments with the line each came from.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigEntries(BTreeMap<String, (usize, String)>);

impl ConfigEntries {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line_no = n + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(line_no, format!("expected `key = value`, got '{line}'")))?;
            let key = key.trim();
            if !KNOWN_KEYS.contains(&key) {
                return Err(Error::config(line_no, format!("unknown key '{key}'")));
            }
            if map.insert(key.to_string(), (line_no, value.trim().to_string())).is_some() {
                return Err(Error::config(line_no, format!("key '{key}' assigned twice")));
            }
        }
        Ok(Self(map))
    }

    /// Sets or replaces a value (command-line overrides use line 0).
    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        if !KNOWN_KEYS.contains(&key) {
            return Err(Error::config(0, format!("unknown key '{key}'")));
        }
        self.0.insert(key.to_string(), (0, value.into()));
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(|(_, v)| v.as_str())
    }
}

pub const KNOWN_KEYS: &[&str] = &[
    "mode",
    "seed",
    "geometry.r_s_mm",
    "geometry.r_t_mm",
    "geometry.q_t_mm",
    "geometry.l_m_mm",
    "plant.rest_length_mm",
    "plant.max_contraction_mm",
    "plant.blocked_force_n",
    "plant.free_strain",
    "plant.calib_loads_kg",
    "plant.calib_strains",
    "plant.v_ref_kv",
    "plant.v_max_kv",
    "plant.tau_force_s",
    "plant.c_min_pf",
    "plant.c_max_pf",
    "plant.r_sense_mohm",
    "plant.f_ac_khz",
    "plant.v_ac_rms",
    "plant.strain_scale",
    "plant.slack_mm",
    "plant.mass_kg",
    "plant.l_com_mm",
    "plant.damping",
    "plant.g",
    "plant.dt_plant_s",
    "signal.ma_window",
    "signal.lp_cutoff_sense_hz",
    "signal.lp_cutoff_cmd_hz",
    "signal.waveform_mode",
    "signal.sense_delay_s",
    "signal.sense_rate_hz",
    "control.preset",
    "control.kp",
    "control.ki",
    "control.kd",
    "control.rate_hz",
    "control.amplifiers",
    "control.amp_scale",
    "trajectory.kind",
    "trajectory.amplitude_mm",
    "trajectory.period_s",
    "trajectory.cycles",
    "trajectory.star_points",
    "trajectory.star_inner_ratio",
    "trajectory.ramp_s",
    "trajectory.mirror_x",
    "noise.sense_sigma_v",
    "noise.mocap_sigma_mm",
    "mocap.rate_hz",
    "mocap.latency_s",
    "openloop.amplitude_kv",
    "openloop.freq_hz",
    "openloop.duration_s",
    "openloop.axis",
    "estimator.test_frac",
    "estimator.split",
    "estimator.trajectories",
];

fn list(value: &str) -> Vec<&str> {
    let v = value.trim();
    let v = v.strip_prefix('[').unwrap_or(v);
    let v = v.strip_suffix(']').unwrap_or(v);
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).collect()
}

fn float(value: &str) -> std::result::Result<f64, String> {
    let v: f64 = value.parse().map_err(|_| format!("'{value}' is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("'{value}' is not finite"))
    }
}

fn floats<const N: usize>(value: &str) -> std::result::Result<[f64; N], String> {
    let items = list(value);
    if items.len() != N {
        return Err(format!("expected {N} values, got {}", items.len()));
    }
    let mut out = [0.0; N];
    for (o, s) in out.iter_mut().zip(items) {
        *o = float(s)?;
    }
    Ok(out)
}

fn integer(value: &str) -> std::result::Result<usize, String> {
    value.parse().map_err(|_| format!("'{value}' is not a non-negative integer"))
}

fn boolean(value: &str) -> std::result::Result<bool, String> {
    match value {
        "true" | "on" | "1" | "yes" => Ok(true),
        "false" | "off" | "0" | "no" => Ok(false),
        _ => Err(format!("'{value}' is not a boolean")),
    }
}

fn parsed<T: FromStr<Err = Error>>(value: &str) -> std::result::Result<T, String> {
    value.parse().map_err(|e: Error| e.to_string())
}

impl SimConfig {
    /// Parses configuration text into a validated config.
    pub fn parse(text: &str) -> Result<Self> {
        Self::from_entries(&ConfigEntries::parse(text)?)
    }

    pub fn from_entries(entries: &ConfigEntries) -> Result<Self> {
        let mut cfg = SimConfig::default();

        // Keys that set defaults for others go first.
        let mut ordered: Vec<(&String, &(usize, String))> = entries.0.iter().collect();
        let rank = |k: &str| match k {
            "control.preset" => 0,
            "trajectory.kind" => 1,
            "control.amplifiers" => 2,
            _ => 3,
        };
        ordered.sort_by_key(|(k, _)| rank(k));

        for (key, (line, value)) in ordered {
            cfg.apply(key, value, entries).map_err(|m| Error::config(*line, format!("{key}: {m}")))?;
        }

        let explicit_fb = entries.get("plant.blocked_force_n").is_some();
        let explicit_eps = entries.get("plant.free_strain").is_some();
        if !(explicit_fb && explicit_eps) {
            let loads = entries
                .get("plant.calib_loads_kg")
                .map(floats::<2>)
                .transpose()
                .map_err(|m| Error::config(0, m))?
                .unwrap_or(STEP_RESPONSE_LOADS_KG);
            let strains = entries
                .get("plant.calib_strains")
                .map(floats::<2>)
                .transpose()
                .map_err(|m| Error::config(0, m))?
                .unwrap_or([STEP_RESPONSE_TABLE[0][0].0, STEP_RESPONSE_TABLE[0][1].0]);
            let cal = calibrate_from_table(
                [0, 1].map(|k| LoadStrain {
                    load_kg: loads[k],
                    strain: strains[k],
                }),
                crate::plant::STANDARD_GRAVITY,
            )
            .map_err(|e| Error::config(0, e.to_string()))?;
            if !explicit_fb {
                cfg.plant.hasel.blocked_force_n = cal.blocked_force_n;
            }
            if !explicit_eps {
                cfg.plant.hasel.free_strain = cal.free_strain;
            }
        }

        cfg.validate().map_err(|e| match e {
            Error::Config { .. } => e,
            other => Error::config(0, other.to_string()),
        })?;
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, value: &str, entries: &ConfigEntries) -> std::result::Result<(), String> {
        let p = &mut self.plant;
        match key {
            "mode" => self.mode = parsed(value)?,
            "seed" => self.seed = value.parse().map_err(|_| format!("'{value}' is not a u64"))?,
            "geometry.r_s_mm" => p.geometry.r_s_mm = float(value)?,
            "geometry.r_t_mm" => p.geometry.r_t_mm = float(value)?,
            "geometry.q_t_mm" => p.geometry.q_t_mm = float(value)?,
            "geometry.l_m_mm" => p.geometry.l_m_mm = float(value)?,
            "plant.rest_length_mm" => p.hasel.rest_length_mm = float(value)?,
            "plant.max_contraction_mm" => p.hasel.max_contraction_mm = float(value)?,
            "plant.blocked_force_n" => p.hasel.blocked_force_n = float(value)?,
            "plant.free_strain" => p.hasel.free_strain = float(value)?,
            // consumed after all assignments
            "plant.calib_loads_kg" | "plant.calib_strains" => {
                floats::<2>(value)?;
            }
            "plant.v_ref_kv" => p.hasel.v_ref_kv = float(value)?,
            "plant.v_max_kv" => p.hasel.v_max_kv = float(value)?,
            "plant.tau_force_s" => p.hasel.tau_force_s = float(value)?,
            "plant.c_min_pf" => p.hasel.c_min_pf = float(value)?,
            "plant.c_max_pf" => p.hasel.c_max_pf = float(value)?,
            "plant.r_sense_mohm" => p.hasel.r_sense_mohm = float(value)?,
            "plant.f_ac_khz" => p.hasel.f_ac_khz = float(value)?,
            "plant.v_ac_rms" => p.hasel.v_ac_rms = float(value)?,
            "plant.strain_scale" => p.hasel.strain_scale = floats(value)?,
            "plant.slack_mm" => p.hasel.slack_mm = float(value)?,
            "plant.mass_kg" => p.body.mass_kg = float(value)?,
            "plant.l_com_mm" => p.body.l_com_mm = float(value)?,
            "plant.damping" => p.body.damping = float(value)?,
            "plant.g" => p.body.g = float(value)?,
            "plant.dt_plant_s" => p.body.dt_plant_s = float(value)?,
            "signal.ma_window" => self.signal.ma_window = integer(value)?,
            "signal.lp_cutoff_sense_hz" => self.signal.lp_cutoff_sense_hz = float(value)?,
            "signal.lp_cutoff_cmd_hz" => self.signal.lp_cutoff_cmd_hz = float(value)?,
            "signal.waveform_mode" => self.signal.waveform_mode = boolean(value)?,
            "signal.sense_delay_s" => self.signal.sense_delay_s = float(value)?,
            "signal.sense_rate_hz" => self.signal.sense_rate_hz = float(value)?,
            "control.preset" => {
                let preset: Preset = parsed(value)?;
                self.control.preset = Some(preset);
                if entries.get("trajectory.kind").is_none() {
                    self.set_kind(preset.trajectory());
                }
            }
            "control.kp" => self.control.kp = Some(floats(value)?),
            "control.ki" => self.control.ki = Some(floats(value)?),
            "control.kd" => self.control.kd = Some(floats(value)?),
            "control.rate_hz" => self.control.rate_hz = float(value)?,
            "control.amplifiers" => {
                let set: AmplifierSet = parsed(value)?;
                self.control.amp_scale = set.scales();
            }
            "control.amp_scale" => self.control.amp_scale = floats(value)?,
            "trajectory.kind" => self.set_kind(parsed(value)?),
            "trajectory.amplitude_mm" => self.trajectory.amplitude_mm = float(value)?,
            "trajectory.period_s" => self.trajectory.period_s = float(value)?,
            "trajectory.cycles" => self.trajectory.cycles = integer(value)?,
            "trajectory.star_points" => self.trajectory.star_points = integer(value)?,
            "trajectory.star_inner_ratio" => self.trajectory.star_inner_ratio = float(value)?,
            "trajectory.ramp_s" => self.trajectory.ramp_s = float(value)?,
            "trajectory.mirror_x" => self.trajectory.mirror_x = boolean(value)?,
            "noise.sense_sigma_v" => self.noise.sense_sigma_v = float(value)?,
            "noise.mocap_sigma_mm" => self.noise.mocap_sigma_mm = float(value)?,
            "mocap.rate_hz" => self.mocap.rate_hz = float(value)?,
            "mocap.latency_s" => self.mocap.latency_s = float(value)?,
            "openloop.amplitude_kv" => self.openloop.amplitude_kv = float(value)?,
            "openloop.freq_hz" => self.openloop.freq_hz = float(value)?,
            "openloop.duration_s" => self.openloop.duration_s = float(value)?,
            "openloop.axis" => self.openloop.axis = parsed(value)?,
            "estimator.test_frac" => self.estimator.test_frac = float(value)?,
            "estimator.split" => self.estimator.split = parsed(value)?,
            "estimator.trajectories" => {
                let kinds = list(value)
                    .into_iter()
                    .map(parsed::<TrajectoryKind>)
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                if kinds.is_empty() {
                    return Err("at least one trajectory is required".into());
                }
                self.estimator.trajectories = kinds;
            }
            other => return Err(format!("unhandled key '{other}'")),
        }
        Ok(())
    }

    /// Switches the trajectory family, resetting the period to that family's default.
    pub fn set_kind(&mut self, kind: TrajectoryKind) {
        self.trajectory.kind = kind;
        self.trajectory.period_s = kind.default_period_s();
    }

    /// Copy of this config set up for one closed-loop run of the given family.
    /// Keeps an explicitly configured period only when the family is unchanged.
    pub fn for_run(&self, kind: TrajectoryKind) -> SimConfig {
        let mut cfg = self.clone();
        if cfg.trajectory.kind != kind {
            cfg.set_kind(kind);
        }
        cfg
    }

    pub fn control_dt(&self) -> f64 {
        1.0 / self.control.rate_hz
    }

    /// Plant steps per control tick.
    pub fn substeps(&self) -> usize {
        (self.control_dt() / self.plant.body.dt_plant_s).round() as usize
    }

    /// Plant steps per sensing sample.
    pub fn sense_substeps(&self) -> usize {
        (1.0 / (self.signal.sense_rate_hz * self.plant.body.dt_plant_s)).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        self.plant.validate()?;
        let g = &self.plant.geometry;
        self.trajectory.validate(g.l_m_mm, g.r_t_mm, g.q_t_mm)?;
        let rates = [
            self.control.rate_hz,
            self.mocap.rate_hz,
            self.signal.lp_cutoff_cmd_hz,
            self.signal.lp_cutoff_sense_hz,
            self.signal.sense_rate_hz,
        ];
        if rates.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::domain("rates and cutoffs must be positive"));
        }
        let dt_ctrl = self.control_dt();
        let n = self.substeps();
        if n == 0 || (n as f64 * self.plant.body.dt_plant_s - dt_ctrl).abs() > 1e-12 {
            return Err(Error::domain(format!(
                "plant step {} s does not divide the control period {dt_ctrl} s",
                self.plant.body.dt_plant_s
            )));
        }
        let m = self.sense_substeps();
        if m == 0 || !n.is_multiple_of(m) || (m as f64 * self.plant.body.dt_plant_s * self.signal.sense_rate_hz - 1.0).abs() > 1e-9 {
            return Err(Error::domain(format!(
                "sensing rate {} Hz must divide the plant rate and be a multiple of the control rate",
                self.signal.sense_rate_hz
            )));
        }
        if self.signal.ma_window == 0 {
            return Err(Error::domain("signal.ma_window must be at least 1"));
        }
        let non_negative = [
            self.noise.sense_sigma_v,
            self.noise.mocap_sigma_mm,
            self.mocap.latency_s,
            self.signal.sense_delay_s,
        ];
        if non_negative.iter().any(|v| *v < 0.0) {
            return Err(Error::domain("noise levels and delays must be non-negative"));
        }
        if self.control.amp_scale.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::domain("amplifier scales must be positive"));
        }
        for g in [self.control.kp, self.control.ki, self.control.kd].into_iter().flatten() {
            if g.iter().any(|v| *v < 0.0) {
                return Err(Error::domain("gains must be non-negative"));
            }
        }
        let ol = &self.openloop;
        if !(ol.amplitude_kv >= 0.0 && ol.amplitude_kv <= self.plant.hasel.v_max_kv) {
            return Err(Error::domain("open-loop amplitude must lie in [0, V_max]"));
        }
        if !(ol.freq_hz > 0.0 && ol.duration_s > 0.0) {
            return Err(Error::domain("open-loop frequency and duration must be positive"));
        }
        if !(self.estimator.test_frac > 0.0 && self.estimator.test_frac < 1.0) {
            return Err(Error::domain("estimator.test_frac must lie in (0, 1)"));
        }
        Ok(())
    }
}
