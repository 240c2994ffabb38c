//! Open-loop and closed-loop episode runners.

use std::collections::VecDeque;
use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::{OpenLoopAxis, SimConfig};
use super::log::{EpisodeLog, TickRecord};
use crate::control::{Controller, ControllerSettings, FeedbackSource};
use crate::error::{Error, Result};
use crate::estimator::PolyModel;
use crate::geometry::{end_effector_position, rotation_from_euler, tendons_at};
use crate::plant::{capacitance, contractions, sensing_voltages, step_dynamics, PlantParams, PlantState};
use crate::signal::{waveform_rms, LowPass, MovingAverage, WaveformSettings};
use crate::trajectory::{reference, TrajectoryKind};

/// Largest angle an estimate may report before it is clamped (rad).
const ESTIMATE_LIMIT_RAD: f64 = 80.0 * PI / 180.0;

/// Open-loop drive `V_amp (1 + sin(2 pi f t)) / 2`.
pub fn openloop_voltage(amplitude_kv: f64, freq_hz: f64, t: f64) -> f64 {
    0.5 * amplitude_kv * (1.0 + (2.0 * PI * freq_hz * t).sin())
}

/// Per-channel open-loop commands at time `t`. The antagonist of each driven
/// channel runs half a period later; the theta pair lags the phi pair by a
/// quarter period when both are driven.
pub fn openloop_commands(cfg: &SimConfig, t: f64) -> [f64; 4] {
    let ol = &cfg.openloop;
    let period = 1.0 / ol.freq_hz;
    let v = |t: f64| openloop_voltage(ol.amplitude_kv, ol.freq_hz, t);
    let phi_pair = [v(t), v(t + 0.5 * period)];
    let theta_pair = [v(t - 0.25 * period), v(t + 0.25 * period)];
    match ol.axis {
        OpenLoopAxis::PhiPair => [phi_pair[0], phi_pair[1], 0.0, 0.0],
        OpenLoopAxis::ThetaPair => [0.0, 0.0, v(t), v(t + 0.5 * period)],
        OpenLoopAxis::Both => [phi_pair[0], phi_pair[1], theta_pair[0], theta_pair[1]],
    }
}

/// Sensing front end: raw RMS plus noise at the sensing rate, moving average
/// then low-pass, then an optional transport delay.
struct SenseChain {
    ma: [MovingAverage; 4],
    lp: [LowPass; 4],
    delay: VecDeque<[f64; 4]>,
    delay_samples: usize,
    noise: Option<Normal<f64>>,
    rng: ChaCha8Rng,
    waveform: Option<WaveformSettings>,
}

impl SenseChain {
    fn new(cfg: &SimConfig, rng: ChaCha8Rng) -> Result<Self> {
        let dt = 1.0 / cfg.signal.sense_rate_hz;
        let ma = MovingAverage::new(cfg.signal.ma_window)?;
        let lp = LowPass::new(cfg.signal.lp_cutoff_sense_hz, dt)?;
        let sigma = cfg.noise.sense_sigma_v;
        Ok(Self {
            ma: std::array::from_fn(|_| ma.clone()),
            lp: std::array::from_fn(|_| lp.clone()),
            delay: VecDeque::new(),
            delay_samples: (cfg.signal.sense_delay_s / dt).round() as usize,
            noise: gaussian(sigma)?,
            rng,
            waveform: cfg.signal.waveform_mode.then_some(WaveformSettings {
                sample_rate_hz: 100e3,
                substeps: 1,
                settle_periods: 10,
                measure_periods: 2,
            }),
        })
    }

    fn raw(&self, state: &PlantState, params: &PlantParams) -> Result<[f64; 4]> {
        match &self.waveform {
            None => Ok(sensing_voltages(state, params)),
            Some(ws) => {
                let h = &params.hasel;
                let c = contractions(state.phi, state.theta, params);
                let mut out = [0.0; 4];
                for i in 0..4 {
                    let c_f = capacitance(c[i], h) * 1e-12;
                    out[i] = waveform_rms(h.v_ac_rms, h.f_ac_khz * 1e3, h.r_sense_mohm * 1e6, c_f, ws)?;
                }
                Ok(out)
            }
        }
    }

    fn sample(&mut self, state: &PlantState, params: &PlantParams) -> Result<()> {
        let raw = self.raw(state, params)?;
        let mut filtered = [0.0; 4];
        for i in 0..4 {
            let noisy = raw[i] + self.noise.map_or(0.0, |n| n.sample(&mut self.rng));
            filtered[i] = self.lp[i].push(self.ma[i].push(noisy));
        }
        self.delay.push_back(filtered);
        if self.delay.len() > self.delay_samples + 1 {
            self.delay.pop_front();
        }
        Ok(())
    }

    fn read(&self) -> [f64; 4] {
        self.delay.front().copied().unwrap_or([0.0; 4])
    }
}

fn gaussian(sigma: f64) -> Result<Option<Normal<f64>>> {
    if sigma > 0.0 {
        Normal::new(0.0, sigma).map(Some).map_err(|e| Error::domain(e.to_string()))
    } else {
        Ok(None)
    }
}

/// 150 Hz sample-and-hold position tracker with Gaussian noise and optional latency.
struct Mocap {
    period: f64,
    latency: f64,
    next_sample: f64,
    pending: VecDeque<(f64, Vector3<f64>)>,
    held: Vector3<f64>,
    noise: Option<Normal<f64>>,
    rng: ChaCha8Rng,
    l_m: f64,
}

impl Mocap {
    fn new(cfg: &SimConfig, rng: ChaCha8Rng) -> Result<Self> {
        let sigma = cfg.noise.mocap_sigma_mm;
        let l_m = cfg.plant.geometry.l_m_mm;
        Ok(Self {
            period: 1.0 / cfg.mocap.rate_hz,
            latency: cfg.mocap.latency_s,
            next_sample: 0.0,
            pending: VecDeque::new(),
            held: Vector3::new(0.0, 0.0, -l_m),
            noise: gaussian(sigma)?,
            rng,
            l_m,
        })
    }

    /// Called after every plant step; captures a frame when one is due.
    fn observe(&mut self, state: &PlantState) -> Result<()> {
        // Tolerance keeps frame times from slipping on accumulated rounding.
        while state.time + 1e-9 >= self.next_sample {
            let mut p = true_position(state, self.l_m)?;
            if let Some(n) = self.noise {
                p += Vector3::new(n.sample(&mut self.rng), n.sample(&mut self.rng), n.sample(&mut self.rng));
                p *= self.l_m / p.norm();
            }
            self.pending.push_back((self.next_sample + self.latency, p));
            self.next_sample += self.period;
        }
        Ok(())
    }

    /// Latest frame available at time `t`.
    fn read(&mut self, t: f64) -> Vector3<f64> {
        while let Some(&(ready, p)) = self.pending.front() {
            if ready > t + 1e-9 {
                break;
            }
            self.held = p;
            self.pending.pop_front();
        }
        self.held
    }
}

fn true_position(state: &PlantState, l_m: f64) -> Result<Vector3<f64>> {
    Ok(end_effector_position(&rotation_from_euler(state.phi, state.theta)?, l_m))
}

/// Seeds an independent stream per episode kind so concurrent episodes never share noise.
fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn episode_stream(kind: TrajectoryKind, feedback: FeedbackSource) -> u64 {
    let k = match kind {
        TrajectoryKind::Lemniscate => 0,
        TrajectoryKind::Star => 1,
    };
    let f = match feedback {
        FeedbackSource::GroundTruth => 0,
        FeedbackSource::SelfSensing => 1,
    };
    // 0 and 1 are left to the open-loop runner
    2 + 2 * (2 * k + f)
}

fn tick_count(duration_s: f64, dt: f64) -> usize {
    (duration_s / dt - 1e-9).ceil() as usize + 1
}

/// Drives the configured open-loop waveform and logs the resulting motion.
/// Reference and fed-back positions are logged as the true pose.
pub fn run_openloop(cfg: &SimConfig) -> Result<EpisodeLog> {
    run_openloop_from(cfg, PlantState::at_rest())
}

pub fn run_openloop_from(cfg: &SimConfig, initial: PlantState) -> Result<EpisodeLog> {
    cfg.validate()?;
    let params = &cfg.plant;
    let dt = cfg.control_dt();
    let substeps = cfg.substeps();
    let sense_every = cfg.sense_substeps();
    let mut sense = SenseChain::new(cfg, stream_rng(cfg.seed, 0))?;
    let mut state = initial;
    let mut log = EpisodeLog::new("openloop");
    let l_m = params.geometry.l_m_mm;
    if let Err(cause) = sense.sample(&state, params) {
        return Err(Error::Aborted {
            partial: Box::new(log),
            cause: Box::new(cause),
        });
    }

    let n = tick_count(cfg.openloop.duration_s, dt);
    for k in 0..n {
        let t = k as f64 * dt;
        let commands = openloop_commands(cfg, t);
        let step = |state: &mut PlantState, log: &mut EpisodeLog, sense: &mut SenseChain| -> Result<()> {
            let x = true_position(state, l_m)?;
            let q = tendons_at(state.phi, state.theta, &params.geometry).0;
            let v_sense = sense.read();
            log.push(TickRecord {
                t_s: t,
                x_ref: x.into(),
                x_true: x.into(),
                x_est: x.into(),
                q_ref: q,
                q_est: q,
                q_true: q,
                v_cmd: commands,
                v_sense,
                saturated: [false; 4],
                phi: state.phi,
                theta: state.theta,
            });
            for j in 1..=substeps {
                *state = step_dynamics(state, &commands, params)?;
                if j % sense_every == 0 {
                    sense.sample(state, params)?;
                }
            }
            Ok(())
        };
        if let Err(cause) = step(&mut state, &mut log, &mut sense) {
            return Err(Error::Aborted {
                partial: Box::new(log),
                cause: Box::new(cause),
            });
        }
    }
    Ok(log)
}

/// Peak-to-peak (phi, theta) excursion in degrees over ticks at or after `from_s`.
pub fn angle_range_deg(log: &EpisodeLog, from_s: f64) -> (f64, f64) {
    let mut lo = (f64::INFINITY, f64::INFINITY);
    let mut hi = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for r in log.records.iter().filter(|r| r.t_s >= from_s) {
        lo = (lo.0.min(r.phi), lo.1.min(r.theta));
        hi = (hi.0.max(r.phi), hi.1.max(r.theta));
    }
    if lo.0 > hi.0 {
        return (0.0, 0.0);
    }
    ((hi.0 - lo.0).to_degrees(), (hi.1 - lo.1).to_degrees())
}

/// Runs one closed-loop tracking episode of the configured trajectory.
///
/// Each control tick logs the current state, computes new commands and then
/// holds them for the plant sub-steps. Faults abort with the ticks logged so far.
pub fn run_closed_loop(cfg: &SimConfig, feedback: FeedbackSource, model: Option<&PolyModel>) -> Result<EpisodeLog> {
    cfg.validate()?;
    let model = match (feedback, model) {
        (FeedbackSource::SelfSensing, None) => return Err(Error::Untrained),
        (_, m) => m,
    };
    if let Some(m) = model {
        m.validate()?;
    }
    let spec = cfg.trajectory;
    let params = &cfg.plant;
    let geometry = &params.geometry;
    let l_m = geometry.l_m_mm;
    let dt = cfg.control_dt();
    let substeps = cfg.substeps();
    let sense_every = cfg.sense_substeps();

    let settings = ControllerSettings {
        gains: cfg.control.gains_for(spec.kind, feedback),
        rate_hz: cfg.control.rate_hz,
        v_max_kv: params.hasel.v_max_kv,
        cmd_cutoff_hz: cfg.signal.lp_cutoff_cmd_hz,
        amp_scale: cfg.control.amp_scale,
    };
    let mut controller = Controller::new(settings)?;

    let stream = episode_stream(spec.kind, feedback);
    let mut sense = SenseChain::new(cfg, stream_rng(cfg.seed, stream))?;
    let mut mocap = Mocap::new(cfg, stream_rng(cfg.seed, stream + 1))?;

    let label = format!(
        "{}_{}",
        spec.kind,
        match feedback {
            FeedbackSource::GroundTruth => "bm",
            FeedbackSource::SelfSensing => "ss",
        }
    );
    let mut log = EpisodeLog::new(label);
    log.trajectory = Some(spec);
    log.feedback = Some(feedback);

    let mut state = PlantState::at_rest();
    let n = tick_count(spec.duration_s(), dt);
    let mut run = || -> Result<()> {
        mocap.observe(&state)?;
        sense.sample(&state, params)?;
        for k in 0..n {
            let t = k as f64 * dt;
            let x_true = true_position(&state, l_m)?;
            let v_sense = sense.read();
            let x_fb = match (feedback, model) {
                (FeedbackSource::SelfSensing, Some(m)) => {
                    let (phi, theta) = m.predict_angles(&v_sense);
                    if !(phi.is_finite() && theta.is_finite()) {
                        return Err(Error::ControllerFault {
                            channel: usize::MAX,
                            reason: "estimator produced a non-finite pose".into(),
                        });
                    }
                    let lim = ESTIMATE_LIMIT_RAD;
                    end_effector_position(&rotation_from_euler(phi.clamp(-lim, lim), theta.clamp(-lim, lim))?, l_m)
                }
                _ => mocap.read(t),
            };
            let x_ref = reference(t, &spec, l_m)?;
            let out = controller.control_step(&x_ref, &x_fb, geometry)?;
            if let Some(i) = out.commands.iter().position(|v| !(*v <= params.hasel.v_max_kv)) {
                return Err(Error::ControllerFault {
                    channel: i,
                    reason: format!("command {} kV exceeds the ceiling", out.commands[i]),
                });
            }
            log.push(TickRecord {
                t_s: t,
                x_ref: x_ref.into(),
                x_true: x_true.into(),
                x_est: x_fb.into(),
                q_ref: out.q_ref.q.0,
                q_est: out.q_feedback.q.0,
                q_true: tendons_at(state.phi, state.theta, geometry).0,
                v_cmd: out.commands,
                v_sense,
                saturated: out.saturated,
                phi: state.phi,
                theta: state.theta,
            });
            for j in 1..=substeps {
                state = step_dynamics(&state, &out.commands, params)?;
                mocap.observe(&state)?;
                if j % sense_every == 0 {
                    sense.sample(&state, params)?;
                }
            }
        }
        Ok(())
    };
    match run() {
        Ok(()) => Ok(log),
        Err(cause) => Err(Error::Aborted {
            partial: Box::new(log),
            cause: Box::new(cause),
        }),
    }
}

/// Regression samples from a logged episode: filtered sensing voltages paired
/// with the true (roll, pitch).
pub fn training_pairs(log: &EpisodeLog) -> (Vec<[f64; 4]>, Vec<[f64; 2]>) {
    log.records.iter().map(|r| (r.v_sense, [r.phi, r.theta])).unzip()
}
