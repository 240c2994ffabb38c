//! Streaming filters and RMS extraction for the sensing chain.

use std::collections::VecDeque;
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Root mean square of a sample block.
pub fn rms(samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::domain("rms of an empty sample block"));
    }
    let sum_sq: f64 = samples.iter().map(|x| x * x).sum();
    Ok((sum_sq / samples.len() as f64).sqrt())
}

/// Boxcar average over the most recent `window` samples. During warm-up the
/// mean is taken over the samples seen so far.
#[derive(Debug, Clone)]
pub struct MovingAverage {
    window: usize,
    buf: VecDeque<f64>,
}

impl MovingAverage {
    pub fn new(window: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::domain("moving average window must be at least 1"));
        }
        Ok(Self {
            window,
            buf: VecDeque::with_capacity(window),
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn push(&mut self, x: f64) -> f64 {
        if self.buf.len() == self.window {
            self.buf.pop_front();
        }
        self.buf.push_back(x);
        // Summed from scratch each push so the output is the exact window mean
        // rather than a drifting running sum.
        self.buf.iter().sum::<f64>() / self.buf.len() as f64
    }
}

/// First-order IIR low-pass `y += alpha * (x - y)` with
/// `alpha = dt / (dt + 1 / (2 pi f_c))`.
#[derive(Debug, Clone)]
pub struct LowPass {
    alpha: f64,
    y: Option<f64>,
}

impl LowPass {
    /// The first pushed sample initialises the state.
    pub fn new(cutoff_hz: f64, dt: f64) -> Result<Self> {
        if !(cutoff_hz > 0.0 && dt > 0.0) || !cutoff_hz.is_finite() || !dt.is_finite() {
            return Err(Error::domain(format!(
                "low-pass needs positive cutoff and dt (got f_c = {cutoff_hz}, dt = {dt})"
            )));
        }
        let rc = 1.0 / (2.0 * PI * cutoff_hz);
        Ok(Self {
            alpha: dt / (dt + rc),
            y: None,
        })
    }

    pub fn with_initial(cutoff_hz: f64, dt: f64, y0: f64) -> Result<Self> {
        let mut lp = Self::new(cutoff_hz, dt)?;
        lp.y = Some(y0);
        Ok(lp)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn output(&self) -> Option<f64> {
        self.y
    }

    pub fn push(&mut self, x: f64) -> f64 {
        let y = match self.y {
            Some(y) => y + self.alpha * (x - y),
            None => x,
        };
        self.y = Some(y);
        y
    }
}

/// Settings for synthesising the sensing carrier and measuring it the way a
/// sampled front end would.
#[derive(Debug, Clone, Copy)]
pub struct WaveformSettings {
    pub sample_rate_hz: f64,
    /// Integration sub-steps per sample for the RC node.
    pub substeps: usize,
    /// Whole carrier periods discarded while the node settles.
    pub settle_periods: usize,
    /// Whole carrier periods in the RMS window.
    pub measure_periods: usize,
}

impl Default for WaveformSettings {
    fn default() -> Self {
        Self {
            sample_rate_hz: 100e3,
            substeps: 20,
            settle_periods: 40,
            measure_periods: 20,
        }
    }
}

/// Drives a series RC node with a sinusoid of the given RMS amplitude, samples
/// the capacitor voltage and returns its windowed RMS.
///
/// The node is integrated with RK4 in the time domain, independent of the
/// phasor expression for the divider gain.
pub fn waveform_rms(
    v_rms: f64,
    freq_hz: f64,
    r_ohm: f64,
    c_farad: f64,
    settings: &WaveformSettings,
) -> Result<f64> {
    if !(freq_hz > 0.0 && r_ohm > 0.0 && c_farad > 0.0 && settings.sample_rate_hz > 0.0) {
        return Err(Error::domain("waveform synthesis needs positive f, R, C and rate"));
    }
    let amp = v_rms * 2f64.sqrt();
    let w = 2.0 * PI * freq_hz;
    let tau = r_ohm * c_farad;
    let fs = settings.sample_rate_hz;
    let samples_per_period = (fs / freq_hz).round() as usize;
    if samples_per_period < 4 || settings.measure_periods == 0 {
        return Err(Error::domain("sample rate too low for the carrier"));
    }
    let h = 1.0 / fs / settings.substeps.max(1) as f64;
    let deriv = |t: f64, v: f64| (amp * (w * t).sin() - v) / tau;

    let settle = settings.settle_periods * samples_per_period;
    let measure = settings.measure_periods * samples_per_period;
    let mut v = 0.0;
    let mut t = 0.0;
    let mut window = Vec::with_capacity(measure);
    for k in 0..settle + measure {
        for _ in 0..settings.substeps.max(1) {
            let k1 = deriv(t, v);
            let k2 = deriv(t + 0.5 * h, v + 0.5 * h * k1);
            let k3 = deriv(t + 0.5 * h, v + 0.5 * h * k2);
            let k4 = deriv(t + h, v + h * k3);
            v += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            t += h;
        }
        if k >= settle {
            window.push(v);
        }
    }
    rms(&window)
}
