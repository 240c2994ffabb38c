//! Task-space reference curves on the manipulator sphere.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrajectoryKind {
    Lemniscate,
    Star,
}

impl TrajectoryKind {
    pub fn default_period_s(self) -> f64 {
        match self {
            TrajectoryKind::Lemniscate => 25.0,
            TrajectoryKind::Star => 40.0,
        }
    }
}

impl FromStr for TrajectoryKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lemniscate" => Ok(TrajectoryKind::Lemniscate),
            "star" => Ok(TrajectoryKind::Star),
            other => Err(Error::domain(format!("unknown trajectory kind '{other}'"))),
        }
    }
}

impl fmt::Display for TrajectoryKind {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str(match self {
            TrajectoryKind::Lemniscate => "lemniscate",
            TrajectoryKind::Star => "star",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    pub kind: TrajectoryKind,
    pub amplitude_mm: f64,
    pub period_s: f64,
    pub star_points: usize,
    pub star_inner_ratio: f64,
    pub ramp_s: f64,
    pub cycles: usize,
    /// Reflect the curve through the y axis (x -> -x).
    pub mirror_x: bool,
}

impl TrajectorySpec {
    pub fn new(kind: TrajectoryKind) -> Self {
        Self {
            kind,
            amplitude_mm: 40.0,
            period_s: kind.default_period_s(),
            star_points: 5,
            star_inner_ratio: 0.382,
            ramp_s: 2.0,
            cycles: 2,
            mirror_x: false,
        }
    }

    pub fn lemniscate() -> Self {
        Self::new(TrajectoryKind::Lemniscate)
    }

    pub fn star() -> Self {
        Self::new(TrajectoryKind::Star)
    }

    /// Ramp plus all cycles.
    pub fn duration_s(&self) -> f64 {
        self.ramp_s + self.cycles as f64 * self.period_s
    }

    /// Checks the spec against a manipulator length and projection geometry.
    pub fn validate(&self, l_m: f64, r_t: f64, q_t: f64) -> Result<()> {
        if !(self.period_s > 0.0 && self.period_s.is_finite()) {
            return Err(Error::domain("trajectory period must be positive"));
        }
        if !(self.amplitude_mm >= 0.0 && self.ramp_s >= 0.0) {
            return Err(Error::domain("amplitude and ramp must be non-negative"));
        }
        if self.star_points < 3 {
            return Err(Error::domain("a star needs at least 3 points"));
        }
        if !(self.star_inner_ratio > 0.0 && self.star_inner_ratio < 1.0) {
            return Err(Error::domain("star inner ratio must lie in (0, 1)"));
        }
        if self.amplitude_mm * r_t / l_m > q_t {
            return Err(Error::domain(format!(
                "amplitude {} mm leaves the reachable disc",
                self.amplitude_mm
            )));
        }
        Ok(())
    }
}

/// Lemniscate of Gerono: `x = A sin a`, `y = A sin a cos a`, `a = 2 pi t / T`.
pub fn lemniscate_point(t: f64, spec: &TrajectorySpec) -> (f64, f64) {
    let a = 2.0 * PI * t / spec.period_s;
    let (s, c) = a.sin_cos();
    (spec.amplitude_mm * s, spec.amplitude_mm * s * c)
}

fn star_vertex(k: usize, spec: &TrajectorySpec) -> (f64, f64) {
    let n = spec.star_points;
    let angle = 0.5 * PI + k as f64 * PI / n as f64;
    let r = if k.is_multiple_of(2) {
        spec.amplitude_mm
    } else {
        spec.amplitude_mm * spec.star_inner_ratio
    };
    (r * angle.cos(), r * angle.sin())
}

/// Constant-speed walk around the star outline, starting at the top vertex.
pub fn star_point(t: f64, spec: &TrajectorySpec) -> (f64, f64) {
    let m = 2 * spec.star_points;
    let vertices: Vec<(f64, f64)> = (0..m).map(|k| star_vertex(k, spec)).collect();
    let seg_len = |k: usize| {
        let (a, b) = (vertices[k], vertices[(k + 1) % m]);
        (b.0 - a.0).hypot(b.1 - a.1)
    };
    let total: f64 = (0..m).map(seg_len).sum();
    if total == 0.0 {
        return (0.0, 0.0);
    }
    let mut s = (t / spec.period_s).rem_euclid(1.0) * total;
    for k in 0..m {
        let len = seg_len(k);
        if s <= len || k == m - 1 {
            let u = if len > 0.0 { (s / len).min(1.0) } else { 0.0 };
            let (a, b) = (vertices[k], vertices[(k + 1) % m]);
            return (a.0 + u * (b.0 - a.0), a.1 + u * (b.1 - a.1));
        }
        s -= len;
    }
    unreachable!("segment walk always terminates on the last segment")
}

/// Lifts a planar point onto the lower hemisphere of radius `l_m`.
pub fn to_sphere(x: f64, y: f64, l_m: f64) -> Result<Vector3<f64>> {
    let r2 = x * x + y * y;
    if !(r2 < l_m * l_m) {
        return Err(Error::domain(format!(
            "point ({x}, {y}) is not inside the {l_m} mm sphere's footprint"
        )));
    }
    Ok(Vector3::new(x, y, -(l_m * l_m - r2).sqrt()))
}

/// Quadratic ease-in `min(1, t / ramp)^2`.
pub fn ramp_scale(t: f64, ramp_s: f64) -> f64 {
    if ramp_s <= 0.0 {
        return if t >= 0.0 { 1.0 } else { 0.0 };
    }
    let u = (t / ramp_s).clamp(0.0, 1.0);
    u * u
}

/// Planar curve point at time `t` measured from the end of the ramp.
pub fn curve_point(t: f64, spec: &TrajectorySpec) -> (f64, f64) {
    let (x, y) = match spec.kind {
        TrajectoryKind::Lemniscate => lemniscate_point(t, spec),
        TrajectoryKind::Star => star_point(t, spec),
    };
    if spec.mirror_x {
        (-x, y)
    } else {
        (x, y)
    }
}

/// Desired end-effector position at episode time `t`.
pub fn reference(t: f64, spec: &TrajectorySpec, l_m: f64) -> Result<Vector3<f64>> {
    if t < 0.0 {
        return Ok(Vector3::new(0.0, 0.0, -l_m));
    }
    let s = ramp_scale(t, spec.ramp_s);
    let (x, y) = curve_point(t - spec.ramp_s, spec);
    to_sphere(s * x, s * y, l_m)
}
