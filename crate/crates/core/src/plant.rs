//! Actuator, sensing-divider and ball-joint dynamics.
//!
//! Each muscle follows a linear force-strain segment whose blocked force scales
//! with the square of the drive voltage. Tensions reach the joint through the
//! tendon Jacobian; the joint itself is a point-mass spherical pendulum in
//! roll/pitch coordinates with viscous damping, integrated by semi-implicit
//! Euler.

use std::f64::consts::PI;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{tendon_jacobian, tendons_at, Channel, GeometryParams};

/// Standard gravity (m/s^2).
pub const STANDARD_GRAVITY: f64 = 9.81;

/// Step-response characterisation of the four muscles at 5 kV:
/// `(strain, displacement_mm)` under the 14 g and the 34 g load.
pub const STEP_RESPONSE_TABLE: [[(f64, f64); 2]; 4] = [
    [(0.065, 8.45), (0.0588, 7.65)],
    [(0.0642, 8.35), (0.0575, 7.47)],
    [(0.0648, 8.42), (0.0586, 7.62)],
    [(0.0662, 8.60), (0.0601, 7.81)],
];

/// Hanging loads (kg) of the two characterisation columns.
pub const STEP_RESPONSE_LOADS_KG: [f64; 2] = [0.014, 0.034];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadStrain {
    pub load_kg: f64,
    pub strain: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    /// Blocked force at the reference voltage (N).
    pub blocked_force_n: f64,
    /// Free strain at the reference voltage.
    pub free_strain: f64,
}

/// Fits `F = F_b * (1 - strain / free_strain)` through two loaded step responses.
pub fn calibrate_from_table(points: [LoadStrain; 2], g: f64) -> Result<Calibration> {
    let [a, b] = points;
    if a.strain == b.strain {
        return Err(Error::SingularCalibration { strain: a.strain });
    }
    let (fa, fb) = (a.load_kg * g, b.load_kg * g);
    let slope = (fa - fb) / (a.strain - b.strain);
    if !(slope < 0.0) || !slope.is_finite() {
        return Err(Error::domain(
            "calibration points must show strain decreasing with load",
        ));
    }
    let blocked = fa - slope * a.strain;
    Ok(Calibration {
        blocked_force_n: blocked,
        free_strain: -blocked / slope,
    })
}

fn default_calibration() -> Calibration {
    let row = STEP_RESPONSE_TABLE[0];
    calibrate_from_table(
        [
            LoadStrain {
                load_kg: STEP_RESPONSE_LOADS_KG[0],
                strain: row[0].0,
            },
            LoadStrain {
                load_kg: STEP_RESPONSE_LOADS_KG[1],
                strain: row[1].0,
            },
        ],
        STANDARD_GRAVITY,
    )
    .expect("embedded characterisation table is well posed")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HaselParams {
    /// Actuated length scale used to convert contraction to strain (mm).
    pub rest_length_mm: f64,
    pub max_contraction_mm: f64,
    pub blocked_force_n: f64,
    pub free_strain: f64,
    pub v_ref_kv: f64,
    pub v_max_kv: f64,
    pub tau_force_s: f64,
    pub c_min_pf: f64,
    pub c_max_pf: f64,
    /// Total series resistance of the sensing divider (MOhm).
    pub r_sense_mohm: f64,
    pub f_ac_khz: f64,
    /// Excitation amplitude at the divider input (V RMS).
    pub v_ac_rms: f64,
    /// Per-channel multiplier on the free strain.
    pub strain_scale: [f64; 4],
    /// Constant offset added to every channel's contraction (mm).
    pub slack_mm: f64,
}

impl Default for HaselParams {
    fn default() -> Self {
        let cal = default_calibration();
        let ref_strain = STEP_RESPONSE_TABLE[0][0].0;
        Self {
            rest_length_mm: 130.0,
            max_contraction_mm: 7.5,
            blocked_force_n: cal.blocked_force_n,
            free_strain: cal.free_strain,
            v_ref_kv: 5.0,
            v_max_kv: 5.5,
            tau_force_s: 0.02,
            c_min_pf: 100.0,
            c_max_pf: 500.0,
            r_sense_mohm: 2.0,
            f_ac_khz: 2.0,
            // 10 V peak-to-peak doubled by the excitation amplifier
            v_ac_rms: 10.0 / 2f64.sqrt(),
            strain_scale: std::array::from_fn(|i| STEP_RESPONSE_TABLE[i][0].0 / ref_strain),
            slack_mm: 0.0,
        }
    }
}

impl HaselParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.rest_length_mm,
            self.max_contraction_mm,
            self.blocked_force_n,
            self.v_ref_kv,
            self.tau_force_s,
            self.r_sense_mohm,
            self.f_ac_khz,
            self.v_ac_rms,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::domain("actuator parameters must be finite and positive"));
        }
        if !(self.c_min_pf > 0.0 && self.c_min_pf < self.c_max_pf && self.c_max_pf.is_finite()) {
            return Err(Error::domain("need 0 < C_min < C_max"));
        }
        if !(self.free_strain > 0.0 && self.free_strain < 1.0) {
            return Err(Error::domain("free strain must lie in (0, 1)"));
        }
        if !(self.v_max_kv >= self.v_ref_kv && self.v_max_kv.is_finite()) {
            return Err(Error::domain("V_max must be at least V_ref"));
        }
        if self.strain_scale.iter().any(|s| !(s.is_finite() && *s > 0.0))
            || !self.slack_mm.is_finite()
        {
            return Err(Error::domain("strain scales must be positive and slack finite"));
        }
        Ok(())
    }

    pub fn channel_free_strain(&self, ch: Channel) -> f64 {
        self.free_strain * self.strain_scale[ch as usize]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidBodyParams {
    /// Effective point mass of the moving link (kg).
    pub mass_kg: f64,
    /// Distance from the joint centre to the centre of mass (mm).
    pub l_com_mm: f64,
    /// Viscous joint damping (N mm s / rad).
    pub damping: f64,
    /// Gravitational acceleration (m/s^2).
    pub g: f64,
    pub dt_plant_s: f64,
}

impl Default for RigidBodyParams {
    fn default() -> Self {
        Self {
            mass_kg: 2.8e-6,
            l_com_mm: 50.0,
            damping: 0.002,
            g: STANDARD_GRAVITY,
            dt_plant_s: 1e-4,
        }
    }
}

impl RigidBodyParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.mass_kg, self.l_com_mm, self.damping, self.g, self.dt_plant_s];
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::domain("rigid-body parameters must be finite and positive"));
        }
        Ok(())
    }

    /// Moment of inertia about the joint centre (kg mm^2).
    pub fn inertia(&self) -> f64 {
        self.mass_kg * self.l_com_mm * self.l_com_mm
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlantParams {
    pub geometry: GeometryParams,
    pub hasel: HaselParams,
    pub body: RigidBodyParams,
}

impl PlantParams {
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.hasel.validate()?;
        self.body.validate()
    }

    /// Same actuator model on all four channels.
    pub fn with_uniform_channels(mut self) -> Self {
        self.hasel.strain_scale = [1.0; 4];
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlantState {
    pub phi: f64,
    pub theta: f64,
    pub phi_dot: f64,
    pub theta_dot: f64,
    /// Lagged muscle forces before the end stop (N).
    pub force: [f64; 4],
    pub time: f64,
}

impl PlantState {
    pub fn at_rest() -> Self {
        Self::default()
    }

    pub fn with_angles(phi: f64, theta: f64) -> Self {
        Self {
            phi,
            theta,
            ..Self::default()
        }
    }
}

/// Blocked force at drive voltage `v` (kV).
pub fn blocked_force(v: f64, params: &HaselParams) -> Result<f64> {
    if !(0.0..=params.v_max_kv).contains(&v) {
        return Err(Error::domain(format!(
            "drive voltage {v} kV outside [0, {}] kV",
            params.v_max_kv
        )));
    }
    let r = v / params.v_ref_kv;
    Ok(params.blocked_force_n * r * r)
}

/// Tendon tension (N) of a muscle with the given free strain at contraction `c` (mm).
pub fn tension_with_strain(v: f64, c: f64, free_strain: f64, params: &HaselParams) -> Result<f64> {
    let strain = (c / params.rest_length_mm).max(0.0);
    Ok((blocked_force(v, params)? * (1.0 - strain / free_strain)).max(0.0))
}

pub fn tension(v: f64, c: f64, params: &HaselParams) -> Result<f64> {
    tension_with_strain(v, c, params.free_strain, params)
}

/// Sensing-electrode capacitance (pF), linear between the relaxed and the
/// fully contracted state.
pub fn capacitance(c: f64, params: &HaselParams) -> f64 {
    let c = c.clamp(0.0, params.max_contraction_mm);
    params.c_max_pf - (params.c_max_pf - params.c_min_pf) * c / params.max_contraction_mm
}

/// RMS voltage across the sensing electrodes of the series RC divider.
pub fn sense_voltage_rms(c_pf: f64, params: &HaselParams) -> f64 {
    params.v_ac_rms * divider_gain(c_pf, params)
}

/// `|1 / (1 + j w R C)|`.
pub fn divider_gain(c_pf: f64, params: &HaselParams) -> f64 {
    let wrc = 2.0 * PI * params.f_ac_khz * 1e3 * params.r_sense_mohm * 1e6 * c_pf * 1e-12;
    1.0 / (1.0 + wrc * wrc).sqrt()
}

/// Per-channel contraction (mm) implied by the joint angles.
pub fn contractions(phi: f64, theta: f64, params: &PlantParams) -> [f64; 4] {
    let q = tendons_at(phi, theta, &params.geometry);
    let full = 2.0 * params.geometry.q_t_mm;
    std::array::from_fn(|i| full - q.0[i] + params.hasel.slack_mm)
}

/// Noise-free sensing voltages (V RMS) at the plant's current pose.
pub fn sensing_voltages(state: &PlantState, params: &PlantParams) -> [f64; 4] {
    contractions(state.phi, state.theta, params)
        .map(|c| sense_voltage_rms(capacitance(c, &params.hasel), &params.hasel))
}

/// Contraction band (mm) below `max_contraction_mm` over which a zipping
/// pouch loses its pull.
pub const END_STOP_BAND_MM: f64 = 1.5;

/// Fraction of the tension a muscle can still deliver at contraction `c`;
/// falls linearly to zero as the pouch closes completely.
pub fn end_stop_factor(c: f64, params: &HaselParams) -> f64 {
    ((params.max_contraction_mm - c) / END_STOP_BAND_MM).clamp(0.0, 1.0)
}

/// Steady tensions the muscles converge to at the current pose.
pub fn target_tensions(state: &PlantState, v_cmd: &[f64; 4], params: &PlantParams) -> Result<[f64; 4]> {
    let c = contractions(state.phi, state.theta, params);
    let mut out = [0.0; 4];
    for ch in Channel::ALL {
        let i = ch as usize;
        out[i] = tension_with_strain(v_cmd[i], c[i], params.hasel.channel_free_strain(ch), &params.hasel)?;
    }
    Ok(out)
}

/// Tensions delivered to the tendons: the lagged muscle forces cut back by the
/// end stop at the current pose. The stop is geometric and acts without lag.
pub fn applied_tensions(state: &PlantState, params: &PlantParams) -> [f64; 4] {
    let c = contractions(state.phi, state.theta, params);
    std::array::from_fn(|i| state.force[i] * end_stop_factor(c[i], &params.hasel))
}

/// Generalised forces (N mm) on (phi, theta) from the tendon tensions.
pub fn tendon_torque(state: &PlantState, tensions: &[f64; 4], params: &PlantParams) -> Vector2<f64> {
    let j = tendon_jacobian(state.phi, state.theta, &params.geometry);
    let f = nalgebra::Vector4::from_column_slice(tensions);
    -(j.transpose() * f)
}

/// Generalised gravity forces (N mm) on (phi, theta).
pub fn gravity_torque(state: &PlantState, params: &RigidBodyParams) -> Vector2<f64> {
    let mgl = params.mass_kg * params.g * params.l_com_mm;
    let (sp, cp) = state.phi.sin_cos();
    let (st, ct) = state.theta.sin_cos();
    Vector2::new(-mgl * ct * sp, -mgl * cp * st)
}

/// Advances the plant by one integrator step with held drive voltages (kV).
pub fn step_dynamics(state: &PlantState, v_cmd: &[f64; 4], params: &PlantParams) -> Result<PlantState> {
    let body = &params.body;
    let dt = body.dt_plant_s;

    let target = target_tensions(state, v_cmd, params)?;
    let blend = 1.0 - (-dt / params.hasel.tau_force_s).exp();
    let force: [f64; 4] = std::array::from_fn(|i| state.force[i] + (target[i] - state.force[i]) * blend);

    let lagged = PlantState { force, ..*state };
    let torque = tendon_torque(state, &applied_tensions(&lagged, params), params) + gravity_torque(state, body)
        - body.damping * Vector2::new(state.phi_dot, state.theta_dot);

    // N mm / (kg mm^2) = 1e3 rad/s^2
    let inv_inertia = 1e3 / body.inertia();
    let (sp, cp) = state.phi.sin_cos();
    let phi_acc = torque.x * inv_inertia - sp * cp * state.theta_dot * state.theta_dot;
    let theta_acc =
        (torque.y * inv_inertia + 2.0 * sp * cp * state.phi_dot * state.theta_dot) / (cp * cp);

    let phi_dot = state.phi_dot + phi_acc * dt;
    let theta_dot = state.theta_dot + theta_acc * dt;
    let next = PlantState {
        phi: state.phi + phi_dot * dt,
        theta: state.theta + theta_dot * dt,
        phi_dot,
        theta_dot,
        force,
        time: state.time + dt,
    };

    let finite = [next.phi, next.theta, next.phi_dot, next.theta_dot]
        .iter()
        .chain(next.force.iter())
        .all(|v| v.is_finite());
    if !finite || next.phi.abs() >= 0.5 * PI || next.theta.abs() >= 0.5 * PI {
        return Err(Error::Divergence {
            step: (next.time / dt).round() as u64,
            time_s: next.time,
        });
    }
    Ok(next)
}

/// Residual of the static torque balance at the current pose and lagged
/// tensions (N mm); zero at a true equilibrium.
pub fn torque_balance_residual(state: &PlantState, params: &PlantParams) -> f64 {
    let r = tendon_torque(state, &applied_tensions(state, params), params) + gravity_torque(state, &params.body)
        - params.body.damping * Vector2::new(state.phi_dot, state.theta_dot);
    r.norm()
}

/// Single muscle lifting a hanging load on a test rig.
#[derive(Debug, Clone, Copy)]
pub struct HangingLoadRig {
    pub load_kg: f64,
    pub free_strain: f64,
    pub dt_s: f64,
    /// Damping ratio relative to the muscle's small-signal stiffness.
    pub damping_ratio: f64,
}

impl HangingLoadRig {
    pub fn new(load_kg: f64, free_strain: f64) -> Self {
        Self {
            load_kg,
            free_strain,
            dt_s: 1e-4,
            damping_ratio: 1.0,
        }
    }

    /// Applies a voltage step at `t = 0` and returns the strain after `duration_s`.
    /// The muscle cannot extend past its relaxed length.
    pub fn step_response(&self, v: f64, duration_s: f64, params: &HaselParams) -> Result<f64> {
        if !(self.load_kg > 0.0 && self.dt_s > 0.0 && duration_s > 0.0) {
            return Err(Error::domain("rig needs positive load, step and duration"));
        }
        let g = STANDARD_GRAVITY;
        let f_b = blocked_force(v, params)?;
        // N/mm around the operating point
        let stiffness = f_b / (params.rest_length_mm * self.free_strain);
        let omega = (1e3 * stiffness / self.load_kg).sqrt();
        let blend = 1.0 - (-self.dt_s / params.tau_force_s).exp();

        let (mut c, mut c_dot, mut force) = (0.0f64, 0.0f64, 0.0f64);
        let steps = (duration_s / self.dt_s).ceil() as usize;
        for _ in 0..steps {
            let target = tension_with_strain(v, c, self.free_strain, params)?;
            force += (target - force) * blend;
            let acc = 1e3 * (force - self.load_kg * g) / self.load_kg
                - 2.0 * self.damping_ratio * omega * c_dot;
            c_dot += acc * self.dt_s;
            c += c_dot * self.dt_s;
            if c < 0.0 {
                c = 0.0;
                c_dot = c_dot.max(0.0);
            }
        }
        Ok(c / params.rest_length_mm)
    }
}
