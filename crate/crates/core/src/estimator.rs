//! Pose estimation from sensing voltages by cubic polynomial least squares.
//!
//! The four RMS voltages are z-scored, expanded into all 35 monomials of total
//! degree at most three, and regressed onto joint angles (roll, pitch). Task
//! positions follow by composing the predicted angles with the kinematics.

use std::sync::OnceLock;

use nalgebra::{DMatrix, Vector3};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{end_effector_position, rotation_from_euler, Channel};

pub const DEGREE: u32 = 3;
pub const N_INPUTS: usize = 4;
/// `C(4 + 3, 3)`
pub const N_FEATURES: usize = 35;
pub const MIN_SAMPLES: usize = 100;

/// Exponent vectors of the basis in graded-lexicographic order, constant first.
pub fn monomials() -> &'static [[u8; N_INPUTS]; N_FEATURES] {
    static TABLE: OnceLock<[[u8; N_INPUTS]; N_FEATURES]> = OnceLock::new();
    TABLE.get_or_init(|| {
        fn push(start: usize, remaining: usize, e: &mut [u8; N_INPUTS], out: &mut Vec<[u8; N_INPUTS]>) {
            if remaining == 0 {
                out.push(*e);
                return;
            }
            for i in start..N_INPUTS {
                e[i] += 1;
                push(i, remaining - 1, e, out);
                e[i] -= 1;
            }
        }
        let mut out = Vec::with_capacity(N_FEATURES);
        for degree in 0..=DEGREE as usize {
            push(0, degree, &mut [0; N_INPUTS], &mut out);
        }
        out.try_into().expect("35 monomials of degree <= 3 in 4 variables")
    })
}

/// All monomials of the (already standardised) inputs.
pub fn expand_features(v: &[f64; N_INPUTS]) -> [f64; N_FEATURES] {
    let mut powers = [[1.0; DEGREE as usize + 1]; N_INPUTS];
    for (i, p) in powers.iter_mut().enumerate() {
        for d in 1..=DEGREE as usize {
            p[d] = p[d - 1] * v[i];
        }
    }
    let mut out = [0.0; N_FEATURES];
    for (f, e) in out.iter_mut().zip(monomials()) {
        *f = (0..N_INPUTS).map(|i| powers[i][e[i] as usize]).product();
    }
    out
}

fn monomial_name(e: &[u8; N_INPUTS]) -> String {
    let parts: Vec<String> = Channel::ALL
        .iter()
        .zip(e)
        .filter(|(_, p)| **p > 0)
        .map(|(c, p)| if *p == 1 { format!("v_{}", c.label()) } else { format!("v_{}^{p}", c.label()) })
        .collect();
    if parts.is_empty() {
        "1".into()
    } else {
        parts.join("*")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    /// Seeded uniform shuffle.
    Shuffle,
    /// The last fraction of samples in time order is held out.
    Blocked,
}

impl std::str::FromStr for SplitMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shuffle" => Ok(SplitMode::Shuffle),
            "blocked" => Ok(SplitMode::Blocked),
            other => Err(Error::domain(format!("unknown split mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub test_frac: f64,
    pub seed: u64,
    pub split: SplitMode,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            test_frac: 0.2,
            seed: 0,
            split: SplitMode::Shuffle,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMetrics {
    /// Held-out coefficient of determination per output (roll, pitch).
    pub r2: [f64; 2],
    /// Held-out RMSE per output (rad).
    pub rmse: [f64; 2],
    /// Output was constant on the held-out set; its R^2 is reported as 0.
    #[serde(default)]
    pub constant_target: [bool; 2],
    #[serde(default)]
    pub n_train: usize,
    #[serde(default)]
    pub n_test: usize,
}

/// Provenance recorded alongside a trained model.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub input_signal: String,
    pub episodes: Vec<String>,
    pub split: String,
    pub test_frac: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyModel {
    pub degree: u32,
    pub input_mean: [f64; N_INPUTS],
    pub input_std: [f64; N_INPUTS],
    /// One `[roll, pitch]` row per monomial.
    pub coeffs: Vec<[f64; 2]>,
    pub metrics: FitMetrics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<ModelMetadata>,
}

/// Indices of the training and held-out samples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn split_indices(n: usize, opts: &FitOptions) -> Result<Split> {
    if !(opts.test_frac > 0.0 && opts.test_frac < 1.0) {
        return Err(Error::domain("test fraction must lie in (0, 1)"));
    }
    let n_test = ((n as f64) * opts.test_frac).round() as usize;
    let mut idx: Vec<usize> = (0..n).collect();
    match opts.split {
        SplitMode::Shuffle => {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            idx.shuffle(&mut rng);
            let test = idx[..n_test].to_vec();
            let train = idx[n_test..].to_vec();
            Ok(Split { train, test })
        }
        SplitMode::Blocked => {
            let test = idx.split_off(n - n_test);
            Ok(Split { train: idx, test })
        }
    }
}

/// Fits on a seeded train/test split of the samples.
pub fn fit(x: &[[f64; N_INPUTS]], y: &[[f64; 2]], opts: &FitOptions) -> Result<PolyModel> {
    check_samples(x, y)?;
    let split = split_indices(x.len(), opts)?;
    fit_partition(x, y, &split)
}

fn check_samples(x: &[[f64; N_INPUTS]], y: &[[f64; 2]]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::domain(format!(
            "{} input rows but {} target rows",
            x.len(),
            y.len()
        )));
    }
    if x.len() < MIN_SAMPLES {
        return Err(Error::domain(format!(
            "need at least {MIN_SAMPLES} samples, got {}",
            x.len()
        )));
    }
    if x.iter().flatten().chain(y.iter().flatten()).any(|v| !v.is_finite()) {
        return Err(Error::domain("samples must be finite"));
    }
    Ok(())
}

/// Fits on an explicit partition of the samples.
pub fn fit_partition(x: &[[f64; N_INPUTS]], y: &[[f64; 2]], split: &Split) -> Result<PolyModel> {
    check_samples(x, y)?;
    if split.train.len() < N_FEATURES || split.test.is_empty() {
        return Err(Error::domain("split leaves too few training or test samples"));
    }
    if split.train.iter().chain(&split.test).any(|&i| i >= x.len()) {
        return Err(Error::domain("split index out of range"));
    }

    let n = split.train.len() as f64;
    let mut mean = [0.0; N_INPUTS];
    let mut std = [0.0; N_INPUTS];
    for i in 0..N_INPUTS {
        mean[i] = split.train.iter().map(|&k| x[k][i]).sum::<f64>() / n;
        let var = split.train.iter().map(|&k| (x[k][i] - mean[i]).powi(2)).sum::<f64>() / n;
        std[i] = var.sqrt();
        if !(std[i] > 1e-12 * mean[i].abs().max(1.0)) {
            return Err(Error::RankDeficient(format!(
                "input channel {} is constant over the training set",
                Channel::ALL[i].label()
            )));
        }
    }

    let standardize = |v: &[f64; N_INPUTS]| -> [f64; N_INPUTS] { std::array::from_fn(|i| (v[i] - mean[i]) / std[i]) };

    let rows = split.train.len();
    let mut a = DMatrix::<f64>::zeros(rows, N_FEATURES);
    let mut b = DMatrix::<f64>::zeros(rows, 2);
    for (r, &k) in split.train.iter().enumerate() {
        let f = expand_features(&standardize(&x[k]));
        for (c, v) in f.iter().enumerate() {
            a[(r, c)] = *v;
        }
        b[(r, 0)] = y[k][0];
        b[(r, 1)] = y[k][1];
    }

    let qr = a.qr();
    let rmat = qr.r();
    let max_diag = (0..N_FEATURES).map(|j| rmat[(j, j)].abs()).fold(0.0, f64::max);
    for j in 0..N_FEATURES {
        if !(rmat[(j, j)].abs() > 1e-10 * max_diag) {
            return Err(Error::RankDeficient(format!(
                "monomial {} is linearly dependent on lower-order terms",
                monomial_name(&monomials()[j])
            )));
        }
    }
    let qtb = qr.q().transpose() * b;
    let sol = rmat
        .solve_upper_triangular(&qtb)
        .ok_or_else(|| Error::Fit("triangular solve failed".into()))?;
    let coeffs: Vec<[f64; 2]> = (0..N_FEATURES).map(|j| [sol[(j, 0)], sol[(j, 1)]]).collect();

    let mut model = PolyModel {
        degree: DEGREE,
        input_mean: mean,
        input_std: std,
        coeffs,
        metrics: FitMetrics {
            r2: [0.0; 2],
            rmse: [0.0; 2],
            constant_target: [false; 2],
            n_train: split.train.len(),
            n_test: split.test.len(),
        },
        metadata: None,
    };
    model.metrics = model.evaluate(x, y, &split.test);
    model.metrics.n_train = split.train.len();
    Ok(model)
}

impl PolyModel {
    pub fn standardize(&self, v: &[f64; N_INPUTS]) -> [f64; N_INPUTS] {
        std::array::from_fn(|i| (v[i] - self.input_mean[i]) / self.input_std[i])
    }

    /// Predicted (roll, pitch) in rad.
    pub fn predict_angles(&self, v: &[f64; N_INPUTS]) -> (f64, f64) {
        let f = expand_features(&self.standardize(v));
        let mut out = (0.0, 0.0);
        for (fi, c) in f.iter().zip(&self.coeffs) {
            out.0 += fi * c[0];
            out.1 += fi * c[1];
        }
        out
    }

    /// Predicted end-effector position on the sphere of radius `l_m`.
    pub fn estimate_position(&self, v: &[f64; N_INPUTS], l_m: f64) -> Result<Vector3<f64>> {
        let (phi, theta) = self.predict_angles(v);
        Ok(end_effector_position(&rotation_from_euler(phi, theta)?, l_m))
    }

    /// Held-out metrics over the given sample indices.
    pub fn evaluate(&self, x: &[[f64; N_INPUTS]], y: &[[f64; 2]], idx: &[usize]) -> FitMetrics {
        let n = idx.len() as f64;
        let mut r2 = [0.0; 2];
        let mut rmse = [0.0; 2];
        let mut constant = [false; 2];
        let preds: Vec<(f64, f64)> = idx.iter().map(|&k| self.predict_angles(&x[k])).collect();
        for o in 0..2 {
            let target = |k: usize| y[k][o];
            let mean = idx.iter().map(|&k| target(k)).sum::<f64>() / n;
            let ss_tot: f64 = idx.iter().map(|&k| (target(k) - mean).powi(2)).sum();
            let ss_res: f64 = idx
                .iter()
                .zip(&preds)
                .map(|(&k, p)| {
                    let pred = if o == 0 { p.0 } else { p.1 };
                    (target(k) - pred).powi(2)
                })
                .sum();
            rmse[o] = (ss_res / n).sqrt();
            if ss_tot <= f64::EPSILON * n * mean.abs().max(1.0).powi(2) {
                constant[o] = true;
                r2[o] = 0.0;
            } else {
                r2[o] = 1.0 - ss_res / ss_tot;
            }
        }
        FitMetrics {
            r2,
            rmse,
            constant_target: constant,
            n_train: 0,
            n_test: idx.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.degree != DEGREE {
            return Err(Error::Model(format!("unsupported degree {}", self.degree)));
        }
        if self.coeffs.len() != N_FEATURES {
            return Err(Error::Model(format!(
                "expected {N_FEATURES} coefficient rows, found {}",
                self.coeffs.len()
            )));
        }
        if self.input_std.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Model("input_std entries must be positive".into()));
        }
        let finite = self
            .input_mean
            .iter()
            .chain(self.coeffs.iter().flatten())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Model("non-finite model parameter".into()));
        }
        Ok(())
    }

    /// Parses and validates a model document.
    pub fn from_json(s: &str) -> Result<Self> {
        let model: PolyModel = serde_json::from_str(s).map_err(|e| Error::Model(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
