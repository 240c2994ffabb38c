//! Acceptance suite. Runs without the libtest harness so every criterion
//! reports a PASS/FAIL line even when captured output is hidden.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use antago_core::control::FeedbackSource;
use antago_core::geometry::{euler_from_rotation, rotation_from_euler, task_to_tendon, GeometryParams};
use antago_core::harness::{
    angle_range_deg, percent_increase, rmse_task, run_closed_loop, run_openloop, train_pipeline, EpisodeLog,
    SimConfig, Summary, TrainOutput,
};
use antago_core::plant::{
    calibrate_from_table, divider_gain, sense_voltage_rms, step_dynamics, HangingLoadRig, HaselParams, LoadStrain,
    PlantParams, PlantState, STANDARD_GRAVITY, STEP_RESPONSE_LOADS_KG, STEP_RESPONSE_TABLE,
};
use antago_core::signal::{waveform_rms, WaveformSettings};
use antago_core::trajectory::TrajectoryKind;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn timed(limit: Duration, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let mut out = f();
    let took = start.elapsed();
    out.detail = format!("{}; {:.2} s (limit {} s)", out.detail, took.as_secs_f64(), limit.as_secs());
    out.pass &= took < limit;
    out
}

fn kinematics() -> Outcome {
    let q_t = GeometryParams::default().q_t_mm;
    let diag = (q_t * q_t + q_t * q_t).sqrt();

    let center = task_to_tendon(0.0, 0.0, q_t).q.0;
    let center_ok = center == [q_t; 4];

    let corner = task_to_tendon(q_t, 0.0, q_t).q.0;
    let mirror = task_to_tendon(-q_t, 0.0, q_t).q.0;
    let hand = [0.0, 7.5, 5.3033, 5.3033];
    let corner_err = corner
        .iter()
        .zip([0.0, 2.0 * q_t, diag, diag])
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let mirror_err = mirror
        .iter()
        .zip([2.0 * q_t, 0.0, diag, diag])
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let rounded_ok = corner.iter().zip(hand).all(|(a, b)| (a - b).abs() < 5e-5);

    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let lim = 85f64.to_radians();
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let (phi, theta) = (rng.random_range(-lim..lim), rng.random_range(-lim..lim));
        let pose = rotation_from_euler(phi, theta).expect("inside the chart");
        let e = euler_from_rotation(pose.rotation());
        worst = worst.max((e.phi - phi).abs()).max((e.theta - theta).abs());
    }

    check(
        center_ok && corner_err <= 1e-9 && mirror_err <= 1e-9 && rounded_ok && worst <= 1e-12,
        format!("corner err {corner_err:.1e}, mirror err {mirror_err:.1e}, euler round trip {worst:.1e} rad"),
    )
}

fn sensing_divider() -> Outcome {
    let p = HaselParams::default();
    // 1 / sqrt(1 + (2 pi * 2 kHz * 2 MOhm * 100 pF)^2)
    let wrc = 2.0 * std::f64::consts::PI * 2.0e3 * 2.0e6 * 100.0e-12;
    let oracle = 1.0 / (1.0 + wrc * wrc).sqrt();
    let gain = divider_gain(100.0, &p);
    let gain_ok = (gain - oracle).abs() <= 1e-9 && format!("{gain:.4}") == "0.3697";

    let settings = WaveformSettings::default();
    let mut worst = 0.0f64;
    for k in 0..=8 {
        let c_pf = 100.0 + 50.0 * k as f64;
        let analytic = sense_voltage_rms(c_pf, &p);
        let sampled = waveform_rms(p.v_ac_rms, p.f_ac_khz * 1e3, p.r_sense_mohm * 1e6, c_pf * 1e-12, &settings)
            .expect("valid carrier");
        worst = worst.max((sampled - analytic).abs() / analytic);
    }
    check(
        gain_ok && worst <= 0.01,
        format!("gain at 100 pF {gain:.6}, worst waveform deviation {:.3}%", worst * 100.0),
    )
}

fn calibration() -> Outcome {
    let row = STEP_RESPONSE_TABLE[0];
    let points = [0, 1].map(|k| LoadStrain {
        load_kg: STEP_RESPONSE_LOADS_KG[k],
        strain: row[k].0,
    });
    let cal = calibrate_from_table(points, STANDARD_GRAVITY).expect("table is well posed");
    let p = HaselParams {
        blocked_force_n: cal.blocked_force_n,
        free_strain: cal.free_strain,
        ..HaselParams::default()
    };
    let mut strains = [0.0; 2];
    for (k, s) in strains.iter_mut().enumerate() {
        *s = HangingLoadRig::new(STEP_RESPONSE_LOADS_KG[k], cal.free_strain)
            .step_response(5.0, 2.0, &p)
            .expect("rig runs");
    }
    check(
        (strains[0] - 0.065).abs() <= 0.002 && (strains[1] - 0.0588).abs() <= 0.002,
        format!("14 g -> {:.5}, 34 g -> {:.5}", strains[0], strains[1]),
    )
}

fn openloop_range(max_cmd: &mut f64) -> Outcome {
    let cfg = SimConfig::default();
    let log = match run_openloop(&cfg) {
        Ok(l) => l,
        Err(e) => return check(false, format!("episode failed: {e}")),
    };
    *max_cmd = max_cmd.max(log.max_command());
    // The phi-labelled channels pull along the projected x axis, which swings theta.
    let (phi, theta) = angle_range_deg(&log, 0.0);
    check(
        theta >= 80.0 && log.records.last().map_or(0.0, |r| r.t_s) <= 5.0,
        format!("peak-to-peak {theta:.2} deg on the driven axis ({phi:.2} deg on the other)"),
    )
}

fn estimator(noise_free: &TrainOutput, noisy: &TrainOutput) -> Outcome {
    let a = noise_free.model.metrics.r2;
    let b = noisy.model.metrics.r2;
    check(
        a.iter().all(|r| *r >= 0.99) && b.iter().all(|r| *r >= 0.95),
        format!(
            "noise-free R2 [{:.5}, {:.5}], default noise R2 [{:.5}, {:.5}]",
            a[0], a[1], b[0], b[1]
        ),
    )
}

fn benchmark(bm: &[EpisodeLog]) -> Outcome {
    let mut pass = bm.len() == 2;
    let mut parts = Vec::new();
    for log in bm {
        let amp = log.trajectory.expect("closed-loop log").amplitude_mm;
        let r = rmse_task(log).unwrap_or(f64::INFINITY);
        pass &= r <= 0.1 * amp;
        parts.push(format!("{} {r:.3} mm (limit {:.1})", log.label, 0.1 * amp));
    }
    check(pass, parts.join(", "))
}

fn self_sensing(bm: &[EpisodeLog], ss: &[EpisodeLog]) -> Outcome {
    let mut pass = bm.len() == 2 && ss.len() == 2;
    let mut parts = Vec::new();
    for (b, s) in bm.iter().zip(ss) {
        let (rb, rs) = (rmse_task(b).unwrap_or(f64::INFINITY), rmse_task(s).unwrap_or(f64::INFINITY));
        pass &= rs <= 2.0 * rb;
        parts.push(format!("{} {:.3}x", s.label, rs / rb));
    }
    let lemni = format!("{:.1}", percent_increase(2.869, 4.245));
    let star = format!("{:.1}", percent_increase(2.798, 3.407));
    pass &= lemni == "48.0" && star == "21.8";
    parts.push(format!("reported increases {lemni}% / {star}%"));
    check(pass, parts.join(", "))
}

fn csv_bytes(log: &EpisodeLog) -> Vec<u8> {
    let mut buf = Vec::new();
    log.write_csv(&mut buf).expect("in-memory write");
    buf
}

fn returns_to_rest() -> (bool, String) {
    let params = PlantParams::default();
    let steps = (10.0 / params.body.dt_plant_s).round() as usize;
    let mut worst = 0.0f64;
    for start in [PlantState::with_angles(0.3, 0.0), PlantState::with_angles(0.0, 0.3)] {
        let mut s = start;
        for _ in 0..steps {
            s = match step_dynamics(&s, &[0.0; 4], &params) {
                Ok(n) => n,
                Err(_) => return (false, "integration failed".into()),
            };
        }
        worst = worst
            .max(s.phi.abs())
            .max(s.theta.abs())
            .max(s.phi_dot.abs())
            .max(s.theta_dot.abs());
    }
    (worst <= 1e-3, format!("largest |angle| or |rate| after 10 s {worst:.1e}"))
}

fn determinism_and_safety(cfg: &SimConfig, noisy: &TrainOutput, ss: &[EpisodeLog], max_cmd: f64) -> Outcome {
    let again = match train_pipeline(cfg) {
        Ok(t) => t,
        Err(e) => return check(false, format!("second training run failed: {e}")),
    };
    let model_same = noisy.model.to_json().ok() == again.model.to_json().ok();
    let bm_same = noisy.logs.iter().zip(&again.logs).all(|(a, b)| csv_bytes(a) == csv_bytes(b));

    let first = &ss[0];
    let run_cfg = cfg.for_run(first.trajectory.expect("closed-loop log").kind);
    let ss_same = match run_closed_loop(&run_cfg, FeedbackSource::SelfSensing, Some(&again.model)) {
        Ok(log) => {
            let s1 = Summary::for_episode(&run_cfg, first).and_then(|s| s.to_json()).ok();
            let s2 = Summary::for_episode(&run_cfg, &log).and_then(|s| s.to_json()).ok();
            csv_bytes(first) == csv_bytes(&log) && s1.is_some() && s1 == s2
        }
        Err(_) => false,
    };

    let (rest_ok, rest) = returns_to_rest();
    check(
        model_same && bm_same && ss_same && max_cmd <= 5.5 && rest_ok,
        format!(
            "model json identical {model_same}, benchmark csv identical {bm_same}, \
             self-sensing csv+json identical {ss_same}, max command {max_cmd:.3} kV, {rest}"
        ),
    )
}

fn main() -> ExitCode {
    let cfg = SimConfig::default();
    let mut quiet = cfg.clone();
    quiet.noise.sense_sigma_v = 0.0;
    quiet.noise.mocap_sigma_mm = 0.0;

    let mut results: Vec<(&str, Outcome)> = Vec::new();
    results.push(("1 kinematics", timed(Duration::from_secs(1), kinematics)));
    results.push(("2 sensing divider", timed(Duration::from_secs(5), sensing_divider)));
    results.push(("3 calibration", timed(Duration::from_secs(2), calibration)));

    let mut max_cmd = 0.0f64;
    results.push(("4 open-loop range", timed(Duration::from_secs(5), || openloop_range(&mut max_cmd))));

    let start = Instant::now();
    let (noise_free, noisy) = std::thread::scope(|s| {
        let a = s.spawn(|| train_pipeline(&quiet));
        let b = s.spawn(|| train_pipeline(&cfg));
        (a.join().expect("training thread"), b.join().expect("training thread"))
    });
    let train_time = start.elapsed();
    let (noise_free, noisy) = match (noise_free, noisy) {
        (Ok(a), Ok(b)) => (a, b),
        (a, b) => {
            let why = [a.err(), b.err()].into_iter().flatten().map(|e| e.to_string()).collect::<Vec<_>>();
            println!("FAIL  5 estimator: training failed: {}", why.join("; "));
            return ExitCode::FAILURE;
        }
    };
    let mut est = estimator(&noise_free, &noisy);
    est.detail = format!("{}; {:.2} s for both fits (limit 30 s)", est.detail, train_time.as_secs_f64());
    est.pass &= train_time < Duration::from_secs(30);
    results.push(("5 estimator", est));

    // The benchmark episodes used for training are the ones graded here.
    let bm = &noisy.logs;
    let bm_ok = bm.iter().map(|l| l.trajectory.map(|t| t.kind)).eq([
        Some(TrajectoryKind::Lemniscate),
        Some(TrajectoryKind::Star),
    ]);
    let mut b = benchmark(bm);
    b.pass &= bm_ok;
    results.push(("6 benchmark tracking", b));

    let start = Instant::now();
    let ss: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> = bm
            .iter()
            .map(|l| {
                let run_cfg = cfg.for_run(l.trajectory.expect("closed-loop log").kind);
                let model = &noisy.model;
                s.spawn(move || run_closed_loop(&run_cfg, FeedbackSource::SelfSensing, Some(model)))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("episode thread")).collect()
    });
    let ss_time = start.elapsed();
    let ss: Vec<EpisodeLog> = match ss.into_iter().collect() {
        Ok(v) => v,
        Err(e) => {
            println!("FAIL  7 self-sensing vs benchmark: episode failed: {e}");
            return ExitCode::FAILURE;
        }
    };
    let mut s = self_sensing(bm, &ss);
    s.detail = format!("{}; {:.2} s", s.detail, ss_time.as_secs_f64());
    results.push(("7 self-sensing vs benchmark", s));

    for log in bm.iter().chain(&ss).chain(&noise_free.logs) {
        max_cmd = max_cmd.max(log.max_command());
    }
    results.push(("8 determinism and safety", determinism_and_safety(&cfg, &noisy, &ss, max_cmd)));

    let mut failed = 0;
    for (name, out) in &results {
        println!("{}  {name}: {}", if out.pass { "PASS" } else { "FAIL" }, out.detail);
        failed += !out.pass as usize;
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
