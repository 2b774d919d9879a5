//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use risley::calibration::experiment::{run_calibration_experiment, ExperimentConfig};
use risley::calibration::handeye::hand_eye_solve;
use risley::density::{
    coverage_curve, empirical_density, rate_for_coverage, sweep_speed_grid, time_to_coverage, CoverageGrid,
    SweepConfig,
};
use risley::optics::{paraxial_pair_radius, PrismSpec};
use risley::pattern::{
    angular_envelope, generate_pattern, rpm_to_rad_s, ArraySpec, RotorConfig, Sample, SamplingConfig, Scanner,
    DEFAULT_CONTROL_TICK_S, DEFAULT_RATE_HZ,
};
use risley::optics::SteeringModel;
use risley::scene::{Primitive, Scene};
use risley::se3::{exp_se3, Pose, Twist};
use risley::tracking::{
    calibrate_gimbal_rates, detect_intruder, pearson, points_on_target_profile, run_tracking_episode,
    step_gimbal, tracking_command, DetectionRegion, GimbalState, ProfileConfig, RateCalibrationConfig,
    RateResponse, TrackingConfig, DEFAULT_DEADBAND,
};
use risley::Error;

type Outcome = Result<(bool, String), String>;
type Criterion = (&'static str, Duration, fn() -> Outcome);

fn pattern(scanner: &Scanner, duration: f64, seed: u64) -> Vec<Sample> {
    let sampling = SamplingConfig::with_duration(duration, seed).expect("valid sampling");
    generate_pattern(scanner, &sampling).expect("pattern").iter().copied().collect()
}

fn density_law() -> Outcome {
    let samples = pattern(&Scanner::reference(), 10.0, 0);
    let deflection = PrismSpec::reference().paraxial_deflection();
    let profile = empirical_density(&samples, deflection, 50).map_err(|e| e.to_string())?;
    let rms = profile.rms_deviation(2).map_err(|e| e.to_string())?;
    Ok((rms < 0.05, format!("relative RMS {:.3}% over 46 interior bins", 100.0 * rms)))
}

fn fov_rim() -> Outcome {
    let scanner = Scanner::reference();
    let samples = pattern(&scanner, 10.0, 0);
    let r = PrismSpec::reference().paraxial_deflection();
    let max = samples.iter().map(|s| s.dir.polar_angle()).fold(0.0, f64::max);
    let gap_deg = (max.to_degrees() - 18.36).abs();
    let (w1, w2) = (scanner.rotors()[0].speed, scanner.rotors()[1].speed);
    let formula = samples
        .iter()
        .map(|s| (paraxial_pair_radius(r, w1 * s.t, w2 * s.t) - s.dir.polar_angle()).abs())
        .fold(0.0, f64::max);
    Ok((
        gap_deg < 1e-6 && formula < 1e-9,
        format!(
            "max polar {:.9} deg (gap {gap_deg:.1e}), radial formula max gap {formula:.1e} over {} samples",
            max.to_degrees(),
            samples.len()
        ),
    ))
}

fn coverage_curve_shape() -> Outcome {
    let scanner = Scanner::reference();
    let grid = CoverageGrid::for_scanner(&scanner).map_err(|e| e.to_string())?;
    let (rate, _) = rate_for_coverage(&scanner, &grid, 0.3, 50.0, DEFAULT_CONTROL_TICK_S, 0).map_err(|e| e.to_string())?;
    let sampling = SamplingConfig::new(rate, 10.0, DEFAULT_CONTROL_TICK_S, 0).map_err(|e| e.to_string())?;
    let samples: Vec<Sample> = generate_pattern(&scanner, &sampling).map_err(|e| e.to_string())?.iter().copied().collect();
    let times: Vec<f64> = (1..=1000).map(|k| 0.01 * k as f64).collect();
    let curve = coverage_curve(&samples, &grid, &times);
    let at = |t: f64| curve[(t / 0.01).round() as usize - 1];
    let (c03, c08, c10) = (at(0.3), at(0.8), at(10.0));
    let monotone = curve.windows(2).all(|w| w[1] >= w[0]);
    Ok((
        (c03 - 50.0).abs() <= 2.0 && (c08 - 90.0).abs() <= 10.0 && monotone && c10 >= 99.0,
        format!("rate {rate:.0} Hz: {c03:.2}% at 0.3 s, {c08:.2}% at 0.8 s, {c10:.2}% at 10 s, monotone {monotone}"),
    ))
}

fn incommensurability() -> Outcome {
    let prism = PrismSpec::reference();
    let grid = CoverageGrid::for_scanner(&Scanner::reference()).map_err(|e| e.to_string())?;
    let mut detail = Vec::new();
    let mut ok = true;
    for (name, a, b) in [("1:1", 6000.0, -6000.0), ("2:1", 6000.0, -3000.0), ("3:2", 6000.0, -4000.0)] {
        for noise in [0.0, 0.01] {
            let s = Scanner::two_prism(
                prism,
                RotorConfig::from_rpm(a).with_noise(noise),
                RotorConfig::from_rpm(b).with_noise(noise),
            );
            let sampling = SamplingConfig::new(DEFAULT_RATE_HZ, 5.0, DEFAULT_CONTROL_TICK_S, 3).map_err(|e| e.to_string())?;
            let t = time_to_coverage(&s, &sampling, &grid, 0.9).map_err(|e| e.to_string())?;
            ok &= t.is_capped() == (noise == 0.0);
            detail.push(format!(
                "{name}{} {}",
                if noise > 0.0 { "+1%" } else { "" },
                if t.is_capped() { "capped".to_string() } else { format!("{:.2} s", t.seconds()) }
            ));
        }
    }
    let config = SweepConfig {
        prism,
        omega1: risley::density::linspace(1000.0, 10000.0, 20).into_iter().map(rpm_to_rad_s).collect(),
        omega2: risley::density::linspace(-1000.0, -10000.0, 20).into_iter().map(rpm_to_rad_s).collect(),
        noise_fraction: 0.01,
        threshold: 0.9,
        cap_s: 5.0,
        rate_hz: DEFAULT_RATE_HZ,
        control_tick_s: DEFAULT_CONTROL_TICK_S,
        seed: 0,
    };
    let frac = sweep_speed_grid(&config).map_err(|e| e.to_string())?.uncapped_fraction();
    ok &= frac >= 0.8;
    detail.push(format!("grid uncapped {:.1}%", 100.0 * frac));
    Ok((ok, detail.join(", ")))
}

fn triple_prism() -> Outcome {
    let pa = PrismSpec::with_deflection(1.51, 14.15f64.to_radians()).map_err(|e| e.to_string())?;
    let pb = PrismSpec::with_deflection(1.51, 12.55f64.to_radians()).map_err(|e| e.to_string())?;
    let scanner = Scanner::new(
        vec![pa, pa, pb],
        vec![RotorConfig::from_rpm(7294.0), RotorConfig::from_rpm(-7294.0), RotorConfig::from_rpm(-4664.0)],
        ArraySpec::single(),
        SteeringModel::Paraxial,
    )
    .map_err(|e| e.to_string())?;
    let samples = pattern(&scanner, 2.0, 0);
    let (lo, hi) = angular_envelope(&samples).ok_or("no samples")?;
    let (w, h) = ((hi.x - lo.x).to_degrees(), (hi.y - lo.y).to_degrees());
    Ok(((w - 81.7).abs() <= 2.0 && (h - 25.1).abs() <= 2.0, format!("envelope {w:.2} x {h:.2} deg")))
}

fn hand_eye_exactness() -> Outcome {
    let mut worst = (0.0f64, 0.0f64);
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut twist = |angle: f64, lin: f64| {
            let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                .normalize();
            let t = Vector3::new(rng.random_range(-lin..lin), rng.random_range(-lin..lin), rng.random_range(-lin..lin));
            exp_se3(&Twist::new(axis * rng.random_range(0.05..angle), t))
        };
        let x = twist(3.0, 1.0);
        let pairs: Vec<(Pose, Pose)> = (0..5)
            .map(|_| {
                let b = twist(1.0, 0.5);
                (x.conjugate(&b), b)
            })
            .collect();
        let est = hand_eye_solve(&pairs).map_err(|e| format!("seed {seed}: {e}"))?;
        let d = est.inverse() * x;
        worst = (worst.0.max(d.rotation_angle()), worst.1.max(d.translation().norm()));
    }
    Ok((
        worst.0 < 1e-6 && worst.1 < 1e-6,
        format!("worst over 100 seeds {:.1e} rad, {:.1e} m", worst.0, worst.1),
    ))
}

fn calibration_trend() -> Outcome {
    let config = ExperimentConfig::room_default();
    let result = run_calibration_experiment(&config).map_err(|e| e.to_string())?;
    let means: Vec<f64> = result.summary.iter().map(|s| s.mean).collect();
    let parts: Vec<String> = result
        .summary
        .iter()
        .map(|s| format!("{} s: {:.5} +/- {:.5}", s.accum_time_s, s.mean, s.std_error))
        .collect();
    Ok((
        means.windows(2).all(|w| w[1] < w[0]),
        format!("mean error over {} seeds: {}", config.seeds.len(), parts.join(", ")),
    ))
}

fn tracking_examples() -> Result<(), String> {
    let region = DetectionRegion::new([0.0; 3], [10.0; 3]).map_err(|e| e.to_string())?;
    let v = Vector3::new;
    let check = |ok: bool, what: &str| if ok { Ok(()) } else { Err(format!("example failed: {what}")) };
    check(detect_intruder(&[v(-1.0, 1.0, 1.0)], &region).is_none(), "empty region")?;
    check(
        detect_intruder(&[v(1.0, 2.0, 3.0), v(2.0, 1.0, 1.0), v(3.0, 3.0, 2.0)], &region) == Some(v(2.0, 2.0, 2.0)),
        "per-axis median",
    )?;
    let c = tracking_command(&v(5.0, 0.0, 0.0), 2.0, 2.0, DEFAULT_DEADBAND).map_err(|e| e.to_string())?;
    check(c.v_yaw == 0.0 && c.v_pitch == 0.0, "boresight")?;
    let c = tracking_command(&v(3.0, 3.0, 0.0), 2.0, 2.0, DEFAULT_DEADBAND).map_err(|e| e.to_string())?;
    check((c.e_yaw - PI / 4.0).abs() < 1e-15 && (c.v_yaw + PI / 2.0).abs() < 1e-15, "45 degrees")?;
    let one = 1f64.to_radians().tan();
    let c = tracking_command(&v(10.0, 10.0 * one, 10.0 * one), 2.0, 2.0, DEFAULT_DEADBAND).map_err(|e| e.to_string())?;
    check(c.v_yaw == 0.0 && c.v_pitch == 0.0, "inside the deadband")?;
    check(
        matches!(tracking_command(&v(-1.0, 0.0, 0.0), 2.0, 2.0, DEFAULT_DEADBAND), Err(Error::BehindSensor { .. })),
        "behind the sensor",
    )?;
    let g = GimbalState::new(1.0, RateResponse::default()).map_err(|e| e.to_string())?;
    check((step_gimbal(&g, 0.1, 0.0, 1.0).yaw - 0.1).abs() < 1e-15, "unit gimbal step")?;
    let mut rc = RateCalibrationConfig::new(0);
    let t = calibrate_gimbal_rates(&[0.0, 0.2], &rc).map_err(|e| e.to_string())?;
    check(t.rates()[0].abs() < 0.01 && (t.rates()[1] - 0.2).abs() < 0.01, "unit gain table")?;
    let truth = RateResponse::Polynomial {
        coefficients: vec![0.0, 0.8, 0.02],
    };
    rc.tracking.plant = truth.clone();
    let t = calibrate_gimbal_rates(&[-1.0, -0.5, -0.2, 0.2, 0.5, 1.0], &rc).map_err(|e| e.to_string())?;
    check(
        (0..=20).map(|i| 0.2 + 0.04 * i as f64).all(|c| {
            let within = |c: f64| (t.rate(c) - truth.rate(c)).abs() < 0.05 * truth.rate(c).abs();
            within(c) && within(-c)
        }),
        "nonlinear gain table",
    )
}

fn tracking() -> Outcome {
    tracking_examples()?;
    let region = DetectionRegion::new([8.0, -8.0, -1.0], [40.0, 8.0, 6.0]).map_err(|e| e.to_string())?;
    let mut config = TrackingConfig::new(region, 15.0);
    config.mount = Pose::from_translation(Vector3::new(0.0, 0.0, 1.5));
    config.gain_yaw = 8.0;
    config.gain_pitch = 8.0;
    let mut scene = Scene::default();
    scene
        .push(
            Primitive::Plane {
                normal: [0.0, 0.0, 1.0],
                offset: 0.0,
            },
            0.2,
        )
        .map_err(|e| e.to_string())?;
    let path = |t: f64| Vector3::new(20.0, -4.0 + 0.4 * t, 2.5);
    let ep = run_tracking_episode(&path, &scene, &config).map_err(|e| e.to_string())?;
    let settle = ep.log.convergence_frame(DEFAULT_DEADBAND).ok_or("never converged")?;
    let within = ep.log.fraction_within(DEFAULT_DEADBAND, settle);
    let settle_s = settle as f64 * ep.log.frame_period;

    let profile = points_on_target_profile(&ProfileConfig::new(0)).map_err(|e| e.to_string())?;
    let counts: Vec<f64> = profile.iter().map(|p| p.count as f64).collect();
    let expected: Vec<f64> = profile.iter().map(|p| p.expected).collect();
    let r = pearson(&counts, &expected);
    Ok((
        settle_s <= 1.0 && within >= 0.9 && r > 0.8,
        format!(
            "examples ok; crossing converged in {settle_s:.1} s, {:.1}% of later frames within 2 deg; profile Pearson {r:.3} over {} frames",
            100.0 * within,
            profile.len()
        ),
    ))
}

/// Configs small enough to run every subcommand twice.
const DETERMINISM_CASES: &[(&str, &str)] = &[
    ("pattern", r#"{"scanner": {"rotors": [{"rpm": 7294, "noise_fraction": 0.01}, {"rpm": -4664, "noise_fraction": 0.01}]}}"#),
    ("density", r#"{"sampling": {"duration_s": 1.0}}"#),
    (
        "coverage",
        r#"{"sampling": {"duration_s": 1.0}, "rate_target": {"at_s": 0.3, "coverage_pct": 50},
            "scanner": {"rotors": [{"rpm": 7294, "noise_fraction": 0.01}, {"rpm": -4664, "noise_fraction": 0.01}]}}"#,
    ),
    ("sweep", r#"{"rpm1": {"from": 2000, "to": 8000, "steps": 4}, "rpm2": {"from": -2000, "to": -8000, "steps": 4}, "cap_s": 1.0}"#),
    ("scan", r#"{"sampling": {"duration_s": 0.3}, "csv": true}"#),
    ("calibrate", r#"{"seeds": 3, "accumulation_times_s": [0.2, 0.5], "dwell_s": 1.2, "reference_duration_s": 1.0}"#),
    ("track", r#"{"duration_s": 3.0, "calibrate_commands": [-0.5, 0.0, 0.5], "profile": {}}"#),
    ("selftest", r#"{"trials": 20}"#),
];

fn run_cli(dir: &Path, command: &str, config: &Path, threads: usize, out: &Path) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_risley"))
        .current_dir(dir)
        .args([command, "--seed", "11", "--threads", &threads.to_string()])
        .arg("--config")
        .arg(config)
        .arg("--out-dir")
        .arg(out)
        .stdout(std::process::Stdio::null())
        .status()
        .map_err(|e| e.to_string())?;
    if status.success() {
        Ok(())
    } else {
        Err(format!("{command} exited with {status}"))
    }
}

fn dir_contents(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .map_err(|e| e.to_string())?
        .map(|e| {
            let e = e.map_err(|e| e.to_string())?;
            let bytes = fs::read(e.path()).map_err(|e| e.to_string())?;
            Ok((e.file_name().to_string_lossy().into_owned(), bytes))
        })
        .collect::<Result<_, String>>()?;
    files.sort();
    Ok(files)
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut mismatched = Vec::new();
    let mut files = 0;
    for (command, json) in DETERMINISM_CASES {
        let config = tmp.path().join(format!("{command}.json"));
        fs::write(&config, json).map_err(|e| e.to_string())?;
        let runs: Vec<_> = [(1, "a"), (1, "b"), (3, "c")]
            .iter()
            .map(|(threads, tag)| {
                let out = tmp.path().join(format!("{command}-{tag}"));
                run_cli(tmp.path(), command, &config, *threads, &out)?;
                dir_contents(&out)
            })
            .collect::<Result<_, String>>()?;
        files += runs[0].len();
        if runs[0] != runs[1] || runs[0] != runs[2] {
            mismatched.push(*command);
        }
    }
    Ok((
        mismatched.is_empty(),
        if mismatched.is_empty() {
            format!("8 subcommands, {files} output files identical across 3 runs (1, 1 and 3 threads)")
        } else {
            format!("outputs differ for {}", mismatched.join(", "))
        },
    ))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("density law", Duration::from_secs(30), density_law),
        ("FoV rim and radial formula", Duration::MAX, fov_rim),
        ("coverage curve", Duration::from_secs(60), coverage_curve_shape),
        ("incommensurability", Duration::from_secs(600), incommensurability),
        ("triple-prism FoV", Duration::MAX, triple_prism),
        ("hand-eye exactness", Duration::MAX, hand_eye_exactness),
        ("calibration trend", Duration::from_secs(900), calibration_trend),
        ("detection and tracking", Duration::from_secs(120), tracking),
        ("determinism", Duration::MAX, determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, limit, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !filter.is_empty() && !filter.iter().any(|f| *f == n.to_string() || name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let timing = if *limit == Duration::MAX {
            format!("{:.1} s", elapsed.as_secs_f64())
        } else {
            format!("{:.1} s of {} s allowed", elapsed.as_secs_f64(), limit.as_secs())
        };
        let (pass, detail) = match outcome {
            Ok((ok, detail)) => (ok && elapsed < *limit, detail),
            Err(e) => (false, format!("error: {e}")),
        };
        failed += !pass as usize;
        println!("{} {n} {name}: {detail} [{timing}]", if pass { "PASS" } else { "FAIL" });
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
