//! Subcommand bodies. Angular CSV columns are degrees.

use serde_json::json;

use super::config::{CalibrateJson, CoverageJson, DensityJson, PatternJson, ScanJson, SweepJson, TrackJson};
use super::{CliError, CliResult, Context};
use crate::calibration::experiment::run_calibration_experiment;
use crate::cloud::{write_csv, write_ply};
use crate::density::{
    coverage_curve, empirical_density, rate_for_coverage, sweep_speed_grid, CoverageGrid, CoverageTime, SweepConfig,
};
use crate::pattern::{
    angular_envelope, check_commensurable, generate_pattern, rpm_to_rad_s, Sample,
    DEFAULT_MAX_DENOMINATOR,
};
use crate::scene::{scan_scene, Point, ScanConfig};
use crate::tracking::{
    calibrate_gimbal_rates, pearson, points_on_target_profile, run_tracking_episode, trajectory_rms,
    write_trajectory_csv, ProfileConfig, RateCalibrationConfig,
};

/// Relative tolerance for calling a rotor speed ratio rational.
const RATIO_TOLERANCE: f64 = 1e-9;

fn collect(scanner: &crate::pattern::Scanner, sampling: &crate::pattern::SamplingConfig) -> CliResult<Vec<Sample>> {
    Ok(generate_pattern(scanner, sampling)?.iter().copied().collect())
}

pub(crate) fn pattern(ctx: &Context, cfg: &PatternJson) -> CliResult<()> {
    let scanner = cfg.scanner.build()?;
    let samples = collect(&scanner, &cfg.sampling.build(ctx.seed)?)?;
    ctx.out.write("pattern.csv", |w| {
        writeln!(w, "t,channel,dir_x,dir_y,dir_z")?;
        for s in &samples {
            let d = s.dir.as_vector();
            writeln!(w, "{},{},{},{},{}", s.t, s.channel, d.x, d.y, d.z)?;
        }
        Ok(())
    })?;
    if cfg.projection {
        ctx.out.write("projection.csv", |w| {
            writeln!(w, "azimuth_deg,polar_deg")?;
            for s in &samples {
                writeln!(w, "{},{}", s.dir.azimuth().to_degrees(), s.dir.polar_angle().to_degrees())?;
            }
            Ok(())
        })?;
    }
    let max_polar = samples.iter().map(|s| s.dir.polar_angle()).fold(0.0, f64::max);
    let envelope = angular_envelope(&samples).map(|(lo, hi)| {
        json!({ "width_deg": (hi.x - lo.x).to_degrees(), "height_deg": (hi.y - lo.y).to_degrees() })
    });
    let rotors = scanner.rotors();
    let ratio = (rotors.len() == 2)
        .then(|| check_commensurable(rotors[0].speed, rotors[1].speed, RATIO_TOLERANCE, DEFAULT_MAX_DENOMINATOR))
        .flatten()
        .map(|c| json!({ "numerator": c.numerator, "denominator": c.denominator, "period_s": c.period }));
    ctx.out.json(
        "summary.json",
        &json!({
            "samples": samples.len(),
            "paraxial_half_fov_deg": scanner.paraxial_half_fov().to_degrees(),
            "max_polar_deg": max_polar.to_degrees(),
            "envelope": envelope,
            "commensurable": ratio,
        }),
    )
}

pub(crate) fn density(ctx: &Context, cfg: &DensityJson) -> CliResult<()> {
    let scanner = cfg.scanner.build()?;
    if scanner.prisms().len() != 2 {
        return Err(CliError::config("the density law applies to two-prism scanners"));
    }
    let samples = collect(&scanner, &cfg.sampling.build(ctx.seed)?)?;
    let deflection = 0.5 * scanner.paraxial_half_fov();
    let profile = empirical_density(&samples, deflection, cfg.bins)?;
    let rms = profile.rms_deviation(cfg.exclude_bins)?;
    let analytic = profile.analytic();
    let total = profile.total() as f64;
    ctx.out.write("density.csv", |w| {
        writeln!(w, "r_deg,count,empirical,analytic")?;
        #[allow(clippy::needless_range_loop)]
        for i in 0..profile.bins() {
            let r = 0.5 * (profile.edges[i] + profile.edges[i + 1]) * profile.rim;
            writeln!(
                w,
                "{},{},{},{}",
                r.to_degrees(),
                profile.counts[i],
                profile.density[i] / total,
                analytic[i]
            )?;
        }
        Ok(())
    })?;
    ctx.out.json(
        "summary.json",
        &json!({ "samples": samples.len(), "rim_deg": profile.rim.to_degrees(), "rms_deviation": rms }),
    )
}

pub(crate) fn coverage(ctx: &Context, cfg: &CoverageJson) -> CliResult<()> {
    let scanner = cfg.scanner.build()?;
    let grid = CoverageGrid::new(scanner.paraxial_half_fov(), cfg.resolution)?;
    let mut sampling = cfg.sampling;
    let mut achieved = None;
    if let Some(t) = cfg.rate_target {
        let (rate, pct) = rate_for_coverage(&scanner, &grid, t.at_s, t.coverage_pct, sampling.control_tick_s, ctx.seed)?;
        sampling.rate_hz = rate;
        achieved = Some(pct);
    }
    if !(cfg.step_s > 0.0) {
        return Err(CliError::config("coverage step must be positive"));
    }
    let samples = collect(&scanner, &sampling.build(ctx.seed)?)?;
    let steps = (sampling.duration_s / cfg.step_s).round() as usize;
    let times: Vec<f64> = (1..=steps).map(|k| k as f64 * cfg.step_s).collect();
    let curve = coverage_curve(&samples, &grid, &times);
    ctx.out.write("coverage.csv", |w| {
        writeln!(w, "t,coverage_pct")?;
        for (t, c) in times.iter().zip(&curve) {
            writeln!(w, "{t},{c}")?;
        }
        Ok(())
    })?;
    let reached = times.iter().zip(&curve).find(|(_, &c)| c >= cfg.threshold_pct).map(|(t, _)| *t);
    ctx.out.json(
        "summary.json",
        &json!({
            "rate_hz": sampling.rate_hz,
            "rate_target_coverage_pct": achieved,
            "effective_voxels": grid.effective_voxel_count(),
            "final_coverage_pct": curve.last(),
            "threshold_pct": cfg.threshold_pct,
            "time_to_threshold_s": reached,
        }),
    )
}

pub(crate) fn sweep(ctx: &Context, cfg: &SweepJson) -> CliResult<()> {
    let (rpm1, rpm2) = (cfg.rpm1.values()?, cfg.rpm2.values()?);
    let omega1: Vec<f64> = rpm1.iter().copied().map(rpm_to_rad_s).collect();
    let omega2: Vec<f64> = rpm2.iter().copied().map(rpm_to_rad_s).collect();
    let config = SweepConfig {
        prism: cfg.prism.build()?,
        omega1,
        omega2,
        noise_fraction: cfg.noise_fraction,
        threshold: cfg.threshold_pct / 100.0,
        cap_s: cfg.cap_s,
        rate_hz: cfg.rate_hz,
        control_tick_s: cfg.control_tick_s,
        seed: ctx.seed,
    };
    let result = sweep_speed_grid(&config)?;
    ctx.out.write("sweep.csv", |w| {
        write!(w, "rpm1\\rpm2")?;
        for r in &rpm2 {
            write!(w, ",{r}")?;
        }
        writeln!(w)?;
        for (r, row) in rpm1.iter().zip(&result.times) {
            write!(w, "{r}")?;
            for c in row {
                match c {
                    CoverageTime::Reached(t) => write!(w, ",{t}")?,
                    CoverageTime::Capped(t) => write!(w, ",>{t}")?,
                }
            }
            writeln!(w)?;
        }
        Ok(())
    })?;
    ctx.out.json(
        "summary.json",
        &json!({ "cells": result.omega1.len() * result.omega2.len(), "uncapped_fraction": result.uncapped_fraction() }),
    )
}

pub(crate) fn scan(ctx: &Context, cfg: &ScanJson) -> CliResult<()> {
    let scanner = cfg.scanner.build()?;
    let samples = collect(&scanner, &cfg.sampling.build(ctx.seed)?)?;
    let scene = cfg.scene.build(&ctx.base)?;
    let config = ScanConfig {
        range_noise_std: cfg.range_noise_m,
        frame_len: cfg.frame_len_s,
        max_range: cfg.max_range_m,
        seed: ctx.seed,
    };
    let frames = scan_scene(&samples, &scene, &cfg.pose, &config)?;
    let points: Vec<Point> = frames.iter().flat_map(|f| f.points.iter().copied()).collect();
    ctx.out.write("cloud.ply", |w| write_ply(w, &points))?;
    if cfg.csv {
        ctx.out.write("cloud.csv", |w| write_csv(w, &points))?;
    }
    ctx.out.write("frames.csv", |w| {
        writeln!(w, "frame,t,points")?;
        for (k, f) in frames.iter().enumerate() {
            writeln!(w, "{k},{},{}", f.t, f.points.len())?;
        }
        Ok(())
    })?;
    ctx.out.json(
        "summary.json",
        &json!({ "samples": samples.len(), "points": points.len(), "frames": frames.len() }),
    )
}

pub(crate) fn calibrate(ctx: &Context, cfg: &CalibrateJson) -> CliResult<()> {
    let config = cfg.build(ctx.seed, &ctx.base)?;
    let result = run_calibration_experiment(&config)?;
    ctx.out.write("calibration.csv", |w| {
        writeln!(w, "accum_time_s,seed,err")?;
        for r in &result.rows {
            writeln!(w, "{},{},{}", r.accum_time_s, r.seed, r.err)?;
        }
        Ok(())
    })?;
    ctx.out.write("calibration_detail.csv", |w| {
        writeln!(w, "accum_time_s,seed,err,err_truth,min_coverage_pct,capped_registrations")?;
        for r in &result.rows {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.accum_time_s, r.seed, r.err, r.err_truth, r.min_coverage_pct, r.capped_registrations
            )?;
        }
        Ok(())
    })?;
    let means: Vec<f64> = result.summary.iter().map(|s| s.mean).collect();
    ctx.out.json(
        "summary.json",
        &json!({
            "times": result.summary,
            "reference_err_truth": result.reference_err_truth,
            "strictly_decreasing": means.windows(2).all(|w| w[1] < w[0]),
        }),
    )
}

pub(crate) fn track(ctx: &Context, cfg: &TrackJson) -> CliResult<()> {
    let path = cfg.path()?;
    let (mut config, scene) = cfg.build(ctx.seed, &ctx.base)?;
    if let Some(commands) = &cfg.calibrate_commands {
        let mut rc = RateCalibrationConfig::new(ctx.seed);
        rc.tracking.scanner = config.scanner.clone();
        rc.tracking.rate_hz = config.rate_hz;
        rc.tracking.plant = config.plant.clone();
        rc.tracking.max_speed = config.max_speed;
        rc.tracking.range_noise_std = config.range_noise_std;
        let table = calibrate_gimbal_rates(commands, &rc)?;
        ctx.out.json("gain_table.json", &table)?;
        config.calibration = table;
        config.validate()?;
    }
    let episode = run_tracking_episode(&path, &scene, &config)?;
    ctx.out.write("tracking_log.csv", |w| episode.log.write_csv(w))?;
    ctx.out.write("trajectory.csv", |w| write_trajectory_csv(w, &episode.recovered))?;
    let log = &episode.log;
    let settle = log.convergence_frame(config.deadband);
    let mut summary = json!({
        "frames": log.rows.len(),
        "first_detection_frame": log.first_detection(),
        "convergence_frame": settle,
        "fraction_within_deadband": settle.map(|k| log.fraction_within(config.deadband, k)),
        "trajectory_rms_m": (!episode.recovered.is_empty()).then(|| trajectory_rms(&episode.recovered, &path)),
    });
    if let Some(p) = cfg.profile {
        let mut pc = ProfileConfig::new(ctx.seed);
        pc.tracking = config.clone();
        pc.range = p.range_m;
        pc.speed = p.speed_m_s;
        pc.margin = p.margin_deg.to_radians();
        if !(pc.range > 0.0 && pc.speed > 0.0 && pc.margin >= 0.0) {
            return Err(CliError::config("profile range and speed must be positive, margin non-negative"));
        }
        let frames = points_on_target_profile(&pc)?;
        ctx.out.write("profile.csv", |w| {
            writeln!(w, "t,azimuth_deg,count,expected")?;
            for f in &frames {
                writeln!(w, "{},{},{},{}", f.t, f.azimuth.to_degrees(), f.count, f.expected)?;
            }
            Ok(())
        })?;
        let counts: Vec<f64> = frames.iter().map(|f| f.count as f64).collect();
        let expected: Vec<f64> = frames.iter().map(|f| f.expected).collect();
        summary["profile_pearson"] = json!(pearson(&counts, &expected));
    }
    ctx.out.json("summary.json", &summary)
}
