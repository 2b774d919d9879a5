//! Calibration error versus accumulation time, end to end: scan each stop,
//! register consecutive stops, integrate the IMU, solve hand-eye, score.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::handeye::{calib_error, hand_eye_solve};
use super::imu::{integrate_imu, simulate_imu, ImuModel, PoseSequence};
use super::registration::{register_to_target, IcpConfig, Registration, Target};
use crate::cloud::BeamAccumulator;
use crate::density::{CoverageGrid, CoverageTracker};
use crate::error::{Error, Result};
use crate::pattern::{RotorConfig, SamplingConfig, Scanner, DEFAULT_CONTROL_TICK_S, DEFAULT_RATE_HZ};
use crate::rng::{derive_seed, domain, stream_rng};
use crate::scene::{raycast, Scene, DEFAULT_MAX_RANGE, DEFAULT_RANGE_NOISE};
use crate::se3::{exp_se3, Pose, Twist, UnitVec3};

use rand_distr::{Distribution, Normal};

/// Everything needed to run the experiment.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub scene: Scene,
    pub sequence: PoseSequence,
    pub imu: ImuModel,
    pub scanner: Scanner,
    pub rate_hz: f64,
    pub control_tick_s: f64,
    pub accumulation_times: Vec<f64>,
    pub seeds: Vec<u64>,
    pub range_noise_std: f64,
    pub max_range: f64,
    /// Angular cell of the per-beam accumulation, radians.
    pub beam_cell: f64,
    /// Accumulation of the scans that define the reference motions, seconds.
    pub reference_duration: f64,
    pub reference_seed: u64,
    pub icp: IcpConfig,
}

/// Lidar looking along world +x with z up, 1.2 m above the floor.
pub fn room_lidar_home() -> Pose {
    Pose::new(
        Matrix3::new(0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0),
        Vector3::new(0.0, 0.0, 1.2),
    )
    .expect("proper rotation")
}

/// IMU (x forward, y left, z up) to lidar optical frame (z forward), with a
/// small mounting error and lever arm.
pub fn default_extrinsic() -> Pose {
    let axes = Pose::new(
        Matrix3::new(0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0),
        Vector3::zeros(),
    )
    .expect("proper rotation");
    exp_se3(&Twist::new(Vector3::new(0.02, -0.03, 0.015), Vector3::new(0.05, -0.08, 0.12))) * axes
}

impl ExperimentConfig {
    /// Room scene, six stops with 10 s dwell, 2 cm range noise, default IMU.
    pub fn room_default() -> Self {
        let x = default_extrinsic();
        let imu_home = room_lidar_home() * x;
        ExperimentConfig {
            scene: Scene::room(),
            sequence: PoseSequence::six_pose(imu_home, x, 10.0),
            imu: ImuModel::default(),
            scanner: Scanner::reference(),
            rate_hz: DEFAULT_RATE_HZ,
            control_tick_s: DEFAULT_CONTROL_TICK_S,
            accumulation_times: vec![0.2, 1.0, 10.0],
            seeds: (0..20).collect(),
            range_noise_std: DEFAULT_RANGE_NOISE,
            max_range: DEFAULT_MAX_RANGE,
            beam_cell: 0.2f64.to_radians(),
            reference_duration: 200.0,
            reference_seed: 1_000_003,
            icp: IcpConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sequence.validate()?;
        self.imu.validate()?;
        self.scene.validate()?;
        if self.sequence.stops.len() < 3 {
            return Err(Error::config("need at least 3 stops for two motion pairs"));
        }
        if self.accumulation_times.is_empty() || self.seeds.is_empty() {
            return Err(Error::config("need at least one accumulation time and one seed"));
        }
        let longest = self.accumulation_times.iter().cloned().fold(0.0, f64::max);
        if self.accumulation_times.iter().any(|&t| !(t > 0.0)) {
            return Err(Error::config("accumulation times must be positive"));
        }
        if let Some(s) = self.sequence.stops.iter().find(|s| s.dwell < longest) {
            return Err(Error::config(format!(
                "dwell {} s is shorter than the longest accumulation time {longest} s",
                s.dwell
            )));
        }
        if !(self.beam_cell > 0.0) || !(self.reference_duration > 0.0) {
            return Err(Error::config("beam cell and reference duration must be positive"));
        }
        if !(self.range_noise_std >= 0.0) {
            return Err(Error::config("range noise must be non-negative"));
        }
        SamplingConfig::new(self.rate_hz, longest, self.control_tick_s, 0)?;
        Ok(())
    }
}

/// Accumulated scan of one stop at each snapshot time.
#[derive(Clone, Debug)]
pub struct StopScan {
    pub clouds: Vec<Vec<Vector3<f64>>>,
    /// Angular coverage of the pattern at each snapshot, percent.
    pub coverage: Vec<f64>,
}

/// Scans the scene from a static lidar pose and snapshots the per-beam
/// centroid cloud at each ascending `times` entry (samples with `t < time`).
/// `beam_cell` is the angular cell size in radians.
#[allow(clippy::too_many_arguments)]
pub fn scan_stop(
    scanner: &Scanner,
    sampling: &SamplingConfig,
    scene: &Scene,
    lidar_pose: &Pose,
    range_noise_std: f64,
    max_range: f64,
    beam_cell: f64,
    times: &[f64],
    noise_seed: u64,
) -> Result<StopScan> {
    let grid = CoverageGrid::for_scanner(scanner)?;
    let mut tracker = CoverageTracker::new(&grid);
    let mut acc = BeamAccumulator::new(beam_cell);
    let mut rng = stream_rng(noise_seed, domain::RANGE_NOISE, 0);
    let normal = Normal::new(0.0, range_noise_std.max(0.0)).map_err(|e| Error::config(e.to_string()))?;
    let mut out = StopScan {
        clouds: Vec::with_capacity(times.len()),
        coverage: Vec::with_capacity(times.len()),
    };
    let mut next = 0;
    let origin = lidar_pose.translation();
    for s in scanner.samples(sampling) {
        let s = s?;
        while next < times.len() && s.t >= times[next] {
            out.clouds.push(acc.centroids());
            out.coverage.push(tracker.percent());
            next += 1;
        }
        tracker.add(&s.dir);
        let world_dir = UnitVec3::from_vector(lidar_pose.rotation() * s.dir.as_vector()).expect("unit input");
        let noise = if range_noise_std > 0.0 { normal.sample(&mut rng) } else { 0.0 };
        if let Some(hit) = raycast(origin, &world_dir, scene, max_range) {
            let range = (hit.range + noise).min(max_range);
            if range > 0.0 {
                acc.insert(&(s.dir.as_vector() * range));
            }
        }
    }
    while next < times.len() {
        out.clouds.push(acc.centroids());
        out.coverage.push(tracker.percent());
        next += 1;
    }
    Ok(out)
}

/// Rotor phases continue through the sequence: the pattern of stop `k`
/// starts at the noise-free phase reached at the stop's start time.
fn scanner_for_stop(config: &ExperimentConfig, k: usize) -> Result<Scanner> {
    let t0 = config.sequence.stop_start(k);
    let rotors: Vec<RotorConfig> = config
        .scanner
        .rotors()
        .iter()
        .map(|r| r.with_phase(r.initial_phase + r.speed * t0))
        .collect();
    config.scanner.clone().with_rotors(rotors)
}

fn scan_all_stops(config: &ExperimentConfig, seed: u64, times: &[f64]) -> Result<Vec<StopScan>> {
    let duration = times.iter().cloned().fold(0.0, f64::max);
    (0..config.sequence.stops.len())
        .map(|k| {
            let scanner = scanner_for_stop(config, k)?;
            let sampling = SamplingConfig::new(
                config.rate_hz,
                duration,
                config.control_tick_s,
                derive_seed(seed, domain::POSE_SCAN, k as u64),
            )?;
            scan_stop(
                &scanner,
                &sampling,
                &config.scene,
                &config.sequence.lidar_pose(k),
                config.range_noise_std,
                config.max_range,
                config.beam_cell,
                times,
                derive_seed(seed, domain::RANGE_NOISE, k as u64),
            )
        })
        .collect()
}

/// Registers stop `k + 1` onto stop `k` for every consecutive pair; the
/// result is the lidar motion `A_k`. A capped registration keeps its last
/// iterate and is counted.
fn register_consecutive(clouds: &[&Vec<Vector3<f64>>], icp: &IcpConfig) -> Result<(Vec<Pose>, usize)> {
    let mut poses = Vec::with_capacity(clouds.len().saturating_sub(1));
    let mut capped = 0;
    for k in 0..clouds.len().saturating_sub(1) {
        if clouds[k].len() < icp.normal_neighbors || clouds[k + 1].is_empty() {
            return Err(Error::Domain(format!("stop {k} produced too few points to register")));
        }
        let target = Target::new(clouds[k], icp.normal_neighbors);
        let reg: Registration = match register_to_target(clouds[k + 1], &target, &Pose::identity(), icp) {
            Ok(r) => r,
            Err(Error::NonConvergence { last }) => {
                capped += 1;
                *last
            }
            Err(e) => return Err(e),
        };
        poses.push(reg.pose);
    }
    Ok((poses, capped))
}

/// One seed at one accumulation time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub accum_time_s: f64,
    pub seed: u64,
    /// Mean calibration error against the reference motions.
    pub err: f64,
    /// Mean calibration error against the true lidar motions.
    pub err_truth: f64,
    /// Smallest pattern coverage over the stops, percent.
    pub min_coverage_pct: f64,
    pub capped_registrations: usize,
}

/// Statistics over seeds at one accumulation time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeSummary {
    pub accum_time_s: f64,
    pub mean: f64,
    pub std_error: f64,
    pub mean_truth: f64,
    pub std_error_truth: f64,
    pub min_coverage_pct: f64,
    pub seeds: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    /// Ordered by accumulation time, then seed as configured.
    pub rows: Vec<ExperimentRow>,
    pub summary: Vec<TimeSummary>,
    /// Calibration error of the reference motions themselves against truth.
    pub reference_err_truth: f64,
}

fn mean_and_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs the experiment for every seed (in parallel) and accumulation time.
pub fn run_calibration_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let seq = &config.sequence;
    let pairs = seq.stops.len() - 1;
    let truth: Vec<Pose> = (0..pairs).map(|k| seq.lidar_motion(k)).collect();

    let reference_scans = scan_all_stops(config, config.reference_seed, &[config.reference_duration])?;
    let ref_clouds: Vec<&Vec<Vector3<f64>>> = reference_scans.iter().map(|s| &s.clouds[0]).collect();
    let (reference, _) = register_consecutive(&ref_clouds, &config.icp)?;
    let reference_err_truth = (0..pairs)
        .map(|k| calib_error(&reference[k], &seq.imu_motion(k), &seq.extrinsic))
        .sum::<Result<f64>>()?
        / pairs as f64;

    let times = &config.accumulation_times;
    let mut sorted = times.clone();
    sorted.sort_by(f64::total_cmp);
    let windows = seq.static_windows();
    let g = config.imu.gravity().norm();

    let per_seed = config
        .seeds
        .par_iter()
        .map(|&seed| -> Result<Vec<ExperimentRow>> {
            let imu = simulate_imu(seq, &config.imu, seed)?;
            let b = integrate_imu(&imu, &windows, g)?;
            let scans = scan_all_stops(config, seed, &sorted)?;
            times
                .iter()
                .map(|&tau| {
                    let i = sorted.iter().position(|&t| t == tau).expect("time present");
                    let clouds: Vec<&Vec<Vector3<f64>>> = scans.iter().map(|s| &s.clouds[i]).collect();
                    let (a, capped) = register_consecutive(&clouds, &config.icp)?;
                    let pairs_ab: Vec<(Pose, Pose)> = a.iter().copied().zip(b.iter().copied()).collect();
                    let x = hand_eye_solve(&pairs_ab)?;
                    let mut err = 0.0;
                    let mut err_truth = 0.0;
                    for k in 0..pairs {
                        err += calib_error(&reference[k], &b[k], &x)?;
                        err_truth += calib_error(&truth[k], &b[k], &x)?;
                    }
                    Ok(ExperimentRow {
                        accum_time_s: tau,
                        seed,
                        err: err / pairs as f64,
                        err_truth: err_truth / pairs as f64,
                        min_coverage_pct: scans.iter().map(|s| s.coverage[i]).fold(f64::INFINITY, f64::min),
                        capped_registrations: capped,
                    })
                })
                .collect()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::with_capacity(times.len() * config.seeds.len());
    for i in 0..times.len() {
        for seed_rows in &per_seed {
            rows.push(seed_rows[i].clone());
        }
    }
    let summary = times
        .iter()
        .map(|&tau| {
            let sel: Vec<&ExperimentRow> = rows.iter().filter(|r| r.accum_time_s == tau).collect();
            let (mean, std_error) = mean_and_stderr(&sel.iter().map(|r| r.err).collect::<Vec<_>>());
            let (mean_truth, std_error_truth) = mean_and_stderr(&sel.iter().map(|r| r.err_truth).collect::<Vec<_>>());
            TimeSummary {
                accum_time_s: tau,
                mean,
                std_error,
                mean_truth,
                std_error_truth,
                min_coverage_pct: sel.iter().map(|r| r.min_coverage_pct).fold(f64::INFINITY, f64::min),
                seeds: sel.len(),
            }
        })
        .collect();
    Ok(ExperimentResult {
        rows,
        summary,
        reference_err_truth,
    })
}
