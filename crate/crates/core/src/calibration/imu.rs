//! IMU simulation along a stop-and-go pose sequence, and bias-corrected
//! integration of the relative motion between static stops.

use nalgebra::Vector3;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{domain, stream_rng};
use crate::se3::{exp_se3, log_se3, so3_exp, Pose};

/// Shortest static window accepted for bias estimation, seconds.
pub const MIN_STATIC_WINDOW: f64 = 1.0;
/// Duration of each move between stops, seconds.
pub const DEFAULT_MOVE_DURATION: f64 = 2.0;

/// Inertial sensor error model.
///
/// Noise is white with the given spectral densities; each sample draws
/// `density * sqrt(rate)`. Biases drift linearly: `b(t) = b0 + drift * t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImuModel {
    /// rad/s/sqrt(Hz)
    pub gyro_noise_density: f64,
    /// m/s^2/sqrt(Hz)
    pub accel_noise_density: f64,
    pub gyro_bias: [f64; 3],
    /// rad/s^2
    pub gyro_bias_drift: [f64; 3],
    pub accel_bias: [f64; 3],
    /// m/s^3
    pub accel_bias_drift: [f64; 3],
    pub rate_hz: f64,
    pub gravity: [f64; 3],
}

impl Default for ImuModel {
    /// A consumer-grade MEMS unit sampled at 1 kHz.
    fn default() -> Self {
        ImuModel {
            gyro_noise_density: 1.7e-4,
            accel_noise_density: 2.0e-3,
            gyro_bias: [2.0e-3, -1.5e-3, 1.0e-3],
            gyro_bias_drift: [1.0e-5, 2.0e-5, -1.0e-5],
            accel_bias: [0.01, -0.015, 0.03],
            accel_bias_drift: [0.0, 0.0, 1.0e-4],
            rate_hz: 1000.0,
            gravity: [0.0, 0.0, -9.81],
        }
    }
}

impl ImuModel {
    /// Noise- and bias-free model.
    pub fn ideal(rate_hz: f64) -> Self {
        ImuModel {
            gyro_noise_density: 0.0,
            accel_noise_density: 0.0,
            gyro_bias: [0.0; 3],
            gyro_bias_drift: [0.0; 3],
            accel_bias: [0.0; 3],
            accel_bias_drift: [0.0; 3],
            rate_hz,
            ..ImuModel::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rate_hz >= 100.0 && self.rate_hz.is_finite()) {
            return Err(Error::config(format!("IMU rate {} Hz below 100 Hz", self.rate_hz)));
        }
        if !(self.gyro_noise_density >= 0.0 && self.accel_noise_density >= 0.0) {
            return Err(Error::config("IMU noise densities must be non-negative"));
        }
        let all = [
            self.gyro_bias,
            self.gyro_bias_drift,
            self.accel_bias,
            self.accel_bias_drift,
            self.gravity,
        ];
        if all.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::config("IMU biases and gravity must be finite"));
        }
        if Vector3::from(self.gravity).norm() == 0.0 {
            return Err(Error::config("gravity must be nonzero"));
        }
        Ok(())
    }

    pub fn gravity(&self) -> Vector3<f64> {
        Vector3::from(self.gravity)
    }

    pub fn gyro_bias_at(&self, t: f64) -> Vector3<f64> {
        Vector3::from(self.gyro_bias) + Vector3::from(self.gyro_bias_drift) * t
    }

    pub fn accel_bias_at(&self, t: f64) -> Vector3<f64> {
        Vector3::from(self.accel_bias) + Vector3::from(self.accel_bias_drift) * t
    }
}

/// A static stop of the sensor rig.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stop {
    /// World-from-IMU pose.
    pub pose: Pose,
    /// Time spent at the pose, seconds.
    pub dwell: f64,
}

/// Stops joined by screw-motion moves, with the true IMU-to-lidar extrinsic.
///
/// The extrinsic `X` maps IMU coordinates to lidar coordinates, so the lidar
/// pose is `T_wl = T_wi X^-1` and lidar motions satisfy `A = X B X^-1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseSequence {
    pub stops: Vec<Stop>,
    pub move_duration: f64,
    pub extrinsic: Pose,
}

/// Quintic time scaling with zero velocity and acceleration at both ends.
fn quintic(u: f64) -> (f64, f64, f64) {
    let u = u.clamp(0.0, 1.0);
    let (u2, u3) = (u * u, u * u * u);
    (
        u3 * (10.0 - 15.0 * u + 6.0 * u2),
        30.0 * u2 * (1.0 - u) * (1.0 - u),
        60.0 * u * (1.0 - u) * (1.0 - 2.0 * u),
    )
}

/// Kinematic state of the IMU at one instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImuTruth {
    pub pose: Pose,
    /// Body-frame angular velocity, rad/s.
    pub angular_velocity: Vector3<f64>,
    /// Body-frame linear acceleration (without gravity), m/s^2.
    pub acceleration: Vector3<f64>,
}

/// Which part of the timeline an instant falls in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Static(usize),
    /// Move from stop `k` to stop `k + 1`.
    Moving(usize),
}

impl PoseSequence {
    pub fn new(stops: Vec<Stop>, move_duration: f64, extrinsic: Pose) -> Result<Self> {
        let seq = PoseSequence {
            stops,
            move_duration,
            extrinsic,
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stops.is_empty() {
            return Err(Error::config("pose sequence needs at least one stop"));
        }
        if !(self.move_duration > 0.0) {
            return Err(Error::config("move duration must be positive"));
        }
        if let Some(s) = self.stops.iter().find(|s| !(s.dwell > 0.0 && s.dwell.is_finite())) {
            return Err(Error::config(format!("dwell {} s must be positive", s.dwell)));
        }
        for (k, w) in self.stops.windows(2).enumerate() {
            let d = log_se3(&w[0].pose.inverse().compose(&w[1].pose))?;
            if d.norm() < 1e-9 {
                return Err(Error::config(format!("stops {k} and {} coincide", k + 1)));
            }
        }
        Ok(())
    }

    /// Six stops starting at `home`, each reached from the previous one by a
    /// 10 degree rotation and a 0.10 m translation in the body frame. Axes
    /// alternate so the rig stays near home.
    pub fn six_pose(home: Pose, extrinsic: Pose, dwell: f64) -> Self {
        let deg = 10f64.to_radians();
        let moves: [([f64; 3], [f64; 3]); 5] = [
            ([1.0, 0.0, 0.0], [0.0, 1.0, 0.0]),
            ([0.0, 1.0, 0.0], [0.0, 0.0, 1.0]),
            ([-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]),
            ([0.0, -1.0, 0.0], [0.0, 0.0, -1.0]),
            ([0.0, 0.0, 1.0], [1.0, 0.0, 0.0]),
        ];
        let mut stops = vec![Stop { pose: home, dwell }];
        let mut pose = home;
        for (axis, dir) in moves {
            let w = Vector3::from(axis) * deg;
            let v = Vector3::from(dir) * 0.10;
            pose = pose * Pose::from_rotation_vector(w) * Pose::from_translation(v);
            stops.push(Stop { pose, dwell });
        }
        PoseSequence {
            stops,
            move_duration: DEFAULT_MOVE_DURATION,
            extrinsic,
        }
    }

    /// Start time of stop `k`.
    pub fn stop_start(&self, k: usize) -> f64 {
        self.stops[..k].iter().map(|s| s.dwell).sum::<f64>() + k as f64 * self.move_duration
    }

    /// `[start, end)` of each stop.
    pub fn static_windows(&self) -> Vec<(f64, f64)> {
        (0..self.stops.len())
            .map(|k| {
                let s = self.stop_start(k);
                (s, s + self.stops[k].dwell)
            })
            .collect()
    }

    pub fn duration(&self) -> f64 {
        let k = self.stops.len() - 1;
        self.stop_start(k) + self.stops[k].dwell
    }

    pub fn phase_at(&self, t: f64) -> Phase {
        for k in 0..self.stops.len() {
            let s = self.stop_start(k);
            if t < s + self.stops[k].dwell || k + 1 == self.stops.len() {
                return Phase::Static(k);
            }
            if t < s + self.stops[k].dwell + self.move_duration {
                return Phase::Moving(k);
            }
        }
        Phase::Static(self.stops.len() - 1)
    }

    /// True IMU motion from stop `k` to stop `k + 1`.
    pub fn imu_motion(&self, k: usize) -> Pose {
        self.stops[k].pose.inverse() * self.stops[k + 1].pose
    }

    /// True lidar motion from stop `k` to stop `k + 1`.
    pub fn lidar_motion(&self, k: usize) -> Pose {
        self.extrinsic.conjugate(&self.imu_motion(k))
    }

    /// World-from-lidar pose at stop `k`.
    pub fn lidar_pose(&self, k: usize) -> Pose {
        self.stops[k].pose * self.extrinsic.inverse()
    }

    /// Pose and body-frame derivatives at time `t`.
    pub fn truth_at(&self, t: f64) -> ImuTruth {
        match self.phase_at(t) {
            Phase::Static(k) => ImuTruth {
                pose: self.stops[k].pose,
                angular_velocity: Vector3::zeros(),
                acceleration: Vector3::zeros(),
            },
            Phase::Moving(k) => {
                let t0 = self.stop_start(k) + self.stops[k].dwell;
                let d = self.move_duration;
                let (s, sd, sdd) = quintic((t - t0) / d);
                let (sd, sdd) = (sd / d, sdd / (d * d));
                let xi = log_se3(&self.imu_motion(k)).expect("validated moves are below pi");
                ImuTruth {
                    pose: self.stops[k].pose * exp_se3(&xi.scaled(s)),
                    angular_velocity: xi.angular * sd,
                    acceleration: xi.linear * sdd + xi.angular.cross(&xi.linear) * (sd * sd),
                }
            }
        }
    }
}

/// One IMU measurement.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImuSample {
    pub t: f64,
    pub gyro: Vector3<f64>,
    /// Specific force, m/s^2.
    pub accel: Vector3<f64>,
}

/// Simulates gyro and accelerometer samples at `k / rate` over the sequence.
pub fn simulate_imu(seq: &PoseSequence, model: &ImuModel, seed: u64) -> Result<Vec<ImuSample>> {
    seq.validate()?;
    model.validate()?;
    let mut rng = stream_rng(seed, domain::IMU, 0);
    let g = model.gravity();
    let gs = model.gyro_noise_density * model.rate_hz.sqrt();
    let as_ = model.accel_noise_density * model.rate_hz.sqrt();
    let n = (seq.duration() * model.rate_hz + 1e-9).floor() as usize;
    let mut noise = |sigma: f64| -> Vector3<f64> {
        let mut v = Vector3::zeros();
        for c in v.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *c = sigma * z;
        }
        v
    };
    Ok((0..=n)
        .map(|k| {
            let t = k as f64 / model.rate_hz;
            let truth = seq.truth_at(t);
            let f = truth.acceleration - truth.pose.rotation().transpose() * g;
            ImuSample {
                t,
                gyro: truth.angular_velocity + model.gyro_bias_at(t) + noise(gs),
                accel: f + model.accel_bias_at(t) + noise(as_),
            }
        })
        .collect())
}

/// Biases estimated from one static window.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StaticEstimate {
    /// Window midpoint, seconds.
    pub t: f64,
    pub gyro_bias: Vector3<f64>,
    /// Accelerometer bias along the measured gravity direction only.
    pub accel_bias: Vector3<f64>,
    /// Gravity in the body frame.
    pub gravity_body: Vector3<f64>,
}

/// Estimates biases in a static window, assuming a known gravity magnitude.
///
/// The gyro bias is the mean rate. The mean specific force `m` gives the
/// gravity direction; only its component along `m` is attributed to bias.
pub fn estimate_static(samples: &[ImuSample], window: (f64, f64), gravity_norm: f64, index: usize) -> Result<StaticEstimate> {
    let duration = window.1 - window.0;
    if duration < MIN_STATIC_WINDOW {
        return Err(Error::InsufficientBiasData {
            window: index,
            duration,
            required: MIN_STATIC_WINDOW,
        });
    }
    let lo = samples.partition_point(|s| s.t < window.0);
    let hi = samples.partition_point(|s| s.t < window.1);
    if hi <= lo {
        return Err(Error::InsufficientBiasData {
            window: index,
            duration: 0.0,
            required: MIN_STATIC_WINDOW,
        });
    }
    let n = (hi - lo) as f64;
    let (gyro, accel) = samples[lo..hi]
        .iter()
        .fold((Vector3::zeros(), Vector3::zeros()), |(g, a), s| (g + s.gyro, a + s.accel));
    let (gyro, m) = (gyro / n, accel / n);
    let up = m.normalize();
    Ok(StaticEstimate {
        t: 0.5 * (samples[lo].t + samples[hi - 1].t),
        gyro_bias: gyro,
        accel_bias: up * (m.norm() - gravity_norm),
        gravity_body: -up * gravity_norm,
    })
}

fn lerp(a: &Vector3<f64>, b: &Vector3<f64>, ta: f64, tb: f64, t: f64) -> Vector3<f64> {
    let w = ((t - ta) / (tb - ta)).clamp(0.0, 1.0);
    a * (1.0 - w) + b * w
}

/// Integrates the relative IMU motion between consecutive static windows.
///
/// Biases come from the static windows and are linearly interpolated in time
/// across each move; gravity is expressed in the body frame of the first stop.
/// Rotation uses the midpoint rate, velocity and position the trapezoid rule.
pub fn integrate_imu(samples: &[ImuSample], windows: &[(f64, f64)], gravity_norm: f64) -> Result<Vec<Pose>> {
    let est = windows
        .iter()
        .enumerate()
        .map(|(i, w)| estimate_static(samples, *w, gravity_norm, i))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(windows.len().saturating_sub(1));
    for k in 0..windows.len().saturating_sub(1) {
        let (e0, e1) = (&est[k], &est[k + 1]);
        let bg = |t: f64| lerp(&e0.gyro_bias, &e1.gyro_bias, e0.t, e1.t, t);
        let ba = |t: f64| lerp(&e0.accel_bias, &e1.accel_bias, e0.t, e1.t, t);
        let g = e0.gravity_body;
        // Snap outward to samples so the whole move is inside the interval.
        let lo = samples.partition_point(|s| s.t <= windows[k].1).saturating_sub(1);
        let hi = samples.partition_point(|s| s.t < windows[k + 1].0).min(samples.len() - 1);
        let mut r = nalgebra::Matrix3::identity();
        let mut v = Vector3::zeros();
        let mut p = Vector3::zeros();
        for j in lo..hi {
            let (a, b) = (&samples[j], &samples[j + 1]);
            let dt = b.t - a.t;
            let tm = 0.5 * (a.t + b.t);
            let w = 0.5 * (a.gyro + b.gyro) - bg(tm);
            let r1 = r * so3_exp(&(w * dt));
            let acc0 = r * (a.accel - ba(a.t)) + g;
            let acc1 = r1 * (b.accel - ba(b.t)) + g;
            p += v * dt + (acc0 / 3.0 + acc1 / 6.0) * (dt * dt);
            v += (acc0 + acc1) * (0.5 * dt);
            r = r1;
        }
        out.push(Pose::new_projected(r, p));
    }
    Ok(out)
}
