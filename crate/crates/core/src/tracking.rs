//! Intruder detection and gimbal tracking with a foveated lidar.
//!
//! Frames are 0.1 s slices of the point stream. Detection takes per-axis
//! medians of the returns inside a background-free region; the controller
//! commands gimbal speeds proportional to the bearing errors, with a
//! deadband.
//!
//! Gimbal sign convention: positive yaw turns the sensor toward negative
//! local `y` and positive pitch tilts it toward negative local `z`, so that
//! `v = -k e` closes the loop for errors `e = atan(y / x)` and `atan(z / x)`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::io::Write;

use nalgebra::{Matrix3, Rotation3, Vector3};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pattern::{PatternGenerator, Sample, SamplingConfig, Scanner, DEFAULT_CONTROL_TICK_S, DEFAULT_RATE_HZ};
use crate::rng::{domain, stream_rng};
use crate::scene::{raycast, Primitive, Scene, DEFAULT_MAX_RANGE, DEFAULT_RANGE_NOISE};
use crate::se3::{Pose, UnitVec3};

pub const FRAME_PERIOD: f64 = 0.1;
pub const DEFAULT_GAIN: f64 = 2.0;
pub const DEFAULT_DEADBAND: f64 = 2.0 * PI / 180.0;
/// Gimbal speed limit, rad/s.
pub const DEFAULT_MAX_SPEED: f64 = 1.0;
/// Radius of the simulated intruder, meters.
pub const TARGET_RADIUS: f64 = 0.15;

/// Lidar optical frame (z boresight) to gimbal local frame (x forward, z up).
pub fn lidar_to_gimbal() -> Matrix3<f64> {
    Matrix3::new(0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0)
}

/// Axis-aligned box in the gimbal local frame that holds no background.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionRegion {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl DetectionRegion {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Result<Self> {
        let r = DetectionRegion { min, max };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        for i in 0..3 {
            if !(self.min[i] < self.max[i]) {
                return Err(Error::config(format!(
                    "detection region needs min < max on axis {i}, got {} and {}",
                    self.min[i], self.max[i]
                )));
            }
        }
        Ok(())
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }
}

/// Median of a nonempty slice; the mean of the middle pair for even lengths.
fn median(v: &mut [f64]) -> f64 {
    v.sort_unstable_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Per-axis median of the points inside `region`, or `None` without survivors.
pub fn detect_intruder(points: &[Vector3<f64>], region: &DetectionRegion) -> Option<Vector3<f64>> {
    let inside: Vec<&Vector3<f64>> = points.iter().filter(|p| region.contains(p)).collect();
    if inside.is_empty() {
        return None;
    }
    let mut axis = vec![0.0; inside.len()];
    let mut out = Vector3::zeros();
    for i in 0..3 {
        for (a, p) in axis.iter_mut().zip(&inside) {
            *a = p[i];
        }
        out[i] = median(&mut axis);
    }
    Some(out)
}

/// Bearing errors and the speeds commanded for them.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackingCommand {
    pub e_yaw: f64,
    pub e_pitch: f64,
    pub v_yaw: f64,
    pub v_pitch: f64,
}

/// Proportional command toward `p` (gimbal frame); each axis is zero while
/// its error is inside the deadband.
pub fn tracking_command(p: &Vector3<f64>, k_yaw: f64, k_pitch: f64, deadband: f64) -> Result<TrackingCommand> {
    if !(p.x > 0.0) {
        return Err(Error::BehindSensor { x: p.x });
    }
    let e_yaw = (p.y / p.x).atan();
    let e_pitch = (p.z / p.x).atan();
    let law = |e: f64, k: f64| if e.abs() < deadband { 0.0 } else { -k * e };
    Ok(TrackingCommand {
        e_yaw,
        e_pitch,
        v_yaw: law(e_yaw, k_yaw),
        v_pitch: law(e_pitch, k_pitch),
    })
}

/// Piecewise-linear map from speed command to actual rate, extrapolated
/// linearly past the end points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainTable {
    commands: Vec<f64>,
    rates: Vec<f64>,
}

impl GainTable {
    pub fn new(commands: Vec<f64>, rates: Vec<f64>) -> Result<Self> {
        let t = GainTable { commands, rates };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.commands.len() < 2 || self.commands.len() != self.rates.len() {
            return Err(Error::config("gain table needs at least two (command, rate) pairs of equal length"));
        }
        if !self.commands.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::config("gain table commands must be strictly increasing"));
        }
        if self.commands.iter().chain(&self.rates).any(|x| !x.is_finite()) {
            return Err(Error::config("gain table entries must be finite"));
        }
        Ok(())
    }

    /// Rate equal to the command.
    pub fn unit() -> Self {
        GainTable {
            commands: vec![-1.0, 1.0],
            rates: vec![-1.0, 1.0],
        }
    }

    pub fn commands(&self) -> &[f64] {
        &self.commands
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    fn segment(xs: &[f64], x: f64) -> usize {
        xs.partition_point(|&c| c <= x).clamp(1, xs.len() - 1) - 1
    }

    fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
        let i = Self::segment(xs, x);
        let f = (x - xs[i]) / (xs[i + 1] - xs[i]);
        ys[i] + f * (ys[i + 1] - ys[i])
    }

    pub fn rate(&self, command: f64) -> f64 {
        Self::interp(&self.commands, &self.rates, command)
    }

    /// The command producing `rate`; `None` unless rates strictly increase.
    pub fn command_for(&self, rate: f64) -> Option<f64> {
        self.rates
            .windows(2)
            .all(|w| w[0] < w[1])
            .then(|| Self::interp(&self.rates, &self.commands, rate))
    }
}

/// True actuator response of a gimbal motor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum RateResponse {
    Linear { gain: f64 },
    /// `sum c_i cmd^i`.
    Polynomial { coefficients: Vec<f64> },
    Table(GainTable),
}

impl RateResponse {
    pub fn rate(&self, command: f64) -> f64 {
        match self {
            RateResponse::Linear { gain } => gain * command,
            RateResponse::Polynomial { coefficients } => coefficients.iter().rev().fold(0.0, |acc, c| acc * command + c),
            RateResponse::Table(t) => t.rate(command),
        }
    }
}

impl Default for RateResponse {
    fn default() -> Self {
        RateResponse::Linear { gain: 1.0 }
    }
}

/// Two-axis gimbal: angles, last commands and the actuator model.
#[derive(Clone, Debug, PartialEq)]
pub struct GimbalState {
    pub yaw: f64,
    pub pitch: f64,
    pub v_yaw: f64,
    pub v_pitch: f64,
    pub max_speed: f64,
    pub response: RateResponse,
    /// Mechanical pitch limit, radians either side of level.
    pub pitch_limit: f64,
}

impl GimbalState {
    pub fn new(max_speed: f64, response: RateResponse) -> Result<Self> {
        if !(max_speed > 0.0) || !max_speed.is_finite() {
            return Err(Error::config(format!("gimbal max speed must be positive, got {max_speed}")));
        }
        Ok(GimbalState {
            yaw: 0.0,
            pitch: 0.0,
            v_yaw: 0.0,
            v_pitch: 0.0,
            max_speed,
            response,
            pitch_limit: FRAC_PI_2,
        })
    }

    pub fn pointing(mut self, yaw: f64, pitch: f64) -> Self {
        self.yaw = wrap_angle(yaw);
        self.pitch = pitch.clamp(-self.pitch_limit, self.pitch_limit);
        self
    }

    /// Actual rates for the stored commands.
    pub fn rates(&self) -> (f64, f64) {
        let clamp = |c: f64| self.response.rate(c).clamp(-self.max_speed, self.max_speed);
        (clamp(self.v_yaw), clamp(self.v_pitch))
    }

    /// Gimbal local frame to mount frame.
    pub fn orientation(&self) -> Matrix3<f64> {
        gimbal_rotation(self.yaw, self.pitch)
    }
}

fn gimbal_rotation(yaw: f64, pitch: f64) -> Matrix3<f64> {
    (Rotation3::from_axis_angle(&Vector3::z_axis(), -yaw) * Rotation3::from_axis_angle(&Vector3::y_axis(), pitch)).into_inner()
}

fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

/// Applies speed commands for `dt` seconds.
///
/// # Panics
/// If `dt` is not positive.
pub fn step_gimbal(state: &GimbalState, v_yaw: f64, v_pitch: f64, dt: f64) -> GimbalState {
    assert!(dt > 0.0, "time step must be positive");
    let mut next = state.clone();
    next.v_yaw = v_yaw;
    next.v_pitch = v_pitch;
    let (ry, rp) = next.rates();
    next.yaw = wrap_angle(state.yaw + ry * dt);
    next.pitch = (state.pitch + rp * dt).clamp(-state.pitch_limit, state.pitch_limit);
    next
}

/// Target position as a function of time, in the world frame.
pub trait TargetPath: Sync {
    fn position(&self, t: f64) -> Vector3<f64>;
}

impl<F: Fn(f64) -> Vector3<f64> + Sync> TargetPath for F {
    fn position(&self, t: f64) -> Vector3<f64> {
        self(t)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub t: f64,
    pub position: [f64; 3],
}

/// Piecewise-linear path through timed waypoints, held at both ends.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WaypointPath {
    waypoints: Vec<Waypoint>,
}

impl WaypointPath {
    pub fn new(waypoints: Vec<Waypoint>) -> Result<Self> {
        let p = WaypointPath { waypoints };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.waypoints.is_empty() {
            return Err(Error::config("path needs at least one waypoint"));
        }
        if !self.waypoints.windows(2).all(|w| w[0].t < w[1].t) {
            return Err(Error::config("waypoint times must be strictly increasing"));
        }
        Ok(())
    }

    pub fn waypoints(&self) -> &[Waypoint] {
        &self.waypoints
    }
}

impl TargetPath for WaypointPath {
    fn position(&self, t: f64) -> Vector3<f64> {
        let w = &self.waypoints;
        let i = w.partition_point(|p| p.t <= t);
        if i == 0 {
            return w[0].position.into();
        }
        if i == w.len() {
            return w[i - 1].position.into();
        }
        let (a, b) = (&w[i - 1], &w[i]);
        let f = (t - a.t) / (b.t - a.t);
        Vector3::from(a.position) * (1.0 - f) + Vector3::from(b.position) * f
    }
}

/// Lidar, gimbal and controller settings shared by the tracking procedures.
#[derive(Clone, Debug)]
pub struct TrackingConfig {
    pub scanner: Scanner,
    pub rate_hz: f64,
    pub control_tick_s: f64,
    pub region: DetectionRegion,
    pub gain_yaw: f64,
    pub gain_pitch: f64,
    pub deadband: f64,
    pub max_speed: f64,
    /// True actuator response.
    pub plant: RateResponse,
    /// Calibrated command-to-rate table the controller inverts.
    pub calibration: GainTable,
    /// Gimbal center in the world.
    pub mount: Pose,
    pub initial_yaw: f64,
    pub initial_pitch: f64,
    /// Mechanical pitch limit, radians either side of level.
    pub pitch_limit: f64,
    pub target_radius: f64,
    pub duration: f64,
    pub range_noise_std: f64,
    pub max_range: f64,
    pub seed: u64,
}

impl TrackingConfig {
    /// Defaults: reference scanner, unit gimbal, gains 2/s, 2 degree deadband.
    pub fn new(region: DetectionRegion, duration: f64) -> Self {
        TrackingConfig {
            scanner: Scanner::reference(),
            rate_hz: DEFAULT_RATE_HZ,
            control_tick_s: DEFAULT_CONTROL_TICK_S,
            region,
            gain_yaw: DEFAULT_GAIN,
            gain_pitch: DEFAULT_GAIN,
            deadband: DEFAULT_DEADBAND,
            max_speed: DEFAULT_MAX_SPEED,
            plant: RateResponse::default(),
            calibration: GainTable::unit(),
            mount: Pose::identity(),
            initial_yaw: 0.0,
            initial_pitch: 0.0,
            pitch_limit: FRAC_PI_2,
            target_radius: TARGET_RADIUS,
            duration,
            range_noise_std: DEFAULT_RANGE_NOISE,
            max_range: DEFAULT_MAX_RANGE,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.region.validate()?;
        self.calibration.validate()?;
        if self.calibration.command_for(0.0).is_none() {
            return Err(Error::config("calibration table rates must be strictly increasing"));
        }
        for (name, k) in [("yaw", self.gain_yaw), ("pitch", self.gain_pitch)] {
            if !(k >= 0.0) || !k.is_finite() {
                return Err(Error::config(format!("{name} gain must be non-negative, got {k}")));
            }
        }
        if !(self.deadband >= 0.0) {
            return Err(Error::config("deadband must be non-negative"));
        }
        if !(self.pitch_limit > 0.0 && self.pitch_limit <= FRAC_PI_2) {
            return Err(Error::config("pitch limit must lie in (0, pi/2]"));
        }
        if !(self.target_radius > 0.0) || !(self.duration > 0.0) {
            return Err(Error::config("target radius and duration must be positive"));
        }
        if !(self.range_noise_std >= 0.0) || !(self.max_range > 0.0) {
            return Err(Error::config("range noise must be non-negative and max range positive"));
        }
        GimbalState::new(self.max_speed, self.plant.clone())?;
        SamplingConfig::new(self.rate_hz, self.duration, self.control_tick_s, self.seed)?;
        Ok(())
    }

    fn sampling(&self, duration: f64) -> Result<SamplingConfig> {
        SamplingConfig::new(self.rate_hz, duration, self.control_tick_s, self.seed)
    }
}

/// Pulls the samples of successive frames out of a time-ordered stream.
struct FrameSlicer<'a> {
    samples: std::iter::Peekable<PatternGenerator<'a>>,
}

impl<'a> FrameSlicer<'a> {
    fn new(scanner: &'a Scanner, sampling: &SamplingConfig) -> Self {
        FrameSlicer {
            samples: scanner.samples(sampling).peekable(),
        }
    }

    fn until(&mut self, t_end: f64) -> Result<Vec<Sample>> {
        let mut out = Vec::new();
        while let Some(s) = self.samples.next_if(|s| s.as_ref().map_or(true, |s| s.t < t_end)) {
            out.push(s?);
        }
        Ok(out)
    }
}

/// Returns of one frame in the gimbal local frame, and how many hit the target.
struct FrameReturns {
    points: Vec<Vector3<f64>>,
    target_hits: usize,
}

/// Casts a frame with the sensor held at `orientation` (gimbal local to
/// mount) while the target moves along `path`.
#[allow(clippy::too_many_arguments)]
fn cast_frame(
    samples: &[Sample],
    scene: &Scene,
    path: &dyn TargetPath,
    radius: f64,
    mount: &Pose,
    orientation: &Matrix3<f64>,
    noise: Option<(&Normal<f64>, &mut rand_chacha::ChaCha8Rng)>,
    max_range: f64,
) -> FrameReturns {
    let to_gimbal = lidar_to_gimbal();
    let world_rot = mount.rotation() * orientation * to_gimbal;
    let origin = mount.translation();
    let mut noise = noise;
    let mut out = FrameReturns {
        points: Vec::with_capacity(samples.len()),
        target_hits: 0,
    };
    for s in samples {
        let d = UnitVec3::renormalized(world_rot * s.dir.as_vector());
        let target = Primitive::Sphere {
            center: path.position(s.t).into(),
            radius,
        }
        .intersect(origin, d.as_vector())
        .filter(|&r| r <= max_range);
        let background = raycast(origin, &d, scene, max_range).map(|h| h.range);
        let (range, on_target) = match (target, background) {
            (Some(a), Some(b)) if a <= b => (a, true),
            (Some(a), None) => (a, true),
            (_, Some(b)) => (b, false),
            (None, None) => continue,
        };
        let e = match noise.as_mut() {
            Some((n, rng)) => n.sample(*rng),
            None => 0.0,
        };
        let r = (range + e).min(max_range);
        if r <= 0.0 {
            continue;
        }
        out.target_hits += on_target as usize;
        out.points.push(to_gimbal * (s.dir.as_vector() * r));
    }
    out
}

fn noise_for(std: f64) -> Result<Option<Normal<f64>>> {
    if std > 0.0 {
        Normal::new(0.0, std).map(Some).map_err(|e| Error::config(e.to_string()))
    } else {
        Ok(None)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackStatus {
    Tracking,
    /// No returns inside the region.
    Lost,
    /// Detection with `x <= 0`; no command issued.
    Behind,
}

/// One control frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackingRow {
    /// Frame start.
    pub t: f64,
    pub status: TrackStatus,
    pub detection: Option<[f64; 3]>,
    pub e_yaw: Option<f64>,
    pub e_pitch: Option<f64>,
    /// Gimbal angles while the frame was scanned.
    pub yaw: f64,
    pub pitch: f64,
    pub v_yaw: f64,
    pub v_pitch: f64,
    pub target_points: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrackingLog {
    pub frame_period: f64,
    pub rows: Vec<TrackingRow>,
}

impl TrackingLog {
    fn inside(row: &TrackingRow, bound: f64) -> bool {
        matches!((row.e_yaw, row.e_pitch), (Some(y), Some(p)) if y.abs() < bound && p.abs() < bound)
    }

    /// Index of the first frame with both errors below `bound`.
    pub fn convergence_frame(&self, bound: f64) -> Option<usize> {
        self.rows.iter().position(|r| Self::inside(r, bound))
    }

    /// Index of the first frame with a detection.
    pub fn first_detection(&self) -> Option<usize> {
        self.rows.iter().position(|r| r.detection.is_some())
    }

    /// Fraction of frames from `start` on with both errors below `bound`;
    /// frames without a detection count as outside.
    pub fn fraction_within(&self, bound: f64, start: usize) -> f64 {
        let tail = &self.rows[start.min(self.rows.len())..];
        if tail.is_empty() {
            return 0.0;
        }
        tail.iter().filter(|r| Self::inside(r, bound)).count() as f64 / tail.len() as f64
    }

    /// Header `t,status,px,py,pz,e_yaw_deg,e_pitch_deg,yaw_deg,pitch_deg,v_yaw,v_pitch,target_points`;
    /// speeds in rad/s, empty fields where there is no detection.
    pub fn write_csv(&self, out: &mut dyn Write) -> std::io::Result<()> {
        writeln!(out, "t,status,px,py,pz,e_yaw_deg,e_pitch_deg,yaw_deg,pitch_deg,v_yaw,v_pitch,target_points")?;
        let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        for r in &self.rows {
            let p = r.detection.map(|p| p.map(Some)).unwrap_or([None; 3]);
            let status = match r.status {
                TrackStatus::Tracking => "tracking",
                TrackStatus::Lost => "lost",
                TrackStatus::Behind => "behind",
            };
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                r.t,
                status,
                opt(p[0]),
                opt(p[1]),
                opt(p[2]),
                opt(r.e_yaw.map(f64::to_degrees)),
                opt(r.e_pitch.map(f64::to_degrees)),
                r.yaw.to_degrees(),
                r.pitch.to_degrees(),
                r.v_yaw,
                r.v_pitch,
                r.target_points
            )?;
        }
        Ok(())
    }
}

/// World position recovered from a detection and the gimbal angles.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveredPoint {
    pub t: f64,
    pub position: [f64; 3],
}

/// Header `t,x,y,z`.
pub fn write_trajectory_csv(out: &mut dyn Write, points: &[RecoveredPoint]) -> std::io::Result<()> {
    writeln!(out, "t,x,y,z")?;
    for p in points {
        writeln!(out, "{},{},{},{}", p.t, p.position[0], p.position[1], p.position[2])?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrackingEpisode {
    pub log: TrackingLog,
    /// Stamped at frame centers.
    pub recovered: Vec<RecoveredPoint>,
}

/// RMS distance between recovered points and the true path at their stamps.
pub fn trajectory_rms(recovered: &[RecoveredPoint], path: &dyn TargetPath) -> f64 {
    if recovered.is_empty() {
        return f64::NAN;
    }
    let ss: f64 = recovered
        .iter()
        .map(|p| (Vector3::from(p.position) - path.position(p.t)).norm_squared())
        .sum();
    (ss / recovered.len() as f64).sqrt()
}

/// Closed loop at one frame per control period: scan with the gimbal held,
/// detect, command, step. Recovered positions use the angles the controller
/// believes it reached by integrating its calibration table, as a gimbal
/// without encoders would.
pub fn run_tracking_episode(path: &dyn TargetPath, scene: &Scene, config: &TrackingConfig) -> Result<TrackingEpisode> {
    config.validate()?;
    let frames = (config.duration / FRAME_PERIOD).round().max(1.0) as usize;
    let sampling = config.sampling(frames as f64 * FRAME_PERIOD)?;
    let mut slicer = FrameSlicer::new(&config.scanner, &sampling);
    let noise = noise_for(config.range_noise_std)?;
    let mut state = GimbalState::new(config.max_speed, config.plant.clone())?;
    state.pitch_limit = config.pitch_limit;
    let mut state = state.pointing(config.initial_yaw, config.initial_pitch);
    let (mut est_yaw, mut est_pitch) = (state.yaw, state.pitch);
    let mut log = TrackingLog {
        frame_period: FRAME_PERIOD,
        rows: Vec::with_capacity(frames),
    };
    let mut recovered = Vec::new();
    let cal_rate = |c: f64| config.calibration.rate(c).clamp(-config.max_speed, config.max_speed);
    for k in 0..frames {
        let t0 = k as f64 * FRAME_PERIOD;
        let samples = slicer.until(t0 + FRAME_PERIOD)?;
        let mut rng = stream_rng(config.seed, domain::TRACKING, k as u64);
        let ret = cast_frame(
            &samples,
            scene,
            path,
            config.target_radius,
            &config.mount,
            &state.orientation(),
            noise.as_ref().map(|n| (n, &mut rng)),
            config.max_range,
        );
        let det = detect_intruder(&ret.points, &config.region);
        let (status, cmd) = match det {
            None => (TrackStatus::Lost, None),
            Some(p) => match tracking_command(&p, config.gain_yaw, config.gain_pitch, config.deadband) {
                Ok(c) => (TrackStatus::Tracking, Some(c)),
                Err(Error::BehindSensor { .. }) => (TrackStatus::Behind, None),
                Err(e) => return Err(e),
            },
        };
        if let Some(p) = det {
            let world = config.mount.transform_point(&(gimbal_rotation(est_yaw, est_pitch) * p));
            recovered.push(RecoveredPoint {
                t: t0 + 0.5 * FRAME_PERIOD,
                position: world.into(),
            });
        }
        let (v_yaw, v_pitch) = cmd.map_or((0.0, 0.0), |c| (c.v_yaw, c.v_pitch));
        log.rows.push(TrackingRow {
            t: t0,
            status,
            detection: det.map(Into::into),
            e_yaw: cmd.map(|c| c.e_yaw),
            e_pitch: cmd.map(|c| c.e_pitch),
            yaw: state.yaw,
            pitch: state.pitch,
            v_yaw,
            v_pitch,
            target_points: ret.target_hits,
        });
        let invert = |v: f64| config.calibration.command_for(v).expect("validated monotone table");
        let (c_yaw, c_pitch) = (invert(v_yaw), invert(v_pitch));
        state = step_gimbal(&state, c_yaw, c_pitch, FRAME_PERIOD);
        est_yaw = wrap_angle(est_yaw + cal_rate(c_yaw) * FRAME_PERIOD);
        est_pitch = (est_pitch + cal_rate(c_pitch) * FRAME_PERIOD).clamp(-state.pitch_limit, state.pitch_limit);
    }
    Ok(TrackingEpisode { log, recovered })
}

/// Settings for measuring the gimbal's command-to-rate response.
#[derive(Clone, Debug)]
pub struct RateCalibrationConfig {
    pub tracking: TrackingConfig,
    /// Static feature in the mount frame; the only object in the scene.
    pub feature: Vector3<f64>,
    /// Total bearing swept per command, radians.
    pub sweep: f64,
    /// Cap on the time spent per command, seconds.
    pub max_duration: f64,
    /// Frames observed per command at least.
    pub min_frames: usize,
}

impl RateCalibrationConfig {
    /// A 1 m sphere 15 m ahead, watched through a box around it. The sphere
    /// is large so that it stays well sampled away from boresight.
    pub fn new(seed: u64) -> Self {
        let region = DetectionRegion::new([10.0, -4.0, -2.0], [20.0, 4.0, 2.0]).expect("static region");
        let mut tracking = TrackingConfig::new(region, 1.0);
        tracking.seed = seed;
        tracking.target_radius = 0.15;
        RateCalibrationConfig {
            tracking,
            feature: Vector3::new(15.0, 0.0, 0.0),
            sweep: 0.2,
            max_duration: 2.0,
            min_frames: 3,
        }
    }
}

/// Builds the lookup table by holding each command on the yaw axis and
/// fitting the bearing rate of a static feature; both axes share the table.
///
/// With the sign convention of this module the feature's bearing advances at
/// the actual yaw rate (the sensor turns toward negative bearings, so the
/// scene appears to rotate the other way).
pub fn calibrate_gimbal_rates(commands: &[f64], config: &RateCalibrationConfig) -> Result<GainTable> {
    let mut commands = commands.to_vec();
    commands.sort_by(f64::total_cmp);
    commands.dedup();
    let base = &config.tracking;
    let empty = Scene::default();
    let feature = config.feature;
    let path = move |_t: f64| feature;
    let noise = noise_for(base.range_noise_std)?;
    let mut rates = Vec::with_capacity(commands.len());
    for (ci, &c) in commands.iter().enumerate() {
        // Frames spanning at most `sweep` of bearing, so the feature stays
        // near boresight where the pattern samples it densely.
        let cap = (config.max_duration / FRAME_PERIOD).round() as usize;
        let span = if c == 0.0 {
            cap
        } else {
            ((config.sweep / (c.abs() * FRAME_PERIOD)).floor() as usize + 1).min(cap)
        };
        let frames = span.max(config.min_frames);
        let mut tc = base.clone();
        tc.seed = base.seed.wrapping_add(ci as u64);
        let sampling = tc.sampling(frames as f64 * FRAME_PERIOD)?;
        let mut slicer = FrameSlicer::new(&tc.scanner, &sampling);
        // Centers the expected sweep on boresight.
        let yaw0 = -0.5 * c * (frames - 1) as f64 * FRAME_PERIOD;
        let mut state = GimbalState::new(tc.max_speed, tc.plant.clone())?.pointing(yaw0, 0.0);
        let mut obs = Vec::with_capacity(frames);
        for k in 0..frames {
            let t0 = k as f64 * FRAME_PERIOD;
            let samples = slicer.until(t0 + FRAME_PERIOD)?;
            let mut rng = stream_rng(tc.seed, domain::TRACKING, k as u64);
            let ret = cast_frame(
                &samples,
                &empty,
                &path,
                tc.target_radius,
                &tc.mount,
                &state.orientation(),
                noise.as_ref().map(|n| (n, &mut rng)),
                tc.max_range,
            );
            let p = detect_intruder(&ret.points, &tc.region).ok_or_else(|| Error::CalibrationFailed {
                command: c,
                reason: format!("feature lost in frame {k}"),
            })?;
            obs.push((t0, p.y.atan2(p.x)));
            state = step_gimbal(&state, c, 0.0, FRAME_PERIOD);
        }
        rates.push(slope(&obs));
    }
    GainTable::new(commands, rates)
}

/// Least-squares slope of `y` on `x`.
fn slope(xy: &[(f64, f64)]) -> f64 {
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Expected fraction of a two-prism pattern's samples that fall on a disk of
/// angular radius `a` centered `c` from boresight (small-angle geometry).
///
/// Substituting `r = 2R sin(theta)` makes the radial measure uniform,
/// `(2 / pi) dtheta`; each radius contributes the share of its circle that
/// lies inside the disk.
pub fn disk_sample_fraction(c: f64, a: f64, deflection: f64) -> f64 {
    const STEPS: usize = 4000;
    let rim = 2.0 * deflection;
    let h = FRAC_PI_2 / STEPS as f64;
    let mut total = 0.0;
    for i in 0..STEPS {
        let r = rim * ((i as f64 + 0.5) * h).sin();
        let share = if c <= 1e-12 {
            (r <= a) as u8 as f64
        } else if r <= a - c {
            1.0
        } else if r <= (c - a).abs() || r >= c + a {
            0.0
        } else {
            ((r * r + c * c - a * a) / (2.0 * r * c)).clamp(-1.0, 1.0).acos() / PI
        };
        total += share;
    }
    total * h * 2.0 / PI
}

/// Per-frame target returns while a frozen gimbal watches a target cross.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileFrame {
    pub t: f64,
    /// Target bearing at the frame center, radians.
    pub azimuth: f64,
    pub count: usize,
    /// Count predicted by the analytic density over the target's footprint.
    pub expected: f64,
}

/// Settings for a frozen-gimbal horizontal pass.
#[derive(Clone, Debug)]
pub struct ProfileConfig {
    pub tracking: TrackingConfig,
    /// Distance of the pass from the gimbal, meters.
    pub range: f64,
    /// Target speed across the line of sight, m/s.
    pub speed: f64,
    /// Extra bearing beyond the FoV rim at both ends, radians.
    pub margin: f64,
}

impl ProfileConfig {
    pub fn new(seed: u64) -> Self {
        let region = DetectionRegion::new([1.0, -50.0, -50.0], [100.0, 50.0, 50.0]).expect("static region");
        let mut tracking = TrackingConfig::new(region, 1.0);
        tracking.seed = seed;
        ProfileConfig {
            tracking,
            range: 10.0,
            speed: 0.5,
            margin: 2f64.to_radians(),
        }
    }
}

/// Counts target returns frame by frame as the target crosses the FoV
/// horizontally through boresight at fixed range, with no background.
pub fn points_on_target_profile(config: &ProfileConfig) -> Result<Vec<ProfileFrame>> {
    let tc = &config.tracking;
    let half = tc.scanner.paraxial_half_fov() + config.margin;
    let y_max = config.range * half.tan();
    let duration = 2.0 * y_max / config.speed;
    let frames = (duration / FRAME_PERIOD).ceil() as usize;
    let (range, speed, radius) = (config.range, config.speed, tc.target_radius);
    let mount = tc.mount;
    let local = move |t: f64| Vector3::new(range, -y_max + speed * t, 0.0);
    let path = move |t: f64| mount.transform_point(&local(t));
    let sampling = tc.sampling(frames as f64 * FRAME_PERIOD)?;
    let mut slicer = FrameSlicer::new(&tc.scanner, &sampling);
    let noise = noise_for(tc.range_noise_std)?;
    let empty = Scene::default();
    let frozen = Matrix3::identity();
    let per_frame = tc.rate_hz * FRAME_PERIOD * tc.scanner.channel_count() as f64;
    let deflection = 0.5 * tc.scanner.paraxial_half_fov();
    let mut out = Vec::with_capacity(frames);
    for k in 0..frames {
        let t0 = k as f64 * FRAME_PERIOD;
        let samples = slicer.until(t0 + FRAME_PERIOD)?;
        let mut rng = stream_rng(tc.seed, domain::TRACKING, k as u64);
        let ret = cast_frame(
            &samples,
            &empty,
            &path,
            radius,
            &tc.mount,
            &frozen,
            noise.as_ref().map(|n| (n, &mut rng)),
            tc.max_range,
        );
        let center = local(t0 + 0.5 * FRAME_PERIOD);
        let azimuth = center.y.atan2(center.x);
        let off = (center.y.hypot(center.z)).atan2(center.x);
        let a = (radius / center.norm()).asin();
        out.push(ProfileFrame {
            t: t0,
            azimuth,
            count: ret.target_hits,
            expected: per_frame * disk_sample_fraction(off, a, deflection),
        });
    }
    Ok(out)
}

/// Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len()) as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(x: f64, y: f64, z: f64) -> Vector3<f64> {
        Vector3::new(x, y, z)
    }

    fn everywhere() -> DetectionRegion {
        DetectionRegion::new([-1e3; 3], [1e3; 3]).unwrap()
    }

    #[test]
    fn region_rejects_empty_boxes() {
        assert!(DetectionRegion::new([0.0; 3], [1.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn detection_examples() {
        let r = DetectionRegion::new([0.0; 3], [10.0; 3]).unwrap();
        assert_eq!(detect_intruder(&[v(-1.0, 1.0, 1.0)], &r), None);
        assert_eq!(detect_intruder(&[], &r), None);
        let p = detect_intruder(&[v(1.0, 2.0, 3.0), v(2.0, 1.0, 1.0), v(3.0, 3.0, 2.0), v(20.0, 0.0, 0.0)], &r);
        assert_eq!(p, Some(v(2.0, 2.0, 2.0)));
    }

    #[test]
    fn median_survives_outliers() {
        let target: Vec<Vector3<f64>> = (0..9)
            .map(|i| v(20.0 + 0.01 * i as f64, -0.1 + 0.02 * (i % 3) as f64, 2.0 + 0.03 * (i % 4) as f64))
            .collect();
        let mut pts = target.clone();
        pts.extend([v(39.0, 7.0, 5.0), v(9.0, -7.0, -0.9), v(39.0, -7.0, 5.0), v(9.0, 7.0, -0.9)]);
        let r = DetectionRegion::new([8.0, -8.0, -1.0], [40.0, 8.0, 6.0]).unwrap();
        let p = detect_intruder(&pts, &r).unwrap();
        for i in 0..3 {
            let lo = target.iter().map(|q| q[i]).fold(f64::INFINITY, f64::min);
            let hi = target.iter().map(|q| q[i]).fold(f64::NEG_INFINITY, f64::max);
            assert!(p[i] >= lo && p[i] <= hi);
        }
    }

    proptest! {
        #[test]
        fn detection_is_order_free_and_bounded(
            raw in prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64), 1..40),
            rot in 0usize..40,
        ) {
            let pts: Vec<Vector3<f64>> = raw.iter().map(|&(x, y, z)| v(x, y, z)).collect();
            let mut shuffled = pts.clone();
            shuffled.rotate_left(rot % pts.len());
            shuffled.reverse();
            let a = detect_intruder(&pts, &everywhere()).unwrap();
            let b = detect_intruder(&shuffled, &everywhere()).unwrap();
            prop_assert_eq!(a, b);
            for i in 0..3 {
                prop_assert!(pts.iter().any(|p| p[i] <= a[i]) && pts.iter().any(|p| p[i] >= a[i]));
            }
        }

        #[test]
        fn command_is_odd(x in 0.5..50.0f64, y in -40.0..40.0f64, z in -40.0..40.0f64) {
            let a = tracking_command(&v(x, y, z), 2.0, 3.0, DEFAULT_DEADBAND).unwrap();
            let b = tracking_command(&v(x, -y, -z), 2.0, 3.0, DEFAULT_DEADBAND).unwrap();
            prop_assert_eq!(a.v_yaw, -b.v_yaw);
            prop_assert_eq!(a.v_pitch, -b.v_pitch);
        }
    }

    #[test]
    fn command_examples() {
        let c = tracking_command(&v(5.0, 0.0, 0.0), 2.0, 2.0, DEFAULT_DEADBAND).unwrap();
        assert_eq!((c.v_yaw, c.v_pitch), (0.0, 0.0));
        let c = tracking_command(&v(3.0, 3.0, 0.0), 1.5, 2.0, DEFAULT_DEADBAND).unwrap();
        assert!((c.e_yaw - PI / 4.0).abs() < 1e-15);
        assert!((c.v_yaw + 1.5 * PI / 4.0).abs() < 1e-15);
        assert_eq!(c.v_pitch, 0.0);
        let one = 1f64.to_radians().tan();
        let c = tracking_command(&v(10.0, 10.0 * one, 10.0 * one), 2.0, 2.0, DEFAULT_DEADBAND).unwrap();
        assert_eq!((c.v_yaw, c.v_pitch), (0.0, 0.0));
        assert!(matches!(
            tracking_command(&v(0.0, 1.0, 0.0), 2.0, 2.0, DEFAULT_DEADBAND),
            Err(Error::BehindSensor { .. })
        ));
        assert!(matches!(
            tracking_command(&v(-3.0, 1.0, 0.0), 2.0, 2.0, DEFAULT_DEADBAND),
            Err(Error::BehindSensor { .. })
        ));
    }

    #[test]
    fn gimbal_steps() {
        let g = GimbalState::new(1.0, RateResponse::default()).unwrap().pointing(0.3, -0.2);
        let same = step_gimbal(&g, 0.0, 0.0, 0.5);
        assert!((same.yaw - 0.3).abs() < 1e-15 && (same.pitch + 0.2).abs() < 1e-15);
        let moved = step_gimbal(&GimbalState::new(1.0, RateResponse::default()).unwrap(), 0.1, 0.0, 1.0);
        assert!((moved.yaw - 0.1).abs() < 1e-15);
        let fast = step_gimbal(&g, 5.0, -7.0, 0.1);
        assert!((fast.yaw - 0.4).abs() < 1e-12 && (fast.pitch + 0.3).abs() < 1e-12);
        assert_eq!(fast.rates(), (1.0, -1.0));
        let wrapped = step_gimbal(&g.clone().pointing(3.1, 0.0), 1.0, 0.0, 0.1);
        assert!(wrapped.yaw < 0.0 && (wrapped.yaw - (3.2 - 2.0 * PI)).abs() < 1e-12);
        let pinned = step_gimbal(&g.pointing(0.0, 1.5), 0.0, 1.0, 1.0);
        assert_eq!(pinned.pitch, FRAC_PI_2);
    }

    #[test]
    fn orientation_moves_against_the_error() {
        // Positive yaw turns toward negative y, positive pitch toward negative z.
        let r = gimbal_rotation(0.1, 0.0);
        assert!((r * Vector3::x()).y < 0.0);
        let r = gimbal_rotation(0.0, 0.1);
        assert!((r * Vector3::x()).z < 0.0);
    }

    #[test]
    fn gain_table_interpolates_and_inverts() {
        let t = GainTable::new(vec![-1.0, 0.0, 0.5, 1.0], vec![-0.8, 0.0, 0.45, 0.82]).unwrap();
        assert!((t.rate(0.25) - 0.225).abs() < 1e-15);
        assert!((t.rate(2.0) - (0.82 + 0.37 * 2.0)).abs() < 1e-12);
        for c in [-1.5, -0.3, 0.0, 0.7, 1.4] {
            assert!((t.command_for(t.rate(c)).unwrap() - c).abs() < 1e-12);
        }
        assert!(GainTable::new(vec![0.0, 0.0], vec![0.0, 1.0]).is_err());
        let flat = GainTable::new(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 1.0]).unwrap();
        assert_eq!(flat.command_for(0.5), None);
        let poly = RateResponse::Polynomial {
            coefficients: vec![0.0, 0.8, 0.02],
        };
        assert!((poly.rate(0.5) - 0.405).abs() < 1e-15);
    }

    #[test]
    fn waypoints_interpolate_and_hold() {
        let p = WaypointPath::new(vec![
            Waypoint { t: 1.0, position: [0.0, 0.0, 0.0] },
            Waypoint { t: 3.0, position: [2.0, 4.0, 0.0] },
        ])
        .unwrap();
        assert_eq!(p.position(0.0), v(0.0, 0.0, 0.0));
        assert_eq!(p.position(2.0), v(1.0, 2.0, 0.0));
        assert_eq!(p.position(9.0), v(2.0, 4.0, 0.0));
        assert!(WaypointPath::new(vec![]).is_err());
    }

    fn rate_config() -> RateCalibrationConfig {
        let mut c = RateCalibrationConfig::new(5);
        c.tracking.rate_hz = 50_000.0;
        c
    }

    #[test]
    fn unit_gimbal_calibrates_to_identity() {
        let t = calibrate_gimbal_rates(&[0.0, 0.2], &rate_config()).unwrap();
        assert!(t.rates()[0].abs() < 2e-3, "{:?}", t.rates());
        assert!((t.rates()[1] - 0.2).abs() < 0.01, "{:?}", t.rates());
    }

    #[test]
    fn nonlinear_gimbal_table_matches_truth() {
        let mut c = rate_config();
        let truth = RateResponse::Polynomial {
            coefficients: vec![0.0, 0.8, 0.02],
        };
        c.tracking.plant = truth.clone();
        let cmds = [-1.0, -0.6, -0.3, -0.1, 0.1, 0.3, 0.6, 1.0];
        let t = calibrate_gimbal_rates(&cmds, &c).unwrap();
        for i in 0..=40 {
            let cmd = -1.0 + 0.05 * i as f64;
            if cmd.abs() < 0.05 {
                continue;
            }
            let want = truth.rate(cmd);
            assert!((t.rate(cmd) - want).abs() < 0.05 * want.abs(), "{cmd}: {} vs {want}", t.rate(cmd));
        }
    }

    #[test]
    fn lost_feature_fails_calibration() {
        let mut c = rate_config();
        c.feature = Vector3::new(30.0, 0.0, 0.0);
        match calibrate_gimbal_rates(&[0.3], &c) {
            Err(Error::CalibrationFailed { command, .. }) => assert_eq!(command, 0.3),
            other => panic!("{other:?}"),
        }
    }

    fn episode_config(duration: f64) -> TrackingConfig {
        let region = DetectionRegion::new([8.0, -8.0, -4.0], [40.0, 8.0, 6.0]).unwrap();
        let mut c = TrackingConfig::new(region, duration);
        c.rate_hz = 50_000.0;
        c.range_noise_std = 0.0;
        c
    }

    #[test]
    fn static_target_at_boresight_never_moves_the_gimbal() {
        let c = episode_config(3.0);
        let path = |_t: f64| v(15.0, 0.0, 0.0);
        let ep = run_tracking_episode(&path, &Scene::default(), &c).unwrap();
        assert_eq!(ep.log.rows.len(), 30);
        for (k, r) in ep.log.rows.iter().enumerate() {
            assert!((r.t - k as f64 * FRAME_PERIOD).abs() < 1e-12);
            assert_eq!(r.status, TrackStatus::Tracking);
            assert!(r.e_yaw.unwrap().abs() < c.deadband && r.e_pitch.unwrap().abs() < c.deadband);
            assert_eq!((r.v_yaw, r.v_pitch, r.yaw, r.pitch), (0.0, 0.0, 0.0, 0.0));
        }
        let mut wide = c.clone();
        wide.deadband = 3f64.to_radians();
        let ep2 = run_tracking_episode(&path, &Scene::default(), &wide).unwrap();
        assert_eq!(ep.recovered, ep2.recovered);
    }

    #[test]
    fn static_target_errors_shrink_until_the_deadband() {
        for k in [2.0, 15.0] {
            let mut c = episode_config(3.0);
            c.gain_yaw = k;
            c.gain_pitch = k;
            let path = |_t: f64| v(15.0, 15.0 * 0.15f64.tan(), -15.0 * 0.08f64.tan());
            let ep = run_tracking_episode(&path, &Scene::default(), &c).unwrap();
            for axis in 0..2 {
                let e: Vec<f64> = ep
                    .log
                    .rows
                    .iter()
                    .map(|r| if axis == 0 { r.e_yaw } else { r.e_pitch }.unwrap().abs())
                    .collect();
                let n = e.iter().position(|&x| x < c.deadband).expect("enters the deadband");
                assert!(e[..=n].windows(2).all(|w| w[1] < w[0]), "k = {k}, axis {axis}: {e:?}");
            }
        }
    }

    #[test]
    fn recovered_positions_follow_the_target() {
        let mut c = episode_config(2.0);
        c.range_noise_std = 0.02;
        c.mount = Pose::from_translation(v(1.0, -2.0, 1.5));
        let path = |t: f64| v(21.0, -1.0 + 0.3 * t, 2.5);
        let ep = run_tracking_episode(&path, &Scene::default(), &c).unwrap();
        assert!(trajectory_rms(&ep.recovered, &path) < 0.3);
    }

    #[test]
    fn disk_fraction_matches_limits() {
        let d = 9.18f64.to_radians();
        assert!((disk_sample_fraction(0.0, 2.0 * d, d) - 1.0).abs() < 1e-9);
        assert!((disk_sample_fraction(0.0, d, d) - analytic_cdf_half()).abs() < 1e-3);
        assert_eq!(disk_sample_fraction(2.5 * d, 0.1 * d, d), 0.0);
        // A thin disk on the ring r picks up density ~ pdf(r) / (2 pi r) per area.
        let (c, a) = (d, 0.01 * d);
        let pdf = 2.0 / PI / (4.0 * d * d - c * c).sqrt();
        let want = pdf / (2.0 * PI * c) * PI * a * a;
        assert!((disk_sample_fraction(c, a, d) / want - 1.0).abs() < 0.02);
    }

    fn analytic_cdf_half() -> f64 {
        crate::density::analytic_radial_cdf(0.5)
    }

    #[test]
    fn profile_peaks_at_center_and_vanishes_outside() {
        let mut c = ProfileConfig::new(2);
        c.tracking.rate_hz = 50_000.0;
        let prof = points_on_target_profile(&c).unwrap();
        assert_eq!(prof.first().unwrap().count, 0);
        assert_eq!(prof.last().unwrap().count, 0);
        let center = prof
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.azimuth.abs().total_cmp(&b.1.azimuth.abs()))
            .unwrap()
            .0;
        let window = &prof[center - 6..=center + 6];
        let best = window.iter().map(|p| p.count).max().unwrap();
        assert!(best == prof[center].count || best == prof[center - 1].count || best == prof[center + 1].count);
        assert!(prof[center].count > 3 * prof[center - 6].count);
    }
}
