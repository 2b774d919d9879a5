//! JSON documents read by the subcommands.
//!
//! Angles are degrees and rotor speeds rpm; everything converts to radians
//! and rad/s on the way in. Every document rejects unknown keys, and every
//! field has a default, so `{}` is a valid config for each subcommand.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calibration::experiment::{default_extrinsic, room_lidar_home, ExperimentConfig};
use crate::calibration::imu::{ImuModel, PoseSequence, Stop};
use crate::calibration::registration::IcpConfig;
use crate::density::linspace;
use crate::error::{Error, Result};
use crate::optics::{PrismSpec, SteeringModel};
use crate::pattern::{
    array_offsets, rpm_to_rad_s, ArrayOrientation, ArraySpec, RotorConfig, SamplingConfig, Scanner,
    DEFAULT_CONTROL_TICK_S, DEFAULT_RATE_HZ, REFERENCE_RPM,
};
use crate::scene::{Scene, DEFAULT_FRAME_LEN, DEFAULT_MAX_RANGE, DEFAULT_RANGE_NOISE};
use crate::se3::Pose;
use crate::tracking::{
    DetectionRegion, GainTable, RateResponse, TrackingConfig, Waypoint, WaypointPath, DEFAULT_DEADBAND,
    DEFAULT_GAIN, DEFAULT_MAX_SPEED, TARGET_RADIUS,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrismJson {
    pub n: f64,
    pub wedge_deg: f64,
}

impl Default for PrismJson {
    fn default() -> Self {
        PrismJson { n: 1.51, wedge_deg: 18.0 }
    }
}

impl PrismJson {
    pub fn build(&self) -> Result<PrismSpec> {
        PrismSpec::new(self.n, self.wedge_deg.to_radians())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RotorJson {
    pub rpm: f64,
    #[serde(default)]
    pub phase_deg: f64,
    /// Speed noise standard deviation as a fraction of the speed.
    #[serde(default)]
    pub noise_fraction: f64,
}

impl RotorJson {
    fn rpm(rpm: f64) -> Self {
        RotorJson {
            rpm,
            phase_deg: 0.0,
            noise_fraction: 0.0,
        }
    }

    pub fn build(&self) -> Result<RotorConfig> {
        RotorConfig::new(rpm_to_rad_s(self.rpm), self.phase_deg.to_radians(), self.noise_fraction)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArrayJson {
    pub count: usize,
    pub pitch_deg: f64,
    pub orientation: ArrayOrientation,
}

impl Default for ArrayJson {
    fn default() -> Self {
        ArrayJson {
            count: 1,
            pitch_deg: 0.0,
            orientation: ArrayOrientation::Horizontal,
        }
    }
}

impl ArrayJson {
    pub fn build(&self) -> Result<ArraySpec> {
        if self.count == 1 && self.pitch_deg == 0.0 {
            return Ok(ArraySpec::single());
        }
        array_offsets(self.count, self.pitch_deg.to_radians(), self.orientation)
    }
}

/// Prisms in optical order with one rotor each.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScannerJson {
    pub prisms: Vec<PrismJson>,
    pub rotors: Vec<RotorJson>,
    pub model: SteeringModel,
    pub array: ArrayJson,
}

impl Default for ScannerJson {
    fn default() -> Self {
        ScannerJson {
            prisms: vec![PrismJson::default(); 2],
            rotors: vec![RotorJson::rpm(REFERENCE_RPM.0), RotorJson::rpm(REFERENCE_RPM.1)],
            model: SteeringModel::Paraxial,
            array: ArrayJson::default(),
        }
    }
}

impl ScannerJson {
    pub fn build(&self) -> Result<Scanner> {
        let prisms = self.prisms.iter().map(PrismJson::build).collect::<Result<_>>()?;
        let rotors = self.rotors.iter().map(RotorJson::build).collect::<Result<_>>()?;
        Scanner::new(prisms, rotors, self.array.build()?, self.model)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingJson {
    pub rate_hz: f64,
    pub duration_s: f64,
    pub control_tick_s: f64,
}

impl SamplingJson {
    fn lasting(duration_s: f64) -> Self {
        SamplingJson {
            rate_hz: DEFAULT_RATE_HZ,
            duration_s,
            control_tick_s: DEFAULT_CONTROL_TICK_S,
        }
    }

    pub fn build(&self, seed: u64) -> Result<SamplingConfig> {
        SamplingConfig::new(self.rate_hz, self.duration_s, self.control_tick_s, seed)
    }
}

impl Default for SamplingJson {
    fn default() -> Self {
        Self::lasting(1.0)
    }
}

/// `"room"`, `"empty"`, a path to a scene JSON file, or an inline scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SceneJson {
    Named(String),
    Inline(Scene),
}

impl SceneJson {
    /// Relative paths resolve against `base`, the config file's directory.
    pub fn build(&self, base: &Path) -> Result<Scene> {
        match self {
            SceneJson::Named(name) if name == "room" => Ok(Scene::room()),
            SceneJson::Named(name) if name == "empty" => Ok(Scene::default()),
            SceneJson::Named(path) => {
                let p = PathBuf::from(path);
                Scene::load(&if p.is_relative() { base.join(p) } else { p })
            }
            SceneJson::Inline(scene) => {
                scene.validate()?;
                Ok(scene.clone())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PatternJson {
    pub scanner: ScannerJson,
    pub sampling: SamplingJson,
    /// Also write `projection.csv` with azimuth and polar angle per sample.
    pub projection: bool,
}

impl Default for PatternJson {
    fn default() -> Self {
        PatternJson {
            scanner: ScannerJson::default(),
            sampling: SamplingJson::lasting(0.1),
            projection: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DensityJson {
    pub scanner: ScannerJson,
    pub sampling: SamplingJson,
    pub bins: usize,
    /// Bins left out at each end of the RMS comparison.
    pub exclude_bins: usize,
}

impl Default for DensityJson {
    fn default() -> Self {
        DensityJson {
            scanner: ScannerJson::default(),
            sampling: SamplingJson::lasting(10.0),
            bins: 50,
            exclude_bins: 2,
        }
    }
}

/// Picks the measurement rate giving `coverage_pct` after `at_s` seconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateTargetJson {
    pub at_s: f64,
    pub coverage_pct: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoverageJson {
    pub scanner: ScannerJson,
    pub sampling: SamplingJson,
    pub resolution: usize,
    /// Spacing of the reported curve, seconds.
    pub step_s: f64,
    /// Reported as the first time coverage reaches this level.
    pub threshold_pct: f64,
    /// Overrides `sampling.rate_hz` when present.
    pub rate_target: Option<RateTargetJson>,
}

impl Default for CoverageJson {
    fn default() -> Self {
        CoverageJson {
            scanner: ScannerJson::default(),
            sampling: SamplingJson::lasting(10.0),
            resolution: 100,
            step_s: 0.01,
            threshold_pct: 90.0,
            rate_target: None,
        }
    }
}

/// `steps` evenly spaced values from `from` to `to` inclusive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeJson {
    pub from: f64,
    pub to: f64,
    pub steps: usize,
}

impl RangeJson {
    pub fn values(&self) -> Result<Vec<f64>> {
        if self.steps == 0 || !self.from.is_finite() || !self.to.is_finite() {
            return Err(Error::Config("speed range needs finite ends and at least one step".into()));
        }
        Ok(linspace(self.from, self.to, self.steps))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepJson {
    pub prism: PrismJson,
    pub rpm1: RangeJson,
    pub rpm2: RangeJson,
    pub noise_fraction: f64,
    pub threshold_pct: f64,
    pub cap_s: f64,
    pub rate_hz: f64,
    pub control_tick_s: f64,
}

impl Default for SweepJson {
    /// Counter-rotating rotors from 1000 to 10000 rpm each way.
    fn default() -> Self {
        SweepJson {
            prism: PrismJson::default(),
            rpm1: RangeJson {
                from: 1000.0,
                to: 10000.0,
                steps: 20,
            },
            rpm2: RangeJson {
                from: -1000.0,
                to: -10000.0,
                steps: 20,
            },
            noise_fraction: 0.01,
            threshold_pct: 90.0,
            cap_s: 5.0,
            rate_hz: DEFAULT_RATE_HZ,
            control_tick_s: DEFAULT_CONTROL_TICK_S,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanJson {
    pub scanner: ScannerJson,
    pub sampling: SamplingJson,
    pub scene: SceneJson,
    /// World-from-lidar pose, held for the whole scan.
    pub pose: Pose,
    pub range_noise_m: f64,
    pub max_range_m: f64,
    pub frame_len_s: f64,
    /// Also write the points as `cloud.csv`.
    pub csv: bool,
}

impl Default for ScanJson {
    fn default() -> Self {
        ScanJson {
            scanner: ScannerJson::default(),
            sampling: SamplingJson::lasting(1.0),
            scene: SceneJson::Named("room".into()),
            pose: room_lidar_home(),
            range_noise_m: DEFAULT_RANGE_NOISE,
            max_range_m: DEFAULT_MAX_RANGE,
            frame_len_s: DEFAULT_FRAME_LEN,
            csv: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrateJson {
    pub scene: SceneJson,
    /// World-from-IMU stops; the default is the six-pose sequence.
    pub stops: Option<Vec<Stop>>,
    /// Dwell of the default sequence, seconds.
    pub dwell_s: f64,
    pub move_duration_s: f64,
    /// True IMU-to-lidar extrinsic.
    pub extrinsic: Pose,
    pub imu: ImuModel,
    pub scanner: ScannerJson,
    pub rate_hz: f64,
    pub control_tick_s: f64,
    pub accumulation_times_s: Vec<f64>,
    /// Replicates; seeds are `--seed`, `--seed + 1`, and so on.
    pub seeds: u64,
    pub range_noise_m: f64,
    pub max_range_m: f64,
    pub beam_cell_deg: f64,
    pub reference_duration_s: f64,
    pub reference_seed: u64,
    pub icp: IcpConfig,
}

impl Default for CalibrateJson {
    fn default() -> Self {
        let d = ExperimentConfig::room_default();
        CalibrateJson {
            scene: SceneJson::Named("room".into()),
            stops: None,
            dwell_s: 10.0,
            move_duration_s: d.sequence.move_duration,
            extrinsic: default_extrinsic(),
            imu: d.imu,
            scanner: ScannerJson::default(),
            rate_hz: d.rate_hz,
            control_tick_s: d.control_tick_s,
            accumulation_times_s: d.accumulation_times,
            seeds: 20,
            range_noise_m: d.range_noise_std,
            max_range_m: d.max_range,
            beam_cell_deg: d.beam_cell.to_degrees(),
            reference_duration_s: d.reference_duration,
            reference_seed: d.reference_seed,
            icp: d.icp,
        }
    }
}

impl CalibrateJson {
    pub fn build(&self, seed: u64, base: &Path) -> Result<ExperimentConfig> {
        let sequence = match &self.stops {
            Some(stops) => PoseSequence {
                stops: stops.clone(),
                move_duration: self.move_duration_s,
                extrinsic: self.extrinsic,
            },
            None => {
                let mut s = PoseSequence::six_pose(room_lidar_home() * self.extrinsic, self.extrinsic, self.dwell_s);
                s.move_duration = self.move_duration_s;
                s
            }
        };
        if self.seeds == 0 {
            return Err(Error::Config("need at least one seed".into()));
        }
        let config = ExperimentConfig {
            scene: self.scene.build(base)?,
            sequence,
            imu: self.imu,
            scanner: self.scanner.build()?,
            rate_hz: self.rate_hz,
            control_tick_s: self.control_tick_s,
            accumulation_times: self.accumulation_times_s.clone(),
            seeds: (0..self.seeds).map(|i| seed.wrapping_add(i)).collect(),
            range_noise_std: self.range_noise_m,
            max_range: self.max_range_m,
            beam_cell: self.beam_cell_deg.to_radians(),
            reference_duration: self.reference_duration_s,
            reference_seed: self.reference_seed,
            icp: self.icp,
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GimbalJson {
    pub gain_yaw: f64,
    pub gain_pitch: f64,
    pub deadband_deg: f64,
    pub max_speed_rad_s: f64,
    pub pitch_limit_deg: f64,
    pub initial_yaw_deg: f64,
    pub initial_pitch_deg: f64,
}

impl Default for GimbalJson {
    fn default() -> Self {
        GimbalJson {
            gain_yaw: DEFAULT_GAIN,
            gain_pitch: DEFAULT_GAIN,
            deadband_deg: DEFAULT_DEADBAND.to_degrees(),
            max_speed_rad_s: DEFAULT_MAX_SPEED,
            pitch_limit_deg: 90.0,
            initial_yaw_deg: 0.0,
            initial_pitch_deg: 0.0,
        }
    }
}

/// A frozen-gimbal pass recorded alongside the episode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProfileJson {
    pub range_m: f64,
    pub speed_m_s: f64,
    pub margin_deg: f64,
}

impl Default for ProfileJson {
    fn default() -> Self {
        ProfileJson {
            range_m: 10.0,
            speed_m_s: 0.5,
            margin_deg: 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackJson {
    /// Detection box in the gimbal frame (x forward, z up), meters.
    pub region: DetectionRegion,
    pub waypoints: Vec<Waypoint>,
    pub scene: SceneJson,
    /// World pose of the gimbal center.
    pub mount: Pose,
    pub gimbal: GimbalJson,
    /// True actuator response, rad/s per rad/s of command.
    pub plant: RateResponse,
    /// Command-to-rate table the controller inverts; unit when absent.
    pub gain_table: Option<GainTable>,
    /// When present, measure the table at these commands (rad/s) first and
    /// use it in place of `gain_table`.
    pub calibrate_commands: Option<Vec<f64>>,
    pub scanner: ScannerJson,
    pub rate_hz: f64,
    pub target_radius_m: f64,
    pub duration_s: f64,
    pub range_noise_m: f64,
    pub max_range_m: f64,
    pub profile: Option<ProfileJson>,
}

impl Default for TrackJson {
    /// A target crossing 20 m out at 0.4 m/s, 1 m above a 1.5 m mount.
    fn default() -> Self {
        TrackJson {
            region: DetectionRegion {
                min: [8.0, -8.0, -1.0],
                max: [40.0, 8.0, 6.0],
            },
            waypoints: vec![
                Waypoint {
                    t: 0.0,
                    position: [20.0, -4.0, 2.5],
                },
                Waypoint {
                    t: 20.0,
                    position: [20.0, 4.0, 2.5],
                },
            ],
            scene: SceneJson::Inline(ground_plane()),
            mount: Pose::from_translation([0.0, 0.0, 1.5].into()),
            gimbal: GimbalJson::default(),
            plant: RateResponse::default(),
            gain_table: None,
            calibrate_commands: None,
            scanner: ScannerJson::default(),
            rate_hz: DEFAULT_RATE_HZ,
            target_radius_m: TARGET_RADIUS,
            duration_s: 15.0,
            range_noise_m: DEFAULT_RANGE_NOISE,
            max_range_m: DEFAULT_MAX_RANGE,
            profile: None,
        }
    }
}

fn ground_plane() -> Scene {
    let mut s = Scene::default();
    s.push(
        crate::scene::Primitive::Plane {
            normal: [0.0, 0.0, 1.0],
            offset: 0.0,
        },
        0.2,
    )
    .expect("valid plane");
    s
}

impl TrackJson {
    pub fn path(&self) -> Result<WaypointPath> {
        WaypointPath::new(self.waypoints.clone())
    }

    /// Tracking settings with the unit or configured gain table.
    pub fn build(&self, seed: u64, base: &Path) -> Result<(TrackingConfig, Scene)> {
        let mut c = TrackingConfig::new(self.region, self.duration_s);
        c.scanner = self.scanner.build()?;
        c.rate_hz = self.rate_hz;
        c.gain_yaw = self.gimbal.gain_yaw;
        c.gain_pitch = self.gimbal.gain_pitch;
        c.deadband = self.gimbal.deadband_deg.to_radians();
        c.max_speed = self.gimbal.max_speed_rad_s;
        c.initial_yaw = self.gimbal.initial_yaw_deg.to_radians();
        c.initial_pitch = self.gimbal.initial_pitch_deg.to_radians();
        c.plant = self.plant.clone();
        if let Some(t) = &self.gain_table {
            c.calibration = t.clone();
        }
        c.mount = self.mount;
        c.target_radius = self.target_radius_m;
        c.range_noise_std = self.range_noise_m;
        c.max_range = self.max_range_m;
        c.pitch_limit = self.gimbal.pitch_limit_deg.to_radians();
        c.seed = seed;
        c.validate()?;
        Ok((c, self.scene.build(base)?))
    }
}
