//! Synthetic scenes, ray casting, and conversion of scan patterns into
//! time-stamped point clouds.

use std::path::Path;

use nalgebra::Vector3;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pattern::Sample;
use crate::rng::{domain, stream_rng};
use crate::se3::{Pose, UnitVec3};

/// Detection range of an 80% reflectivity target, meters.
pub const DEFAULT_MAX_RANGE: f64 = 260.0;
/// Standard deviation of additive range noise, meters.
pub const DEFAULT_RANGE_NOISE: f64 = 0.02;
/// Length of one point-cloud frame, seconds.
pub const DEFAULT_FRAME_LEN: f64 = 0.1;

/// Smallest accepted intersection distance; avoids self-hits at the origin.
const MIN_HIT: f64 = 1e-9;

/// Geometric primitive in world coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum Primitive {
    /// Points with `normal . p = offset`.
    Plane { normal: [f64; 3], offset: f64 },
    Sphere { center: [f64; 3], radius: f64 },
    /// Axis-aligned box.
    Box { min: [f64; 3], max: [f64; 3] },
}

impl Primitive {
    fn validate(&self) -> Result<()> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            Primitive::Plane { normal, offset } => {
                let n = Vector3::from(*normal).norm();
                if !finite(normal) || !offset.is_finite() || n == 0.0 {
                    return Err(Error::config("plane needs a finite nonzero normal and finite offset"));
                }
            }
            Primitive::Sphere { center, radius } => {
                if !finite(center) || !(*radius > 0.0 && radius.is_finite()) {
                    return Err(Error::config("sphere needs a finite center and positive radius"));
                }
            }
            Primitive::Box { min, max } => {
                if !finite(min) || !finite(max) || (0..3).any(|i| min[i] >= max[i]) {
                    return Err(Error::config("box needs finite corners with min < max"));
                }
            }
        }
        Ok(())
    }

    /// Nearest intersection distance along the ray beyond `MIN_HIT`.
    pub fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        match self {
            Primitive::Plane { normal, offset } => {
                let n = Vector3::from(*normal);
                let len = n.norm();
                let denom = n.dot(dir) / len;
                if denom == 0.0 {
                    return None;
                }
                let t = (offset / len - n.dot(origin) / len) / denom;
                (t > MIN_HIT).then_some(t)
            }
            Primitive::Sphere { center, radius } => {
                let oc = origin - Vector3::from(*center);
                let b = oc.dot(dir);
                let c = oc.norm_squared() - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let root = disc.sqrt();
                // Stable pair of roots.
                let q = -b - b.signum() * root;
                let (t0, t1) = if q == 0.0 { (0.0, 0.0) } else { (q, c / q) };
                let (near, far) = if t0 < t1 { (t0, t1) } else { (t1, t0) };
                if near > MIN_HIT {
                    Some(near)
                } else if far > MIN_HIT {
                    Some(far)
                } else {
                    None
                }
            }
            Primitive::Box { min, max } => intersect_box_faces(origin, dir, min, max),
        }
    }

    /// Value of the implicit surface function at `p`; zero on the surface.
    pub fn implicit(&self, p: &Vector3<f64>) -> f64 {
        match self {
            Primitive::Plane { normal, offset } => {
                let n = Vector3::from(*normal);
                (n.dot(p) - offset) / n.norm()
            }
            Primitive::Sphere { center, radius } => (p - Vector3::from(*center)).norm() - radius,
            Primitive::Box { min, max } => {
                // Signed distance of an axis-aligned box.
                let c = (Vector3::from(*min) + Vector3::from(*max)) * 0.5;
                let h = (Vector3::from(*max) - Vector3::from(*min)) * 0.5;
                let q = (p - c).abs() - h;
                q.sup(&Vector3::zeros()).norm() + q.max().min(0.0)
            }
        }
    }
}

/// Intersects the six faces of a box one by one: each face plane is hit,
/// then the hit is kept if it lies inside the face rectangle.
fn intersect_box_faces(origin: &Vector3<f64>, dir: &Vector3<f64>, min: &[f64; 3], max: &[f64; 3]) -> Option<f64> {
    let mut best: Option<f64> = None;
    for axis in 0..3 {
        if dir[axis] == 0.0 {
            continue;
        }
        for bound in [min[axis], max[axis]] {
            let t = (bound - origin[axis]) / dir[axis];
            if t <= MIN_HIT || best.is_some_and(|b| t >= b) {
                continue;
            }
            let p = origin + dir * t;
            let inside = (0..3)
                .filter(|&k| k != axis)
                .all(|k| p[k] >= min[k] && p[k] <= max[k]);
            if inside {
                best = Some(t);
            }
        }
    }
    best
}

/// A primitive with its surface reflectivity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Object {
    #[serde(flatten)]
    pub primitive: Primitive,
    pub reflectivity: f64,
}

/// A collection of objects.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub objects: Vec<Object>,
}

impl Scene {
    pub fn new(objects: Vec<Object>) -> Result<Self> {
        let scene = Scene { objects };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, o) in self.objects.iter().enumerate() {
            o.primitive
                .validate()
                .map_err(|e| Error::config(format!("object {i}: {e}")))?;
            if !(0.0..=1.0).contains(&o.reflectivity) {
                return Err(Error::config(format!(
                    "object {i}: reflectivity {} outside [0, 1]",
                    o.reflectivity
                )));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let scene: Scene = serde_json::from_str(text)?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn push(&mut self, primitive: Primitive, reflectivity: f64) -> Result<()> {
        let o = Object {
            primitive,
            reflectivity,
        };
        self.objects.push(o);
        self.validate()
    }

    /// An indoor room for calibration experiments.
    ///
    /// A 8 m x 6 m x 3 m box with the floor at z = 0, furnished with boxes and
    /// spheres so that every rotation and translation axis is constrained.
    pub fn room() -> Self {
        let plane = |n: [f64; 3], d: f64, r: f64| Object {
            primitive: Primitive::Plane { normal: n, offset: d },
            reflectivity: r,
        };
        let cube = |min: [f64; 3], max: [f64; 3], r: f64| Object {
            primitive: Primitive::Box { min, max },
            reflectivity: r,
        };
        let ball = |c: [f64; 3], radius: f64, r: f64| Object {
            primitive: Primitive::Sphere { center: c, radius },
            reflectivity: r,
        };
        Scene {
            objects: vec![
                plane([1.0, 0.0, 0.0], 5.0, 0.6),
                plane([1.0, 0.0, 0.0], -3.0, 0.6),
                plane([0.0, 1.0, 0.0], 2.5, 0.5),
                plane([0.0, 1.0, 0.0], -2.5, 0.5),
                plane([0.0, 0.0, 1.0], 0.0, 0.3),
                plane([0.0, 0.0, 1.0], 2.6, 0.8),
                cube([3.2, -1.8, 0.0], [4.0, -0.6, 1.1], 0.4),
                cube([3.6, 0.9, 0.0], [4.4, 1.6, 1.9], 0.7),
                cube([2.4, 1.9, 0.6], [2.9, 2.5, 1.5], 0.2),
                cube([4.7, -0.4, 1.6], [5.0, 0.5, 2.3], 0.9),
                cube([4.2, -1.3, 0.0], [4.5, -1.0, 2.6], 0.5),
                cube([2.5, -0.9, 1.7], [2.9, -0.5, 2.0], 0.6),
                cube([2.8, 0.2, 0.7], [3.6, 1.0, 0.75], 0.4),
                cube([3.4, -0.6, 2.2], [4.0, 0.2, 2.25], 0.5),
                ball([3.0, -0.2, 0.35], 0.35, 0.5),
                ball([3.3, 2.0, 2.2], 0.3, 0.6),
                ball([4.2, -2.1, 1.6], 0.4, 0.3),
                ball([3.8, 0.4, 2.1], 0.25, 0.7),
            ],
        }
    }
}

/// Result of a successful ray cast.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub range: f64,
    pub reflectivity: f64,
    pub object: usize,
}

/// Nearest intersection of the ray with the scene within `max_range`.
pub fn raycast(origin: &Vector3<f64>, dir: &UnitVec3, scene: &Scene, max_range: f64) -> Option<Hit> {
    let d = dir.as_vector();
    let mut best: Option<Hit> = None;
    for (i, o) in scene.objects.iter().enumerate() {
        if let Some(t) = o.primitive.intersect(origin, d) {
            if t <= max_range && best.is_none_or(|b| t < b.range) {
                best = Some(Hit {
                    range: t,
                    reflectivity: o.reflectivity,
                    object: i,
                });
            }
        }
    }
    best
}

/// Pose of the lidar in the world as a function of time.
pub trait Trajectory: Sync {
    /// World-from-lidar transform at time `t`.
    fn pose_at(&self, t: f64) -> Pose;
}

impl Trajectory for Pose {
    fn pose_at(&self, _t: f64) -> Pose {
        *self
    }
}

/// Adapts a closure into a [`Trajectory`].
pub struct FnTrajectory<F>(pub F);

impl<F: Fn(f64) -> Pose + Sync> Trajectory for FnTrajectory<F> {
    fn pose_at(&self, t: f64) -> Pose {
        (self.0)(t)
    }
}

/// A single lidar return in the lidar frame at its sample time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub t: f64,
    pub position: Vector3<f64>,
    pub reflectivity: f64,
    pub channel: u32,
}

/// Returns collected during one time slice.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloudFrame {
    /// Start of the slice, seconds.
    pub t: f64,
    pub points: Vec<Point>,
}

/// Parameters of [`scan_scene`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScanConfig {
    pub range_noise_std: f64,
    pub frame_len: f64,
    pub max_range: f64,
    pub seed: u64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            range_noise_std: DEFAULT_RANGE_NOISE,
            frame_len: DEFAULT_FRAME_LEN,
            max_range: DEFAULT_MAX_RANGE,
            seed: 0,
        }
    }
}

impl ScanConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.range_noise_std >= 0.0 && self.range_noise_std.is_finite()) {
            return Err(Error::config("range noise must be finite and non-negative"));
        }
        if !(self.frame_len > 0.0 && self.frame_len.is_finite()) {
            return Err(Error::config("frame length must be positive"));
        }
        if !(self.max_range > 0.0) {
            return Err(Error::config("max range must be positive"));
        }
        Ok(())
    }
}

/// Casts one sample into the scene; `noise` is added to the true range.
fn cast_sample(s: &Sample, scene: &Scene, pose: &Pose, max_range: f64, noise: f64) -> Option<Point> {
    let origin = pose.translation();
    let world_dir = UnitVec3::renormalized(pose.rotation() * s.dir.as_vector());
    let hit = raycast(origin, &world_dir, scene, max_range)?;
    let range = (hit.range + noise).min(max_range);
    (range > 0.0).then(|| Point {
        t: s.t,
        position: s.dir.as_vector() * range,
        reflectivity: hit.reflectivity,
        channel: s.channel,
    })
}

/// Casts every sample of a time-ordered pattern into the scene and slices the
/// returns into frames of `frame_len`. Frames are independent and carry their
/// own noise stream, so the output does not depend on thread scheduling.
pub fn scan_scene(
    samples: &[Sample],
    scene: &Scene,
    trajectory: &dyn Trajectory,
    config: &ScanConfig,
) -> Result<Vec<PointCloudFrame>> {
    config.validate()?;
    let Some(last) = samples.last() else {
        return Ok(Vec::new());
    };
    let frames = (last.t / config.frame_len).floor() as usize + 1;
    let bounds: Vec<usize> = (0..=frames)
        .map(|k| samples.partition_point(|s| s.t < k as f64 * config.frame_len))
        .collect();
    let noise = Normal::new(0.0, config.range_noise_std).map_err(|e| Error::config(e.to_string()))?;
    let out = (0..frames)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(config.seed, domain::RANGE_NOISE, k as u64);
            let points = samples[bounds[k]..bounds[k + 1]]
                .iter()
                .filter_map(|s| {
                    let pose = trajectory.pose_at(s.t);
                    let n = if config.range_noise_std > 0.0 {
                        noise.sample(&mut rng)
                    } else {
                        0.0
                    };
                    cast_sample(s, scene, &pose, config.max_range, n)
                })
                .collect();
            PointCloudFrame {
                t: k as f64 * config.frame_len,
                points,
            }
        })
        .collect();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pattern::{generate_pattern, SamplingConfig, Scanner};
    use crate::se3::{exp_se3, Twist};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    /// Slab-method oracle: entry/exit parameters over the three axis slabs.
    fn slab(origin: &Vector3<f64>, dir: &Vector3<f64>, min: &[f64; 3], max: &[f64; 3]) -> Option<f64> {
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for a in 0..3 {
            if dir[a] == 0.0 {
                if origin[a] < min[a] || origin[a] > max[a] {
                    return None;
                }
                continue;
            }
            let t1 = (min[a] - origin[a]) / dir[a];
            let t2 = (max[a] - origin[a]) / dir[a];
            lo = lo.max(t1.min(t2));
            hi = hi.min(t1.max(t2));
        }
        if hi < lo || hi <= MIN_HIT {
            return None;
        }
        Some(if lo > MIN_HIT { lo } else { hi })
    }

    #[test]
    fn plane_and_sphere_ranges() {
        let mut scene = Scene::default();
        scene
            .push(Primitive::Plane { normal: [0.0, 0.0, 1.0], offset: 10.0 }, 0.5)
            .unwrap();
        let hit = raycast(&Vector3::zeros(), &UnitVec3::z_axis(), &scene, 100.0).unwrap();
        assert_abs_diff_eq!(hit.range, 10.0, epsilon = 1e-12);
        assert!(raycast(&Vector3::zeros(), &UnitVec3::z_axis(), &scene, 9.0).is_none());
        assert!(raycast(&Vector3::zeros(), &-UnitVec3::z_axis(), &scene, 100.0).is_none());

        let mut scene = Scene::default();
        scene
            .push(Primitive::Sphere { center: [0.0, 0.0, 5.0], radius: 1.0 }, 0.9)
            .unwrap();
        let hit = raycast(&Vector3::zeros(), &UnitVec3::z_axis(), &scene, 100.0).unwrap();
        assert_abs_diff_eq!(hit.range, 4.0, epsilon = 1e-12);
        assert_eq!(hit.reflectivity, 0.9);
        // From inside, the far wall is hit.
        let hit = raycast(&Vector3::new(0.0, 0.0, 5.0), &UnitVec3::z_axis(), &scene, 100.0).unwrap();
        assert_abs_diff_eq!(hit.range, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn box_faces_match_slab_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let min = [-1.0, -0.5, 2.0];
        let max = [1.5, 0.7, 3.0];
        let b = Primitive::Box { min, max };
        let mut hits = 0;
        for _ in 0..20_000 {
            let o = Vector3::new(
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
                rng.random_range(-1.0..5.0),
            );
            let d = UnitVec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
            .unwrap();
            let got = b.intersect(&o, d.as_vector());
            let want = slab(&o, d.as_vector(), &min, &max);
            match (got, want) {
                (Some(g), Some(w)) => {
                    assert_abs_diff_eq!(g, w, epsilon = 1e-9);
                    hits += 1;
                }
                (None, None) => {}
                other => panic!("mismatch {other:?} for {o:?} {d:?}"),
            }
        }
        assert!(hits > 1000);
    }

    #[test]
    fn scene_json_validation() {
        let ok = r#"{"objects":[{"type":"sphere","center":[0,0,5],"radius":1,"reflectivity":0.5}]}"#;
        assert_eq!(Scene::from_json(ok).unwrap().objects.len(), 1);
        let bad = r#"{"objects":[{"type":"sphere","center":[0,0,5],"radius":1,"reflectivity":1.5}]}"#;
        assert!(Scene::from_json(bad).is_err());
        let bad = r#"{"objects":[{"type":"box","min":[0,0,0],"max":[0,1,1],"reflectivity":0.5}]}"#;
        assert!(Scene::from_json(bad).is_err());
        let unknown = r#"{"objects":[{"type":"sphere","center":[0,0,5],"radius":1,"reflectivity":0.5,"x":1}]}"#;
        assert!(Scene::from_json(unknown).is_err());
        let round = serde_json::to_string(&Scene::room()).unwrap();
        assert_eq!(Scene::from_json(&round).unwrap(), Scene::room());
    }

    #[test]
    fn noise_free_points_lie_on_their_primitives() {
        let scene = Scene::room();
        let scanner = Scanner::reference();
        let pat = generate_pattern(&scanner, &SamplingConfig::with_duration(0.2, 0).unwrap()).unwrap();
        // Lidar looks along world +x, z up.
        let look = Pose::new(
            nalgebra::Matrix3::new(0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0),
            Vector3::new(0.0, 0.0, 1.2),
        )
        .unwrap();
        let pose = look * exp_se3(&Twist::new(Vector3::new(0.05, -0.1, 0.2), Vector3::new(0.1, 0.0, -0.1)));
        let cfg = ScanConfig {
            range_noise_std: 0.0,
            ..ScanConfig::default()
        };
        let frames = scan_scene(&pat.samples, &scene, &pose, &cfg).unwrap();
        assert_eq!(frames.len(), 2);
        let mut n = 0;
        for p in frames.iter().flat_map(|f| &f.points) {
            let w = pose.transform_point(&p.position);
            let on = scene
                .objects
                .iter()
                .filter(|o| o.reflectivity == p.reflectivity)
                .any(|o| o.primitive.implicit(&w).abs() < 1e-9);
            assert!(on, "{w:?}");
            n += 1;
        }
        assert_eq!(n, pat.len());
    }

    #[test]
    fn scans_are_reproducible_and_frames_partition_time() {
        let scene = Scene::room();
        let scanner = Scanner::reference();
        let pat = generate_pattern(&scanner, &SamplingConfig::with_duration(0.35, 0).unwrap()).unwrap();
        let pose = Pose::from_translation(Vector3::new(0.0, 0.0, 1.2));
        let cfg = ScanConfig { seed: 9, ..ScanConfig::default() };
        let a = scan_scene(&pat.samples, &scene, &pose, &cfg).unwrap();
        let b = scan_scene(&pat.samples, &scene, &pose, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 4);
        for f in &a {
            assert!(f.points.iter().all(|p| p.t >= f.t && p.t < f.t + cfg.frame_len));
            assert!(f.points.iter().all(|p| p.position.norm() <= cfg.max_range));
        }
    }

    #[test]
    fn misses_produce_no_points() {
        let mut scene = Scene::default();
        scene
            .push(Primitive::Sphere { center: [0.0, 0.0, 20.0], radius: 0.5 }, 0.5)
            .unwrap();
        let scanner = Scanner::reference();
        let pat = generate_pattern(&scanner, &SamplingConfig::with_duration(0.05, 0).unwrap()).unwrap();
        let frames = scan_scene(&pat.samples, &scene, &Pose::identity(), &ScanConfig::default()).unwrap();
        let n: usize = frames.iter().map(|f| f.points.len()).sum();
        let hits = pat
            .iter()
            .filter(|s| raycast(&Vector3::zeros(), &s.dir, &scene, DEFAULT_MAX_RANGE).is_some())
            .count();
        assert_eq!(n, hits);
        assert!(n > 0 && n < pat.len() / 10);
    }
}
