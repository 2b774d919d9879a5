//! Fast randomized checks of the library invariants.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CliError, CliResult, Context};
use crate::calibration::handeye::hand_eye_solve;
use crate::density::{coverage_curve, empirical_density, CoverageGrid};
use crate::error::Result;
use crate::optics::{paraxial_pair_radius, refract_interface, snell_residual};
use crate::pattern::{check_commensurable, generate_pattern, SamplingConfig, Scanner, DEFAULT_MAX_DENOMINATOR};
use crate::scene::Scene;
use crate::se3::{exp_se3, log_se3, Pose, Twist, UnitVec3};
use crate::tracking::{detect_intruder, run_tracking_episode, tracking_command, DetectionRegion, TrackingConfig};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelftestJson {
    /// Random cases per randomized check.
    pub trials: usize,
}

impl Default for SelftestJson {
    fn default() -> Self {
        SelftestJson { trials: 100 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &str, outcome: Result<(bool, String)>) -> Check {
    let (passed, detail) = outcome.unwrap_or_else(|e| (false, e.to_string()));
    Check {
        name: name.into(),
        passed,
        detail,
    }
}

fn twist(rng: &mut ChaCha8Rng, max_angle: f64) -> Twist {
    let mut v = || Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let axis = v().normalize();
    let lin = v();
    Twist::new(axis * rng.random_range(0.0..max_angle), lin)
}

/// Every check, in a fixed order.
pub fn run_checks(seed: u64, trials: usize) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let reference = Scanner::reference();
    let rim = reference.paraxial_half_fov();
    let mut out = Vec::new();

    out.push(check("se3_log_inverts_exp", {
        let worst = (0..trials)
            .map(|_| {
                let t = twist(&mut rng, 3.0);
                log_se3(&exp_se3(&t)).map(|l| (l.to_vector() - t.to_vector()).norm())
            })
            .try_fold(0.0f64, |m, e| e.map(|e| m.max(e)));
        worst.map(|w| (w < 1e-9, format!("max twist error {w:.3e}")))
    }));

    out.push(check("refraction_obeys_snell", {
        let mut worst = 0.0f64;
        let mut failure = None;
        for _ in 0..trials {
            let inc = rng.random_range(0.0..1.2f64);
            let az = rng.random_range(0.0..std::f64::consts::TAU);
            let d = UnitVec3::new(inc.sin() * az.cos(), inc.sin() * az.sin(), inc.cos()).expect("unit");
            // The normal faces the incoming ray.
            let n = UnitVec3::new(0.0, 0.0, -1.0).expect("unit");
            match refract_interface(&d, &n, 1.0, 1.51) {
                Ok(o) => worst = worst.max(snell_residual(&d, &o, &n, 1.0, 1.51)),
                Err(e) => failure = Some(e),
            }
        }
        match failure {
            Some(e) => Err(e),
            None => Ok((worst < 1e-12, format!("max residual {worst:.3e}"))),
        }
    }));

    out.push(check("paraxial_fov_rim", {
        SamplingConfig::with_duration(1.0, seed)
            .and_then(|s| generate_pattern(&reference, &s))
            .map(|p| {
                let max = p.iter().map(|s| s.dir.polar_angle()).fold(0.0, f64::max);
                let r = 0.5 * rim;
                let w = reference.rotors();
                let formula = p
                    .iter()
                    .take(1000)
                    .map(|s| {
                        let r2 = paraxial_pair_radius(r, w[0].speed * s.t, w[1].speed * s.t);
                        (r2 - s.dir.polar_angle()).abs()
                    })
                    .fold(0.0, f64::max);
                (
                    max <= rim + 1e-9 && max > rim - 1e-3 && formula < 1e-9,
                    format!("max polar {:.6} deg, rim {:.6} deg, radial formula gap {formula:.2e}", max.to_degrees(), rim.to_degrees()),
                )
            })
    }));

    let pattern = SamplingConfig::with_duration(10.0, seed).and_then(|s| generate_pattern(&reference, &s));
    out.push(check("density_law", {
        pattern.as_ref().map_err(|e| crate::Error::Domain(e.to_string())).and_then(|p| {
            let samples: Vec<_> = p.iter().copied().collect();
            let rms = empirical_density(&samples, 0.5 * rim, 50)?.rms_deviation(2)?;
            Ok((rms < 0.05, format!("relative RMS {rms:.4}")))
        })
    }));

    out.push(check("coverage_is_monotone", {
        pattern.as_ref().map_err(|e| crate::Error::Domain(e.to_string())).and_then(|p| {
            let grid = CoverageGrid::for_scanner(&reference)?;
            let times: Vec<f64> = (1..=100).map(|k| 0.1 * k as f64).collect();
            let curve = coverage_curve(p.prefix(10.0), &grid, &times);
            let monotone = curve.windows(2).all(|w| w[1] >= w[0]);
            let last = *curve.last().expect("nonempty");
            Ok((monotone && last >= 99.0, format!("coverage at 10 s {last:.2}%")))
        })
    }));

    out.push(check("commensurability", {
        let w = reference.rotors();
        let exact = check_commensurable(2.0, -1.0, 1e-9, DEFAULT_MAX_DENOMINATOR);
        let reference_ratio = check_commensurable(w[0].speed, w[1].speed, 1e-12, 100);
        Ok((
            exact.map(|c| (c.numerator, c.denominator)) == Some((-2, 1)) && reference_ratio.is_none(),
            format!("2:-1 -> {exact:?}"),
        ))
    }));

    out.push(check("hand_eye_exact", {
        let mut worst = (0.0f64, 0.0f64);
        let mut err = None;
        for _ in 0..trials.min(100) {
            let x = exp_se3(&twist(&mut rng, 3.0));
            let pairs: Vec<(Pose, Pose)> = (0..4)
                .map(|_| {
                    let b = exp_se3(&twist(&mut rng, 1.0));
                    (x.conjugate(&b), b)
                })
                .collect();
            match hand_eye_solve(&pairs) {
                Ok(est) => {
                    let d = est.inverse() * x;
                    worst = (worst.0.max(d.rotation_angle()), worst.1.max(d.translation().norm()));
                }
                Err(e) => err = Some(e),
            }
        }
        match err {
            Some(e) => Err(e),
            None => Ok((worst.0 < 1e-6 && worst.1 < 1e-6, format!("max errors {:.2e} rad, {:.2e} m", worst.0, worst.1))),
        }
    }));

    out.push(check("detection_is_order_free", {
        let region = DetectionRegion {
            min: [-10.0; 3],
            max: [10.0; 3],
        };
        let ok = (0..trials).all(|_| {
            let n = rng.random_range(1..30);
            let mut pts: Vec<Vector3<f64>> = (0..n)
                .map(|_| Vector3::new(rng.random_range(-12.0..12.0), rng.random_range(-12.0..12.0), rng.random_range(-12.0..12.0)))
                .collect();
            let a = detect_intruder(&pts, &region);
            pts.reverse();
            let k = rng.random_range(0..n);
            pts.rotate_left(k);
            a == detect_intruder(&pts, &region)
        });
        Ok((ok, String::new()))
    }));

    out.push(check("command_is_odd", {
        let ok = (0..trials).all(|_| {
            let (x, y, z) = (rng.random_range(0.5..50.0), rng.random_range(-40.0..40.0), rng.random_range(-40.0..40.0));
            let a = tracking_command(&Vector3::new(x, y, z), 2.0, 2.0, 2f64.to_radians());
            let b = tracking_command(&Vector3::new(x, -y, -z), 2.0, 2.0, 2f64.to_radians());
            matches!((a, b), (Ok(a), Ok(b)) if a.v_yaw == -b.v_yaw && a.v_pitch == -b.v_pitch)
        });
        Ok((ok, String::new()))
    }));

    out.push(check("static_target_stays_in_deadband", {
        DetectionRegion::new([5.0, -5.0, -5.0], [30.0, 5.0, 5.0]).and_then(|region| {
            let mut c = TrackingConfig::new(region, 2.0);
            c.seed = seed;
            let path = |_t: f64| Vector3::new(15.0, 0.0, 0.0);
            let ep = run_tracking_episode(&path, &Scene::default(), &c)?;
            let still = ep.log.rows.iter().all(|r| r.v_yaw == 0.0 && r.v_pitch == 0.0 && r.yaw == 0.0 && r.pitch == 0.0);
            Ok((still, format!("{} frames", ep.log.rows.len())))
        })
    }));

    out
}

pub(crate) fn selftest(ctx: &Context, cfg: &SelftestJson) -> CliResult<()> {
    let checks = run_checks(ctx.seed, cfg.trials.max(1));
    for c in &checks {
        println!("{} {} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    ctx.out.json("selftest.json", &checks)?;
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(CliError::numerical(format!("{failed} of {} checks failed", checks.len())));
    }
    Ok(())
}
