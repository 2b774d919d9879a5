//! Beam deflection by rotating wedge prisms.
//!
//! Two models are provided. The paraxial model treats every prism as a
//! fixed-length angular vector `R = (n - 1) * wedge` that rotates with its
//! rotor; the steered direction has polar angle equal to the length of the
//! vector sum and azimuth equal to its orientation. The exact model traces
//! the ray through both faces of each prism with vector Snell refraction.
//!
//! Geometric convention: the optical axis is +z and light travels toward +z.
//! Each prism has its flat face toward the source and its wedged face toward
//! the scene. At rotor angle 0 the thin edge (apex) points along +x, so the
//! beam is deflected toward the thick edge at -x; a prism at rotor angle
//! `theta` deflects along azimuth `theta + pi`. Prisms are angularly thin
//! elements at a common point: ray offsets between prisms are ignored.

use std::f64::consts::{PI, TAU};

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::se3::UnitVec3;

/// Refractive index and wedge angle of a single prism.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrismSpec {
    refractive_index: f64,
    wedge_angle: f64,
}

impl PrismSpec {
    /// Index in `(1, 3]`, wedge angle in `(0, pi/4)` radians.
    pub fn new(refractive_index: f64, wedge_angle: f64) -> Result<Self> {
        if !(refractive_index > 1.0 && refractive_index <= 3.0) {
            return Err(Error::config(format!(
                "refractive index {refractive_index} outside (1, 3]"
            )));
        }
        if !(wedge_angle > 0.0 && wedge_angle < PI / 4.0) {
            return Err(Error::config(format!(
                "wedge angle {wedge_angle} rad outside (0, pi/4)"
            )));
        }
        Ok(PrismSpec {
            refractive_index,
            wedge_angle,
        })
    }

    /// The prism of the reference device: n = 1.51, 18 degree wedge.
    pub fn reference() -> Self {
        PrismSpec {
            refractive_index: 1.51,
            wedge_angle: 18f64.to_radians(),
        }
    }

    /// A prism of index `n` whose paraxial deflection is `deflection` radians.
    pub fn with_deflection(refractive_index: f64, deflection: f64) -> Result<Self> {
        Self::new(refractive_index, deflection / (refractive_index - 1.0))
    }

    pub fn refractive_index(&self) -> f64 {
        self.refractive_index
    }

    pub fn wedge_angle(&self) -> f64 {
        self.wedge_angle
    }

    /// Thin-prism deflection magnitude `R = (n - 1) * wedge`.
    pub fn paraxial_deflection(&self) -> f64 {
        (self.refractive_index - 1.0) * self.wedge_angle
    }

    /// Deflection vector of this prism at a given rotor angle.
    pub fn deflection_vector(&self, rotor_angle: f64) -> DeflectionVector {
        DeflectionVector::new(self.paraxial_deflection(), rotor_angle + PI)
    }
}

/// Paraxial deflection of a prism: length `R` and the azimuth of its thick edge.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeflectionVector {
    magnitude: f64,
    phase: f64,
}

impl DeflectionVector {
    /// A negative magnitude flips the phase by pi.
    pub fn new(magnitude: f64, phase: f64) -> Self {
        let (magnitude, phase) = if magnitude < 0.0 {
            (-magnitude, phase + PI)
        } else {
            (magnitude, phase)
        };
        DeflectionVector {
            magnitude,
            phase: wrap_two_pi(phase),
        }
    }

    pub fn magnitude(&self) -> f64 {
        self.magnitude
    }

    /// Phase in `[0, 2 pi)`.
    pub fn phase(&self) -> f64 {
        self.phase
    }

    /// Transverse components `(R cos phase, R sin phase)`.
    pub fn transverse(&self) -> Vector2<f64> {
        let (s, c) = self.phase.sin_cos();
        Vector2::new(self.magnitude * c, self.magnitude * s)
    }
}

fn wrap_two_pi(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Selects the steering model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SteeringModel {
    #[default]
    Paraxial,
    Exact,
}

/// Direction whose polar angle is `|v|` and azimuth `atan2(v.y, v.x)`.
pub fn direction_from_angular_vector(v: &Vector2<f64>) -> UnitVec3 {
    let polar = v.norm();
    if polar == 0.0 {
        return UnitVec3::z_axis();
    }
    let (s, c) = polar.sin_cos();
    UnitVec3::renormalized(Vector3::new(s * v.x / polar, s * v.y / polar, c))
}

/// Inverse of [`direction_from_angular_vector`] for polar angles below pi.
pub fn angular_vector(dir: &UnitVec3) -> Vector2<f64> {
    let polar = dir.polar_angle();
    let rho = dir.as_vector().xy().norm();
    if rho == 0.0 {
        return Vector2::zeros();
    }
    Vector2::new(dir.x(), dir.y()) * (polar / rho)
}

/// Refracts `dir` at an interface with unit normal `normal` (facing the
/// incoming ray, so `dir . normal < 0`) from index `n1` into `n2`.
pub fn refract_interface(dir: &UnitVec3, normal: &UnitVec3, n1: f64, n2: f64) -> Result<UnitVec3> {
    let cos_i = -dir.dot(normal);
    if cos_i <= 0.0 {
        return Err(Error::Domain(format!(
            "ray does not enter the interface (dir . normal = {})",
            -cos_i
        )));
    }
    let eta = n1 / n2;
    let sin2_i = (1.0 - cos_i * cos_i).max(0.0);
    let sin2_t = eta * eta * sin2_i;
    if sin2_t > 1.0 {
        return Err(Error::TotalInternalReflection {
            sin_scaled: n1 * sin2_i.sqrt(),
            n2,
        });
    }
    let cos_t = (1.0 - sin2_t).sqrt();
    let t = dir.as_vector() * eta + normal.as_vector() * (eta * cos_i - cos_t);
    Ok(UnitVec3::renormalized(t))
}

/// `|n1 sin(theta1) - n2 sin(theta2)|` for a refraction event.
pub fn snell_residual(incoming: &UnitVec3, outgoing: &UnitVec3, normal: &UnitVec3, n1: f64, n2: f64) -> f64 {
    let sin1 = incoming.as_vector().cross(normal.as_vector()).norm();
    let sin2 = outgoing.as_vector().cross(normal.as_vector()).norm();
    (n1 * sin1 - n2 * sin2).abs()
}

/// Inward normals of the two faces of a prism at `rotor_angle`, in trace order.
pub fn prism_face_normals(prism: &PrismSpec, rotor_angle: f64) -> (UnitVec3, UnitVec3) {
    let entry = -UnitVec3::z_axis();
    let (sa, ca) = prism.wedge_angle.sin_cos();
    let (sp, cp) = rotor_angle.sin_cos();
    // Outward normal of the wedged face tilts toward the apex; the trace needs
    // the normal facing the ray, hence the sign flip.
    let exit = UnitVec3::renormalized(-Vector3::new(sa * cp, sa * sp, ca));
    (entry, exit)
}

/// Exact two-surface trace through one prism (air -> glass -> air).
pub fn trace_prism(dir: &UnitVec3, prism: &PrismSpec, rotor_angle: f64) -> Result<UnitVec3> {
    let (entry, exit) = prism_face_normals(prism, rotor_angle);
    let inside = refract_interface(dir, &entry, 1.0, prism.refractive_index)?;
    refract_interface(&inside, &exit, prism.refractive_index, 1.0)
}

/// Steers an input beam through a stack of prisms.
///
/// `input` is the angular offset of the input beam from the optical axis
/// (used for multi-element arrays); `rotor_angles[i]` is the angle of prism `i`.
pub fn steer(
    prisms: &[PrismSpec],
    rotor_angles: &[f64],
    input: &Vector2<f64>,
    model: SteeringModel,
) -> Result<UnitVec3> {
    debug_assert_eq!(prisms.len(), rotor_angles.len());
    match model {
        SteeringModel::Paraxial => {
            let sum = prisms
                .iter()
                .zip(rotor_angles)
                .fold(*input, |acc, (p, &a)| acc + p.deflection_vector(a).transverse());
            Ok(direction_from_angular_vector(&sum))
        }
        SteeringModel::Exact => {
            let mut dir = direction_from_angular_vector(input);
            for (p, &a) in prisms.iter().zip(rotor_angles) {
                dir = trace_prism(&dir, p, a)?;
            }
            Ok(dir)
        }
    }
}

/// Classic Risley pair on a boresight input beam.
pub fn steer_two_prisms(
    p1: &PrismSpec,
    p2: &PrismSpec,
    theta1: f64,
    theta2: f64,
    model: SteeringModel,
) -> Result<UnitVec3> {
    steer(&[*p1, *p2], &[theta1, theta2], &Vector2::zeros(), model)
}

/// Triple-prism scanner: prisms a and b are identical and counter-phased at
/// `+theta` / `-theta`, so their sum oscillates along x; prism c at `phi3`
/// rotates that oscillation.
pub fn steer_three_prisms(
    pa: &PrismSpec,
    pb: &PrismSpec,
    pc: &PrismSpec,
    theta: f64,
    phi3: f64,
    model: SteeringModel,
) -> Result<UnitVec3> {
    steer(&[*pa, *pb, *pc], &[theta, -theta, phi3], &Vector2::zeros(), model)
}

/// Polar angle of a two-prism paraxial pattern for identical prisms,
/// `sqrt(2) R sqrt(1 + cos(theta1 - theta2))`.
pub fn paraxial_pair_radius(deflection: f64, theta1: f64, theta2: f64) -> f64 {
    std::f64::consts::SQRT_2 * deflection * (1.0 + (theta1 - theta2).cos()).max(0.0).sqrt()
}
