use thiserror::Error;

use crate::calibration::Registration;

/// Errors produced across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is out of range or inconsistent.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A function was evaluated outside its domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// The SE(3) logarithm is ambiguous for a rotation of exactly pi.
    #[error("logarithm branch is ambiguous: rotation angle {angle} rad is at pi")]
    BranchAmbiguity { angle: f64 },

    /// Snell's law has no transmitted solution at an interface.
    #[error("total internal reflection (n1 sin(theta1) = {sin_scaled:.6} > n2 = {n2})")]
    TotalInternalReflection { sin_scaled: f64, n2: f64 },

    /// Hand-eye calibration cannot observe the extrinsic from the given motions.
    #[error("extrinsic is unobservable: {0}")]
    Unobservable(String),

    /// A static window is too short to estimate IMU biases.
    #[error("static window {window} lasts {duration:.3} s, need at least {required:.3} s")]
    InsufficientBiasData {
        window: usize,
        duration: f64,
        required: f64,
    },

    /// Iterative registration hit its iteration cap.
    #[error("registration did not converge after {} iterations", last.iterations)]
    NonConvergence { last: Box<Registration> },

    /// The detected target lies behind the sensor.
    #[error("target is behind the sensor (x = {x})")]
    BehindSensor { x: f64 },

    /// Gimbal rate calibration lost the reference feature.
    #[error("gimbal calibration failed for command {command}: {reason}")]
    CalibrationFailed { command: f64, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
