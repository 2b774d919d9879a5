//! Lidar-IMU extrinsic calibration from static stops.

pub mod experiment;
pub mod handeye;
pub mod imu;
pub mod registration;

pub use registration::Registration;
