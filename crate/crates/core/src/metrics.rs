//! Symmetry-aware pose errors (MSSD, MSPD) and average recall.

use nalgebra::{Vector2, Vector3};
use thiserror::Error;

use crate::ensemble::InstanceKey;
use crate::pose::{apply_symmetry, discretize_symmetries, ObjectModel, PoseError, RigidPose, Transform};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("point {0:?} is behind the camera")]
    BehindCamera([f64; 3]),
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("threshold list is empty")]
    EmptyThresholds,
    #[error(transparent)]
    Pose(#[from] PoseError),
}

/// Pinhole camera without distortion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self, MetricsError> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(MetricsError::InvalidIntrinsics(format!(
                "focal lengths must be positive (fx = {fx}, fy = {fy})"
            )));
        }
        if width == 0 || height == 0 {
            return Err(MetricsError::InvalidIntrinsics(format!(
                "image size must be positive ({width}x{height})"
            )));
        }
        Ok(Self { fx, fy, cx, cy, width, height })
    }
}

/// Pose errors of one estimate; `None` when not computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceErrors {
    pub key: InstanceKey,
    pub mssd: Option<f64>,
    pub mspd: Option<f64>,
}

/// Projects a camera-frame point (millimetres) to pixels.
pub fn project(k: &CameraIntrinsics, x: &Vector3<f64>) -> Result<Vector2<f64>, MetricsError> {
    if !(x.z > 1e-9) {
        return Err(MetricsError::BehindCamera([x.x, x.y, x.z]));
    }
    Ok(Vector2::new(k.fx * x.x / x.z + k.cx, k.fy * x.y / x.z + k.cy))
}

/// MSSD over an explicit transform list.
pub fn mssd_with(est: &RigidPose, gt: &RigidPose, points: &[Vector3<f64>], transforms: &[Transform]) -> f64 {
    transforms
        .iter()
        .map(|s| {
            let g = apply_symmetry(gt, s);
            points
                .iter()
                .map(|x| (est.transform_point(x) - g.transform_point(x)).norm())
                .fold(0.0, f64::max)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Maximum symmetry-aware surface distance in millimetres.
pub fn mssd(est: &RigidPose, gt: &RigidPose, model: &ObjectModel, steps: usize) -> Result<f64, MetricsError> {
    let transforms = discretize_symmetries(model.symmetries(), steps)?;
    Ok(mssd_with(est, gt, model.points(), &transforms))
}

/// MSPD over an explicit transform list.
pub fn mspd_with(
    est: &RigidPose,
    gt: &RigidPose,
    points: &[Vector3<f64>],
    k: &CameraIntrinsics,
    transforms: &[Transform],
) -> Result<f64, MetricsError> {
    let projected_est = points
        .iter()
        .map(|x| project(k, &est.transform_point(x)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut best = f64::INFINITY;
    for s in transforms {
        let g = apply_symmetry(gt, s);
        let mut worst = 0.0f64;
        for (x, pe) in points.iter().zip(&projected_est) {
            let pg = project(k, &g.transform_point(x))?;
            worst = worst.max((pe - pg).norm());
        }
        best = best.min(worst);
    }
    Ok(best)
}

/// Maximum symmetry-aware projection distance in pixels.
pub fn mspd(
    est: &RigidPose,
    gt: &RigidPose,
    model: &ObjectModel,
    k: &CameraIntrinsics,
    steps: usize,
) -> Result<f64, MetricsError> {
    let transforms = discretize_symmetries(model.symmetries(), steps)?;
    mspd_with(est, gt, model.points(), k, &transforms)
}

/// Mean over thresholds of the fraction of errors strictly below each.
/// Missing estimates should be passed as `f64::INFINITY`.
pub fn average_recall(errors: &[f64], thresholds: &[f64]) -> Result<f64, MetricsError> {
    if thresholds.is_empty() {
        return Err(MetricsError::EmptyThresholds);
    }
    if errors.is_empty() {
        return Ok(0.0);
    }
    let n = errors.len() as f64;
    let sum: f64 = thresholds
        .iter()
        .map(|th| errors.iter().filter(|e| **e < *th).count() as f64 / n)
        .sum();
    Ok(sum / thresholds.len() as f64)
}

/// `{0.05, 0.10, ..., 0.50}` times the object diameter.
pub fn mssd_thresholds(diameter: f64) -> Vec<f64> {
    (1..=10).map(|i| i as f64 * 0.05 * diameter).collect()
}

/// `{5, 10, ..., 50}` pixels scaled by `width / 640`.
pub fn mspd_thresholds(width: u32) -> Vec<f64> {
    let scale = width as f64 / 640.0;
    (1..=10).map(|i| 5.0 * i as f64 * scale).collect()
}
