//! Calibration scoring for ensemble uncertainty of 6D object poses.
//!
//! The pipeline: parse ensemble predictions ([`io`]), align members under
//! object symmetries and fit per-element Gaussians ([`ensemble`]), then score
//! the Gaussians against ground truth with reliability diagrams and the UCS
//! ([`calibration`]). [`metrics`] provides symmetry-aware pose errors and
//! [`simulate`] a synthetic sanity check of the score.

// `!(x > y)` comparisons are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod ensemble;
pub mod io;
pub mod metrics;
pub mod pose;
pub mod simulate;

pub use calibration::{
    calibrate_dataset, calibration_area, gaussian_cdf, observed_confidence, ucs, CalibrationReport,
    ConfidenceLevels, ReliabilityDiagram,
};
pub use ensemble::{
    align_ensemble, fit_gaussian, mean_pose, minmax_normalize, EnsembleSample, GaussianSummary,
    InstanceKey,
};
pub use pose::{
    apply_symmetry, discretize_symmetries, from_repr, geodesic_distance, to_repr,
    validate_rotation, ObjectModel, ReprTag, RigidPose, RotationRepr, SymmetrySet, Transform,
};
pub use simulate::{simulate_ucs, SimulationConfig, UcsCurve};
