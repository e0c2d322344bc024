//! Rigid poses, rotation representations and object symmetries.
//!
//! Rotations are plain `Matrix3<f64>` values that satisfy the SO(3)
//! invariants checked by [`validate_rotation`]. Conversions to and from the
//! four supported parameterizations live in [`to_repr`] / [`from_repr`].
//!
//! Conventions:
//! - quaternions are scalar-first `(w, x, y, z)` and canonicalized to `w >= 0`
//! - Euler angles are intrinsic Z-Y'-X'' `(yaw, pitch, roll)` in radians,
//!   i.e. `R = Rz(yaw) * Ry(pitch) * Rx(roll)`
//! - axis-angle is the rotation vector `axis * angle` with `angle` in `[0, pi]`
//! - matrices are stored row-major when flattened

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

/// Tolerance on `|RᵀR - I|_F` and `|det R - 1|` for a valid rotation.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// Inputs within this distance of orthonormal are repaired by polar projection.
pub const REORTHONORMALIZE_TOLERANCE: f64 = 1e-4;

/// Quaternion inputs farther than this from unit norm are rejected.
pub const QUATERNION_NORM_TOLERANCE: f64 = 1e-6;

/// Distance of pitch from `±pi/2` below which Euler angles are flagged.
pub const GIMBAL_LOCK_TOLERANCE: f64 = 1e-7;

/// Default number of samples per continuous symmetry axis.
pub const DEFAULT_SYMMETRY_STEPS: usize = 64;

/// Default upper bound on the size of a discretized symmetry set.
pub const MAX_SYMMETRY_TRANSFORMS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PoseError {
    #[error("rotation is not orthonormal (|RᵀR - I|_F = {deviation:e})")]
    NotOrthonormal { deviation: f64 },
    #[error("rotation is a reflection (det = {det})")]
    NegativeDeterminant { det: f64 },
    #[error("invalid {tag} representation: {reason}")]
    InvalidRepr { tag: ReprTag, reason: String },
    #[error("continuous symmetry axis must be unit length, got norm {norm}")]
    NonUnitAxis { norm: f64 },
    #[error("symmetry discretization needs at least one step")]
    ZeroSteps,
    #[error("discretized symmetry set would hold {requested} transforms, cap is {cap}")]
    StepsOverflow { requested: u128, cap: usize },
    #[error("object model has no points")]
    EmptyModel,
}

fn orthonormality_deviation(m: &Matrix3<f64>) -> f64 {
    (m.transpose() * m - Matrix3::identity()).norm()
}

/// Checks both rotation invariants: orthonormality and `det = +1`.
pub fn validate_rotation(m: &Matrix3<f64>) -> Result<(), PoseError> {
    let deviation = orthonormality_deviation(m);
    if !(deviation < ROTATION_TOLERANCE) {
        return Err(PoseError::NotOrthonormal { deviation });
    }
    let det = m.determinant();
    if !((det - 1.0).abs() < ROTATION_TOLERANCE) {
        return Err(PoseError::NegativeDeterminant { det });
    }
    Ok(())
}

/// Closest rotation to `m` in Frobenius norm (orthogonal polar factor with
/// determinant correction). Also returns the smallest singular value of `m`.
pub fn project_to_so3(m: &Matrix3<f64>) -> (Matrix3<f64>, f64) {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd requested u");
    let v_t = svd.v_t.expect("svd requested v_t");
    let (min_idx, min_sv) = svd
        .singular_values
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, s)| if s < acc.1 { (i, s) } else { acc });
    let mut correction = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        correction[(min_idx, min_idx)] = -1.0;
    }
    (u * correction * v_t, min_sv)
}

/// Repairs a nearly orthonormal matrix (as read from limited-precision text).
///
/// Matrices within [`REORTHONORMALIZE_TOLERANCE`] of orthonormal with positive
/// determinant are projected onto SO(3); anything else is rejected.
pub fn orthonormalize(m: &Matrix3<f64>) -> Result<Matrix3<f64>, PoseError> {
    let deviation = orthonormality_deviation(m);
    if !(deviation <= REORTHONORMALIZE_TOLERANCE) {
        return Err(PoseError::NotOrthonormal { deviation });
    }
    let det = m.determinant();
    if det <= 0.0 {
        return Err(PoseError::NegativeDeterminant { det });
    }
    if validate_rotation(m).is_ok() {
        return Ok(*m);
    }
    Ok(project_to_so3(m).0)
}

/// A rotation, a translation in millimetres and a detector score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidPose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
    score: f64,
}

impl RigidPose {
    pub fn new(
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
        score: f64,
    ) -> Result<Self, PoseError> {
        validate_rotation(&rotation)?;
        Ok(Self { rotation, translation, score })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
            score: 0.0,
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn score(&self) -> f64 {
        self.score
    }

    pub fn with_score(mut self, score: f64) -> Self {
        self.score = score;
        self
    }

    /// Maps a model-frame point into the camera frame.
    pub fn transform_point(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * x + self.translation
    }
}

/// A rigid transform of the object model onto itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Transform {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, PoseError> {
        validate_rotation(&rotation)?;
        Ok(Self { rotation, translation })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Rotation by `angle` about the line through `offset` along unit `axis`.
    pub fn about_axis(axis: &Vector3<f64>, offset: &Vector3<f64>, angle: f64) -> Self {
        let rotation = rotation_from_vector(&(axis * angle));
        Self {
            rotation,
            translation: offset - rotation * offset,
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Transform) -> Transform {
        Transform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn apply(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * x + self.translation
    }

    pub fn is_identity(&self, tol: f64) -> bool {
        (self.rotation - Matrix3::identity()).norm() <= tol && self.translation.norm() <= tol
    }
}

/// A continuous rotational symmetry: any rotation about `axis` through `offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuousSymmetry {
    axis: Vector3<f64>,
    offset: Vector3<f64>,
}

impl ContinuousSymmetry {
    pub fn new(axis: Vector3<f64>, offset: Vector3<f64>) -> Result<Self, PoseError> {
        let norm = axis.norm();
        if !((norm - 1.0).abs() < ROTATION_TOLERANCE) {
            return Err(PoseError::NonUnitAxis { norm });
        }
        Ok(Self { axis, offset })
    }

    pub fn axis(&self) -> &Vector3<f64> {
        &self.axis
    }

    pub fn offset(&self) -> &Vector3<f64> {
        &self.offset
    }
}

/// Known symmetries of an object model plus its diameter in millimetres.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetrySet {
    discrete: Vec<Transform>,
    continuous: Vec<ContinuousSymmetry>,
    diameter: f64,
}

impl SymmetrySet {
    /// The identity transform is moved to (or inserted at) the front of the
    /// discrete list, so it always wins ties in symmetry selection.
    pub fn new(
        mut discrete: Vec<Transform>,
        continuous: Vec<ContinuousSymmetry>,
        diameter: f64,
    ) -> Self {
        if let Some(i) = discrete.iter().position(|t| t.is_identity(ROTATION_TOLERANCE)) {
            discrete.remove(i);
        }
        discrete.insert(0, Transform::identity());
        Self { discrete, continuous, diameter }
    }

    /// An asymmetric object.
    pub fn identity(diameter: f64) -> Self {
        Self::new(Vec::new(), Vec::new(), diameter)
    }

    pub fn discrete(&self) -> &[Transform] {
        &self.discrete
    }

    pub fn continuous(&self) -> &[ContinuousSymmetry] {
        &self.continuous
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }
}

/// Vertex set of an object model, in millimetres.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectModel {
    object_id: u32,
    points: Vec<Vector3<f64>>,
    symmetries: SymmetrySet,
}

impl ObjectModel {
    pub fn new(
        object_id: u32,
        points: Vec<Vector3<f64>>,
        symmetries: SymmetrySet,
    ) -> Result<Self, PoseError> {
        if points.is_empty() {
            return Err(PoseError::EmptyModel);
        }
        Ok(Self { object_id, points, symmetries })
    }

    pub fn object_id(&self) -> u32 {
        self.object_id
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn symmetries(&self) -> &SymmetrySet {
        &self.symmetries
    }

    pub fn diameter(&self) -> f64 {
        self.symmetries.diameter
    }
}

/// Largest pairwise distance between points. Quadratic; meant for models
/// without a stored diameter.
pub fn point_set_diameter(points: &[Vector3<f64>]) -> f64 {
    let mut best = 0.0f64;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            best = best.max((a - b).norm());
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ReprTag {
    Matrix,
    Quaternion,
    Euler,
    AxisAngle,
}

impl ReprTag {
    pub const ALL: [ReprTag; 4] = [
        ReprTag::Matrix,
        ReprTag::Quaternion,
        ReprTag::Euler,
        ReprTag::AxisAngle,
    ];

    /// Number of scalars in the rotation part.
    #[allow(clippy::len_without_is_empty)]
    pub fn len(self) -> usize {
        match self {
            ReprTag::Matrix => 9,
            ReprTag::Quaternion => 4,
            ReprTag::Euler | ReprTag::AxisAngle => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ReprTag::Matrix => "matrix",
            ReprTag::Quaternion => "quat",
            ReprTag::Euler => "euler",
            ReprTag::AxisAngle => "axisangle",
        }
    }
}

impl fmt::Display for ReprTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ReprTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "matrix" => Ok(ReprTag::Matrix),
            "quat" | "quaternion" => Ok(ReprTag::Quaternion),
            "euler" => Ok(ReprTag::Euler),
            "axisangle" | "axis-angle" => Ok(ReprTag::AxisAngle),
            other => Err(format!(
                "unknown representation `{other}` (expected matrix, quat, euler or axisangle)"
            )),
        }
    }
}

/// A rotation in one of the supported parameterizations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RotationRepr {
    /// Row-major 3×3 matrix.
    Matrix([f64; 9]),
    /// `(w, x, y, z)`.
    Quaternion([f64; 4]),
    /// `(yaw, pitch, roll)`, intrinsic Z-Y'-X''.
    Euler([f64; 3]),
    /// Rotation vector `axis * angle`.
    AxisAngle([f64; 3]),
}

impl RotationRepr {
    /// Builds a representation from a tag and a slice of the right length.
    pub fn from_values(tag: ReprTag, values: &[f64]) -> Result<Self, PoseError> {
        if values.len() != tag.len() {
            return Err(PoseError::InvalidRepr {
                tag,
                reason: format!("expected {} values, got {}", tag.len(), values.len()),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(PoseError::InvalidRepr {
                tag,
                reason: "non-finite value".into(),
            });
        }
        Ok(match tag {
            ReprTag::Matrix => RotationRepr::Matrix(values.try_into().unwrap()),
            ReprTag::Quaternion => RotationRepr::Quaternion(values.try_into().unwrap()),
            ReprTag::Euler => RotationRepr::Euler(values.try_into().unwrap()),
            ReprTag::AxisAngle => RotationRepr::AxisAngle(values.try_into().unwrap()),
        })
    }

    pub fn tag(&self) -> ReprTag {
        match self {
            RotationRepr::Matrix(_) => ReprTag::Matrix,
            RotationRepr::Quaternion(_) => ReprTag::Quaternion,
            RotationRepr::Euler(_) => ReprTag::Euler,
            RotationRepr::AxisAngle(_) => ReprTag::AxisAngle,
        }
    }

    pub fn values(&self) -> &[f64] {
        match self {
            RotationRepr::Matrix(v) => v,
            RotationRepr::Quaternion(v) => v,
            RotationRepr::Euler(v) => v,
            RotationRepr::AxisAngle(v) => v,
        }
    }

    /// True for Euler angles whose pitch sits within
    /// [`GIMBAL_LOCK_TOLERANCE`] of `±pi/2`; yaw and roll are then coupled.
    pub fn gimbal_lock(&self) -> bool {
        match self {
            RotationRepr::Euler([_, pitch, _]) => {
                (pitch.abs() - PI / 2.0).abs() < GIMBAL_LOCK_TOLERANCE
            }
            _ => false,
        }
    }
}

/// Encodes a rotation in the requested parameterization.
pub fn to_repr(r: &Matrix3<f64>, target: ReprTag) -> RotationRepr {
    match target {
        ReprTag::Matrix => {
            let mut v = [0.0; 9];
            for i in 0..3 {
                for j in 0..3 {
                    v[3 * i + j] = r[(i, j)];
                }
            }
            RotationRepr::Matrix(v)
        }
        ReprTag::Quaternion => RotationRepr::Quaternion(quaternion_from_matrix(r)),
        ReprTag::Euler => RotationRepr::Euler(euler_from_matrix(r)),
        ReprTag::AxisAngle => RotationRepr::AxisAngle(rotation_vector_from_matrix(r)),
    }
}

/// Decodes a parameterization back to a rotation matrix.
pub fn from_repr(r: &RotationRepr) -> Result<Matrix3<f64>, PoseError> {
    match r {
        RotationRepr::Matrix(v) => {
            let m = Matrix3::from_row_slice(v);
            validate_rotation(&m)?;
            Ok(m)
        }
        RotationRepr::Quaternion(q) => {
            let norm = q.iter().map(|c| c * c).sum::<f64>().sqrt();
            if !((norm - 1.0).abs() <= QUATERNION_NORM_TOLERANCE) {
                return Err(PoseError::InvalidRepr {
                    tag: ReprTag::Quaternion,
                    reason: format!("norm {norm} is not 1"),
                });
            }
            Ok(matrix_from_quaternion(&q.map(|c| c / norm)))
        }
        RotationRepr::Euler([yaw, pitch, roll]) => Ok(matrix_from_euler(*yaw, *pitch, *roll)),
        RotationRepr::AxisAngle(v) => Ok(rotation_from_vector(&Vector3::from_column_slice(v))),
    }
}

/// Canonical sign for a quaternion: `w >= 0`, and for `w == 0` the first
/// nonzero vector component positive.
pub fn canonical_quaternion(q: [f64; 4]) -> [f64; 4] {
    let flip = if q[0] != 0.0 {
        q[0] < 0.0
    } else {
        q[1..].iter().find(|c| **c != 0.0).is_some_and(|c| *c < 0.0)
    };
    if flip {
        q.map(|c| -c)
    } else {
        q
    }
}

fn quaternion_from_matrix(m: &Matrix3<f64>) -> [f64; 4] {
    let trace = m[(0, 0)] + m[(1, 1)] + m[(2, 2)];
    let q = if trace > 0.0 {
        let s = (trace + 1.0).sqrt() * 2.0;
        [
            0.25 * s,
            (m[(2, 1)] - m[(1, 2)]) / s,
            (m[(0, 2)] - m[(2, 0)]) / s,
            (m[(1, 0)] - m[(0, 1)]) / s,
        ]
    } else if m[(0, 0)] > m[(1, 1)] && m[(0, 0)] > m[(2, 2)] {
        let s = (1.0 + m[(0, 0)] - m[(1, 1)] - m[(2, 2)]).sqrt() * 2.0;
        [
            (m[(2, 1)] - m[(1, 2)]) / s,
            0.25 * s,
            (m[(0, 1)] + m[(1, 0)]) / s,
            (m[(0, 2)] + m[(2, 0)]) / s,
        ]
    } else if m[(1, 1)] > m[(2, 2)] {
        let s = (1.0 + m[(1, 1)] - m[(0, 0)] - m[(2, 2)]).sqrt() * 2.0;
        [
            (m[(0, 2)] - m[(2, 0)]) / s,
            (m[(0, 1)] + m[(1, 0)]) / s,
            0.25 * s,
            (m[(1, 2)] + m[(2, 1)]) / s,
        ]
    } else {
        let s = (1.0 + m[(2, 2)] - m[(0, 0)] - m[(1, 1)]).sqrt() * 2.0;
        [
            (m[(1, 0)] - m[(0, 1)]) / s,
            (m[(0, 2)] + m[(2, 0)]) / s,
            (m[(1, 2)] + m[(2, 1)]) / s,
            0.25 * s,
        ]
    };
    let norm = q.iter().map(|c| c * c).sum::<f64>().sqrt();
    canonical_quaternion(q.map(|c| c / norm))
}

fn matrix_from_quaternion(q: &[f64; 4]) -> Matrix3<f64> {
    let [w, x, y, z] = *q;
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Rotation matrix for a rotation vector (Rodrigues, evaluated through the
/// unit quaternion so small angles stay accurate).
pub fn rotation_from_vector(v: &Vector3<f64>) -> Matrix3<f64> {
    let angle = v.norm();
    // sin(angle/2)/angle
    let k = if angle < 1e-6 {
        0.5 - angle * angle / 48.0
    } else {
        (0.5 * angle).sin() / angle
    };
    matrix_from_quaternion(&[(0.5 * angle).cos(), k * v.x, k * v.y, k * v.z])
}

fn rotation_vector_from_matrix(m: &Matrix3<f64>) -> [f64; 3] {
    let [w, x, y, z] = quaternion_from_matrix(m);
    let mut axis = Vector3::new(x, y, z);
    let s = axis.norm();
    if s == 0.0 {
        return [0.0; 3];
    }
    let angle = 2.0 * s.atan2(w);
    axis /= s;
    if angle > PI - 1e-12 {
        let first = axis.iter().copied().find(|c| *c != 0.0).unwrap_or(0.0);
        if first < 0.0 {
            axis = -axis;
        }
    }
    let v = axis * angle;
    [v.x, v.y, v.z]
}

fn rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

fn rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

/// Rotation about the z axis.
pub fn rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

fn matrix_from_euler(yaw: f64, pitch: f64, roll: f64) -> Matrix3<f64> {
    rot_z(yaw) * rot_y(pitch) * rot_x(roll)
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a % (2.0 * PI);
    if w <= -PI {
        w += 2.0 * PI;
    } else if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// Shifts `a` by a multiple of `2pi` to the branch closest to `reference`.
pub fn unwrap_angle(a: f64, reference: f64) -> f64 {
    a - 2.0 * PI * ((a - reference) / (2.0 * PI)).round()
}

fn euler_from_matrix(m: &Matrix3<f64>) -> [f64; 3] {
    let cos_pitch = m[(0, 0)].hypot(m[(1, 0)]);
    let pitch = (-m[(2, 0)]).atan2(cos_pitch);
    let yaw = if cos_pitch < 1e-12 {
        // Fully locked: fold everything into yaw, roll comes out as zero.
        (-m[(0, 1)]).atan2(m[(1, 1)])
    } else {
        m[(1, 0)].atan2(m[(0, 0)])
    };
    // Roll from the residual rotation so that it absorbs any yaw error near lock.
    let residual = rot_y(pitch).transpose() * rot_z(yaw).transpose() * m;
    let roll = residual[(2, 1)].atan2(residual[(1, 1)]);
    [wrap_angle(yaw), pitch, wrap_angle(roll)]
}

/// Angle of the relative rotation `R1ᵀ R2`, in `[0, pi]`.
///
/// Evaluated as `atan2(sin, cos)` of the relative rotation; this is the
/// clamped `acos((tr - 1) / 2)` without its loss of precision near 0 and pi.
pub fn geodesic_distance(r1: &Matrix3<f64>, r2: &Matrix3<f64>) -> f64 {
    let m = r1.transpose() * r2;
    let cos = ((m.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    let sin = 0.5
        * Vector3::new(
            m[(2, 1)] - m[(1, 2)],
            m[(0, 2)] - m[(2, 0)],
            m[(1, 0)] - m[(0, 1)],
        )
        .norm();
    sin.atan2(cos)
}

/// Expands a symmetry set into an explicit transform list.
pub fn discretize_symmetries(s: &SymmetrySet, steps: usize) -> Result<Vec<Transform>, PoseError> {
    discretize_symmetries_capped(s, steps, MAX_SYMMETRY_TRANSFORMS)
}

/// Like [`discretize_symmetries`] with an explicit size cap.
///
/// Each discrete transform `D` is combined with every product
/// `C1(k1) ∘ C2(k2) ∘ ...` of sampled continuous rotations (`Ci(k)` rotates
/// by `2pi k / steps` about axis `i`), giving `C ∘ D`. The identity comes first.
pub fn discretize_symmetries_capped(
    s: &SymmetrySet,
    steps: usize,
    cap: usize,
) -> Result<Vec<Transform>, PoseError> {
    if steps == 0 {
        return Err(PoseError::ZeroSteps);
    }
    let requested = (steps as u128)
        .checked_pow(s.continuous.len() as u32)
        .and_then(|n| n.checked_mul(s.discrete.len() as u128))
        .unwrap_or(u128::MAX);
    if requested > cap as u128 {
        return Err(PoseError::StepsOverflow { requested, cap });
    }

    let mut continuous = vec![Transform::identity()];
    for sym in &s.continuous {
        let samples: Vec<Transform> = (0..steps)
            .map(|k| {
                let angle = 2.0 * PI * k as f64 / steps as f64;
                Transform::about_axis(&sym.axis, &sym.offset, angle)
            })
            .collect();
        continuous = continuous
            .iter()
            .flat_map(|c| samples.iter().map(move |sample| c.compose(sample)))
            .collect();
    }

    let mut out = Vec::with_capacity(requested as usize);
    for d in &s.discrete {
        for c in &continuous {
            out.push(c.compose(d));
        }
    }
    Ok(out)
}

/// Re-expresses a pose under a model symmetry: `R = R_p R_s`, `t = R_p t_s + t_p`.
pub fn apply_symmetry(p: &RigidPose, s: &Transform) -> RigidPose {
    RigidPose {
        rotation: p.rotation * s.rotation,
        translation: p.rotation * s.translation + p.translation,
        score: p.score,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx_mat(a: &Matrix3<f64>, b: &Matrix3<f64>, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    /// Rodrigues formula written out directly: `I + sin θ K + (1 - cos θ) K²`.
    fn rodrigues(axis: Vector3<f64>, angle: f64) -> Matrix3<f64> {
        let k = Matrix3::new(
            0.0, -axis.z, axis.y, axis.z, 0.0, -axis.x, -axis.y, axis.x, 0.0,
        );
        Matrix3::identity() + k * angle.sin() + k * k * (1.0 - angle.cos())
    }

    #[test]
    fn validate_identity() {
        assert!(validate_rotation(&Matrix3::identity()).is_ok());
    }

    #[test]
    fn validate_reflection() {
        let m = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(matches!(
            validate_rotation(&m),
            Err(PoseError::NegativeDeterminant { .. })
        ));
    }

    #[test]
    fn validate_scaled_entry() {
        let mut m = Matrix3::identity();
        m[(0, 0)] = 1.001;
        // RᵀR - I has a single nonzero entry 1.001² - 1 = 0.002001.
        match validate_rotation(&m) {
            Err(PoseError::NotOrthonormal { deviation }) => {
                assert!((deviation - 0.002001).abs() < 1e-12)
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn orthonormalize_repairs_small_noise_only() {
        let mut m = rot_z(0.4);
        m[(0, 1)] += 1e-6;
        let fixed = orthonormalize(&m).unwrap();
        validate_rotation(&fixed).unwrap();
        assert!(approx_mat(&fixed, &rot_z(0.4), 1e-5));
        m[(0, 1)] += 1e-2;
        assert!(orthonormalize(&m).is_err());
    }

    #[test]
    fn identity_quaternion() {
        assert_eq!(
            to_repr(&Matrix3::identity(), ReprTag::Quaternion),
            RotationRepr::Quaternion([1.0, 0.0, 0.0, 0.0])
        );
    }

    #[test]
    fn quarter_turn_about_z() {
        let r = rodrigues(Vector3::z(), PI / 2.0);
        let q = to_repr(&r, ReprTag::Quaternion);
        let expected = [0.5f64.sqrt(), 0.0, 0.0, 0.5f64.sqrt()];
        for (a, b) in q.values().iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        let v = to_repr(&r, ReprTag::AxisAngle);
        for (a, b) in v.values().iter().zip([0.0, 0.0, PI / 2.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn negative_quaternion_double_cover() {
        let m = from_repr(&RotationRepr::Quaternion([-1.0, 0.0, 0.0, 0.0])).unwrap();
        assert!(approx_mat(&m, &Matrix3::identity(), 1e-15));
        assert_eq!(
            to_repr(&m, ReprTag::Quaternion),
            RotationRepr::Quaternion([1.0, 0.0, 0.0, 0.0])
        );
    }

    #[test]
    fn non_unit_quaternion_rejected() {
        let r = RotationRepr::Quaternion([1.1, 0.0, 0.0, 0.0]);
        assert!(matches!(from_repr(&r), Err(PoseError::InvalidRepr { .. })));
        // Small drift is tolerated and renormalized.
        let r = RotationRepr::Quaternion([1.0 + 1e-8, 0.0, 0.0, 0.0]);
        assert!(from_repr(&r).is_ok());
    }

    #[test]
    fn euler_convention_is_zyx_intrinsic() {
        let (yaw, pitch, roll) = (0.3, -0.2, 1.1);
        let expected = rodrigues(Vector3::z(), yaw)
            * rodrigues(Vector3::y(), pitch)
            * rodrigues(Vector3::x(), roll);
        let e = to_repr(&expected, ReprTag::Euler);
        for (a, b) in e.values().iter().zip([yaw, pitch, roll]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn euler_gimbal_lock_flagged_and_round_trips() {
        let m = matrix_from_euler(0.7, PI / 2.0, -0.4);
        let e = to_repr(&m, ReprTag::Euler);
        assert!(e.gimbal_lock());
        assert!(approx_mat(&from_repr(&e).unwrap(), &m, 1e-6));
        assert!(!to_repr(&rot_z(0.2), ReprTag::Euler).gimbal_lock());
    }

    #[test]
    fn axis_angle_at_half_turn_is_canonical() {
        let m = rodrigues(Vector3::new(-1.0, 0.0, 0.0), PI);
        let v = to_repr(&m, ReprTag::AxisAngle);
        let vals = v.values();
        assert!((vals[0] - PI).abs() < 1e-9, "{vals:?}");
        let m = rodrigues(Vector3::new(0.0, -0.6, 0.8), PI);
        let vals = to_repr(&m, ReprTag::AxisAngle).values().to_vec();
        assert!(vals[1] > 0.0 && vals[2] < 0.0, "{vals:?}");
    }

    #[test]
    fn geodesic_examples() {
        let r = rodrigues(Vector3::new(1.0, 2.0, 3.0).normalize(), 0.9);
        assert!(geodesic_distance(&r, &r) < 1e-12);
        // trace(Rz(pi)) = -1 → acos(-1) = pi
        let d = geodesic_distance(&Matrix3::identity(), &rodrigues(Vector3::z(), PI));
        assert!((d - PI).abs() < 1e-12);
        // trace(Rx(pi/2)) = 1 → acos(0) = pi/2
        let d = geodesic_distance(&Matrix3::identity(), &rodrigues(Vector3::x(), PI / 2.0));
        assert!((d - PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn discretize_without_continuous_axes() {
        let half = Transform::new(rot_z(PI), Vector3::zeros()).unwrap();
        let set = SymmetrySet::new(vec![Transform::identity(), half], vec![], 10.0);
        let out = discretize_symmetries(&set, 64).unwrap();
        assert_eq!(out.len(), 2);
        assert!(out[0].is_identity(0.0));
        assert_eq!(out[1], half);
    }

    #[test]
    fn identity_is_inserted_first() {
        let half = Transform::new(rot_z(PI), Vector3::zeros()).unwrap();
        let set = SymmetrySet::new(vec![half], vec![], 1.0);
        assert_eq!(set.discrete().len(), 2);
        assert!(set.discrete()[0].is_identity(0.0));
        let set = SymmetrySet::new(vec![half, Transform::identity()], vec![], 1.0);
        assert_eq!(set.discrete().len(), 2);
        assert!(set.discrete()[0].is_identity(0.0));
    }

    #[test]
    fn discretize_continuous_z_four_steps() {
        let axis = ContinuousSymmetry::new(Vector3::z(), Vector3::zeros()).unwrap();
        let set = SymmetrySet::new(vec![], vec![axis], 1.0);
        let out = discretize_symmetries(&set, 4).unwrap();
        assert_eq!(out.len(), 4);
        for (k, t) in out.iter().enumerate() {
            let expected = rodrigues(Vector3::z(), k as f64 * PI / 2.0);
            assert!(approx_mat(t.rotation(), &expected, 1e-12));
            assert!(t.translation().norm() < 1e-12);
        }
    }

    #[test]
    fn continuous_axis_keeps_offset_fixed() {
        let offset = Vector3::new(5.0, -3.0, 12.0);
        let axis = ContinuousSymmetry::new(Vector3::new(1.0, 1.0, 0.0).normalize(), offset).unwrap();
        let set = SymmetrySet::new(vec![], vec![axis], 1.0);
        for t in discretize_symmetries(&set, 16).unwrap() {
            assert!((t.apply(&offset) - offset).norm() < 1e-12);
        }
    }

    #[test]
    fn discretize_errors() {
        let axis = ContinuousSymmetry::new(Vector3::z(), Vector3::zeros()).unwrap();
        let set = SymmetrySet::new(vec![], vec![axis, axis, axis, axis], 1.0);
        assert!(matches!(
            discretize_symmetries(&set, 64),
            Err(PoseError::StepsOverflow { .. })
        ));
        assert_eq!(discretize_symmetries(&set, 0), Err(PoseError::ZeroSteps));
        assert!(matches!(
            ContinuousSymmetry::new(Vector3::new(0.0, 0.0, 2.0), Vector3::zeros()),
            Err(PoseError::NonUnitAxis { .. })
        ));
    }

    #[test]
    fn apply_symmetry_examples() {
        let p = RigidPose::new(rot_z(0.3), Vector3::new(1.0, 2.0, 3.0), 0.7).unwrap();
        assert_eq!(apply_symmetry(&p, &Transform::identity()), p);

        let half = Transform::new(rot_z(PI), Vector3::zeros()).unwrap();
        let out = apply_symmetry(&RigidPose::identity(), &half);
        assert_eq!(out.rotation(), &rot_z(PI));
        assert_eq!(out.translation(), &Vector3::zeros());

        let p = RigidPose::new(rot_z(PI / 2.0), Vector3::new(1.0, 2.0, 3.0), 0.5).unwrap();
        let shift = Transform::new(Matrix3::identity(), Vector3::new(10.0, 0.0, 0.0)).unwrap();
        let out = apply_symmetry(&p, &shift);
        assert!((out.translation() - Vector3::new(1.0, 12.0, 3.0)).norm() < 1e-12);
        assert_eq!(out.score(), 0.5);
    }

    #[test]
    fn repr_tag_parsing() {
        for tag in ReprTag::ALL {
            assert_eq!(tag.name().parse::<ReprTag>().unwrap(), tag);
        }
        assert!("rodrigues".parse::<ReprTag>().is_err());
    }

    #[test]
    fn empty_model_rejected() {
        assert_eq!(
            ObjectModel::new(1, vec![], SymmetrySet::identity(1.0)),
            Err(PoseError::EmptyModel)
        );
    }
}
