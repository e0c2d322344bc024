//! Ensemble samples: symmetry alignment, mean pose and Gaussian summaries.

use std::fmt;

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::pose::{
    apply_symmetry, canonical_quaternion, discretize_symmetries, from_repr, geodesic_distance,
    project_to_so3, to_repr, unwrap_angle, PoseError, ReprTag, RigidPose, RotationRepr,
    SymmetrySet, Transform,
};

/// Distances closer than this are treated as ties during alignment.
const TIE_TOLERANCE: f64 = 1e-12;

/// Smallest singular value below which an averaged rotation matrix is rejected.
const DEGENERATE_MEAN_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnsembleError {
    #[error("an ensemble needs at least 2 members, got {0}")]
    TooFewMembers(usize),
    #[error("{ids} member ids for {members} members")]
    MemberIdMismatch { ids: usize, members: usize },
    #[error("symmetry transform list is empty (it must contain the identity)")]
    EmptySymmetrySet,
    #[error("ensemble sample is already aligned")]
    AlreadyAligned,
    #[error("averaged rotation is rank deficient (smallest singular value {0:e})")]
    DegenerateMean(f64),
    #[error("input list is empty")]
    EmptyInput,
    #[error("vector {index} has {found} elements, expected {expected}")]
    DimensionMismatch { index: usize, expected: usize, found: usize },
    #[error(transparent)]
    Pose(#[from] PoseError),
}

/// Identifies one annotated object instance in one image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct InstanceKey {
    pub scene_id: u32,
    pub im_id: u32,
    pub obj_id: u32,
    pub instance_index: u32,
}

impl InstanceKey {
    pub fn new(scene_id: u32, im_id: u32, obj_id: u32, instance_index: u32) -> Self {
        Self { scene_id, im_id, obj_id, instance_index }
    }
}

impl fmt::Display for InstanceKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "scene {} image {} object {} instance {}",
            self.scene_id, self.im_id, self.obj_id, self.instance_index
        )
    }
}

/// The N member predictions for one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSample {
    key: InstanceKey,
    member_ids: Vec<u32>,
    members: Vec<RigidPose>,
    aligned: bool,
}

impl EnsembleSample {
    /// Members are numbered `0..N` in order.
    pub fn new(key: InstanceKey, members: Vec<RigidPose>) -> Result<Self, EnsembleError> {
        let ids = (0..members.len() as u32).collect();
        Self::with_ids(key, ids, members)
    }

    pub fn with_ids(
        key: InstanceKey,
        member_ids: Vec<u32>,
        members: Vec<RigidPose>,
    ) -> Result<Self, EnsembleError> {
        if members.len() < 2 {
            return Err(EnsembleError::TooFewMembers(members.len()));
        }
        if member_ids.len() != members.len() {
            return Err(EnsembleError::MemberIdMismatch {
                ids: member_ids.len(),
                members: members.len(),
            });
        }
        Ok(Self { key, member_ids, members, aligned: false })
    }

    /// Marks a sample as aligned without touching its members, e.g. after
    /// reading back a file written by the alignment step.
    pub fn assume_aligned(mut self) -> Self {
        self.aligned = true;
        self
    }

    pub fn key(&self) -> &InstanceKey {
        &self.key
    }

    pub fn member_ids(&self) -> &[u32] {
        &self.member_ids
    }

    pub fn members(&self) -> &[RigidPose] {
        &self.members
    }

    pub fn is_aligned(&self) -> bool {
        self.aligned
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Index of the highest-scoring member; the lowest index wins ties.
    pub fn reference_index(&self) -> usize {
        let mut best = 0;
        for (i, m) in self.members.iter().enumerate().skip(1) {
            if m.score() > self.members[best].score() {
                best = i;
            }
        }
        best
    }

    pub fn reference(&self) -> &RigidPose {
        &self.members[self.reference_index()]
    }
}

/// Index of the transform that brings `pose` closest to `reference` in
/// rotation. Ties go to the smaller translation change, then to list order.
pub fn best_symmetry(
    pose: &RigidPose,
    reference: &Matrix3<f64>,
    transforms: &[Transform],
) -> Option<usize> {
    let mut best: Option<(usize, f64, f64)> = None;
    for (i, s) in transforms.iter().enumerate() {
        let d = geodesic_distance(&(pose.rotation() * s.rotation()), reference);
        let shift = (pose.rotation() * s.translation()).norm();
        let better = match best {
            None => true,
            Some((_, bd, bs)) => {
                d < bd - TIE_TOLERANCE || ((d - bd).abs() <= TIE_TOLERANCE && shift < bs - TIE_TOLERANCE)
            }
        };
        if better {
            best = Some((i, d, shift));
        }
    }
    best.map(|(i, _, _)| i)
}

/// Moves every non-reference member onto the symmetry representative closest
/// to the highest-scoring member.
pub fn align_ensemble(
    s: &EnsembleSample,
    syms: &SymmetrySet,
    steps: usize,
) -> Result<EnsembleSample, EnsembleError> {
    if s.aligned {
        return Err(EnsembleError::AlreadyAligned);
    }
    let transforms = discretize_symmetries(syms, steps)?;
    align_with_transforms(s, &transforms)
}

/// [`align_ensemble`] over an already discretized transform list.
pub fn align_with_transforms(
    s: &EnsembleSample,
    transforms: &[Transform],
) -> Result<EnsembleSample, EnsembleError> {
    if s.aligned {
        return Err(EnsembleError::AlreadyAligned);
    }
    if transforms.is_empty() {
        return Err(EnsembleError::EmptySymmetrySet);
    }
    let ref_idx = s.reference_index();
    let reference = *s.members[ref_idx].rotation();
    let members = s
        .members
        .iter()
        .enumerate()
        .map(|(i, m)| {
            if i == ref_idx {
                *m
            } else {
                let k = best_symmetry(m, &reference, transforms).expect("non-empty transforms");
                apply_symmetry(m, &transforms[k])
            }
        })
        .collect();
    Ok(EnsembleSample {
        key: s.key,
        member_ids: s.member_ids.clone(),
        members,
        aligned: true,
    })
}

/// Shifted mean: exact when all values are equal.
fn mean_of(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let mut it = values.clone();
    let Some(first) = it.next() else {
        return f64::NAN;
    };
    let n = values.clone().count() as f64;
    first + values.map(|v| v - first).sum::<f64>() / n
}

fn sample_std(values: impl Iterator<Item = f64> + Clone, mean: f64) -> f64 {
    let n = values.clone().count();
    if n < 2 {
        return 0.0;
    }
    (values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
}

/// Chordal L2 mean pose of an (aligned) ensemble.
///
/// The rotation is the arithmetic mean of the member matrices projected back
/// onto SO(3); translation and score are plain means.
pub fn mean_pose(s: &EnsembleSample) -> Result<RigidPose, EnsembleError> {
    let m = &s.members;
    let mut rotation = Matrix3::zeros();
    let mut translation = Vector3::zeros();
    for i in 0..3 {
        translation[i] = mean_of(m.iter().map(|p| p.translation()[i]));
        for j in 0..3 {
            rotation[(i, j)] = mean_of(m.iter().map(|p| p.rotation()[(i, j)]));
        }
    }
    let (projected, min_sv) = project_to_so3(&rotation);
    if !(min_sv >= DEGENERATE_MEAN_TOLERANCE) {
        return Err(EnsembleError::DegenerateMean(min_sv));
    }
    let score = mean_of(m.iter().map(|p| p.score()));
    Ok(RigidPose::new(projected, translation, score)?)
}

/// Per-element Gaussian fitted to an ensemble in one rotation representation.
///
/// `mean` and `std` hold the rotation parameters followed by the three
/// translation components (millimetres).
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSummary {
    pub representation: ReprTag,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Set when any Euler-encoded member was near gimbal lock.
    pub gimbal_lock: bool,
}

impl GaussianSummary {
    pub fn new(representation: ReprTag, mean: Vec<f64>, std: Vec<f64>) -> Result<Self, EnsembleError> {
        let expected = representation.len() + 3;
        for (index, v) in [&mean, &std].into_iter().enumerate() {
            if v.len() != expected {
                return Err(EnsembleError::DimensionMismatch { index, expected, found: v.len() });
            }
        }
        if std.iter().any(|s| !(*s >= 0.0)) {
            return Err(EnsembleError::Pose(PoseError::InvalidRepr {
                tag: representation,
                reason: "standard deviations must be non-negative".into(),
            }));
        }
        Ok(Self { representation, mean, std, gimbal_lock: false })
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// Number of leading rotation elements.
    pub fn rotation_len(&self) -> usize {
        self.representation.len()
    }

    /// A rotation close to the mean, used as anchor for target alignment.
    pub fn anchor_rotation(&self) -> Result<Matrix3<f64>, EnsembleError> {
        let rot = &self.mean[..self.rotation_len()];
        Ok(match self.representation {
            ReprTag::Matrix => {
                let (r, min_sv) = project_to_so3(&Matrix3::from_row_slice(rot));
                if !(min_sv >= DEGENERATE_MEAN_TOLERANCE) {
                    return Err(EnsembleError::DegenerateMean(min_sv));
                }
                r
            }
            ReprTag::Quaternion => {
                let norm = rot.iter().map(|c| c * c).sum::<f64>().sqrt();
                if !(norm > DEGENERATE_MEAN_TOLERANCE) {
                    return Err(EnsembleError::DegenerateMean(norm));
                }
                let q: Vec<f64> = rot.iter().map(|c| c / norm).collect();
                from_repr(&RotationRepr::from_values(ReprTag::Quaternion, &q)?)?
            }
            tag => from_repr(&RotationRepr::from_values(tag, rot)?)?,
        })
    }
}

/// Rotation parameters of `r` with sign/branch ambiguities resolved toward
/// `reference` (same representation): quaternions take the hemisphere of the
/// reference, Euler angles the `2pi` branch nearest to it.
pub fn encode_near(r: &Matrix3<f64>, tag: ReprTag, reference: &[f64]) -> RotationRepr {
    let repr = to_repr(r, tag);
    match repr {
        RotationRepr::Quaternion(q) => {
            let dot: f64 = q.iter().zip(reference).map(|(a, b)| a * b).sum();
            RotationRepr::Quaternion(if dot < 0.0 { q.map(|c| -c) } else { q })
        }
        RotationRepr::Euler(e) => {
            RotationRepr::Euler([0, 1, 2].map(|i| unwrap_angle(e[i], reference[i])))
        }
        other => other,
    }
}

/// Gaussian summary of an aligned ensemble in the chosen representation,
/// using the sample standard deviation (divisor N − 1).
pub fn fit_gaussian(s: &EnsembleSample, tag: ReprTag) -> Result<GaussianSummary, EnsembleError> {
    if s.members.len() < 2 {
        return Err(EnsembleError::TooFewMembers(s.members.len()));
    }
    let reference = to_repr(s.reference().rotation(), tag);
    let reference = match reference {
        RotationRepr::Quaternion(q) => RotationRepr::Quaternion(canonical_quaternion(q)),
        other => other,
    };
    let mut gimbal_lock = false;
    let rows: Vec<Vec<f64>> = s
        .members
        .iter()
        .map(|m| {
            gimbal_lock |= to_repr(m.rotation(), tag).gimbal_lock();
            let mut row = encode_near(m.rotation(), tag, reference.values()).values().to_vec();
            row.extend(m.translation().iter());
            row
        })
        .collect();
    let dim = tag.len() + 3;
    let mean: Vec<f64> = (0..dim).map(|d| mean_of(rows.iter().map(|r| r[d]))).collect();
    let std = (0..dim)
        .map(|d| sample_std(rows.iter().map(|r| r[d]), mean[d]))
        .collect();
    Ok(GaussianSummary { representation: tag, mean, std, gimbal_lock })
}

/// Expresses a ground-truth pose in a summary's coordinates: the pose is first
/// moved onto the symmetry representative nearest the summary's anchor
/// rotation, then encoded with the same hemisphere/branch fixes, with the
/// translation appended.
pub fn target_vector(
    gt: &RigidPose,
    summary: &GaussianSummary,
    transforms: &[Transform],
) -> Result<Vec<f64>, EnsembleError> {
    if transforms.is_empty() {
        return Err(EnsembleError::EmptySymmetrySet);
    }
    let anchor = summary.anchor_rotation()?;
    let k = best_symmetry(gt, &anchor, transforms).expect("non-empty transforms");
    let aligned = apply_symmetry(gt, &transforms[k]);
    let tag = summary.representation;
    let mut out = encode_near(aligned.rotation(), tag, &summary.mean[..tag.len()])
        .values()
        .to_vec();
    out.extend(aligned.translation().iter());
    Ok(out)
}

/// Scaled vectors and the `(min, max)` of every dimension.
pub type Normalized = (Vec<Vec<f64>>, Vec<(f64, f64)>);

/// Per-dimension min-max scaling to `[0, 1]`; constant dimensions map to 0.5.
pub fn minmax_normalize(v: &[Vec<f64>]) -> Result<Normalized, EnsembleError> {
    let first = v.first().ok_or(EnsembleError::EmptyInput)?;
    let dim = first.len();
    if let Some((index, row)) = v.iter().enumerate().find(|(_, r)| r.len() != dim) {
        return Err(EnsembleError::DimensionMismatch { index, expected: dim, found: row.len() });
    }
    let ranges: Vec<(f64, f64)> = (0..dim)
        .map(|d| {
            v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                (lo.min(r[d]), hi.max(r[d]))
            })
        })
        .collect();
    let scaled = v
        .iter()
        .map(|r| {
            r.iter()
                .zip(&ranges)
                .map(|(x, (lo, hi))| if hi > lo { (x - lo) / (hi - lo) } else { 0.5 })
                .collect()
        })
        .collect();
    Ok((scaled, ranges))
}
