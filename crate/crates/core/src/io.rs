//! Plain-text file formats.
//!
//! All tabular files are comma separated with a fixed header line and `\n`
//! line endings. Rotation and translation fields hold space separated numbers
//! inside a single CSV field; rotations are row-major, translations are in
//! millimetres. Floating point values are written in Rust's shortest
//! round-trip form unless noted otherwise, so re-serializing parsed output
//! reproduces the bytes.
//!
//! | file | header |
//! |------|--------|
//! | predictions | `scene_id,im_id,obj_id,member_id,score,R,t` |
//! | predictions, multi-instance | `scene_id,im_id,obj_id,instance_index,member_id,score,R,t` |
//! | ground truth | `scene_id,im_id,obj_id,instance_index,R,t` |
//! | Gaussian summaries | `scene_id,im_id,obj_id,instance_index,repr,mean,std` |
//! | reliability diagram | `p_expected,p_observed` (6 decimals) |
//! | UCS curve | `sigma_pred,ucs,raw_ucs,area` (6 decimals after the first column) |
//! | intrinsics | `fx,fy,cx,cy,width,height` |
//! | model points | `x,y,z` |
//! | pose errors | `scene_id,im_id,obj_id,instance_index,member,mssd,mspd` |
//!
//! Prediction files without an `instance_index` column put every row in
//! instance 0. Symmetries use the BOP `models_info.json` layout: an object
//! keyed map with `diameter`, `symmetries_discrete` (4×4 row-major matrices,
//! 16 numbers each) and `symmetries_continuous` (`axis`, `offset`).

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::ReliabilityDiagram;
use crate::ensemble::{EnsembleError, EnsembleSample, GaussianSummary, InstanceKey};
use crate::metrics::{CameraIntrinsics, MetricsError};
use crate::pose::{
    orthonormalize, ContinuousSymmetry, ObjectModel, PoseError, ReprTag, RigidPose, SymmetrySet,
    Transform,
};
use crate::simulate::{UcsCurve, UcsPoint};

pub const PREDICTION_HEADER: &str = "scene_id,im_id,obj_id,member_id,score,R,t";
pub const PREDICTION_HEADER_WITH_INSTANCE: &str =
    "scene_id,im_id,obj_id,instance_index,member_id,score,R,t";
pub const GROUND_TRUTH_HEADER: &str = "scene_id,im_id,obj_id,instance_index,R,t";
pub const SUMMARY_HEADER: &str = "scene_id,im_id,obj_id,instance_index,repr,mean,std";
pub const DIAGRAM_HEADER: &str = "p_expected,p_observed";
pub const CURVE_HEADER: &str = "sigma_pred,ucs,raw_ucs,area";
pub const INTRINSICS_HEADER: &str = "fx,fy,cx,cy,width,height";
pub const POINTS_HEADER: &str = "x,y,z";
pub const POSE_ERROR_HEADER: &str = "scene_id,im_id,obj_id,instance_index,member,mssd,mspd";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Stream(#[from] std::io::Error),
    #[error("unexpected header `{found}`, expected `{expected}`")]
    BadHeader { expected: String, found: String },
    #[error("line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("line {line}: member {member_id} appears twice for {key}")]
    DuplicateMember {
        line: u64,
        key: InstanceKey,
        member_id: u32,
    },
    #[error("line {line}: {source}")]
    BadRotation { line: u64, source: PoseError },
    #[error("{key}: {source}")]
    Ensemble {
        key: InstanceKey,
        source: EnsembleError,
    },
    #[error("object {obj_id}: {reason}")]
    BadSymmetry { obj_id: u32, reason: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

fn open(path: &Path) -> Result<File, IoError> {
    File::open(path).map_err(|source| IoError::Io { path: path.to_path_buf(), source })
}

fn create(path: &Path) -> Result<BufWriter<File>, IoError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| IoError::Io { path: path.to_path_buf(), source })
}

/// A data row with its 1-based line number.
struct Row {
    line: u64,
    fields: Vec<String>,
}

impl Row {
    fn malformed(&self, reason: impl Into<String>) -> IoError {
        IoError::MalformedRow { line: self.line, reason: reason.into() }
    }

    fn parse<T: std::str::FromStr>(&self, idx: usize, name: &str) -> Result<T, IoError> {
        self.fields[idx]
            .parse()
            .map_err(|_| self.malformed(format!("cannot parse {name} `{}`", self.fields[idx])))
    }

    fn numbers(&self, idx: usize, name: &str, count: usize) -> Result<Vec<f64>, IoError> {
        let values = self.fields[idx]
            .split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| self.malformed(format!("cannot parse {name} `{}`", self.fields[idx])))?;
        if values.len() != count {
            return Err(self.malformed(format!(
                "{name} needs {count} numbers, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(self.malformed(format!("{name} contains a non-finite number")));
        }
        Ok(values)
    }

    fn rotation(&self, idx: usize) -> Result<Matrix3<f64>, IoError> {
        let values = self.numbers(idx, "R", 9)?;
        orthonormalize(&Matrix3::from_row_slice(&values))
            .map_err(|source| IoError::BadRotation { line: self.line, source })
    }

    fn translation(&self, idx: usize) -> Result<Vector3<f64>, IoError> {
        Ok(Vector3::from_column_slice(&self.numbers(idx, "t", 3)?))
    }
}

/// Reads a CSV table, checking the header against one of `headers`.
/// Returns the index of the matched header and the data rows.
fn read_table<R: Read>(reader: R, headers: &[&str]) -> Result<(usize, Vec<Row>), IoError> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = csv.records();
    let header = match records.next() {
        Some(r) => r.map_err(csv_error)?,
        None => {
            return Err(IoError::BadHeader {
                expected: headers[0].into(),
                found: String::new(),
            })
        }
    };
    let found = header.iter().collect::<Vec<_>>().join(",");
    let variant = headers
        .iter()
        .position(|h| *h == found)
        .ok_or_else(|| IoError::BadHeader { expected: headers.join("` or `"), found })?;
    let width = headers[variant].split(',').count();
    let mut rows = Vec::new();
    for record in records {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        if record.len() != width {
            return Err(IoError::MalformedRow {
                line,
                reason: format!("expected {width} fields, got {}", record.len()),
            });
        }
        rows.push(Row { line, fields: record.iter().map(str::to_owned).collect() });
    }
    Ok((variant, rows))
}

fn csv_error(e: csv::Error) -> IoError {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(err) => IoError::Stream(err),
        other => IoError::MalformedRow { line, reason: format!("{other:?}") },
    }
}

fn join(values: impl IntoIterator<Item = f64>) -> String {
    values.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

fn rotation_field(r: &Matrix3<f64>) -> String {
    join((0..3).flat_map(|i| (0..3).map(move |j| r[(i, j)])))
}

/// Parses an ensemble prediction file into per-instance samples.
pub fn parse_predictions(path: &Path) -> Result<BTreeMap<InstanceKey, EnsembleSample>, IoError> {
    read_predictions(open(path)?)
}

pub fn read_predictions<R: Read>(reader: R) -> Result<BTreeMap<InstanceKey, EnsembleSample>, IoError> {
    let (variant, rows) = read_table(reader, &[PREDICTION_HEADER, PREDICTION_HEADER_WITH_INSTANCE])?;
    let offset = variant; // the instance column shifts everything after obj_id
    let mut groups: BTreeMap<InstanceKey, BTreeMap<u32, RigidPose>> = BTreeMap::new();
    for row in &rows {
        let key = InstanceKey {
            scene_id: row.parse(0, "scene_id")?,
            im_id: row.parse(1, "im_id")?,
            obj_id: row.parse(2, "obj_id")?,
            instance_index: if variant == 1 { row.parse(3, "instance_index")? } else { 0 },
        };
        let member_id: u32 = row.parse(3 + offset, "member_id")?;
        let score: f64 = row.parse(4 + offset, "score")?;
        let pose = RigidPose::new(row.rotation(5 + offset)?, row.translation(6 + offset)?, score)
            .map_err(|source| IoError::BadRotation { line: row.line, source })?;
        if groups.entry(key).or_default().insert(member_id, pose).is_some() {
            return Err(IoError::DuplicateMember { line: row.line, key, member_id });
        }
    }
    groups
        .into_iter()
        .map(|(key, members)| {
            let (ids, poses): (Vec<u32>, Vec<RigidPose>) = members.into_iter().unzip();
            EnsembleSample::with_ids(key, ids, poses)
                .map(|s| (key, s))
                .map_err(|source| IoError::Ensemble { key, source })
        })
        .collect()
}

/// Writes samples in key order, members in id order. The short header is
/// used when every instance index is 0.
pub fn write_predictions<'a, W: Write>(
    mut w: W,
    samples: impl IntoIterator<Item = &'a EnsembleSample> + Clone,
) -> Result<(), IoError> {
    let mut sorted: Vec<&EnsembleSample> = samples.into_iter().collect();
    sorted.sort_by_key(|s| *s.key());
    let with_instance = sorted.iter().any(|s| s.key().instance_index != 0);
    let header = if with_instance { PREDICTION_HEADER_WITH_INSTANCE } else { PREDICTION_HEADER };
    writeln!(w, "{header}")?;
    for s in sorted {
        let k = s.key();
        for (id, m) in s.member_ids().iter().zip(s.members()) {
            write!(w, "{},{},{},", k.scene_id, k.im_id, k.obj_id)?;
            if with_instance {
                write!(w, "{},", k.instance_index)?;
            }
            writeln!(
                w,
                "{id},{},{},{}",
                m.score(),
                rotation_field(m.rotation()),
                join(m.translation().iter().copied())
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_predictions<'a>(
    path: &Path,
    samples: impl IntoIterator<Item = &'a EnsembleSample> + Clone,
) -> Result<(), IoError> {
    write_predictions(create(path)?, samples)
}

/// Parses a ground-truth file. Scores are set to 0.
pub fn parse_ground_truth(path: &Path) -> Result<BTreeMap<InstanceKey, RigidPose>, IoError> {
    read_ground_truth(open(path)?)
}

pub fn read_ground_truth<R: Read>(reader: R) -> Result<BTreeMap<InstanceKey, RigidPose>, IoError> {
    let (_, rows) = read_table(reader, &[GROUND_TRUTH_HEADER])?;
    let mut out = BTreeMap::new();
    for row in &rows {
        let key = InstanceKey {
            scene_id: row.parse(0, "scene_id")?,
            im_id: row.parse(1, "im_id")?,
            obj_id: row.parse(2, "obj_id")?,
            instance_index: row.parse(3, "instance_index")?,
        };
        let pose = RigidPose::new(row.rotation(4)?, row.translation(5)?, 0.0)
            .map_err(|source| IoError::BadRotation { line: row.line, source })?;
        if out.insert(key, pose).is_some() {
            return Err(row.malformed(format!("duplicate ground truth for {key}")));
        }
    }
    Ok(out)
}

pub fn write_ground_truth<W: Write>(mut w: W, gt: &BTreeMap<InstanceKey, RigidPose>) -> Result<(), IoError> {
    writeln!(w, "{GROUND_TRUTH_HEADER}")?;
    for (k, p) in gt {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            k.scene_id,
            k.im_id,
            k.obj_id,
            k.instance_index,
            rotation_field(p.rotation()),
            join(p.translation().iter().copied())
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_ground_truth(path: &Path, gt: &BTreeMap<InstanceKey, RigidPose>) -> Result<(), IoError> {
    write_ground_truth(create(path)?, gt)
}

pub fn parse_summaries(path: &Path) -> Result<BTreeMap<InstanceKey, GaussianSummary>, IoError> {
    read_summaries(open(path)?)
}

pub fn read_summaries<R: Read>(reader: R) -> Result<BTreeMap<InstanceKey, GaussianSummary>, IoError> {
    let (_, rows) = read_table(reader, &[SUMMARY_HEADER])?;
    let mut out = BTreeMap::new();
    for row in &rows {
        let key = InstanceKey {
            scene_id: row.parse(0, "scene_id")?,
            im_id: row.parse(1, "im_id")?,
            obj_id: row.parse(2, "obj_id")?,
            instance_index: row.parse(3, "instance_index")?,
        };
        let tag: ReprTag = row.fields[4].parse().map_err(|e: String| row.malformed(e))?;
        let n = tag.len() + 3;
        let summary = GaussianSummary::new(tag, row.numbers(5, "mean", n)?, row.numbers(6, "std", n)?)
            .map_err(|e| row.malformed(e.to_string()))?;
        if out.insert(key, summary).is_some() {
            return Err(row.malformed(format!("duplicate summary for {key}")));
        }
    }
    Ok(out)
}

pub fn write_summaries<W: Write>(
    mut w: W,
    summaries: &BTreeMap<InstanceKey, GaussianSummary>,
) -> Result<(), IoError> {
    writeln!(w, "{SUMMARY_HEADER}")?;
    for (k, s) in summaries {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            k.scene_id,
            k.im_id,
            k.obj_id,
            k.instance_index,
            s.representation,
            join(s.mean.iter().copied()),
            join(s.std.iter().copied())
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_summaries(path: &Path, summaries: &BTreeMap<InstanceKey, GaussianSummary>) -> Result<(), IoError> {
    write_summaries(create(path)?, summaries)
}

/// Writes a reliability diagram with 6 decimals per value.
pub fn write_diagram(d: &ReliabilityDiagram, path: &Path) -> Result<(), IoError> {
    write_diagram_to(create(path)?, d)
}

pub fn write_diagram_to<W: Write>(mut w: W, d: &ReliabilityDiagram) -> Result<(), IoError> {
    writeln!(w, "{DIAGRAM_HEADER}")?;
    for (e, o) in d.expected.iter().zip(&d.observed) {
        writeln!(w, "{e:.6},{o:.6}")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a diagram back; the sample count is not stored and comes back as 0.
pub fn read_diagram<R: Read>(reader: R) -> Result<ReliabilityDiagram, IoError> {
    let (_, rows) = read_table(reader, &[DIAGRAM_HEADER])?;
    let mut expected = Vec::with_capacity(rows.len());
    let mut observed = Vec::with_capacity(rows.len());
    for row in &rows {
        expected.push(row.parse(0, "p_expected")?);
        observed.push(row.parse(1, "p_observed")?);
    }
    Ok(ReliabilityDiagram { expected, observed, sample_count: 0 })
}

pub fn write_curve_to<W: Write>(mut w: W, curve: &UcsCurve) -> Result<(), IoError> {
    writeln!(w, "{CURVE_HEADER}")?;
    for p in &curve.points {
        writeln!(w, "{},{:.6},{:.6},{:.6}", p.sigma_pred, p.ucs, p.raw_ucs, p.area)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_curve(curve: &UcsCurve, path: &Path) -> Result<(), IoError> {
    write_curve_to(create(path)?, curve)
}

pub fn read_curve<R: Read>(reader: R) -> Result<UcsCurve, IoError> {
    let (_, rows) = read_table(reader, &[CURVE_HEADER])?;
    let points = rows
        .iter()
        .map(|row| {
            Ok(UcsPoint {
                sigma_pred: row.parse(0, "sigma_pred")?,
                ucs: row.parse(1, "ucs")?,
                raw_ucs: row.parse(2, "raw_ucs")?,
                area: row.parse(3, "area")?,
            })
        })
        .collect::<Result<Vec<_>, IoError>>()?;
    Ok(UcsCurve { points })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ContinuousRecord {
    axis: [f64; 3],
    offset: [f64; 3],
}

/// One object entry of a symmetry file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelInfo {
    diameter: f64,
    #[serde(default)]
    symmetries_discrete: Vec<Vec<f64>>,
    #[serde(default)]
    symmetries_continuous: Vec<ContinuousRecord>,
}

fn symmetry_set(obj_id: u32, info: &ModelInfo) -> Result<SymmetrySet, IoError> {
    let bad = |reason: String| IoError::BadSymmetry { obj_id, reason };
    let discrete = info
        .symmetries_discrete
        .iter()
        .map(|m| {
            if m.len() != 16 {
                return Err(bad(format!("discrete symmetry needs 16 numbers, got {}", m.len())));
            }
            let r = Matrix3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]);
            let r = orthonormalize(&r).map_err(|e| bad(e.to_string()))?;
            Transform::new(r, Vector3::new(m[3], m[7], m[11])).map_err(|e| bad(e.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let continuous = info
        .symmetries_continuous
        .iter()
        .map(|c| {
            let axis = Vector3::from(c.axis);
            let norm = axis.norm();
            if !(norm > 0.0) {
                return Err(bad("continuous symmetry axis is zero".into()));
            }
            ContinuousSymmetry::new(axis / norm, Vector3::from(c.offset)).map_err(|e| bad(e.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SymmetrySet::new(discrete, continuous, info.diameter))
}

fn model_info(s: &SymmetrySet) -> ModelInfo {
    ModelInfo {
        diameter: s.diameter(),
        symmetries_discrete: s
            .discrete()
            .iter()
            .map(|t| {
                let (r, v) = (t.rotation(), t.translation());
                vec![
                    r[(0, 0)], r[(0, 1)], r[(0, 2)], v.x,
                    r[(1, 0)], r[(1, 1)], r[(1, 2)], v.y,
                    r[(2, 0)], r[(2, 1)], r[(2, 2)], v.z,
                    0.0, 0.0, 0.0, 1.0,
                ]
            })
            .collect(),
        symmetries_continuous: s
            .continuous()
            .iter()
            .map(|c| ContinuousRecord { axis: (*c.axis()).into(), offset: (*c.offset()).into() })
            .collect(),
    }
}

pub fn parse_symmetries(path: &Path) -> Result<BTreeMap<u32, SymmetrySet>, IoError> {
    read_symmetries(open(path)?)
}

pub fn read_symmetries<R: Read>(reader: R) -> Result<BTreeMap<u32, SymmetrySet>, IoError> {
    let infos: BTreeMap<u32, ModelInfo> = serde_json::from_reader(reader)?;
    infos.iter().map(|(id, info)| Ok((*id, symmetry_set(*id, info)?))).collect()
}

pub fn write_symmetries<W: Write>(mut w: W, sets: &BTreeMap<u32, SymmetrySet>) -> Result<(), IoError> {
    let infos: BTreeMap<u32, ModelInfo> = sets.iter().map(|(id, s)| (*id, model_info(s))).collect();
    serde_json::to_writer_pretty(&mut w, &infos)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn save_symmetries(path: &Path, sets: &BTreeMap<u32, SymmetrySet>) -> Result<(), IoError> {
    write_symmetries(create(path)?, sets)
}

pub fn parse_intrinsics(path: &Path) -> Result<CameraIntrinsics, IoError> {
    read_intrinsics(open(path)?)
}

pub fn read_intrinsics<R: Read>(reader: R) -> Result<CameraIntrinsics, IoError> {
    let (_, rows) = read_table(reader, &[INTRINSICS_HEADER])?;
    let [row] = rows.as_slice() else {
        return Err(IoError::MalformedRow {
            line: 2,
            reason: format!("expected exactly one intrinsics row, got {}", rows.len()),
        });
    };
    Ok(CameraIntrinsics::new(
        row.parse(0, "fx")?,
        row.parse(1, "fy")?,
        row.parse(2, "cx")?,
        row.parse(3, "cy")?,
        row.parse(4, "width")?,
        row.parse(5, "height")?,
    )?)
}

pub fn write_intrinsics<W: Write>(mut w: W, k: &CameraIntrinsics) -> Result<(), IoError> {
    writeln!(w, "{INTRINSICS_HEADER}")?;
    writeln!(w, "{},{},{},{},{},{}", k.fx, k.fy, k.cx, k.cy, k.width, k.height)?;
    w.flush()?;
    Ok(())
}

pub fn read_points<R: Read>(reader: R) -> Result<Vec<Vector3<f64>>, IoError> {
    let (_, rows) = read_table(reader, &[POINTS_HEADER])?;
    rows.iter()
        .map(|row| Ok(Vector3::new(row.parse(0, "x")?, row.parse(1, "y")?, row.parse(2, "z")?)))
        .collect()
}

pub fn write_points<W: Write>(mut w: W, points: &[Vector3<f64>]) -> Result<(), IoError> {
    writeln!(w, "{POINTS_HEADER}")?;
    for p in points {
        writeln!(w, "{},{},{}", p.x, p.y, p.z)?;
    }
    w.flush()?;
    Ok(())
}

/// Path of an object's point file inside a models directory.
pub fn model_points_path(dir: &Path, obj_id: u32) -> PathBuf {
    dir.join(format!("obj_{obj_id:06}.csv"))
}

/// Loads an object model; symmetries default to identity only.
pub fn load_model(dir: &Path, obj_id: u32, symmetries: Option<&SymmetrySet>) -> Result<ObjectModel, IoError> {
    let points = read_points(open(&model_points_path(dir, obj_id))?)?;
    let symmetries = symmetries
        .cloned()
        .unwrap_or_else(|| SymmetrySet::identity(crate::pose::point_set_diameter(&points)));
    ObjectModel::new(obj_id, points, symmetries)
        .map_err(|e| IoError::BadSymmetry { obj_id, reason: e.to_string() })
}

/// One row of a pose error report. `member` is `None` for the ensemble mean.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseErrorRow {
    pub key: InstanceKey,
    pub member: Option<u32>,
    pub mssd: Option<f64>,
    pub mspd: Option<f64>,
}

pub fn write_pose_errors<W: Write>(mut w: W, rows: &[PoseErrorRow]) -> Result<(), IoError> {
    let opt = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_default();
    writeln!(w, "{POSE_ERROR_HEADER}")?;
    for r in rows {
        let k = r.key;
        let member = r.member.map_or_else(|| "mean".to_string(), |m| m.to_string());
        writeln!(
            w,
            "{},{},{},{},{member},{},{}",
            k.scene_id,
            k.im_id,
            k.obj_id,
            k.instance_index,
            opt(r.mssd),
            opt(r.mspd)
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_pose_errors(path: &Path, rows: &[PoseErrorRow]) -> Result<(), IoError> {
    write_pose_errors(create(path)?, rows)
}
