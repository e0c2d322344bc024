//! Synthetic ensemble datasets with a known per-element Gaussian spread.
//!
//! For every instance a mean axis-angle vector `mu` (norm at most 2 rad) and a
//! mean translation are drawn, together with per-element standard deviations.
//! Member noise is standardized so the members' sample mean and sample std
//! equal `mu` and `sigma` exactly; the ground truth is one more draw from
//! `N(mu, sigma²)` per element. Members other than the top-scoring one and the
//! ground truth are then moved by a random symmetry of their object, which
//! alignment has to undo.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nalgebra::Vector3;
use posecal::ensemble::{EnsembleSample, InstanceKey};
use posecal::io;
use posecal::pose::{apply_symmetry, rot_z, rotation_from_vector, RigidPose, SymmetrySet, Transform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Object 1 has a 4-fold symmetry about z; object 2 has none.
pub fn symmetries() -> BTreeMap<u32, SymmetrySet> {
    let quarter = |k: f64| Transform::new(rot_z(k * PI / 2.0), Vector3::zeros()).unwrap();
    let mut map = BTreeMap::new();
    map.insert(1, SymmetrySet::new(vec![quarter(1.0), quarter(2.0), quarter(3.0)], vec![], 120.0));
    map
}

fn symmetry_group(obj_id: u32) -> Vec<Transform> {
    match obj_id {
        1 => (0..4).map(|k| Transform::new(rot_z(k as f64 * PI / 2.0), Vector3::zeros()).unwrap()).collect(),
        _ => vec![Transform::identity()],
    }
}

fn standardized(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let mean = z.iter().sum::<f64>() / n as f64;
    let sd = (z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    z.iter().map(|v| (v - mean) / sd).collect()
}

pub struct Dataset {
    pub predictions: Vec<EnsembleSample>,
    pub ground_truth: BTreeMap<InstanceKey, RigidPose>,
}

pub fn generate(instances: usize, members: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut predictions = Vec::with_capacity(instances);
    let mut ground_truth = BTreeMap::new();
    for t in 0..instances {
        let key = InstanceKey::new(t as u32 / 50, t as u32 % 50, 1 + (t % 2) as u32, 0);
        let group = symmetry_group(key.obj_id);

        let dir = Vector3::<f64>::from_fn(|_, _| rng.sample(StandardNormal)).normalize();
        let mu: Vec<f64> = (dir * rng.random_range(0.0..2.0))
            .iter()
            .copied()
            .chain([rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0), rng.random_range(500.0..1500.0)])
            .collect();
        let sigma: Vec<f64> = (0..6)
            .map(|d| if d < 3 { rng.random_range(0.02..0.08) } else { rng.random_range(1.0..10.0) })
            .collect();
        let noise: Vec<Vec<f64>> = (0..6).map(|_| standardized(&mut rng, members)).collect();

        let pose = |v: &[f64]| {
            RigidPose::new(
                rotation_from_vector(&Vector3::new(v[0], v[1], v[2])),
                Vector3::new(v[3], v[4], v[5]),
                0.0,
            )
            .unwrap()
        };
        let mut member_poses = Vec::with_capacity(members);
        #[allow(clippy::needless_range_loop)]
        for i in 0..members {
            let v: Vec<f64> = (0..6).map(|d| mu[d] + sigma[d] * noise[d][i]).collect();
            // Member 0 scores highest and stays on the original branch.
            let score = if i == 0 { 1.0 } else { rng.random_range(0.0..0.99) };
            let p = pose(&v).with_score(score);
            let p = if i == 0 { p } else { apply_symmetry(&p, &group[rng.random_range(0..group.len())]) };
            member_poses.push(p);
        }
        predictions.push(EnsembleSample::new(key, member_poses).unwrap());

        let g: Vec<f64> = (0..6).map(|d| mu[d] + sigma[d] * rng.sample::<f64, _>(StandardNormal)).collect();
        ground_truth.insert(key, apply_symmetry(&pose(&g), &group[rng.random_range(0..group.len())]));
    }
    Dataset { predictions, ground_truth }
}

/// Writes `pred.csv`, `gt.csv` and `sym.json` into `dir`.
pub fn write(dir: &Path, data: &Dataset) -> (PathBuf, PathBuf, PathBuf) {
    let (pred, gt, sym) = (dir.join("pred.csv"), dir.join("gt.csv"), dir.join("sym.json"));
    io::save_predictions(&pred, &data.predictions).unwrap();
    io::save_ground_truth(&gt, &data.ground_truth).unwrap();
    io::save_symmetries(&sym, &symmetries()).unwrap();
    (pred, gt, sym)
}

pub fn posecal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_posecal")).args(args).output().unwrap()
}

pub fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Value of a `NAME=value` line on stdout.
pub fn stdout_value(out: &Output, name: &str) -> Option<f64> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{name}="))?.parse().ok())
}
