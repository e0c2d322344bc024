use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use posecal::calibration::{calibrate_dimensions, ConfidenceLevels};
use posecal::ensemble::{align_with_transforms, fit_gaussian, mean_pose, target_vector, EnsembleSample, InstanceKey};
use posecal::io::{self, PoseErrorRow};
use posecal::metrics::{average_recall, mspd_with, mspd_thresholds, mssd_thresholds, mssd_with, MetricsError};
use posecal::pose::{discretize_symmetries, ObjectModel, ReprTag, SymmetrySet, Transform, DEFAULT_SYMMETRY_STEPS};
use posecal::simulate::{simulate_ucs, SimulationConfig, RNG_ALGORITHM};

/// Calibration scoring for ensemble pose uncertainty.
#[derive(Debug, Parser)]
#[command(name = "posecal", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sweep the predicted sigma on synthetic scalar data and write the UCS curve.
    Simulate {
        #[arg(long, default_value_t = 10_000)]
        size: usize,
        #[arg(long, default_value_t = 0.3)]
        sigma_true: f64,
        /// Comma separated list of predicted standard deviations.
        #[arg(long, value_delimiter = ',', required = true)]
        sigma_pred: Vec<f64>,
        #[arg(long, default_value_t = 0.0)]
        outlier_frac: f64,
        #[arg(long, default_value_t = 3.0)]
        outlier_sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Align ensemble members under object symmetries.
    Align {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        sym: PathBuf,
        /// Samples per continuous symmetry axis.
        #[arg(long, default_value_t = DEFAULT_SYMMETRY_STEPS)]
        steps: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit per-element Gaussians to aligned ensembles.
    Summarize {
        #[arg(long)]
        aligned: PathBuf,
        #[arg(long, value_parser = parse_repr)]
        repr: ReprTag,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score Gaussian summaries against ground truth.
    Calibrate {
        #[arg(long)]
        summary: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Symmetry file; without it objects are treated as asymmetric.
        #[arg(long)]
        sym: Option<PathBuf>,
        #[arg(long, value_parser = parse_repr)]
        repr: ReprTag,
        #[arg(long, default_value_t = 0.1)]
        dp: f64,
        #[arg(long, value_enum, default_value_t = Split::Pooled)]
        split: Split,
        #[arg(long, default_value_t = DEFAULT_SYMMETRY_STEPS)]
        steps: usize,
        #[arg(long)]
        out_diagram: PathBuf,
    },
    /// Symmetry-aware MSSD/MSPD of every member and of the ensemble mean.
    Metrics {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Directory with `obj_XXXXXX.csv` point files.
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        intrinsics: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Print average recall of the ensemble mean.
        #[arg(long)]
        ar: bool,
        #[arg(long)]
        sym: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_SYMMETRY_STEPS)]
        steps: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Split {
    Orientation,
    Position,
    Pooled,
}

fn parse_repr(s: &str) -> Result<ReprTag, String> {
    s.parse()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate { size, sigma_true, sigma_pred, outlier_frac, outlier_sigma, seed, out } => {
            let cfg = SimulationConfig {
                dataset_size: size,
                sigma_true,
                sigma_pred_grid: sigma_pred,
                outlier_fraction: outlier_frac,
                outlier_sigma_pred: outlier_sigma,
                seed,
                ..Default::default()
            };
            eprintln!("rng: {RNG_ALGORITHM}, seed {seed}");
            let curve = simulate_ucs(&cfg)?;
            io::write_curve(&curve, &out)?;
        }
        Command::Align { pred, sym, steps, out } => {
            let samples = io::parse_predictions(&pred)?;
            let symmetries = io::parse_symmetries(&sym)?;
            let transforms = transform_table(&symmetries, samples.keys().map(|k| k.obj_id), steps)?;
            let aligned = samples
                .par_iter()
                .map(|(key, s)| {
                    align_with_transforms(s, &transforms[&key.obj_id]).with_context(|| key.to_string())
                })
                .collect::<Result<Vec<_>>>()?;
            io::save_predictions(&out, &aligned)?;
        }
        Command::Summarize { aligned, repr, out } => {
            let samples = io::parse_predictions(&aligned)?;
            let fitted = samples
                .par_iter()
                .map(|(key, s)| {
                    let g = fit_gaussian(&s.clone().assume_aligned(), repr).with_context(|| key.to_string())?;
                    Ok((*key, g))
                })
                .collect::<Result<BTreeMap<_, _>>>()?;
            let locked = fitted.values().filter(|g| g.gimbal_lock).count();
            if locked > 0 {
                eprintln!("warning: {locked} instance(s) have members near gimbal lock");
            }
            io::save_summaries(&out, &fitted)?;
        }
        Command::Calibrate { summary, gt, sym, repr, dp, split, steps, out_diagram } => {
            let summaries = io::parse_summaries(&summary)?;
            let ground_truth = io::parse_ground_truth(&gt)?;
            let symmetries = match &sym {
                Some(path) => io::parse_symmetries(path)?,
                None => BTreeMap::new(),
            };
            let levels = ConfidenceLevels::uniform(dp)?;
            if let Some((key, s)) = summaries.iter().find(|(_, s)| s.representation != repr) {
                bail!("{key}: summary uses {} but --repr is {repr}", s.representation);
            }
            let transforms = transform_table(&symmetries, summaries.keys().map(|k| k.obj_id), steps)?;
            let matched: Vec<_> = summaries
                .iter()
                .filter_map(|(key, s)| match ground_truth.get(key) {
                    Some(g) => Some((key, s, g)),
                    None => {
                        eprintln!("warning: no ground truth for {key}, skipped");
                        None
                    }
                })
                .collect();
            if matched.is_empty() {
                bail!("no summary has matching ground truth");
            }
            let targets = matched
                .par_iter()
                .map(|(key, s, g)| target_vector(g, s, &transforms[&key.obj_id]).with_context(|| key.to_string()))
                .collect::<Result<Vec<_>>>()?;
            let fits: Vec<_> = matched.iter().map(|(_, s, _)| (*s).clone()).collect();
            let n = repr.len();
            let dims: Vec<usize> = match split {
                Split::Orientation => (0..n).collect(),
                Split::Position => (n..n + 3).collect(),
                Split::Pooled => (0..n + 3).collect(),
            };
            let report = calibrate_dimensions(&fits, &targets, &dims, &levels)?;
            io::write_diagram(&report.diagram, &out_diagram)?;
            println!("UCS={:.4}", report.ucs);
            println!("A={:.4}", report.area);
        }
        Command::Metrics { pred, gt, models, intrinsics, out, ar, sym, steps } => {
            metrics(&pred, &gt, &models, &intrinsics, &out, ar, sym.as_deref(), steps)?;
        }
    }
    Ok(())
}

/// Discretized symmetries of every listed object; objects missing from the
/// symmetry file only get the identity.
fn transform_table(
    symmetries: &BTreeMap<u32, SymmetrySet>,
    objects: impl Iterator<Item = u32>,
    steps: usize,
) -> Result<BTreeMap<u32, Vec<Transform>>> {
    let mut table = BTreeMap::new();
    for obj in objects {
        if table.contains_key(&obj) {
            continue;
        }
        let transforms = match symmetries.get(&obj) {
            Some(s) => discretize_symmetries(s, steps).with_context(|| format!("object {obj}"))?,
            None => vec![Transform::identity()],
        };
        table.insert(obj, transforms);
    }
    Ok(table)
}

struct Scored {
    rows: Vec<PoseErrorRow>,
    /// Errors of the mean pose: MSSD over the diameter, and MSPD.
    mean: (Option<f64>, Option<f64>),
}

fn pose_errors(
    sample: &EnsembleSample,
    gt: &posecal::RigidPose,
    model: &ObjectModel,
    k: &posecal::metrics::CameraIntrinsics,
    transforms: &[Transform],
) -> Result<Scored> {
    let key = *sample.key();
    let aligned = align_with_transforms(sample, transforms)?;
    let errors = |p: &posecal::RigidPose| -> Result<(f64, Option<f64>)> {
        let mssd = mssd_with(p, gt, model.points(), transforms);
        let mspd = match mspd_with(p, gt, model.points(), k, transforms) {
            Ok(v) => Some(v),
            Err(MetricsError::BehindCamera(_)) => None,
            Err(e) => return Err(e.into()),
        };
        Ok((mssd, mspd))
    };
    let mut rows = Vec::with_capacity(aligned.len() + 1);
    for (id, m) in aligned.member_ids().iter().zip(aligned.members()) {
        let (mssd, mspd) = errors(m)?;
        rows.push(PoseErrorRow { key, member: Some(*id), mssd: Some(mssd), mspd });
    }
    let mean = match mean_pose(&aligned) {
        Ok(p) => {
            let (mssd, mspd) = errors(&p)?;
            rows.push(PoseErrorRow { key, member: None, mssd: Some(mssd), mspd });
            (Some(mssd / model.diameter()), mspd)
        }
        Err(e) => {
            eprintln!("warning: {key}: {e}");
            rows.push(PoseErrorRow { key, member: None, mssd: None, mspd: None });
            (None, None)
        }
    };
    Ok(Scored { rows, mean })
}

#[allow(clippy::too_many_arguments)]
fn metrics(
    pred: &Path,
    gt: &Path,
    models: &Path,
    intrinsics: &Path,
    out: &Path,
    ar: bool,
    sym: Option<&Path>,
    steps: usize,
) -> Result<()> {
    let samples = io::parse_predictions(pred)?;
    let ground_truth = io::parse_ground_truth(gt)?;
    let k = io::parse_intrinsics(intrinsics)?;
    let symmetries = match sym {
        Some(path) => io::parse_symmetries(path)?,
        None => BTreeMap::new(),
    };
    for key in samples.keys().filter(|key| !ground_truth.contains_key(key)) {
        eprintln!("warning: no ground truth for {key}, skipped");
    }

    let mut objects: BTreeMap<u32, (ObjectModel, Vec<Transform>)> = BTreeMap::new();
    for key in ground_truth.keys() {
        if objects.contains_key(&key.obj_id) {
            continue;
        }
        let model = io::load_model(models, key.obj_id, symmetries.get(&key.obj_id))?;
        let transforms = discretize_symmetries(model.symmetries(), steps)?;
        objects.insert(key.obj_id, (model, transforms));
    }

    let keys: Vec<&InstanceKey> = ground_truth.keys().collect();
    let scored = keys
        .par_iter()
        .map(|key| {
            let (model, transforms) = &objects[&key.obj_id];
            match samples.get(key) {
                Some(s) => pose_errors(s, &ground_truth[key], model, &k, transforms).with_context(|| key.to_string()),
                // A ground-truth instance without estimates counts as a miss.
                None => Ok(Scored {
                    rows: vec![PoseErrorRow { key: **key, member: None, mssd: None, mspd: None }],
                    mean: (None, None),
                }),
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let rows: Vec<PoseErrorRow> = scored.iter().flat_map(|s| s.rows.iter().cloned()).collect();
    io::save_pose_errors(out, &rows)?;

    if ar {
        let mssd: Vec<f64> = scored.iter().map(|s| s.mean.0.unwrap_or(f64::INFINITY)).collect();
        let mspd: Vec<f64> = scored.iter().map(|s| s.mean.1.unwrap_or(f64::INFINITY)).collect();
        let ar_mssd = average_recall(&mssd, &mssd_thresholds(1.0))?;
        let ar_mspd = average_recall(&mspd, &mspd_thresholds(k.width))?;
        println!("AR_MSSD={ar_mssd:.4}");
        println!("AR_MSPD={ar_mspd:.4}");
        println!("AR={:.4}", (ar_mssd + ar_mspd) / 2.0);
    }
    Ok(())
}
