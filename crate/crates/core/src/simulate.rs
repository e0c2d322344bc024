//! Synthetic check of the calibration score.
//!
//! Targets are drawn uniformly, predicted means scatter around them with a
//! known `sigma_true`, and the predicted standard deviation is swept over a
//! grid. The score should peak where the predicted and true spreads agree.
//!
//! Random numbers come from ChaCha8 (`rand_chacha`). Entry `t` reads its own
//! stream: the generator is seeded from the master seed with
//! `seed_from_u64(seed)` and switched to stream `t`, so any entry can be
//! generated independently and the result does not depend on evaluation order.
//! The same draws are reused for every grid value.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::calibration::{
    gaussian_cdf, observed_confidence, ucs, CalibrationError, CalibrationReport, ConfidenceLevels,
};

/// Name of the generator and stream scheme, for output headers and logs.
pub const RNG_ALGORITHM: &str = "ChaCha8Rng(seed_from_u64(seed)).set_stream(entry_index)";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimulationError {
    #[error("dataset size must be at least 1")]
    EmptyDataset,
    #[error("sigma_true must be positive, got {0}")]
    NonPositiveSigmaTrue(f64),
    #[error("predicted sigma grid is empty")]
    EmptyGrid,
    #[error("predicted sigmas must be positive, got {0}")]
    NonPositiveSigmaPred(f64),
    #[error("outlier fraction must be in [0, 1), got {0}")]
    InvalidOutlierFraction(f64),
    #[error("invalid target range [{0}, {1}]")]
    InvalidRange(f64, f64),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub dataset_size: usize,
    pub sigma_true: f64,
    pub sigma_pred_grid: Vec<f64>,
    pub target_range: (f64, f64),
    pub outlier_fraction: f64,
    pub outlier_sigma_pred: f64,
    pub seed: u64,
    pub levels: ConfidenceLevels,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            dataset_size: 10_000,
            sigma_true: 0.3,
            sigma_pred_grid: vec![0.3],
            target_range: (0.0, 1.0),
            outlier_fraction: 0.0,
            outlier_sigma_pred: 3.0,
            seed: 0,
            levels: ConfidenceLevels::default(),
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<(), SimulationError> {
        if self.dataset_size == 0 {
            return Err(SimulationError::EmptyDataset);
        }
        if !(self.sigma_true > 0.0) {
            return Err(SimulationError::NonPositiveSigmaTrue(self.sigma_true));
        }
        if self.sigma_pred_grid.is_empty() {
            return Err(SimulationError::EmptyGrid);
        }
        if let Some(s) = self.sigma_pred_grid.iter().find(|s| !(**s > 0.0)) {
            return Err(SimulationError::NonPositiveSigmaPred(*s));
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return Err(SimulationError::InvalidOutlierFraction(self.outlier_fraction));
        }
        if self.outlier_fraction > 0.0 && !(self.outlier_sigma_pred > 0.0) {
            return Err(SimulationError::NonPositiveSigmaPred(self.outlier_sigma_pred));
        }
        let (lo, hi) = self.target_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(SimulationError::InvalidRange(lo, hi));
        }
        Ok(())
    }

    /// Number of leading entries that get `outlier_sigma_pred`.
    pub fn outlier_count(&self) -> usize {
        (self.outlier_fraction * self.dataset_size as f64).floor() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UcsPoint {
    pub sigma_pred: f64,
    pub ucs: f64,
    pub raw_ucs: f64,
    pub area: f64,
}

/// Score as a function of the predicted standard deviation, in grid order.
#[derive(Debug, Clone, PartialEq)]
pub struct UcsCurve {
    pub points: Vec<UcsPoint>,
}

impl UcsCurve {
    /// The point with the highest score (first one on ties).
    pub fn peak(&self) -> Option<&UcsPoint> {
        self.points
            .iter()
            .fold(None, |best: Option<&UcsPoint>, p| match best {
                Some(b) if b.ucs >= p.ucs => Some(b),
                _ => Some(p),
            })
    }
}

/// Target and predicted mean of one synthetic entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticEntry {
    pub target: f64,
    pub mean: f64,
}

/// Draws entry `index` from its own stream.
pub fn draw_entry(cfg: &SimulationConfig, index: usize) -> SyntheticEntry {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    let (lo, hi) = cfg.target_range;
    let target = lo + (hi - lo) * rng.random::<f64>();
    let z: f64 = rng.sample(StandardNormal);
    SyntheticEntry { target, mean: target + cfg.sigma_true * z }
}

pub fn draw_entries(cfg: &SimulationConfig) -> Vec<SyntheticEntry> {
    (0..cfg.dataset_size).map(|t| draw_entry(cfg, t)).collect()
}

fn report_for(
    cfg: &SimulationConfig,
    entries: &[SyntheticEntry],
    sigma_pred: f64,
) -> Result<CalibrationReport, SimulationError> {
    let outliers = cfg.outlier_count();
    let values = entries
        .iter()
        .enumerate()
        .map(|(t, e)| {
            let sigma = if t < outliers { cfg.outlier_sigma_pred } else { sigma_pred };
            gaussian_cdf(e.target, e.mean, sigma)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ucs(&observed_confidence(&values, &cfg.levels)?))
}

/// Full calibration report for a single predicted sigma.
pub fn simulate_report(
    cfg: &SimulationConfig,
    sigma_pred: f64,
) -> Result<CalibrationReport, SimulationError> {
    let mut single = cfg.clone();
    single.sigma_pred_grid = vec![sigma_pred];
    single.validate()?;
    report_for(&single, &draw_entries(&single), sigma_pred)
}

/// Runs the sweep over `cfg.sigma_pred_grid`.
pub fn simulate_ucs(cfg: &SimulationConfig) -> Result<UcsCurve, SimulationError> {
    cfg.validate()?;
    let entries = draw_entries(cfg);
    let points = cfg
        .sigma_pred_grid
        .iter()
        .map(|&sigma_pred| {
            let r = report_for(cfg, &entries, sigma_pred)?;
            Ok(UcsPoint { sigma_pred, ucs: r.ucs, raw_ucs: r.raw_ucs, area: r.area })
        })
        .collect::<Result<Vec<_>, SimulationError>>()?;
    Ok(UcsCurve { points })
}

/// `(sigma_pred, ucs)` rows of the sweep.
pub fn ucs_grid_report(cfg: &SimulationConfig) -> Result<Vec<(f64, f64)>, SimulationError> {
    Ok(simulate_ucs(cfg)?
        .points
        .iter()
        .map(|p| (p.sigma_pred, p.ucs))
        .collect())
}
