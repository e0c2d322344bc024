//! Reliability diagrams and the uncertainty calibration score (UCS).
//!
//! Given predicted Gaussians and targets, every target is pushed through its
//! predicted CDF. For a well calibrated predictor those CDF values are
//! uniform on `[0, 1]`, so the fraction of values `<= p` (the observed
//! confidence) should equal `p` at every expected level `p`. The area between
//! the observed curve and the diagonal, integrated with the trapezoidal rule,
//! is the calibration error `A`; the score is `1 - A / 0.25`.

use thiserror::Error;

use crate::ensemble::GaussianSummary;

/// Area attained by a constant observed confidence of 0.5 on `[0, 1]`,
/// used to normalize the score.
pub const MAX_AREA: f64 = 0.25;

/// Default grid increment of the expected confidence levels.
pub const DEFAULT_INCREMENT: f64 = 0.1;

/// Below this standard deviation the Gaussian CDF becomes a step.
const DEGENERATE_SIGMA: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalibrationError {
    #[error("standard deviation must be non-negative, got {0}")]
    NegativeSigma(f64),
    #[error("no CDF values to count")]
    EmptyInput,
    #[error("CDF value {0} is outside [0, 1]")]
    InvalidCdfValue(f64),
    #[error("invalid confidence levels: {0}")]
    InvalidLevels(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("{what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        found: usize,
    },
}

/// Standard normal CDF via the complementary error function.
pub fn standard_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// CDF of `N(mu, sigma²)` at `x`. A vanishing `sigma` gives the step
/// function (0 below the mean, 1 above, 0.5 exactly at it).
pub fn gaussian_cdf(x: f64, mu: f64, sigma: f64) -> Result<f64, CalibrationError> {
    if !(sigma >= 0.0) {
        return Err(CalibrationError::NegativeSigma(sigma));
    }
    if sigma < DEGENERATE_SIGMA {
        return Ok(if x < mu {
            0.0
        } else if x > mu {
            1.0
        } else {
            0.5
        });
    }
    Ok(standard_normal_cdf((x - mu) / sigma))
}

/// Strictly increasing expected confidence levels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceLevels {
    levels: Vec<f64>,
}

impl Default for ConfidenceLevels {
    /// `0, 0.1, ..., 1.0`.
    fn default() -> Self {
        Self::uniform(DEFAULT_INCREMENT).expect("default increment divides 1")
    }
}

impl ConfidenceLevels {
    /// Levels `j / M` for `j = 0..=M` with `M = 1 / increment`, which must be
    /// an integer (within 1e-9).
    pub fn uniform(increment: f64) -> Result<Self, CalibrationError> {
        if !(increment > 0.0 && increment <= 1.0) {
            return Err(CalibrationError::InvalidLevels(format!(
                "increment {increment} must be in (0, 1]"
            )));
        }
        let m = (1.0 / increment).round();
        if ((1.0 / increment) - m).abs() > 1e-9 * m {
            return Err(CalibrationError::InvalidLevels(format!(
                "increment {increment} does not divide [0, 1] evenly"
            )));
        }
        let m = m as usize;
        Ok(Self {
            levels: (0..=m).map(|j| j as f64 / m as f64).collect(),
        })
    }

    pub fn new(levels: Vec<f64>) -> Result<Self, CalibrationError> {
        if levels.len() < 2 {
            return Err(CalibrationError::InvalidLevels(
                "need at least two levels".into(),
            ));
        }
        if levels.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(CalibrationError::InvalidLevels(
                "levels must lie in [0, 1]".into(),
            ));
        }
        if levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CalibrationError::InvalidLevels(
                "levels must be strictly increasing".into(),
            ));
        }
        Ok(Self { levels })
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

/// Observed vs. expected confidence levels.
#[derive(Debug, Clone, PartialEq)]
pub struct ReliabilityDiagram {
    pub expected: Vec<f64>,
    pub observed: Vec<f64>,
    pub sample_count: usize,
}

impl ReliabilityDiagram {
    /// A diagram from explicit values; the lengths must agree.
    pub fn new(
        expected: Vec<f64>,
        observed: Vec<f64>,
        sample_count: usize,
    ) -> Result<Self, CalibrationError> {
        if expected.len() != observed.len() {
            return Err(CalibrationError::DimensionMismatch {
                what: "observed levels".into(),
                expected: expected.len(),
                found: observed.len(),
            });
        }
        Ok(Self { expected, observed, sample_count })
    }
}

/// Calibration area and score for one diagram.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationReport {
    pub diagram: ReliabilityDiagram,
    pub area: f64,
    /// `1 - area / 0.25` clamped to `[0, 1]`.
    pub ucs: f64,
    /// The unclamped `1 - area / 0.25`.
    pub raw_ucs: f64,
    pub clamped: bool,
}

/// Fraction of CDF values at or below each expected level.
pub fn observed_confidence(
    cdf_values: &[f64],
    levels: &ConfidenceLevels,
) -> Result<ReliabilityDiagram, CalibrationError> {
    if cdf_values.is_empty() {
        return Err(CalibrationError::EmptyInput);
    }
    if let Some(v) = cdf_values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(CalibrationError::InvalidCdfValue(*v));
    }
    let mut sorted = cdf_values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let total = sorted.len() as f64;
    let observed = levels
        .levels
        .iter()
        .map(|p| sorted.partition_point(|v| v <= p) as f64 / total)
        .collect();
    Ok(ReliabilityDiagram {
        expected: levels.levels.clone(),
        observed,
        sample_count: sorted.len(),
    })
}

/// Trapezoidal integral of `|observed - expected|` over the expected levels.
pub fn calibration_area(d: &ReliabilityDiagram) -> f64 {
    let f: Vec<f64> = d
        .observed
        .iter()
        .zip(&d.expected)
        .map(|(o, e)| (o - e).abs())
        .collect();
    d.expected
        .windows(2)
        .zip(f.windows(2))
        .map(|(p, f)| (p[1] - p[0]) / 2.0 * (f[0] + f[1]))
        .sum()
}

/// Scores a diagram.
pub fn ucs(d: &ReliabilityDiagram) -> CalibrationReport {
    let area = calibration_area(d);
    let raw_ucs = 1.0 - area / MAX_AREA;
    let ucs = raw_ucs.clamp(0.0, 1.0);
    CalibrationReport {
        diagram: d.clone(),
        area,
        ucs,
        raw_ucs,
        clamped: ucs != raw_ucs,
    }
}

fn check_shapes(
    summaries: &[GaussianSummary],
    targets: &[Vec<f64>],
) -> Result<(), CalibrationError> {
    if summaries.is_empty() {
        return Err(CalibrationError::EmptyDataset);
    }
    if summaries.len() != targets.len() {
        return Err(CalibrationError::DimensionMismatch {
            what: "number of targets".into(),
            expected: summaries.len(),
            found: targets.len(),
        });
    }
    for (i, (s, t)) in summaries.iter().zip(targets).enumerate() {
        if s.mean.len() != t.len() || s.std.len() != t.len() {
            return Err(CalibrationError::DimensionMismatch {
                what: format!("dimension of entry {i}"),
                expected: s.mean.len(),
                found: t.len(),
            });
        }
    }
    Ok(())
}

/// CDF value of every selected scalar of every entry, entry-major.
pub fn pooled_cdf_values(
    summaries: &[GaussianSummary],
    targets: &[Vec<f64>],
    dims: &[usize],
) -> Result<Vec<f64>, CalibrationError> {
    check_shapes(summaries, targets)?;
    let mut out = Vec::with_capacity(summaries.len() * dims.len());
    for (s, t) in summaries.iter().zip(targets) {
        for &d in dims {
            if d >= t.len() {
                return Err(CalibrationError::DimensionMismatch {
                    what: "selected dimension".into(),
                    expected: t.len(),
                    found: d + 1,
                });
            }
            out.push(gaussian_cdf(t[d], s.mean[d], s.std[d])?);
        }
    }
    Ok(out)
}

/// Pools every (entry, dimension) CDF value into one diagram and scores it.
pub fn calibrate_dataset(
    summaries: &[GaussianSummary],
    targets: &[Vec<f64>],
    levels: &ConfidenceLevels,
) -> Result<CalibrationReport, CalibrationError> {
    check_shapes(summaries, targets)?;
    let dims: Vec<usize> = (0..summaries[0].mean.len()).collect();
    for (i, s) in summaries.iter().enumerate() {
        if s.mean.len() != dims.len() {
            return Err(CalibrationError::DimensionMismatch {
                what: format!("dimension of entry {i}"),
                expected: dims.len(),
                found: s.mean.len(),
            });
        }
    }
    calibrate_dimensions(summaries, targets, &dims, levels)
}

/// Like [`calibrate_dataset`] restricted to the listed dimensions, e.g. only
/// the rotation or only the translation elements.
pub fn calibrate_dimensions(
    summaries: &[GaussianSummary],
    targets: &[Vec<f64>],
    dims: &[usize],
    levels: &ConfidenceLevels,
) -> Result<CalibrationReport, CalibrationError> {
    let values = pooled_cdf_values(summaries, targets, dims)?;
    Ok(ucs(&observed_confidence(&values, levels)?))
}

/// One report per dimension.
pub fn calibrate_per_dimension(
    summaries: &[GaussianSummary],
    targets: &[Vec<f64>],
    levels: &ConfidenceLevels,
) -> Result<Vec<CalibrationReport>, CalibrationError> {
    check_shapes(summaries, targets)?;
    (0..summaries[0].mean.len())
        .map(|d| calibrate_dimensions(summaries, targets, &[d], levels))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::ReprTag;

    /// Composite Simpson integration of the standard normal density.
    fn normal_cdf_by_quadrature(z: f64) -> f64 {
        let n = 20_000;
        let (a, b) = (0.0, z);
        let h = (b - a) / n as f64;
        let pdf = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut s = pdf(a) + pdf(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * pdf(a + i as f64 * h);
        }
        0.5 + s * h / 3.0
    }

    #[test]
    fn cdf_examples() {
        assert_eq!(gaussian_cdf(0.0, 0.0, 1.0).unwrap(), 0.5);
        let oracle = normal_cdf_by_quadrature(1.96);
        let v = gaussian_cdf(1.96, 0.0, 1.0).unwrap();
        assert!((v - oracle).abs() < 1e-9);
        assert!((v - 0.9750).abs() < 1e-4);
        assert_eq!(gaussian_cdf(5.0, 5.0, 0.0).unwrap(), 0.5);
        assert_eq!(gaussian_cdf(4.0, 5.0, 0.0).unwrap(), 0.0);
        assert_eq!(gaussian_cdf(6.0, 5.0, 0.0).unwrap(), 1.0);
        assert_eq!(gaussian_cdf(1.0, 0.0, -1.0), Err(CalibrationError::NegativeSigma(-1.0)));
    }

    #[test]
    fn cdf_matches_quadrature_across_range() {
        for i in -40..=40 {
            let z = i as f64 * 0.15;
            let diff = (standard_normal_cdf(z) - normal_cdf_by_quadrature(z)).abs();
            assert!(diff < 1e-7, "z = {z}: {diff}");
        }
    }

    #[test]
    fn default_levels() {
        let l = ConfidenceLevels::default();
        assert_eq!(l.len(), 11);
        assert_eq!(l.levels()[0], 0.0);
        assert_eq!(l.levels()[10], 1.0);
        assert_eq!(l.levels()[3], 0.3);
        assert!(ConfidenceLevels::uniform(0.3).is_err());
        assert!(ConfidenceLevels::new(vec![0.0, 0.5, 0.5, 1.0]).is_err());
        assert!(ConfidenceLevels::new(vec![0.0, 1.5]).is_err());
        assert_eq!(ConfidenceLevels::uniform(0.01).unwrap().len(), 101);
    }

    #[test]
    fn observed_examples() {
        let levels = ConfidenceLevels::new(vec![0.0, 0.5, 1.0]).unwrap();
        let d = observed_confidence(&[0.05, 0.2, 0.6, 0.9], &levels).unwrap();
        assert_eq!(d.observed, vec![0.0, 0.5, 1.0]);
        assert_eq!(d.sample_count, 4);

        let d = observed_confidence(&[1.0; 7], &ConfidenceLevels::default()).unwrap();
        assert_eq!(d.observed[10], 1.0);
        assert!(d.observed[..10].iter().all(|v| *v == 0.0));

        let values: Vec<f64> = (0..10).map(|i| 0.05 + 0.1 * i as f64).collect();
        let d = observed_confidence(&values, &ConfidenceLevels::default()).unwrap();
        let expected: Vec<f64> = (0..=10).map(|j| j as f64 / 10.0).collect();
        assert_eq!(d.observed, expected);

        assert_eq!(
            observed_confidence(&[], &levels),
            Err(CalibrationError::EmptyInput)
        );
        assert_eq!(
            observed_confidence(&[1.5], &levels),
            Err(CalibrationError::InvalidCdfValue(1.5))
        );
    }

    fn diagram(observed: impl Fn(f64) -> f64) -> ReliabilityDiagram {
        let expected = ConfidenceLevels::default().levels().to_vec();
        let observed = expected.iter().map(|p| observed(*p)).collect();
        ReliabilityDiagram::new(expected, observed, 1).unwrap()
    }

    #[test]
    fn area_examples() {
        assert_eq!(calibration_area(&diagram(|p| p)), 0.0);
        assert_eq!(calibration_area(&diagram(|_| 0.5)), 0.25);
        assert!((calibration_area(&diagram(|_| 1.0)) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn ucs_examples() {
        let r = ucs(&diagram(|p| p));
        assert_eq!((r.ucs, r.clamped), (1.0, false));
        let r = ucs(&diagram(|_| 0.5));
        assert_eq!((r.ucs, r.area), (0.0, 0.25));
        let r = ucs(&diagram(|_| 1.0));
        assert_eq!(r.ucs, 0.0);
        assert!(r.clamped);
        assert!((r.raw_ucs + 1.0).abs() < 1e-12);
    }

    fn scalar_summary(mean: f64, std: f64) -> GaussianSummary {
        GaussianSummary {
            representation: ReprTag::AxisAngle,
            mean: vec![mean],
            std: vec![std],
            gimbal_lock: false,
        }
    }

    #[test]
    fn dataset_targets_at_mean() {
        let summaries: Vec<_> = (0..20).map(|i| scalar_summary(i as f64, 1.0 + i as f64)).collect();
        let targets: Vec<_> = (0..20).map(|i| vec![i as f64]).collect();
        let r = calibrate_dataset(&summaries, &targets, &ConfidenceLevels::default()).unwrap();
        assert_eq!(r.diagram.observed[4], 0.0);
        assert_eq!(r.diagram.observed[5], 1.0);
        assert_eq!(r.area, 0.25);
        assert_eq!(r.ucs, 0.0);
    }

    #[test]
    fn dataset_far_tails_are_clamped() {
        let levels = ConfidenceLevels::default();
        // CDF underflows to 0: every value is <= every level.
        let r = calibrate_dataset(&[scalar_summary(0.0, 1.0)], &[vec![-50.0]], &levels).unwrap();
        assert!(r.diagram.observed.iter().all(|v| *v == 1.0));
        assert!((r.area - 0.5).abs() < 1e-15);
        assert_eq!(r.ucs, 0.0);
        assert!(r.clamped);

        // CDF rounds to 1: only the last level counts it; f(p) = p below 1.
        let r = calibrate_dataset(&[scalar_summary(0.0, 1.0)], &[vec![50.0]], &levels).unwrap();
        assert_eq!(r.diagram.observed[10], 1.0);
        assert!(r.diagram.observed[..10].iter().all(|v| *v == 0.0));
        assert!((r.area - 0.45).abs() < 1e-12);
        assert_eq!(r.ucs, 0.0);
        assert!(r.clamped);
    }

    #[test]
    fn dataset_errors() {
        let levels = ConfidenceLevels::default();
        assert_eq!(
            calibrate_dataset(&[], &[], &levels),
            Err(CalibrationError::EmptyDataset)
        );
        assert!(matches!(
            calibrate_dataset(&[scalar_summary(0.0, 1.0)], &[vec![1.0, 2.0]], &levels),
            Err(CalibrationError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            calibrate_dataset(&[scalar_summary(0.0, 1.0)], &[], &levels),
            Err(CalibrationError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn per_dimension_reports() {
        let s = GaussianSummary {
            representation: ReprTag::AxisAngle,
            mean: vec![0.0, 0.0],
            std: vec![1.0, 1.0],
            gimbal_lock: false,
        };
        let reports =
            calibrate_per_dimension(&[s.clone(), s], &[vec![0.0, 10.0], vec![0.0, 10.0]], &ConfidenceLevels::default())
                .unwrap();
        assert_eq!(reports.len(), 2);
        assert_eq!(reports[0].ucs, 0.0);
        assert!(reports[1].clamped);
    }
}
