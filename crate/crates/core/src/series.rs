//! Uniformly sampled traces and time-stamped contrast estimates.

use serde::{Deserialize, Serialize};

/// Uniformly sampled photoluminescence trace. PL values are abstract reals
/// ("volts-equivalent"); every downstream estimator is ratiometric, so no
/// absolute photometric calibration is attached.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    /// Time of `samples[0]` in seconds.
    pub t_start: f64,
    /// Sample interval in seconds (`1 / sample_rate`).
    pub dt: f64,
    pub samples: Vec<f64>,
}

impl TimeSeries {
    /// `dt` must be positive and finite, `samples` non-empty. Sample
    /// finiteness is enforced at file-format boundaries, not per call.
    pub fn new(t_start: f64, dt: f64, samples: Vec<f64>) -> Self {
        assert!(dt.is_finite() && dt > 0.0, "dt must be positive");
        assert!(!samples.is_empty(), "samples must be non-empty");
        Self {
            t_start,
            dt,
            samples,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate(&self) -> f64 {
        1.0 / self.dt
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 * self.dt
    }

    /// Time of the last sample plus one interval (exclusive end).
    pub fn t_end(&self) -> f64 {
        self.t_start + self.duration()
    }

    pub fn time_at(&self, index: usize) -> f64 {
        self.t_start + index as f64 * self.dt
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    /// Multiply every sample by `alpha` (pure gain; used by the scale
    /// invariance properties).
    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            t_start: self.t_start,
            dt: self.dt,
            samples: self.samples.iter().map(|s| s * alpha).collect(),
        }
    }
}

/// Which estimator produced a `ContrastSeries`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorId {
    /// Sideband-sum over droplet amplitude, normalized by 1/f_D. Dimensioned
    /// and uncalibrated; see `duallock::calibrate`.
    PaperMain,
    /// Sidebands only over twice the droplet amplitude; returns C/2 on clean
    /// input.
    SiVariant,
    /// Absolute form whose denominator restores the window mean; returns C
    /// directly on clean input.
    ExactRecovery,
    /// Single lock-in at f_MW normalized to smoothed total PL.
    Conventional,
}

impl EstimatorId {
    pub fn label(self) -> &'static str {
        match self {
            EstimatorId::PaperMain => "paper_main",
            EstimatorId::SiVariant => "si_variant",
            EstimatorId::ExactRecovery => "exact_recovery",
            EstimatorId::Conventional => "conventional",
        }
    }

    /// Inverse of [`label`](Self::label).
    pub fn from_label(s: &str) -> Option<Self> {
        match s {
            "paper_main" => Some(EstimatorId::PaperMain),
            "si_variant" => Some(EstimatorId::SiVariant),
            "exact_recovery" => Some(EstimatorId::ExactRecovery),
            "conventional" => Some(EstimatorId::Conventional),
            _ => None,
        }
    }
}

/// Time-stamped contrast estimates with summary statistics. `mean` and
/// `percent_error` are computed over valid entries at construction and are
/// recomputable from the stored values (tested).
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastSeries {
    pub estimator_id: EstimatorId,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
    /// Mean of valid values; NaN when nothing is valid.
    pub mean: f64,
    /// ΔC = 100 × stddev / mean over valid values (sample stddev); NaN when
    /// fewer than two valid entries.
    pub percent_error: f64,
}

impl ContrastSeries {
    pub fn new(
        estimator_id: EstimatorId,
        times: Vec<f64>,
        values: Vec<f64>,
        valid: Vec<bool>,
    ) -> Self {
        assert_eq!(times.len(), values.len());
        assert_eq!(times.len(), valid.len());
        let (mean, percent_error) = summary_stats(&values, &valid);
        Self {
            estimator_id,
            times,
            values,
            valid,
            mean,
            percent_error,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn n_valid(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    pub fn valid_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values
            .iter()
            .zip(&self.valid)
            .filter(|(_, ok)| **ok)
            .map(|(v, _)| *v)
    }

    /// Standard error of the mean over valid entries.
    pub fn std_err(&self) -> f64 {
        let n = self.n_valid();
        if n < 2 {
            return f64::NAN;
        }
        let sigma = self.mean * self.percent_error / 100.0;
        sigma.abs() / (n as f64).sqrt()
    }

    /// Per-entry sample standard deviation over valid entries.
    pub fn sample_sigma(&self) -> f64 {
        (self.mean * self.percent_error / 100.0).abs()
    }

    /// Apply a multiplicative calibration factor (see `duallock::calibrate`).
    pub fn scaled(&self, k: f64) -> Self {
        Self::new(
            self.estimator_id,
            self.times.clone(),
            self.values.iter().map(|v| v * k).collect(),
            self.valid.clone(),
        )
    }
}

/// (mean, percent_error) over valid entries; NaN where undefined.
pub(crate) fn summary_stats(values: &[f64], valid: &[bool]) -> (f64, f64) {
    let picked: Vec<f64> = values
        .iter()
        .zip(valid)
        .filter(|(_, ok)| **ok)
        .map(|(v, _)| *v)
        .collect();
    if picked.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = picked.len() as f64;
    let mean = picked.iter().sum::<f64>() / n;
    if picked.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = picked.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, 100.0 * var.sqrt() / mean.abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_skips_invalid_entries() {
        let s = ContrastSeries::new(
            EstimatorId::ExactRecovery,
            vec![0.0, 1.0, 2.0, 3.0],
            vec![0.05, 0.06, 99.0, 0.07],
            vec![true, true, false, true],
        );
        assert_eq!(s.n_valid(), 3);
        assert!((s.mean - 0.06).abs() < 1e-15);
        let sigma = 0.01f64;
        assert!((s.percent_error - 100.0 * sigma / 0.06).abs() < 1e-9);
    }

    #[test]
    fn summary_recomputable_from_values() {
        let s = ContrastSeries::new(
            EstimatorId::PaperMain,
            (0..50).map(|i| i as f64).collect(),
            (0..50).map(|i| 1.0 + 0.01 * (i as f64).sin()).collect(),
            vec![true; 50],
        );
        let (mean, pe) = summary_stats(&s.values, &s.valid);
        assert_eq!(mean, s.mean);
        assert_eq!(pe, s.percent_error);
    }

    #[test]
    fn all_invalid_yields_nan_summary() {
        let s = ContrastSeries::new(
            EstimatorId::SiVariant,
            vec![0.0, 1.0],
            vec![0.1, 0.2],
            vec![false, false],
        );
        assert!(s.mean.is_nan());
        assert!(s.percent_error.is_nan());
    }
}
