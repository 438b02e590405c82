//! Long-run stability statistics: Allan deviation over contrast series,
//! Gaussian histogram summaries, and the short-to-long variation bound for
//! the diamond-bearing signal level.

use serde::{Deserialize, Serialize};

use crate::dsp::Band;
use crate::error::{Error, Result};
use crate::fit::{levenberg_marquardt, FitProblem};
use crate::series::ContrastSeries;

/// What to do about invalid entries when a uniform grid is required.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvalidPolicy {
    /// Bridge gaps linearly (edges hold the nearest valid value).
    Interpolate,
    /// Refuse to compute when any entry is invalid.
    Reject,
}

/// Allan deviation versus averaging time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllanCurve {
    /// Realized averaging times (whole multiples of the series spacing).
    pub taus: Vec<f64>,
    pub sigmas: Vec<f64>,
    /// Averaged-pair count behind each sigma.
    pub n_pairs: Vec<usize>,
}

impl AllanCurve {
    /// Sigma at the tau closest to `tau`.
    pub fn sigma_near(&self, tau: f64) -> Option<f64> {
        self.taus
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| (*a - tau).abs().partial_cmp(&(*b - tau).abs()).unwrap())
            .map(|(i, _)| self.sigmas[i])
    }
}

fn cleaned_values(series: &ContrastSeries, policy: InvalidPolicy) -> Result<Vec<f64>> {
    if series.valid.iter().all(|v| *v) {
        return Ok(series.values.clone());
    }
    match policy {
        InvalidPolicy::Reject => Err(Error::Degenerate(format!(
            "{} invalid entries and the reject policy is in force",
            series.len() - series.n_valid()
        ))),
        InvalidPolicy::Interpolate => {
            if series.n_valid() == 0 {
                return Err(Error::Degenerate("no valid entries to interpolate".into()));
            }
            let mut y = series.values.clone();
            let valid_idx: Vec<usize> = (0..y.len()).filter(|&i| series.valid[i]).collect();
            for i in 0..y.len() {
                if series.valid[i] {
                    continue;
                }
                let next = valid_idx.partition_point(|&j| j < i);
                y[i] = if next == 0 {
                    y[valid_idx[0]]
                } else if next == valid_idx.len() {
                    y[valid_idx[valid_idx.len() - 1]]
                } else {
                    let (a, b) = (valid_idx[next - 1], valid_idx[next]);
                    let frac = (i - a) as f64 / (b - a) as f64;
                    y[a] + frac * (y[b] - y[a])
                };
            }
            Ok(y)
        }
    }
}

fn series_spacing(series: &ContrastSeries) -> Result<f64> {
    if series.len() < 2 {
        return Err(Error::Degenerate(
            "allan statistics need at least two samples".into(),
        ));
    }
    let tau0 = series.times[1] - series.times[0];
    if !(tau0.is_finite() && tau0 > 0.0) {
        return Err(Error::Degenerate(format!(
            "series spacing {tau0} s is unusable"
        )));
    }
    Ok(tau0)
}

/// Octave-spaced averaging times from the series spacing up to `t_max`,
/// suitable as the `taus` argument of the Allan routines.
pub fn default_taus(tau0: f64, t_max: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut m = 1u64;
    while m as f64 * tau0 <= t_max {
        out.push(m as f64 * tau0);
        m *= 2;
    }
    out
}

/// Overlapping Allan deviation of a uniformly spaced series at the
/// requested averaging times. A tau below the series spacing is an error; a
/// tau the series is too short to support (fewer than `m + 1` averaged
/// pairs, i.e. `N < 3m`) is omitted from the curve.
pub fn allan_deviation(
    series: &ContrastSeries,
    taus: &[f64],
    policy: InvalidPolicy,
) -> Result<AllanCurve> {
    let y = cleaned_values(series, policy)?;
    let tau0 = series_spacing(series)?;
    let n = y.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for &v in &y {
        prefix.push(prefix.last().unwrap() + v);
    }
    let mean_at = |k: usize, m: usize| (prefix[k + m] - prefix[k]) / m as f64;

    let mut curve = AllanCurve {
        taus: Vec::new(),
        sigmas: Vec::new(),
        n_pairs: Vec::new(),
    };
    for &tau in taus {
        let m = (tau / tau0).round() as i64;
        if m < 1 {
            return Err(Error::Degenerate(format!(
                "averaging time {tau} s is below the series spacing {tau0} s"
            )));
        }
        let m = m as usize;
        if n < 3 * m {
            continue;
        }
        let pairs = n - 2 * m + 1;
        let mut acc = 0.0;
        for k in 0..pairs {
            let d = mean_at(k + m, m) - mean_at(k, m);
            acc += d * d;
        }
        curve.taus.push(m as f64 * tau0);
        curve.sigmas.push((acc / (2.0 * pairs as f64)).sqrt());
        curve.n_pairs.push(pairs);
    }
    if curve.taus.is_empty() {
        return Err(Error::Degenerate(
            "series too short for every requested averaging time".into(),
        ));
    }
    Ok(curve)
}

/// Non-overlapping variant: adjacent block means only. Noisier than the
/// overlapping form but independent across pairs.
pub fn allan_deviation_nonoverlapping(
    series: &ContrastSeries,
    taus: &[f64],
    policy: InvalidPolicy,
) -> Result<AllanCurve> {
    let y = cleaned_values(series, policy)?;
    let tau0 = series_spacing(series)?;
    let n = y.len();
    let mut curve = AllanCurve {
        taus: Vec::new(),
        sigmas: Vec::new(),
        n_pairs: Vec::new(),
    };
    for &tau in taus {
        let m = (tau / tau0).round() as i64;
        if m < 1 {
            return Err(Error::Degenerate(format!(
                "averaging time {tau} s is below the series spacing {tau0} s"
            )));
        }
        let m = m as usize;
        let blocks = n / m;
        if blocks < 3 {
            continue;
        }
        let means: Vec<f64> = (0..blocks)
            .map(|j| y[j * m..(j + 1) * m].iter().sum::<f64>() / m as f64)
            .collect();
        let pairs = blocks - 1;
        let acc: f64 = means.windows(2).map(|w| (w[1] - w[0]) * (w[1] - w[0])).sum();
        curve.taus.push(m as f64 * tau0);
        curve.sigmas.push((acc / (2.0 * pairs as f64)).sqrt());
        curve.n_pairs.push(pairs);
    }
    if curve.taus.is_empty() {
        return Err(Error::Degenerate(
            "series too short for every requested averaging time".into(),
        ));
    }
    Ok(curve)
}

/// Log-log slope of a deviation curve, weighted by each point's approximate
/// chi-square degrees of freedom, `span_s / tau - 1`. An unweighted fit lets
/// the longest averaging times, which carry one or two independent pairs of
/// pure scatter, drag the slope by a tenth or more between seeds; the
/// weighted fit is stable to a few hundredths. `span_s` is the length of the
/// series the curve came from, in seconds.
pub fn loglog_slope(taus: &[f64], sigmas: &[f64], span_s: f64) -> Result<f64> {
    if taus.len() != sigmas.len() || taus.len() < 2 {
        return Err(Error::Degenerate(format!(
            "slope fit needs two matched points, got {} taus and {} sigmas",
            taus.len(),
            sigmas.len()
        )));
    }
    if taus.iter().chain(sigmas).any(|&v| !(v.is_finite() && v > 0.0)) {
        return Err(Error::Degenerate(
            "slope fit needs positive finite taus and sigmas".into(),
        ));
    }
    let xs: Vec<f64> = taus.iter().map(|t| t.ln()).collect();
    let ys: Vec<f64> = sigmas.iter().map(|s| s.ln()).collect();
    let ws: Vec<f64> = taus.iter().map(|&t| (span_s / t - 1.0).max(1e-9)).collect();
    let sw: f64 = ws.iter().sum();
    let mx = xs.iter().zip(&ws).map(|(x, w)| x * w).sum::<f64>() / sw;
    let my = ys.iter().zip(&ws).map(|(y, w)| y * w).sum::<f64>() / sw;
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .zip(&ws)
        .map(|((x, y), w)| w * (x - mx) * (y - my))
        .sum();
    let sxx: f64 = xs.iter().zip(&ws).map(|(x, w)| w * (x - mx) * (x - mx)).sum();
    if sxx <= 0.0 {
        return Err(Error::Degenerate("slope fit over a single tau".into()));
    }
    Ok(sxy / sxx)
}

/// Uniform histogram over the value range.
pub fn histogram(values: &[f64], n_bins: usize) -> Result<(Vec<f64>, Vec<u64>)> {
    if n_bins == 0 || values.is_empty() {
        return Err(Error::Degenerate("empty histogram request".into()));
    }
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::Degenerate("non-finite values in histogram".into()));
    }
    let span = (hi - lo).max(1e-300);
    let width = span / n_bins as f64;
    let mut counts = vec![0u64; n_bins];
    for &v in values {
        let b = (((v - lo) / width) as usize).min(n_bins - 1);
        counts[b] += 1;
    }
    Ok(((0..=n_bins).map(|i| lo + i as f64 * width).collect(), counts))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianFit {
    pub mean: f64,
    pub sigma: f64,
    pub amplitude: f64,
    /// 100 * sigma / mean.
    pub percent_spread: f64,
}

/// Fit a Gaussian profile to a histogram of the values. Initialized from
/// sample moments, so it only refines against binning artifacts.
pub fn histogram_fit(values: &[f64], n_bins: usize) -> Result<GaussianFit> {
    if values.len() < 100 {
        return Err(Error::Degenerate(format!(
            "{} values cannot support a histogram fit (need at least 100)",
            values.len()
        )));
    }
    let (edges, counts) = histogram(values, n_bins)?;
    let centers: Vec<f64> = edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let counts_f: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let n = values.len() as f64;
    let mean0 = values.iter().sum::<f64>() / n;
    let var0 = values.iter().map(|v| (v - mean0) * (v - mean0)).sum::<f64>() / (n - 1.0);
    let sigma0 = var0.sqrt().max(1e-12 * mean0.abs()).max(1e-300);
    let amp0 = counts_f.iter().cloned().fold(0.0, f64::max);
    let span = edges[edges.len() - 1] - edges[0];
    let out = levenberg_marquardt(&FitProblem {
        model: |p: &[f64], x: f64| {
            let z = (x - p[0]) / p[2];
            p[1] * (-0.5 * z * z).exp()
        },
        xs: &centers,
        ys: &counts_f,
        weights: None,
        init: &[mean0, amp0, sigma0],
        lower: &[edges[0], 0.0, span * 1e-6],
        upper: &[edges[edges.len() - 1], 10.0 * amp0, span],
        max_iter: 300,
        tol: 1e-12,
    })?;
    let (mean, amplitude, sigma) = (out.params[0], out.params[1], out.params[2]);
    Ok(GaussianFit {
        mean,
        sigma,
        amplitude,
        percent_spread: 100.0 * sigma / mean.abs(),
    })
}

/// Short-to-long variation bound for a narrowband signal level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationBound {
    pub bin_duration: f64,
    /// Relative spread (std/mean) of the band amplitude across bins.
    pub sigma_at_bin: f64,
    /// `sigma_at_bin * sqrt(bin_duration / extrapolation_tau)`, the white
    /// scaling of the measured spread to the target averaging time.
    pub extrapolated_sigma: f64,
    pub extrapolation_tau: f64,
    pub n_bins: usize,
}

/// Measure the relative spread of a band amplitude over the spectrogram's
/// `bin_duration` tiles and extrapolate it to `extrapolation_tau` assuming
/// uncorrelated bins. The extrapolation is only a bound: amplitude noise
/// correlated beyond a bin (slow drift, kinetics slower than the bin) decays
/// more slowly than white scaling predicts.
pub fn nd_variation_bound(
    gram: &crate::dsp::Spectrogram,
    band: Band,
    bin_duration: f64,
    extrapolation_tau: f64,
) -> Result<VariationBound> {
    if !(extrapolation_tau.is_finite() && extrapolation_tau > 0.0) {
        return Err(Error::Degenerate(format!(
            "extrapolation tau must be positive (got {extrapolation_tau})"
        )));
    }
    if ((gram.delta_t - bin_duration) / bin_duration).abs() > 1e-9 {
        return Err(Error::Degenerate(format!(
            "spectrogram bins are {} s, not the requested {bin_duration} s",
            gram.delta_t
        )));
    }
    let n_bins = gram.rows.len();
    if n_bins < 10 {
        return Err(Error::Degenerate(format!(
            "{n_bins} bins cannot support a spread estimate (need at least 10)"
        )));
    }
    let cols: Vec<usize> = gram
        .freqs
        .iter()
        .enumerate()
        .filter(|(_, &f)| f >= band.lo() && f <= band.hi())
        .map(|(j, _)| j)
        .collect();
    if cols.is_empty() {
        return Err(Error::Degenerate(format!(
            "band {}..{} Hz lies outside the spectrogram coverage {}..{} Hz",
            band.lo(),
            band.hi(),
            gram.freqs.first().copied().unwrap_or(f64::NAN),
            gram.freqs.last().copied().unwrap_or(f64::NAN)
        )));
    }
    let gain = gram.taper.band_rss_gain();
    let amps: Vec<f64> = gram
        .rows
        .iter()
        .map(|row| (cols.iter().map(|&j| row[j] * row[j]).sum::<f64>()).sqrt() / gain)
        .collect();
    let mean = amps.iter().sum::<f64>() / n_bins as f64;
    if mean.abs() < 1e-300 {
        return Err(Error::Degenerate("band amplitude averages to zero".into()));
    }
    let var = amps.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (n_bins as f64 - 1.0);
    let sigma_at_bin = var.sqrt() / mean.abs();
    let bin_duration = gram.delta_t;
    Ok(VariationBound {
        bin_duration,
        sigma_at_bin,
        extrapolated_sigma: sigma_at_bin * (bin_duration / extrapolation_tau).sqrt(),
        extrapolation_tau,
        n_bins,
    })
}
