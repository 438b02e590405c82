//! Dual lock-in contrast estimators.
//!
//! All three estimators work on trailing analysis windows and combine the
//! microwave line F(f_mw), its droplet sidebands F(f_mw +- f_d), and the
//! droplet fundamental F(f_d), each recovered as a narrowband amplitude:
//!
//! * `PaperMain`: (F(f_mw) + F(+) + F(-)) / (F(f_d) * f_d). Dimensioned by
//!   the 1/f_d factor and uncalibrated; on a clean trace it reads
//!   `C (m0 + g0) / (g0 f_d)`, a fixed multiple of the true contrast. Pair
//!   it with [`calibrate`].
//! * `SiVariant`: (F(+) + F(-)) / (2 F(f_d)) = C / 2 on a clean trace.
//! * `ExactRecovery`: (F(f_mw) + F(+) + F(-)) / (M + F(f_d)) where M is the
//!   window mean minus the modeled background. Returns C itself, for any
//!   transit profile, because numerator and denominator weight the droplet
//!   harmonics identically.
//!
//! Every term in each ratio scales with the instantaneous optical gain, so
//! multiplicative drift cancels window by window. That cancellation is the
//! point of the dual scheme and is what the stability comparison measures.

use serde::{Deserialize, Serialize};

use crate::dsp::{self, Band, SpectrumWindow, Taper};
use crate::error::{Error, Result};
use crate::exec;
use crate::series::{ContrastSeries, EstimatorId, TimeSeries};

/// Where the per-window droplet rate comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FreqSource {
    /// Use the configured rate for every window.
    Nominal,
    /// Track the droplet line within `nominal ± search_half_width` per
    /// window and recenter the droplet and sideband bands on the result.
    Tracked { search_half_width: f64 },
}

/// Additive background assumed when restoring the absolute window mean.
/// Only `ExactRecovery` consumes this; the ratio estimators are background
/// free by construction (their bands exclude DC).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackgroundModel {
    None,
    /// Fixed level subtracted from every window mean.
    Constant { level: f64 },
    /// `b0 exp(-t / tau)`, time measured from the start of the trace.
    ExpDecay { b0: f64, tau: f64 },
}

impl BackgroundModel {
    /// Mean background over `[t0, t1]` (times relative to trace start).
    fn window_mean(&self, t0: f64, t1: f64) -> f64 {
        match *self {
            BackgroundModel::None => 0.0,
            BackgroundModel::Constant { level } => level,
            BackgroundModel::ExpDecay { b0, tau } => {
                b0 * tau / (t1 - t0) * ((-t0 / tau).exp() - (-t1 / tau).exp())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub estimator_id: EstimatorId,
    /// Analysis window length, seconds.
    pub delta_t: f64,
    /// Half-width of every recovery band, Hz.
    pub band_half_width: f64,
    pub f_d_source: FreqSource,
    pub taper: Taper,
    pub background: BackgroundModel,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            estimator_id: EstimatorId::ExactRecovery,
            delta_t: 0.7,
            band_half_width: 2.0,
            f_d_source: FreqSource::Nominal,
            taper: Taper::Hann,
            background: BackgroundModel::None,
        }
    }
}

/// Contrast estimate on every non-overlapping trailing window of the trace
/// (parallel over windows when the `parallel` feature is on).
pub fn estimate_contrast(
    ts: &TimeSeries,
    f_d: f64,
    f_mw: f64,
    cfg: &EstimatorConfig,
) -> Result<ContrastSeries> {
    estimate_impl(ts, f_d, f_mw, cfg, true)
}

/// Single-threaded twin of [`estimate_contrast`]; output is bit-identical.
pub fn estimate_contrast_seq(
    ts: &TimeSeries,
    f_d: f64,
    f_mw: f64,
    cfg: &EstimatorConfig,
) -> Result<ContrastSeries> {
    estimate_impl(ts, f_d, f_mw, cfg, false)
}

fn estimate_impl(
    ts: &TimeSeries,
    f_d: f64,
    f_mw: f64,
    cfg: &EstimatorConfig,
    parallel: bool,
) -> Result<ContrastSeries> {
    if cfg.estimator_id == EstimatorId::Conventional {
        return Err(Error::Degenerate(
            "the conventional estimator is demodulation based; use the single \
             lock-in pipeline"
            .into(),
        ));
    }
    if !(f_d > 0.0 && f_mw > 10.0 * f_d) {
        return Err(Error::Degenerate(format!(
            "need 0 < f_d and f_mw > 10 f_d (got f_d = {f_d}, f_mw = {f_mw})"
        )));
    }
    let len = (cfg.delta_t / ts.dt).round() as i64;
    if len < 8 {
        return Err(Error::Degenerate(format!(
            "window of {} s spans only {len} samples at {} Hz",
            cfg.delta_t,
            ts.sample_rate()
        )));
    }
    let len = len as usize;
    let n_windows = ts.len() / len;
    if n_windows == 0 {
        return Err(Error::Degenerate(format!(
            "trace of {:.3} s holds no {:.3} s window",
            ts.duration(),
            cfg.delta_t
        )));
    }

    // Per-window droplet rate, tracked or pinned.
    let rates: Vec<f64> = match cfg.f_d_source {
        FreqSource::Nominal => vec![f_d; n_windows],
        FreqSource::Tracked { search_half_width } => {
            if !(search_half_width > 0.0) {
                return Err(Error::Degenerate(
                    "tracked rate needs a positive search half-width".into(),
                ));
            }
            let f_lo = (f_d - search_half_width).max(0.5 / cfg.delta_t);
            let f_hi = f_d + search_half_width;
            let gram = if parallel {
                dsp::compute_spectrogram(ts, cfg.delta_t, f_lo, f_hi, cfg.taper)?
            } else {
                dsp::compute_spectrogram_seq(ts, cfg.delta_t, f_lo, f_hi, cfg.taper)?
            };
            dsp::refine_rate_track(&gram, f_d).f_d
        }
    };

    let fft = rustfft::FftPlanner::new().plan_fft_forward(len);
    let hw = cfg.band_half_width;
    let job = |w: usize| -> Result<(f64, f64, bool)> {
        let win = dsp::build_window(ts, w * len, len, w, cfg.taper, &fft);
        // Window end relative to the trace start; the background model and
        // the output timestamps both hang off it.
        let t_end = (w + 1) as f64 * len as f64 * ts.dt;
        let value = window_value(&win, rates[w], f_mw, hw, cfg, t_end)?;
        let ok = value.is_finite();
        Ok((ts.t_start + t_end, if ok { value } else { f64::NAN }, ok))
    };
    let rows = if parallel {
        exec::map_indexed(n_windows, job)
    } else {
        exec::map_indexed_seq(n_windows, job)
    };
    let mut times = Vec::with_capacity(n_windows);
    let mut values = Vec::with_capacity(n_windows);
    let mut valid = Vec::with_capacity(n_windows);
    for row in rows {
        let (t, v, ok) = row?;
        times.push(t);
        values.push(v);
        valid.push(ok);
    }
    if !valid.iter().any(|v| *v) {
        return Err(Error::Degenerate(
            "every analysis window came out invalid (vanishing droplet line?)".into(),
        ));
    }
    Ok(ContrastSeries::new(cfg.estimator_id, times, values, valid))
}

/// One window's estimate; NaN marks an unusable window (vanishing
/// denominator), band errors propagate.
fn window_value(
    win: &SpectrumWindow,
    f_d: f64,
    f_mw: f64,
    hw: f64,
    cfg: &EstimatorConfig,
    t_end: f64,
) -> Result<f64> {
    let a_d = dsp::band_amplitude(win, Band::new(f_d, hw))?;
    let a_up = dsp::band_amplitude(win, Band::new(f_mw + f_d, hw))?;
    let a_lo = dsp::band_amplitude(win, Band::new(f_mw - f_d, hw))?;
    // No droplet line above the window's numerical floor means no droplets
    // passed: the window is unusable for every variant, including the ones
    // whose denominator would survive.
    let floor = 1e-12 * win.magnitudes.iter().map(|m| m * m).sum::<f64>().sqrt();
    if a_d <= floor {
        return Ok(f64::NAN);
    }
    Ok(match cfg.estimator_id {
        EstimatorId::PaperMain => {
            let a_mw = dsp::band_amplitude(win, Band::new(f_mw, hw))?;
            let denom = a_d * f_d;
            if denom.abs() < 1e-12 {
                f64::NAN
            } else {
                (a_mw + a_up + a_lo) / denom
            }
        }
        EstimatorId::SiVariant => {
            if a_d.abs() < 1e-12 {
                f64::NAN
            } else {
                (a_up + a_lo) / (2.0 * a_d)
            }
        }
        EstimatorId::ExactRecovery => {
            let a_mw = dsp::band_amplitude(win, Band::new(f_mw, hw))?;
            let m = win.raw_mean - cfg.background.window_mean(t_end - win.delta_t, t_end);
            let denom = m + a_d;
            if denom.abs() < 1e-12 {
                f64::NAN
            } else {
                (a_mw + a_up + a_lo) / denom
            }
        }
        EstimatorId::Conventional => unreachable!("rejected above"),
    })
}

/// Single-point calibration: the factor aligning a series' mean with a known
/// reference contrast. Apply with [`ContrastSeries::scaled`].
pub fn calibrate(series: &ContrastSeries, reference_contrast: f64) -> Result<f64> {
    if !(reference_contrast.is_finite() && reference_contrast > 0.0) {
        return Err(Error::Degenerate(format!(
            "reference contrast must be positive (got {reference_contrast})"
        )));
    }
    if !series.mean.is_finite() || series.mean.abs() < 1e-300 {
        return Err(Error::Degenerate(format!(
            "series mean {} cannot anchor a calibration",
            series.mean
        )));
    }
    Ok(reference_contrast / series.mean)
}
