//! Windowed spectral estimation: tapered short-time spectra, band amplitude
//! recovery, droplet-line tracking, and line-shape fitting.
//!
//! Amplitude convention: single-sided, coherent-gain normalized. A pure
//! cosine of amplitude A landing exactly on a bin reads back as A in that
//! bin regardless of taper; off-bin energy is recovered by root-sum-square
//! over a narrow band with a taper-specific correction ([`Taper::band_rss_gain`]).

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::fit::{levenberg_marquardt, FitProblem};
use crate::series::TimeSeries;

/// Analysis window shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Taper {
    Rect,
    /// Periodic Hann. Chosen over the symmetric form because its discrete
    /// kernel for an on-bin tone is exactly (1/2, 1, 1/2) times the tone
    /// amplitude, which makes narrowband RSS recovery exact.
    Hann,
}

impl Taper {
    pub fn label(self) -> &'static str {
        match self {
            Taper::Rect => "rect",
            Taper::Hann => "hann",
        }
    }

    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Taper::Rect => vec![1.0; n],
            Taper::Hann => (0..n)
                .map(|i| {
                    let x = std::f64::consts::TAU * i as f64 / n as f64;
                    0.5 * (1.0 - x.cos())
                })
                .collect(),
        }
    }

    /// Ratio of band RSS to tone amplitude for an on-bin tone. Rect keeps
    /// all energy in one bin; Hann spreads (1/2, 1, 1/2), whose RSS is
    /// sqrt(1 + 1/4 + 1/4) = sqrt(3/2).
    pub fn band_rss_gain(self) -> f64 {
        match self {
            Taper::Rect => 1.0,
            Taper::Hann => (1.5f64).sqrt(),
        }
    }
}

/// Frequency band `center ± half_width`, Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub center: f64,
    pub half_width: f64,
}

impl Band {
    pub fn new(center: f64, half_width: f64) -> Self {
        Self { center, half_width }
    }

    pub fn lo(&self) -> f64 {
        self.center - self.half_width
    }

    pub fn hi(&self) -> f64 {
        self.center + self.half_width
    }
}

/// Single-sided amplitude spectrum of one analysis window.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumWindow {
    pub window_index: usize,
    /// Mid-time of the window, seconds.
    pub t_center: f64,
    /// Effective window length: the nearest whole number of samples times dt.
    pub delta_t: f64,
    /// Amplitude per bin; bin k sits at `k / delta_t` Hz.
    pub magnitudes: Vec<f64>,
    pub taper: Taper,
    pub n_samples: usize,
    /// Sum of taper coefficients (the amplitude normalizer).
    pub coherent_gain: f64,
    /// Window mean before subtraction; the absolute-scale estimator needs it.
    pub raw_mean: f64,
}

impl SpectrumWindow {
    /// Bin spacing, Hz.
    pub fn df(&self) -> f64 {
        1.0 / self.delta_t
    }

    pub fn freq(&self, bin: usize) -> f64 {
        bin as f64 * self.df()
    }

    pub fn freqs(&self) -> Vec<f64> {
        (0..self.magnitudes.len()).map(|k| self.freq(k)).collect()
    }

    pub fn sample_rate(&self) -> f64 {
        self.n_samples as f64 / self.delta_t
    }

    pub fn nyquist(&self) -> f64 {
        0.5 * self.sample_rate()
    }
}

/// Mean-subtract, taper, FFT, normalize to single-sided amplitudes.
fn spectrum_core(samples: &[f64], taper: Taper, fft: &Arc<dyn Fft<f64>>) -> (Vec<f64>, f64, f64) {
    let n = samples.len();
    let raw_mean = samples.iter().sum::<f64>() / n as f64;
    let w = taper.coefficients(n);
    let coherent_gain: f64 = w.iter().sum();
    let mut buf: Vec<Complex<f64>> = samples
        .iter()
        .zip(&w)
        .map(|(&s, &wi)| Complex::new((s - raw_mean) * wi, 0.0))
        .collect();
    fft.process(&mut buf);
    let half = n / 2;
    let mut mags = Vec::with_capacity(half + 1);
    for (k, c) in buf.iter().take(half + 1).enumerate() {
        // DC and (for even n) Nyquist have no mirror bin.
        let scale = if k == 0 || (n % 2 == 0 && k == half) {
            1.0
        } else {
            2.0
        };
        mags.push(scale * c.norm() / coherent_gain);
    }
    (mags, coherent_gain, raw_mean)
}

fn window_len(ts: &TimeSeries, delta_t: f64) -> Result<usize> {
    let len = (delta_t / ts.dt).round() as i64;
    if len < 8 {
        return Err(Error::Degenerate(format!(
            "window of {delta_t} s spans only {len} samples at {} Hz",
            ts.sample_rate()
        )));
    }
    Ok(len as usize)
}

/// Spectrum of the trailing window `[t_end - delta_t, t_end]`.
pub fn window_spectrum(
    ts: &TimeSeries,
    t_end: f64,
    delta_t: f64,
    taper: Taper,
) -> Result<SpectrumWindow> {
    let len = window_len(ts, delta_t)?;
    let i1 = ((t_end - ts.t_start) / ts.dt).round() as i64;
    let i0 = i1 - len as i64;
    if i0 < 0 || i1 > ts.len() as i64 {
        return Err(Error::WindowOutOfBounds {
            t0: t_end - delta_t,
            t1: t_end,
            lo: ts.t_start,
            hi: ts.t_end(),
        });
    }
    let fft = FftPlanner::new().plan_fft_forward(len);
    Ok(build_window(ts, i0 as usize, len, 0, taper, &fft))
}

pub(crate) fn build_window(
    ts: &TimeSeries,
    i0: usize,
    len: usize,
    window_index: usize,
    taper: Taper,
    fft: &Arc<dyn Fft<f64>>,
) -> SpectrumWindow {
    let (magnitudes, coherent_gain, raw_mean) =
        spectrum_core(&ts.samples[i0..i0 + len], taper, fft);
    let delta_t = len as f64 * ts.dt;
    SpectrumWindow {
        window_index,
        t_center: ts.time_at(i0) + 0.5 * delta_t,
        delta_t,
        magnitudes,
        taper,
        n_samples: len,
        coherent_gain,
        raw_mean,
    }
}

/// Root-sum-square amplitude inside `band`, corrected for the taper's
/// spectral spread. The band must sit strictly inside (0, nyquist) and
/// cover at least one bin.
pub fn band_amplitude(win: &SpectrumWindow, band: Band) -> Result<f64> {
    if !(band.lo() > 0.0 && band.hi() < win.nyquist()) {
        return Err(Error::BandOutsideNyquist {
            center: band.center,
            half_width: band.half_width,
            nyquist: win.nyquist(),
        });
    }
    let df = win.df();
    let k_lo = (band.lo() / df).ceil() as usize;
    let k_hi = (band.hi() / df).floor() as usize;
    if k_lo > k_hi {
        return Err(Error::Degenerate(format!(
            "band {} +- {} Hz contains no bins at {:.4} Hz spacing",
            band.center, band.half_width, df
        )));
    }
    let ss: f64 = win.magnitudes[k_lo..=k_hi].iter().map(|m| m * m).sum();
    Ok(ss.sqrt() / win.taper.band_rss_gain())
}

/// Band-restricted short-time spectrum on non-overlapping windows.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    /// Mid-times of the windows, seconds.
    pub times: Vec<f64>,
    /// Frequencies of the retained bins, Hz.
    pub freqs: Vec<f64>,
    /// `rows[w][j]` is the amplitude at `freqs[j]` in window `w`.
    pub rows: Vec<Vec<f64>>,
    pub delta_t: f64,
    pub taper: Taper,
}

/// Tile the trace with non-overlapping `delta_t` windows and keep bins in
/// `[f_lo, f_hi]`. A trailing partial window is dropped.
pub fn compute_spectrogram(
    ts: &TimeSeries,
    delta_t: f64,
    f_lo: f64,
    f_hi: f64,
    taper: Taper,
) -> Result<Spectrogram> {
    spectrogram_impl(ts, delta_t, f_lo, f_hi, taper, true)
}

/// Single-threaded twin of [`compute_spectrogram`].
pub fn compute_spectrogram_seq(
    ts: &TimeSeries,
    delta_t: f64,
    f_lo: f64,
    f_hi: f64,
    taper: Taper,
) -> Result<Spectrogram> {
    spectrogram_impl(ts, delta_t, f_lo, f_hi, taper, false)
}

fn spectrogram_impl(
    ts: &TimeSeries,
    delta_t: f64,
    f_lo: f64,
    f_hi: f64,
    taper: Taper,
    parallel: bool,
) -> Result<Spectrogram> {
    let len = window_len(ts, delta_t)?;
    let n_windows = ts.len() / len;
    if n_windows == 0 {
        return Err(Error::WindowOutOfBounds {
            t0: ts.t_start,
            t1: ts.t_start + len as f64 * ts.dt,
            lo: ts.t_start,
            hi: ts.t_end(),
        });
    }
    let delta_eff = len as f64 * ts.dt;
    let df = 1.0 / delta_eff;
    let nyquist = 0.5 * ts.sample_rate();
    if !(f_lo >= 0.0 && f_hi > f_lo && f_lo < nyquist) {
        return Err(Error::BandOutsideNyquist {
            center: 0.5 * (f_lo + f_hi),
            half_width: 0.5 * (f_hi - f_lo),
            nyquist,
        });
    }
    let k_lo = (f_lo / df).ceil() as usize;
    let k_hi = ((f_hi / df).floor() as usize).min(len / 2);
    if k_lo > k_hi {
        return Err(Error::Degenerate(format!(
            "retained range [{f_lo}, {f_hi}] Hz contains no bins at {df:.4} Hz spacing"
        )));
    }
    let fft = FftPlanner::new().plan_fft_forward(len);
    let job = |w: usize| {
        let win = build_window(ts, w * len, len, w, taper, &fft);
        (win.t_center, win.magnitudes[k_lo..=k_hi].to_vec())
    };
    let rows = if parallel {
        exec::map_indexed(n_windows, job)
    } else {
        exec::map_indexed_seq(n_windows, job)
    };
    Ok(Spectrogram {
        times: rows.iter().map(|(t, _)| *t).collect(),
        freqs: (k_lo..=k_hi).map(|k| k as f64 * df).collect(),
        rows: rows.into_iter().map(|(_, r)| r).collect(),
        delta_t: delta_eff,
        taper,
    })
}

/// Per-window droplet-rate estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct RateTrack {
    pub times: Vec<f64>,
    pub f_d: Vec<f64>,
}

impl RateTrack {
    /// Tracked rate for the window whose mid-time is nearest `t`.
    pub fn rate_at(&self, t: f64) -> f64 {
        let i = self
            .times
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| {
                (*a - t).abs().partial_cmp(&(*b - t).abs()).unwrap()
            })
            .map(|(i, _)| i)
            .unwrap_or(0);
        self.f_d[i]
    }
}

/// Track the droplet fundamental window by window: argmax bin inside
/// `nominal ± search_half_width`, refined by three-point parabolic
/// interpolation. Windows where the peak hugs the search edge keep the
/// nominal rate instead of a spurious edge estimate.
pub fn track_droplet_rate(
    ts: &TimeSeries,
    delta_t: f64,
    nominal_f_d: f64,
    search_half_width: f64,
    taper: Taper,
) -> Result<RateTrack> {
    let gram = compute_spectrogram(
        ts,
        delta_t,
        (nominal_f_d - search_half_width).max(0.5 / delta_t),
        nominal_f_d + search_half_width,
        taper,
    )?;
    Ok(refine_rate_track(&gram, nominal_f_d))
}

/// Peak-refinement half of [`track_droplet_rate`], reusable on a spectrogram
/// computed elsewhere.
pub fn refine_rate_track(gram: &Spectrogram, nominal_f_d: f64) -> RateTrack {
    let df = 1.0 / gram.delta_t;
    let mut f_d = Vec::with_capacity(gram.rows.len());
    for row in &gram.rows {
        let (j, _) = row
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| a.partial_cmp(b).unwrap())
            .expect("retained range is never empty");
        if j == 0 || j + 1 == row.len() {
            f_d.push(nominal_f_d);
            continue;
        }
        // Parabolic vertex through the peak bin and its neighbors.
        let (ym, y0, yp) = (row[j - 1], row[j], row[j + 1]);
        let denom = ym - 2.0 * y0 + yp;
        let shift = if denom.abs() < 1e-300 {
            0.0
        } else {
            0.5 * (ym - yp) / denom
        };
        f_d.push(gram.freqs[j] + shift.clamp(-0.5, 0.5) * df);
    }
    RateTrack {
        times: gram.times.clone(),
        f_d,
    }
}

/// Lorentzian line-shape parameters in amplitude units:
/// `offset + amplitude * (fwhm/2)^2 / ((f - center)^2 + (fwhm/2)^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LorentzianFit {
    pub center: f64,
    pub fwhm: f64,
    pub amplitude: f64,
    pub offset: f64,
    /// Root-mean-square residual of the fit.
    pub rms_residual: f64,
}

/// Fit a Lorentzian to an amplitude spectrum slice. Initial values come from
/// the data (peak location, half-max crossings); bounds keep the line inside
/// the supplied frequency range.
pub fn fit_lorentzian(freqs: &[f64], mags: &[f64]) -> Result<LorentzianFit> {
    if freqs.len() != mags.len() || freqs.len() < 5 {
        return Err(Error::Degenerate(format!(
            "lorentzian fit needs at least 5 points (got {})",
            freqs.len()
        )));
    }
    let (peak_idx, &peak) = mags
        .iter()
        .enumerate()
        .max_by(|(_, a), (_, b)| a.partial_cmp(b).unwrap())
        .unwrap();
    let floor = mags.iter().cloned().fold(f64::INFINITY, f64::min);
    let half = floor + 0.5 * (peak - floor);
    // Width guess from the outermost half-max crossings around the peak.
    let mut lo = freqs[peak_idx];
    let mut hi = freqs[peak_idx];
    for i in (0..peak_idx).rev() {
        if mags[i] < half {
            break;
        }
        lo = freqs[i];
    }
    for i in peak_idx..freqs.len() {
        if mags[i] < half {
            break;
        }
        hi = freqs[i];
    }
    let span = freqs[freqs.len() - 1] - freqs[0];
    let width_guess = (hi - lo).max(span / freqs.len() as f64);
    let init = [freqs[peak_idx], width_guess, peak - floor, floor];
    let lower = [freqs[0], span * 1e-4, 0.0, 0.0];
    let upper = [freqs[freqs.len() - 1], 4.0 * span, 10.0 * peak.max(1e-300), peak];
    let out = levenberg_marquardt(&FitProblem {
        model: |p: &[f64], f: f64| {
            let hw = 0.5 * p[1];
            p[3] + p[2] * hw * hw / ((f - p[0]) * (f - p[0]) + hw * hw)
        },
        xs: freqs,
        ys: mags,
        weights: None,
        init: &init,
        lower: &lower,
        upper: &upper,
        max_iter: 400,
        tol: 1e-12,
    })?;
    Ok(LorentzianFit {
        center: out.params[0],
        fwhm: out.params[1],
        amplitude: out.params[2],
        offset: out.params[3],
        rms_residual: (out.cost / freqs.len() as f64).sqrt(),
    })
}
