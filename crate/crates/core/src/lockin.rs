//! Conventional single lock-in demodulation and the ratiometric contrast
//! estimate built on it.
//!
//! This is the comparison arm: mix at the modulation rate, low-pass with a
//! cascade of identical one-pole stages, decimate, and normalize the
//! magnitude by smoothed total PL. The one-pole recursion is serial by
//! nature, so unlike the spectral pipeline these ops have no parallel twin.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{ContrastSeries, EstimatorId, TimeSeries};

/// Mixer and filter settings for one demodulation pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemodConfig {
    /// Reference frequency, Hz.
    pub reference_freq: f64,
    /// Reference phase at t = 0, radians.
    pub reference_phase: f64,
    /// Time constant of each one-pole stage, seconds.
    pub filter_tau: f64,
    /// Number of cascaded stages, 1..=4.
    pub filter_order: usize,
    /// Spacing of the decimated output, seconds.
    pub output_interval: f64,
}

impl Default for DemodConfig {
    fn default() -> Self {
        Self {
            reference_freq: 2_000.0,
            reference_phase: 0.0,
            filter_tau: 0.05,
            filter_order: 2,
            output_interval: 0.1,
        }
    }
}

impl DemodConfig {
    /// Time until the cascade output is trusted: five time constants per
    /// stage, measured from the start of the trace.
    pub fn settling_time(&self) -> f64 {
        5.0 * self.filter_tau * self.filter_order as f64
    }

    fn check(&self, ts: &TimeSeries) -> Result<()> {
        if !(1..=4).contains(&self.filter_order) {
            return Err(Error::Degenerate(format!(
                "filter order must be 1..=4 (got {})",
                self.filter_order
            )));
        }
        if !(self.filter_tau.is_finite() && self.filter_tau > 0.0) {
            return Err(Error::Degenerate(format!(
                "filter tau must be positive (got {})",
                self.filter_tau
            )));
        }
        let nyquist = 0.5 * ts.sample_rate();
        if !(self.reference_freq > 0.0 && self.reference_freq < nyquist) {
            return Err(Error::BandOutsideNyquist {
                center: self.reference_freq,
                half_width: 0.0,
                nyquist,
            });
        }
        if self.output_interval < ts.dt {
            return Err(Error::Degenerate(format!(
                "output interval {} s is below the sample interval {} s",
                self.output_interval, ts.dt
            )));
        }
        Ok(())
    }
}

/// Cascade of up to four identical one-pole stages,
/// `y <- y + alpha (x - y)` per stage.
struct Cascade {
    alpha: f64,
    order: usize,
    state: [f64; 4],
}

impl Cascade {
    fn new(tau: f64, dt: f64, order: usize, init: f64) -> Self {
        Self {
            alpha: 1.0 - (-dt / tau).exp(),
            order,
            state: [init; 4],
        }
    }

    fn step(&mut self, x: f64) -> f64 {
        let mut s = x;
        for st in self.state.iter_mut().take(self.order) {
            *st += self.alpha * (s - *st);
            s = *st;
        }
        s
    }
}

/// Amplitude response of one one-pole stage at angular frequency
/// `omega` (rad/s) for a given sample interval. The cascade response is this
/// raised to the filter order.
pub fn one_pole_gain(tau: f64, dt: f64, omega: f64) -> f64 {
    let alpha = 1.0 - (-dt / tau).exp();
    let beta = 1.0 - alpha;
    let c = (omega * dt).cos();
    alpha / (1.0 + beta * beta - 2.0 * beta * c).sqrt()
}

/// Decimated in-phase/quadrature/magnitude traces.
///
/// Amplitude convention: a tone `A cos(omega t + phi)` at the reference
/// frequency demodulates to `R = A/2`. No factor-of-two restoration is
/// applied here; the ratiometric estimator reinstates it.
#[derive(Debug, Clone, PartialEq)]
pub struct LockinOutput {
    pub i: TimeSeries,
    pub q: TimeSeries,
    pub r: TimeSeries,
    /// Absolute time from which the filters are settled.
    pub settled_from: f64,
}

pub fn demodulate(ts: &TimeSeries, cfg: &DemodConfig) -> Result<LockinOutput> {
    cfg.check(ts)?;
    let dt = ts.dt;
    let omega = std::f64::consts::TAU * cfg.reference_freq;
    let decim = (cfg.output_interval / dt).round() as usize;
    let mut chain_i = Cascade::new(cfg.filter_tau, dt, cfg.filter_order, 0.0);
    let mut chain_q = Cascade::new(cfg.filter_tau, dt, cfg.filter_order, 0.0);
    let n_out = ts.len() / decim;
    if n_out == 0 {
        return Err(Error::Degenerate(format!(
            "trace of {} samples yields no output at {} s spacing",
            ts.len(),
            cfg.output_interval
        )));
    }
    let mut out_i = Vec::with_capacity(n_out);
    let mut out_q = Vec::with_capacity(n_out);
    for (k, &x) in ts.samples.iter().enumerate() {
        let t = ts.time_at(k);
        let (s, c) = (omega * t + cfg.reference_phase).sin_cos();
        let fi = chain_i.step(x * c);
        let fq = chain_q.step(-x * s);
        if k % decim == decim - 1 {
            out_i.push(fi);
            out_q.push(fq);
        }
    }
    let out_r: Vec<f64> = out_i
        .iter()
        .zip(&out_q)
        .map(|(&i, &q)| (i * i + q * q).sqrt())
        .collect();
    // Output sample j holds the filter state at sample (j+1)*decim - 1.
    let t0 = ts.time_at(decim - 1);
    let dt_out = decim as f64 * dt;
    Ok(LockinOutput {
        i: TimeSeries::new(t0, dt_out, out_i),
        q: TimeSeries::new(t0, dt_out, out_q),
        r: TimeSeries::new(t0, dt_out, out_r),
        settled_from: ts.t_start + cfg.settling_time(),
    })
}

/// Conventional contrast estimate: `2 R / smoothed PL` on the decimated
/// grid. Entries inside the settling span of either filter are flagged
/// invalid and excluded from the summary statistics.
pub fn ratiometric_contrast(
    ts: &TimeSeries,
    cfg: &DemodConfig,
    pl_smooth_tau: f64,
) -> Result<ContrastSeries> {
    if !(pl_smooth_tau.is_finite() && pl_smooth_tau > 0.0) {
        return Err(Error::Degenerate(format!(
            "pl smoothing tau must be positive (got {pl_smooth_tau})"
        )));
    }
    cfg.check(ts)?;
    let decim = (cfg.output_interval / ts.dt).round() as usize;
    // Warm-start the PL smoother at the first sample; the settling cut below
    // covers the residual transient.
    let mut smoother = Cascade::new(pl_smooth_tau, ts.dt, 1, ts.samples[0]);
    let mut pl = Vec::with_capacity(ts.len() / decim);
    for (k, &x) in ts.samples.iter().enumerate() {
        let s = smoother.step(x);
        if k % decim == decim - 1 {
            pl.push(s);
        }
    }
    let lock = demodulate(ts, cfg)?;
    let settled = lock.settled_from.max(ts.t_start + 5.0 * pl_smooth_tau);
    let mut values = Vec::with_capacity(lock.r.len());
    let mut valid = Vec::with_capacity(lock.r.len());
    let mut times = Vec::with_capacity(lock.r.len());
    for (j, &r) in lock.r.samples.iter().enumerate() {
        let t = lock.r.time_at(j);
        let denom = pl[j];
        let ok = t >= settled && denom.abs() > 1e-12;
        times.push(t);
        values.push(if ok { 2.0 * r / denom } else { f64::NAN });
        valid.push(ok);
    }
    if !valid.iter().any(|v| *v) {
        return Err(Error::Degenerate(format!(
            "no settled output: trace ends at {:.3} s, filters settle at {:.3} s",
            ts.t_end(),
            settled
        )));
    }
    Ok(ContrastSeries::new(
        EstimatorId::Conventional,
        times,
        values,
        valid,
    ))
}
