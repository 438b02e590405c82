//! Synthetic acquisition engine.
//!
//! The noiseless model per sample is
//!
//! ```text
//! pl(t) = drift(t) * [m0 + g0 * l(t) * P(theta_d(t))] * [1 - C * W(theta_mw(t))]
//!         + b0 * exp(-t / tau_b)
//! ```
//!
//! with `P` the droplet transit profile and `W` the microwave modulation
//! waveform, both normalized to zero mean and unit fundamental amplitude so
//! the recovered contrast is shape independent. `l(t)` is the loading factor
//! of the droplet currently in the beam, `drift` the slow multiplicative
//! laser/alignment drift (it scales the droplet stream's PL, not the
//! additive background, which models stray light and detector offset).
//! Shot noise is Gaussian with variance `shot_scale` times the instantaneous
//! noiseless PL; background white noise is additive on top.
//!
//! Everything stochastic draws from purpose-tagged substreams of the master
//! seed, with sample noise chunked on [`exec::CHUNK`] boundaries, so the
//! parallel and sequential paths agree bit for bit.

use rand_distr::{Distribution, StandardNormal};

use crate::brownian;
use crate::config::{DropletProfile, MwWaveform, SimConfig};
use crate::error::Result;
use crate::exec;
use crate::rng::{chunk_substream, stream, substream};
use crate::series::TimeSeries;

/// Cadence of the droplet-rate random walk, seconds.
const RATE_WALK_CADENCE: f64 = 0.01;
/// Entries in the band-limited profile/waveform lookup tables.
const TABLE_LEN: usize = 1 << 14;

/// Instantaneous droplet rate as a reflected random walk, held piecewise
/// constant over [`RATE_WALK_CADENCE`] intervals, with the accumulated
/// transit phase at each interval start.
#[derive(Debug, Clone, PartialEq)]
pub struct RateWalk {
    pub cadence: f64,
    /// Rate during interval n, Hz.
    pub rates: Vec<f64>,
    /// Transit phase (radians) at the start of interval n.
    pub phases: Vec<f64>,
}

impl RateWalk {
    fn interval(&self, t: f64) -> usize {
        ((t / self.cadence) as usize).min(self.rates.len() - 1)
    }

    /// Accumulated transit phase at time `t`, radians.
    pub fn phase_at(&self, t: f64) -> f64 {
        let n = self.interval(t);
        self.phases[n] + std::f64::consts::TAU * self.rates[n] * (t - n as f64 * self.cadence)
    }

    pub fn rate_at(&self, t: f64) -> f64 {
        self.rates[self.interval(t)]
    }
}

/// Everything the generator drew, kept for estimator and tracker tests.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// The contrast the trace was synthesized with.
    pub true_contrast: f64,
    pub rate_walk: RateWalk,
    /// Unit-mean loading factor per droplet index.
    pub loadings: Vec<f64>,
    /// Unit-mean beam-overlap trace when kinetics coupling is on, at the
    /// kinetics time step.
    pub brownian_weight: Option<TimeSeries>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub trace: TimeSeries,
    pub truth: GroundTruth,
}

/// Band-limited periodic waveform, evaluated by phase.
enum Shape {
    Cos,
    /// One period on a uniform grid, linearly interpolated.
    Table(Vec<f64>),
}

impl Shape {
    fn eval(&self, theta: f64) -> f64 {
        match self {
            Shape::Cos => theta.cos(),
            Shape::Table(t) => {
                let n = t.len();
                let u = theta / std::f64::consts::TAU;
                let x = (u - u.floor()) * n as f64;
                let j = (x as usize).min(n - 1);
                let frac = x - j as f64;
                let a = t[j];
                let b = t[(j + 1) % n];
                a + frac * (b - a)
            }
        }
    }
}

/// Sum a cosine series (unit fundamental) into a lookup table.
fn table_from_coeffs(coeffs: &[f64]) -> Vec<f64> {
    let a1 = coeffs[0];
    (0..TABLE_LEN)
        .map(|j| {
            let theta = std::f64::consts::TAU * j as f64 / TABLE_LEN as f64;
            coeffs
                .iter()
                .enumerate()
                .map(|(i, &a)| (a / a1) * ((i + 1) as f64 * theta).cos())
                .sum()
        })
        .collect()
}

/// Droplet profile shape, band-limited so harmonics stay below a quarter of
/// the sample rate.
fn profile_shape(profile: &DropletProfile, f_d: f64, sample_rate: f64) -> Shape {
    let k_max = ((sample_rate / (4.0 * f_d)) as usize).max(1);
    match profile {
        DropletProfile::Sinusoid => Shape::Cos,
        DropletProfile::Square { duty } => {
            // Centered pulse of width `duty`: a_k = 2 sin(k pi duty) / (k pi).
            let coeffs: Vec<f64> = (1..=k_max)
                .map(|k| {
                    let k = k as f64;
                    2.0 * (k * std::f64::consts::PI * duty).sin() / (k * std::f64::consts::PI)
                })
                .collect();
            Shape::Table(table_from_coeffs(&coeffs))
        }
        DropletProfile::RaisedCosine { edge_fraction } => {
            // Duty-0.5 pulse whose edges are cosine ramps of angular width
            // 2 pi edge_fraction centered on the half-duty boundaries.
            // Coefficients by trapezoid quadrature; the integrand is smooth,
            // so the grid sum is spectrally accurate.
            let w = std::f64::consts::TAU * edge_fraction;
            let flat = std::f64::consts::FRAC_PI_2 - 0.5 * w;
            let grid = 1 << 14;
            let pulse = |theta: f64| -> f64 {
                let a = theta.abs();
                if a <= flat {
                    1.0
                } else if a >= flat + w {
                    0.0
                } else {
                    0.5 * (1.0 + (std::f64::consts::PI * (a - flat) / w).cos())
                }
            };
            let coeffs: Vec<f64> = (1..=k_max)
                .map(|k| {
                    let mut acc = 0.0;
                    for j in 0..grid {
                        let theta =
                            std::f64::consts::TAU * (j as f64 / grid as f64) - std::f64::consts::PI;
                        acc += pulse(theta) * (k as f64 * theta).cos();
                    }
                    2.0 * acc / grid as f64
                })
                .collect();
            Shape::Table(table_from_coeffs(&coeffs))
        }
    }
}

/// Microwave waveform shape, band-limited below ~0.45 of the sample rate.
fn waveform_shape(waveform: MwWaveform, f_mw: f64, sample_rate: f64) -> Shape {
    match waveform {
        MwWaveform::Cosine => Shape::Cos,
        MwWaveform::SquareAm => {
            // sign(cos): odd harmonics with alternating sign, normalized to
            // a unit fundamental.
            let k_max = ((0.45 * sample_rate / f_mw) as usize).max(1);
            let coeffs: Vec<f64> = (1..=k_max)
                .map(|k| {
                    if k % 2 == 0 {
                        0.0
                    } else {
                        let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
                        sign / k as f64
                    }
                })
                .collect();
            Shape::Table(table_from_coeffs(&coeffs))
        }
    }
}

/// Reflect `x` into [-band, band].
fn reflect(mut x: f64, band: f64) -> f64 {
    if band <= 0.0 {
        return 0.0;
    }
    for _ in 0..64 {
        if x > band {
            x = 2.0 * band - x;
        } else if x < -band {
            x = -2.0 * band - x;
        } else {
            return x;
        }
    }
    x.clamp(-band, band)
}

fn draw_rate_walk(cfg: &SimConfig) -> RateWalk {
    let f_d = cfg.droplet.f_d;
    let sigma = cfg.droplet.rate_jitter_sigma;
    let duration = cfg.acquisition.duration;
    if sigma == 0.0 {
        return RateWalk {
            cadence: duration,
            rates: vec![f_d],
            phases: vec![0.0],
        };
    }
    // The walk saturates at three times its one-second spread (capped below
    // the rate itself so the transit phase always advances).
    let band = (3.0 * sigma).min(0.9 * f_d);
    let step_sigma = sigma * RATE_WALK_CADENCE.sqrt();
    let n = (duration / RATE_WALK_CADENCE).ceil() as usize;
    let mut rng = substream(cfg.acquisition.rng_seed, stream::RATE_WALK);
    let mut rates = Vec::with_capacity(n);
    let mut phases = Vec::with_capacity(n);
    let mut w = 0.0f64;
    let mut phase = 0.0f64;
    for _ in 0..n {
        rates.push(f_d + w);
        phases.push(phase);
        phase += std::f64::consts::TAU * (f_d + w) * RATE_WALK_CADENCE;
        let z: f64 = StandardNormal.sample(&mut rng);
        w = reflect(w + step_sigma * z, band);
    }
    RateWalk {
        cadence: RATE_WALK_CADENCE,
        rates,
        phases,
    }
}

fn draw_loadings(cfg: &SimConfig) -> Vec<f64> {
    let sigma = cfg.droplet.per_droplet_sigma;
    if sigma == 0.0 {
        return vec![1.0];
    }
    let band = (3.0 * cfg.droplet.rate_jitter_sigma).min(0.9 * cfg.droplet.f_d);
    let n = ((cfg.droplet.f_d + band) * cfg.acquisition.duration).ceil() as usize + 8;
    let mut rng = substream(cfg.acquisition.rng_seed, stream::LOADING);
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            1.0 + sigma * z.clamp(-4.0, 4.0)
        })
        .collect()
}

/// Per-sample model evaluation context; immutable, shared across threads.
struct Model<'a> {
    dt: f64,
    m0: f64,
    g0: f64,
    contrast: f64,
    omega_mw: f64,
    mw_phase: f64,
    drift_fraction: f64,
    drift_omega: f64,
    b0: f64,
    inv_tau_b: f64,
    profile: Shape,
    waveform: Shape,
    walk: &'a RateWalk,
    loadings: &'a [f64],
    coupling: Option<CouplingRef<'a>>,
}

struct CouplingRef<'a> {
    weight: &'a [f64],
    dt: f64,
    depth: f64,
}

impl CouplingRef<'_> {
    fn factor(&self, t: f64) -> f64 {
        let x = t / self.dt;
        let j = (x as usize).min(self.weight.len() - 1);
        let frac = x - j as f64;
        let w = if j + 1 < self.weight.len() {
            self.weight[j] + frac * (self.weight[j + 1] - self.weight[j])
        } else {
            self.weight[j]
        };
        1.0 - self.depth + self.depth * w
    }
}

impl Model<'_> {
    /// Deterministic part of the sample at index `k` (includes the decaying
    /// background, excludes all random noise).
    fn noiseless(&self, k: usize) -> f64 {
        let t = k as f64 * self.dt;
        let theta_d = self.walk.phase_at(t);
        let drop_idx = (theta_d / std::f64::consts::TAU) as usize;
        let l = self.loadings[drop_idx.min(self.loadings.len() - 1)];
        let mut nd = self.m0 + self.g0 * l * self.profile.eval(theta_d);
        if let Some(c) = &self.coupling {
            nd *= c.factor(t);
        }
        // drift_fraction is peak-to-peak, hence the half amplitude.
        let drift = 1.0 + 0.5 * self.drift_fraction * (self.drift_omega * t).sin();
        let mw = 1.0 - self.contrast * self.waveform.eval(self.omega_mw * t + self.mw_phase);
        let background = self.b0 * (-t * self.inv_tau_b).exp();
        drift * nd * mw + background
    }
}

/// Synthesize one acquisition (parallel over sample chunks when the
/// `parallel` feature is on).
pub fn synthesize(cfg: &SimConfig) -> Result<SynthOutput> {
    synth_impl(cfg, true)
}

/// Single-threaded twin of [`synthesize`]; output is bit-identical.
pub fn synthesize_seq(cfg: &SimConfig) -> Result<SynthOutput> {
    synth_impl(cfg, false)
}

fn synth_impl(cfg: &SimConfig, parallel: bool) -> Result<SynthOutput> {
    crate::config::validate_strict(cfg)?;
    let seed = cfg.acquisition.rng_seed;
    let fs = cfg.acquisition.sample_rate;
    let dt = 1.0 / fs;
    let n = (cfg.acquisition.duration * fs).round() as usize;

    let walk = draw_rate_walk(cfg);
    let loadings = draw_loadings(cfg);
    let brownian_weight = match &cfg.brownian {
        Some(b) => {
            // The coupling trace always spans the acquisition; the kinetics
            // duration field only governs standalone runs.
            let mut kp = b.kinetics.clone();
            kp.duration = cfg.acquisition.duration + 2.0 * kp.dt_step;
            Some(brownian::beam_weight_trace(
                &kp,
                b.beam_waist,
                seed,
                parallel,
            )?)
        }
        None => None,
    };

    let model = Model {
        dt,
        m0: cfg.droplet.m0,
        g0: cfg.droplet.g0,
        contrast: cfg.mw.contrast,
        omega_mw: std::f64::consts::TAU * cfg.mw.f_mw,
        mw_phase: cfg.mw.phase,
        drift_fraction: cfg.noise.laser_drift_fraction,
        drift_omega: if cfg.noise.laser_drift_period > 0.0 {
            std::f64::consts::TAU / cfg.noise.laser_drift_period
        } else {
            0.0
        },
        b0: cfg.noise.background_b0,
        inv_tau_b: if cfg.noise.background_b0 > 0.0 {
            1.0 / cfg.noise.background_decay_tau
        } else {
            0.0
        },
        profile: profile_shape(&cfg.droplet.profile, cfg.droplet.f_d, fs),
        waveform: waveform_shape(cfg.mw.waveform, cfg.mw.f_mw, fs),
        walk: &walk,
        loadings: &loadings,
        coupling: cfg.brownian.as_ref().map(|b| CouplingRef {
            weight: &brownian_weight.as_ref().unwrap().samples,
            dt: b.kinetics.dt_step,
            depth: b.depth,
        }),
    };

    let shot_scale = cfg.noise.shot_scale;
    let white_sigma = cfg.noise.background_white_sigma;
    let mut samples = vec![0.0; n];
    let fill = |ci: usize, start: usize, chunk: &mut [f64]| {
        let mut shot_rng = (shot_scale > 0.0).then(|| chunk_substream(seed, stream::SHOT, ci));
        let mut bg_rng = (white_sigma > 0.0).then(|| chunk_substream(seed, stream::BACKGROUND, ci));
        for (off, s) in chunk.iter_mut().enumerate() {
            let clean = model.noiseless(start + off);
            let mut v = clean;
            if let Some(r) = &mut shot_rng {
                let z: f64 = StandardNormal.sample(r);
                v += z * (shot_scale * clean.max(0.0)).sqrt();
            }
            if let Some(r) = &mut bg_rng {
                let z: f64 = StandardNormal.sample(r);
                v += z * white_sigma;
            }
            *s = v;
        }
    };
    if parallel {
        exec::for_each_chunk(&mut samples, fill);
    } else {
        exec::for_each_chunk_seq(&mut samples, fill);
    }

    Ok(SynthOutput {
        trace: TimeSeries::new(0.0, dt, samples),
        truth: GroundTruth {
            true_contrast: cfg.mw.contrast,
            rate_walk: walk,
            loadings,
            brownian_weight,
        },
    })
}

/// Multiply a trace by a kinetics-driven beam-overlap factor:
/// `pl -> pl * (1 - depth + depth * w(t))`, where `w` is a unit-mean
/// fluorescence-weight trace at the same sample rate (see
/// [`crate::brownian::fluorescence_trace`]). The whole input is treated as
/// diamond PL; to couple kinetics into only the diamond-bearing part of a
/// synthetic signal, configure it in [`SimConfig::brownian`] instead.
pub fn inject_brownian_noise(
    ts: &TimeSeries,
    trace: &TimeSeries,
    depth: f64,
) -> Result<TimeSeries> {
    if !(0.0..=1.0).contains(&depth) {
        return Err(crate::error::Error::Degenerate(format!(
            "coupling depth must lie in [0, 1] (got {depth})"
        )));
    }
    let (left, right) = (ts.sample_rate(), trace.sample_rate());
    if (left - right).abs() > 1e-9 * left {
        return Err(crate::error::Error::SampleRateMismatch { left, right });
    }
    if trace.len() < ts.len() {
        return Err(crate::error::Error::Degenerate(format!(
            "coupling trace ({} samples) is shorter than the signal ({})",
            trace.len(),
            ts.len()
        )));
    }
    let mean = trace.mean();
    if (mean - 1.0).abs() > 1e-6 {
        return Err(crate::error::Error::Degenerate(format!(
            "coupling trace must be mean-normalized to 1 (mean {mean})"
        )));
    }
    let samples = ts
        .samples
        .iter()
        .zip(&trace.samples)
        .map(|(&s, &w)| s * (1.0 - depth + depth * w))
        .collect();
    Ok(TimeSeries::new(ts.t_start, ts.dt, samples))
}
