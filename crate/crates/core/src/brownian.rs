//! Intra-droplet nanodiamond kinetics: confined random walks in a disc with
//! a reflective rim, plus the derived beam-overlap fluorescence weight.
//!
//! The droplet cross-section is a 2D disc of radius R. Each particle takes
//! Gaussian steps of per-axis sigma `sqrt(2 D dt)`; the optional heavy-tail
//! mode draws per-axis symmetric alpha-stable steps (Chambers-Mallows-Stuck)
//! scaled to match the Gaussian diffusivity at alpha = 2 and truncated at
//! one droplet diameter. Positions crossing the rim are folded back
//! radially, `rho -> 2R - rho`.
//!
//! Particle p draws from its own substream of the master seed, so particle
//! count, batching, and thread count never change an individual trajectory.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::config::KineticsParams;
use crate::error::{Error, Result};
use crate::exec;
use crate::rng::{chunk_substream, stream};
use crate::series::TimeSeries;

/// Particles per work unit in the streaming beam-weight path.
const BATCH: usize = 8;

/// Positions of every particle at every step, step 0 included.
#[derive(Debug, Clone, PartialEq)]
pub struct KineticsRun {
    pub dt_step: f64,
    pub droplet_radius: f64,
    /// `positions[p][n]` is particle p at time `n * dt_step`, um.
    pub positions: Vec<Vec<[f64; 2]>>,
}

impl KineticsRun {
    pub fn n_steps(&self) -> usize {
        self.positions.first().map_or(0, |t| t.len())
    }
}

enum StepDraw {
    Gauss { sigma: f64 },
    Stable { alpha: f64, scale: f64, cap: f64 },
}

/// Symmetric alpha-stable variate (unit scale) via Chambers-Mallows-Stuck.
/// At alpha = 2 this reduces to `2 sin(U) sqrt(E)`, i.e. N(0, 2).
fn stable_draw(alpha: f64, rng: &mut ChaCha8Rng) -> f64 {
    let u = (rng.gen::<f64>() - 0.5) * std::f64::consts::PI;
    let e = -(1.0 - rng.gen::<f64>()).ln();
    let a = (alpha * u).sin() / u.cos().powf(1.0 / alpha);
    let b = ((1.0 - alpha) * u).cos() / e;
    a * b.powf((1.0 - alpha) / alpha)
}

impl StepDraw {
    fn new(params: &KineticsParams) -> Self {
        match params.heavy_tail_alpha {
            None => StepDraw::Gauss {
                sigma: (2.0 * params.diffusion_coeff * params.dt_step).sqrt(),
            },
            Some(alpha) => StepDraw::Stable {
                alpha,
                // Matches the Gaussian per-axis variance 2 D dt at alpha = 2.
                scale: (params.diffusion_coeff * params.dt_step).sqrt(),
                cap: 2.0 * params.droplet_radius,
            },
        }
    }

    fn draw(&self, radius: f64, rng: &mut ChaCha8Rng) -> Result<[f64; 2]> {
        match self {
            StepDraw::Gauss { sigma } => {
                let zx: f64 = StandardNormal.sample(rng);
                let zy: f64 = StandardNormal.sample(rng);
                let (dx, dy) = (sigma * zx, sigma * zy);
                let mag = (dx * dx + dy * dy).sqrt();
                if mag > radius {
                    return Err(Error::TimeStepTooCoarse {
                        step_um: mag,
                        radius_um: radius,
                    });
                }
                Ok([dx, dy])
            }
            StepDraw::Stable { alpha, scale, cap } => {
                let dx = (scale * stable_draw(*alpha, rng)).clamp(-cap, *cap);
                let dy = (scale * stable_draw(*alpha, rng)).clamp(-cap, *cap);
                Ok([dx, dy])
            }
        }
    }
}

/// Uniform start position over the disc.
fn initial_position(radius: f64, rng: &mut ChaCha8Rng) -> [f64; 2] {
    let r = radius * rng.gen::<f64>().sqrt();
    let theta = std::f64::consts::TAU * rng.gen::<f64>();
    [r * theta.cos(), r * theta.sin()]
}

/// Fold a position back inside the disc, reflecting off the rim as many
/// times as the step requires.
fn fold(radius: f64, pos: [f64; 2]) -> [f64; 2] {
    let mut rho = (pos[0] * pos[0] + pos[1] * pos[1]).sqrt();
    if rho <= radius || rho == 0.0 {
        return pos;
    }
    let (dx, dy) = (pos[0] / rho, pos[1] / rho);
    loop {
        rho = (2.0 * radius - rho).abs();
        if rho <= radius {
            return [dx * rho, dy * rho];
        }
    }
}

/// Walk one particle, handing each position (step 0 first) to `sink`.
fn walk_particle(
    params: &KineticsParams,
    draw: &StepDraw,
    n_steps: usize,
    particle: usize,
    seed: u64,
    mut sink: impl FnMut(usize, [f64; 2]),
) -> Result<()> {
    let mut rng = chunk_substream(seed, stream::KINETICS, particle);
    let mut pos = initial_position(params.droplet_radius, &mut rng);
    sink(0, pos);
    for n in 1..=n_steps {
        let d = draw.draw(params.droplet_radius, &mut rng)?;
        pos = fold(params.droplet_radius, [pos[0] + d[0], pos[1] + d[1]]);
        sink(n, pos);
    }
    Ok(())
}

fn checked(params: &KineticsParams) -> Result<usize> {
    let mut report = crate::config::ValidationReport::default();
    crate::config::validate_kinetics(&mut report, "kinetics", params);
    if !report.is_runnable() {
        return Err(Error::InvalidConfig(report));
    }
    Ok((params.duration / params.dt_step).ceil() as usize)
}

/// Simulate and materialize every trajectory (parallel over particles when
/// the `parallel` feature is on).
pub fn simulate(params: &KineticsParams, seed: u64) -> Result<KineticsRun> {
    simulate_impl(params, seed, true)
}

/// Single-threaded twin of [`simulate`]; output is bit-identical.
pub fn simulate_seq(params: &KineticsParams, seed: u64) -> Result<KineticsRun> {
    simulate_impl(params, seed, false)
}

fn simulate_impl(params: &KineticsParams, seed: u64, parallel: bool) -> Result<KineticsRun> {
    let n_steps = checked(params)?;
    if (n_steps + 1) * params.n_particles > 200_000_000 {
        return Err(Error::Degenerate(format!(
            "{} particles x {} steps is too large to materialize; use the streaming \
             beam-weight path",
            params.n_particles, n_steps
        )));
    }
    let draw = StepDraw::new(params);
    let job = |p: usize| -> Result<Vec<[f64; 2]>> {
        let mut traj = Vec::with_capacity(n_steps + 1);
        walk_particle(params, &draw, n_steps, p, seed, |_, pos| traj.push(pos))?;
        Ok(traj)
    };
    let results = if parallel {
        exec::map_indexed(params.n_particles, job)
    } else {
        exec::map_indexed_seq(params.n_particles, job)
    };
    let positions = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(KineticsRun {
        dt_step: params.dt_step,
        droplet_radius: params.droplet_radius,
        positions,
    })
}

/// Radial displacements over `lag_steps`, sampled at non-overlapping starts.
pub fn displacements(run: &KineticsRun, lag_steps: usize) -> Result<Vec<f64>> {
    let n = run.n_steps();
    if lag_steps == 0 || lag_steps >= n {
        return Err(Error::Degenerate(format!(
            "lag of {lag_steps} steps needs a run longer than that (have {n})"
        )));
    }
    let mut out = Vec::new();
    for traj in &run.positions {
        let mut start = 0;
        while start + lag_steps < traj.len() {
            let a = traj[start];
            let b = traj[start + lag_steps];
            out.push(((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt());
            start += lag_steps;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// `counts.len() + 1` bin edges, uniform from 0 to the max displacement.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Histogram of radial displacements at one lag.
pub fn displacement_histogram(
    run: &KineticsRun,
    lag_steps: usize,
    n_bins: usize,
) -> Result<Histogram> {
    if n_bins == 0 {
        return Err(Error::Degenerate("histogram needs at least one bin".into()));
    }
    let d = displacements(run, lag_steps)?;
    let max = d.iter().cloned().fold(0.0f64, f64::max).max(1e-300);
    let width = max / n_bins as f64;
    let mut counts = vec![0u64; n_bins];
    for &x in &d {
        let b = ((x / width) as usize).min(n_bins - 1);
        counts[b] += 1;
    }
    Ok(Histogram {
        edges: (0..=n_bins).map(|i| i as f64 * width).collect(),
        counts,
    })
}

/// Time- and ensemble-averaged mean square displacement for lags
/// `1..=max_lag_steps`, as `(lag seconds, msd um^2)` pairs.
pub fn mean_square_displacement(
    run: &KineticsRun,
    max_lag_steps: usize,
) -> Result<Vec<(f64, f64)>> {
    let n = run.n_steps();
    if max_lag_steps == 0 || max_lag_steps >= n {
        return Err(Error::Degenerate(format!(
            "max lag of {max_lag_steps} steps needs a run longer than that (have {n})"
        )));
    }
    let mut out = Vec::with_capacity(max_lag_steps);
    for lag in 1..=max_lag_steps {
        let mut acc = 0.0;
        let mut count = 0u64;
        for traj in &run.positions {
            // Subsample starts so long runs stay cheap; lag-1 spacing keeps
            // plenty of pairs.
            let stride = (traj.len() / 4096).max(1);
            let mut start = 0;
            while start + lag < traj.len() {
                let a = traj[start];
                let b = traj[start + lag];
                acc += (b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2);
                count += 1;
                start += stride;
            }
        }
        out.push((lag as f64 * run.dt_step, acc / count as f64));
    }
    Ok(out)
}

fn check_beam(beam_waist: f64, droplet_radius: f64) -> Result<()> {
    if !(beam_waist.is_finite() && beam_waist > 0.0) {
        return Err(Error::Degenerate(format!(
            "beam waist must be positive (got {beam_waist})"
        )));
    }
    if beam_waist > droplet_radius {
        return Err(Error::Degenerate(format!(
            "beam waist {beam_waist} um exceeds the droplet radius {droplet_radius} um"
        )));
    }
    Ok(())
}

/// Beam-overlap weight of a materialized run at the native step rate: the
/// per-step ensemble mean of `exp(-rho^2 / (2 waist^2))`, normalized to
/// unit mean over the trace.
pub fn beam_weights(run: &KineticsRun, beam_waist: f64) -> Result<TimeSeries> {
    check_beam(beam_waist, run.droplet_radius)?;
    let n = run.n_steps();
    if n == 0 || run.positions.is_empty() {
        return Err(Error::Degenerate("empty kinetics run".into()));
    }
    let inv = 1.0 / (2.0 * beam_waist * beam_waist);
    // Sum in the same BATCH grouping as the streaming path so the two are
    // bit-identical (float addition is order-sensitive).
    let mut acc = vec![0.0f64; n];
    for group in run.positions.chunks(BATCH) {
        let mut partial = vec![0.0f64; n];
        for traj in group {
            for (s, pos) in partial.iter_mut().zip(traj) {
                *s += (-(pos[0] * pos[0] + pos[1] * pos[1]) * inv).exp();
            }
        }
        for (a, p) in acc.iter_mut().zip(&partial) {
            *a += p;
        }
    }
    normalize_unit_mean(&mut acc)?;
    Ok(TimeSeries::new(0.0, run.dt_step, acc))
}

/// [`beam_weights`] resampled to `sample_rate` by linear interpolation and
/// re-normalized to unit mean, ready to feed a PL trace of the same rate.
pub fn fluorescence_trace(
    run: &KineticsRun,
    beam_waist: f64,
    sample_rate: f64,
) -> Result<TimeSeries> {
    if !(sample_rate.is_finite() && sample_rate > 0.0) {
        return Err(Error::Degenerate(format!(
            "sample rate must be positive (got {sample_rate})"
        )));
    }
    let native = beam_weights(run, beam_waist)?;
    let duration = (native.len() - 1) as f64 * run.dt_step;
    let n_out = ((duration * sample_rate).round() as usize).max(1);
    let dt_out = 1.0 / sample_rate;
    let last = native.len() - 1;
    let mut samples = Vec::with_capacity(n_out);
    for k in 0..n_out {
        let x = k as f64 * dt_out / run.dt_step;
        let j = (x as usize).min(last.saturating_sub(1));
        let frac = (x - j as f64).clamp(0.0, 1.0);
        let v = if last == 0 {
            native.samples[0]
        } else {
            native.samples[j] + frac * (native.samples[j + 1] - native.samples[j])
        };
        samples.push(v);
    }
    normalize_unit_mean(&mut samples)?;
    Ok(TimeSeries::new(0.0, dt_out, samples))
}

/// Streaming beam-overlap weight: identical output to
/// `fluorescence_trace(&simulate(params, seed)?, beam_waist)` without ever
/// materializing trajectories. Memory is one partial trace per in-flight
/// batch of [`BATCH`] particles.
pub fn beam_weight_trace(
    params: &KineticsParams,
    beam_waist: f64,
    seed: u64,
    parallel: bool,
) -> Result<TimeSeries> {
    check_beam(beam_waist, params.droplet_radius)?;
    let n_steps = checked(params)?;
    let len = n_steps + 1;
    let draw = StepDraw::new(params);
    let inv = 1.0 / (2.0 * beam_waist * beam_waist);
    let n_batches = params.n_particles.div_ceil(BATCH);
    let job = |batch: usize| -> Result<Vec<f64>> {
        let lo = batch * BATCH;
        let hi = ((batch + 1) * BATCH).min(params.n_particles);
        let mut acc = vec![0.0f64; len];
        for p in lo..hi {
            walk_particle(params, &draw, n_steps, p, seed, |n, pos| {
                acc[n] += (-(pos[0] * pos[0] + pos[1] * pos[1]) * inv).exp();
            })?;
        }
        Ok(acc)
    };
    let partials = if parallel {
        exec::map_indexed(n_batches, job)
    } else {
        exec::map_indexed_seq(n_batches, job)
    };
    let mut total = vec![0.0f64; len];
    for partial in partials {
        let partial = partial?;
        for (t, p) in total.iter_mut().zip(&partial) {
            *t += p;
        }
    }
    normalize_unit_mean(&mut total)?;
    Ok(TimeSeries::new(0.0, params.dt_step, total))
}

fn normalize_unit_mean(samples: &mut [f64]) -> Result<()> {
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    if !(mean.is_finite() && mean > 0.0) {
        return Err(Error::Degenerate(format!(
            "beam-overlap trace has non-positive mean {mean}"
        )));
    }
    for s in samples.iter_mut() {
        *s /= mean;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_params() -> KineticsParams {
        KineticsParams {
            diffusion_coeff: 4.0,
            droplet_radius: 10.0,
            n_particles: 16,
            dt_step: 1e-3,
            duration: 0.5,
            heavy_tail_alpha: None,
        }
    }

    #[test]
    fn every_position_stays_inside_the_droplet() {
        let run = simulate(&small_params(), 11).unwrap();
        for traj in &run.positions {
            for p in traj {
                let rho = (p[0] * p[0] + p[1] * p[1]).sqrt();
                assert!(rho <= 10.0 + 1e-12, "escaped to rho = {rho}");
            }
        }
    }

    #[test]
    fn heavy_tail_walk_stays_inside_too() {
        let mut params = small_params();
        params.heavy_tail_alpha = Some(1.5);
        let run = simulate(&params, 5).unwrap();
        for traj in &run.positions {
            for p in traj {
                assert!((p[0] * p[0] + p[1] * p[1]).sqrt() <= 10.0 + 1e-12);
            }
        }
    }

    #[test]
    fn parallel_and_sequential_runs_are_identical() {
        let params = small_params();
        let a = simulate(&params, 3).unwrap();
        let b = simulate_seq(&params, 3).unwrap();
        assert_eq!(a, b);
        let wa = beam_weight_trace(&params, 8.0, 3, true).unwrap();
        let wb = beam_weight_trace(&params, 8.0, 3, false).unwrap();
        assert_eq!(wa, wb);
    }

    #[test]
    fn streaming_weight_matches_materialized_weight() {
        let params = small_params();
        let run = simulate(&params, 21).unwrap();
        let from_run = beam_weights(&run, 6.0).unwrap();
        let streamed = beam_weight_trace(&params, 6.0, 21, true).unwrap();
        assert_eq!(from_run, streamed);
    }

    #[test]
    fn resampled_trace_keeps_unit_mean_and_covers_duration() {
        let params = small_params();
        let run = simulate(&params, 4).unwrap();
        let native = beam_weights(&run, 6.0).unwrap();
        // Native-rate request lands on the grid points themselves, so the
        // output is the native trace up to the re-normalization constant.
        let same_rate = fluorescence_trace(&run, 6.0, 1.0 / params.dt_step).unwrap();
        let ratio = same_rate.samples[0] / native.samples[0];
        for (a, b) in same_rate.samples.iter().zip(&native.samples) {
            assert!((a / b - ratio).abs() < 1e-12 * ratio.abs());
        }
        let up = fluorescence_trace(&run, 6.0, 3.7 / params.dt_step).unwrap();
        assert!((up.mean() - 1.0).abs() < 1e-12);
        assert!((up.duration() - native.duration()).abs() < 2.0 * params.dt_step);
        // Beam wider than the droplet is rejected.
        assert!(fluorescence_trace(&run, 1e4, 100.0).is_err());
    }

    #[test]
    fn coarse_time_step_is_rejected_with_gaussian_steps() {
        let mut params = small_params();
        params.diffusion_coeff = 1e5; // rms step ~14 um on a 10 um droplet
        assert!(matches!(
            simulate(&params, 1),
            Err(Error::TimeStepTooCoarse { .. })
        ));
    }

    #[test]
    fn unconfined_msd_grows_like_4dt() {
        let params = KineticsParams {
            diffusion_coeff: 4.0,
            droplet_radius: 1_000.0, // effectively free over these lags
            n_particles: 64,
            dt_step: 1e-3,
            duration: 2.0,
            heavy_tail_alpha: None,
        };
        let run = simulate(&params, 9).unwrap();
        let msd = mean_square_displacement(&run, 40).unwrap();
        // Least squares through the origin against lag time.
        let num: f64 = msd.iter().map(|(t, m)| t * m).sum();
        let den: f64 = msd.iter().map(|(t, _)| t * t).sum();
        let slope = num / den;
        assert!(
            (slope - 16.0).abs() < 1.6,
            "msd slope {slope}, expected 4D = 16"
        );
    }

    #[test]
    fn histogram_covers_all_displacements() {
        let run = simulate(&small_params(), 2).unwrap();
        let d = displacements(&run, 10).unwrap();
        let h = displacement_histogram(&run, 10, 24).unwrap();
        assert_eq!(h.total() as usize, d.len());
        assert_eq!(h.edges.len(), 25);
        assert!(h.edges.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn heavy_tail_steps_have_heavier_tails() {
        let mut rng = crate::rng::substream(5, 77);
        let n = 20_000;
        let stable: Vec<f64> = (0..n).map(|_| stable_draw(1.5, &mut rng).abs()).collect();
        let gauss: Vec<f64> = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (z * 2.0f64.sqrt()).abs()
            })
            .collect();
        let frac_beyond = |xs: &[f64], cut: f64| {
            xs.iter().filter(|x| **x > cut).count() as f64 / xs.len() as f64
        };
        // Same diffusive core scale, far more mass beyond 5 sigma-equivalents.
        assert!(frac_beyond(&stable, 7.0) > 5.0 * frac_beyond(&gauss, 7.0).max(1e-4));
    }
}
