//! Whole-pipeline sign-off. Nine checks run in a fixed order, each printing
//! one verdict line; the process exits nonzero if any fail. Tolerances are
//! pinned here, against the frozen reference configuration in
//! `droplock_core::reference`, and are not adjusted per run.
//!
//! Several checks share expensive syntheses (the 600 s precision run, the
//! 1 h stability run), which is why this target owns its `main` instead of
//! using the default test harness: order and reuse are part of the design.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use droplock_core::config::KineticsParams;
use droplock_core::dsp::Taper;
use droplock_core::series::{EstimatorId, TimeSeries};
use droplock_core::stability::{allan_deviation, default_taus, InvalidPolicy};
use droplock_core::titration::{RelaxometryModel, TitrationSetup};
use droplock_core::{brownian, duallock, formats, lockin, reference, stability, synth, titration};

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn scaled(ts: &TimeSeries, alpha: f64) -> TimeSeries {
    TimeSeries::new(ts.t_start, ts.dt, ts.samples.iter().map(|v| alpha * v).collect())
}

/// Exact line recovery on a noiseless unit-amplitude synthesis: every
/// estimator must hit its closed-form value, fast.
fn exact_recovery() -> Result<String, String> {
    let cfg = reference::clean_line_config();
    let t0 = Instant::now();
    let run = synth::synthesize(&cfg).map_err(|e| e.to_string())?;
    let mut est = reference::dual_estimator();
    est.delta_t = 1.0;
    let c = cfg.mw.contrast;
    let (m0, g0, f_d) = (cfg.droplet.m0, cfg.droplet.g0, cfg.droplet.f_d);
    let mut worst = 0.0f64;
    for (id, expected) in [
        (EstimatorId::ExactRecovery, c),
        (EstimatorId::SiVariant, c / 2.0),
        (EstimatorId::PaperMain, c * (m0 + g0) / (g0 * f_d)),
    ] {
        est.estimator_id = id;
        let series = duallock::estimate_contrast(&run.trace, f_d, cfg.mw.f_mw, &est)
            .map_err(|e| e.to_string())?;
        let err = rel(series.mean, expected);
        ensure!(err < 1e-6, "{id:?} mean {} vs {expected}: rel {err:.2e}", series.mean);
        worst = worst.max(err);
    }
    let elapsed = t0.elapsed().as_secs_f64();
    ensure!(elapsed < 5.0, "took {elapsed:.1} s, budget 5 s");
    Ok(format!(
        "worst identity error {worst:.1e} rel; 15 s trace done in {elapsed:.2} s"
    ))
}

/// Detector gain cancels: scaling the raw trace by alpha must leave every
/// valid contrast window unchanged, for the spectral estimators and the
/// conventional ratiometric arm alike.
fn scale_invariance() -> Result<String, String> {
    let mut cfg = reference::reference_config();
    cfg.acquisition.duration = 30.0;
    let trace = synth::synthesize(&cfg).map_err(|e| e.to_string())?.trace;
    let mut worst = 0.0f64;
    let mut compare = |base: &droplock_core::series::ContrastSeries,
                       other: &droplock_core::series::ContrastSeries,
                       label: &str|
     -> Result<(), String> {
        ensure!(base.valid == other.valid, "{label}: valid masks differ");
        for (k, (a, b)) in base.values.iter().zip(&other.values).enumerate() {
            if !base.valid[k] {
                continue;
            }
            let err = rel(*b, *a);
            ensure!(err <= 1e-12, "{label} window {k}: {a} vs {b}, rel {err:.2e}");
            worst = worst.max(err);
        }
        Ok(())
    };
    for alpha in [0.1, 1.0, 3.7, 10.0] {
        let ts = scaled(&trace, alpha);
        let mut est = reference::dual_estimator();
        for id in [EstimatorId::PaperMain, EstimatorId::SiVariant, EstimatorId::ExactRecovery] {
            est.estimator_id = id;
            let base = duallock::estimate_contrast(&trace, cfg.droplet.f_d, cfg.mw.f_mw, &est)
                .map_err(|e| e.to_string())?;
            let got = duallock::estimate_contrast(&ts, cfg.droplet.f_d, cfg.mw.f_mw, &est)
                .map_err(|e| e.to_string())?;
            compare(&base, &got, &format!("{id:?} alpha={alpha}"))?;
        }
        let demod = reference::conventional_demod();
        let base = lockin::ratiometric_contrast(&trace, &demod, reference::CONVENTIONAL_PL_TAU)
            .map_err(|e| e.to_string())?;
        let got = lockin::ratiometric_contrast(&ts, &demod, reference::CONVENTIONAL_PL_TAU)
            .map_err(|e| e.to_string())?;
        compare(&base, &got, &format!("conventional alpha={alpha}"))?;
    }
    Ok(format!(
        "4 gains x 4 estimators window-identical, worst rel {worst:.1e}"
    ))
}

/// Precision on the frozen noise budget: conventional near 13% per sample,
/// dual near 2% per window, at least 3x apart.
fn noise_suppression(trace: &TimeSeries, synth_s: f64) -> Result<String, String> {
    let cfg = reference::reference_config();
    let t0 = Instant::now();
    let conv = lockin::ratiometric_contrast(
        trace,
        &reference::conventional_demod(),
        reference::CONVENTIONAL_PL_TAU,
    )
    .map_err(|e| e.to_string())?;
    let dual = duallock::estimate_contrast(
        trace,
        cfg.droplet.f_d,
        cfg.mw.f_mw,
        &reference::dual_estimator(),
    )
    .map_err(|e| e.to_string())?;
    let elapsed = synth_s + t0.elapsed().as_secs_f64();
    let improvement = conv.percent_error / dual.percent_error;
    ensure!(
        (conv.percent_error - 13.0).abs() <= 4.0,
        "conventional spread {:.2}%, want 13 +- 4",
        conv.percent_error
    );
    ensure!(
        (dual.percent_error - 2.0).abs() <= 1.0,
        "dual spread {:.2}%, want 2 +- 1",
        dual.percent_error
    );
    ensure!(improvement >= 3.0, "improvement {improvement:.1}x, want >= 3x");
    ensure!(elapsed < 120.0, "took {elapsed:.0} s, budget 120 s");
    Ok(format!(
        "conventional {:.1}%, dual {:.2}%, improvement {improvement:.1}x, {elapsed:.0} s",
        conv.percent_error, dual.percent_error
    ))
}

/// Averaging behavior over an hour: dual integrates down as white noise from
/// 1 s to 1000 s; the conventional arm leaves the -1/2 law above ~30 s.
fn allan_scaling() -> Result<String, String> {
    let mut cfg = reference::reference_config();
    cfg.acquisition.duration = 3_600.0;
    let t0 = Instant::now();
    let trace = synth::synthesize(&cfg).map_err(|e| e.to_string())?.trace;
    let dual = duallock::estimate_contrast(
        &trace,
        cfg.droplet.f_d,
        cfg.mw.f_mw,
        &reference::allan_estimator(),
    )
    .map_err(|e| e.to_string())?;
    let conv = lockin::ratiometric_contrast(
        &trace,
        &reference::conventional_demod(),
        reference::CONVENTIONAL_PL_TAU,
    )
    .map_err(|e| e.to_string())?;
    drop(trace);

    let mut taus = default_taus(1.0, 1_200.0);
    taus.extend([300.0, 1_000.0]);
    taus.sort_by(f64::total_cmp);
    taus.dedup();
    // The dual series has no invalid windows; the conventional one loses a
    // settling prefix, bridged by interpolation.
    let da = allan_deviation(&dual, &taus, InvalidPolicy::Reject).map_err(|e| e.to_string())?;
    let ca =
        allan_deviation(&conv, &taus, InvalidPolicy::Interpolate).map_err(|e| e.to_string())?;

    let span = cfg.acquisition.duration;
    let in_decade: Vec<usize> = (0..da.taus.len()).filter(|&i| da.taus[i] <= 1_000.0).collect();
    let dt: Vec<f64> = in_decade.iter().map(|&i| da.taus[i]).collect();
    let ds: Vec<f64> = in_decade.iter().map(|&i| da.sigmas[i]).collect();
    let dual_slope = stability::loglog_slope(&dt, &ds, span).map_err(|e| e.to_string())?;
    ensure!(
        (dual_slope + 0.50).abs() <= 0.05,
        "dual slope {dual_slope:.3}, want -0.50 +- 0.05"
    );

    let s1 = da.sigma_near(1.0).ok_or("no tau = 1 s point")?;
    let s1000 = da.sigma_near(1_000.0).ok_or("no tau = 1000 s point")?;
    let reduction = s1 / s1000;
    ensure!(reduction >= 30.0, "sigma(1)/sigma(1000) = {reduction:.1}, want >= 30");

    let hi: Vec<usize> = (0..ca.taus.len()).filter(|&i| ca.taus[i] >= 32.0).collect();
    let ct: Vec<f64> = hi.iter().map(|&i| ca.taus[i]).collect();
    let cs: Vec<f64> = hi.iter().map(|&i| ca.sigmas[i]).collect();
    let conv_slope = stability::loglog_slope(&ct, &cs, span).map_err(|e| e.to_string())?;
    ensure!(
        conv_slope > -0.30,
        "conventional slope above 32 s is {conv_slope:.3}, still near -1/2"
    );

    let ratio = (ca.sigma_near(300.0).ok_or("no conventional 300 s point")? / conv.mean.abs())
        / (da.sigma_near(300.0).ok_or("no dual 300 s point")? / dual.mean.abs());
    ensure!(ratio >= 3.0, "conventional/dual at 300 s = {ratio:.1}, want >= 3");

    let elapsed = t0.elapsed().as_secs_f64();
    ensure!(elapsed < 600.0, "took {elapsed:.0} s, budget 600 s");
    Ok(format!(
        "dual slope {dual_slope:.3}, reduction {reduction:.0}x, conventional slope {conv_slope:+.2} above 32 s, ratio at 300 s {ratio:.0}x, {elapsed:.0} s"
    ))
}

/// The narrowband variation bound read off the MW line at 7 s bins,
/// extrapolated to 1000 s, lands on the injected per-droplet loading spread.
fn variation_bound(trace: &TimeSeries) -> Result<String, String> {
    let band = reference::variation_band();
    let gram =
        droplock_core::dsp::compute_spectrogram(trace, reference::VARIATION_BIN, band.lo(), band.hi(), Taper::Hann)
            .map_err(|e| e.to_string())?;
    let bound =
        stability::nd_variation_bound(&gram, band, reference::VARIATION_BIN, reference::VARIATION_TAU)
            .map_err(|e| e.to_string())?;
    let target = reference::PER_DROPLET_SIGMA;
    let err = rel(bound.extrapolated_sigma, target);
    ensure!(
        err <= 0.20,
        "extrapolated spread {:.2e} vs {target:.1e}: off by {:.0}%",
        bound.extrapolated_sigma,
        100.0 * err
    );
    Ok(format!(
        "{} bins of {:.0} s: spread {:.4} -> {:.5} at {:.0} s, {:.0}% from {target}",
        bound.n_bins,
        bound.bin_duration,
        bound.sigma_at_bin,
        bound.extrapolated_sigma,
        bound.extrapolation_tau,
        100.0 * err
    ))
}

/// Detection figures: Gd LOD within a factor of two of 100 nM at two-minute
/// points, and the two TEMPOL concentrations cleanly separated at one-minute
/// points.
fn titration_lod() -> Result<String, String> {
    let mut setup = TitrationSetup::new(
        RelaxometryModel::gd(),
        vec![0.0, 1e-7, 1.5e-7, 3e-7, 5e-7, 1e-6, 5e-6, 2e-5],
    );
    setup.base = reference::reference_config();
    setup.estimator = reference::titration_estimator();
    setup.point_duration = 120.0;
    setup.settle_gap = 5.0;
    let curve = titration::run_titration(&setup).map_err(|e| e.to_string())?;
    let lod = curve.lod.ok_or("no blank point, no detection limit")?;
    ensure!(
        (5e-8..=2e-7).contains(&lod),
        "Gd detection limit {lod:.2e} M outside [5e-8, 2e-7]"
    );

    let mut setup = TitrationSetup::new(RelaxometryModel::tempol(), vec![0.0, 5e-7, 5e-6]);
    setup.base = reference::reference_config();
    setup.estimator = reference::titration_estimator();
    setup.point_duration = 60.0;
    setup.settle_gap = 5.0;
    let curve = titration::run_titration(&setup).map_err(|e| e.to_string())?;
    let (a, b) = (&curve.points[1], &curve.points[2]);
    let separation = (a.mean_contrast - b.mean_contrast).abs()
        / (a.std_err * a.std_err + b.std_err * b.std_err).sqrt();
    ensure!(
        separation >= 3.0,
        "TEMPOL 0.5 uM vs 5 uM separated by only {separation:.1} sigma"
    );
    Ok(format!(
        "Gd detection limit {:.0} nM, TEMPOL separation {separation:.0} sigma",
        lod * 1e9
    ))
}

/// Ensemble kinetics against closed forms: MSD slope, Rayleigh displacement
/// law, and the long-run traversal tail.
fn brownian_statistics() -> Result<String, String> {
    let wide = |n: usize, duration: f64| KineticsParams {
        diffusion_coeff: 4.0,
        droplet_radius: 50.0,
        n_particles: n,
        dt_step: 1e-3,
        duration,
        heavy_tail_alpha: None,
    };

    let p = wide(10_000, 1.0);
    let run = brownian::simulate(&p, 5).map_err(|e| e.to_string())?;
    let msd = brownian::mean_square_displacement(&run, 20).map_err(|e| e.to_string())?;
    let num: f64 = msd.iter().map(|(t, m)| t * m).sum();
    let den: f64 = msd.iter().map(|(t, _)| t * t).sum();
    let slope = num / den;
    let msd_err = rel(slope, 4.0 * p.diffusion_coeff);
    ensure!(msd_err < 0.05, "MSD slope {slope:.2} vs 16: off {:.1}%", 100.0 * msd_err);

    let p = wide(500, 10.0);
    let run = brownian::simulate(&p, 7).map_err(|e| e.to_string())?;
    let lag = 50usize;
    let mut ds: Vec<f64> = Vec::with_capacity(100_000);
    for traj in &run.positions {
        let mut k = 0;
        while k + lag < traj.len() {
            let dx = traj[k + lag][0] - traj[k][0];
            let dy = traj[k + lag][1] - traj[k][1];
            ds.push((dx * dx + dy * dy).sqrt());
            k += lag;
        }
    }
    ensure!(ds.len() >= 100_000, "only {} displacement samples", ds.len());
    ds.sort_by(f64::total_cmp);
    let s2 = 2.0 * p.diffusion_coeff * lag as f64 * p.dt_step;
    let n = ds.len() as f64;
    let mut ks = 0.0f64;
    for (i, &d) in ds.iter().enumerate() {
        let cdf = 1.0 - (-d * d / (2.0 * s2)).exp();
        ks = ks.max(((i + 1) as f64 / n - cdf).max(cdf - i as f64 / n));
    }
    ensure!(ks < 0.02, "Rayleigh KS statistic {ks:.3}");

    let run = brownian::simulate(&wide(200, 30.0), 9).map_err(|e| e.to_string())?;
    let crossed = run
        .positions
        .iter()
        .filter(|traj| {
            let a = traj[0];
            traj.iter().any(|q| {
                let (dx, dy) = (q[0] - a[0], q[1] - a[1]);
                dx * dx + dy * dy > 25.0
            })
        })
        .count();
    ensure!(
        crossed * 2 > run.positions.len(),
        "only {crossed} of {} trajectories passed 5 um",
        run.positions.len()
    );
    Ok(format!(
        "MSD slope off {:.1}%, Rayleigh KS {ks:.3}, {crossed}/200 walks passed 5 um in 30 s",
        100.0 * msd_err
    ))
}

fn ulp_gap(a: f64, b: f64) -> u64 {
    if a == b {
        return 0;
    }
    if a.is_sign_positive() != b.is_sign_positive() {
        return u64::MAX;
    }
    a.to_bits().abs_diff(b.to_bits())
}

/// Same configuration and seed give the same bytes on disk, and the text
/// format carries samples without loss.
fn determinism_and_formats() -> Result<String, String> {
    let mut cfg = reference::reference_config();
    cfg.acquisition.duration = 10.0;
    let first = synth::synthesize(&cfg).map_err(|e| e.to_string())?.trace;
    let second = synth::synthesize(&cfg).map_err(|e| e.to_string())?.trace;

    let dir = std::env::temp_dir().join(format!("droplock-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let result = (|| -> Result<String, String> {
        let a = dir.join("a.dlk");
        let b = dir.join("b.dlk");
        formats::write_trace(&a, &first).map_err(|e| e.to_string())?;
        formats::write_trace(&b, &second).map_err(|e| e.to_string())?;
        let bytes_a = std::fs::read(&a).map_err(|e| e.to_string())?;
        let bytes_b = std::fs::read(&b).map_err(|e| e.to_string())?;
        ensure!(bytes_a == bytes_b, "same config and seed produced different files");

        let back = formats::read_trace(&a).map_err(|e| e.to_string())?;
        ensure!(back.samples == first.samples, "binary read-back changed samples");

        let c = dir.join("a.csv");
        formats::write_trace_csv(&c, &back).map_err(|e| e.to_string())?;
        let text = formats::read_trace_csv(&c).map_err(|e| e.to_string())?;
        ensure!(text.samples.len() == first.samples.len(), "CSV changed the sample count");
        let mut worst = 0u64;
        for (x, y) in first.samples.iter().zip(&text.samples) {
            let gap = ulp_gap(*x, *y);
            ensure!(gap <= 1, "CSV round trip moved {x} to {y}");
            worst = worst.max(gap);
        }
        Ok(format!(
            "{} bytes identical across reruns; CSV round trip worst drift {worst} ulp",
            bytes_a.len()
        ))
    })();
    let _ = std::fs::remove_dir_all(&dir);
    result
}

/// A 1000 s trace at 50 kHz synthesized and analyzed inside a minute.
fn throughput() -> Result<String, String> {
    let mut cfg = reference::reference_config();
    cfg.acquisition.duration = 1_000.0;
    let t0 = Instant::now();
    let trace = synth::synthesize(&cfg).map_err(|e| e.to_string())?.trace;
    let synth_s = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let series = duallock::estimate_contrast(
        &trace,
        cfg.droplet.f_d,
        cfg.mw.f_mw,
        &reference::dual_estimator(),
    )
    .map_err(|e| e.to_string())?;
    let est_s = t1.elapsed().as_secs_f64();
    let total = synth_s + est_s;
    ensure!(series.values.iter().all(|v| v.is_finite()), "non-finite contrast windows");
    ensure!(total < 60.0, "took {total:.1} s, budget 60 s");
    Ok(format!(
        "5e7 samples: synthesis {synth_s:.1} s + analysis {est_s:.1} s = {total:.1} s"
    ))
}

fn main() {
    let mut failures = 0u32;
    let mut report = |number: u8, name: &str, outcome: Result<String, String>| {
        let (verdict, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failures += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {number} {verdict}  {name}: {detail}");
    };
    let catching = |f: &mut dyn FnMut() -> Result<String, String>| -> Result<String, String> {
        catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        })
    };

    report(1, "exact line recovery", catching(&mut exact_recovery));
    report(2, "gain invariance", catching(&mut scale_invariance));

    // Criteria 3 and 5 read the same 600 s reference synthesis.
    let mut cfg = reference::reference_config();
    cfg.acquisition.duration = 600.0;
    let t0 = Instant::now();
    let shared = synth::synthesize(&cfg).map(|r| r.trace);
    let synth_s = t0.elapsed().as_secs_f64();
    match shared {
        Ok(trace) => {
            report(3, "noise suppression", catching(&mut || noise_suppression(&trace, synth_s)));
            report(4, "averaging behavior", catching(&mut allan_scaling));
            report(5, "loading variation bound", catching(&mut || variation_bound(&trace)));
        }
        Err(e) => {
            let msg = format!("600 s reference synthesis failed: {e}");
            report(3, "noise suppression", Err(msg.clone()));
            report(4, "averaging behavior", catching(&mut allan_scaling));
            report(5, "loading variation bound", Err(msg));
        }
    }

    report(6, "detection limits", catching(&mut titration_lod));
    report(7, "kinetics statistics", catching(&mut brownian_statistics));
    report(8, "determinism and formats", catching(&mut determinism_and_formats));
    report(9, "throughput", catching(&mut throughput));

    if failures > 0 {
        println!("acceptance: {failures} of 9 criteria FAILED");
        std::process::exit(1);
    }
    println!("acceptance: 9/9 criteria passed");
}
