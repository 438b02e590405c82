//! Spectral oracle for the clean signal model: line amplitudes measured with
//! a from-scratch quadrature correlation (no FFT machinery involved), and
//! the contrast estimators re-assembled from those raw amplitudes.
//!
//! Expanding the product model with unit-fundamental cosine waveforms:
//!   pl = [m0 + g0 cos th_D][1 - C cos th_MW]
//!      = m0 + g0 cos th_D - C m0 cos th_MW - (C g0 / 2)[cos(th_MW - th_D) + cos(th_MW + th_D)]
//! so the four lines carry g0, C m0, and C g0 / 2 each.

use droplock_core::series::EstimatorId;
use droplock_core::{duallock, reference, synth};

/// Amplitude of the cosine component at `f`, exact over integer cycles.
fn correlation_amplitude(samples: &[f64], dt: f64, f: f64) -> f64 {
    let mut c = 0.0;
    let mut s = 0.0;
    for (k, &x) in samples.iter().enumerate() {
        let th = std::f64::consts::TAU * f * (k as f64 * dt);
        c += x * th.cos();
        s += x * th.sin();
    }
    let n = samples.len() as f64;
    2.0 * (c * c + s * s).sqrt() / n
}

#[test]
fn clean_lines_match_the_trig_expansion() {
    let cfg = reference::clean_line_config();
    let run = synth::synthesize(&cfg).unwrap();
    let x = &run.trace.samples;
    let dt = run.trace.dt;
    let (g0, m0, c) = (cfg.droplet.g0, cfg.droplet.m0, cfg.mw.contrast);
    let (f_d, f_mw) = (cfg.droplet.f_d, cfg.mw.f_mw);
    let rel = |got: f64, want: f64| (got - want).abs() / want;

    assert!(rel(correlation_amplitude(x, dt, f_d), g0) < 1e-9);
    assert!(rel(correlation_amplitude(x, dt, f_mw), c * m0) < 1e-9);
    assert!(rel(correlation_amplitude(x, dt, f_mw - f_d), c * g0 / 2.0) < 1e-9);
    assert!(rel(correlation_amplitude(x, dt, f_mw + f_d), c * g0 / 2.0) < 1e-9);
    // Nothing else in the neighborhood: the model is exactly four lines.
    assert!(correlation_amplitude(x, dt, f_mw - 2.0 * f_d) < 1e-9);
    assert!(correlation_amplitude(x, dt, 2.0 * f_d) < 1e-9);
}

#[test]
fn estimators_agree_with_amplitudes_assembled_by_hand() {
    let cfg = reference::clean_line_config();
    let run = synth::synthesize(&cfg).unwrap();
    let x = &run.trace.samples;
    let dt = run.trace.dt;
    let (f_d, f_mw) = (cfg.droplet.f_d, cfg.mw.f_mw);

    let a_d = correlation_amplitude(x, dt, f_d);
    let a_mw = correlation_amplitude(x, dt, f_mw);
    let a_lo = correlation_amplitude(x, dt, f_mw - f_d);
    let a_up = correlation_amplitude(x, dt, f_mw + f_d);
    let mean = x.iter().sum::<f64>() / x.len() as f64;

    let mut est = reference::dual_estimator();
    est.delta_t = 1.0;
    let rel = |got: f64, want: f64| (got - want).abs() / want.abs();
    for id in [
        EstimatorId::PaperMain,
        EstimatorId::SiVariant,
        EstimatorId::ExactRecovery,
    ] {
        est.estimator_id = id;
        let series =
            duallock::estimate_contrast(&run.trace, f_d, f_mw, &est).unwrap();
        let by_hand = match id {
            EstimatorId::PaperMain => (a_mw + a_up + a_lo) / (a_d * f_d),
            EstimatorId::SiVariant => (a_up + a_lo) / (2.0 * a_d),
            EstimatorId::ExactRecovery => (a_mw + a_up + a_lo) / (mean + a_d),
            EstimatorId::Conventional => unreachable!(),
        };
        assert!(
            rel(series.mean, by_hand) < 1e-9,
            "{id:?}: pipeline {} vs hand {}",
            series.mean,
            by_hand
        );
    }
}
