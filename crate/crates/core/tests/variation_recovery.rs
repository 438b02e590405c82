//! Parameter recovery for the narrowband variation bound. The droplet line
//! carries the per-droplet loading factor, so its amplitude spread over long
//! bins, extrapolated back to the single-droplet dwell 1/f_D, must meet the
//! injected loading sigma: each 7 s bin averages bin*f_D droplets, and the
//! sqrt extrapolation undoes exactly that averaging.

use droplock_core::dsp::{Band, Taper};
use droplock_core::{dsp, reference, stability, synth};

fn recovered(sigma_pd: f64, seed: u64) -> f64 {
    let mut cfg = reference::reference_config();
    cfg.acquisition.duration = 700.0; // 100 bins of 7 s
    cfg.acquisition.rng_seed = seed;
    cfg.droplet.per_droplet_sigma = sigma_pd;
    cfg.droplet.rate_jitter_sigma = 0.0;
    cfg.noise = Default::default();
    cfg.brownian = None;
    let run = synth::synthesize(&cfg).unwrap();
    // Sub-bin band around the jitter-free line: only the coherent droplet
    // bin enters, so the amplitude is exactly g0 times the bin-mean loading.
    // A wider band would add the loading noise spread over neighboring bins
    // and read ~sqrt(2) high.
    let band = Band::new(cfg.droplet.f_d, 0.06);
    let gram =
        dsp::compute_spectrogram(&run.trace, 7.0, band.lo(), band.hi(), Taper::Rect).unwrap();
    assert_eq!(gram.freqs.len(), 1, "band must cover exactly the line bin");
    let bound =
        stability::nd_variation_bound(&gram, band, 7.0, 1.0 / cfg.droplet.f_d).unwrap();
    bound.extrapolated_sigma
}

#[test]
fn loading_spread_recovered_at_the_droplet_dwell() {
    for (sigma, seed) in [(0.01, 3u64), (0.0023, 4)] {
        let got = recovered(sigma, seed);
        assert!(
            (got / sigma - 1.0).abs() < 0.2,
            "sigma {sigma}: recovered {got}"
        );
    }
}

#[test]
fn uniform_loading_has_no_spread() {
    let got = recovered(0.0, 5);
    assert!(got <= 1e-6, "clean train shows spread {got}");
}
