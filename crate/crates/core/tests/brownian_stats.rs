//! Ensemble statistics of the confined walk against closed forms: MSD slope,
//! Rayleigh displacement magnitudes, and long-run traversal distances.

use droplock_core::brownian;
use droplock_core::config::KineticsParams;

fn wide_disc(n_particles: usize, duration: f64) -> KineticsParams {
    KineticsParams {
        diffusion_coeff: 4.0,
        // Wide enough that reflections barely matter on the lags used.
        droplet_radius: 50.0,
        n_particles,
        dt_step: 1e-3,
        duration,
        heavy_tail_alpha: None,
    }
}

#[test]
fn msd_regression_recovers_4d() {
    let p = wide_disc(10_000, 1.0);
    let run = brownian::simulate(&p, 5).unwrap();
    let msd = brownian::mean_square_displacement(&run, 20).unwrap();
    // Least squares through the origin: msd = (4 D) t.
    let num: f64 = msd.iter().map(|(t, m)| t * m).sum();
    let den: f64 = msd.iter().map(|(t, _)| t * t).sum();
    let slope = num / den;
    let want = 4.0 * p.diffusion_coeff;
    assert!(
        (slope / want - 1.0).abs() < 0.05,
        "msd slope {slope}, expected {want}"
    );
}

#[test]
fn displacement_magnitudes_follow_rayleigh() {
    // 500 particles x 200 non-overlapping 50 ms lags = 1e5 samples.
    let p = wide_disc(500, 10.0);
    let run = brownian::simulate(&p, 7).unwrap();
    let lag = 50;
    let mut ds = Vec::with_capacity(100_000);
    for traj in &run.positions {
        let mut k = 0;
        while k + lag < traj.len() {
            let dx = traj[k + lag][0] - traj[k][0];
            let dy = traj[k + lag][1] - traj[k][1];
            ds.push((dx * dx + dy * dy).sqrt());
            k += lag;
        }
    }
    assert!(ds.len() >= 100_000, "only {} samples", ds.len());
    ds.sort_by(f64::total_cmp);
    // Per-axis variance over the lag is 2 D tau; |d| is Rayleigh.
    let s2 = 2.0 * p.diffusion_coeff * lag as f64 * p.dt_step;
    let n = ds.len() as f64;
    let mut ks = 0.0f64;
    for (i, &d) in ds.iter().enumerate() {
        let cdf = 1.0 - (-d * d / (2.0 * s2)).exp();
        ks = ks.max(((i + 1) as f64 / n - cdf).max(cdf - i as f64 / n));
    }
    assert!(ks < 0.02, "KS statistic {ks}");
}

#[test]
fn half_minute_runs_traverse_beyond_five_microns() {
    let p = wide_disc(200, 30.0);
    let run = brownian::simulate(&p, 9).unwrap();
    let crossed = run
        .positions
        .iter()
        .filter(|traj| {
            let a = traj[0];
            traj.iter().any(|q| {
                let dx = q[0] - a[0];
                let dy = q[1] - a[1];
                dx * dx + dy * dy > 25.0
            })
        })
        .count();
    // sigma over 30 s is ~22 um, so nearly every walk clears 5 um.
    assert!(
        crossed * 2 > run.positions.len(),
        "only {crossed} of {} trajectories passed 5 um",
        run.positions.len()
    );
}
