//! Spin-noise titration: sweep quencher concentration, measure ODMR
//! contrast per point, fit the binding curve, and derive a detection limit
//! and sample-cost summary.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::duallock::{estimate_contrast, estimate_contrast_seq, EstimatorConfig};
use crate::error::{Error, Result};
use crate::exec;
use crate::fit::{levenberg_marquardt, FitProblem};
use crate::rng::{stream, substream};
use crate::series::TimeSeries;
use crate::synth::{synthesize, synthesize_seq};

/// Contrast-versus-concentration response of the relaxometer.
///
/// A paramagnetic quencher shortens the spin relaxation time, which eats
/// into the measurable ODMR contrast. The response is a one-site binding
/// curve between the unquenched contrast and a floor:
/// `C(c) = c_floor + (c_zero - c_floor) / (1 + c / k_half)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelaxometryModel {
    /// Contrast at zero quencher.
    pub c_zero: f64,
    /// Contrast the response saturates to at high concentration.
    pub c_floor: f64,
    /// Concentration (molar) at the half-way point.
    pub k_half: f64,
}

impl RelaxometryModel {
    /// Gadolinium-ion defaults.
    pub fn gd() -> Self {
        Self {
            c_zero: 0.056,
            c_floor: 0.028,
            k_half: 2e-6,
        }
    }

    /// TEMPOL radical defaults: same contrast span, weaker coupling.
    pub fn tempol() -> Self {
        Self {
            c_zero: 0.056,
            c_floor: 0.028,
            k_half: 1e-5,
        }
    }

    /// Expected contrast at quencher concentration `conc` (molar).
    pub fn expected_contrast(&self, conc: f64) -> f64 {
        self.c_floor + (self.c_zero - self.c_floor) / (1.0 + conc / self.k_half)
    }
}

impl Default for RelaxometryModel {
    fn default() -> Self {
        Self::gd()
    }
}

/// One measured concentration point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TitrationPoint {
    /// Molar.
    pub concentration: f64,
    pub mean_contrast: f64,
    /// Standard error of the mean over analysis windows.
    pub std_err: f64,
    /// Per-window sample standard deviation (absolute contrast units).
    pub sample_sigma: f64,
    pub n_windows: usize,
}

/// Full titration outcome: measured points, the refit binding curve, and
/// the blank-derived detection limit when a zero-concentration point exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TitrationCurve {
    pub points: Vec<TitrationPoint>,
    pub fitted: RelaxometryModel,
    /// Root-mean-square residual of the fit (contrast units).
    pub fit_rms: f64,
    /// Per-window sigma of the blank point, when one was measured.
    pub blank_sigma: Option<f64>,
    /// Detection limit (molar), when a blank was measured.
    pub lod: Option<f64>,
    /// Statistical convention behind `lod`, recorded so downstream readers
    /// need not guess.
    pub lod_convention: String,
}

/// Protocol description for a simulated titration run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TitrationSetup {
    /// Ground-truth response used to set the synthesized contrast per point.
    pub model: RelaxometryModel,
    /// Molar, in measurement order. Include 0.0 to get a blank and an LOD.
    pub concentrations: Vec<f64>,
    /// Analyzed time per point (s).
    pub point_duration: f64,
    /// Discarded time at the head of each point (s), covering exchange and
    /// settling after a concentration change.
    pub settle_gap: f64,
    /// Instrument template. The per-point runs override its MW contrast,
    /// duration, and seed.
    pub base: SimConfig,
    pub estimator: EstimatorConfig,
}

impl TitrationSetup {
    pub fn new(model: RelaxometryModel, concentrations: Vec<f64>) -> Self {
        Self {
            model,
            concentrations,
            point_duration: 20.0,
            settle_gap: 5.0,
            base: SimConfig::default(),
            estimator: EstimatorConfig::default(),
        }
    }
}

fn tail(ts: &TimeSeries, t_from: f64) -> Result<TimeSeries> {
    let skip = (t_from / ts.dt).round() as usize;
    if skip >= ts.samples.len() {
        return Err(Error::Degenerate(format!(
            "settle gap {t_from} s swallows the whole {} s point",
            ts.duration()
        )));
    }
    Ok(TimeSeries::new(
        ts.t_start + skip as f64 * ts.dt,
        ts.dt,
        ts.samples[skip..].to_vec(),
    ))
}

fn run_impl(setup: &TitrationSetup, parallel: bool) -> Result<TitrationCurve> {
    let n = setup.concentrations.len();
    if n < 3 {
        return Err(Error::Degenerate(format!(
            "{n} concentration points cannot constrain the binding curve"
        )));
    }
    if let Some(&c) = setup.concentrations.iter().find(|&&c| !(c >= 0.0)) {
        return Err(Error::Degenerate(format!(
            "concentration {c} M is not physical"
        )));
    }
    if setup.concentrations.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Degenerate(
            "concentrations must be strictly increasing".into(),
        ));
    }
    if !(setup.point_duration > 0.0 && setup.settle_gap >= 0.0) {
        return Err(Error::Degenerate(
            "point duration must be positive and the settle gap non-negative".into(),
        ));
    }

    // One independent seed per point, derived once so measurement order and
    // execution order cannot change the data.
    let mut seed_rng = substream(setup.base.acquisition.rng_seed, stream::TITRATION);
    let seeds: Vec<u64> = (0..n).map(|_| seed_rng.gen()).collect();

    let job = |i: usize| -> Result<TitrationPoint> {
        let conc = setup.concentrations[i];
        let mut cfg = setup.base.clone();
        cfg.mw.contrast = setup.model.expected_contrast(conc);
        cfg.acquisition.duration = setup.settle_gap + setup.point_duration;
        cfg.acquisition.rng_seed = seeds[i];
        let out = if parallel {
            synthesize(&cfg)?
        } else {
            synthesize_seq(&cfg)?
        };
        let sliced = tail(&out.trace, setup.settle_gap)?;
        let series = if parallel {
            estimate_contrast(&sliced, cfg.droplet.f_d, cfg.mw.f_mw, &setup.estimator)?
        } else {
            estimate_contrast_seq(&sliced, cfg.droplet.f_d, cfg.mw.f_mw, &setup.estimator)?
        };
        Ok(TitrationPoint {
            concentration: conc,
            mean_contrast: series.mean,
            std_err: series.std_err(),
            sample_sigma: series.sample_sigma(),
            n_windows: series.n_valid(),
        })
    };
    let results = if parallel {
        exec::map_indexed(n, job)
    } else {
        exec::map_indexed_seq(n, job)
    };
    let points: Vec<TitrationPoint> = results.into_iter().collect::<Result<_>>()?;

    let (fitted, fit_rms) = fit_binding_curve(&points)?;
    let blank_sigma = points
        .iter()
        .find(|p| p.concentration == 0.0)
        .map(|p| p.sample_sigma);
    let lod = match blank_sigma {
        Some(s) => Some(limit_of_detection(&fitted, s)?),
        None => None,
    };
    Ok(TitrationCurve {
        points,
        fitted,
        fit_rms,
        blank_sigma,
        lod,
        lod_convention: "3-sigma".into(),
    })
}

/// Run the full protocol: synthesize each concentration point, estimate its
/// contrast, fit the binding curve, and derive the detection limit.
pub fn run_titration(setup: &TitrationSetup) -> Result<TitrationCurve> {
    run_impl(setup, true)
}

/// Sequential twin of [`run_titration`]; identical output.
pub fn run_titration_seq(setup: &TitrationSetup) -> Result<TitrationCurve> {
    run_impl(setup, false)
}

/// Weighted fit of the binding curve to measured points. Returns the model
/// and the unweighted RMS residual.
pub fn fit_binding_curve(points: &[TitrationPoint]) -> Result<(RelaxometryModel, f64)> {
    if points.len() < 3 {
        return Err(Error::Degenerate(format!(
            "{} points cannot constrain the binding curve",
            points.len()
        )));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.concentration).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.mean_contrast).collect();
    // Floor keeps near-noiseless points from dominating outright.
    let weights: Vec<f64> = points
        .iter()
        .map(|p| 1.0 / (p.std_err * p.std_err + 1e-18))
        .collect();
    let hi = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = ys.iter().cloned().fold(f64::INFINITY, f64::min);
    let mid = 0.5 * (hi + lo);
    // Initial half-way point: the measured concentration closest to the
    // contrast midpoint, falling back to the median positive concentration.
    let k0 = points
        .iter()
        .filter(|p| p.concentration > 0.0)
        .min_by(|a, b| {
            (a.mean_contrast - mid)
                .abs()
                .partial_cmp(&(b.mean_contrast - mid).abs())
                .unwrap()
        })
        .map(|p| p.concentration)
        .unwrap_or(1e-6);
    let out = levenberg_marquardt(&FitProblem {
        model: |p: &[f64], x: f64| p[1] + (p[0] - p[1]) / (1.0 + x / p[2]),
        xs: &xs,
        ys: &ys,
        weights: Some(&weights),
        init: &[hi, lo, k0],
        lower: &[0.0, 0.0, 1e-9],
        upper: &[1.0, 1.0, 1e-2],
        max_iter: 400,
        tol: 1e-14,
    })?;
    let fitted = RelaxometryModel {
        c_zero: out.params[0],
        c_floor: out.params[1],
        k_half: out.params[2],
    };
    let rms = (points
        .iter()
        .map(|p| {
            let r = p.mean_contrast - fitted.expected_contrast(p.concentration);
            r * r
        })
        .sum::<f64>()
        / points.len() as f64)
        .sqrt();
    Ok((fitted, rms))
}

/// Three-sigma detection limit in molar units.
///
/// The smallest concentration whose expected contrast drop below `c_zero`
/// exceeds three blank sigmas. Inverting the binding curve gives the closed
/// form `k_half * d / (c_zero - c_floor - d)` with `d = 3 * blank_sigma`.
pub fn limit_of_detection(model: &RelaxometryModel, blank_sigma: f64) -> Result<f64> {
    if !(blank_sigma > 0.0 && blank_sigma.is_finite()) {
        return Err(Error::Degenerate(format!(
            "blank sigma must be positive (got {blank_sigma})"
        )));
    }
    let d = 3.0 * blank_sigma;
    let span = model.c_zero - model.c_floor;
    if d >= span {
        return Err(Error::Degenerate(format!(
            "three-sigma threshold {d:.4} exceeds the contrast span {span:.4}; \
             no concentration is detectable"
        )));
    }
    Ok(model.k_half * d / (span - d))
}

/// Sample-economy summary of an analysis run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostVolumeReport {
    pub droplets: f64,
    pub total_volume_liters: f64,
    pub total_nd_mass_g: f64,
    pub total_cost_usd: f64,
}

/// Droplet-count, volume, diamond-mass, and reagent-cost tally for
/// `duration` seconds of analysis at droplet rate `f_d`.
pub fn cost_volume_report(
    f_d: f64,
    duration: f64,
    droplet_volume_liters: f64,
    nd_mass_per_droplet_g: f64,
    nd_price_per_mg_usd: f64,
) -> CostVolumeReport {
    let droplets = f_d * duration;
    let total_nd_mass_g = droplets * nd_mass_per_droplet_g;
    CostVolumeReport {
        droplets,
        total_volume_liters: droplets * droplet_volume_liters,
        total_nd_mass_g,
        total_cost_usd: total_nd_mass_g * 1e3 * nd_price_per_mg_usd,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binding_curve_endpoints_and_midpoint() {
        let m = RelaxometryModel::gd();
        assert!((m.expected_contrast(0.0) - 0.056).abs() < 1e-15);
        assert!((m.expected_contrast(1.0) - 0.028).abs() < 1e-4);
        let mid = 0.028 + 0.5 * (0.056 - 0.028);
        assert!((m.expected_contrast(2e-6) - mid).abs() < 1e-15);
    }

    #[test]
    fn detection_limit_closed_form() {
        let m = RelaxometryModel::gd();
        let sigma = 0.0004;
        let lod = limit_of_detection(&m, sigma).unwrap();
        let d = 3.0 * sigma;
        assert!((lod - m.k_half * d / (0.028 - d)).abs() < 1e-18);
        // More noise, worse limit.
        assert!(limit_of_detection(&m, 2.0 * sigma).unwrap() > lod);
    }

    #[test]
    fn detection_limit_rejects_noise_beyond_span() {
        let m = RelaxometryModel::gd();
        assert!(limit_of_detection(&m, 0.01).is_err());
        assert!(limit_of_detection(&m, 0.0).is_err());
    }

    #[test]
    fn clean_titration_recovers_the_model() {
        let mut setup = TitrationSetup::new(
            RelaxometryModel::gd(),
            vec![0.0, 5e-7, 1e-6, 2e-6, 5e-6, 2e-5],
        );
        setup.point_duration = 2.1;
        setup.settle_gap = 0.5;
        // Deterministic train on exact 0.7 s bins, so the estimator is exact.
        setup.base.droplet.f_d = 30.0;
        setup.base.droplet.rate_jitter_sigma = 0.0;
        setup.base.droplet.per_droplet_sigma = 0.0;
        let curve = run_titration(&setup).unwrap();
        for p in &curve.points {
            let expected = setup.model.expected_contrast(p.concentration);
            assert!(
                (p.mean_contrast - expected).abs() < 1e-8,
                "point at {} M reads {} vs {}",
                p.concentration,
                p.mean_contrast,
                expected
            );
        }
        assert!((curve.fitted.c_zero - 0.056).abs() < 1e-5);
        assert!((curve.fitted.c_floor - 0.028).abs() < 1e-5);
        assert!((curve.fitted.k_half / 2e-6 - 1.0).abs() < 1e-3);
        assert!(curve.lod.unwrap() < 1e-8, "clean blank implies a tiny LOD");
    }

    #[test]
    fn parallel_and_sequential_agree() {
        let mut setup =
            TitrationSetup::new(RelaxometryModel::gd(), vec![0.0, 1e-6, 4e-6]);
        setup.point_duration = 1.4;
        setup.settle_gap = 0.2;
        setup.base.noise.background_white_sigma = 0.01;
        setup.base.noise.shot_scale = 0.003;
        let a = run_titration(&setup).unwrap();
        let b = run_titration_seq(&setup).unwrap();
        for (pa, pb) in a.points.iter().zip(&b.points) {
            assert_eq!(pa.mean_contrast, pb.mean_contrast);
            assert_eq!(pa.sample_sigma, pb.sample_sigma);
        }
        assert_eq!(a.blank_sigma, b.blank_sigma);
    }

    #[test]
    fn cost_report_counts_droplets_mass_and_dollars() {
        // 30 Hz for 1000 s at 100 pg diamond per droplet and $50/mg.
        let r = cost_volume_report(30.0, 1000.0, 4.2e-12, 100e-12, 50.0);
        assert!((r.droplets - 3e4).abs() < 1e-9);
        assert!((r.total_nd_mass_g - 3e-6).abs() < 1e-18);
        assert!((r.total_cost_usd - 0.15).abs() < 1e-12);
        // An hour of analysis at slightly heavier loading costs about $0.63.
        let hour = cost_volume_report(30.0, 3600.0, 4.2e-12, 117e-12, 50.0);
        assert!((hour.total_cost_usd - 0.6318).abs() < 1e-6);
        // Zero duration zeroes everything.
        let z = cost_volume_report(30.0, 0.0, 4.2e-12, 100e-12, 50.0);
        assert_eq!(z.droplets, 0.0);
        assert_eq!(z.total_cost_usd, 0.0);
    }
}
