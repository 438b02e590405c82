//! The five pipeline commands. Each one reads its inputs, runs the library,
//! writes its outputs plus a run manifest, and reports errors through
//! [`CliError`] so `main` can map them onto exit codes.

use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use droplock_core::config::SimConfig;
use droplock_core::duallock::EstimatorConfig;
use droplock_core::lockin::DemodConfig;
use droplock_core::series::{ContrastSeries, EstimatorId, TimeSeries};
use droplock_core::stability::{allan_deviation, default_taus, loglog_slope, InvalidPolicy};
use droplock_core::titration::{RelaxometryModel, TitrationSetup};
use droplock_core::{brownian, duallock, formats, lockin, reference, stability, synth, titration};
use serde::Serialize;

use crate::manifest::RunManifest;
use crate::{
    AllanArgs, AnalyzeArgs, BrownianArgs, CliError, EstimatorFlag, ModelFlag, OutputFormat,
    SynthArgs, TitrateArgs,
};

fn config_error(message: String) -> CliError {
    CliError { code: 2, message }
}

/// `demo.bin` -> `demo.bin.<suffix>`. Derived artifacts append to the full
/// output name rather than swapping the extension, so `synth --out x.bin`
/// and `analyze --out x.csv` in one directory never overwrite each other's
/// sidecars or manifests.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let name = file_name(path);
    path.with_file_name(format!("{name}.{suffix}"))
}

fn degenerate(message: String) -> CliError {
    CliError { code: 3, message }
}

/// Read and parse a flat config file, then apply the master-seed override.
fn load_config(path: &Path, seed: Option<u64>) -> Result<SimConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError {
        code: 4,
        message: format!("{}: {e}", path.display()),
    })?;
    let mut cfg = crate::flatcfg::parse(&text)
        .map_err(|e| config_error(format!("{}: {e}", path.display())))?;
    if let Some(s) = seed {
        cfg.acquisition.rng_seed = s;
    }
    Ok(cfg)
}

/// Trace files are sniffed, not extension-matched: DLK1 magic means binary,
/// anything else is treated as CSV.
fn load_trace(path: &Path) -> Result<TimeSeries, CliError> {
    let mut magic = [0u8; 4];
    let n = std::fs::File::open(path)
        .and_then(|mut f| f.read(&mut magic))
        .map_err(|e| CliError {
            code: 4,
            message: format!("{}: {e}", path.display()),
        })?;
    let ts = if n == 4 && &magic == b"DLK1" {
        formats::read_trace(path)
    } else {
        formats::read_trace_csv(path)
    };
    ts.map_err(CliError::from)
}

#[derive(Serialize)]
struct TruthSummary {
    true_contrast: f64,
    /// Droplet transits over the trace, integrated from the realized rate
    /// walk.
    n_transits: u64,
    loading_mean: f64,
    loading_relative_sigma: f64,
    rate_mean_hz: f64,
    rate_min_hz: f64,
    rate_max_hz: f64,
    kinetics_coupled: bool,
}

pub fn cmd_synth(args: &SynthArgs) -> Result<(), CliError> {
    let cfg = load_config(&args.config, args.seed)?;
    let run = synth::synthesize(&cfg)?;

    match args.format {
        OutputFormat::Bin => formats::write_trace(&args.out, &run.trace)?,
        OutputFormat::Csv => formats::write_trace_csv(&args.out, &run.trace)?,
    }

    let loadings = &run.truth.loadings;
    let n = loadings.len().max(1) as f64;
    let mean = loadings.iter().sum::<f64>() / n;
    let var = loadings.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    let walk = &run.truth.rate_walk;
    let rates = &walk.rates;
    // Integrate rate * dt over the walk; the last interval may be cut short
    // by the acquisition window.
    let duration = cfg.acquisition.duration;
    let transits: f64 = rates
        .iter()
        .enumerate()
        .map(|(i, r)| r * (duration - i as f64 * walk.cadence).clamp(0.0, walk.cadence))
        .sum();
    let summary = TruthSummary {
        true_contrast: run.truth.true_contrast,
        n_transits: transits.round() as u64,
        loading_mean: mean,
        loading_relative_sigma: var.sqrt() / mean,
        rate_mean_hz: rates.iter().sum::<f64>() / rates.len().max(1) as f64,
        rate_min_hz: rates.iter().cloned().fold(f64::INFINITY, f64::min),
        rate_max_hz: rates.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        kinetics_coupled: run.truth.brownian_weight.is_some(),
    };
    let truth_path = sibling(&args.out, "truth.json");
    formats::write_json(&truth_path, &summary)?;

    let mut manifest = RunManifest::new(
        "synth",
        cfg.acquisition.rng_seed,
        serde_json::to_value(&cfg).expect("config serializes"),
    );
    manifest.record(&args.out)?;
    manifest.record(&truth_path)?;
    manifest.write_beside(&args.out)?;
    println!(
        "synth: {} samples at {:.0} Hz -> {}",
        run.trace.samples.len(),
        run.trace.sample_rate(),
        args.out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct SeriesSummary {
    estimator: String,
    n_windows: usize,
    n_valid: usize,
    mean: f64,
    percent_error: f64,
}

fn summarize(series: &ContrastSeries) -> SeriesSummary {
    SeriesSummary {
        estimator: series.estimator_id.label().to_string(),
        n_windows: series.len(),
        n_valid: series.valid.iter().filter(|v| **v).count(),
        mean: series.mean,
        percent_error: series.percent_error,
    }
}

fn require_usable(series: &ContrastSeries, label: &str) -> Result<(), CliError> {
    if series.valid.iter().all(|v| !v) {
        return Err(degenerate(format!("{label}: every window is invalid")));
    }
    Ok(())
}

pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<(), CliError> {
    let cfg = load_config(&args.config, args.seed)?;
    let trace = load_trace(&args.trace)?;
    let est = EstimatorConfig {
        delta_t: args.window_s,
        band_half_width: args.band_hz,
        ..EstimatorConfig::default()
    };
    let demod = DemodConfig {
        reference_freq: cfg.mw.f_mw,
        ..reference::conventional_demod()
    };
    let spectral = |id: EstimatorId| -> Result<ContrastSeries, CliError> {
        let series = duallock::estimate_contrast(
            &trace,
            cfg.droplet.f_d,
            cfg.mw.f_mw,
            &EstimatorConfig { estimator_id: id, ..est.clone() },
        )?;
        require_usable(&series, id.label())?;
        Ok(series)
    };
    let conventional = || -> Result<ContrastSeries, CliError> {
        let series =
            lockin::ratiometric_contrast(&trace, &demod, reference::CONVENTIONAL_PL_TAU)?;
        require_usable(&series, "conventional")?;
        Ok(series)
    };

    let mut outputs: Vec<(PathBuf, ContrastSeries)> = Vec::new();
    match args.estimator {
        EstimatorFlag::Paper => outputs.push((args.out.clone(), spectral(EstimatorId::PaperMain)?)),
        EstimatorFlag::Si => outputs.push((args.out.clone(), spectral(EstimatorId::SiVariant)?)),
        EstimatorFlag::Exact => {
            outputs.push((args.out.clone(), spectral(EstimatorId::ExactRecovery)?))
        }
        EstimatorFlag::Conventional => outputs.push((args.out.clone(), conventional()?)),
        EstimatorFlag::Both => {
            outputs.push((args.out.clone(), spectral(EstimatorId::PaperMain)?));
            outputs.push((sibling(&args.out, "conventional.csv"), conventional()?));
        }
    }

    for (path, series) in &outputs {
        formats::write_contrast_csv(path, series)?;
    }
    #[derive(Serialize)]
    struct AnalyzeSummary {
        trace: String,
        summaries: Vec<SeriesSummary>,
    }
    let summary = AnalyzeSummary {
        trace: file_name(&args.trace),
        summaries: outputs.iter().map(|(_, s)| summarize(s)).collect(),
    };
    let summary_path = sibling(&args.out, "summary.json");
    formats::write_json(&summary_path, &summary)?;

    let mut manifest = RunManifest::new(
        "analyze",
        cfg.acquisition.rng_seed,
        serde_json::json!({
            "trace": file_name(&args.trace),
            "f_d": cfg.droplet.f_d,
            "f_mw": cfg.mw.f_mw,
            "estimator": format!("{:?}", args.estimator).to_lowercase(),
            "window_s": args.window_s,
            "band_hz": args.band_hz,
            "conventional_demod": serde_json::to_value(&demod).expect("demod serializes"),
        }),
    );
    for (path, _) in &outputs {
        manifest.record(path)?;
    }
    manifest.record(&summary_path)?;
    manifest.write_beside(&args.out)?;
    for s in &summary.summaries {
        println!(
            "analyze: {} mean {:.6} spread {:.2}% over {} windows",
            s.estimator, s.mean, s.percent_error, s.n_valid
        );
    }
    Ok(())
}

pub fn cmd_allan(args: &AllanArgs) -> Result<(), CliError> {
    let series = formats::read_contrast_csv(&args.contrast)?;
    if series.times.len() < 2 {
        return Err(degenerate("contrast series has fewer than two windows".into()));
    }
    let spacing = series.times[1] - series.times[0];
    let span = spacing * series.times.len() as f64;
    let taus = default_taus(spacing, span);
    let curve = allan_deviation(&series, &taus, InvalidPolicy::Interpolate)?;
    formats::write_allan_csv(&args.out, &curve)?;

    let mut manifest = RunManifest::new(
        "allan",
        0,
        serde_json::json!({
            "contrast": file_name(&args.contrast),
            "estimator": series.estimator_id.label(),
            "spacing_s": spacing,
            "invalid_policy": "interpolate",
        }),
    );
    manifest.record(&args.out)?;
    manifest.write_beside(&args.out)?;
    match loglog_slope(&curve.taus, &curve.sigmas, span) {
        Ok(slope) => println!(
            "allan: {} points, tau {:.3}..{:.0} s, weighted log-log slope {slope:+.3}",
            curve.taus.len(),
            curve.taus[0],
            curve.taus[curve.taus.len() - 1],
        ),
        Err(_) => println!("allan: {} points", curve.taus.len()),
    }
    Ok(())
}

pub fn cmd_titrate(args: &TitrateArgs) -> Result<(), CliError> {
    let base = load_config(&args.config, args.seed)?;
    let concentrations = crate::flatcfg::parse_f64_list(&args.concs)
        .map_err(|e| config_error(format!("--concs: {e}")))?;
    let model = match args.model {
        ModelFlag::Gd => RelaxometryModel::gd(),
        ModelFlag::Tempol => RelaxometryModel::tempol(),
    };
    let estimator_id = match args.estimator {
        EstimatorFlag::Paper => EstimatorId::PaperMain,
        EstimatorFlag::Si => EstimatorId::SiVariant,
        EstimatorFlag::Exact => EstimatorId::ExactRecovery,
        EstimatorFlag::Both | EstimatorFlag::Conventional => {
            return Err(config_error(
                "titration runs on a spectral estimator: pick paper, si, or exact".into(),
            ))
        }
    };
    let mut setup = TitrationSetup::new(model, concentrations);
    setup.base = base;
    setup.estimator = EstimatorConfig {
        estimator_id,
        delta_t: args.window_s,
        band_half_width: args.band_hz,
        ..reference::titration_estimator()
    };
    setup.point_duration = args.point_s;
    setup.settle_gap = args.settle_s;

    let curve = titration::run_titration(&setup)?;
    let mut w = BufWriter::new(std::fs::File::create(&args.out).map_err(|e| CliError {
        code: 4,
        message: format!("{}: {e}", args.out.display()),
    })?);
    (|| -> std::io::Result<()> {
        writeln!(w, "concentration_m,mean_contrast,std_err,sample_sigma,n_windows")?;
        for p in &curve.points {
            writeln!(
                w,
                "{},{},{},{},{}",
                p.concentration, p.mean_contrast, p.std_err, p.sample_sigma, p.n_windows
            )?;
        }
        w.flush()
    })()?;
    let summary_path = sibling(&args.out, "summary.json");
    formats::write_json(&summary_path, &curve)?;

    let mut manifest = RunManifest::new(
        "titrate",
        setup.base.acquisition.rng_seed,
        serde_json::to_value(&setup).expect("setup serializes"),
    );
    manifest.record(&args.out)?;
    manifest.record(&summary_path)?;
    manifest.write_beside(&args.out)?;
    match (curve.lod, curve.blank_sigma) {
        (Some(lod), _) => println!(
            "titrate: {} points, detection limit {lod:.3e} M ({})",
            curve.points.len(),
            curve.lod_convention
        ),
        (None, _) => println!(
            "titrate: {} points, no blank measured, no detection limit",
            curve.points.len()
        ),
    }
    Ok(())
}

pub fn cmd_brownian(args: &BrownianArgs) -> Result<(), CliError> {
    let params = droplock_core::config::KineticsParams {
        diffusion_coeff: args.diffusion,
        droplet_radius: args.radius,
        n_particles: args.particles,
        dt_step: args.dt_s,
        duration: args.duration_s,
        heavy_tail_alpha: args.tail_alpha,
    };
    let run = brownian::simulate(&params, args.seed.unwrap_or(0))?;
    formats::write_trajectory_csv(&args.out, &run)?;

    // Displacement magnitudes over non-overlapping lags, histogrammed.
    let lag = args.lag_steps;
    let mut ds = Vec::new();
    for traj in &run.positions {
        let mut k = 0;
        while k + lag < traj.len() {
            let dx = traj[k + lag][0] - traj[k][0];
            let dy = traj[k + lag][1] - traj[k][1];
            ds.push((dx * dx + dy * dy).sqrt());
            k += lag;
        }
    }
    if ds.is_empty() {
        return Err(degenerate(format!(
            "no displacement samples: {} steps per trajectory, lag {lag}",
            (args.duration_s / args.dt_s) as usize
        )));
    }
    let (edges, counts) = stability::histogram(&ds, args.bins)?;
    let hist_path = sibling(&args.out, "displacements.csv");
    let mut w = BufWriter::new(std::fs::File::create(&hist_path).map_err(|e| CliError {
        code: 4,
        message: format!("{}: {e}", hist_path.display()),
    })?);
    (|| -> std::io::Result<()> {
        writeln!(w, "# displacement magnitude over {lag} steps of {} s", args.dt_s)?;
        writeln!(w, "bin_lo_um,bin_hi_um,count")?;
        for (i, c) in counts.iter().enumerate() {
            writeln!(w, "{},{},{c}", edges[i], edges[i + 1])?;
        }
        w.flush()
    })()?;

    let mut manifest = RunManifest::new(
        "brownian",
        args.seed.unwrap_or(0),
        serde_json::json!({
            "kinetics": serde_json::to_value(&params).expect("params serialize"),
            "lag_steps": lag,
            "bins": args.bins,
        }),
    );
    manifest.record(&args.out)?;
    manifest.record(&hist_path)?;
    manifest.write_beside(&args.out)?;
    println!(
        "brownian: {} trajectories of {} steps, {} displacement samples -> {}",
        run.positions.len(),
        run.positions.first().map(|t| t.len()).unwrap_or(0),
        ds.len(),
        args.out.display()
    );
    Ok(())
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}
