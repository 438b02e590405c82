//! Simulation configuration types and validation.
//!
//! Validation is a pure function producing a [`ValidationReport`]; nothing
//! here touches the filesystem or RNG. Warnings flag physically dubious but
//! runnable settings, violations make a run refuse to start.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sampling grid and seeding for one synthetic acquisition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionConfig {
    /// Samples per second.
    pub sample_rate: f64,
    /// Trace length in seconds.
    pub duration: f64,
    /// Master seed; all stochastic terms derive substreams from it, so equal
    /// seeds give bit-identical traces regardless of thread count.
    pub rng_seed: u64,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self {
            sample_rate: 50_000.0,
            duration: 10.0,
            rng_seed: 1,
        }
    }
}

/// Temporal shape of the droplet transit envelope: a periodic waveform at
/// the droplet rate, normalized to zero mean and unit fundamental amplitude
/// so `g0` reads directly as the PL ripple at `f_d` whatever the shape. The
/// transit-averaged level lives in `m0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DropletProfile {
    /// Pure cosine ripple; the droplet line has no harmonics.
    Sinusoid,
    /// Flat-top transit occupying `duty` of each period. Its harmonic comb
    /// extends far up the spectrum; when a multiple of `f_d` lands within a
    /// couple of hertz of `f_mw` or its sidebands, narrowband estimators
    /// pick up droplet harmonics alongside the modulation lines.
    Square { duty: f64 },
    /// Duty-0.5 transit whose edges are cosine ramps, each spanning
    /// `edge_fraction` of the period (0 is square, 0.5 is ramp everywhere).
    RaisedCosine { edge_fraction: f64 },
}

impl DropletProfile {
    pub fn label(&self) -> &'static str {
        match self {
            DropletProfile::Sinusoid => "sinusoid",
            DropletProfile::Square { .. } => "square",
            DropletProfile::RaisedCosine { .. } => "raised_cosine",
        }
    }
}

/// Droplet train: periodic diamond-loaded droplets transiting the probe
/// beam.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropletTrain {
    /// Droplet transit rate in Hz.
    pub f_d: f64,
    pub profile: DropletProfile,
    /// Transit ripple amplitude at the droplet fundamental (arbitrary PL
    /// units).
    pub g0: f64,
    /// Transit-averaged diamond PL level in the same units. Both terms
    /// respond to the microwave drive; non-diamond light belongs in the
    /// background noise terms.
    pub m0: f64,
    /// Random-walk strength of the instantaneous droplet rate in Hz per
    /// sqrt(second); zero freezes the rate at `f_d`.
    pub rate_jitter_sigma: f64,
    /// Relative spread of per-droplet diamond loading (unit-mean factors).
    pub per_droplet_sigma: f64,
}

impl Default for DropletTrain {
    fn default() -> Self {
        Self {
            f_d: 29.0,
            profile: DropletProfile::Sinusoid,
            g0: 1.0,
            m0: 3.0,
            rate_jitter_sigma: 0.25,
            per_droplet_sigma: 0.02,
        }
    }
}

/// Shape of the microwave on/off modulation applied to the ND contrast.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MwWaveform {
    /// `1 - C/2 (1 + cos)` equivalent: sinusoidal contrast modulation.
    Cosine,
    /// Hard-keyed on/off square amplitude modulation.
    SquareAm,
}

/// Amplitude modulation of the ND photoluminescence by the resonant
/// microwave drive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MwModulation {
    /// Modulation rate in Hz.
    pub f_mw: f64,
    /// Phase offset in radians at t = 0.
    pub phase: f64,
    /// ODMR contrast: fractional PL dip when the drive is on.
    pub contrast: f64,
    pub waveform: MwWaveform,
}

impl Default for MwModulation {
    fn default() -> Self {
        Self {
            f_mw: 2_000.0,
            phase: 0.0,
            contrast: 0.028,
            waveform: MwWaveform::Cosine,
        }
    }
}

/// Additive and multiplicative disturbance terms, all off by default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct NoiseBudget {
    /// Shot-noise scale: each sample gets zero-mean Gaussian noise with
    /// variance `shot_scale` times the instantaneous noiseless PL.
    pub shot_scale: f64,
    /// Initial additive background level.
    pub background_b0: f64,
    /// Exponential decay time of the background, seconds. Ignored when
    /// `background_b0` is zero.
    pub background_decay_tau: f64,
    /// White Gaussian noise added to the background, absolute units.
    pub background_white_sigma: f64,
    /// Peak fractional excursion of slow multiplicative laser/alignment
    /// drift. Peak-to-peak: the multiplier swings over
    /// `1 +- laser_drift_fraction / 2`. Drift multiplies the diamond-bearing
    /// part of the signal (the probe illuminates the droplet stream; the
    /// background has its own terms above).
    pub laser_drift_fraction: f64,
    /// Period of the slow drift, seconds.
    pub laser_drift_period: f64,
}

/// Intra-droplet nanodiamond kinetics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KineticsParams {
    /// Diffusion coefficient, um^2/s.
    pub diffusion_coeff: f64,
    /// Confining droplet radius, um.
    pub droplet_radius: f64,
    pub n_particles: usize,
    /// Integration step, seconds.
    pub dt_step: f64,
    /// Simulated span, seconds.
    pub duration: f64,
    /// When set, steps are drawn from a symmetric alpha-stable law with this
    /// index instead of a Gaussian (truncated at one droplet diameter).
    pub heavy_tail_alpha: Option<f64>,
}

impl Default for KineticsParams {
    fn default() -> Self {
        Self {
            diffusion_coeff: 4.0,
            droplet_radius: 10.0,
            n_particles: 64,
            dt_step: 1e-3,
            duration: 10.0,
            heavy_tail_alpha: None,
        }
    }
}

/// Optional coupling of intra-droplet kinetics into the synthesized PL: the
/// diamond-bearing term is multiplied by `1 - depth + depth * w(t)` where
/// `w(t)` is the unit-mean beam-overlap trace of a kinetics run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrownianCoupling {
    pub kinetics: KineticsParams,
    /// Gaussian beam waist (1/e^2 intensity radius), um.
    pub beam_waist: f64,
    /// Fraction of the diamond PL modulated by particle motion, in [0, 1].
    pub depth: f64,
}

impl Default for BrownianCoupling {
    fn default() -> Self {
        Self {
            kinetics: KineticsParams::default(),
            beam_waist: 8.0,
            depth: 0.3,
        }
    }
}

/// Full description of one synthetic acquisition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SimConfig {
    pub acquisition: AcquisitionConfig,
    pub droplet: DropletTrain,
    pub mw: MwModulation,
    pub noise: NoiseBudget,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub brownian: Option<BrownianCoupling>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    /// Runnable but physically dubious.
    Warning,
    /// Refuses to run.
    Violation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationItem {
    pub severity: Severity,
    /// Dotted path of the offending field, e.g. `droplet.f_d`.
    pub field: String,
    pub message: String,
}

/// Outcome of validating a configuration. Empty means clean.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub items: Vec<ValidationItem>,
}

impl ValidationReport {
    pub fn is_runnable(&self) -> bool {
        !self
            .items
            .iter()
            .any(|i| i.severity == Severity::Violation)
    }

    pub fn violations(&self) -> impl Iterator<Item = &ValidationItem> {
        self.items
            .iter()
            .filter(|i| i.severity == Severity::Violation)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &ValidationItem> {
        self.items
            .iter()
            .filter(|i| i.severity == Severity::Warning)
    }

    fn push(&mut self, severity: Severity, field: &str, message: String) {
        self.items.push(ValidationItem {
            severity,
            field: field.to_string(),
            message,
        });
    }

    fn violation(&mut self, field: &str, message: String) {
        self.push(Severity::Violation, field, message);
    }

    fn warning(&mut self, field: &str, message: String) {
        self.push(Severity::Warning, field, message);
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.items.is_empty() {
            return write!(f, "ok");
        }
        for (i, item) in self.items.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            let tag = match item.severity {
                Severity::Warning => "warning",
                Severity::Violation => "violation",
            };
            write!(f, "{tag}: {}: {}", item.field, item.message)?;
        }
        Ok(())
    }
}

fn finite_positive(report: &mut ValidationReport, field: &str, value: f64) -> bool {
    if !value.is_finite() || value <= 0.0 {
        report.violation(field, format!("must be finite and > 0 (got {value})"));
        false
    } else {
        true
    }
}

fn finite_non_negative(report: &mut ValidationReport, field: &str, value: f64) -> bool {
    if !value.is_finite() || value < 0.0 {
        report.violation(field, format!("must be finite and >= 0 (got {value})"));
        false
    } else {
        true
    }
}

/// Check every field of `cfg` and collect findings. Never panics, never
/// rejects by returning early: the report lists everything wrong at once.
pub fn validate(cfg: &SimConfig) -> ValidationReport {
    let mut r = ValidationReport::default();

    let fs_ok = finite_positive(&mut r, "acquisition.sample_rate", cfg.acquisition.sample_rate);
    finite_positive(&mut r, "acquisition.duration", cfg.acquisition.duration);

    let fd_ok = finite_positive(&mut r, "droplet.f_d", cfg.droplet.f_d);
    if fd_ok && !(1.0..=1000.0).contains(&cfg.droplet.f_d) {
        r.warning(
            "droplet.f_d",
            format!(
                "{} Hz is outside the 1..=1000 Hz regime the droplet model was built for",
                cfg.droplet.f_d
            ),
        );
    }
    finite_positive(&mut r, "droplet.g0", cfg.droplet.g0);
    finite_non_negative(&mut r, "droplet.m0", cfg.droplet.m0);
    finite_non_negative(&mut r, "droplet.rate_jitter_sigma", cfg.droplet.rate_jitter_sigma);
    if !cfg.droplet.per_droplet_sigma.is_finite()
        || !(0.0..=0.1).contains(&cfg.droplet.per_droplet_sigma)
    {
        r.violation(
            "droplet.per_droplet_sigma",
            format!(
                "loading spread must lie in [0, 0.1] (got {})",
                cfg.droplet.per_droplet_sigma
            ),
        );
    }
    match cfg.droplet.profile {
        DropletProfile::Sinusoid => {}
        DropletProfile::Square { duty } => {
            if !duty.is_finite() || duty <= 0.0 || duty >= 1.0 {
                r.violation(
                    "droplet.profile.duty",
                    format!("duty cycle must lie in (0, 1) (got {duty})"),
                );
            }
        }
        DropletProfile::RaisedCosine { edge_fraction } => {
            if !edge_fraction.is_finite() || !(0.0..=0.5).contains(&edge_fraction) {
                r.violation(
                    "droplet.profile.edge_fraction",
                    format!("edge fraction must lie in [0, 0.5] (got {edge_fraction})"),
                );
            }
        }
    }

    let fmw_ok = finite_positive(&mut r, "mw.f_mw", cfg.mw.f_mw);
    if !cfg.mw.phase.is_finite() {
        r.violation("mw.phase", format!("must be finite (got {})", cfg.mw.phase));
    }
    if !cfg.mw.contrast.is_finite() || !(0.0..=1.0).contains(&cfg.mw.contrast) {
        r.violation(
            "mw.contrast",
            format!("contrast must lie in [0, 1] (got {})", cfg.mw.contrast),
        );
    } else if cfg.mw.contrast > 0.2 {
        r.warning(
            "mw.contrast",
            format!(
                "contrast {} exceeds the few-percent ODMR regime; estimator small-signal assumptions degrade",
                cfg.mw.contrast
            ),
        );
    }

    // Spectral layout. The MW tone and both droplet sidebands must sit well
    // inside Nyquist, and the sidebands must not fold into the droplet comb.
    if fmw_ok && fd_ok {
        if cfg.mw.f_mw < 10.0 * cfg.droplet.f_d {
            r.violation(
                "mw.f_mw",
                format!(
                    "modulation rate must be at least 10x the droplet rate ({} < 10 * {})",
                    cfg.mw.f_mw, cfg.droplet.f_d
                ),
            );
        }
        if fs_ok && cfg.acquisition.sample_rate < 10.0 * cfg.mw.f_mw {
            r.violation(
                "acquisition.sample_rate",
                format!(
                    "sample rate must be at least 10x the modulation rate ({} < 10 * {})",
                    cfg.acquisition.sample_rate, cfg.mw.f_mw
                ),
            );
        }
        if fs_ok && cfg.mw.f_mw + cfg.droplet.f_d >= 0.5 * cfg.acquisition.sample_rate {
            r.violation(
                "mw.f_mw",
                format!(
                    "upper sideband {} Hz reaches Nyquist ({} Hz)",
                    cfg.mw.f_mw + cfg.droplet.f_d,
                    0.5 * cfg.acquisition.sample_rate
                ),
            );
        }
    }

    finite_non_negative(&mut r, "noise.shot_scale", cfg.noise.shot_scale);
    finite_non_negative(&mut r, "noise.background_b0", cfg.noise.background_b0);
    finite_non_negative(
        &mut r,
        "noise.background_white_sigma",
        cfg.noise.background_white_sigma,
    );
    if cfg.noise.background_b0 > 0.0 {
        finite_positive(
            &mut r,
            "noise.background_decay_tau",
            cfg.noise.background_decay_tau,
        );
    }
    if !cfg.noise.laser_drift_fraction.is_finite()
        || !(0.0..1.0).contains(&cfg.noise.laser_drift_fraction)
    {
        r.violation(
            "noise.laser_drift_fraction",
            format!(
                "drift fraction must lie in [0, 1) (got {})",
                cfg.noise.laser_drift_fraction
            ),
        );
    }
    if cfg.noise.laser_drift_fraction > 0.0 {
        finite_positive(&mut r, "noise.laser_drift_period", cfg.noise.laser_drift_period);
    }

    if let Some(b) = &cfg.brownian {
        validate_kinetics(&mut r, "brownian.kinetics", &b.kinetics);
        finite_positive(&mut r, "brownian.beam_waist", b.beam_waist);
        if b.beam_waist > b.kinetics.droplet_radius {
            r.violation(
                "brownian.beam_waist",
                format!(
                    "beam waist {} um exceeds the droplet radius {} um",
                    b.beam_waist, b.kinetics.droplet_radius
                ),
            );
        }
        if !b.depth.is_finite() || !(0.0..=1.0).contains(&b.depth) {
            r.violation(
                "brownian.depth",
                format!("coupling depth must lie in [0, 1] (got {})", b.depth),
            );
        }
    }

    r
}

/// Kinetics checks shared by the coupled and standalone paths.
pub fn validate_kinetics(r: &mut ValidationReport, prefix: &str, k: &KineticsParams) {
    let field = |name: &str| format!("{prefix}.{name}");
    let d_ok = finite_positive(r, &field("diffusion_coeff"), k.diffusion_coeff);
    let radius_ok = finite_positive(r, &field("droplet_radius"), k.droplet_radius);
    finite_positive(r, &field("dt_step"), k.dt_step);
    finite_positive(r, &field("duration"), k.duration);
    if k.n_particles == 0 {
        r.violation(&field("n_particles"), "must be at least 1".to_string());
    }
    if let Some(alpha) = k.heavy_tail_alpha {
        if !alpha.is_finite() || alpha <= 0.0 || alpha > 2.0 {
            r.violation(
                &field("heavy_tail_alpha"),
                format!("stability index must lie in (0, 2] (got {alpha})"),
            );
        }
    }
    if d_ok && radius_ok && k.dt_step > 0.0 {
        // rms step per axis; individual draws several sigma above this are
        // routine, so keep a safety margin of 10 below the radius.
        let rms = (2.0 * k.diffusion_coeff * k.dt_step).sqrt();
        if rms > k.droplet_radius / 10.0 {
            r.warning(
                &field("dt_step"),
                format!(
                    "rms step {:.3} um is above a tenth of the droplet radius; boundary \
                     reflection accuracy degrades and large draws abort the run",
                    rms
                ),
            );
        }
    }
}

/// `validate` then convert violations into an error.
pub fn validate_strict(cfg: &SimConfig) -> Result<ValidationReport> {
    let report = validate(cfg);
    if report.is_runnable() {
        Ok(report)
    } else {
        Err(Error::InvalidConfig(report))
    }
}
