//! Flat `key = value` configuration files.
//!
//! One assignment per line, `#` starts a comment, keys are dotted paths
//! mirroring the configuration structure, arrays are comma lists. The
//! format exists so that configs can be generated and parsed from any
//! language with string splitting alone.
//!
//! ```text
//! # two-tone demo
//! acquisition.duration = 15
//! droplet.f_d = 29
//! droplet.profile = square:0.4
//! mw.waveform = cosine
//! ```
//!
//! Unlisted keys keep library defaults, except `acquisition.rng_seed`,
//! which defaults to 0 here: command-line runs draw every stochastic term
//! from one master seed that is 0 unless the file or the `--seed` flag says
//! otherwise. Any `brownian.*` key switches the kinetics coupling on.

use droplock_core::config::{
    BrownianCoupling, DropletProfile, MwWaveform, SimConfig,
};

/// Parse failure with the offending line; the caller turns this into a
/// config-error exit.
#[derive(Debug)]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for ParseError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

fn err(line: usize, message: impl Into<String>) -> ParseError {
    ParseError { line, message: message.into() }
}

fn parse_f64(line: usize, key: &str, v: &str) -> Result<f64, ParseError> {
    v.parse()
        .map_err(|_| err(line, format!("{key}: `{v}` is not a number")))
}

fn parse_u64(line: usize, key: &str, v: &str) -> Result<u64, ParseError> {
    v.parse()
        .map_err(|_| err(line, format!("{key}: `{v}` is not an unsigned integer")))
}

fn parse_usize(line: usize, key: &str, v: &str) -> Result<usize, ParseError> {
    v.parse()
        .map_err(|_| err(line, format!("{key}: `{v}` is not a count")))
}

/// Comma-list of numbers, the array form of the format. Used for flag
/// values too (concentration lists), so it lives here with the rest of the
/// syntax.
pub fn parse_f64_list(v: &str) -> Result<Vec<f64>, String> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| format!("`{s}` is not a number")))
        .collect()
}

fn parse_profile(line: usize, v: &str) -> Result<DropletProfile, ParseError> {
    let (name, arg) = match v.split_once(':') {
        Some((n, a)) => (n.trim(), Some(a.trim())),
        None => (v, None),
    };
    match (name, arg) {
        ("sinusoid", None) => Ok(DropletProfile::Sinusoid),
        ("square", Some(a)) => Ok(DropletProfile::Square {
            duty: parse_f64(line, "droplet.profile", a)?,
        }),
        ("raised_cosine", Some(a)) => Ok(DropletProfile::RaisedCosine {
            edge_fraction: parse_f64(line, "droplet.profile", a)?,
        }),
        _ => Err(err(
            line,
            format!("droplet.profile: `{v}` (expected sinusoid, square:DUTY, or raised_cosine:EDGE)"),
        )),
    }
}

pub fn parse(text: &str) -> Result<SimConfig, ParseError> {
    let mut cfg = SimConfig::default();
    cfg.acquisition.rng_seed = 0;
    let mut brownian = BrownianCoupling::default();
    let mut has_brownian = false;

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| err(line, format!("expected `key = value`, got `{content}`")))?;
        let (key, v) = (key.trim(), value.trim());
        if v.is_empty() {
            return Err(err(line, format!("{key}: empty value")));
        }
        match key {
            "acquisition.sample_rate" => cfg.acquisition.sample_rate = parse_f64(line, key, v)?,
            "acquisition.duration" => cfg.acquisition.duration = parse_f64(line, key, v)?,
            "acquisition.rng_seed" => cfg.acquisition.rng_seed = parse_u64(line, key, v)?,
            "droplet.f_d" => cfg.droplet.f_d = parse_f64(line, key, v)?,
            "droplet.profile" => cfg.droplet.profile = parse_profile(line, v)?,
            "droplet.g0" => cfg.droplet.g0 = parse_f64(line, key, v)?,
            "droplet.m0" => cfg.droplet.m0 = parse_f64(line, key, v)?,
            "droplet.rate_jitter_sigma" => {
                cfg.droplet.rate_jitter_sigma = parse_f64(line, key, v)?
            }
            "droplet.per_droplet_sigma" => {
                cfg.droplet.per_droplet_sigma = parse_f64(line, key, v)?
            }
            "mw.f_mw" => cfg.mw.f_mw = parse_f64(line, key, v)?,
            "mw.phase" => cfg.mw.phase = parse_f64(line, key, v)?,
            "mw.contrast" => cfg.mw.contrast = parse_f64(line, key, v)?,
            "mw.waveform" => {
                cfg.mw.waveform = match v {
                    "cosine" => MwWaveform::Cosine,
                    "square_am" => MwWaveform::SquareAm,
                    _ => {
                        return Err(err(
                            line,
                            format!("mw.waveform: `{v}` (expected cosine or square_am)"),
                        ))
                    }
                }
            }
            "noise.shot_scale" => cfg.noise.shot_scale = parse_f64(line, key, v)?,
            "noise.background_b0" => cfg.noise.background_b0 = parse_f64(line, key, v)?,
            "noise.background_decay_tau" => {
                cfg.noise.background_decay_tau = parse_f64(line, key, v)?
            }
            "noise.background_white_sigma" => {
                cfg.noise.background_white_sigma = parse_f64(line, key, v)?
            }
            "noise.laser_drift_fraction" => {
                cfg.noise.laser_drift_fraction = parse_f64(line, key, v)?
            }
            "noise.laser_drift_period" => {
                cfg.noise.laser_drift_period = parse_f64(line, key, v)?
            }
            "brownian.diffusion_coeff" => {
                has_brownian = true;
                brownian.kinetics.diffusion_coeff = parse_f64(line, key, v)?;
            }
            "brownian.droplet_radius" => {
                has_brownian = true;
                brownian.kinetics.droplet_radius = parse_f64(line, key, v)?;
            }
            "brownian.n_particles" => {
                has_brownian = true;
                brownian.kinetics.n_particles = parse_usize(line, key, v)?;
            }
            "brownian.dt_step" => {
                has_brownian = true;
                brownian.kinetics.dt_step = parse_f64(line, key, v)?;
            }
            "brownian.heavy_tail_alpha" => {
                has_brownian = true;
                brownian.kinetics.heavy_tail_alpha = Some(parse_f64(line, key, v)?);
            }
            "brownian.beam_waist" => {
                has_brownian = true;
                brownian.beam_waist = parse_f64(line, key, v)?;
            }
            "brownian.depth" => {
                has_brownian = true;
                brownian.depth = parse_f64(line, key, v)?;
            }
            _ => return Err(err(line, format!("unknown key `{key}`"))),
        }
    }
    cfg.brownian = has_brownian.then_some(brownian);
    Ok(cfg)
}
