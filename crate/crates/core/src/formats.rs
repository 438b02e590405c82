//! On-disk interchange: the DLK1 binary trace format, plain CSV tables for
//! derived products, and JSON for structured summaries.
//!
//! DLK1 layout, all little-endian:
//!
//! ```text
//! bytes 0..4   magic "DLK1"
//! bytes 4..12  sample rate, f64
//! bytes 12..20 sample count, u64
//! bytes 20..   samples, f64 each
//! ```
//!
//! The format carries no time origin; readers place the first sample at
//! t = 0. Floats in the CSV writers use the shortest representation that
//! round-trips, so text output is lossless too.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::brownian::KineticsRun;
use crate::dsp::Spectrogram;
use crate::error::{Error, Result};
use crate::series::{ContrastSeries, EstimatorId, TimeSeries};
use crate::stability::AllanCurve;

const MAGIC: &[u8; 4] = b"DLK1";

pub fn write_trace(path: &Path, ts: &TimeSeries) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&ts.sample_rate().to_le_bytes())?;
    w.write_all(&(ts.samples.len() as u64).to_le_bytes())?;
    for s in &ts.samples {
        w.write_all(&s.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<TimeSeries> {
    let size = std::fs::metadata(path)?.len();
    let mut r = BufReader::with_capacity(1 << 20, File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!(
            "{}: bad magic {magic:?}, not a DLK1 trace",
            path.display()
        )));
    }
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    let sample_rate = f64::from_le_bytes(buf);
    r.read_exact(&mut buf)?;
    let count = u64::from_le_bytes(buf);
    if size != 20 + 8 * count {
        return Err(Error::Format(format!(
            "{}: header promises {count} samples but the file holds {}",
            path.display(),
            (size.saturating_sub(20)) / 8
        )));
    }
    if !(sample_rate.is_finite() && sample_rate > 0.0) || count == 0 {
        return Err(Error::Format(format!(
            "{}: unusable header (rate {sample_rate}, count {count})",
            path.display()
        )));
    }
    let mut samples = Vec::with_capacity(count as usize);
    for _ in 0..count {
        r.read_exact(&mut buf)?;
        samples.push(f64::from_le_bytes(buf));
    }
    Ok(TimeSeries::new(0.0, 1.0 / sample_rate, samples))
}

/// Text alternative to the binary trace: `t,value` rows. Values are printed
/// in the shortest form that parses back to the same float, so a
/// binary-to-CSV-to-binary round trip is lossless.
pub fn write_trace_csv(path: &Path, ts: &TimeSeries) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "t_s,value")?;
    for (k, s) in ts.samples.iter().enumerate() {
        writeln!(w, "{},{}", ts.t_start + k as f64 * ts.dt, s)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace_csv(path: &Path) -> Result<TimeSeries> {
    let r = BufReader::new(File::open(path)?);
    let mut times: Vec<f64> = Vec::new();
    let mut values = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("t_s") {
            continue;
        }
        let bad = || {
            Error::Format(format!(
                "{}:{}: expected `t,value`, got `{line}`",
                path.display(),
                lineno + 1
            ))
        };
        let mut cols = line.split(',');
        let t: f64 = cols.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let v: f64 = cols.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        times.push(t);
        values.push(v);
    }
    if times.len() < 2 {
        return Err(Error::Format(format!(
            "{}: need at least two rows to infer the sample interval",
            path.display()
        )));
    }
    let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::Format(format!(
            "{}: non-increasing time column",
            path.display()
        )));
    }
    Ok(TimeSeries::new(times[0], dt, values))
}

pub fn write_contrast_csv(path: &Path, series: &ContrastSeries) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# estimator: {}", series.estimator_id.label())?;
    writeln!(w, "t_s,c_hat,valid")?;
    for i in 0..series.len() {
        writeln!(
            w,
            "{},{},{}",
            series.times[i],
            series.values[i],
            u8::from(series.valid[i])
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_contrast_csv(path: &Path) -> Result<ContrastSeries> {
    let r = BufReader::new(File::open(path)?);
    let mut estimator = None;
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut valid = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("# estimator:") {
            estimator = EstimatorId::from_label(rest.trim());
            continue;
        }
        if line.starts_with('#') || line.starts_with("t_s") {
            continue;
        }
        let mut cols = line.split(',');
        let bad = || {
            Error::Format(format!(
                "{}:{}: expected `t,c_hat,valid`, got `{line}`",
                path.display(),
                lineno + 1
            ))
        };
        let t: f64 = cols.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let v: f64 = cols.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let ok: u8 = cols.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        times.push(t);
        values.push(v);
        valid.push(ok != 0);
    }
    if times.is_empty() {
        return Err(Error::Format(format!(
            "{}: no data rows",
            path.display()
        )));
    }
    let estimator = estimator.ok_or_else(|| {
        Error::Format(format!(
            "{}: missing `# estimator:` header line",
            path.display()
        ))
    })?;
    Ok(ContrastSeries::new(estimator, times, values, valid))
}

pub fn write_allan_csv(path: &Path, curve: &AllanCurve) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "tau_s,sigma,n_pairs")?;
    for i in 0..curve.taus.len() {
        writeln!(w, "{},{},{}", curve.taus[i], curve.sigmas[i], curve.n_pairs[i])?;
    }
    w.flush()?;
    Ok(())
}

/// Long-format spectrogram table: one row per (window, frequency) cell.
pub fn write_spectrogram_csv(path: &Path, gram: &Spectrogram) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "t_s,f_hz,amplitude")?;
    for (wi, row) in gram.rows.iter().enumerate() {
        for (fi, mag) in row.iter().enumerate() {
            writeln!(w, "{},{},{}", gram.times[wi], gram.freqs[fi], mag)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One row per particle per retained step, positions in micrometers.
pub fn write_trajectory_csv(path: &Path, run: &KineticsRun) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "particle,t_s,x_um,y_um")?;
    for (p, track) in run.positions.iter().enumerate() {
        for (k, pos) in track.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{}",
                p,
                k as f64 * run.dt_step,
                pos[0],
                pos[1]
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Pretty-printed JSON for any serializable summary.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}
