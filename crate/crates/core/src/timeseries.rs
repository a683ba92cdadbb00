//! Uniformly sampled multichannel records, CSV I/O and basic statistics.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// A uniformly sampled record: sample `m` of every channel sits at time `m * dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    channels: Vec<Vec<f64>>,
    dt: f64,
    names: Vec<String>,
    /// Free-form `key=value` metadata, echoed as `#` lines in CSV output.
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl TimeSeries {
    /// Builds a series from per-channel sample vectors.
    pub fn new(channels: Vec<Vec<f64>>, dt: f64, names: Vec<String>) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::Config("time series needs at least one channel".into()));
        }
        if names.len() != channels.len() {
            return Err(Error::Config(format!(
                "{} channel names for {} channels",
                names.len(),
                channels.len()
            )));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("sampling interval must be positive, got {dt}")));
        }
        let len = channels[0].len();
        if len < 2 {
            return Err(Error::Config("time series needs at least two samples".into()));
        }
        for (c, ch) in channels.iter().enumerate() {
            if ch.len() != len {
                return Err(Error::Config(format!(
                    "channel {} has {} samples, expected {len}",
                    names[c],
                    ch.len()
                )));
            }
            if let Some(m) = ch.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { row: m + 1, column: c + 1 });
            }
        }
        Ok(Self {
            channels,
            dt,
            names,
            metadata: BTreeMap::new(),
        })
    }

    /// Builds a series with generated channel names `c1, c2, ...`.
    pub fn from_channels(channels: Vec<Vec<f64>>, dt: f64) -> Result<Self> {
        let names = (1..=channels.len()).map(|i| format!("c{i}")).collect();
        Self::new(channels, dt, names)
    }

    pub fn single(values: Vec<f64>, dt: f64, name: &str) -> Result<Self> {
        Self::new(vec![values], dt, vec![name.to_string()])
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn channel(&self, i: usize) -> &[f64] {
        &self.channels[i]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Sample `m` across all channels.
    pub fn row(&self, m: usize) -> Vec<f64> {
        self.channels.iter().map(|c| c[m]).collect()
    }

    /// New series holding the given channels, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut channels = Vec::with_capacity(indices.len());
        let mut names = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.n_channels() {
                return Err(Error::Index(format!(
                    "channel {i} of {}",
                    self.n_channels()
                )));
            }
            channels.push(self.channels[i].clone());
            names.push(self.names[i].clone());
        }
        Self::new(channels, self.dt, names)
    }

    /// First `len` samples of every channel.
    pub fn truncate(&self, len: usize) -> Result<Self> {
        let channels = self.channels.iter().map(|c| c[..len.min(c.len())].to_vec()).collect();
        Self::new(channels, self.dt, self.names.clone())
    }
}

/// Reads a CSV record.
///
/// Leading lines beginning with `#` carry `key=value` metadata; `dt` is read
/// from there unless `dt_override` is given. With `has_header` the first
/// non-comment row holds channel names.
pub fn load_csv(path: impl AsRef<Path>, has_header: bool, dt_override: Option<f64>) -> Result<TimeSeries> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, has_header, dt_override)
}

pub fn parse_csv(text: &str, has_header: bool, dt_override: Option<f64>) -> Result<TimeSeries> {
    let mut metadata = BTreeMap::new();
    for line in text.lines() {
        let Some(rest) = line.trim_start().strip_prefix('#') else {
            if line.trim().is_empty() {
                continue;
            }
            break;
        };
        if let Some((k, v)) = rest.trim().split_once('=') {
            metadata.insert(k.trim().to_string(), v.trim().to_string());
        }
    }

    let dt = match dt_override {
        Some(dt) => dt,
        None => {
            let raw = metadata
                .get("dt")
                .ok_or_else(|| Error::Config("missing sampling interval: add `# dt=<seconds>` or pass --dt".into()))?;
            raw.parse::<f64>()
                .map_err(|_| Error::Config(format!("cannot parse dt value `{raw}`")))?
        }
    };

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(text.as_bytes());

    let names: Option<Vec<String>> = if has_header {
        let headers = reader.headers().map_err(csv_error)?;
        Some(headers.iter().map(str::to_string).collect())
    } else {
        None
    };

    let mut channels: Vec<Vec<f64>> = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if channels.is_empty() {
            channels = vec![Vec::new(); record.len()];
        }
        for (col, field) in record.iter().enumerate() {
            let value: f64 = field.parse().map_err(|_| Error::Parse {
                line,
                message: format!("cannot parse `{field}` as a number"),
            })?;
            if !value.is_finite() {
                return Err(Error::NonFinite { row: row + 1, column: col + 1 });
            }
            channels[col].push(value);
        }
    }
    if channels.is_empty() {
        return Err(Error::Parse { line: 0, message: "no data rows".into() });
    }

    let names = match names {
        Some(n) if n.len() == channels.len() => n,
        Some(n) => {
            return Err(Error::Parse {
                line: 1,
                message: format!("{} header names for {} columns", n.len(), channels.len()),
            })
        }
        None => (1..=channels.len()).map(|i| format!("c{i}")).collect(),
    };
    metadata.remove("dt");
    let mut ts = TimeSeries::new(channels, dt, names)?;
    ts.metadata = metadata;
    Ok(ts)
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    let message = match e.kind() {
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
            format!("ragged row: {len} fields, expected {expected_len}")
        }
        _ => e.to_string(),
    };
    Error::Parse { line, message }
}

/// Writes a series as CSV with `# dt=` and metadata lines, a header row and
/// one row per sample. Values use shortest round-trip formatting.
pub fn save_csv(ts: &TimeSeries, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut meta = vec![("dt".to_string(), ts.dt.to_string())];
    meta.extend(ts.metadata.iter().map(|(k, v)| (k.clone(), v.clone())));
    let names: Vec<&str> = ts.names.iter().map(String::as_str).collect();
    let cols: Vec<&[f64]> = ts.channels.iter().map(Vec::as_slice).collect();
    write_table(path, &meta, &names, &cols)
}

/// Writes equal-length columns as CSV, preceded by `# key=value` lines.
pub fn write_table(path: &Path, meta: &[(String, String)], header: &[&str], columns: &[&[f64]]) -> Result<()> {
    let mut out = Vec::new();
    for (k, v) in meta {
        writeln!(out, "# {k}={v}").expect("write to vec");
    }
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(header).map_err(|e| Error::Internal(e.to_string()))?;
        let rows = columns.first().map_or(0, |c| c.len());
        let mut record = Vec::with_capacity(columns.len());
        for m in 0..rows {
            record.clear();
            record.extend(columns.iter().map(|c| c[m].to_string()));
            w.write_record(&record).map_err(|e| Error::Internal(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Standardized copy of `ts` together with the channel means and sample
/// standard deviations that undo it.
pub fn standardize(ts: &TimeSeries) -> Result<(TimeSeries, Vec<f64>, Vec<f64>)> {
    let mut means = Vec::with_capacity(ts.n_channels());
    let mut stds = Vec::with_capacity(ts.n_channels());
    let mut channels = Vec::with_capacity(ts.n_channels());
    for (c, x) in ts.channels.iter().enumerate() {
        let (mean, var) = mean_var(x);
        if !(var > 0.0) {
            return Err(Error::Degenerate(ts.names[c].clone()));
        }
        let std = var.sqrt();
        channels.push(x.iter().map(|v| (v - mean) / std).collect());
        means.push(mean);
        stds.push(std);
    }
    let out = TimeSeries::new(channels, ts.dt, ts.names.clone())?;
    Ok((out, means, stds))
}

/// Inverse of [`standardize`].
pub fn unstandardize(ts: &TimeSeries, means: &[f64], stds: &[f64]) -> Result<TimeSeries> {
    let channels = ts
        .channels
        .iter()
        .zip(means.iter().zip(stds))
        .map(|(x, (m, s))| x.iter().map(|v| v * s + m).collect())
        .collect();
    TimeSeries::new(channels, ts.dt, ts.names.clone())
}

/// Mean and sample (n - 1) variance.
pub fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let ss: f64 = x.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, if x.len() > 1 { ss / (n - 1.0) } else { 0.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

/// Sample mean, (n - 1) variance, and moment-ratio skewness and excess
/// kurtosis from the biased central moments.
pub fn moments(x: &[f64]) -> Result<Moments> {
    if x.len() < 4 {
        return Err(Error::Config(format!("moments need at least 4 samples, got {}", x.len())));
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in x {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let variance = m2 / (n - 1.0);
    m2 /= n;
    m3 /= n;
    m4 /= n;
    if !(m2 > 0.0) {
        return Err(Error::Degenerate("series".into()));
    }
    Ok(Moments {
        mean,
        variance,
        skewness: m3 / m2.powf(1.5),
        excess_kurtosis: m4 / (m2 * m2) - 3.0,
    })
}

/// Biased (1/M) autocorrelation for lags `0..=max_lag`, normalized so r(0) = 1.
pub fn autocorrelation(x: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let m = x.len();
    if max_lag >= m {
        return Err(Error::Config(format!("max_lag {max_lag} must be below series length {m}")));
    }
    let mean = x.iter().sum::<f64>() / m as f64;
    let d: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let c0: f64 = d.iter().map(|v| v * v).sum();
    if !(c0 > 0.0) {
        return Err(Error::Degenerate("series".into()));
    }
    let mut r = Vec::with_capacity(max_lag + 1);
    r.push(1.0);
    for lag in 1..=max_lag {
        let c: f64 = d[..m - lag].iter().zip(&d[lag..]).map(|(a, b)| a * b).sum();
        r.push(c / c0);
    }
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdfOptions {
    pub bins: usize,
    /// Gaussian smoothing kernel standard deviation, in bin widths.
    pub smooth_sigma_bins: f64,
    pub ci_level: f64,
    /// Histogram range; `None` uses the data's `[min, max]`.
    pub range: Option<(f64, f64)>,
}

impl Default for PdfOptions {
    fn default() -> Self {
        Self {
            bins: 100,
            smooth_sigma_bins: 2.0,
            ci_level: 0.95,
            range: None,
        }
    }
}

/// Histogram density estimate with Gaussian smoothing and per-bin
/// adjusted-Wald confidence limits. All densities are per unit of `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothedPdf {
    pub centers: Vec<f64>,
    pub density: Vec<f64>,
    pub density_raw: Vec<f64>,
    pub counts: Vec<u64>,
    pub ci_lo: Vec<f64>,
    pub ci_hi: Vec<f64>,
    pub bin_width: f64,
    pub n_samples: usize,
}

/// Histograms `x` into equal cells, normalizes by the total sample count,
/// smooths with a truncated Gaussian kernel and attaches adjusted-Wald bands.
///
/// With an explicit range, samples outside it are not binned but still count
/// toward the normalization, so the raw density integrates to the in-range
/// fraction.
pub fn estimate_pdf(x: &[f64], opts: &PdfOptions) -> Result<SmoothedPdf> {
    if opts.bins < 2 {
        return Err(Error::Config(format!("need at least 2 bins, got {}", opts.bins)));
    }
    if !(opts.ci_level > 0.0 && opts.ci_level < 1.0) {
        return Err(Error::Config(format!("ci_level must lie in (0, 1), got {}", opts.ci_level)));
    }
    let m = x.len();
    if m < opts.bins {
        return Err(Error::Config(format!("{m} samples for {} bins", opts.bins)));
    }
    let (lo, hi) = match opts.range {
        Some(r) => r,
        None => x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v))),
    };
    if !(hi > lo) {
        return Err(Error::Degenerate("series".into()));
    }
    let bins = opts.bins;
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0u64; bins];
    for &v in x {
        if v < lo || v > hi {
            continue;
        }
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }

    let total = m as f64;
    let density_raw: Vec<f64> = counts.iter().map(|&c| c as f64 / (total * width)).collect();
    let density = gaussian_smooth(&density_raw, opts.smooth_sigma_bins);

    let z = Normal::standard().inverse_cdf(0.5 + opts.ci_level / 2.0);
    let (mut ci_lo, mut ci_hi) = (Vec::with_capacity(bins), Vec::with_capacity(bins));
    for &c in &counts {
        let p = (c as f64 + 2.0) / (total + 4.0);
        let half = z * (p * (1.0 - p) / (total + 4.0)).sqrt();
        ci_lo.push(((p - half) / width).max(0.0));
        ci_hi.push((p + half) / width);
    }
    let centers = (0..bins).map(|b| lo + (b as f64 + 0.5) * width).collect();
    Ok(SmoothedPdf {
        centers,
        density,
        density_raw,
        counts,
        ci_lo,
        ci_hi,
        bin_width: width,
        n_samples: m,
    })
}

/// Mass-conserving Gaussian smoothing: each bin scatters its mass over a
/// kernel truncated at ±4σ and at the grid edges, renormalized to unit sum.
fn gaussian_smooth(values: &[f64], sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return values.to_vec();
    }
    let n = values.len() as isize;
    let reach = (4.0 * sigma).floor() as isize;
    let kernel: Vec<f64> = (-reach..=reach)
        .map(|k| (-0.5 * (k as f64 / sigma).powi(2)).exp())
        .collect();
    let mut out = vec![0.0; values.len()];
    for (j, &v) in values.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let j = j as isize;
        let a = (j - reach).max(0);
        let b = (j + reach).min(n - 1);
        let norm: f64 = (a..=b).map(|i| kernel[(i - j + reach) as usize]).sum();
        for i in a..=b {
            out[i as usize] += v * kernel[(i - j + reach) as usize] / norm;
        }
    }
    out
}
