//! Generative surrogate: a triangular map to Gaussian coordinates, a
//! stochastic oscillator per coordinate, and the inverse map back to data
//! space.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oscillator::{fit_oscillator, fit_oscillator_acf, Initial, MatchObjective, OscillatorParams};
use crate::pso::PsoConfig;
use crate::seed::{derive_seed, tag};
use crate::spectral::{welch_psd, WelchOptions};
use crate::timeseries::{autocorrelation, mean_var, TimeSeries};
use crate::transport::{fit_map, MapOptions, MonotoneTriangularMap, DEFAULT_RIDGE};

pub const MODEL_VERSION: u32 = 1;
const CLAMP_WARN_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateModel {
    pub map: MonotoneTriangularMap,
    /// One oscillator per map coordinate, in map order.
    pub oscillators: Vec<OscillatorParams>,
    pub dt: f64,
    /// Channel names in original order.
    pub channel_names: Vec<String>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub training_length: usize,
    pub degree: usize,
    pub match_objective: MatchObjective,
    pub seed: u64,
    pub channel_seeds: Vec<u64>,
    pub channels: Vec<ChannelFit>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelFit {
    pub name: String,
    pub transformed_mean: f64,
    pub transformed_variance: f64,
    pub objective: f64,
    pub evaluations: usize,
    /// Welch segment length (PSD matching) or number of lags (ACF matching).
    pub resolution: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateOptions {
    pub degree: usize,
    pub ridge: f64,
    pub match_objective: MatchObjective,
    /// Permutation of channels into map order.
    pub ordering: Option<Vec<usize>>,
    pub seed: u64,
    pub pso: PsoConfig,
    pub nperseg: Option<usize>,
    pub acf_lags: Option<usize>,
}

impl SurrogateOptions {
    pub fn new(degree: usize, seed: u64) -> Self {
        Self {
            degree,
            ridge: DEFAULT_RIDGE,
            match_objective: MatchObjective::Psd,
            ordering: None,
            seed,
            pso: PsoConfig::default(),
            nperseg: None,
            acf_lags: None,
        }
    }
}

impl SurrogateModel {
    pub fn dim(&self) -> usize {
        self.oscillators.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.map.validate()?;
        if self.oscillators.len() != self.map.dim() {
            return Err(Error::invariant(
                "oscillators",
                format!("{} oscillators for a {}-dimensional map", self.oscillators.len(), self.map.dim()),
            ));
        }
        if self.channel_names.len() != self.map.dim() {
            return Err(Error::invariant("channel_names", "length differs from map dimension"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invariant("dt", format!("must be positive, got {}", self.dt)));
        }
        Ok(())
    }
}

/// Fits the map, transforms the data, then fits one oscillator per
/// transformed channel.
pub fn fit_surrogate(ts: &TimeSeries, opts: &SurrogateOptions) -> Result<SurrogateModel> {
    let map = fit_map(
        ts,
        &MapOptions {
            degree: opts.degree,
            ridge: opts.ridge,
            ordering: opts.ordering.clone(),
        },
    )?;
    let q = map.forward_series(ts)?;
    let n = q.n_channels();
    let channel_seeds: Vec<u64> = (0..n).map(|j| derive_seed(opts.seed, tag::OSCILLATOR_FIT, j as u64)).collect();
    let fits: Vec<Result<(OscillatorParams, ChannelFit)>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let x = q.channel(j);
            let cfg = PsoConfig {
                seed: channel_seeds[j],
                ..opts.pso
            };
            let (fit, resolution) = match opts.match_objective {
                MatchObjective::Psd => {
                    let welch = match opts.nperseg {
                        Some(n) => WelchOptions::new(n),
                        None => WelchOptions::for_len(x.len()),
                    };
                    let psd = welch_psd(x, ts.dt(), &welch)?;
                    (fit_oscillator(&psd, &cfg)?, welch.nperseg)
                }
                MatchObjective::Autocorr => {
                    let lags = opts.acf_lags.unwrap_or((x.len() / 20).clamp(2, 1000));
                    let acf = autocorrelation(x, lags)?;
                    (fit_oscillator_acf(&acf, ts.dt(), &cfg)?, lags)
                }
            };
            let (mean, var) = mean_var(x);
            Ok((
                fit.params,
                ChannelFit {
                    name: q.names()[j].clone(),
                    transformed_mean: mean,
                    transformed_variance: var,
                    objective: fit.objective,
                    evaluations: fit.evaluations,
                    resolution,
                },
            ))
        })
        .collect();
    let mut oscillators = Vec::with_capacity(n);
    let mut channels = Vec::with_capacity(n);
    for f in fits {
        let (p, c) = f?;
        oscillators.push(p);
        channels.push(c);
    }
    let mut warnings = map.warnings.clone();
    for c in &channels {
        if !(0.5..=2.0).contains(&c.transformed_variance) {
            warnings.push(format!(
                "transformed channel {} has variance {:.4}, outside [0.5, 2]",
                c.name, c.transformed_variance
            ));
        }
    }
    Ok(SurrogateModel {
        map,
        oscillators,
        dt: ts.dt(),
        channel_names: ts.names().to_vec(),
        provenance: Provenance {
            training_length: ts.len(),
            degree: opts.degree,
            match_objective: opts.match_objective,
            seed: opts.seed,
            channel_seeds,
            channels,
            warnings,
        },
    })
}

/// Independent stationary oscillator paths in map order.
pub fn generate_reference(model: &SurrogateModel, duration: f64, seed: u64) -> Result<Vec<Vec<f64>>> {
    model
        .oscillators
        .par_iter()
        .enumerate()
        .map(|(j, p)| p.simulate(duration, model.dt, derive_seed(seed, tag::OSCILLATOR_SIM, j as u64), Initial::Stationary))
        .collect()
}

/// Surrogate trajectory of `⌊duration/dt⌋ + 1` samples in data space.
/// Metadata records the seed, clamp fraction and any warning.
pub fn generate(model: &SurrogateModel, duration: f64, seed: u64) -> Result<TimeSeries> {
    if !(duration >= model.dt) {
        return Err(Error::Config(format!("duration {duration} shorter than dt {}", model.dt)));
    }
    let q = generate_reference(model, duration, seed)?;
    let (channels, clamped) = model.map.inverse_channels(&q);
    let len = channels.first().map_or(0, Vec::len);
    let fraction = clamped as f64 / len.max(1) as f64;
    let mut ts = TimeSeries::new(channels, model.dt, model.channel_names.clone())?;
    ts.metadata.insert("source".into(), "surrogate".into());
    ts.metadata.insert("seed".into(), seed.to_string());
    ts.metadata.insert("clamped_samples".into(), clamped.to_string());
    ts.metadata.insert("clamp_fraction".into(), fraction.to_string());
    if fraction > CLAMP_WARN_FRACTION {
        ts.metadata.insert(
            "warning".into(),
            format!("{:.2}% of samples left the verified monotone domain", 100.0 * fraction),
        );
    }
    Ok(ts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedChannel {
    pub index: usize,
    pub name: String,
    pub correlation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateRanking {
    /// Candidates by decreasing `|correlation|`.
    pub ranked: Vec<RankedChannel>,
    pub excluded: Vec<String>,
    pub warnings: Vec<String>,
}

impl CovariateRanking {
    /// Series with the top `n` covariates first and the target last.
    pub fn modeling_set(&self, target: &[f64], target_name: &str, candidates: &TimeSeries, n: usize) -> Result<TimeSeries> {
        if n > self.ranked.len() {
            return Err(Error::Config(format!("{n} covariates requested, {} available", self.ranked.len())));
        }
        let mut channels: Vec<Vec<f64>> = self.ranked[..n].iter().map(|r| candidates.channel(r.index).to_vec()).collect();
        let mut names: Vec<String> = self.ranked[..n].iter().map(|r| r.name.clone()).collect();
        channels.push(target.to_vec());
        names.push(target_name.to_string());
        TimeSeries::new(channels, candidates.dt(), names)
    }
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    sab / (saa * sbb).sqrt()
}

fn is_degenerate(x: &[f64]) -> bool {
    let (_, v) = mean_var(x);
    !(v > 0.0) || x.iter().all(|&a| a == x[0])
}

/// Orders candidates by decreasing absolute Pearson correlation with the
/// target; constant candidates are excluded.
pub fn rank_covariates(target: &[f64], candidates: &TimeSeries) -> Result<CovariateRanking> {
    if target.len() != candidates.len() {
        return Err(Error::Config(format!("target has {} samples, candidates {}", target.len(), candidates.len())));
    }
    if target.len() < 2 || is_degenerate(target) {
        return Err(Error::Degenerate("target".into()));
    }
    let mut ranked = Vec::new();
    let mut excluded = Vec::new();
    let mut warnings = Vec::new();
    for (i, name) in candidates.names().iter().enumerate() {
        let x = candidates.channel(i);
        if is_degenerate(x) {
            warnings.push(format!("candidate {name} is constant and was excluded"));
            excluded.push(name.clone());
            continue;
        }
        ranked.push(RankedChannel {
            index: i,
            name: name.clone(),
            correlation: pearson(target, x),
        });
    }
    ranked.sort_by(|a, b| b.correlation.abs().total_cmp(&a.correlation.abs()).then(a.index.cmp(&b.index)));
    Ok(CovariateRanking {
        ranked,
        excluded,
        warnings,
    })
}

#[derive(Serialize, Deserialize)]
struct OscillatorRecord {
    k: f64,
    beta: f64,
    #[serde(rename = "D")]
    d: f64,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    dt: f64,
    channel_names: Vec<String>,
    map: MonotoneTriangularMap,
    oscillators: Vec<OscillatorRecord>,
    provenance: Provenance,
}

pub fn model_to_json(model: &SurrogateModel) -> Result<String> {
    let file = ModelFile {
        version: MODEL_VERSION,
        dt: model.dt,
        channel_names: model.channel_names.clone(),
        map: model.map.clone(),
        oscillators: model
            .oscillators
            .iter()
            .map(|p| OscillatorRecord {
                k: p.k(),
                beta: p.beta(),
                d: p.d(),
            })
            .collect(),
        provenance: model.provenance.clone(),
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

fn json_error(e: serde_json::Error) -> Error {
    use serde_json::error::Category;
    match e.classify() {
        Category::Syntax | Category::Eof => Error::Parse {
            line: e.line(),
            message: e.to_string(),
        },
        _ => Error::Json(e),
    }
}

pub fn model_from_json(text: &str) -> Result<SurrogateModel> {
    let raw: serde_json::Value = serde_json::from_str(text).map_err(json_error)?;
    match raw.get("version").and_then(serde_json::Value::as_u64) {
        Some(v) if v == u64::from(MODEL_VERSION) => {}
        Some(v) => return Err(Error::invariant("version", format!("unsupported model version {v}"))),
        None => return Err(Error::invariant("version", "missing model version")),
    }
    let file: ModelFile = serde_json::from_value(raw).map_err(json_error)?;
    let oscillators = file
        .oscillators
        .iter()
        .enumerate()
        .map(|(i, o)| {
            OscillatorParams::from_triple(o.k, o.beta, o.d)
                .map_err(|e| Error::invariant(format!("oscillators[{i}]"), e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    let model = SurrogateModel {
        map: file.map,
        oscillators,
        dt: file.dt,
        channel_names: file.channel_names,
        provenance: file.provenance,
    };
    model.validate()?;
    Ok(model)
}

pub fn save_model(model: &SurrogateModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model_to_json(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<SurrogateModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_json(&text)
}
