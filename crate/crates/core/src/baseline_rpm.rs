//! Random phase model: a sum of cosines with random frequencies and phases
//! whose amplitudes follow a given spectral density.

use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::SpectralDensity;
use crate::timeseries::{moments, Moments};

const TWO_PI: f64 = 2.0 * PI;
/// Samples between exact re-evaluations of the phasor recurrence.
const ANCHOR: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomPhaseModel {
    /// Cell centers on `[0, 2π)`.
    pub omegas: Vec<f64>,
    pub amps: Vec<f64>,
    pub phases: Vec<f64>,
    /// Cell edges `0 = e₀ < … < e_{m+1} = 2π`.
    pub edges: Vec<f64>,
    /// Physical angular frequency per unit of `omegas`.
    pub omega_scale: f64,
}

impl RandomPhaseModel {
    pub fn n_cells(&self) -> usize {
        self.amps.len()
    }

    /// `Σ a_j²`, the variance of every realization.
    pub fn variance(&self) -> f64 {
        self.amps.iter().map(|a| a * a).sum()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

/// Builds the model from a density `rho` on `[0, 2π)`.
pub fn from_density_fn(rho: impl Fn(f64) -> f64, m: usize, seed: u64) -> Result<RandomPhaseModel> {
    if m < 1 {
        return Err(Error::Config("random phase model needs m >= 1".into()));
    }
    let mut rng = crate::seed::rng(crate::seed::derive_seed(seed, crate::seed::tag::RPM, 0));
    let mut edges: Vec<f64> = (0..m).map(|_| rng.random::<f64>() * TWO_PI).collect();
    edges.sort_by(f64::total_cmp);
    edges.insert(0, 0.0);
    edges.push(TWO_PI);
    let mut omegas = Vec::with_capacity(m + 1);
    let mut amps = Vec::with_capacity(m + 1);
    for w in edges.windows(2) {
        let center = 0.5 * (w[0] + w[1]);
        let r = rho(center);
        if !(r >= 0.0) {
            return Err(Error::invariant("rho", format!("density {r} at {center} is not a nonnegative number")));
        }
        omegas.push(center);
        amps.push((r * (w[1] - w[0])).sqrt());
    }
    let phases = (0..=m).map(|_| rng.random::<f64>() * TWO_PI).collect();
    Ok(RandomPhaseModel {
        omegas,
        amps,
        phases,
        edges,
        omega_scale: 1.0,
    })
}

/// Builds the model from a spectral density on `[0, ω_s/2]`, rescaled
/// linearly onto `[0, 2π)` so that `Σ a_j²` approximates its variance.
pub fn build_rpm(density: &SpectralDensity, m: usize, seed: u64) -> Result<RandomPhaseModel> {
    if density.omega.len() < 2 {
        return Err(Error::Config("spectral density needs at least two points".into()));
    }
    if let Some(v) = density.values.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::invariant("rho", format!("negative or non-finite density value {v}")));
    }
    let nyquist = 0.5 * density.omega_s;
    let scale = nyquist / TWO_PI;
    // ∫₀^{2π} ρ dν = (1/π) ∫₀^{ω_s/2} S dω.
    let factor = nyquist / (2.0 * PI * PI);
    let mut model = from_density_fn(|nu| density.interpolate(nu * scale) * factor, m, seed)?;
    model.omega_scale = scale;
    Ok(model)
}

/// `g(t) = Σ_j √2 a_j cos(ω_j t + ζ_j)` at arbitrary times.
pub fn evaluate_rpm(model: &RandomPhaseModel, t: &[f64]) -> Vec<f64> {
    let freqs: Vec<f64> = model.omegas.iter().map(|w| w * model.omega_scale).collect();
    t.par_iter()
        .map(|&ti| {
            freqs
                .iter()
                .zip(&model.amps)
                .zip(&model.phases)
                .map(|((w, a), z)| a * (w * ti + z).cos())
                .sum::<f64>()
                * std::f64::consts::SQRT_2
        })
        .collect()
}

/// Realization on the uniform grid `t_n = n·dt`, `n < len`.
pub fn realize(model: &RandomPhaseModel, len: usize, dt: f64) -> Vec<f64> {
    let cells: Vec<(f64, f64, f64)> = model
        .omegas
        .iter()
        .zip(&model.amps)
        .zip(&model.phases)
        .filter(|((_, a), _)| **a > 0.0)
        .map(|((w, a), z)| (w * model.omega_scale, *a * std::f64::consts::SQRT_2, *z))
        .collect();
    let mut out = vec![0.0; len];
    out.par_chunks_mut(ANCHOR).enumerate().for_each(|(chunk, slot)| {
        let n0 = chunk * ANCHOR;
        for &(w, a, z) in &cells {
            let theta = (w * dt).rem_euclid(TWO_PI);
            let (rs, rc) = theta.sin_cos();
            let phase = (w * (n0 as f64 * dt) + z).rem_euclid(TWO_PI);
            let (mut s, mut c) = phase.sin_cos();
            for o in slot.iter_mut() {
                *o += a * c;
                let nc = c * rc - s * rs;
                s = s * rc + c * rs;
                c = nc;
            }
        }
    });
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub n: usize,
    pub mean_skewness: f64,
    pub mean_excess_kurtosis: f64,
    pub per_seed: Vec<Moments>,
}

/// Skewness and excess kurtosis of realizations as the number of cells
/// grows, averaged over `seeds`.
pub fn rpm_gaussianization_study(
    density: &SpectralDensity,
    n_list: &[usize],
    len: usize,
    dt: f64,
    seeds: &[u64],
) -> Result<Vec<StudyRow>> {
    if seeds.is_empty() {
        return Err(Error::Config("study needs at least one seed".into()));
    }
    n_list
        .iter()
        .map(|&n| {
            let per_seed = seeds
                .iter()
                .map(|&s| {
                    let model = build_rpm(density, n, s)?;
                    moments(&realize(&model, len, dt))
                })
                .collect::<Result<Vec<_>>>()?;
            let k = per_seed.len() as f64;
            Ok(StudyRow {
                n,
                mean_skewness: per_seed.iter().map(|m| m.skewness).sum::<f64>() / k,
                mean_excess_kurtosis: per_seed.iter().map(|m| m.excess_kurtosis).sum::<f64>() / k,
                per_seed,
            })
        })
        .collect()
}
