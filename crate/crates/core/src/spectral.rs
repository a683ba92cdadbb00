//! Welch power spectral density, cross-spectral density matrices and the
//! L1 spectral difference used to fit oscillators.
//!
//! Convention: spectra are two-sided densities reported on the nonnegative
//! half of the angular frequency axis, so that
//! `Var = (1/π) ∫₀^{ω_s/2} S(ω) dω`. No one-sided doubling is applied, which
//! lets analytic oscillator spectra be compared without rescaling.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One-sided grid of angular frequencies with density values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralDensity {
    pub omega: Vec<f64>,
    pub values: Vec<f64>,
    /// Sampling angular frequency `2π / dt`.
    pub omega_s: f64,
}

impl SpectralDensity {
    /// Angular-frequency spacing of a uniform grid.
    pub fn d_omega(&self) -> f64 {
        if self.omega.len() < 2 {
            return 0.0;
        }
        self.omega[1] - self.omega[0]
    }

    /// `(1/π) ∫ S dω` by the trapezoidal rule; equals the variance for a
    /// spectrum covering `[0, ω_s/2]`.
    pub fn variance(&self) -> f64 {
        trapezoid(&self.omega, &self.values) / PI
    }

    /// Linear interpolation, clamped to the end values outside the grid.
    pub fn interpolate(&self, w: f64) -> f64 {
        let n = self.omega.len();
        if n == 0 {
            return 0.0;
        }
        if w <= self.omega[0] {
            return self.values[0];
        }
        if w >= self.omega[n - 1] {
            return self.values[n - 1];
        }
        let i = self.omega.partition_point(|&o| o <= w) - 1;
        let t = (w - self.omega[i]) / (self.omega[i + 1] - self.omega[i]);
        self.values[i] * (1.0 - t) + self.values[i + 1] * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    #[default]
    Hann,
}

impl Window {
    /// Periodic window coefficients of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchOptions {
    pub nperseg: usize,
    pub overlap: f64,
    pub window: Window,
}

impl WelchOptions {
    pub fn new(nperseg: usize) -> Self {
        Self {
            nperseg,
            overlap: 0.5,
            window: Window::Hann,
        }
    }

    /// Options with [`default_nperseg`] for a record of `len` samples.
    pub fn for_len(len: usize) -> Self {
        Self::new(default_nperseg(len))
    }

    fn step(&self) -> usize {
        let noverlap = (self.overlap * self.nperseg as f64).floor() as usize;
        (self.nperseg - noverlap.min(self.nperseg - 1)).max(1)
    }

    fn validate(&self, len: usize) -> Result<()> {
        if self.nperseg < 8 {
            return Err(Error::Config(format!("nperseg must be at least 8, got {}", self.nperseg)));
        }
        if self.nperseg > len {
            return Err(Error::Config(format!(
                "nperseg {} exceeds series length {len}",
                self.nperseg
            )));
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(Error::Config(format!("overlap must lie in [0, 1), got {}", self.overlap)));
        }
        Ok(())
    }
}

/// Largest power of two not above `len / 8`, raised to 256 when the record
/// is at least that long.
pub fn default_nperseg(len: usize) -> usize {
    let target = (len / 8).max(8);
    let mut p = 8usize;
    while p * 2 <= target {
        p *= 2;
    }
    if p < 256 && len >= 256 {
        p = 256;
    }
    p.min(len.max(8))
}

/// Angular frequency grid `2πk / (nperseg·dt)`, `k = 0..=nperseg/2`.
pub fn frequency_grid(nperseg: usize, dt: f64) -> Vec<f64> {
    let dw = 2.0 * PI / (nperseg as f64 * dt);
    (0..=nperseg / 2).map(|k| k as f64 * dw).collect()
}

/// Windowed, scaled block transforms of one channel (mean removed).
///
/// Entry `[b][k]` is `sqrt(dt / Σw²) · Σ_n w_n x_{b,n} e^{-2πikn/nperseg}` so
/// that `|X|²` averages to the density convention of this module.
pub(crate) struct BlockTransform {
    nperseg: usize,
    step: usize,
    window: Vec<f64>,
    scale: f64,
    fft: Arc<dyn Fft<f64>>,
}

impl BlockTransform {
    pub(crate) fn new(opts: &WelchOptions, dt: f64) -> Self {
        let window = opts.window.coefficients(opts.nperseg);
        let wss: f64 = window.iter().map(|w| w * w).sum();
        let fft = FftPlanner::new().plan_fft_forward(opts.nperseg);
        Self {
            nperseg: opts.nperseg,
            step: opts.step(),
            window,
            scale: (dt / wss).sqrt(),
            fft,
        }
    }

    pub(crate) fn n_blocks(&self, len: usize) -> usize {
        (len - self.nperseg) / self.step + 1
    }

    pub(crate) fn n_freqs(&self) -> usize {
        self.nperseg / 2 + 1
    }

    /// Block coefficients, `blocks × freqs`.
    pub(crate) fn transform(&self, x: &[f64]) -> Vec<Vec<Complex64>> {
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let nb = self.n_blocks(x.len());
        let mut buf = vec![Complex64::new(0.0, 0.0); self.nperseg];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        (0..nb)
            .map(|b| {
                let seg = &x[b * self.step..b * self.step + self.nperseg];
                for ((o, v), w) in buf.iter_mut().zip(seg).zip(&self.window) {
                    *o = Complex64::new((v - mean) * w, 0.0);
                }
                self.fft.process_with_scratch(&mut buf, &mut scratch);
                buf[..self.n_freqs()].iter().map(|c| c * self.scale).collect()
            })
            .collect()
    }
}

/// Welch estimate: average of Hann-windowed periodograms over overlapping
/// segments of the mean-removed record.
pub fn welch_psd(x: &[f64], dt: f64, opts: &WelchOptions) -> Result<SpectralDensity> {
    opts.validate(x.len())?;
    let bt = BlockTransform::new(opts, dt);
    let blocks = bt.transform(x);
    let nb = blocks.len() as f64;
    let mut values = vec![0.0; bt.n_freqs()];
    for block in &blocks {
        for (v, c) in values.iter_mut().zip(block) {
            *v += c.norm_sqr();
        }
    }
    values.iter_mut().for_each(|v| *v /= nb);
    Ok(SpectralDensity {
        omega: frequency_grid(opts.nperseg, dt),
        values,
        omega_s: 2.0 * PI / dt,
    })
}

/// `∫₀^{ω_s/2} |S_model − S_data| dω` by the trapezoidal rule on the data grid.
pub fn spectral_difference(model: &SpectralDensity, data: &SpectralDensity) -> Result<f64> {
    if (model.omega_s - data.omega_s).abs() > 1e-9 * data.omega_s {
        return Err(Error::Config(format!(
            "sampling frequencies differ: {} vs {}",
            model.omega_s, data.omega_s
        )));
    }
    if model.omega.len() != data.omega.len() {
        return Err(Error::Config("model spectrum must be evaluated on the data grid".into()));
    }
    let diff: Vec<f64> = model
        .values
        .iter()
        .zip(&data.values)
        .map(|(a, b)| (a - b).abs())
        .collect();
    Ok(trapezoid(&data.omega, &diff))
}

/// `∫|est − reference| / ∫ reference` on the reference grid.
pub fn relative_l1(estimate: &SpectralDensity, reference: &SpectralDensity) -> f64 {
    let est: Vec<f64> = reference.omega.iter().map(|&w| estimate.interpolate(w)).collect();
    let diff: Vec<f64> = est.iter().zip(&reference.values).map(|(a, b)| (a - b).abs()).collect();
    trapezoid(&reference.omega, &diff) / trapezoid(&reference.omega, &reference.values)
}

pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

/// Cross-spectral density at one frequency across `P` channels.
#[derive(Debug, Clone)]
pub struct CrossSpectralMatrix {
    pub omega: f64,
    pub matrix: DMatrix<Complex64>,
    pub weights: Vec<f64>,
}

impl CrossSpectralMatrix {
    /// `Σ_p w_p C_pp`.
    pub fn weighted_trace(&self) -> f64 {
        (0..self.matrix.nrows())
            .map(|p| self.weights[p] * self.matrix[(p, p)].re)
            .sum()
    }
}

/// Block-averaged cross-spectral matrices `C_pq(ω) = ⟨X_p X_q*⟩` for the rows
/// of `snapshots`, with the same scaling as [`welch_psd`].
pub fn cross_spectral_density(
    snapshots: &[Vec<f64>],
    dt: f64,
    weights: &[f64],
    opts: &WelchOptions,
) -> Result<Vec<CrossSpectralMatrix>> {
    let p = snapshots.len();
    if p == 0 {
        return Err(Error::Config("need at least one channel".into()));
    }
    if weights.len() != p {
        return Err(Error::Config(format!("{} weights for {p} channels", weights.len())));
    }
    if let Some(i) = weights.iter().position(|w| !(*w > 0.0)) {
        return Err(Error::invariant("weights", format!("weight {i} is not positive")));
    }
    let len = snapshots[0].len();
    if snapshots.iter().any(|s| s.len() != len) {
        return Err(Error::Config("channels differ in length".into()));
    }
    opts.validate(len)?;
    let bt = BlockTransform::new(opts, dt);
    let coeffs: Vec<Vec<Vec<Complex64>>> = snapshots.par_iter().map(|x| bt.transform(x)).collect();
    let nb = bt.n_blocks(len);
    let grid = frequency_grid(opts.nperseg, dt);
    let out = (0..bt.n_freqs())
        .into_par_iter()
        .map(|k| {
            let q = DMatrix::from_fn(p, nb, |row, b| coeffs[row][b][k]);
            let matrix = (&q * q.adjoint()) / Complex64::new(nb as f64, 0.0);
            CrossSpectralMatrix {
                omega: grid[k],
                matrix,
                weights: weights.to_vec(),
            }
        })
        .collect();
    Ok(out)
}
