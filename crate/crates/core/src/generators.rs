//! Reference data: the Lorenz-96 ring and a heavy-tailed oscillator signal.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oscillator::{Initial, OscillatorParams};
use crate::timeseries::TimeSeries;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lorenz96Config {
    /// Ring size `K`.
    pub k: usize,
    pub forcing: f64,
    /// RK4 step.
    pub dt: f64,
    pub sample_dt: f64,
    /// Recorded duration after the transient.
    pub duration: f64,
    pub transient: f64,
    pub seed: u64,
    /// Scale of the seeded perturbation applied to `x₁` at start.
    pub perturbation: f64,
}

impl Default for Lorenz96Config {
    fn default() -> Self {
        Self {
            k: 40,
            forcing: 8.0,
            dt: 0.01,
            sample_dt: 0.1,
            duration: 1000.0,
            transient: 100.0,
            seed: 0,
            perturbation: 1e-3,
        }
    }
}

impl Lorenz96Config {
    fn steps_per_sample(&self) -> Result<usize> {
        if self.k < 4 {
            return Err(Error::Config(format!("Lorenz-96 needs K >= 4, got {}", self.k)));
        }
        if !(self.dt > 0.0) || !(self.sample_dt > 0.0) {
            return Err(Error::Config("dt and sample_dt must be positive".into()));
        }
        let ratio = self.sample_dt / self.dt;
        let n = ratio.round();
        if n < 1.0 || (ratio - n).abs() > 1e-9 * ratio {
            return Err(Error::Config(format!(
                "sample_dt {} is not an integer multiple of dt {}",
                self.sample_dt, self.dt
            )));
        }
        Ok(n as usize)
    }
}

/// `ẋ_k = x_{k−1}(x_{k+1} − x_{k−2}) − x_k + F` with cyclic indices.
pub fn lorenz96_rhs(x: &[f64], forcing: f64, out: &mut [f64]) {
    let n = x.len();
    for k in 0..n {
        let xm1 = x[(k + n - 1) % n];
        let xm2 = x[(k + n - 2) % n];
        let xp1 = x[(k + 1) % n];
        out[k] = xm1 * (xp1 - xm2) - x[k] + forcing;
    }
}

struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    fn new(n: usize) -> Self {
        Self {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }

    fn step(&mut self, x: &mut [f64], forcing: f64, h: f64) {
        lorenz96_rhs(x, forcing, &mut self.k1);
        for i in 0..x.len() {
            self.tmp[i] = x[i] + 0.5 * h * self.k1[i];
        }
        lorenz96_rhs(&self.tmp, forcing, &mut self.k2);
        for i in 0..x.len() {
            self.tmp[i] = x[i] + 0.5 * h * self.k2[i];
        }
        lorenz96_rhs(&self.tmp, forcing, &mut self.k3);
        for i in 0..x.len() {
            self.tmp[i] = x[i] + h * self.k3[i];
        }
        lorenz96_rhs(&self.tmp, forcing, &mut self.k4);
        for i in 0..x.len() {
            x[i] += h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

/// Initial state `F·1` with `x₁` offset by `perturbation · (0.5 + U[0,1))`
/// drawn from `seed`.
pub fn lorenz96_initial(cfg: &Lorenz96Config) -> Vec<f64> {
    let mut x = vec![cfg.forcing; cfg.k];
    let mut rng = crate::seed::rng(crate::seed::derive_seed(cfg.seed, crate::seed::tag::GENERATOR, 0));
    x[0] += cfg.perturbation * (0.5 + rng.random::<f64>());
    x
}

/// Integrates `steps` RK4 steps from `x` in place.
pub fn integrate_lorenz96(x: &mut [f64], forcing: f64, dt: f64, steps: usize) {
    let mut rk = Rk4::new(x.len());
    for _ in 0..steps {
        rk.step(x, forcing, dt);
    }
}

/// RK4 integration from [`lorenz96_initial`]; discards the transient and
/// records the 1-based `observe` channels every `sample_dt`.
pub fn simulate_lorenz96(cfg: &Lorenz96Config, observe: &[usize]) -> Result<TimeSeries> {
    let per_sample = cfg.steps_per_sample()?;
    if observe.is_empty() || observe.iter().any(|&o| o == 0 || o > cfg.k) {
        return Err(Error::Config(format!("observed channels {observe:?} must lie in 1..={}", cfg.k)));
    }
    let mut x = lorenz96_initial(cfg);
    let mut rk = Rk4::new(cfg.k);
    let transient_steps = (cfg.transient / cfg.dt).round() as usize;
    let check = |x: &[f64], step: usize| -> Result<()> {
        if x.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Integration { time: step as f64 * cfg.dt })
        }
    };
    for s in 0..transient_steps {
        rk.step(&mut x, cfg.forcing, cfg.dt);
        if s % 1000 == 0 {
            check(&x, s)?;
        }
    }
    let samples = (cfg.duration / cfg.sample_dt + 1e-9).floor() as usize;
    let mut channels = vec![Vec::with_capacity(samples); observe.len()];
    let mut step = transient_steps;
    for _ in 0..samples {
        for (c, &o) in observe.iter().enumerate() {
            channels[c].push(x[o - 1]);
        }
        for _ in 0..per_sample {
            rk.step(&mut x, cfg.forcing, cfg.dt);
        }
        step += per_sample;
        check(&x, step)?;
    }
    let names = observe.iter().map(|o| format!("x{o}")).collect();
    let mut ts = TimeSeries::new(channels, cfg.sample_dt, names)?;
    ts.metadata.insert("source".into(), "lorenz96".into());
    ts.metadata.insert("lorenz96".into(), serde_json::to_string(cfg)?);
    Ok(ts)
}

/// Oscillator driving [`synth_heavy_tail`].
pub fn heavy_tail_oscillator() -> OscillatorParams {
    OscillatorParams::new(1.0, 1.0).expect("valid constants")
}

/// `y = z + 0.1 z³`, strictly increasing.
pub fn heavy_tail_transform(z: f64) -> f64 {
    z + 0.1 * z * z * z
}

/// Real root of `z + 0.1 z³ = y` (Cardano; the cubic has one real root).
pub fn heavy_tail_inverse(y: f64) -> f64 {
    // z³ + 10 z − 10 y = 0 → depressed cubic with p = 10, q = −10y.
    let (p, q) = (10.0f64, -10.0 * y);
    let disc = (q * q / 4.0 + p * p * p / 27.0).sqrt();
    (-q / 2.0 + disc).cbrt() + (-q / 2.0 - disc).cbrt()
}

/// Heavy-tailed record: a unit-variance oscillator observed through
/// [`heavy_tail_transform`].
pub fn synth_heavy_tail(duration: f64, dt: f64, seed: u64) -> Result<TimeSeries> {
    let z = heavy_tail_oscillator().simulate(duration, dt, seed, Initial::Stationary)?;
    let y = z.into_iter().map(heavy_tail_transform).collect();
    let mut ts = TimeSeries::single(y, dt, "y")?;
    ts.metadata.insert("source".into(), "heavy_tail".into());
    Ok(ts)
}
