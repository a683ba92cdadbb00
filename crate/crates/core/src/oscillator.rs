//! Stochastic linear oscillators `q̈ + β q̇ + k q = sqrt(2D) Ẇ` with the
//! unit-variance constraint `D = kβ`.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Matrix4, Vector2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pso::{self, PsoConfig};
use crate::spectral::{spectral_difference, trapezoid, SpectralDensity};

/// Relative tolerance accepted for `D = kβ` when reading external triples.
pub const CONSTRAINT_TOL: f64 = 1e-9;

/// Oscillator parameters. `d` always equals `k * beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct OscillatorParams {
    k: f64,
    beta: f64,
    d: f64,
}

#[derive(Serialize, Deserialize)]
struct RawParams {
    k: f64,
    beta: f64,
    #[serde(rename = "D")]
    d: f64,
}

impl TryFrom<RawParams> for OscillatorParams {
    type Error = Error;

    fn try_from(r: RawParams) -> Result<Self> {
        OscillatorParams::from_triple(r.k, r.beta, r.d)
    }
}

impl From<OscillatorParams> for RawParams {
    fn from(p: OscillatorParams) -> Self {
        RawParams {
            k: p.k,
            beta: p.beta,
            d: p.d,
        }
    }
}

impl OscillatorParams {
    /// Parameters with `D = kβ`.
    pub fn new(k: f64, beta: f64) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::invariant("k", format!("must be positive and finite, got {k}")));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::invariant("beta", format!("must be positive and finite, got {beta}")));
        }
        Ok(Self { k, beta, d: k * beta })
    }

    /// Validates an externally supplied `(k, β, D)` triple against `D = kβ`.
    pub fn from_triple(k: f64, beta: f64, d: f64) -> Result<Self> {
        let p = Self::new(k, beta)?;
        if !((d - p.d).abs() <= CONSTRAINT_TOL * p.d) {
            return Err(Error::invariant(
                "D",
                format!("D = {d} violates D = k·beta = {} (relative tolerance {CONSTRAINT_TOL:e})", p.d),
            ));
        }
        Ok(p)
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    /// Forcing amplitude `sqrt(2D)`.
    pub fn forcing(&self) -> f64 {
        (2.0 * self.d).sqrt()
    }

    /// `S̃(ω) = 2D / ((k − ω²)² + β²ω²)`.
    pub fn psd_at(&self, w: f64) -> f64 {
        let re = self.k - w * w;
        2.0 * self.d / (re * re + self.beta * self.beta * w * w)
    }

    /// Analytic spectrum on `omega`, tagged with the sampling frequency of
    /// the data it is compared to.
    pub fn analytic_psd(&self, omega: &[f64], omega_s: f64) -> SpectralDensity {
        SpectralDensity {
            omega: omega.to_vec(),
            values: omega.iter().map(|&w| self.psd_at(w)).collect(),
            omega_s,
        }
    }

    /// Normalized displacement autocorrelation at time lags `lags`.
    pub fn analytic_autocorrelation(&self, lags: &[f64]) -> Vec<f64> {
        let (k, b) = (self.k, self.beta);
        let disc = k - b * b / 4.0;
        let half = b / 2.0;
        lags.iter()
            .map(|&tau| {
                let t = tau.abs();
                if disc.abs() < 1e-9 * k {
                    (-half * t).exp() * (1.0 + half * t)
                } else if disc > 0.0 {
                    let wd = disc.sqrt();
                    (-half * t).exp() * ((wd * t).cos() + half / wd * (wd * t).sin())
                } else {
                    let g = (-disc).sqrt();
                    let (l1, l2) = (half + g, half - g);
                    (l1 * (-l2 * t).exp() - l2 * (-l1 * t).exp()) / (l1 - l2)
                }
            })
            .collect()
    }

    /// Stationary variances `(D/(βk), D/β)` of displacement and velocity.
    pub fn stationary_variances(&self) -> (f64, f64) {
        (self.d / (self.beta * self.k), self.d / self.beta)
    }

    pub fn sample_stationary(&self, rng: &mut impl Rng) -> OscillatorState {
        let (vq, vv) = self.stationary_variances();
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        OscillatorState {
            q: vq.sqrt() * a,
            qdot: vv.sqrt() * b,
        }
    }

    pub fn transition(&self, dt: f64) -> ExactTransition {
        ExactTransition::new(self.k, self.beta, self.d, dt)
    }

    /// Exact-transition sample path of `q` at `0, dt, …, ⌊T/dt⌋·dt`.
    pub fn simulate(&self, duration: f64, dt: f64, seed: u64, initial: Initial) -> Result<Vec<f64>> {
        Ok(Trajectory::for_params(self, duration, dt, seed, initial)?.map(|s| s.q).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillatorState {
    pub q: f64,
    pub qdot: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Initial {
    Stationary,
    State(OscillatorState),
}

/// One-step Gaussian transition `z_{n+1} = Φ z_n + L ξ`, `LLᵀ = Q(Δt)`,
/// for `ż = A z + B Ẇ` with `A = [[0, 1], [−k, −β]]`, `B = (0, sqrt(2D))ᵀ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactTransition {
    pub phi: Matrix2<f64>,
    pub q: Matrix2<f64>,
    chol: Matrix2<f64>,
}

impl ExactTransition {
    /// Builds `Φ = e^{AΔt}` and `Q = ∫₀^Δt e^{As} BBᵀ e^{Aᵀs} ds` from the
    /// exponential of the augmented matrix `[[−A, BBᵀ], [0, Aᵀ]]·Δt`.
    pub fn new(k: f64, beta: f64, d: f64, dt: f64) -> Self {
        let a = Matrix2::new(0.0, 1.0, -k, -beta);
        let g = Matrix2::new(0.0, 0.0, 0.0, 2.0 * d);
        let mut c = Matrix4::zeros();
        c.fixed_view_mut::<2, 2>(0, 0).copy_from(&(-a * dt));
        c.fixed_view_mut::<2, 2>(0, 2).copy_from(&(g * dt));
        c.fixed_view_mut::<2, 2>(2, 2).copy_from(&(a.transpose() * dt));
        let e = c.exp();
        let e12: Matrix2<f64> = e.fixed_view::<2, 2>(0, 2).into();
        let e22: Matrix2<f64> = e.fixed_view::<2, 2>(2, 2).into();
        let phi = e22.transpose();
        let mut q = phi * e12;
        let off = 0.5 * (q[(0, 1)] + q[(1, 0)]);
        q[(0, 1)] = off;
        q[(1, 0)] = off;
        let chol = cholesky2(&q);
        Self { phi, q, chol }
    }

    pub fn step(&self, z: Vector2<f64>, rng: &mut impl Rng) -> Vector2<f64> {
        let xi = Vector2::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
        self.phi * z + self.chol * xi
    }
}

fn cholesky2(q: &Matrix2<f64>) -> Matrix2<f64> {
    let a = q[(0, 0)].max(0.0);
    if a == 0.0 {
        return Matrix2::new(0.0, 0.0, 0.0, q[(1, 1)].max(0.0).sqrt());
    }
    let l11 = a.sqrt();
    let l21 = q[(1, 0)] / l11;
    let l22 = (q[(1, 1)] - l21 * l21).max(0.0).sqrt();
    Matrix2::new(l11, 0.0, l21, l22)
}

/// Noise-intensity-free entry point: `(k, β, D)` need not satisfy `D = kβ`.
/// `D = 0` gives the deterministic damped oscillator.
pub fn simulate_unconstrained(k: f64, beta: f64, d: f64, duration: f64, dt: f64, seed: u64, start: OscillatorState) -> Result<Vec<f64>> {
    check_horizon(duration, dt)?;
    let t = Trajectory::new(ExactTransition::new(k, beta, d, dt), duration, dt, crate::seed::rng(seed), start);
    Ok(t.map(|s| s.q).collect())
}

fn check_horizon(duration: f64, dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Config(format!("time step must be positive, got {dt}")));
    }
    if !(duration >= dt) {
        return Err(Error::Config(format!("duration {duration} shorter than time step {dt}")));
    }
    Ok(())
}

/// Streaming exact-transition trajectory; yields `⌊T/dt⌋ + 1` states.
pub struct Trajectory {
    transition: ExactTransition,
    rng: rand_chacha::ChaCha8Rng,
    state: Vector2<f64>,
    remaining: usize,
    started: bool,
}

impl Trajectory {
    fn new(transition: ExactTransition, duration: f64, dt: f64, rng: rand_chacha::ChaCha8Rng, start: OscillatorState) -> Self {
        let steps = (duration / dt + 1e-9).floor() as usize;
        Self {
            transition,
            rng,
            state: Vector2::new(start.q, start.qdot),
            remaining: steps + 1,
            started: false,
        }
    }

    pub fn for_params(p: &OscillatorParams, duration: f64, dt: f64, seed: u64, initial: Initial) -> Result<Self> {
        check_horizon(duration, dt)?;
        let mut rng = crate::seed::rng(seed);
        let start = match initial {
            Initial::Stationary => p.sample_stationary(&mut rng),
            Initial::State(s) => s,
        };
        Ok(Self::new(p.transition(dt), duration, dt, rng, start))
    }
}

impl Iterator for Trajectory {
    type Item = OscillatorState;

    fn next(&mut self) -> Option<OscillatorState> {
        if self.remaining == 0 {
            return None;
        }
        if self.started {
            self.state = self.transition.step(self.state, &mut self.rng);
        }
        self.started = true;
        self.remaining -= 1;
        Some(OscillatorState {
            q: self.state[0],
            qdot: self.state[1],
        })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (self.remaining, Some(self.remaining))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MatchObjective {
    /// L1 spectral difference against the Welch estimate.
    #[default]
    Psd,
    /// L1 distance between empirical and model autocorrelations.
    Autocorr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillatorFit {
    pub params: OscillatorParams,
    /// Objective at the returned parameters.
    pub objective: f64,
    pub evaluations: usize,
}

/// Search box in `(ln k, ln β)` for sampling frequency `omega_s`.
pub fn search_bounds(omega_s: f64) -> ([f64; 2], [f64; 2]) {
    let nyq = omega_s / 2.0;
    (
        [1e-3f64.ln(), 1e-3f64.ln()],
        [(nyq * nyq * 4.0).ln(), (omega_s * 4.0).ln()],
    )
}

/// Finds `(k, β)` minimizing the L1 spectral difference to `data` by
/// particle swarm over log-parameters, returning `D = kβ`.
pub fn fit_oscillator(data: &SpectralDensity, cfg: &PsoConfig) -> Result<OscillatorFit> {
    let power = data.variance();
    if !(power > 0.0 && power.is_finite()) || data.omega.len() < 2 {
        return Err(Error::Fit("spectrum has no power".into()));
    }
    let objective = |x: &[f64]| -> f64 {
        match OscillatorParams::new(x[0].exp(), x[1].exp()) {
            Ok(p) => spectral_difference(&p.analytic_psd(&data.omega, data.omega_s), data).unwrap_or(f64::INFINITY),
            Err(_) => f64::INFINITY,
        }
    };
    let (lo, hi) = search_bounds(data.omega_s);
    let r = pso::minimize_from(objective, &lo, &hi, cfg, &moment_guess(data));
    Ok(OscillatorFit {
        params: OscillatorParams::new(r.best[0].exp(), r.best[1].exp())?,
        objective: r.value,
        evaluations: r.evaluations,
    })
}

/// Starting point from spectral moments: `k ≈ ∫ω²S / ∫S` and, from
/// `S(0) = 2β/k` at unit variance, `β ≈ k S(ω₁) / (2 Var)`.
fn moment_guess(data: &SpectralDensity) -> Vec<Vec<f64>> {
    let w2s: Vec<f64> = data.omega.iter().zip(&data.values).map(|(w, s)| w * w * s).collect();
    let m0 = trapezoid(&data.omega, &data.values);
    let k = trapezoid(&data.omega, &w2s) / m0;
    let beta = k * data.values[1] * PI / (2.0 * m0);
    if k > 0.0 && beta > 0.0 && k.is_finite() && beta.is_finite() {
        vec![vec![k.ln(), beta.ln()]]
    } else {
        Vec::new()
    }
}

/// Fits `(k, β)` to an empirical autocorrelation `acf[τ]` at lags `τ·dt` by
/// minimizing `Σ_τ |r̂(τ) − r(τ dt)|`.
pub fn fit_oscillator_acf(acf: &[f64], dt: f64, cfg: &PsoConfig) -> Result<OscillatorFit> {
    if acf.len() < 2 || acf.iter().any(|v| !v.is_finite()) {
        return Err(Error::Fit("autocorrelation needs at least two finite lags".into()));
    }
    let lags: Vec<f64> = (0..acf.len()).map(|t| t as f64 * dt).collect();
    let objective = |x: &[f64]| -> f64 {
        match OscillatorParams::new(x[0].exp(), x[1].exp()) {
            Ok(p) => p
                .analytic_autocorrelation(&lags)
                .iter()
                .zip(acf)
                .map(|(a, b)| (a - b).abs())
                .sum(),
            Err(_) => f64::INFINITY,
        }
    };
    let (lo, hi) = search_bounds(2.0 * PI / dt);
    let r = pso::minimize(objective, &lo, &hi, cfg);
    Ok(OscillatorFit {
        params: OscillatorParams::new(r.best[0].exp(), r.best[1].exp())?,
        objective: r.value,
        evaluations: r.evaluations,
    })
}
