//! Monotone lower-triangular polynomial transport maps.
//!
//! Component `i` of the map sees the standardized inputs `z_1..z_i` (in map
//! order) and is increasing in `z_i`. Components are fitted independently by
//! maximum likelihood, so that `q = T(y)` is approximately standard normal.
//!
//! Vectors passed to [`MonotoneTriangularMap::forward`] and returned by
//! [`MonotoneTriangularMap::inverse`] are in the original channel order;
//! reference-space vectors `q` are in map order.

pub mod basis;
pub mod objective;

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::{standardize, TimeSeries};

pub use basis::{Conditional, PolynomialExpansion};
pub use objective::{fit_component, ComponentObjective, FitDiagnostics, FittedComponent, DEFAULT_RIDGE};

const DOMAIN_GRID: usize = 512;
const DOMAIN_PAD: f64 = 3.0;
const ROOT_TOL: f64 = 1e-10;
const MAX_DOUBLINGS: usize = 60;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapComponent {
    pub expansion: PolynomialExpansion,
    /// Interval of `z_i` around the data median on which the slope was
    /// verified positive, with preceding coordinates at their medians.
    pub monotone_domain: (f64, f64),
    /// Sample median of `z_i`.
    pub median: f64,
    /// Whether the slope was positive on the whole verification grid.
    pub monotone_on_grid: bool,
    pub diagnostics: Option<FitDiagnostics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneTriangularMap {
    pub degree: usize,
    /// `ordering[i]` is the original channel feeding map coordinate `i`.
    pub ordering: Vec<usize>,
    /// Standardization per original channel.
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub components: Vec<MapComponent>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapOptions {
    pub degree: usize,
    pub ridge: f64,
    /// Permutation of channels into map order; `None` keeps input order.
    pub ordering: Option<Vec<usize>>,
}

impl MapOptions {
    pub fn new(degree: usize) -> Self {
        Self {
            degree,
            ridge: DEFAULT_RIDGE,
            ordering: None,
        }
    }
}

/// Result of inverting one reference-space sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Inverted {
    pub y: Vec<f64>,
    pub clamped: bool,
}

fn validate_permutation(ordering: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if ordering.len() != n {
        return Err(Error::Config(format!("ordering has {} entries for {n} channels", ordering.len())));
    }
    for &i in ordering {
        if i >= n || seen[i] {
            return Err(Error::Config(format!("ordering {ordering:?} is not a permutation of 0..{n}")));
        }
        seen[i] = true;
    }
    Ok(())
}

fn median(x: &[f64]) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Fits a triangular map to `ts`: standardize, permute, then fit every
/// component independently (in parallel).
pub fn fit_map(ts: &TimeSeries, opts: &MapOptions) -> Result<MonotoneTriangularMap> {
    let n = ts.n_channels();
    let ordering = opts.ordering.clone().unwrap_or_else(|| (0..n).collect());
    validate_permutation(&ordering, n)?;
    let (z, means, stds) = standardize(ts)?;
    let cols: Vec<Vec<f64>> = ordering.iter().map(|&c| z.channel(c).to_vec()).collect();
    let medians: Vec<f64> = cols.iter().map(|c| median(c)).collect();

    let fitted: Vec<Result<FittedComponent>> = (0..n)
        .into_par_iter()
        .map(|i| fit_component(&cols[..=i], opts.degree, opts.ridge))
        .collect();

    let mut components = Vec::with_capacity(n);
    let mut warnings = Vec::new();
    for (i, f) in fitted.into_iter().enumerate() {
        let f = f?;
        let (lo, hi) = cols[i]
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let cond = f.expansion.conditional(&medians[..i]);
        let (domain, full) = verify_monotone(&cond, lo - DOMAIN_PAD, hi + DOMAIN_PAD, medians[i]);
        if !full {
            warnings.push(format!(
                "component {i} ({}) is not monotone on [{:.3}, {:.3}]; verified on [{:.3}, {:.3}]",
                ts.names()[ordering[i]],
                lo - DOMAIN_PAD,
                hi + DOMAIN_PAD,
                domain.0,
                domain.1
            ));
        }
        if !f.diagnostics.converged {
            warnings.push(format!("component {i} did not reach the gradient tolerance"));
        }
        components.push(MapComponent {
            expansion: f.expansion,
            monotone_domain: domain,
            median: medians[i],
            monotone_on_grid: full,
            diagnostics: Some(f.diagnostics),
        });
    }
    Ok(MonotoneTriangularMap {
        degree: opts.degree,
        ordering,
        means,
        stds,
        components,
        warnings,
    })
}

/// Largest run of grid points with positive slope containing the point
/// nearest `center`. Returns the run and whether it spans the whole grid.
fn verify_monotone(cond: &Conditional, lo: f64, hi: f64, center: f64) -> ((f64, f64), bool) {
    let step = (hi - lo) / (DOMAIN_GRID - 1) as f64;
    let grid: Vec<f64> = (0..DOMAIN_GRID).map(|k| lo + k as f64 * step).collect();
    let positive: Vec<bool> = grid.iter().map(|&t| cond.derivative(t) > 0.0).collect();
    if positive.iter().all(|p| *p) {
        return ((lo, hi), true);
    }
    let mut c = (((center - lo) / step).round().max(0.0) as usize).min(DOMAIN_GRID - 1);
    if !positive[c] {
        match (0..DOMAIN_GRID).filter(|&k| positive[k]).min_by_key(|&k| k.abs_diff(c)) {
            Some(k) => c = k,
            None => return ((center, center), false),
        }
    }
    let mut a = c;
    while a > 0 && positive[a - 1] {
        a -= 1;
    }
    let mut b = c;
    while b + 1 < DOMAIN_GRID && positive[b + 1] {
        b += 1;
    }
    ((grid[a], grid[b]), false)
}

impl MonotoneTriangularMap {
    /// Identity map on `n` channels with no standardization.
    pub fn identity(n: usize) -> Self {
        Self::identity_with_standardization(vec![0.0; n], vec![1.0; n])
    }

    /// `T(y) = (y − mean) / std` per channel.
    pub fn identity_with_standardization(means: Vec<f64>, stds: Vec<f64>) -> Self {
        let n = means.len();
        let components = (0..n)
            .map(|i| MapComponent {
                expansion: PolynomialExpansion::identity(i + 1, 1),
                monotone_domain: (-1e3, 1e3),
                median: 0.0,
                monotone_on_grid: true,
                diagnostics: None,
            })
            .collect();
        Self {
            degree: 1,
            ordering: (0..n).collect(),
            means,
            stds,
            components,
            warnings: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    /// Checks the structural invariants of a deserialized map.
    pub fn validate(&self) -> Result<()> {
        let n = self.components.len();
        if n == 0 {
            return Err(Error::invariant("components", "map has no components"));
        }
        validate_permutation(&self.ordering, n).map_err(|e| Error::invariant("ordering", e.to_string()))?;
        if self.means.len() != n || self.stds.len() != n {
            return Err(Error::invariant("standardization", "length differs from map dimension"));
        }
        if self.stds.iter().any(|s| !(*s > 0.0 && s.is_finite())) || self.means.iter().any(|m| !m.is_finite()) {
            return Err(Error::invariant("standardization", "stds must be positive and finite"));
        }
        for (i, c) in self.components.iter().enumerate() {
            let e = &c.expansion;
            PolynomialExpansion::new(e.dim, e.multi_indices.clone(), e.coefficients.clone())
                .map_err(|err| Error::invariant(format!("components[{i}].expansion"), err.to_string()))?;
            if e.dim != i + 1 {
                return Err(Error::invariant(
                    format!("components[{i}].expansion.dim"),
                    format!("expected {} for a lower-triangular map, got {}", i + 1, e.dim),
                ));
            }
            let (a, b) = c.monotone_domain;
            if !(a <= b) || !a.is_finite() || !b.is_finite() {
                return Err(Error::invariant(format!("components[{i}].monotone_domain"), "invalid interval"));
            }
        }
        Ok(())
    }

    /// Standardized inputs in map order.
    pub fn standardize_input(&self, y: &[f64]) -> Vec<f64> {
        self.ordering
            .iter()
            .map(|&c| (y[c] - self.means[c]) / self.stds[c])
            .collect()
    }

    pub fn destandardize(&self, z: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; z.len()];
        for (i, &c) in self.ordering.iter().enumerate() {
            y[c] = z[i] * self.stds[c] + self.means[c];
        }
        y
    }

    pub fn forward(&self, y: &[f64]) -> Vec<f64> {
        let z = self.standardize_input(y);
        self.components
            .iter()
            .enumerate()
            .map(|(i, c)| c.expansion.evaluate(&z[..=i]))
            .collect()
    }

    /// `log π(T(y)) + log det ∇T(y)`, including the standardization Jacobian.
    /// Returns `−∞` where any component slope is not positive.
    pub fn pullback_log_density(&self, y: &[f64]) -> f64 {
        let z = self.standardize_input(y);
        let mut total = 0.0;
        for (i, c) in self.components.iter().enumerate() {
            let cond = c.expansion.conditional(&z[..i]);
            let slope = cond.derivative(z[i]);
            if !(slope > 0.0) {
                return f64::NEG_INFINITY;
            }
            let q = cond.value(z[i]);
            total += -0.5 * q * q - 0.5 * (2.0 * PI).ln() + slope.ln();
        }
        total - self.stds.iter().map(|s| s.ln()).sum::<f64>()
    }

    /// Sequentially solves `T_i(z_1..z_{i−1}, t) = q_i`.
    pub fn inverse(&self, q: &[f64]) -> Inverted {
        let mut z = Vec::with_capacity(q.len());
        let mut clamped = false;
        for (i, c) in self.components.iter().enumerate() {
            let cond = c.expansion.conditional(&z[..i]);
            let (t, cl) = solve_monotone(&cond, q[i], c.monotone_domain, c.median, c.monotone_on_grid);
            clamped |= cl;
            z.push(t);
        }
        Inverted {
            y: self.destandardize(&z),
            clamped,
        }
    }

    /// Applies `forward` to every sample; output channels are in map order.
    pub fn forward_series(&self, ts: &TimeSeries) -> Result<TimeSeries> {
        let n = self.dim();
        if ts.n_channels() != n {
            return Err(Error::Config(format!("map has {n} channels, series has {}", ts.n_channels())));
        }
        let rows: Vec<Vec<f64>> = (0..ts.len()).into_par_iter().map(|m| self.forward(&ts.row(m))).collect();
        let channels = (0..n).map(|i| rows.iter().map(|r| r[i]).collect()).collect();
        let names = self.ordering.iter().map(|&c| format!("q_{}", ts.names()[c])).collect();
        TimeSeries::new(channels, ts.dt(), names)
    }

    /// Inverts every reference-space sample (channels in map order). Returns
    /// the physical-space channels in original order and the clamp count.
    pub fn inverse_channels(&self, q: &[Vec<f64>]) -> (Vec<Vec<f64>>, usize) {
        let n = self.dim();
        let len = q.first().map_or(0, Vec::len);
        let rows: Vec<Inverted> = (0..len)
            .into_par_iter()
            .map(|m| {
                let qm: Vec<f64> = q.iter().map(|c| c[m]).collect();
                self.inverse(&qm)
            })
            .collect();
        let clamped = rows.iter().filter(|r| r.clamped).count();
        let channels = (0..n).map(|c| rows.iter().map(|r| r.y[c]).collect()).collect();
        (channels, clamped)
    }

    /// Monomial coefficients of a one-channel map in the raw (unstandardized)
    /// variable: `T(y) = Σ a_n y^n`.
    pub fn raw_monomial_coefficients(&self) -> Option<Vec<f64>> {
        if self.dim() != 1 {
            return None;
        }
        let a = self.components[0].expansion.monomial_coefficients()?;
        let (mu, s) = (self.means[0], self.stds[0]);
        // ((y − mu)/s)^n expanded binomially.
        let mut out = vec![0.0; a.len()];
        for (n, an) in a.iter().enumerate() {
            let scale = an / s.powi(n as i32);
            let mut binom = 1.0;
            for k in 0..=n {
                out[k] += scale * binom * (-mu).powi((n - k) as i32);
                binom = binom * (n - k) as f64 / (k + 1) as f64;
            }
        }
        Some(out)
    }
}

/// Solves `cond(t) = q` on the increasing branch through `median`.
///
/// The bracket starts at `domain`, is cut at slope sign changes around the
/// median, and is widened geometrically while the function keeps increasing.
/// When no root exists on the branch the nearest branch end is returned and
/// the result is flagged as clamped.
fn solve_monotone(cond: &Conditional, q: f64, domain: (f64, f64), median: f64, expandable: bool) -> (f64, bool) {
    let (mut a, mut b) = domain;
    let mut center = median.clamp(a, b);
    if !(cond.derivative(center) > 0.0) {
        let probes = 64;
        let found = (0..=probes)
            .map(|k| a + (b - a) * k as f64 / probes as f64)
            .filter(|&t| cond.derivative(t) > 0.0)
            .min_by(|x, y| (x - center).abs().total_cmp(&(y - center).abs()));
        match found {
            Some(t) => center = t,
            None => return (center, true),
        }
    }
    let (a_cut, b_cut);
    (a, a_cut) = restrict_branch(cond, center, a);
    (b, b_cut) = restrict_branch(cond, center, b);
    let (fa, fb) = (cond.value(a), cond.value(b));
    if q >= fa && q <= fb {
        return (bracketed_root(cond, q, a, b), false);
    }
    let upward = q > fb;
    let (mut edge, mut f_edge, cut) = if upward { (b, fb, b_cut) } else { (a, fa, a_cut) };
    if cut && !expandable {
        return (edge, true);
    }
    let dir = if upward { 1.0 } else { -1.0 };
    let mut width = (b - a).max(1.0);
    for _ in 0..MAX_DOUBLINGS {
        let next = edge + dir * width;
        let (stop, cut_next) = restrict_branch(cond, edge, next);
        if cut_next {
            let f_stop = cond.value(stop);
            if (upward && f_stop >= q) || (!upward && f_stop <= q) {
                let (lo, hi) = if upward { (edge, stop) } else { (stop, edge) };
                return (bracketed_root(cond, q, lo, hi), false);
            }
            return (stop, true);
        }
        let f_next = cond.value(next);
        if !(dir * (f_next - f_edge) > 0.0) {
            return (edge, true);
        }
        if (upward && f_next >= q) || (!upward && f_next <= q) {
            let (lo, hi) = if upward { (edge, next) } else { (next, edge) };
            return (bracketed_root(cond, q, lo, hi), false);
        }
        edge = next;
        f_edge = f_next;
        width *= 2.0;
    }
    (edge, true)
}

/// Walks from `from` toward `to` and stops at the first slope sign change.
/// Returns the endpoint and whether it was cut short.
fn restrict_branch(cond: &Conditional, from: f64, to: f64) -> (f64, bool) {
    let probes = 32;
    let mut prev = from;
    for k in 1..=probes {
        let t = from + (to - from) * k as f64 / probes as f64;
        if !(cond.derivative(t) > 0.0) {
            // Bisect the slope root between prev (positive) and t.
            let (mut good, mut bad) = (prev, t);
            for _ in 0..200 {
                let mid = 0.5 * (good + bad);
                if (bad - good).abs() <= ROOT_TOL * good.abs().max(1.0) {
                    break;
                }
                if cond.derivative(mid) > 0.0 {
                    good = mid;
                } else {
                    bad = mid;
                }
            }
            return (good, true);
        }
        prev = t;
    }
    (to, false)
}

/// Safeguarded Newton–bisection for an increasing function on `[lo, hi]`
/// with `f(lo) ≤ q ≤ f(hi)`.
fn bracketed_root(cond: &Conditional, q: f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut t = 0.5 * (lo + hi);
    for _ in 0..400 {
        let r = cond.value(t) - q;
        if r == 0.0 {
            return t;
        }
        if r < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        if hi - lo <= ROOT_TOL * t.abs().max(1.0) {
            break;
        }
        let d = cond.derivative(t);
        let newton = t - r / d;
        t = if d > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        let step_small = (cond.value(t) - q).abs() == 0.0;
        if step_small {
            return t;
        }
    }
    // Polish with one Newton step inside the final bracket.
    let d = cond.derivative(t);
    let refined = t - (cond.value(t) - q) / d;
    if d > 0.0 && refined >= lo && refined <= hi {
        refined
    } else {
        t
    }
}
