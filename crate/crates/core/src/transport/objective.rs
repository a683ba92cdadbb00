//! Maximum-likelihood objective for one map component and its Newton solver.
//!
//! With `T(z) = Φ(z)·c` and `∂T/∂z_last = Ψ(z)·c`, the sample objective is
//!
//! ```text
//! J(c) = (1/M) Σ_m [ (Φ_m·c)² / 2 − log(Ψ_m·c) ] + ridge · ‖c_nonconstant‖²
//! ```
//!
//! which is convex on `{c : Ψ_m·c > 0 ∀m}`. The log term is a barrier, so a
//! feasible start and a feasibility-preserving line search keep every iterate
//! monotone at the samples.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::basis::{hermite_values, total_degree_indices, PolynomialExpansion};
use crate::error::{Error, Result};

pub const DEFAULT_RIDGE: f64 = 1e-4;
const GRAD_TOL: f64 = 1e-8;
const MAX_ITERS: usize = 200;

/// Design matrices for one component over a fixed sample set.
#[derive(Debug, Clone)]
pub struct ComponentObjective {
    multi_indices: Vec<Vec<u32>>,
    /// `M × K` basis values.
    phi: DMatrix<f64>,
    /// `M × K` derivatives of the basis in the last variable.
    dphi: DMatrix<f64>,
    /// `(1/M) ΦᵀΦ`, the constant part of the Hessian.
    gram: DMatrix<f64>,
    ridge: f64,
    nonconstant: Vec<bool>,
}

impl ComponentObjective {
    /// `samples[j]` holds variable `j` over all `M` samples; the last entry is
    /// the variable the component is monotone in.
    pub fn new(samples: &[Vec<f64>], degree: usize, ridge: f64) -> Result<Self> {
        let dim = samples.len();
        if dim == 0 {
            return Err(Error::Config("component needs at least one variable".into()));
        }
        let m = samples[0].len();
        if samples.iter().any(|s| s.len() != m) {
            return Err(Error::Config("sample columns differ in length".into()));
        }
        let degree = degree.max(1);
        let multi_indices = total_degree_indices(dim, degree);
        let k = multi_indices.len();
        let mut phi = DMatrix::zeros(m, k);
        let mut dphi = DMatrix::zeros(m, k);
        let mut he: Vec<Vec<f64>> = vec![Vec::new(); dim];
        for row in 0..m {
            for (j, col) in samples.iter().enumerate() {
                hermite_values(col[row], degree, &mut he[j]);
            }
            let last = dim - 1;
            for (b, alpha) in multi_indices.iter().enumerate() {
                let mut lead = 1.0;
                for j in 0..last {
                    lead *= he[j][alpha[j] as usize];
                }
                let a = alpha[last] as usize;
                phi[(row, b)] = lead * he[last][a];
                if a > 0 {
                    dphi[(row, b)] = lead * a as f64 * he[last][a - 1];
                }
            }
        }
        let gram = phi.tr_mul(&phi) / m as f64;
        let nonconstant = multi_indices.iter().map(|a| a.iter().any(|&v| v > 0)).collect();
        Ok(Self {
            multi_indices,
            phi,
            dphi,
            gram,
            ridge,
            nonconstant,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.phi.nrows()
    }

    pub fn n_coefficients(&self) -> usize {
        self.phi.ncols()
    }

    pub fn multi_indices(&self) -> &[Vec<u32>] {
        &self.multi_indices
    }

    /// Coefficients of `T(z) = z_last`, feasible by construction.
    pub fn identity_coefficients(&self) -> DVector<f64> {
        let dim = self.multi_indices[0].len();
        DVector::from_iterator(
            self.n_coefficients(),
            self.multi_indices.iter().map(|a| {
                if a[dim - 1] == 1 && a[..dim - 1].iter().all(|&v| v == 0) {
                    1.0
                } else {
                    0.0
                }
            }),
        )
    }

    /// Monotonicity slopes `Ψ·c` at every sample.
    pub fn slopes(&self, c: &DVector<f64>) -> DVector<f64> {
        &self.dphi * c
    }

    pub fn is_feasible(&self, c: &DVector<f64>) -> bool {
        self.slopes(c).iter().all(|s| *s > 0.0)
    }

    fn ridge_term(&self, c: &DVector<f64>) -> f64 {
        let ss: f64 = c
            .iter()
            .zip(&self.nonconstant)
            .filter(|(_, nc)| **nc)
            .map(|(v, _)| v * v)
            .sum();
        self.ridge * ss
    }

    /// Objective value, `+∞` outside the feasible set.
    pub fn value(&self, c: &DVector<f64>) -> f64 {
        let t = &self.phi * c;
        let s = self.slopes(c);
        if s.iter().any(|v| !(*v > 0.0)) {
            return f64::INFINITY;
        }
        let m = self.n_samples() as f64;
        let sum: f64 = t.iter().zip(s.iter()).map(|(a, b)| 0.5 * a * a - b.ln()).sum();
        sum / m + self.ridge_term(c)
    }

    pub fn gradient(&self, c: &DVector<f64>) -> DVector<f64> {
        let m = self.n_samples() as f64;
        let t = &self.phi * c;
        let inv_s = self.slopes(c).map(|v| 1.0 / v);
        let mut g = (self.phi.tr_mul(&t) - self.dphi.tr_mul(&inv_s)) / m;
        for (i, nc) in self.nonconstant.iter().enumerate() {
            if *nc {
                g[i] += 2.0 * self.ridge * c[i];
            }
        }
        g
    }

    pub fn hessian(&self, c: &DVector<f64>) -> DMatrix<f64> {
        let m = self.n_samples() as f64;
        let s = self.slopes(c);
        let mut scaled = self.dphi.clone();
        for (mut row, sv) in scaled.row_iter_mut().zip(s.iter()) {
            row /= *sv;
        }
        let mut h = &self.gram + scaled.tr_mul(&scaled) / m;
        for (i, nc) in self.nonconstant.iter().enumerate() {
            if *nc {
                h[(i, i)] += 2.0 * self.ridge;
            }
        }
        h
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub objective: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Asymptotic standard errors `sqrt(diag(H⁻¹) / M)`.
    pub standard_errors: Vec<f64>,
    pub min_slope: f64,
}

#[derive(Debug, Clone)]
pub struct FittedComponent {
    pub expansion: PolynomialExpansion,
    pub diagnostics: FitDiagnostics,
}

/// Minimizes the component objective by damped Newton from the identity.
pub fn fit_component(samples: &[Vec<f64>], degree: usize, ridge: f64) -> Result<FittedComponent> {
    let obj = ComponentObjective::new(samples, degree, ridge)?;
    let (m, k) = (obj.n_samples(), obj.n_coefficients());
    if m < 10 * k {
        return Err(Error::Config(format!(
            "{m} samples are too few for {k} coefficients (need at least {})",
            10 * k
        )));
    }
    let mut c = obj.identity_coefficients();
    if !obj.is_feasible(&c) {
        return Err(Error::Internal("identity initialization is infeasible".into()));
    }
    let mut f = obj.value(&c);
    let mut iterations = 0;
    let mut converged = false;
    let mut g = obj.gradient(&c);
    let mut h = obj.hessian(&c);
    while iterations < MAX_ITERS {
        if g.amax() < GRAD_TOL {
            converged = true;
            break;
        }
        iterations += 1;
        let chol = h.clone().cholesky().ok_or_else(|| Error::Conditioning {
            condition: condition_number(&h),
        })?;
        let step = -chol.solve(&g);
        let slope_dir = obj.slopes(&step);
        let s = obj.slopes(&c);
        let mut alpha_max = f64::INFINITY;
        for (sv, dv) in s.iter().zip(slope_dir.iter()) {
            if *dv < 0.0 {
                alpha_max = alpha_max.min(-sv / dv);
            }
        }
        let mut alpha = 1.0f64.min(0.99 * alpha_max);
        let descent = g.dot(&step);
        let mut accepted = false;
        if -descent < 1e-12 * (1.0 + f.abs()) {
            // Decrease is below rounding in the objective; judge by the gradient.
            let trial = &c + alpha * &step;
            if obj.is_feasible(&trial) && obj.gradient(&trial).amax() < g.amax() {
                f = obj.value(&trial);
                c = trial;
                accepted = true;
            }
        } else {
            for _ in 0..60 {
                let trial = &c + alpha * &step;
                let ft = obj.value(&trial);
                if ft.is_finite() && ft <= f + 1e-4 * alpha * descent {
                    c = trial;
                    f = ft;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
        }
        g = obj.gradient(&c);
        h = obj.hessian(&c);
        if !accepted {
            // No representable decrease left; accept the current point.
            converged = g.amax() < 1e-6;
            break;
        }
    }
    if g.amax() < GRAD_TOL {
        converged = true;
    }
    let slopes = obj.slopes(&c);
    let min_slope = slopes.min();
    if !(min_slope > 0.0) {
        return Err(Error::Internal("fitted component lost monotonicity at a sample".into()));
    }
    let standard_errors = match h.clone().cholesky() {
        Some(ch) => {
            let inv = ch.inverse();
            (0..k).map(|i| (inv[(i, i)] / m as f64).sqrt()).collect()
        }
        None => vec![f64::NAN; k],
    };
    let expansion = PolynomialExpansion::new(samples.len(), obj.multi_indices.clone(), c.iter().copied().collect())?;
    Ok(FittedComponent {
        expansion,
        diagnostics: FitDiagnostics {
            objective: f,
            gradient_norm: g.amax(),
            iterations,
            converged,
            standard_errors,
            min_slope,
        },
    })
}

fn condition_number(h: &DMatrix<f64>) -> f64 {
    let eig = nalgebra::SymmetricEigen::new(h.clone());
    let max = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
    max / min
}
