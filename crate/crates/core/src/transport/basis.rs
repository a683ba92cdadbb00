//! Total-degree tensor bases of probabilists' Hermite polynomials.

use serde::{Deserialize, Serialize};

/// `He_0(t) .. He_degree(t)` via `He_{n+1} = t He_n − n He_{n−1}`.
pub fn hermite_values(t: f64, degree: usize, out: &mut Vec<f64>) {
    out.clear();
    out.push(1.0);
    if degree == 0 {
        return;
    }
    out.push(t);
    for n in 1..degree {
        let next = t * out[n] - n as f64 * out[n - 1];
        out.push(next);
    }
}

/// All multi-indices in `dim` variables with total degree at most `degree`,
/// ordered by total degree then lexicographically (later variables first).
pub fn total_degree_indices(dim: usize, degree: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    for total in 0..=degree {
        let mut current = vec![0u32; dim];
        push_with_total(&mut out, &mut current, 0, total as u32);
    }
    out
}

fn push_with_total(out: &mut Vec<Vec<u32>>, current: &mut [u32], pos: usize, remaining: u32) {
    if pos + 1 == current.len() {
        current[pos] = remaining;
        out.push(current.to_vec());
        current[pos] = 0;
        return;
    }
    for v in (0..=remaining).rev() {
        current[pos] = v;
        push_with_total(out, current, pos + 1, remaining - v);
    }
    current[pos] = 0;
}

/// Linear combination of Hermite tensor products. The last variable is the
/// one the component must be monotone in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialExpansion {
    pub dim: usize,
    pub multi_indices: Vec<Vec<u32>>,
    pub coefficients: Vec<f64>,
}

impl PolynomialExpansion {
    pub fn new(dim: usize, multi_indices: Vec<Vec<u32>>, coefficients: Vec<f64>) -> crate::Result<Self> {
        use crate::Error;
        if multi_indices.len() != coefficients.len() {
            return Err(Error::invariant(
                "coefficients",
                format!("{} coefficients for {} multi-indices", coefficients.len(), multi_indices.len()),
            ));
        }
        if let Some(bad) = multi_indices.iter().position(|a| a.len() != dim) {
            return Err(Error::invariant("multi_indices", format!("entry {bad} does not have {dim} entries")));
        }
        let mut sorted = multi_indices.clone();
        sorted.sort();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invariant("multi_indices", "duplicate multi-index"));
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::invariant("coefficients", "non-finite coefficient"));
        }
        Ok(Self {
            dim,
            multi_indices,
            coefficients,
        })
    }

    /// `T(z) = z_last` on the full total-degree basis.
    pub fn identity(dim: usize, degree: usize) -> Self {
        let multi_indices = total_degree_indices(dim, degree.max(1));
        let coefficients = multi_indices
            .iter()
            .map(|a| {
                let last = a[dim - 1] == 1 && a[..dim - 1].iter().all(|&v| v == 0);
                if last {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        Self {
            dim,
            multi_indices,
            coefficients,
        }
    }

    pub fn degree(&self) -> usize {
        self.multi_indices
            .iter()
            .map(|a| a.iter().sum::<u32>() as usize)
            .max()
            .unwrap_or(0)
    }

    pub fn max_degree_in(&self, var: usize) -> usize {
        self.multi_indices.iter().map(|a| a[var] as usize).max().unwrap_or(0)
    }

    /// Collapses the expansion to a univariate Hermite series in the last
    /// variable with the leading variables fixed at `prefix`.
    pub fn conditional(&self, prefix: &[f64]) -> Conditional {
        debug_assert_eq!(prefix.len() + 1, self.dim);
        let last = self.dim - 1;
        let deg = self.degree();
        let mut he: Vec<Vec<f64>> = Vec::with_capacity(prefix.len());
        let mut buf = Vec::new();
        for &z in prefix {
            hermite_values(z, deg, &mut buf);
            he.push(buf.clone());
        }
        let mut coeffs = vec![0.0; self.max_degree_in(last) + 1];
        for (alpha, c) in self.multi_indices.iter().zip(&self.coefficients) {
            let mut w = *c;
            for (j, &a) in alpha[..last].iter().enumerate() {
                w *= he[j][a as usize];
            }
            coeffs[alpha[last] as usize] += w;
        }
        Conditional { coeffs }
    }

    pub fn evaluate(&self, z: &[f64]) -> f64 {
        self.conditional(&z[..self.dim - 1]).value(z[self.dim - 1])
    }

    /// Partial derivative in the last variable.
    pub fn derivative(&self, z: &[f64]) -> f64 {
        self.conditional(&z[..self.dim - 1]).derivative(z[self.dim - 1])
    }

    /// Monomial coefficients `a_n` with `T(z) = Σ a_n z^n`, for `dim == 1`.
    pub fn monomial_coefficients(&self) -> Option<Vec<f64>> {
        if self.dim != 1 {
            return None;
        }
        let deg = self.degree();
        let mut out = vec![0.0; deg + 1];
        // Monomial expansions of He_n by the same three-term recurrence.
        let mut prev: Vec<f64> = vec![1.0];
        let mut cur: Vec<f64> = vec![0.0, 1.0];
        let mut table = vec![prev.clone()];
        if deg >= 1 {
            table.push(cur.clone());
        }
        for n in 1..deg {
            let mut next = vec![0.0; n + 2];
            for (k, v) in cur.iter().enumerate() {
                next[k + 1] += v;
            }
            for (k, v) in prev.iter().enumerate() {
                next[k] -= n as f64 * v;
            }
            prev = cur;
            cur = next;
            table.push(cur.clone());
        }
        for (alpha, c) in self.multi_indices.iter().zip(&self.coefficients) {
            for (k, v) in table[alpha[0] as usize].iter().enumerate() {
                out[k] += c * v;
            }
        }
        Some(out)
    }
}

/// Univariate Hermite series `Σ b_n He_n(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conditional {
    pub coeffs: Vec<f64>,
}

impl Conditional {
    pub fn value(&self, t: f64) -> f64 {
        // Clenshaw recurrence for He_n.
        let n = self.coeffs.len();
        let (mut b1, mut b2) = (0.0, 0.0);
        for k in (0..n).rev() {
            let b0 = self.coeffs[k] + t * b1 - (k + 1) as f64 * b2;
            b2 = b1;
            b1 = b0;
        }
        b1
    }

    /// Uses `He_n' = n He_{n-1}`.
    pub fn derivative(&self, t: f64) -> f64 {
        let shifted: Vec<f64> = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(n, c)| n as f64 * c)
            .collect();
        Conditional { coeffs: shifted }.value(t)
    }
}
