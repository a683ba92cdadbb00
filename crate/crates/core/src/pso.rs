//! Box-constrained global particle swarm optimizer.

use rand::Rng;
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsoConfig {
    pub swarm: usize,
    pub iterations: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    /// Velocity limit as a fraction of each dimension's range.
    pub max_velocity: f64,
    pub seed: u64,
}

impl Default for PsoConfig {
    fn default() -> Self {
        Self {
            swarm: 40,
            iterations: 200,
            inertia: 0.7,
            cognitive: 1.5,
            social: 1.5,
            max_velocity: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsoResult {
    pub best: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
}

/// Minimizes `f` over the box `[lower, upper]`.
///
/// All random draws happen sequentially from one seeded stream; objective
/// evaluations run in parallel but cannot affect the draws, so the result is
/// independent of the thread count.
pub fn minimize<F>(f: F, lower: &[f64], upper: &[f64], cfg: &PsoConfig) -> PsoResult
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    minimize_from(f, lower, upper, cfg, &[])
}

/// As [`minimize`], with the first particles placed at `starts` (clamped to
/// the box) instead of random positions. The random stream is unchanged.
pub fn minimize_from<F>(f: F, lower: &[f64], upper: &[f64], cfg: &PsoConfig, starts: &[Vec<f64>]) -> PsoResult
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let dim = lower.len();
    assert_eq!(dim, upper.len());
    let mut rng = crate::seed::rng(cfg.seed);
    let range: Vec<f64> = lower.iter().zip(upper).map(|(l, u)| u - l).collect();
    let vmax: Vec<f64> = range.iter().map(|r| r * cfg.max_velocity).collect();

    let mut pos: Vec<Vec<f64>> = (0..cfg.swarm)
        .map(|_| (0..dim).map(|d| lower[d] + rng.random::<f64>() * range[d]).collect())
        .collect();
    for (p, s) in pos.iter_mut().zip(starts) {
        for d in 0..dim {
            p[d] = s[d].clamp(lower[d], upper[d]);
        }
    }
    let mut vel: Vec<Vec<f64>> = (0..cfg.swarm)
        .map(|_| (0..dim).map(|d| (rng.random::<f64>() * 2.0 - 1.0) * vmax[d] * 0.1).collect())
        .collect();

    let eval = |p: &[Vec<f64>]| -> Vec<f64> {
        p.par_iter()
            .map(|x| {
                let v = f(x);
                if v.is_nan() {
                    f64::INFINITY
                } else {
                    v
                }
            })
            .collect()
    };

    let mut values = eval(&pos);
    let mut evaluations = cfg.swarm;
    let mut pbest = pos.clone();
    let mut pbest_val = values.clone();
    let (mut gbest, mut gbest_val) = best_of(&pbest, &pbest_val);

    for _ in 0..cfg.iterations {
        for i in 0..cfg.swarm {
            for d in 0..dim {
                let r1: f64 = rng.random();
                let r2: f64 = rng.random();
                let v = cfg.inertia * vel[i][d]
                    + cfg.cognitive * r1 * (pbest[i][d] - pos[i][d])
                    + cfg.social * r2 * (gbest[d] - pos[i][d]);
                vel[i][d] = v.clamp(-vmax[d], vmax[d]);
                let x = pos[i][d] + vel[i][d];
                if x < lower[d] {
                    pos[i][d] = lower[d];
                    vel[i][d] = 0.0;
                } else if x > upper[d] {
                    pos[i][d] = upper[d];
                    vel[i][d] = 0.0;
                } else {
                    pos[i][d] = x;
                }
            }
        }
        values = eval(&pos);
        evaluations += cfg.swarm;
        for i in 0..cfg.swarm {
            if values[i] < pbest_val[i] {
                pbest_val[i] = values[i];
                pbest[i].clone_from(&pos[i]);
            }
        }
        let (b, bv) = best_of(&pbest, &pbest_val);
        if bv < gbest_val {
            gbest = b;
            gbest_val = bv;
        }
    }
    PsoResult {
        best: gbest,
        value: gbest_val,
        evaluations,
    }
}

fn best_of(points: &[Vec<f64>], values: &[f64]) -> (Vec<f64>, f64) {
    let mut idx = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[idx] {
            idx = i;
        }
    }
    (points[idx].clone(), values[idx])
}
