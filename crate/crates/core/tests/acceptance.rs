//! End-to-end acceptance checks. Prints one line per criterion and exits
//! nonzero if any fails.

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use chaosmodel::baseline_rpm::{build_rpm, from_density_fn, realize};
use chaosmodel::generators::{simulate_lorenz96, synth_heavy_tail, Lorenz96Config};
use chaosmodel::oscillator::{fit_oscillator, search_bounds, Initial, Trajectory};
use chaosmodel::pso::PsoConfig;
use chaosmodel::seed::rng;
use chaosmodel::spectral::{relative_l1, spectral_difference, welch_psd, WelchOptions};
use chaosmodel::spod::{
    compute_spod, gramian, inverse_gramian, project_onto, reconstruct, save_snapshots, separate_mixed_spectra,
    sidecar_path, SnapshotEnsemble,
};
use chaosmodel::surrogate::{fit_surrogate, generate, model_from_json, model_to_json, SurrogateOptions};
use chaosmodel::timeseries::{estimate_pdf, mean_var, moments, PdfOptions};
use chaosmodel::transport::{fit_map, ComponentObjective, MapOptions, DEFAULT_RIDGE};
use chaosmodel::{OscillatorParams, TimeSeries};

const LIMIT: Duration = Duration::from_secs(300);

/// Collects named sub-checks for one criterion.
#[derive(Default)]
struct Checks {
    items: Vec<(String, bool)>,
    notes: Vec<String>,
}

impl Checks {
    fn check(&mut self, ok: bool, detail: impl Into<String>) {
        self.items.push((detail.into(), ok));
    }

    /// Context that does not count toward the verdict.
    fn note(&mut self, detail: impl Into<String>) {
        self.notes.push(detail.into());
    }

    fn passed(&self) -> bool {
        !self.items.is_empty() && self.items.iter().all(|(_, ok)| *ok)
    }

    fn summary(&self) -> String {
        self.items
            .iter()
            .map(|(d, ok)| if *ok { d.clone() } else { format!("!{d}") })
            .chain(self.notes.iter().map(|n| format!("({n})")))
            .collect::<Vec<_>>()
            .join("; ")
    }
}

type Outcome = Result<Checks, String>;

fn normals(n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..n).map(|_| r.sample(StandardNormal)).collect()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn lorenz_x1(seed: u64, duration: f64) -> Result<TimeSeries, String> {
    let cfg = Lorenz96Config {
        duration,
        seed,
        ..Default::default()
    };
    simulate_lorenz96(&cfg, &[1]).map_err(|e| e.to_string())
}

fn lorenz_reproduction() -> Outcome {
    let start = Instant::now();
    let truth = lorenz_x1(0, 1000.0)?;
    let model = fit_surrogate(&truth, &SurrogateOptions::new(3, 0)).map_err(|e| e.to_string())?;
    let surrogate = generate(&model, 10_000.0, 0).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let p = model.oscillators[0];
    let mut c = Checks::default();

    for (name, got, want) in [("beta", p.beta(), 4.73), ("k", p.k(), 26.26), ("sqrt(2D)", p.forcing(), 15.76)] {
        c.check(rel(got, want) <= 0.25, format!("{name}={got:.3} (ref {want}, {:+.1}%)", 100.0 * (got / want - 1.0)));
    }
    c.check(p.d() == p.k() * p.beta(), format!("D={:.4} == k*beta", p.d()));

    let st = moments(truth.channel(0)).map_err(|e| e.to_string())?.skewness;
    let ss = moments(surrogate.channel(0)).map_err(|e| e.to_string())?.skewness;
    c.check((st - ss).abs() <= 0.15, format!("skew truth {st:.3} surrogate {ss:.3}"));

    let q = model.map.forward_series(&truth).map_err(|e| e.to_string())?;
    let fit = &model.provenance.channels[0];
    let data = welch_psd(q.channel(0), q.dt(), &WelchOptions::new(fit.resolution)).map_err(|e| e.to_string())?;
    let (lo, hi) = search_bounds(data.omega_s);
    let n = 100;
    let mut grid_min = f64::INFINITY;
    for i in 0..n {
        for j in 0..n {
            let lk = lo[0] + (hi[0] - lo[0]) * i as f64 / (n - 1) as f64;
            let lb = lo[1] + (hi[1] - lo[1]) * j as f64 / (n - 1) as f64;
            let op = OscillatorParams::new(lk.exp(), lb.exp()).map_err(|e| e.to_string())?;
            let v = spectral_difference(&op.analytic_psd(&data.omega, data.omega_s), &data).map_err(|e| e.to_string())?;
            grid_min = grid_min.min(v);
        }
    }
    let delta = spectral_difference(&p.analytic_psd(&data.omega, data.omega_s), &data).map_err(|e| e.to_string())?;
    c.check(delta <= 1.1 * grid_min, format!("delta {delta:.4} vs grid min {grid_min:.4}"));
    c.check(elapsed < LIMIT, format!("pipeline {:.1}s", elapsed.as_secs_f64()));
    Ok(c)
}

fn paper_parameters() -> Outcome {
    let mut c = Checks::default();
    let p = OscillatorParams::new(26.26, 4.73).map_err(|e| e.to_string())?;
    c.check(
        (p.d() * 100.0).round() / 100.0 == 124.21,
        format!("26.26*4.73 = {:.4}", p.d()),
    );
    let f = (2.0 * 124.21f64).sqrt();
    c.check((f * 100.0).round() / 100.0 == 15.76, format!("sqrt(2*124.21) = {f:.4}"));
    c.check(
        (p.forcing() * 100.0).round() / 100.0 == 15.76,
        format!("sqrt(2kb) = {:.4}", p.forcing()),
    );
    c.check(OscillatorParams::from_triple(26.26, 4.73, p.d()).is_ok(), "triple (26.26, 4.73, kb) accepted");
    c.check(
        OscillatorParams::from_triple(26.26, 4.73, p.d() * (1.0 + 5e-10)).is_ok(),
        "5e-10 relative drift accepted",
    );
    let rejected = [2e-9, -2e-9, 1e-6, 1.6e-6]
        .iter()
        .all(|e| OscillatorParams::from_triple(26.26, 4.73, p.d() * (1.0 + e)).is_err());
    c.check(rejected, "drifts of 2e-9 and above rejected");

    // Serializer path: a model file carrying the triple, then a tampered D.
    let ts = TimeSeries::single(normals(4000, 3), 0.1, "y").map_err(|e| e.to_string())?;
    let mut model = fit_surrogate(&ts, &SurrogateOptions::new(1, 0)).map_err(|e| e.to_string())?;
    model.oscillators[0] = p;
    let text = model_to_json(&model).map_err(|e| e.to_string())?;
    let back = model_from_json(&text).map_err(|e| e.to_string())?;
    c.check(back.oscillators[0] == p, "model file round trip keeps (k, beta, D)");
    let d_text = format!("{:?}", p.d());
    let tampered = text.replacen(&d_text, &format!("{:?}", p.d() * (1.0 + 1e-8)), 1);
    c.check(tampered != text && model_from_json(&tampered).is_err(), "model file with D off by 1e-8 rejected");
    Ok(c)
}

fn synthetic_5d(m: usize, seed: u64) -> Vec<Vec<f64>> {
    let z: Vec<Vec<f64>> = (0..5).map(|i| normals(m, seed * 10 + i)).collect();
    let mut y = vec![vec![0.0; m]; 5];
    for t in 0..m {
        let y1 = z[0][t];
        let y2 = z[1][t] + 0.4 * (y1 * y1 - 1.0);
        let y3 = z[2][t] + 0.3 * y1 * y2 - 0.2 * y2;
        let y4 = 0.7 * z[3][t] + 0.25 * y3 * y3 + 0.1 * y1;
        let y5 = 0.8 * z[4][t] + 0.25 * y4 * y1 + 0.2 * y3;
        for (c, v) in [y1, y2, y3, y4, y5].into_iter().enumerate() {
            y[c][t] = v;
        }
    }
    y
}

fn transport_correctness() -> Outcome {
    let mut c = Checks::default();
    let y = synthetic_5d(25_000, 1);
    let ts = TimeSeries::from_channels(y.clone(), 1.0).map_err(|e| e.to_string())?;
    let map = fit_map(&ts, &MapOptions::new(2)).map_err(|e| e.to_string())?;

    let mut worst = 0.0f64;
    let mut clamped = 0;
    for t in 0..10_000 {
        let row: Vec<f64> = (0..5).map(|i| y[i][t]).collect();
        let inv = map.inverse(&map.forward(&row));
        clamped += inv.clamped as usize;
        for (a, b) in inv.y.iter().zip(&row) {
            worst = worst.max((a - b).abs());
        }
    }
    c.check(worst <= 1e-8 && clamped == 0, format!("inverse(forward) max err {worst:.1e}, clamped {clamped}"));

    let q = map.forward_series(&ts).map_err(|e| e.to_string())?;
    let mut worst_m = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..5 {
        let mo = moments(q.channel(i)).map_err(|e| e.to_string())?;
        worst_m.0 = worst_m.0.max(mo.mean.abs());
        worst_m.1 = worst_m.1.max((mo.variance - 1.0).abs());
        worst_m.2 = worst_m.2.max(mo.skewness.abs());
    }
    c.check(
        worst_m.0 < 0.02 && worst_m.1 < 0.05 && worst_m.2 < 0.1,
        format!("worst |mean| {:.1e} |var-1| {:.1e} |skew| {:.3}", worst_m.0, worst_m.1, worst_m.2),
    );

    // Derivative and convexity checks on the last (5-variable) component.
    let cols: Vec<Vec<f64>> = y
        .iter()
        .map(|col| {
            let (m, v) = mean_var(col);
            col.iter().map(|x| (x - m) / v.sqrt()).collect()
        })
        .collect();
    let obj = ComponentObjective::new(&cols, 2, DEFAULT_RIDGE).map_err(|e| e.to_string())?;
    let mut r = rng(11);
    let base = obj.identity_coefficients();
    let mut draw = || loop {
        let mut cand = base.clone();
        let scale = 0.05 * r.random::<f64>();
        for v in cand.iter_mut() {
            *v += scale * r.sample::<f64, _>(StandardNormal);
        }
        if obj.is_feasible(&cand) {
            return cand;
        }
    };
    let mut worst_g = 0.0f64;
    let mut worst_h = 0.0f64;
    for _ in 0..3 {
        let cc = draw();
        let g = obj.gradient(&cc);
        let h = obj.hessian(&cc);
        let eps = 1e-5;
        let mut fd_g = DVector::zeros(cc.len());
        let mut fd_h = DMatrix::zeros(cc.len(), cc.len());
        for i in 0..cc.len() {
            let mut up = cc.clone();
            let mut dn = cc.clone();
            up[i] += eps;
            dn[i] -= eps;
            fd_g[i] = (obj.value(&up) - obj.value(&dn)) / (2.0 * eps);
            fd_h.set_column(i, &((obj.gradient(&up) - obj.gradient(&dn)) / (2.0 * eps)));
        }
        worst_g = worst_g.max((&fd_g - &g).norm() / g.norm());
        worst_h = worst_h.max((&fd_h - &h).norm() / h.norm());
    }
    c.check(worst_g <= 1e-5, format!("gradient FD rel err {worst_g:.1e}"));
    c.check(worst_h <= 1e-5, format!("Hessian FD rel err {worst_h:.1e}"));

    let mut min_ratio = f64::INFINITY;
    for _ in 0..100 {
        let h = obj.hessian(&draw());
        let eig = h.symmetric_eigen().eigenvalues;
        let lo = eig.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        min_ratio = min_ratio.min(lo / hi);
    }
    c.check(min_ratio >= -1e-12, format!("min eig/max eig over 100 points {min_ratio:.2e}"));
    Ok(c)
}

/// Welford variance of `q` and `q̇` along a streamed trajectory.
fn streamed_variances(p: &OscillatorParams, duration: f64, dt: f64, seed: u64) -> Result<(f64, f64), String> {
    let mut n = 0.0;
    let (mut mq, mut sq, mut mv, mut sv) = (0.0, 0.0, 0.0, 0.0);
    for s in Trajectory::for_params(p, duration, dt, seed, Initial::Stationary).map_err(|e| e.to_string())? {
        n += 1.0;
        let dq = s.q - mq;
        mq += dq / n;
        sq += dq * (s.q - mq);
        let dv = s.qdot - mv;
        mv += dv / n;
        sv += dv * (s.qdot - mv);
    }
    Ok((sq / (n - 1.0), sv / (n - 1.0)))
}

fn oscillator_exactness() -> Outcome {
    let mut c = Checks::default();
    let p = OscillatorParams::new(26.26, 4.73).map_err(|e| e.to_string())?;
    let (vq, vv) = streamed_variances(&p, 1e4, 0.01, 7)?;
    c.check(rel(vq, 1.0) <= 0.03, format!("Var(q)={vq:.4}"));
    c.check(rel(vv, p.k()) <= 0.03, format!("Var(qdot)={vv:.3} (k={})", p.k()));

    let q = p.simulate(1e4, 0.01, 7, Initial::Stationary).map_err(|e| e.to_string())?;
    let est = welch_psd(&q, 0.01, &WelchOptions::new(4096)).map_err(|e| e.to_string())?;
    let exact = p.analytic_psd(&est.omega, est.omega_s);
    let l1 = relative_l1(&est, &exact);
    c.check(l1 < 0.10, format!("Welch(4096) vs analytic L1 {l1:.4}"));

    let (coarse, _) = streamed_variances(&p, 1e6, 0.01, 21)?;
    let (fine, _) = streamed_variances(&p, 1e6, 0.005, 22)?;
    let change = rel(fine, coarse);
    c.check(change < 0.01, format!("dt-halving variance change {:.3}%", 100.0 * change));
    Ok(c)
}

fn spectral_fit_oracle() -> Outcome {
    let mut c = Checks::default();
    let p = OscillatorParams::from_triple(10.0, 1.0, 10.0).map_err(|e| e.to_string())?;
    let dt = 0.05;
    for seed in 0..5u64 {
        let q = p.simulate(1e4, dt, 100 + seed, Initial::Stationary).map_err(|e| e.to_string())?;
        let psd = welch_psd(&q, dt, &WelchOptions::for_len(q.len())).map_err(|e| e.to_string())?;
        let fit = fit_oscillator(&psd, &PsoConfig { seed, ..Default::default() }).map_err(|e| e.to_string())?;
        let (k, b) = (fit.params.k(), fit.params.beta());
        c.check(rel(k, 10.0) <= 0.1 && rel(b, 1.0) <= 0.1, format!("seed {seed}: k={k:.3} beta={b:.3}"));
    }
    Ok(c)
}

fn parseval() -> Outcome {
    let mut c = Checks::default();
    let nperseg = 256;
    let m = 64 * nperseg;
    let dt = 0.1;
    let white = normals(m, 1);
    let t = |i: usize| i as f64 * dt;
    let sine: Vec<f64> = (0..m).map(|i| 2.0 * (1.3 * t(i)).sin()).zip(normals(m, 2)).map(|(a, b)| a + 0.3 * b).collect();
    let mut ar = vec![0.0; m];
    let e = normals(m, 3);
    for i in 1..m {
        ar[i] = 0.9 * ar[i - 1] + e[i];
    }
    let osc = OscillatorParams::new(4.0, 0.5)
        .and_then(|p| p.simulate((m - 1) as f64 * dt, dt, 4, Initial::Stationary))
        .map_err(|e| e.to_string())?;
    let lorenz = lorenz_x1(3, (m - 1) as f64 * 0.1)?.channel(0).to_vec();
    for (name, x) in [("white", white), ("sine+noise", sine), ("ar1", ar), ("oscillator", osc), ("lorenz", lorenz)] {
        let s = welch_psd(&x, dt, &WelchOptions::new(nperseg)).map_err(|e| e.to_string())?;
        let (_, var) = mean_var(&x);
        let r = s.variance() / var - 1.0;
        c.check(r.abs() <= 0.05, format!("{name} {:+.2}%", 100.0 * r));
    }
    Ok(c)
}

fn rpm_baseline() -> Outcome {
    let mut c = Checks::default();
    let flat = from_density_fn(|_| 0.7, 500, 1).map_err(|e| e.to_string())?;
    let integral = 2.0 * PI * 0.7;
    c.check(rel(flat.variance(), integral) < 1e-12, format!("flat: sum a^2 = {:.12} vs {integral:.12}", flat.variance()));

    let truth = lorenz_x1(0, 1000.0)?;
    let y = truth.channel(0);
    let dt = truth.dt();
    let psd = welch_psd(y, dt, &WelchOptions::new(128)).map_err(|e| e.to_string())?;
    let model = build_rpm(&psd, 500, 0).map_err(|e| e.to_string())?;
    let riemann: f64 = model
        .widths()
        .iter()
        .zip(&model.omegas)
        .map(|(w, nu)| w * psd.interpolate(nu * model.omega_scale) * psd.omega_s / 2.0 / (2.0 * PI * PI))
        .sum();
    c.check(
        rel(model.variance(), riemann) < 1e-12,
        format!("lorenz: sum a^2 {:.6} = cell integral {riemann:.6} (record var {:.3})", model.variance(), psd.variance()),
    );

    let g = realize(&model, 100_000, dt);
    let s = welch_psd(&g, dt, &WelchOptions::new(128)).map_err(|e| e.to_string())?;
    let l1 = relative_l1(&s, &psd);
    c.check(l1 < 0.15, format!("realization PSD L1 {l1:.4}"));
    let mo = moments(&g).map_err(|e| e.to_string())?;
    let truth_skew = moments(y).map_err(|e| e.to_string())?.skewness;
    c.check(
        mo.skewness.abs() < 0.1 && mo.excess_kurtosis.abs() < 0.3,
        format!("n=500 skew {:.3} kurt {:.3} (truth skew {truth_skew:.3})", mo.skewness, mo.excess_kurtosis),
    );
    Ok(c)
}

fn spod_planted_mode() -> Outcome {
    let mut c = Checks::default();
    let (p, m, nperseg, dt) = (64usize, 16_384usize, 256usize, 0.1);
    let weights: Vec<f64> = (0..p).map(|i| (1.0 + 0.5 * (i as f64 * 0.3).sin()) / p as f64).collect();
    let mut phi: Vec<f64> = (0..p).map(|i| (2.0 * PI * i as f64 / p as f64).sin() + 0.3).collect();
    let norm = phi.iter().zip(&weights).map(|(v, w)| w * v * v).sum::<f64>().sqrt();
    phi.iter_mut().for_each(|v| *v /= norm);
    let bin = 20;
    let omega0 = 2.0 * PI * bin as f64 / (nperseg as f64 * dt);
    let mut r = rng(5);
    let data: Vec<Vec<f64>> = (0..p)
        .map(|i| {
            (0..m)
                .map(|t| phi[i] * (omega0 * t as f64 * dt).cos() + 0.5 * r.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    let ens = SnapshotEnsemble::new(data, weights.clone(), dt).map_err(|e| e.to_string())?;
    let basis = compute_spod(&ens, &WelchOptions::new(nperseg)).map_err(|e| e.to_string())?;
    let f = basis
        .omegas
        .iter()
        .position(|w| (w - omega0).abs() < 1e-9)
        .ok_or("planted frequency not on the grid")?;
    let lead = basis.modes[f].column(0);
    let align = lead
        .iter()
        .zip(&phi)
        .zip(&weights)
        .map(|((a, b), w)| a * w * *b)
        .sum::<num_complex::Complex64>()
        .norm();
    c.check(align > 0.95, format!("alignment {align:.4}"));
    let e = &basis.energies[f];
    let ratio = e[0] / e[1];
    c.check(ratio > 10.0, format!("energy ratio {ratio:.1}"));

    let mut worst = 0.0f64;
    for modes in &basis.modes {
        let wm = DMatrix::from_fn(p, modes.ncols(), |i, j| modes[(i, j)] * weights[i]);
        let g = modes.adjoint() * wm;
        let id = DMatrix::identity(g.nrows(), g.ncols());
        worst = worst.max((g - id).iter().map(|v| v.norm()).fold(0.0, f64::max));
    }
    c.check(worst <= 1e-8, format!("orthonormality err {worst:.1e}"));

    let x = ens.data()[3].clone();
    let single = SnapshotEnsemble::new(vec![x.clone()], vec![1.0], dt).map_err(|e| e.to_string())?;
    let sb = compute_spod(&single, &WelchOptions::new(nperseg)).map_err(|e| e.to_string())?;
    let w = welch_psd(&x, dt, &WelchOptions::new(nperseg)).map_err(|e| e.to_string())?;
    let err = sb
        .energies
        .iter()
        .zip(&w.values)
        .map(|(e, v)| (e.first().copied().unwrap_or(0.0) - v).abs() / v.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    c.check(err <= 1e-10, format!("single channel vs Welch rel err {err:.1e}"));
    Ok(c)
}

fn gramian_reconstruction() -> Outcome {
    let mut c = Checks::default();
    let p = 64;
    let ones = vec![1.0; p];
    let canonical = DMatrix::from_fn(p, 6, |i, j| if i == j * 3 { 1.0 } else { 0.0 });
    let hadamard = DMatrix::from_fn(p, 8, |i, j| {
        let sign = if (i & j).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
        sign / 8.0
    });
    for (name, modes) in [("canonical", canonical), ("hadamard", hadamard)] {
        let h = inverse_gramian(&gramian(&modes, &ones)).map_err(|e| e.to_string())?;
        c.check(h == DMatrix::identity(h.nrows(), h.ncols()), format!("{name}: H == I"));
    }

    let (p, n, m) = (50, 8, 400);
    let mut r = rng(9);
    let weights: Vec<f64> = (0..p).map(|_| 0.5 + r.random::<f64>()).collect();
    let modes = DMatrix::from_fn(p, n, |_, _| r.sample::<f64, _>(StandardNormal));
    let a = DMatrix::from_fn(n, m, |_, _| r.sample::<f64, _>(StandardNormal));
    let field = &modes * &a;
    let rows: Vec<Vec<f64>> = (0..p).map(|i| field.row(i).iter().copied().collect()).collect();
    let ens = SnapshotEnsemble::new(rows, weights.clone(), 0.1).map_err(|e| e.to_string())?;
    let names = (0..n).map(|j| format!("m{j}")).collect();
    let coords = project_onto(&ens, &modes, names).map_err(|e| e.to_string())?;
    let back = reconstruct(&coords, &modes, &weights).map_err(|e| e.to_string())?;
    let num: f64 = back
        .data()
        .iter()
        .zip(ens.data())
        .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)))
        .sum();
    let den: f64 = ens.data().iter().flatten().map(|v| v * v).sum();
    let err = (num / den).sqrt();
    c.check(err < 1e-10, format!("non-orthogonal reconstruction rel err {err:.1e}"));
    Ok(c)
}

fn mixed_spectra() -> Outcome {
    let mut c = Checks::default();
    let m = 8192;
    let dt = 0.1;
    let bin = 300;
    let noise = normals(m, 17);
    // Sinusoid energy A²/2 = 0.1 of the total, noise variance 0.9.
    let amp = (2.0 * 0.1f64).sqrt();
    let s: Vec<f64> = (0..m).map(|t| amp * (2.0 * PI * bin as f64 * t as f64 / m as f64 + 0.4).cos()).collect();
    let x: Vec<f64> = s.iter().zip(&noise).map(|(a, b)| 2.0 + a + 0.9f64.sqrt() * b).collect();
    let sep = separate_mixed_spectra(&x, dt, 0.01).map_err(|e| e.to_string())?;
    let es: f64 = s.iter().map(|v| v * v).sum();
    let along: f64 = sep.chaotic.iter().zip(&s).map(|(a, b)| a * b).sum();
    let retained = along * along / es / es;
    c.check(retained < 0.05, format!("sinusoid energy left in chaotic {:.2e}", retained));
    let miss: f64 = sep.periodic.iter().zip(&s).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / es;
    c.check(miss < 0.05, format!("periodic vs planted rel energy err {miss:.2e}, lines {}", sep.lines.len()));
    let add = x
        .iter()
        .enumerate()
        .map(|(t, v)| (v - sep.mean - sep.periodic[t] - sep.chaotic[t]).abs())
        .fold(0.0, f64::max);
    c.check(add <= 1e-9, format!("additivity err {add:.1e}"));
    Ok(c)
}

fn tail_extrapolation() -> Outcome {
    let mut c = Checks::default();
    let dt = 1.0;
    let train = synth_heavy_tail(9999.0, dt, 1).map_err(|e| e.to_string())?;
    let model = fit_surrogate(&train, &SurrogateOptions::new(3, 1)).map_err(|e| e.to_string())?;
    let sur = generate(&model, 999_999.0, 2).map_err(|e| e.to_string())?;
    let truth = synth_heavy_tail(999_999.0, dt, 3).map_err(|e| e.to_string())?;
    c.check(train.len() == 10_000 && sur.len() == 1_000_000, format!("train {} surrogate {}", train.len(), sur.len()));

    let mut sorted = truth.channel(0).to_vec();
    sorted.sort_by(f64::total_cmp);
    let q = |p: f64| sorted[((sorted.len() - 1) as f64 * p).round() as usize];
    let range = (q(0.001), q(0.999));
    let opts = PdfOptions {
        range: Some(range),
        ..Default::default()
    };
    let pt = estimate_pdf(truth.channel(0), &opts).map_err(|e| e.to_string())?;
    let ps = estimate_pdf(sur.channel(0), &opts).map_err(|e| e.to_string())?;
    let y = train.channel(0);
    let (tmin, tmax) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let mut inside = 0;
    let (mut beyond, mut beyond_inside) = (0, 0);
    for i in 0..pt.centers.len() {
        let ok = ps.density[i] > 0.0
            && ps.density[i].ln() >= pt.ci_lo[i].max(f64::MIN_POSITIVE).ln()
            && ps.density[i].ln() <= pt.ci_hi[i].ln();
        inside += ok as usize;
        if pt.centers[i] < tmin || pt.centers[i] > tmax {
            beyond += 1;
            beyond_inside += ok as usize;
        }
    }
    let frac = inside as f64 / pt.centers.len() as f64;
    let exact = synth_heavy_tail(999_999.0, dt, 4).map_err(|e| e.to_string())?;
    let pe = estimate_pdf(exact.channel(0), &opts).map_err(|e| e.to_string())?;
    let exact_inside = (0..pt.centers.len())
        .filter(|&i| pe.density[i] >= pt.ci_lo[i] && pe.density[i] <= pt.ci_hi[i])
        .count();
    let kurt = |x: &[f64]| moments(x).map(|m| m.excess_kurtosis).unwrap_or(f64::NAN);
    let qk = model.map.forward_series(&train).map(|q| kurt(q.channel(0))).unwrap_or(f64::NAN);
    c.check(
        frac >= 0.8,
        format!(
            "{inside}/{} bins in band over [{:.2}, {:.2}]; training range [{tmin:.2}, {tmax:.2}], {beyond_inside}/{beyond} beyond it",
            pt.centers.len(),
            range.0,
            range.1
        ),
    );
    c.note(format!("independent exact-generator record: {exact_inside}/{} bins in band", pt.centers.len()));
    c.note(format!(
        "excess kurtosis truth {:.2}, surrogate {:.2}, transformed training {qk:.2}",
        kurt(truth.channel(0)),
        kurt(sur.channel(0))
    ));
    Ok(c)
}

fn cavity_throughput() -> Outcome {
    let mut c = Checks::default();
    let m = 25_000;
    let mut y: Vec<Vec<f64>> = (0..10).map(|i| normals(m, 200 + i)).collect();
    for i in 1..10 {
        for t in 0..m {
            let prev = y[i - 1][t];
            y[i][t] += 0.3 * prev * prev - 0.2 * prev;
        }
    }
    let ts = TimeSeries::from_channels(y, 0.01).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let map = fit_map(&ts, &MapOptions::new(2)).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let converged = map
        .components
        .iter()
        .filter(|c| c.diagnostics.as_ref().is_some_and(|d| d.converged))
        .count();
    c.check(elapsed < LIMIT, format!("10-channel degree-2 fit {:.2}s", elapsed.as_secs_f64()));
    c.check(converged == 10, format!("{converged}/10 components converged"));
    Ok(c)
}

fn run_cli(dir: &Path, threads: usize, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_chaosmodel"))
        .current_dir(dir)
        .arg("--threads")
        .arg(threads.to_string())
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(())
}

fn cli_pipeline(dir: &Path, threads: usize) -> Result<(), String> {
    let steps: &[&[&str]] = &[
        &["gen-lorenz", "--T", "300", "--observe", "1,2,3", "--seed", "4", "--out", "lorenz.csv"],
        &["fit", "--input", "lorenz.csv", "--degree", "2", "--seed", "4", "--out", "model.json", "--report", "fit.json"],
        &["simulate", "--model", "model.json", "--T", "500", "--seed", "5", "--out", "sur.csv"],
        &["psd", "--input", "sur.csv", "--out", "psd.csv"],
        &["pdf", "--input", "sur.csv", "--channel", "x2", "--out", "pdf.csv"],
        &["acf", "--input", "lorenz.csv", "--max-lag", "50", "--out", "acf.csv"],
        &["rpm", "--psd", "psd.csv", "--m", "200", "--seed", "6", "--T", "300", "--out", "rpm.csv", "--report", "rpm.json"],
        &["separate", "--input", "lorenz.csv", "--out", "sep.csv"],
        &["rank-covariates", "--input", "lorenz.csv", "--target", "x1", "--covariates", "1", "--set-out", "set.csv", "--out", "rank.csv"],
        &["spod", "--input", "snap.bin", "--nperseg", "64", "--out", "basis"],
        &["project", "--input", "snap.bin", "--basis", "basis", "--top", "4", "--out", "coords.csv"],
        &["reconstruct", "--coords", "coords.csv", "--basis", "basis", "--top", "4", "--out", "recon.bin"],
    ];
    for s in steps {
        run_cli(dir, threads, s)?;
    }
    Ok(())
}

fn tree_files(dir: &Path, base: &Path, out: &mut Vec<(String, Vec<u8>)>) -> std::io::Result<()> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)?.collect::<std::io::Result<_>>()?;
    entries.sort_by_key(|e| e.path());
    for e in entries {
        let path = e.path();
        if path.is_dir() {
            tree_files(&path, base, out)?;
        } else {
            let name = path.strip_prefix(base).unwrap().display().to_string();
            out.push((name, std::fs::read(&path)?));
        }
    }
    Ok(())
}

fn determinism() -> Outcome {
    let mut c = Checks::default();
    let mut r = rng(31);
    let rows: Vec<Vec<f64>> = (0..12)
        .map(|i| {
            (0..512)
                .map(|t| (0.3 * t as f64 + i as f64 * 0.5).sin() + 0.2 * r.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    let ens = SnapshotEnsemble::new(rows, vec![1.0; 12], 0.1).map_err(|e| e.to_string())?;

    let mut trees = Vec::new();
    for threads in [1usize, 4, 1] {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let snap = dir.path().join("snap.bin");
        save_snapshots(&ens, &snap, &sidecar_path(&snap)).map_err(|e| e.to_string())?;
        cli_pipeline(dir.path(), threads)?;
        let mut files = Vec::new();
        tree_files(dir.path(), dir.path(), &mut files).map_err(|e| e.to_string())?;
        trees.push(files);
    }
    let n = trees[0].len();
    c.check(n >= 20, format!("{n} output files"));
    let same = |a: &Vec<(String, Vec<u8>)>, b: &Vec<(String, Vec<u8>)>| a == b;
    c.check(same(&trees[0], &trees[1]), "--threads 1 vs --threads 4 byte-identical");
    c.check(same(&trees[0], &trees[2]), "rerun byte-identical");
    Ok(c)
}

fn main() {
    let criteria: Vec<(&str, fn() -> Outcome)> = vec![
        ("1 lorenz96 reproduction", lorenz_reproduction),
        ("2 paper parameter consistency", paper_parameters),
        ("3 transport correctness", transport_correctness),
        ("4 oscillator exactness", oscillator_exactness),
        ("5 spectral fit oracle", spectral_fit_oracle),
        ("6 parseval", parseval),
        ("7 random phase baseline", rpm_baseline),
        ("8 spod planted mode", spod_planted_mode),
        ("9 gramian reconstruction", gramian_reconstruction),
        ("10 mixed spectra separation", mixed_spectra),
        ("11 tail extrapolation", tail_extrapolation),
        ("12 cavity-scale throughput", cavity_throughput),
        ("13 cli determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (name, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let (ok, detail) = match f() {
            Ok(c) => (c.passed(), c.summary()),
            Err(e) => (false, format!("error: {e}")),
        };
        failed += !ok as usize;
        println!(
            "[{}] {name} ({:.1}s): {detail}",
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {}/{ran} passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
