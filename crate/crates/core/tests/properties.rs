use nalgebra::DMatrix;
use proptest::prelude::*;

use chaosmodel::baseline_rpm::from_density_fn;
use chaosmodel::oscillator::Initial;
use chaosmodel::spectral::{cross_spectral_density, welch_psd, WelchOptions};
use chaosmodel::spod::{compute_spod, gramian, separate_mixed_spectra, SnapshotEnsemble};
use chaosmodel::timeseries::{autocorrelation, estimate_pdf, PdfOptions};
use chaosmodel::transport::{fit_map, MapOptions};
use chaosmodel::{OscillatorParams, TimeSeries};

fn series(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0f64..50.0, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn autocorrelation_is_bounded(x in series(20..200)) {
        prop_assume!(x.iter().any(|v| (v - x[0]).abs() > 1e-6));
        let r = autocorrelation(&x, x.len() / 2).unwrap();
        prop_assert_eq!(r[0], 1.0);
        prop_assert!(r.iter().all(|v| v.abs() <= 1.0 + 1e-12));
    }

    #[test]
    fn pdf_integrates_to_one(x in series(200..600), sigma in 0.0f64..4.0) {
        prop_assume!(x.iter().any(|v| (v - x[0]).abs() > 1e-6));
        let p = estimate_pdf(&x, &PdfOptions { bins: 40, smooth_sigma_bins: sigma, ..Default::default() }).unwrap();
        let raw: f64 = p.density_raw.iter().sum::<f64>() * p.bin_width;
        let smooth: f64 = p.density.iter().sum::<f64>() * p.bin_width;
        prop_assert!((raw - 1.0).abs() < 1e-12);
        prop_assert!((smooth - 1.0).abs() < 1e-6);
    }

    #[test]
    fn welch_ignores_constant_offset(x in series(256..400), c in -1e3f64..1e3) {
        let shifted: Vec<f64> = x.iter().map(|v| v + c).collect();
        let opts = WelchOptions::new(64);
        let a = welch_psd(&x, 0.1, &opts).unwrap();
        let b = welch_psd(&shifted, 0.1, &opts).unwrap();
        let scale = a.values.iter().cloned().fold(0.0, f64::max).max(1e-300);
        for (u, v) in a.values.iter().zip(&b.values) {
            prop_assert!((u - v).abs() <= 1e-12 * scale.max(c * c));
        }
    }

    #[test]
    fn csd_is_hermitian_psd(seed in 0u64..1000) {
        let mut rows = Vec::new();
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        for _ in 0..4 {
            rows.push((0..256).map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            }).collect::<Vec<f64>>());
        }
        let csd = cross_spectral_density(&rows, 0.1, &[1.0; 4], &WelchOptions::new(32)).unwrap();
        for m in &csd {
            let h = &m.matrix;
            prop_assert!((h - h.adjoint()).iter().all(|v| v.norm() < 1e-12 * (1.0 + m.weighted_trace())));
            let eig = nalgebra::DMatrix::from_fn(8, 8, |i, j| {
                let z = h[(i % 4, j % 4)];
                match (i < 4, j < 4) {
                    (true, true) | (false, false) => z.re,
                    (true, false) => -z.im,
                    (false, true) => z.im,
                }
            }).symmetric_eigen().eigenvalues;
            let lo = eig.iter().cloned().fold(f64::INFINITY, f64::min);
            prop_assert!(lo >= -1e-10 * m.weighted_trace().max(1e-300));
        }
    }

    #[test]
    fn oscillator_constraint_holds(lk in -3.0f64..6.0, lb in -3.0f64..4.0) {
        let p = OscillatorParams::new(lk.exp(), lb.exp()).unwrap();
        prop_assert_eq!(p.d(), p.k() * p.beta());
        let json = serde_json::to_string(&p).unwrap();
        let back: OscillatorParams = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(back, p);
        prop_assert_eq!((p.stationary_variances().0 - 1.0).abs() < 1e-12, true);
    }

    #[test]
    fn oscillator_simulation_is_seeded(seed in 0u64..1000) {
        let p = OscillatorParams::new(2.0, 0.7).unwrap();
        let a = p.simulate(20.0, 0.1, seed, Initial::Stationary).unwrap();
        let b = p.simulate(20.0, 0.1, seed, Initial::Stationary).unwrap();
        prop_assert_eq!(a.len(), 201);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn rpm_cells_partition_the_circle(m in 1usize..300, c in 0.0f64..5.0, seed in 0u64..100) {
        let model = from_density_fn(|nu| c * (1.0 + nu.sin()), m, seed).unwrap();
        prop_assert_eq!(model.n_cells(), m + 1);
        prop_assert_eq!(model.edges[0], 0.0);
        prop_assert_eq!(*model.edges.last().unwrap(), 2.0 * std::f64::consts::PI);
        prop_assert!(model.edges.windows(2).all(|w| w[0] <= w[1]));
        for ((a, w), nu) in model.amps.iter().zip(model.widths()).zip(&model.omegas) {
            let expect = c * (1.0 + nu.sin()) * w;
            prop_assert!((a * a - expect).abs() <= 1e-12 * expect.max(1e-300));
        }
    }

    #[test]
    fn separation_is_additive(x in series(16..300), threshold in 0.001f64..0.5) {
        let s = separate_mixed_spectra(&x, 0.1, threshold).unwrap();
        let fluct: f64 = x.iter().map(|v| (v - s.mean).powi(2)).sum();
        let ep: f64 = s.periodic.iter().map(|v| v * v).sum();
        let ec: f64 = s.chaotic.iter().map(|v| v * v).sum();
        for (i, v) in x.iter().enumerate() {
            prop_assert!((v - s.mean - s.periodic[i] - s.chaotic[i]).abs() <= 1e-9 * (1.0 + v.abs()));
        }
        prop_assert!((ep + ec - fluct).abs() <= 1e-9 * fluct.max(1e-300));
    }

    #[test]
    fn spod_modes_are_orthonormal(seed in 0u64..500, p in 2usize..8) {
        let mut state = seed + 1;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let data: Vec<Vec<f64>> = (0..p).map(|_| (0..512).map(|_| next()).collect()).collect();
        let weights: Vec<f64> = (0..p).map(|_| 0.5 + next().abs()).collect();
        let ens = SnapshotEnsemble::new(data, weights.clone(), 0.1).unwrap();
        let basis = compute_spod(&ens, &WelchOptions::new(64)).unwrap();
        for (f, modes) in basis.modes.iter().enumerate() {
            let wm = DMatrix::from_fn(p, modes.ncols(), |i, j| modes[(i, j)] * weights[i]);
            let g = modes.adjoint() * wm;
            for i in 0..g.nrows() {
                for j in 0..g.ncols() {
                    let want = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((g[(i, j)].re - want).abs() < 1e-8 && g[(i, j)].im.abs() < 1e-8);
                }
            }
            let e = &basis.energies[f];
            prop_assert!(e.windows(2).all(|w| w[0] >= w[1]));
            prop_assert!(e.iter().all(|v| *v >= -1e-12 * e[0].abs()));
        }
    }

    #[test]
    fn gramian_is_symmetric(seed in 0u64..500) {
        let m = DMatrix::from_fn(10, 3, |i, j| ((seed as usize + 7 * i + 3 * j) % 11) as f64 - 5.0);
        let g = gramian(&m, &[1.5; 10]);
        prop_assert_eq!(g.clone(), g.transpose());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn map_is_triangular_and_invertible(seed in 0u64..100, bump in -5.0f64..5.0) {
        let n = 600;
        let mut state = seed * 2 + 1;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let a: Vec<f64> = (0..n).map(|_| next()).collect();
        let b: Vec<f64> = a.iter().map(|x| x * x + 0.3 * next()).collect();
        let c: Vec<f64> = b.iter().zip(&a).map(|(y, x)| y - x + 0.2 * next()).collect();
        let ts = TimeSeries::from_channels(vec![a.clone(), b.clone(), c.clone()], 1.0).unwrap();
        let map = fit_map(&ts, &MapOptions::new(2)).unwrap();
        let y = [a[0], b[0], c[0]];
        let q = map.forward(&y);
        let moved = map.forward(&[y[0], y[1], y[2] + bump]);
        prop_assert_eq!(q[0], moved[0]);
        prop_assert_eq!(q[1], moved[1]);
        let back = map.inverse(&q);
        prop_assert!(!back.clamped);
        for (u, v) in back.y.iter().zip(&y) {
            prop_assert!((u - v).abs() < 1e-8);
        }
    }
}
