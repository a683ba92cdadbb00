//! Spectral proper orthogonal decomposition of snapshot data, modal
//! projection, Gramian-based reconstruction and line/continuum separation.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{frequency_grid, BlockTransform, WelchOptions};
use crate::timeseries::TimeSeries;

/// Modes whose energy falls below this fraction of the leading energy at
/// the same frequency are dropped.
const RETAIN_REL: f64 = 1e-8;

/// Field samples: `data[p]` is the time series at spatial point `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotEnsemble {
    data: Vec<Vec<f64>>,
    weights: Vec<f64>,
    dt: f64,
}

impl SnapshotEnsemble {
    pub fn new(data: Vec<Vec<f64>>, weights: Vec<f64>, dt: f64) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Config("ensemble needs at least one spatial point".into()));
        }
        if weights.len() != data.len() {
            return Err(Error::Config(format!("{} weights for {} points", weights.len(), data.len())));
        }
        if let Some(i) = weights.iter().position(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::invariant("weights", format!("weight {i} is not positive")));
        }
        if !(dt > 0.0) {
            return Err(Error::Config("dt must be positive".into()));
        }
        let m = data[0].len();
        for (p, row) in data.iter().enumerate() {
            if row.len() != m {
                return Err(Error::Config(format!("point {p} has {} samples, expected {m}", row.len())));
            }
            if let Some(t) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { row: p + 1, column: t + 1 });
            }
        }
        Ok(Self { data, weights, dt })
    }

    pub fn n_points(&self) -> usize {
        self.data.len()
    }

    pub fn n_samples(&self) -> usize {
        self.data[0].len()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn data(&self) -> &[Vec<f64>] {
        &self.data
    }

    /// Time-mean-removed copy.
    pub fn fluctuations(&self) -> Self {
        let data = self
            .data
            .iter()
            .map(|row| {
                let mean = row.iter().sum::<f64>() / row.len() as f64;
                row.iter().map(|v| v - mean).collect()
            })
            .collect();
        Self {
            data,
            weights: self.weights.clone(),
            dt: self.dt,
        }
    }

    /// Samples `range` of every point.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.n_samples() {
            return Err(Error::Index(format!("sample range {start}..{end} of {}", self.n_samples())));
        }
        Self::new(
            self.data.iter().map(|r| r[start..end].to_vec()).collect(),
            self.weights.clone(),
            self.dt,
        )
    }

    /// Time-averaged weighted energy `Σ_p w_p ⟨u_p²⟩`.
    pub fn weighted_variance(&self) -> f64 {
        self.data
            .iter()
            .zip(&self.weights)
            .map(|(row, w)| {
                let mean = row.iter().sum::<f64>() / row.len() as f64;
                w * row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / row.len() as f64
            })
            .sum()
    }
}

#[derive(Debug, Clone)]
pub struct SpodBasis {
    pub omegas: Vec<f64>,
    /// Per frequency, `P × R` weighted-orthonormal modes.
    pub modes: Vec<DMatrix<Complex64>>,
    /// Per frequency, `R` energies in descending order.
    pub energies: Vec<Vec<f64>>,
    /// Per frequency, the weighted trace of the cross-spectral matrix.
    pub total_energy: Vec<f64>,
    pub weights: Vec<f64>,
    pub n_blocks: usize,
}

impl SpodBasis {
    /// `(frequency, mode)` pairs of the `n` largest energies overall.
    pub fn top_modes(&self, n: usize) -> Vec<(usize, usize)> {
        let mut all: Vec<(usize, usize, f64)> = self
            .energies
            .iter()
            .enumerate()
            .flat_map(|(f, e)| e.iter().enumerate().map(move |(r, v)| (f, r, *v)))
            .collect();
        all.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
        all.into_iter().take(n).map(|(f, r, _)| (f, r)).collect()
    }

    /// Real parts of the selected modes as columns of a `P × N` matrix.
    pub fn real_modes(&self, selection: &[(usize, usize)]) -> Result<DMatrix<f64>> {
        let p = self.weights.len();
        let mut out = DMatrix::zeros(p, selection.len());
        for (j, &(f, r)) in selection.iter().enumerate() {
            let m = self
                .modes
                .get(f)
                .ok_or_else(|| Error::Index(format!("frequency {f} of {}", self.modes.len())))?;
            if r >= m.ncols() {
                return Err(Error::Index(format!("mode {r} of {} at frequency {f}", m.ncols())));
            }
            for i in 0..p {
                out[(i, j)] = m[(i, r)].re;
            }
        }
        Ok(out)
    }
}

/// Method-of-snapshots SPOD: at every frequency the `B × B` matrix
/// `(1/B) Q̂* W Q̂` of block coefficients is diagonalized, giving modes
/// `Q̂ V Λ^{-1/2} / sqrt(B)` with energies `Λ`.
pub fn compute_spod(ens: &SnapshotEnsemble, opts: &WelchOptions) -> Result<SpodBasis> {
    let m = ens.n_samples();
    if opts.nperseg > m || opts.nperseg < 8 {
        return Err(Error::Config(format!("nperseg {} invalid for {m} samples", opts.nperseg)));
    }
    let bt = BlockTransform::new(opts, ens.dt);
    let nb = bt.n_blocks(m);
    if nb < 2 {
        return Err(Error::Config(format!("SPOD needs at least 2 blocks, got {nb}")));
    }
    let p = ens.n_points();
    let coeffs: Vec<Vec<Vec<Complex64>>> = ens.data.par_iter().map(|x| bt.transform(x)).collect();
    let omegas = frequency_grid(opts.nperseg, ens.dt);
    let w = &ens.weights;

    let per_freq: Vec<(DMatrix<Complex64>, Vec<f64>, f64)> = (0..bt.n_freqs())
        .into_par_iter()
        .map(|k| {
            let q = DMatrix::from_fn(p, nb, |row, b| coeffs[row][b][k]);
            let mut wq = q.clone();
            for (i, mut row) in wq.row_iter_mut().enumerate() {
                row *= Complex64::new(w[i], 0.0);
            }
            let mut gram = q.adjoint() * &wq / Complex64::new(nb as f64, 0.0);
            // Symmetrize away rounding before the Hermitian solve.
            let gh = gram.adjoint();
            gram = (&gram + gh) * Complex64::new(0.5, 0.0);
            let trace: f64 = (0..nb).map(|i| gram[(i, i)].re).sum();
            let eig = SymmetricEigen::new(gram);
            let mut order: Vec<usize> = (0..nb).collect();
            order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
            let lead = eig.eigenvalues[order[0]].max(0.0);
            let kept: Vec<usize> = order
                .into_iter()
                .filter(|&i| lead > 0.0 && eig.eigenvalues[i] > RETAIN_REL * lead)
                .collect();
            let mut modes = DMatrix::zeros(p, kept.len());
            let mut energies = Vec::with_capacity(kept.len());
            for (col, &i) in kept.iter().enumerate() {
                let lambda = eig.eigenvalues[i];
                let v = eig.eigenvectors.column(i);
                let psi = &q * v / Complex64::new((nb as f64 * lambda).sqrt(), 0.0);
                modes.set_column(col, &psi);
                energies.push(lambda);
            }
            (modes, energies, trace)
        })
        .collect();

    let mut modes = Vec::with_capacity(per_freq.len());
    let mut energies = Vec::with_capacity(per_freq.len());
    let mut total_energy = Vec::with_capacity(per_freq.len());
    for (m, e, t) in per_freq {
        modes.push(m);
        energies.push(e);
        total_energy.push(t);
    }
    Ok(SpodBasis {
        omegas,
        modes,
        energies,
        total_energy,
        weights: ens.weights.clone(),
        n_blocks: nb,
    })
}

/// `y_j(t) = Σ_x w_x u(x, t) ψ_j(x)` for the real columns of `modes`.
pub fn project_onto(ens: &SnapshotEnsemble, modes: &DMatrix<f64>, names: Vec<String>) -> Result<TimeSeries> {
    if modes.nrows() != ens.n_points() {
        return Err(Error::Config(format!(
            "modes have {} rows, ensemble has {} points",
            modes.nrows(),
            ens.n_points()
        )));
    }
    let m = ens.n_samples();
    let channels: Vec<Vec<f64>> = (0..modes.ncols())
        .into_par_iter()
        .map(|j| {
            let mut y = vec![0.0; m];
            for (p, row) in ens.data.iter().enumerate() {
                let c = ens.weights[p] * modes[(p, j)];
                if c == 0.0 {
                    continue;
                }
                for (o, v) in y.iter_mut().zip(row) {
                    *o += c * v;
                }
            }
            y
        })
        .collect();
    TimeSeries::new(channels, ens.dt, names)
}

/// Projects onto the real parts of the selected SPOD modes; channels follow
/// the selection order and are named `f<freq>_m<mode>`.
pub fn project(ens: &SnapshotEnsemble, basis: &SpodBasis, selection: &[(usize, usize)]) -> Result<TimeSeries> {
    let modes = basis.real_modes(selection)?;
    let names = selection.iter().map(|(f, r)| format!("f{f}_m{r}")).collect();
    project_onto(ens, &modes, names)
}

/// `G_jk = ψ_jᵀ W ψ_k`.
pub fn gramian(modes: &DMatrix<f64>, weights: &[f64]) -> DMatrix<f64> {
    let mut wm = modes.clone();
    for (i, mut row) in wm.row_iter_mut().enumerate() {
        row *= weights[i];
    }
    modes.transpose() * wm
}

/// Field from modal coordinates: `ũ(x, t) = Σ_j Σ_k H_jk y_k(t) ψ_j(x)`,
/// `H = G⁻¹`.
pub fn reconstruct(coords: &TimeSeries, modes: &DMatrix<f64>, weights: &[f64]) -> Result<SnapshotEnsemble> {
    let n = modes.ncols();
    if coords.n_channels() != n {
        return Err(Error::Config(format!("{} coordinates for {n} modes", coords.n_channels())));
    }
    if weights.len() != modes.nrows() {
        return Err(Error::Config(format!("{} weights for {} points", weights.len(), modes.nrows())));
    }
    let h = inverse_gramian(&gramian(modes, weights))?;
    let y = DMatrix::from_fn(n, coords.len(), |j, t| coords.channel(j)[t]);
    let field = modes * (h * y);
    let data = (0..field.nrows()).map(|p| field.row(p).iter().copied().collect()).collect();
    SnapshotEnsemble::new(data, weights.to_vec(), coords.dt())
}

/// Inverse Gramian, rejecting condition numbers of `1e8` and above.
pub fn inverse_gramian(g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if g.is_identity(0.0) {
        return Ok(g.clone());
    }
    let svd = g.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition < 1e8) {
        return Err(Error::Conditioning { condition });
    }
    g.clone()
        .lu()
        .try_inverse()
        .ok_or(Error::Conditioning { condition })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralLine {
    /// First and last DFT bin of a run of adjacent selected bins.
    pub bins: (usize, usize),
    /// Energy-weighted angular frequency of the run.
    pub omega: f64,
    pub energy_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixedSpectra {
    pub mean: f64,
    pub periodic: Vec<f64>,
    pub chaotic: Vec<f64>,
    pub lines: Vec<SpectralLine>,
}

/// Splits `x` into mean, a periodic part made of DFT bin pairs each holding
/// more than `threshold` of the fluctuation energy, and the remainder.
pub fn separate_mixed_spectra(x: &[f64], dt: f64, threshold: f64) -> Result<MixedSpectra> {
    let m = x.len();
    if m < 16 {
        return Err(Error::Config(format!("need at least 16 samples, got {m}")));
    }
    let mean = x.iter().sum::<f64>() / m as f64;
    let mut spec: Vec<Complex64> = x.iter().map(|v| Complex64::new(v - mean, 0.0)).collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(m).process(&mut spec);
    let energy: Vec<f64> = spec.iter().map(|c| c.norm_sqr()).collect();
    let total: f64 = energy.iter().sum();

    let mut selected = vec![false; m / 2 + 1];
    if total > 0.0 {
        for k in 1..=m / 2 {
            let pair = if 2 * k == m { energy[k] } else { energy[k] + energy[m - k] };
            selected[k] = pair > threshold * total;
        }
    }

    let mut periodic_spec = vec![Complex64::new(0.0, 0.0); m];
    let mut chaotic_spec = spec.clone();
    for (k, &sel) in selected.iter().enumerate() {
        if !sel {
            continue;
        }
        for idx in [k, (m - k) % m] {
            periodic_spec[idx] = spec[idx];
            chaotic_spec[idx] = Complex64::new(0.0, 0.0);
        }
    }
    let inv = planner.plan_fft_inverse(m);
    inv.process(&mut periodic_spec);
    inv.process(&mut chaotic_spec);
    let scale = 1.0 / m as f64;
    let periodic = periodic_spec.iter().map(|c| c.re * scale).collect();
    let chaotic = chaotic_spec.iter().map(|c| c.re * scale).collect();

    let dw = 2.0 * std::f64::consts::PI / (m as f64 * dt);
    let mut lines = Vec::new();
    let mut k = 1;
    while k <= m / 2 {
        if !selected[k] {
            k += 1;
            continue;
        }
        let start = k;
        while k + 1 <= m / 2 && selected[k + 1] {
            k += 1;
        }
        let (mut e, mut ew) = (0.0, 0.0);
        for b in start..=k {
            let pair = if 2 * b == m { energy[b] } else { energy[b] + energy[m - b] };
            e += pair;
            ew += pair * b as f64 * dw;
        }
        lines.push(SpectralLine {
            bins: (start, k),
            omega: ew / e,
            energy_fraction: e / total,
        });
        k += 1;
    }
    Ok(MixedSpectra {
        mean,
        periodic,
        chaotic,
        lines,
    })
}

/// Sidecar describing a flat binary snapshot matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    #[serde(rename = "P")]
    pub p: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub dt: f64,
}

/// Default sidecar location: `<data path>.json`.
pub fn sidecar_path(data: &Path) -> PathBuf {
    let mut s = data.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes `rows × cols` little-endian f64 values, row-major.
pub fn write_f64_matrix(path: &Path, rows: usize, cols: usize, at: impl Fn(usize, usize) -> f64) -> Result<()> {
    let mut buf = Vec::with_capacity(rows * cols * 8);
    for r in 0..rows {
        for c in 0..cols {
            buf.extend_from_slice(&at(r, c).to_le_bytes());
        }
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_f64_values(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != expected * 8 {
        return Err(Error::Parse {
            line: 0,
            message: format!("{}: {} bytes, expected {}", path.display(), bytes.len(), expected * 8),
        });
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

/// Writes the snapshot matrix and its `{P, M, dt}` sidecar.
pub fn save_snapshots(ens: &SnapshotEnsemble, data_path: &Path, meta_path: &Path) -> Result<()> {
    write_f64_matrix(data_path, ens.n_points(), ens.n_samples(), |p, t| ens.data[p][t])?;
    let meta = SnapshotMeta {
        p: ens.n_points(),
        m: ens.n_samples(),
        dt: ens.dt,
    };
    fs::write(meta_path, serde_json::to_string_pretty(&meta)?).map_err(|e| Error::io(meta_path, e))
}

/// Reads a snapshot matrix; weights default to one when no file is given.
pub fn load_snapshots(data_path: &Path, meta_path: &Path, weights_path: Option<&Path>) -> Result<SnapshotEnsemble> {
    let text = fs::read_to_string(meta_path).map_err(|e| Error::io(meta_path, e))?;
    let meta: SnapshotMeta = serde_json::from_str(&text)?;
    let flat = read_f64_values(data_path, meta.p * meta.m)?;
    let data = flat.chunks_exact(meta.m.max(1)).map(<[f64]>::to_vec).collect();
    let weights = match weights_path {
        Some(p) => load_weights(p, meta.p)?,
        None => vec![1.0; meta.p],
    };
    SnapshotEnsemble::new(data, weights, meta.dt)
}

/// One weight per line; `#` lines and a non-numeric first line are skipped.
pub fn load_weights(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        match t.split(',').next().unwrap_or("").trim().parse::<f64>() {
            Ok(v) => out.push(v),
            Err(_) if out.is_empty() => continue,
            Err(_) => {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("cannot parse weight `{t}`"),
                })
            }
        }
    }
    if out.len() != expected {
        return Err(Error::Config(format!("{} weights for {expected} points", out.len())));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisManifest {
    pub version: u32,
    #[serde(rename = "P")]
    pub p: usize,
    pub dt: f64,
    pub n_blocks: usize,
    pub layout: String,
    pub weights: Vec<f64>,
    pub frequencies: Vec<FrequencyEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyEntry {
    pub index: usize,
    pub omega: f64,
    #[serde(rename = "R")]
    pub r: usize,
    pub energies: Vec<f64>,
    pub total_energy: f64,
    pub file: String,
}

const MODE_LAYOUT: &str = "row-major P x R complex128, interleaved (re, im) little-endian f64";

/// Writes `manifest.json` and one `mode_<k>.bin` per frequency into `dir`.
pub fn save_basis(basis: &SpodBasis, dt: f64, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let p = basis.weights.len();
    let mut frequencies = Vec::with_capacity(basis.omegas.len());
    for (k, modes) in basis.modes.iter().enumerate() {
        let file = format!("mode_{k:05}.bin");
        let r = modes.ncols();
        write_f64_matrix(&dir.join(&file), p, 2 * r, |i, c| {
            let z = modes[(i, c / 2)];
            if c % 2 == 0 {
                z.re
            } else {
                z.im
            }
        })?;
        frequencies.push(FrequencyEntry {
            index: k,
            omega: basis.omegas[k],
            r,
            energies: basis.energies[k].clone(),
            total_energy: basis.total_energy[k],
            file,
        });
    }
    let manifest = BasisManifest {
        version: 1,
        p,
        dt,
        n_blocks: basis.n_blocks,
        layout: MODE_LAYOUT.into(),
        weights: basis.weights.clone(),
        frequencies,
    };
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))
}

pub fn load_basis(dir: &Path) -> Result<SpodBasis> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: BasisManifest = serde_json::from_str(&text)?;
    let p = manifest.p;
    let mut basis = SpodBasis {
        omegas: Vec::new(),
        modes: Vec::new(),
        energies: Vec::new(),
        total_energy: Vec::new(),
        weights: manifest.weights.clone(),
        n_blocks: manifest.n_blocks,
    };
    for f in &manifest.frequencies {
        let vals = read_f64_values(&dir.join(&f.file), p * 2 * f.r)?;
        let m = DMatrix::from_fn(p, f.r, |i, c| Complex64::new(vals[i * 2 * f.r + 2 * c], vals[i * 2 * f.r + 2 * c + 1]));
        basis.omegas.push(f.omega);
        basis.modes.push(m);
        basis.energies.push(f.energies.clone());
        basis.total_energy.push(f.total_energy);
    }
    Ok(basis)
}

/// `apply` for column vectors; used by tests and the CLI.
pub fn weighted_inner(a: &DVector<f64>, b: &DVector<f64>, w: &[f64]) -> f64 {
    a.iter().zip(b.iter()).zip(w).map(|((x, y), w)| x * y * w).sum()
}
