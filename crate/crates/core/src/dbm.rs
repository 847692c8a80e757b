//! Matrix-level Dyson Brownian motion (additive and Ornstein-Uhlenbeck
//! clocks), spectral path extraction, and the eigenvector SDE integrator for
//! a frozen eigenvalue path.
//!
//! The matrix-level evolution is exact in law at the grid times, so the
//! eigenvalue SDE is never integrated directly; eigenvalue paths come from
//! re-diagonalization.

use thiserror::Error;

use crate::linalg::{eigh, EigenBasis, LinalgError, SymMatrix};
use crate::rng::CounterRng;

#[derive(Debug, Error)]
pub enum DbmError {
    #[error("eigenvalue collision (gap {gap:.3e} at time {time}): eigenvector SDE aborted")]
    Collision { gap: f64, time: f64 },
    #[error(transparent)]
    Eigh(#[from] LinalgError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DbmVariant {
    /// H_s = H_0 + B(s)/sqrt(N)
    Additive,
    /// dH_s = dB_s/sqrt(N) - H_s/2 ds; GOE is the fixed point in law.
    Ou,
}

#[derive(Clone, Copy, Debug)]
pub struct DbmConfig {
    pub t_final: f64,
    pub n_steps: usize,
    pub variant: DbmVariant,
}

impl DbmConfig {
    pub fn new(t_final: f64, n_steps: usize, variant: DbmVariant) -> Self {
        assert!(t_final > 0.0, "t_final must be positive");
        assert!(n_steps >= 1);
        DbmConfig { t_final, n_steps, variant }
    }
}

/// Matrix path sampled at the grid times 0, dt, 2 dt, ..., t_final.
#[derive(Clone, Debug)]
pub struct MatrixPath {
    pub times: Vec<f64>,
    pub snapshots: Vec<SymMatrix>,
}

/// One additive step: H + increment with Var = dt (1 + delta_ij) / N.
/// Exact in law for any dt >= 0.
pub fn additive_step(h: &SymMatrix, dt: f64, rng: &CounterRng) -> SymMatrix {
    let n = h.n;
    let nf = n as f64;
    SymMatrix::from_upper(n, |i, j| {
        let var = dt * if i == j { 2.0 } else { 1.0 } / nf;
        h.get(i, j) + var.sqrt() * rng.gauss_at((i * n + j) as u64)
    })
}

/// One exact Ornstein-Uhlenbeck transition:
/// H -> e^{-dt/2} H + sqrt(1 - e^{-dt}) G with G a fresh GOE draw.
pub fn ou_step(h: &SymMatrix, dt: f64, rng: &CounterRng) -> SymMatrix {
    let n = h.n;
    let nf = n as f64;
    let decay = (-dt / 2.0).exp();
    let amp = (1.0 - (-dt).exp()).max(0.0).sqrt();
    SymMatrix::from_upper(n, |i, j| {
        let var = if i == j { 2.0 } else { 1.0 } / nf;
        decay * h.get(i, j) + amp * var.sqrt() * rng.gauss_at((i * n + j) as u64)
    })
}

/// Additive Dyson Brownian motion sampled on the config grid.
pub fn evolve_additive(h0: &SymMatrix, cfg: &DbmConfig, seed: u64, stream: u64) -> MatrixPath {
    evolve(h0, cfg, seed, stream, additive_step)
}

/// Ornstein-Uhlenbeck matrix dynamics sampled on the config grid.
pub fn evolve_ou(h0: &SymMatrix, cfg: &DbmConfig, seed: u64, stream: u64) -> MatrixPath {
    evolve(h0, cfg, seed, stream, ou_step)
}

fn evolve(
    h0: &SymMatrix,
    cfg: &DbmConfig,
    seed: u64,
    stream: u64,
    step: fn(&SymMatrix, f64, &CounterRng) -> SymMatrix,
) -> MatrixPath {
    let base = CounterRng::new(seed, stream);
    let dt = cfg.t_final / cfg.n_steps as f64;
    let mut times = Vec::with_capacity(cfg.n_steps + 1);
    let mut snapshots = Vec::with_capacity(cfg.n_steps + 1);
    times.push(0.0);
    snapshots.push(h0.clone());
    let mut h = h0.clone();
    for k in 0..cfg.n_steps {
        let rng = base.substream(k as u64 + 1);
        h = step(&h, dt, &rng);
        times.push(dt * (k + 1) as f64);
        snapshots.push(h.clone());
    }
    MatrixPath { times, snapshots }
}

/// Eigenvalue trajectories on a time grid (ascending per snapshot).
#[derive(Clone, Debug)]
pub struct LambdaPath {
    pub times: Vec<f64>,
    pub lambdas: Vec<Vec<f64>>,
}

impl LambdaPath {
    pub fn n(&self) -> usize {
        self.lambdas[0].len()
    }

    pub fn min_gap(&self, snapshot: usize) -> f64 {
        let l = &self.lambdas[snapshot];
        l.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
    }
}

/// Per-time spectra with eigenvector signs aligned to maximize overlap with
/// the previous snapshot (consecutive columns have nonnegative inner
/// product).
#[derive(Clone, Debug)]
pub struct SpectralPath {
    pub times: Vec<f64>,
    pub lambdas: Vec<Vec<f64>>,
    /// column-major n x n eigenvector matrices
    pub bases: Vec<Vec<f64>>,
    pub n: usize,
}

impl SpectralPath {
    pub fn lambda_path(&self) -> LambdaPath {
        LambdaPath { times: self.times.clone(), lambdas: self.lambdas.clone() }
    }
}

/// Diagonalize every snapshot and align signs along the path.
pub fn spectral_path(path: &MatrixPath) -> Result<SpectralPath, DbmError> {
    let n = path.snapshots[0].n;
    let mut lambdas = Vec::with_capacity(path.snapshots.len());
    let mut bases: Vec<Vec<f64>> = Vec::with_capacity(path.snapshots.len());
    for m in &path.snapshots {
        let s = eigh(m)?;
        let mut basis = match s.basis {
            EigenBasis::Real(u) => u,
            EigenBasis::Complex(_) => unreachable!(),
        };
        if let Some(prev) = bases.last() {
            for k in 0..n {
                let dot: f64 = basis[k * n..(k + 1) * n]
                    .iter()
                    .zip(&prev[k * n..(k + 1) * n])
                    .map(|(a, b)| a * b)
                    .sum();
                if dot < 0.0 {
                    for x in basis[k * n..(k + 1) * n].iter_mut() {
                        *x = -*x;
                    }
                }
            }
        }
        lambdas.push(s.lambda);
        bases.push(basis);
    }
    Ok(SpectralPath { times: path.times.clone(), lambdas, bases, n })
}

/// Dump eigenvalue trajectories as CSV rows (time, index, eigenvalue).
pub fn dump_lambda_csv<W: std::io::Write>(path: &LambdaPath, w: W) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["time", "index", "eigenvalue"])?;
    for (t, l) in path.times.iter().zip(&path.lambdas) {
        for (idx, v) in l.iter().enumerate() {
            wtr.write_record([format!("{t}"), format!("{}", idx + 1), format!("{v}")])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Step size policy for the eigenvector SDE.
fn sde_dt_cap(n: usize, min_gap: f64) -> f64 {
    (0.1 * n as f64 * min_gap * min_gap).min(1e-3)
}

/// Integrate the eigenvector SDE along a frozen eigenvalue path by
/// Euler-Maruyama with re-orthonormalization (modified Gram-Schmidt) after
/// every step. Eigenvalues are held piecewise constant within each grid cell.
///
/// `u0` is a column-major orthonormal basis; the returned basis is the state
/// at the final path time, orthonormal to 1e-8 by construction.
pub fn eigenvector_sde(
    u0: &[f64],
    n: usize,
    path: &LambdaPath,
    seed: u64,
    stream: u64,
) -> Result<Vec<f64>, DbmError> {
    integrate_vector_sde(u0, n, path, seed, stream, 1.0)
}

fn integrate_vector_sde(
    u0: &[f64],
    n: usize,
    path: &LambdaPath,
    seed: u64,
    stream: u64,
    noise_amp: f64,
) -> Result<Vec<f64>, DbmError> {
    assert_eq!(u0.len(), n * n);
    let mut rng = CounterRng::new(seed, stream);
    let mut u = u0.to_vec();
    let mut coeff = vec![0.0; n * n];
    let mut scratch = vec![0.0; n * n];
    let sqrt_n_inv = 1.0 / (n as f64).sqrt();
    for cell in 0..path.times.len() - 1 {
        let lam = &path.lambdas[cell];
        let min_gap = path.min_gap(cell);
        if min_gap < 1e-12 {
            return Err(DbmError::Collision { gap: min_gap, time: path.times[cell] });
        }
        let cell_len = path.times[cell + 1] - path.times[cell];
        if cell_len <= 0.0 {
            continue;
        }
        let cap = sde_dt_cap(n, min_gap);
        let substeps = (cell_len / cap).ceil().max(1.0) as usize;
        let dt = cell_len / substeps as f64;
        // drift coefficients are constant within the cell
        let drift: Vec<f64> = (0..n)
            .map(|k| {
                let mut s = 0.0;
                for l in 0..n {
                    if l != k {
                        let g = lam[k] - lam[l];
                        s += 1.0 / (g * g);
                    }
                }
                s / (2.0 * n as f64)
            })
            .collect();
        for _ in 0..substeps {
            // coeff[k * n + l]: weight of source column l in new column k
            coeff.iter_mut().for_each(|x| *x = 0.0);
            for k in 0..n {
                coeff[k * n + k] = 1.0 - dt * drift[k];
            }
            let sdt = dt.sqrt() * noise_amp;
            for k in 0..n {
                for l in (k + 1)..n {
                    // shared symmetric Brownian increment for the (k, l) pair
                    let db = sdt * rng.gauss();
                    let gap = lam[k] - lam[l];
                    coeff[k * n + l] += sqrt_n_inv * db / gap;
                    coeff[l * n + k] -= sqrt_n_inv * db / gap;
                }
            }
            matmul_basis(&u, &coeff, &mut scratch, n);
            std::mem::swap(&mut u, &mut scratch);
            gram_schmidt(&mut u, n);
        }
    }
    Ok(u)
}

/// scratch[:, k] = sum_l u[:, l] * coeff[k*n + l]
fn matmul_basis(u: &[f64], coeff: &[f64], scratch: &mut [f64], n: usize) {
    scratch.iter_mut().for_each(|x| *x = 0.0);
    for k in 0..n {
        for l in 0..n {
            let c = coeff[k * n + l];
            if c != 0.0 {
                let src = &u[l * n..(l + 1) * n];
                let dst = &mut scratch[k * n..(k + 1) * n];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += c * s;
                }
            }
        }
    }
}

/// Modified Gram-Schmidt on the columns, in place.
fn gram_schmidt(u: &mut [f64], n: usize) {
    for k in 0..n {
        for j in 0..k {
            let (head, tail) = u.split_at_mut(k * n);
            let cj = &head[j * n..(j + 1) * n];
            let ck = &mut tail[..n];
            let dot: f64 = cj.iter().zip(ck.iter()).map(|(a, b)| a * b).sum();
            for (x, y) in ck.iter_mut().zip(cj) {
                *x -= dot * y;
            }
        }
        let ck = &mut u[k * n..(k + 1) * n];
        let norm = ck.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in ck.iter_mut() {
            *x /= norm;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::{sample_real, EnsembleSpec};
    use crate::stats::mean_stderr;

    #[test]
    fn zero_time_steps_are_identity() {
        let h = SymMatrix::from_upper(4, |i, j| (i * 4 + j) as f64);
        let rng = CounterRng::new(1, 1);
        assert_eq!(additive_step(&h, 0.0, &rng), h);
        assert_eq!(ou_step(&h, 0.0, &rng), h);
    }

    #[test]
    fn additive_from_zero_is_scaled_goe() {
        // H0 = 0, one step of length t: entries have variance t (1+delta)/N.
        let n = 30;
        let t = 0.7;
        let h0 = SymMatrix::zeros(n);
        let mut off = Vec::new();
        let mut diag = Vec::new();
        for s in 0..2000 {
            let rng = CounterRng::new(11, s);
            let h = additive_step(&h0, t, &rng);
            off.push(h.get(0, 1) * h.get(0, 1));
            diag.push(h.get(2, 2) * h.get(2, 2));
        }
        let (mo, so) = mean_stderr(&off);
        let (md, sd) = mean_stderr(&diag);
        assert!((mo - t / n as f64).abs() < 3.0 * so);
        assert!((md - 2.0 * t / n as f64).abs() < 3.0 * sd);
    }

    #[test]
    fn additive_increment_variance_band() {
        // Var((H_t - H_0)_{12}) * N within 3 sigma of t at t = 1.
        let n = 100;
        let spec = EnsembleSpec::goe(n, 21);
        let h0 = sample_real(&spec, 0).unwrap();
        let cfg = DbmConfig::new(1.0, 4, DbmVariant::Additive);
        let xs: Vec<f64> = (0..1200)
            .map(|s| {
                let path = evolve_additive(&h0, &cfg, 99, s);
                let d = path.snapshots.last().unwrap().get(1, 2) - h0.get(1, 2);
                d * d * n as f64
            })
            .collect();
        let (m, se) = mean_stderr(&xs);
        assert!((m - 1.0).abs() < 3.0 * se, "N Var = {m} +- {se}");
    }

    #[test]
    fn ou_goe_is_stationary_in_entry_variance() {
        let n = 40;
        let spec = EnsembleSpec::goe(n, 5);
        let cfg = DbmConfig::new(0.8, 3, DbmVariant::Ou);
        let mut before = Vec::new();
        let mut after = Vec::new();
        for s in 0..1500 {
            let h0 = sample_real(&spec, s).unwrap();
            let path = evolve_ou(&h0, &cfg, 7, s);
            before.push(h0.get(0, 3) * h0.get(0, 3) * n as f64);
            after.push(path.snapshots.last().unwrap().get(0, 3).powi(2) * n as f64);
        }
        let (mb, sb) = mean_stderr(&before);
        let (ma, sa) = mean_stderr(&after);
        assert!((mb - ma).abs() < 3.0 * (sb * sb + sa * sa).sqrt(), "{mb} vs {ma}");
    }

    #[test]
    fn ou_from_zero_relaxes_to_goe() {
        let n = 25;
        let h0 = SymMatrix::zeros(n);
        let cfg = DbmConfig::new(12.0, 6, DbmVariant::Ou);
        let xs: Vec<f64> = (0..3000)
            .map(|s| {
                let path = evolve_ou(&h0, &cfg, 3, s);
                path.snapshots.last().unwrap().get(0, 1).powi(2) * n as f64
            })
            .collect();
        let (m, se) = mean_stderr(&xs);
        assert!((m - 1.0).abs() < 3.0 * se, "N Var = {m} +- {se}");
    }

    #[test]
    fn spectral_path_constant_and_rotation() {
        // constant path -> constant spectra
        let h = sample_real(&EnsembleSpec::goe(6, 77), 0).unwrap();
        let path = MatrixPath { times: vec![0.0, 1.0], snapshots: vec![h.clone(), h.clone()] };
        let sp = spectral_path(&path).unwrap();
        for k in 0..6 {
            assert!((sp.lambdas[0][k] - sp.lambdas[1][k]).abs() < 1e-12);
        }
        // analytic 2x2 rotation family: eigenvalues stay (a, b)
        let (a, b) = (-1.0, 2.0);
        let snaps: Vec<SymMatrix> = (0..8)
            .map(|k| {
                let th = 0.2 * k as f64;
                let (c, s) = (th.cos(), th.sin());
                SymMatrix::from_upper(2, |i, j| match (i, j) {
                    (0, 0) => a * c * c + b * s * s,
                    (1, 1) => a * s * s + b * c * c,
                    _ => (a - b) * c * s,
                })
            })
            .collect();
        let times: Vec<f64> = (0..8).map(|k| k as f64).collect();
        let sp = spectral_path(&MatrixPath { times, snapshots: snaps }).unwrap();
        for k in 0..8 {
            assert!((sp.lambdas[k][0] - a).abs() < 1e-12);
            assert!((sp.lambdas[k][1] - b).abs() < 1e-12);
        }
        for k in 1..8 {
            for col in 0..2 {
                let dot: f64 = sp.bases[k][col * 2..(col + 1) * 2]
                    .iter()
                    .zip(&sp.bases[k - 1][col * 2..(col + 1) * 2])
                    .map(|(x, y)| x * y)
                    .sum();
                assert!(dot >= 0.0);
            }
        }
    }

    #[test]
    fn eigenvalue_paths_are_continuous() {
        // empirical continuity audit at N = 20 on a fine grid
        let n = 20;
        let h0 = sample_real(&EnsembleSpec::goe(n, 13), 0).unwrap();
        let steps = 150;
        let cfg = DbmConfig::new(0.15, steps, DbmVariant::Additive);
        let path = evolve_additive(&h0, &cfg, 17, 0);
        let sp = spectral_path(&path).unwrap();
        let dt = 0.15 / steps as f64;
        for k in 1..sp.times.len() {
            // Weyl: per-step jump bounded by the Frobenius norm of the
            // increment; also audit the 5 sqrt(dt) heuristic scale.
            let inc_frob: f64 = path.snapshots[k]
                .a
                .iter()
                .zip(&path.snapshots[k - 1].a)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            for j in 0..n {
                let jump = (sp.lambdas[k][j] - sp.lambdas[k - 1][j]).abs();
                assert!(jump <= inc_frob + 1e-12);
                assert!(jump <= 5.0 * dt.sqrt(), "jump {jump} vs {}", 5.0 * dt.sqrt());
            }
        }
    }

    #[test]
    fn sde_zero_noise_keeps_basis() {
        let n = 8;
        let h0 = sample_real(&EnsembleSpec::goe(n, 3), 4).unwrap();
        let s = eigh(&h0).unwrap();
        let basis = match &s.basis {
            EigenBasis::Real(u) => u.clone(),
            _ => unreachable!(),
        };
        let path = LambdaPath {
            times: vec![0.0, 0.05],
            lambdas: vec![s.lambda.clone(), s.lambda.clone()],
        };
        let out = integrate_vector_sde(&basis, n, &path, 0, 0, 0.0).unwrap();
        // drift only rescales columns; Gram-Schmidt restores them exactly
        for (a, b) in out.iter().zip(&basis) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn sde_output_orthonormal() {
        let n = 10;
        let h0 = sample_real(&EnsembleSpec::goe(n, 6), 1).unwrap();
        let path = spectral_path(&evolve_additive(
            &h0,
            &DbmConfig::new(0.1, 20, DbmVariant::Additive),
            8,
            0,
        ))
        .unwrap();
        let s0 = eigh(&h0).unwrap();
        let basis = match &s0.basis {
            EigenBasis::Real(u) => u.clone(),
            _ => unreachable!(),
        };
        let out = eigenvector_sde(&basis, n, &path.lambda_path(), 5, 3).unwrap();
        for i in 0..n {
            for j in 0..n {
                let dot: f64 = out[i * n..(i + 1) * n]
                    .iter()
                    .zip(&out[j * n..(j + 1) * n])
                    .map(|(a, b)| a * b)
                    .sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn sde_collision_detected() {
        let n = 3;
        let path = LambdaPath {
            times: vec![0.0, 0.1],
            lambdas: vec![vec![0.0, 0.0, 1.0], vec![0.0, 0.0, 1.0]],
        };
        let u0: Vec<f64> = {
            let mut v = vec![0.0; 9];
            for k in 0..3 {
                v[k * 3 + k] = 1.0;
            }
            v
        };
        assert!(matches!(
            eigenvector_sde(&u0, n, &path, 0, 0),
            Err(DbmError::Collision { .. })
        ));
    }

    #[test]
    fn sde_overlap_decay_matches_first_order_rate() {
        // N = 2 with an analytic gap: to first order in t the expected
        // squared overlap <u_1(t), u_1(0)>^2 decays like 1 - t/(N gap^2).
        let n = 2;
        let gap = 2.0;
        let t = 0.02;
        let path = LambdaPath {
            times: vec![0.0, t],
            lambdas: vec![vec![0.0, gap], vec![0.0, gap]],
        };
        let u0 = vec![1.0, 0.0, 0.0, 1.0];
        let mut overlaps = Vec::new();
        for r in 0..4000 {
            let u = eigenvector_sde(&u0, n, &path, 40, r).unwrap();
            overlaps.push(u[0] * u[0]); // <e_1, u_1(t)>^2
        }
        let (m, se) = mean_stderr(&overlaps);
        let predicted = 1.0 - t / (n as f64 * gap * gap);
        assert!(
            (m - predicted).abs() < 3.0 * se + 0.3 * t * t,
            "mean {m} vs predicted {predicted} (se {se})"
        );
    }
}
