//! The eigenvector moment flow: configuration arithmetic, the jump-process
//! generator, direct ODE integration against a frozen eigenvalue path, and
//! Monte Carlo estimators of the moment observable.
//!
//! A configuration places n particles on the sites 1..N; the observable
//! f(xi) = E[prod_k <q, sqrt(N) u_k>^{2 xi_k} | lambda] / M(xi) evolves by
//! particles jumping from site k to site l at rate
//! 2 xi_k (1 + 2 xi_l) c_kl with c_kl = 1/(2N (lambda_k - lambda_l)^2).
//!
//! The clock constant c_kl is pinned by duality against the matrix dynamics
//! used here (H_s = H_0 + B(s)/sqrt(N) with standard off-diagonal Brownian
//! entries): first-order perturbation theory and direct matrix Monte Carlo
//! both give the n = 1 relaxation rate 1/(N gap^2), and the conditional
//! eigenvector-SDE estimates agree with this generator to Monte Carlo
//! precision (see the duality tests).

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::dbm::{additive_step, eigenvector_sde, DbmError, LambdaPath};
use crate::ensembles::{sample_real, EnsembleError, EnsembleSpec};
use crate::linalg::{eigh, EigenBasis, LinalgError, SymMatrix};
use crate::rng::CounterRng;
use crate::stats::mean_stderr;

#[derive(Debug, Error)]
pub enum EmfError {
    #[error("configuration space has {size} states, exceeding the cap {cap}")]
    StateSpaceTooLarge { size: u64, cap: u64 },
    #[error("coincident eigenvalues (gap {gap:.3e}): generator undefined")]
    CoincidentEigenvalues { gap: f64 },
    #[error("conditional mode requires a fixed initial matrix")]
    ConditionalNeedsFixedInit,
    #[error(transparent)]
    Dbm(#[from] DbmError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Multiset of particles on sites 1..N (sparse: only occupied sites stored).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Configuration {
    mult: BTreeMap<usize, u32>,
}

impl Configuration {
    pub fn empty() -> Self {
        Configuration { mult: BTreeMap::new() }
    }

    /// Build from a list of occupied sites (repeats increase multiplicity).
    pub fn from_sites(sites: &[usize]) -> Self {
        let mut mult = BTreeMap::new();
        for &s in sites {
            assert!(s >= 1, "sites are 1-based");
            *mult.entry(s).or_insert(0) += 1;
        }
        Configuration { mult }
    }

    pub fn n_particles(&self) -> usize {
        self.mult.values().map(|&m| m as usize).sum()
    }

    pub fn multiplicity(&self, site: usize) -> u32 {
        self.mult.get(&site).copied().unwrap_or(0)
    }

    pub fn occupied(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.mult.iter().map(|(&s, &m)| (s, m))
    }

    /// Sorted site list with repeats.
    pub fn sites_sorted(&self) -> Vec<usize> {
        let mut v = Vec::with_capacity(self.n_particles());
        for (&s, &m) in &self.mult {
            for _ in 0..m {
                v.push(s);
            }
        }
        v
    }

    /// Move one particle from i to j when possible; the identity when
    /// xi_i = 0 or i = j.
    pub fn move_particle(&self, i: usize, j: usize) -> Configuration {
        if i == j || self.multiplicity(i) == 0 {
            return self.clone();
        }
        let mut mult = self.mult.clone();
        let mi = mult.get_mut(&i).unwrap();
        *mi -= 1;
        if *mi == 0 {
            mult.remove(&i);
        }
        *mult.entry(j).or_insert(0) += 1;
        Configuration { mult }
    }

    /// M(xi) = prod_k (2 xi_k - 1)!!, the Gaussian moment normalization.
    pub fn normalization(&self) -> f64 {
        self.mult
            .values()
            .map(|&m| double_factorial_odd(m))
            .product()
    }
}

/// (2m - 1)!! = 1 * 3 * ... * (2m - 1); equals 1 for m = 0.
fn double_factorial_odd(m: u32) -> f64 {
    (1..=m).map(|k| (2 * k - 1) as f64).product()
}

/// Cap on the dense configuration space C(N + n - 1, n).
pub const STATE_SPACE_CAP: u64 = 200_000;

/// Dense index codec: multisets of n particles on N sites are ranked
/// colexicographically through the standard combination encoding
/// c_j = s_j + j - 1.
#[derive(Debug)]
pub struct ConfigCodec {
    pub n_sites: usize,
    pub n_particles: usize,
    binom: Vec<Vec<u64>>,
    /// sorted site list (with repeats) per rank
    configs: Vec<Vec<u16>>,
}

impl ConfigCodec {
    pub fn new(n_sites: usize, n_particles: usize) -> Result<Arc<Self>, EmfError> {
        assert!(n_sites >= 1 && n_particles >= 1);
        let rows = n_sites + n_particles + 1;
        let mut binom = vec![vec![0u64; n_particles + 2]; rows];
        for (r, row) in binom.iter_mut().enumerate() {
            row[0] = 1;
            for c in 1..row.len().min(r + 1) {
                row[c] = binomial_entry(r, c);
            }
        }
        let size = binom[n_sites + n_particles - 1][n_particles];
        if size > STATE_SPACE_CAP {
            return Err(EmfError::StateSpaceTooLarge { size, cap: STATE_SPACE_CAP });
        }
        let mut codec = ConfigCodec { n_sites, n_particles, binom, configs: Vec::new() };
        let mut configs = vec![Vec::new(); size as usize];
        let mut sites = vec![1u16; n_particles];
        loop {
            let r = codec.rank_sites(&sites);
            configs[r] = sites.clone();
            // next multiset in lex order
            let mut pos = n_particles;
            while pos > 0 && sites[pos - 1] as usize == n_sites {
                pos -= 1;
            }
            if pos == 0 {
                break;
            }
            let v = sites[pos - 1] + 1;
            for s in sites[pos - 1..].iter_mut() {
                *s = v;
            }
        }
        codec.configs = configs;
        Ok(Arc::new(codec))
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    /// Rank from the sorted site list (with repeats).
    pub fn rank_sites(&self, sorted_sites: &[u16]) -> usize {
        debug_assert_eq!(sorted_sites.len(), self.n_particles);
        let mut r = 0u64;
        for (j, &s) in sorted_sites.iter().enumerate() {
            let c = s as usize + j; // c_j - 1 = s + j - 1 with 1-based j
            r += self.binom[c - 1][j + 1];
        }
        r as usize
    }

    pub fn rank(&self, cfg: &Configuration) -> usize {
        let sites: Vec<u16> = cfg.sites_sorted().iter().map(|&s| s as u16).collect();
        self.rank_sites(&sites)
    }

    pub fn sites(&self, rank: usize) -> &[u16] {
        &self.configs[rank]
    }

    pub fn config(&self, rank: usize) -> Configuration {
        Configuration::from_sites(
            &self.configs[rank].iter().map(|&s| s as usize).collect::<Vec<_>>(),
        )
    }
}

fn binomial_entry(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let mut acc = 1u128;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc.min(u128::from(u64::MAX)) as u64
}

/// Dense observable over all configurations with n particles on N sites.
#[derive(Clone, Debug)]
pub struct EmfState {
    pub codec: Arc<ConfigCodec>,
    pub f: Vec<f64>,
}

impl EmfState {
    pub fn new(codec: Arc<ConfigCodec>, f: Vec<f64>) -> Self {
        assert_eq!(f.len(), codec.len());
        EmfState { codec, f }
    }

    /// Initialize from a per-configuration evaluator.
    pub fn from_fn<F: FnMut(&Configuration) -> f64>(
        codec: Arc<ConfigCodec>,
        mut f: F,
    ) -> Self {
        let values = (0..codec.len()).map(|r| f(&codec.config(r))).collect();
        EmfState::new(codec, values)
    }

    pub fn value(&self, cfg: &Configuration) -> f64 {
        self.f[self.codec.rank(cfg)]
    }

    pub fn max(&self) -> f64 {
        self.f.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x))
    }
}

/// Apply the moment-flow generator at eigenvalue environment `lambda`
/// (1-based site k uses lambda[k-1]):
/// (L f)(xi) = sum_{k != l} xi_k (1 + 2 xi_l)
///             (f(xi^{kl}) - f(xi)) / (N (lambda_k - lambda_l)^2).
pub fn emf_generator(state: &EmfState, lambda: &[f64]) -> Result<Vec<f64>, EmfError> {
    let codec = &state.codec;
    let n_sites = codec.n_sites;
    assert_eq!(lambda.len(), n_sites);
    let min_gap = min_adjacent_gap(lambda);
    if min_gap < 1e-12 {
        return Err(EmfError::CoincidentEigenvalues { gap: min_gap });
    }
    let nf = n_sites as f64;
    let mut out = vec![0.0; codec.len()];
    let mut moved = vec![0u16; codec.n_particles];
    for r in 0..codec.len() {
        let sites = codec.sites(r);
        let fr = state.f[r];
        let mut acc = 0.0;
        let mut idx = 0;
        while idx < sites.len() {
            let k = sites[idx];
            let mut mult_k = 1u32;
            while idx + (mult_k as usize) < sites.len() && sites[idx + mult_k as usize] == k {
                mult_k += 1;
            }
            let lam_k = lambda[(k - 1) as usize];
            for l in 1..=n_sites as u16 {
                if l == k {
                    continue;
                }
                // multiplicity of l in this configuration
                let xi_l = sites.iter().filter(|&&s| s == l).count() as u32;
                let gap = lam_k - lambda[(l - 1) as usize];
                let rate = mult_k as f64 * (1.0 + 2.0 * xi_l as f64) / (nf * gap * gap);
                // construct the moved configuration's sorted site list
                move_sites(sites, k, l, &mut moved);
                let target = codec.rank_sites(&moved);
                acc += rate * (state.f[target] - fr);
            }
            idx += mult_k as usize;
        }
        out[r] = acc;
    }
    Ok(out)
}

/// Remove one occurrence of k and insert l, keeping the list sorted.
fn move_sites(sites: &[u16], k: u16, l: u16, out: &mut [u16]) {
    let mut removed = false;
    let mut tmp: Vec<u16> = Vec::with_capacity(sites.len());
    for &s in sites {
        if s == k && !removed {
            removed = true;
        } else {
            tmp.push(s);
        }
    }
    let pos = tmp.partition_point(|&s| s < l);
    tmp.insert(pos, l);
    out.copy_from_slice(&tmp);
}

fn min_adjacent_gap(lambda: &[f64]) -> f64 {
    let mut sorted = lambda.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sorted
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min)
}

/// Integrate the moment flow by RK4 along a frozen eigenvalue path up to
/// `t_final` (<= the last path time). Eigenvalues are held piecewise constant
/// within each grid cell; substeps are capped at 0.1 N min_gap(s)^2.
pub fn integrate_emf(
    f0: &EmfState,
    path: &LambdaPath,
    t_final: f64,
) -> Result<EmfState, EmfError> {
    let n_sites = f0.codec.n_sites;
    assert_eq!(path.n(), n_sites);
    let mut state = f0.clone();
    if t_final <= path.times[0] {
        return Ok(state);
    }
    for cell in 0..path.times.len() - 1 {
        let t0 = path.times[cell];
        if t0 >= t_final {
            break;
        }
        let t1 = path.times[cell + 1].min(t_final);
        if t1 <= t0 {
            continue;
        }
        let lam = &path.lambdas[cell];
        let min_gap = min_adjacent_gap(lam);
        if min_gap < 1e-12 {
            return Err(EmfError::CoincidentEigenvalues { gap: min_gap });
        }
        let cap = 0.1 * n_sites as f64 * min_gap * min_gap;
        let substeps = ((t1 - t0) / cap).ceil().max(1.0) as usize;
        let dt = (t1 - t0) / substeps as f64;
        for _ in 0..substeps {
            rk4_step(&mut state, lam, dt)?;
        }
    }
    if !state.f.iter().all(|x| x.is_finite()) {
        return Err(EmfError::CoincidentEigenvalues { gap: 0.0 });
    }
    Ok(state)
}

fn rk4_step(state: &mut EmfState, lambda: &[f64], dt: f64) -> Result<(), EmfError> {
    let k1 = emf_generator(state, lambda)?;
    let mut tmp = state.clone();
    axpy_into(&mut tmp.f, &state.f, &k1, 0.5 * dt);
    let k2 = emf_generator(&tmp, lambda)?;
    axpy_into(&mut tmp.f, &state.f, &k2, 0.5 * dt);
    let k3 = emf_generator(&tmp, lambda)?;
    axpy_into(&mut tmp.f, &state.f, &k3, dt);
    let k4 = emf_generator(&tmp, lambda)?;
    for i in 0..state.f.len() {
        state.f[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    Ok(())
}

fn axpy_into(dst: &mut [f64], base: &[f64], rate: &[f64], scale: f64) {
    for i in 0..dst.len() {
        dst[i] = base[i] + scale * rate[i];
    }
}

/// Initial data for the Monte Carlo moment estimator.
pub enum MomentInit<'a> {
    Fixed(&'a SymMatrix),
    Ensemble(&'a EnsembleSpec),
}

/// Unconditional mode averages over matrix DBM replicas; conditional mode
/// averages eigenvector-SDE replicas along a frozen eigenvalue path.
pub enum MomentMode<'a> {
    Unconditional,
    Conditional(&'a LambdaPath),
}

#[derive(Clone, Copy, Debug)]
pub struct MomentEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub replicas: usize,
}

/// Monte Carlo estimate of f_t(xi) = E[prod_k <q, sqrt(N) u_k(t)>^{2 xi_k}] / M(xi).
pub fn moment_mc(
    init: &MomentInit,
    q: &[f64],
    xi: &Configuration,
    t: f64,
    replicas: usize,
    mode: &MomentMode,
    seed: u64,
) -> Result<MomentEstimate, EmfError> {
    assert!(replicas >= 2, "need at least two replicas for a standard error");
    if xi.n_particles() == 0 {
        // empty product: exactly 1 with zero variance
        return Ok(MomentEstimate { mean: 1.0, stderr: 0.0, replicas });
    }
    let norm = xi.normalization();
    let values: Vec<f64> = match mode {
        MomentMode::Unconditional => (0..replicas as u64)
            .into_par_iter()
            .map(|r| -> Result<f64, EmfError> {
                let h0 = match init {
                    MomentInit::Fixed(m) => (*m).clone(),
                    MomentInit::Ensemble(spec) => sample_real(spec, r)?,
                };
                let h_t = if t > 0.0 {
                    let rng = CounterRng::new(seed, r).substream(0xD13);
                    additive_step(&h0, t, &rng)
                } else {
                    h0
                };
                let s = eigh(&h_t)?;
                Ok(moment_value(&s, q, xi) / norm)
            })
            .collect::<Result<_, _>>()?,
        MomentMode::Conditional(path) => {
            let m = match init {
                MomentInit::Fixed(m) => *m,
                MomentInit::Ensemble(_) => return Err(EmfError::ConditionalNeedsFixedInit),
            };
            let s0 = eigh(m)?;
            let basis0 = match &s0.basis {
                EigenBasis::Real(u) => u.clone(),
                EigenBasis::Complex(_) => unreachable!(),
            };
            let n = m.n;
            let nf = n as f64;
            (0..replicas as u64)
                .into_par_iter()
                .map(|r| -> Result<f64, EmfError> {
                    let u = eigenvector_sde(&basis0, n, path, seed, r)?;
                    let mut val = 1.0;
                    for (site, mult) in xi.occupied() {
                        let col = &u[(site - 1) * n..site * n];
                        let dot: f64 = col.iter().zip(q).map(|(a, b)| a * b).sum();
                        val *= (nf * dot * dot).powi(mult as i32);
                    }
                    Ok(val / norm)
                })
                .collect::<Result<_, _>>()?
        }
    };
    let (mean, stderr) = mean_stderr(&values);
    Ok(MomentEstimate { mean, stderr, replicas })
}

/// prod over occupied sites of (N <q, u_site>^2)^mult for a Spectrum.
fn moment_value(s: &crate::linalg::Spectrum, q: &[f64], xi: &Configuration) -> f64 {
    let nf = s.n as f64;
    let mut val = 1.0;
    for (site, mult) in xi.occupied() {
        val *= (nf * s.proj2(q, site - 1)).powi(mult as i32);
    }
    val
}
