//! Level-repulsion toolkit: sub-microscopic intervals, eigenvalue counts,
//! exact GUE determinantal expected counts via the Hermite kernel, Chernoff
//! tail bounds, GOE/GUE decimation, and Monte Carlo tail estimators.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::ensembles::{sample_complex, sample_real, EnsembleError, EnsembleSpec, Symmetry};
use crate::linalg::{eigvalsh, eigvalsh_herm, LinalgError};
use crate::quad::adaptive_simpson;
use crate::stats::wilson_interval;

#[derive(Debug, Error)]
pub enum LevelRepError {
    #[error("Hermite recurrence budget is N <= {cap}, requested {n}")]
    KernelOrderTooLarge { n: usize, cap: usize },
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Recurrence stability budget for the Hermite-function kernel.
pub const KERNEL_ORDER_CAP: usize = 500;

/// kappa(E) = max(N^{-2/3}, min(|E + 2|, |E - 2|)): distance to the nearest
/// spectral edge, floored at the edge fluctuation scale.
pub fn kappa(e: f64, n: usize) -> f64 {
    let dist = (e + 2.0).abs().min((e - 2.0).abs());
    dist.max((n as f64).powf(-2.0 / 3.0))
}

/// Sub-microscopic interval centered at E with half-width
/// a N^{-delta} / (N sqrt(kappa(E))).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct RepulsionInterval {
    pub center: f64,
    pub half_width: f64,
    pub delta: f64,
    pub a: f64,
    pub n: usize,
}

impl RepulsionInterval {
    pub fn at_energy(e: f64, delta: f64, a: f64, n: usize) -> Self {
        let nf = n as f64;
        let half_width = a * nf.powf(-delta) / (nf * kappa(e, n).sqrt());
        assert!(half_width > 0.0);
        RepulsionInterval { center: e, half_width, delta, a, n }
    }

    /// Interval I_delta(x) with the index-dependent scaling
    /// a N^{-delta} / (N^{2/3} i_hat^{1/3}) used around a realized
    /// eigenvalue of index i (1-based).
    pub fn at_index(x: f64, i: usize, delta: f64, a: f64, n: usize) -> Self {
        let nf = n as f64;
        let i_hat = i.min(n + 1 - i) as f64;
        let half_width = a * nf.powf(-delta) / (nf.powf(2.0 / 3.0) * i_hat.powf(1.0 / 3.0));
        RepulsionInterval { center: x, half_width, delta, a, n }
    }

    pub fn lo(&self) -> f64 {
        self.center - self.half_width
    }

    pub fn hi(&self) -> f64 {
        self.center + self.half_width
    }
}

/// Binary-search count of sorted eigenvalues inside [lo, hi].
pub fn count_in_interval(sorted: &[f64], lo: f64, hi: f64) -> usize {
    if hi < lo {
        return 0;
    }
    let a = sorted.partition_point(|&x| x < lo);
    let b = sorted.partition_point(|&x| x <= hi);
    b - a
}

/// Hermite functions psi_0..psi_{n-1} at x (orthonormal w.r.t. dx):
/// psi_0 = (2 pi)^{-1/4} e^{-x^2/4},
/// psi_{k+1} = x psi_k / sqrt(k+1) - sqrt(k/(k+1)) psi_{k-1}.
pub fn hermite_functions(n: usize, x: f64) -> Vec<f64> {
    let mut psi = vec![0.0; n];
    let p0 = (-x * x / 4.0).exp() / (2.0 * std::f64::consts::PI).powf(0.25);
    if n >= 1 {
        psi[0] = p0;
    }
    if n >= 2 {
        psi[1] = x * p0;
    }
    for k in 1..n.saturating_sub(1) {
        let kf = k as f64;
        psi[k + 1] = x * psi[k] / (kf + 1.0).sqrt() - (kf / (kf + 1.0)).sqrt() * psi[k - 1];
    }
    psi
}

/// Kernel diagonal K_N(x, x) = sum_{k<N} psi_k(x)^2.
pub fn kernel_diag(n: usize, x: f64) -> f64 {
    hermite_functions(n, x).iter().map(|p| p * p).sum()
}

/// Kernel K_N(x, y).
pub fn kernel(n: usize, x: f64, y: f64) -> f64 {
    let px = hermite_functions(n, x);
    let py = hermite_functions(n, y);
    px.iter().zip(&py).map(|(a, b)| a * b).sum()
}

fn check_order(n: usize) -> Result<(), LevelRepError> {
    if n > KERNEL_ORDER_CAP {
        Err(LevelRepError::KernelOrderTooLarge { n, cap: KERNEL_ORDER_CAP })
    } else {
        Ok(())
    }
}

/// Expected number of GUE_N eigenvalues in [lo, hi] (eigenvalue units, the
/// convention with spectrum on [-2, 2]): the eigenvalue points scaled by
/// sqrt(N) form the determinantal process with kernel K_N, so
/// E[count] = integral over sqrt(N) [lo, hi] of K_N(x, x) dx.
pub fn gue_expected_count(n: usize, lo: f64, hi: f64) -> Result<f64, LevelRepError> {
    check_order(n)?;
    if hi <= lo {
        return Ok(0.0);
    }
    let s = (n as f64).sqrt();
    // clip to the numerically supported range; the kernel mass beyond the
    // edge padding is far below the quadrature tolerance
    let pad = 8.0;
    let xl = (lo * s).max(-2.0 * s - pad);
    let xh = (hi * s).min(2.0 * s + pad);
    if xh <= xl {
        return Ok(0.0);
    }
    Ok(adaptive_simpson(&|x| kernel_diag(n, x), xl, xh, 1e-8))
}

/// Second factorial moment E[X (X - 1)] of the GUE count on [lo, hi]:
/// double integral of K(x,x) K(y,y) - K(x,y)^2.
pub fn gue_count_factorial_moment2(n: usize, lo: f64, hi: f64) -> Result<f64, LevelRepError> {
    check_order(n)?;
    if hi <= lo {
        return Ok(0.0);
    }
    let s = (n as f64).sqrt();
    let (xl, xh) = (lo * s, hi * s);
    // composite Simpson grid; the integrand is smooth on interval scales
    let panels = 64usize;
    let nodes = 2 * panels + 1;
    let h = (xh - xl) / (nodes - 1) as f64;
    let xs: Vec<f64> = (0..nodes).map(|i| xl + h * i as f64).collect();
    let psis: Vec<Vec<f64>> = xs.iter().map(|&x| hermite_functions(n, x)).collect();
    let diag: Vec<f64> = psis.iter().map(|p| p.iter().map(|v| v * v).sum()).collect();
    let w = |i: usize| -> f64 {
        if i == 0 || i == nodes - 1 {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        }
    };
    let mut acc = 0.0;
    for i in 0..nodes {
        for j in 0..nodes {
            let kxy: f64 = psis[i].iter().zip(&psis[j]).map(|(a, b)| a * b).sum();
            acc += w(i) * w(j) * (diag[i] * diag[j] - kxy * kxy);
        }
    }
    Ok(acc * (h / 3.0) * (h / 3.0))
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ChernoffBound {
    pub value: f64,
    /// true when k <= expected count and the bound is trivially 1
    pub vacuous: bool,
}

/// Poissonization bound P(count >= k) <= exp(-lambda k + (e^lambda - 1) E)
/// for a sum of independent Bernoullis with mean E. With `lambda_param`
/// given the displayed bound is evaluated; otherwise the bound is minimized
/// over lambda > 0 (closed form lambda* = log(k / E) when k > E).
pub fn chernoff_tail_bound(k: u64, expected: f64, lambda_param: Option<f64>) -> ChernoffBound {
    assert!(expected >= 0.0 && k >= 1);
    let kf = k as f64;
    if let Some(l) = lambda_param {
        assert!(l > 0.0);
        return ChernoffBound {
            value: (-l * kf + (l.exp() - 1.0) * expected).exp(),
            vacuous: false,
        };
    }
    if kf <= expected {
        return ChernoffBound { value: 1.0, vacuous: true };
    }
    if expected == 0.0 {
        // limit lambda -> infinity
        return ChernoffBound { value: 0.0, vacuous: false };
    }
    let value = (expected / kf).powf(kf) * (kf - expected).exp();
    ChernoffBound { value, vacuous: false }
}

/// Sample the decimated superposition: eigenvalues of independent GOE_N and
/// GOE_{N+1} merged on the common axis, keeping the even (1-based) positions
/// of the 2N+1 sorted points. The (N+1)-point ensemble is rescaled by
/// sqrt((N+1)/N) so both live at the same Gaussian weight; the result is
/// distributed as GUE_N eigenvalues (checked against the kernel in tests).
pub fn decimate_goe_pair(n: usize, seed: u64, stream: u64) -> Result<Vec<f64>, LevelRepError> {
    let spec_a = EnsembleSpec::goe(n, seed);
    let spec_b = EnsembleSpec::goe(n + 1, seed ^ 0x5bf0_3635);
    let la = eigvalsh(&sample_real(&spec_a, stream)?)?;
    let lb = eigvalsh(&sample_real(&spec_b, stream)?)?;
    let scale = ((n + 1) as f64 / n as f64).sqrt();
    let mut merged: Vec<f64> = la.into_iter().chain(lb.into_iter().map(|x| x * scale)).collect();
    merged.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // 1-based even positions 2, 4, ..., 2N of the 2N+1 points
    Ok(merged.iter().skip(1).step_by(2).copied().collect())
}

/// What the tail estimator measures per replica.
#[derive(Clone, Copy, Debug)]
pub enum TailTarget {
    /// counts in the interval centered at the realized eigenvalue of this
    /// 1-based index (interval scaling of I_delta(lambda_i))
    Index(usize),
    /// counts in the fixed-energy interval of the kappa scaling
    Energy(f64),
    /// adjacent-gap event lambda_{i+1} - lambda_i < N^{-delta} /
    /// (N^{2/3} i_hat^{1/3}) at this 1-based index
    Gap(usize),
}

/// Empirical tail probabilities with Wilson intervals.
#[derive(Clone, Debug, Serialize)]
pub struct TailEstimate {
    pub ks: Vec<u64>,
    pub p_hat: Vec<f64>,
    pub ci_lo: Vec<f64>,
    pub ci_hi: Vec<f64>,
    pub replicas: u64,
}

impl TailEstimate {
    pub fn to_csv<W: std::io::Write>(&self, w: W) -> csv::Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["k", "p_hat", "ci_lo", "ci_hi", "n"])?;
        for i in 0..self.ks.len() {
            wtr.write_record([
                self.ks[i].to_string(),
                format!("{}", self.p_hat[i]),
                format!("{}", self.ci_lo[i]),
                format!("{}", self.ci_hi[i]),
                self.replicas.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Monte Carlo tail estimator: per-k empirical P(count >= k) (or the
/// small-gap probability in gap mode) over seeded replicas.
pub fn gap_tail_mc(
    spec: &EnsembleSpec,
    target: TailTarget,
    delta: f64,
    a: f64,
    ks: &[u64],
    replicas: u64,
) -> Result<TailEstimate, LevelRepError> {
    assert!(replicas >= 100, "tail estimates need >= 100 replicas");
    let n = spec.n();
    let events: Vec<Vec<bool>> = (0..replicas)
        .into_par_iter()
        .map(|r| -> Result<Vec<bool>, LevelRepError> {
            let lambda = match spec.symmetry {
                Symmetry::Real => eigvalsh(&sample_real(spec, r)?)?,
                Symmetry::Complex => eigvalsh_herm(&sample_complex(spec, r)?)?,
            };
            Ok(match target {
                TailTarget::Index(i) => {
                    let iv = RepulsionInterval::at_index(lambda[i - 1], i, delta, a, n);
                    let c = count_in_interval(&lambda, iv.lo(), iv.hi()) as u64;
                    ks.iter().map(|&k| c >= k).collect()
                }
                TailTarget::Energy(e) => {
                    let iv = RepulsionInterval::at_energy(e, delta, a, n);
                    let c = count_in_interval(&lambda, iv.lo(), iv.hi()) as u64;
                    ks.iter().map(|&k| c >= k).collect()
                }
                TailTarget::Gap(i) => {
                    let nf = n as f64;
                    let i_hat = i.min(n - i) as f64;
                    let thresh =
                        nf.powf(-delta) / (nf.powf(2.0 / 3.0) * i_hat.powf(1.0 / 3.0));
                    let small = lambda[i] - lambda[i - 1] < thresh;
                    ks.iter().map(|_| small).collect()
                }
            })
        })
        .collect::<Result<_, _>>()?;
    let mut p_hat = Vec::with_capacity(ks.len());
    let mut ci_lo = Vec::with_capacity(ks.len());
    let mut ci_hi = Vec::with_capacity(ks.len());
    for j in 0..ks.len() {
        let succ = events.iter().filter(|e| e[j]).count() as u64;
        let (lo, hi) = wilson_interval(succ, replicas);
        p_hat.push(succ as f64 / replicas as f64);
        ci_lo.push(lo);
        ci_hi.push(hi);
    }
    Ok(TailEstimate { ks: ks.to_vec(), p_hat, ci_lo, ci_hi, replicas })
}
