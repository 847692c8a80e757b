//! Helffer-Sjostrand regularized eigenvalues/eigenvector projections,
//! smoothed counting and cutoff observables, the free-energy observable,
//! good-event checkers, and finite-difference derivative audits.

mod events;
mod hs;
mod mollifier;

pub use events::{
    event_check, reg_audit, EventGrid, EventReport, RegAuditEntry, RegAuditReport, RegContext,
    TObservable,
};
pub use hs::{closeness_scale, HsRegularizer};
pub use mollifier::{smoothstep5, smoothstep5_deriv, MollifierSpec, SMOOTHSTEP5_DERIV_SUP};

use serde::Serialize;
use thiserror::Error;

use crate::linalg::SymMatrix;

#[derive(Debug, Error)]
pub enum RegError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(
        "quadrature refinement disagreement at index {index}: {coarse} vs {fine} (tol {tol})"
    )]
    QuadratureDisagreement { index: usize, coarse: f64, fine: f64, tol: f64 },
}

/// The regularization parameter tuple. The hierarchy of the parameter-fixing
/// display is eps2 = delta1/10^2, delta2 = delta1/10^3, eps1 = delta1/10^4,
/// nu = omega = delta1/10^5, beta = N^{delta1}.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct RegParams {
    pub delta1: f64,
    pub eps1: f64,
    pub delta2: f64,
    pub eps2: f64,
    pub omega: f64,
    pub nu: f64,
    pub k: u32,
    pub beta: f64,
}

impl RegParams {
    /// Standard hierarchy driven by delta1, with beta = N^{delta1} and the
    /// cutoff count k defaulting to 10.
    pub fn from_delta1(delta1: f64, n: usize) -> Self {
        assert!(delta1 > 0.0);
        RegParams {
            delta1,
            eps1: delta1 / 1e4,
            delta2: delta1 / 1e3,
            eps2: delta1 / 1e2,
            omega: delta1 / 1e5,
            nu: delta1 / 1e5,
            k: 10,
            beta: (n as f64).powf(delta1),
        }
    }

    pub fn validate(&self) -> Result<(), RegError> {
        if !(self.delta1 > self.eps1) {
            return Err(RegError::InvalidParams(format!(
                "need delta1 > eps1, got {} <= {}",
                self.delta1, self.eps1
            )));
        }
        if !(self.eps2 > self.delta2) {
            return Err(RegError::InvalidParams(format!(
                "need eps2 > delta2, got {} <= {}",
                self.eps2, self.delta2
            )));
        }
        for (name, v) in [
            ("delta1", self.delta1),
            ("eps1", self.eps1),
            ("delta2", self.delta2),
            ("eps2", self.eps2),
            ("omega", self.omega),
            ("nu", self.nu),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(RegError::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Eigenvalue counting function: #{k : lambda_k in [-10, E]}.
pub fn counting_function(lambda: &[f64], e: f64) -> usize {
    assert!(e >= -10.0, "counting function is defined for E >= -10");
    lambda.iter().filter(|&&l| (-10.0..=e).contains(&l)).count()
}

/// Free energy A_beta(w) = beta^{-1} log sum_i exp(beta w_i), computed with
/// the max shift so overflow cannot occur. Always within 2 log N / beta of
/// the maximum (strictly, for N >= 2).
pub fn free_energy(w: &[f64], beta: f64) -> f64 {
    assert!(beta > 0.0);
    assert!(!w.is_empty());
    let max = w.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let sum: f64 = w.iter().map(|&x| (beta * (x - max)).exp()).sum();
    max + sum.ln() / beta
}

/// Smoothed threshold S = f_eps(A_beta(v)): exactly 0 when the free energy
/// sits below (2 + eps) log N, exactly 1 above (2 + 2 eps) log N, weakly
/// increasing in between (and hence in every v_i).
pub fn smoothed_threshold_s(v: &[f64], eps: f64, beta: f64, n: usize) -> f64 {
    assert!(eps > 0.0);
    let log_n = (n as f64).ln();
    let f = MollifierSpec::step_up((2.0 + eps) * log_n, (2.0 + 2.0 * eps) * log_n);
    f.eval(free_energy(v, beta))
}

/// Symmetric entry bump M + t (E_ab + E_ba) (diagonal bumps add t once).
pub fn bump_entry(m: &SymMatrix, a: usize, b: usize, t: f64) -> SymMatrix {
    let mut out = m.clone();
    out.set_sym(a, b, m.get(a, b) + t);
    out
}

/// Central finite-difference estimate of the order-th derivative of `f`
/// with respect to the symmetric (a, b) matrix coordinate, Richardson
/// extrapolated across h and h/2.
pub fn finite_diff<F: Fn(&SymMatrix) -> f64>(
    f: F,
    m: &SymMatrix,
    a: usize,
    b: usize,
    order: u32,
    h: f64,
) -> f64 {
    assert!(h > 0.0);
    assert!((1..=3).contains(&order));
    let eval = |t: f64| f(&bump_entry(m, a, b, t));
    let stencil = |h: f64| -> f64 {
        match order {
            1 => (eval(h) - eval(-h)) / (2.0 * h),
            2 => (eval(h) - 2.0 * eval(0.0) + eval(-h)) / (h * h),
            _ => (eval(2.0 * h) - 2.0 * eval(h) + 2.0 * eval(-h) - eval(-2.0 * h))
                / (2.0 * h * h * h),
        }
    };
    // both stencils are O(h^2) accurate; Richardson removes the leading term
    let d_h = stencil(h);
    let d_h2 = stencil(h / 2.0);
    (4.0 * d_h2 - d_h) / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::eigvalsh;
    use crate::rng::CounterRng;

    #[test]
    fn params_hierarchy_and_validation() {
        let p = RegParams::from_delta1(0.1, 100);
        assert!(p.validate().is_ok());
        assert!((p.eps2 - 1e-3).abs() < 1e-18);
        assert!((p.delta2 - 1e-4).abs() < 1e-18);
        assert!((p.eps1 - 1e-5).abs() < 1e-18);
        assert!((p.beta - 100.0_f64.powf(0.1)).abs() < 1e-12);
        let bad = RegParams { eps1: 0.2, ..p };
        assert!(bad.validate().is_err());
        let bad2 = RegParams { delta2: 0.05, ..p };
        assert!(bad2.validate().is_err());
    }

    #[test]
    fn counting_function_cases() {
        let lam = [-0.5, 0.1, 0.1, 2.0];
        assert_eq!(counting_function(&lam, -1.0), 0);
        assert_eq!(counting_function(&lam, 5.0), 4);
        assert_eq!(counting_function(&lam, 0.1), 3);
        assert_eq!(counting_function(&lam, 1.0), 3);
        // eigenvalues below -10 are outside the window by definition
        assert_eq!(counting_function(&[-12.0, 0.0], 1.0), 1);
    }

    #[test]
    fn free_energy_closed_forms() {
        let n = 64;
        let beta = 3.0;
        let w = vec![0.7; n];
        let a = free_energy(&w, beta);
        assert!((a - (0.7 + (n as f64).ln() / beta)).abs() < 1e-12);
        assert_eq!(free_energy(&[42.0], 5.0), 42.0);
        // overflow safety
        let big = vec![1e6, 1e6 - 1.0];
        assert!(free_energy(&big, 10.0).is_finite());
    }

    #[test]
    fn entropy_gap_holds() {
        let rng = CounterRng::new(100, 0);
        let mut idx = 0u64;
        for &n in &[2usize, 10, 100] {
            for &beta in &[1.0, 10.0, (n as f64).powf(0.1)] {
                for _ in 0..200 {
                    let w: Vec<f64> = (0..n)
                        .map(|_| {
                            idx += 1;
                            4.0 * rng.uniform_at(idx) - 2.0
                        })
                        .collect();
                    let a = free_energy(&w, beta);
                    let max = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    assert!((max - a).abs() < 2.0 * (n as f64).ln() / beta);
                }
            }
        }
    }

    #[test]
    fn threshold_plateaus_and_monotonicity() {
        let n = 100;
        let eps = 0.3;
        let beta = 2.0;
        let log_n = (n as f64).ln();
        // A_beta below (2 + eps) log N -> 0
        let low = vec![(2.0 + 0.5 * eps) * log_n / 1.0 - 5.0; 1];
        assert_eq!(smoothed_threshold_s(&low, eps, beta, n), 0.0);
        // above (2 + 2 eps) log N -> 1
        let high = vec![(2.0 + 2.5 * eps) * log_n; 1];
        assert_eq!(smoothed_threshold_s(&high, eps, beta, n), 1.0);
        // 3-point scan across the transition is monotone
        let mid = (2.0 + 1.5 * eps) * log_n;
        let v1 = smoothed_threshold_s(&[mid - 0.1], eps, beta, n);
        let v2 = smoothed_threshold_s(&[mid], eps, beta, n);
        let v3 = smoothed_threshold_s(&[mid + 0.1], eps, beta, n);
        assert!(v1 < v2 && v2 < v3);
        assert!(v2 > 0.0 && v2 < 1.0);
    }

    #[test]
    fn finite_diff_trivial_cases() {
        let m = SymMatrix::from_upper(4, |i, j| (i + j) as f64 * 0.1);
        // the entry itself: first derivative 1, second 0
        let f = |mm: &SymMatrix| mm.get(1, 3);
        assert!((finite_diff(f, &m, 1, 3, 1, 1e-3) - 1.0).abs() < 1e-10);
        assert!(finite_diff(f, &m, 1, 3, 2, 1e-3).abs() < 1e-8);
        // eigenvalue of a diagonal matrix under a diagonal bump: slope 1
        let d = SymMatrix::from_upper(3, |i, j| if i == j { [0.0, 1.0, 2.0][i] } else { 0.0 });
        let f_mid = |mm: &SymMatrix| eigvalsh(mm).unwrap()[1];
        assert!((finite_diff(f_mid, &d, 1, 1, 1, 1e-4) - 1.0).abs() < 1e-8);
        // third order of a cubic in the entry is exact
        let g = |mm: &SymMatrix| mm.get(0, 1).powi(3);
        assert!((finite_diff(g, &m, 0, 1, 3, 1e-2) - 6.0).abs() < 1e-6);
    }
}
