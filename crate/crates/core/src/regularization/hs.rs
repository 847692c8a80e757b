//! Helffer-Sjostrand regularized eigenvalues.
//!
//! lambda~_i = gamma_j + integral over I = [gamma_j, gamma_k] of r_i(F_E) dE,
//! where F_E approximates the mollified eigenvalue counting function through
//! three resolvent integrals (the almost-analytic-extension terms), j and k
//! sit 1.5 N^{eps1} quantiles away from i, and eta_1 = N^{-2/3-delta1}
//! i_hat^{-1/3} is the smoothing scale.
//!
//! Quadrature: the sigma integrals and the smoothing-edge integrals use
//! fixed composite Simpson panels (log-spaced in sigma below the cutoff
//! transition) so that the E-independent pieces can be cached across the
//! outer adaptive-Simpson sweep in E; `lambda_tilde_checked` re-runs at
//! doubled resolution and reports disagreement beyond tolerance.

use num_complex::Complex64;

use super::mollifier::{smoothstep5, smoothstep5_deriv, MollifierSpec};
use super::{RegError, RegParams};
use crate::quad::adaptive_simpson;
use crate::semicircle::{classical_locations, ClassicalLocations};

/// Composite Simpson nodes and weights on [a, b].
fn simpson_nodes(a: f64, b: f64, panels: usize) -> Vec<(f64, f64)> {
    let n = 2 * panels;
    let h = (b - a) / n as f64;
    (0..=n)
        .map(|i| {
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            (a + h * i as f64, w * h / 3.0)
        })
        .collect()
}

pub struct HsRegularizer {
    pub n: usize,
    pub params: RegParams,
    pub gammas: ClassicalLocations,
}

/// Scale of the closeness target N^{eps1 - delta1} N^{-2/3} i_hat^{-1/3}.
pub fn closeness_scale(n: usize, i: usize, delta1: f64, eps1: f64) -> f64 {
    let nf = n as f64;
    let i_hat = i.min(n + 1 - i) as f64;
    nf.powf(eps1 - delta1) * nf.powf(-2.0 / 3.0) * i_hat.powf(-1.0 / 3.0)
}

impl HsRegularizer {
    pub fn new(n: usize, params: RegParams) -> Result<Self, RegError> {
        params.validate()?;
        Ok(HsRegularizer { n, params, gammas: classical_locations(n) })
    }

    fn eta1(&self, i: usize) -> f64 {
        let nf = self.n as f64;
        let i_hat = i.min(self.n + 1 - i) as f64;
        nf.powf(-2.0 / 3.0 - self.params.delta1) * i_hat.powf(-1.0 / 3.0)
    }

    /// Quantile window [gamma_j, gamma_k] with j,k = i -+ ceil(1.5 N^{eps1}).
    fn window(&self, i: usize) -> (f64, f64) {
        let off = (1.5 * (self.n as f64).powf(self.params.eps1)).ceil() as i64;
        let lo = self.gammas.extended(i as i64 - off);
        let hi = self.gammas.extended(i as i64 + off);
        (lo, hi)
    }

    /// Regularized eigenvalue lambda~_i (i is 1-based) for the given
    /// ascending spectrum, at standard quadrature resolution.
    pub fn lambda_tilde(&self, lambda: &[f64], i: usize) -> f64 {
        self.lambda_tilde_at(lambda, i, 1)
    }

    /// As `lambda_tilde`, with a refinement audit: the result at doubled
    /// panel counts must agree within 10x the E-integration tolerance.
    pub fn lambda_tilde_checked(&self, lambda: &[f64], i: usize) -> Result<f64, RegError> {
        let coarse = self.lambda_tilde_at(lambda, i, 1);
        let fine = self.lambda_tilde_at(lambda, i, 2);
        let tol = 10.0 * 1e-3 * closeness_scale(self.n, i, self.params.delta1, self.params.eps1);
        if (coarse - fine).abs() > tol {
            return Err(RegError::QuadratureDisagreement {
                index: i,
                coarse,
                fine,
                tol,
            });
        }
        Ok(fine)
    }

    fn lambda_tilde_at(&self, lambda: &[f64], i: usize, refine: usize) -> f64 {
        assert_eq!(lambda.len(), self.n);
        assert!((1..=self.n).contains(&i));
        let (e_lo, e_hi) = self.window(i);
        let ctx = FeCtx::new(self, lambda, i, e_lo, refine);
        let r = MollifierSpec::step_down(i as f64 - 1.0, i as f64 - 0.5);
        let tol = 1e-3 * closeness_scale(self.n, i, self.params.delta1, self.params.eps1);
        let integral = adaptive_simpson(&|e| r.eval(ctx.f_e(e)), e_lo, e_hi, tol);
        e_lo + integral
    }

    /// The smoothed counting functional F_E itself (used by the trace
    /// comparison tests and the audit reports).
    pub fn f_e(&self, lambda: &[f64], i: usize, e: f64) -> f64 {
        let (e_lo, _) = self.window(i);
        let ctx = FeCtx::new(self, lambda, i, e_lo.min(e), 1);
        ctx.f_e(e)
    }

    /// Mollified spectral indicator Tr f_E evaluated directly on the
    /// eigenvalues (the spectral side of the trace comparison).
    pub fn trace_f_e(&self, lambda: &[f64], i: usize, e: f64) -> f64 {
        let eta1 = self.eta1(i);
        lambda
            .iter()
            .map(|&l| {
                // 1 on [-10, E], quintic fall over [E, E + eta1] and rise
                // over [-11, -10]
                smoothstep5((l + 11.0) / 1.0) * (1.0 - smoothstep5((l - e) / eta1))
            })
            .sum()
    }
}

/// Per-(lambda, i) quadrature context with E-independent caches.
struct FeCtx<'a> {
    lam: &'a [f64],
    n: f64,
    eta1: f64,
    chi: MollifierSpec,
    /// sigma nodes on [1, 2] for the cutoff-transition term
    a_nodes: Vec<(f64, f64)>,
    /// log-sigma nodes on [ln eta1, ln 2]
    b_nodes: Vec<(f64, f64)>,
    /// E-window left end (start of the running plateau integral)
    e0: f64,
    /// per A-node: integral of Im m over [-10, e0]
    a_plateau_im: Vec<f64>,
    /// per A-node: (integral of s(u) Im m du, integral of s'(u) Re m du)
    /// over the rising edge [-11, -10]
    a_rise: Vec<(f64, f64)>,
    /// per B-node: integral of s'(u) Re m du over the rising edge
    b_rise_re: Vec<f64>,
    /// rising-edge s' Re integral at sigma = eta1 (the boundary term)
    c_rise_re: f64,
    /// edge nodes on u in [0, 1]
    edge_nodes: Vec<(f64, f64)>,
    /// nodes for the running plateau increment [e0, E]
    inc_panels: usize,
}

impl<'a> FeCtx<'a> {
    fn new(hs: &HsRegularizer, lam: &'a [f64], i: usize, e0: f64, refine: usize) -> Self {
        let eta1 = hs.eta1(i);
        let chi = MollifierSpec::step_down(1.0, 2.0);
        let a_nodes = simpson_nodes(1.0, 2.0, 8 * refine);
        let b_nodes = simpson_nodes(eta1.ln(), 2.0_f64.ln(), 32 * refine);
        let edge_nodes = simpson_nodes(0.0, 1.0, 6 * refine);
        let mut ctx = FeCtx {
            lam,
            n: lam.len() as f64,
            eta1,
            chi,
            a_nodes,
            b_nodes,
            e0,
            a_plateau_im: Vec::new(),
            a_rise: Vec::new(),
            b_rise_re: Vec::new(),
            c_rise_re: 0.0,
            edge_nodes,
            inc_panels: 4 * refine,
        };
        ctx.a_plateau_im = ctx
            .a_nodes
            .iter()
            .map(|&(sig, _)| ctx.plateau_im(-10.0, e0, sig, 60 * refine))
            .collect();
        ctx.a_rise = ctx.a_nodes.iter().map(|&(sig, _)| ctx.rising_edge(sig)).collect();
        ctx.b_rise_re = ctx
            .b_nodes
            .iter()
            .map(|&(v, _)| ctx.rising_edge(v.exp()).1)
            .collect();
        ctx.c_rise_re = ctx.rising_edge(eta1).1;
        ctx
    }

    #[inline]
    fn m(&self, e: f64, sigma: f64) -> Complex64 {
        let mut re = 0.0;
        let mut im = 0.0;
        for &l in self.lam {
            let dx = l - e;
            let den = dx * dx + sigma * sigma;
            re += dx / den;
            im += sigma / den;
        }
        Complex64::new(re / self.n, im / self.n)
    }

    /// (integral of f_E Im m de, integral of s'(u) Re m du) over the falling
    /// edge [E, E + eta1]; f_E = 1 - s(u) there and de = eta1 du.
    fn falling_edge(&self, e: f64, sigma: f64) -> (f64, f64) {
        let mut im_int = 0.0;
        let mut re_int = 0.0;
        for &(u, w) in &self.edge_nodes {
            let m = self.m(e + u * self.eta1, sigma);
            im_int += w * (1.0 - smoothstep5(u)) * m.im;
            re_int += w * smoothstep5_deriv(u, 1) * m.re;
        }
        (im_int * self.eta1, re_int)
    }

    /// (integral of f_E Im m de, integral of s'(u) Re m du) over the rising
    /// edge [-11, -10]; f_E = s(u) there with unit width.
    fn rising_edge(&self, sigma: f64) -> (f64, f64) {
        let mut im_int = 0.0;
        let mut re_int = 0.0;
        for &(u, w) in &self.edge_nodes {
            let m = self.m(-11.0 + u, sigma);
            im_int += w * smoothstep5(u) * m.im;
            re_int += w * smoothstep5_deriv(u, 1) * m.re;
        }
        (im_int, re_int)
    }

    fn plateau_im(&self, a: f64, b: f64, sigma: f64, panels: usize) -> f64 {
        if b <= a {
            return 0.0;
        }
        simpson_nodes(a, b, panels)
            .iter()
            .map(|&(e, w)| w * self.m(e, sigma).im)
            .sum()
    }

    /// The three-term counting functional at energy E.
    fn f_e(&self, e: f64) -> f64 {
        let pi = std::f64::consts::PI;
        // cutoff-transition term (sigma in [1, 2]):
        // -(N/pi) int chi'(sigma) [ int f_E Im m de + sigma int f'_E Re m de ]
        let mut a_sum = 0.0;
        for (idx, &(sig, w)) in self.a_nodes.iter().enumerate() {
            let chi_p = self.chi.deriv(sig, 1);
            if chi_p == 0.0 {
                continue;
            }
            let (fall_im, fall_re) = self.falling_edge(e, sig);
            let (rise_im, rise_re) = self.a_rise[idx];
            let inc = self.plateau_im(self.e0, e, sig, self.inc_panels);
            let f_im = rise_im + self.a_plateau_im[idx] + inc + fall_im;
            let fprime_re = rise_re - fall_re;
            a_sum += w * chi_p * (f_im + sig * fprime_re);
        }
        let term_a = -(self.n / pi) * a_sum;

        // bulk-sigma term: (N/pi) int_{eta1}^{2} (chi + sigma chi')
        //                  [ int f'_E Re m de ] dsigma, log-substituted
        let mut b_sum = 0.0;
        for (idx, &(v, w)) in self.b_nodes.iter().enumerate() {
            let sig = v.exp();
            let shape = self.chi.eval(sig) + sig * self.chi.deriv(sig, 1);
            if shape == 0.0 {
                continue;
            }
            let (_, fall_re) = self.falling_edge(e, sig);
            b_sum += w * sig * shape * (self.b_rise_re[idx] - fall_re);
        }
        let term_b = (self.n / pi) * b_sum;

        // boundary term at sigma = eta1
        let (_, fall_re_c) = self.falling_edge(e, self.eta1);
        let term_c = (self.n / pi) * self.eta1 * (self.c_rise_re - fall_re_c);

        term_a + term_b + term_c
    }
}
