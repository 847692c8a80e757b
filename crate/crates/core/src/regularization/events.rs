//! Regularized eigenvector projections, the smoothed cutoff observable T,
//! good-event checkers, and the regularization audit report.

use serde::Serialize;

use super::hs::{closeness_scale, HsRegularizer};
use super::mollifier::MollifierSpec;
use super::{RegError, RegParams};
use crate::levelrep::count_in_interval;
use crate::linalg::{resolvent_qform, stieltjes, Spectrum};
use crate::quad::adaptive_simpson_rel;
use crate::semicircle::{m_sc, HalfPlanePoint};

/// Shared handle for the regularized quantities of one matrix order.
pub struct RegContext {
    pub hs: HsRegularizer,
}

impl RegContext {
    pub fn new(n: usize, params: RegParams) -> Result<Self, RegError> {
        Ok(RegContext { hs: HsRegularizer::new(n, params)? })
    }

    pub fn n(&self) -> usize {
        self.hs.n
    }

    pub fn params(&self) -> &RegParams {
        &self.hs.params
    }

    fn i_hat(&self, ell: usize) -> f64 {
        ell.min(self.n() + 1 - ell) as f64
    }

    /// eta_ell = N^{-eps2} / (N^{2/3} ell_hat^{1/3}).
    pub fn eta_ell(&self, ell: usize) -> f64 {
        let nf = self.n() as f64;
        nf.powf(-self.params().eps2) / (nf.powf(2.0 / 3.0) * self.i_hat(ell).powf(1.0 / 3.0))
    }

    /// Half-width of I_{delta2} (the full window; the integration window
    /// I-hat uses half of this).
    pub fn i_delta2_halfwidth(&self, ell: usize) -> f64 {
        let nf = self.n() as f64;
        nf.powf(-self.params().delta2) / (nf.powf(2.0 / 3.0) * self.i_hat(ell).powf(1.0 / 3.0))
    }

    pub fn lambda_tilde(&self, lambda: &[f64], i: usize) -> f64 {
        self.hs.lambda_tilde(lambda, i)
    }

    /// Regularized eigenvector projection
    /// v_ell = (1/pi) int over I-hat_{delta2}(lambda~_ell) of
    /// Im <q, G(E + i eta_ell) q> dE  (nonnegative by construction).
    pub fn regularized_projection(&self, s: &Spectrum, q: &[f64], ell: usize) -> f64 {
        let lt = self.lambda_tilde(&s.lambda, ell);
        self.regularized_projection_at(s, q, ell, lt)
    }

    /// Same, with the regularized eigenvalue supplied by the caller (lets
    /// batch evaluations over many directions share one HS quadrature).
    pub fn regularized_projection_at(
        &self,
        s: &Spectrum,
        q: &[f64],
        ell: usize,
        lambda_tilde_ell: f64,
    ) -> f64 {
        let eta = self.eta_ell(ell);
        let hw = self.i_delta2_halfwidth(ell) / 2.0;
        let f = |e: f64| resolvent_qform(s, q, HalfPlanePoint::new(e, eta)).im;
        let v = adaptive_simpson_rel(&f, lambda_tilde_ell - hw, lambda_tilde_ell + hw, 1e-8)
            / std::f64::consts::PI;
        v.max(0.0)
    }

    /// The smoothed observable T = N chi_k v_ell together with its parts.
    pub fn observable_t(&self, s: &Spectrum, q: &[f64], ell: usize) -> TObservable {
        let params = self.params();
        let n = self.n();
        let window = (n as f64).powf(params.nu).floor().max(1.0) as i64;
        let lt_ell = self.lambda_tilde(&s.lambda, ell);
        let w = self.i_delta2_halfwidth(ell);
        // q_{ell, delta2}: plateau +-1.5 w, support +-2 w around lambda~_ell
        let q_moll = MollifierSpec::window(
            lt_ell - 1.5 * w,
            lt_ell + 1.5 * w,
            0.5 * w,
            0.5 * w,
        );
        let mut f_count = 0.0;
        for p in (ell as i64 - window)..=(ell as i64 + window) {
            if p < 1 || p > n as i64 {
                continue;
            }
            let lt_p = if p as usize == ell {
                lt_ell
            } else {
                self.lambda_tilde(&s.lambda, p as usize)
            };
            f_count += q_moll.eval(lt_p);
        }
        let r_k = MollifierSpec::step_down(params.k as f64 - 1.0, params.k as f64);
        let chi_k = r_k.eval(f_count);
        let v_ell = self.regularized_projection_at(s, q, ell, lt_ell);
        TObservable { t: n as f64 * chi_k * v_ell, chi_k, v_ell, f_count }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct TObservable {
    pub t: f64,
    pub chi_k: f64,
    pub v_ell: f64,
    pub f_count: f64,
}

/// Evaluation grid over the spectral domain (E linear, eta log-spaced).
#[derive(Clone, Copy, Debug)]
pub struct EventGrid {
    pub n_e: usize,
    pub n_eta: usize,
}

impl Default for EventGrid {
    fn default() -> Self {
        EventGrid { n_e: 21, n_eta: 13 }
    }
}

/// Flags and numeric margins for the good events. Each flag is `margin <= 1`
/// (counts use `count <= k`); margins are reproducible from the report.
#[derive(Clone, Debug, Serialize)]
pub struct EventReport {
    pub iso_margin: f64,
    pub sc_margin: f64,
    pub rigidity_margin: f64,
    pub deloc_margin: f64,
    pub b2_margin: f64,
    pub b2_indices: Vec<usize>,
    pub b3_count: usize,
    pub b3_k: u32,
    pub b3_ell: usize,
    /// auxiliary sub-event at the smaller control parameter eps2/8,
    /// flagged separately from the aggregate
    pub b1_eps2_margin: f64,
}

impl EventReport {
    pub fn iso_pass(&self) -> bool {
        self.iso_margin <= 1.0
    }
    pub fn sc_pass(&self) -> bool {
        self.sc_margin <= 1.0
    }
    pub fn rigidity_pass(&self) -> bool {
        self.rigidity_margin <= 1.0
    }
    pub fn deloc_pass(&self) -> bool {
        self.deloc_margin <= 1.0
    }
    pub fn b2_pass(&self) -> bool {
        self.b2_margin <= 1.0
    }
    pub fn b3_pass(&self) -> bool {
        self.b3_count <= self.b3_k as usize
    }
    pub fn b1_eps2_pass(&self) -> bool {
        self.b1_eps2_margin <= 1.0
    }

    /// The aggregate over the five principal flags (the eps2/8 sub-event is
    /// reported separately).
    pub fn all_pass(&self) -> bool {
        self.iso_pass()
            && self.sc_pass()
            && self.rigidity_pass()
            && self.deloc_pass()
            && self.b2_pass()
            && self.b3_pass()
    }
}

/// Worst law margins over the grid at control parameter omega:
/// (isotropic, semicircle).
fn law_margins(s: &Spectrum, q: &[f64], omega: f64, grid: &EventGrid) -> (f64, f64) {
    let n = s.n as f64;
    let n_pow = n.powf(omega);
    let e_max = (1.0 / omega).min(5.0);
    let eta_lo = n.powf(-1.0 + omega);
    let eta_hi = (1.0 / omega).min(10.0);
    let mut iso: f64 = 0.0;
    let mut sc: f64 = 0.0;
    for ie in 0..grid.n_e {
        let e = -e_max + 2.0 * e_max * ie as f64 / (grid.n_e - 1) as f64;
        for je in 0..grid.n_eta {
            let t = je as f64 / (grid.n_eta - 1) as f64;
            let eta = eta_lo * (eta_hi / eta_lo).powf(t);
            let z = HalfPlanePoint::new(e, eta);
            let msc = m_sc(z);
            let rhs_iso = n_pow * ((msc.im / (n * eta)).sqrt() + 1.0 / (n * eta));
            let g = resolvent_qform(s, q, z);
            iso = iso.max((g - msc).norm() / rhs_iso);
            let mn = stieltjes(s, z);
            sc = sc.max((mn - msc).norm() * n * eta / n_pow);
        }
    }
    (iso, sc)
}

/// Evaluate all good-event margins for one spectrum and direction. The
/// count event B3 is checked at `ell` with the configured k; the B2
/// closeness margin is probed at `b2_indices` (regularized eigenvalues are
/// expensive, so the probe set is explicit).
pub fn event_check(
    ctx: &RegContext,
    s: &Spectrum,
    q: &[f64],
    ell: usize,
    b2_indices: &[usize],
    grid: &EventGrid,
) -> EventReport {
    let n = s.n;
    let nf = n as f64;
    let params = ctx.params();
    let omega = params.omega;
    let n_pow = nf.powf(omega);

    let (iso_margin, sc_margin) = law_margins(s, q, omega, grid);

    // rigidity and isotropic delocalization margins
    let mut rigidity_margin: f64 = 0.0;
    for k in 0..n {
        let i_hat = (k + 1).min(n - k) as f64;
        let bound = n_pow * nf.powf(-2.0 / 3.0) * i_hat.powf(-1.0 / 3.0);
        rigidity_margin =
            rigidity_margin.max((s.lambda[k] - ctx.hs.gammas.gamma[k]).abs() / bound);
    }
    let mut deloc_margin: f64 = 0.0;
    for k in 0..n {
        deloc_margin = deloc_margin.max(s.proj2(q, k) * nf.powf(1.0 - omega));
    }

    // B2 closeness at the probe indices
    let mut b2_margin: f64 = 0.0;
    for &i in b2_indices {
        let lt = ctx.lambda_tilde(&s.lambda, i);
        let bound = closeness_scale(n, i, params.delta1, params.eps1);
        b2_margin = b2_margin.max((lt - s.lambda[i - 1]).abs() / bound);
    }

    // B3: eigenvalue count in I_{delta2}(lambda_ell)
    let hw = ctx.i_delta2_halfwidth(ell);
    let center = s.lambda[ell - 1];
    let b3_count = count_in_interval(&s.lambda, center - hw, center + hw);

    // auxiliary sub-event at omega' = eps2/8 (clamped grid)
    let (b1a, b1b) = law_margins(s, q, params.eps2 / 8.0, grid);
    let b1_eps2_margin = b1a.max(b1b);

    EventReport {
        iso_margin,
        sc_margin,
        rigidity_margin,
        deloc_margin,
        b2_margin,
        b2_indices: b2_indices.to_vec(),
        b3_count,
        b3_k: params.k,
        b3_ell: ell,
        b1_eps2_margin,
    }
}

/// Free-function wrapper matching the one-shot call shape.
pub fn reg_audit(
    ctx: &RegContext,
    lambda: &[f64],
    indices: &[usize],
) -> Result<RegAuditReport, RegError> {
    let params = *ctx.params();
    let mut entries = Vec::with_capacity(indices.len());
    for &i in indices {
        let lt = ctx.hs.lambda_tilde_checked(lambda, i)?;
        let bound = closeness_scale(ctx.n(), i, params.delta1, params.eps1);
        entries.push(RegAuditEntry {
            i,
            lambda: lambda[i - 1],
            lambda_tilde: lt,
            bound,
            pass: (lt - lambda[i - 1]).abs() <= bound,
        });
    }
    Ok(RegAuditReport { n: ctx.n(), delta1: params.delta1, eps1: params.eps1, entries })
}

/// Per-index regularization audit row (the JSON export schema).
#[derive(Clone, Debug, Serialize)]
pub struct RegAuditEntry {
    pub i: usize,
    pub lambda: f64,
    pub lambda_tilde: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct RegAuditReport {
    pub n: usize,
    pub delta1: f64,
    pub eps1: f64,
    pub entries: Vec<RegAuditEntry>,
}
