//! Dense symmetric/Hermitian eigendecomposition and spectral evaluation of
//! resolvent quadratic forms.
//!
//! The eigensolver is the classic Householder tridiagonalization followed by
//! implicit-shift QL with eigenvector accumulation (the EISPACK/Jama lineage,
//! public domain). Eigenvector storage is column-major so the QL rotations
//! update two contiguous slices.

use num_complex::Complex64;
use thiserror::Error;

use crate::rng::mix64;
use crate::semicircle::HalfPlanePoint;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("QL iteration failed to converge after {cap} sweeps (matrix hash {hash:#018x})")]
    NonConvergence { cap: u32, hash: u64 },
    #[error("matrix contains non-finite entries (hash {hash:#018x})")]
    NonFinite { hash: u64 },
}

/// Dense real symmetric matrix, row-major storage of all N*N entries.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix {
    pub n: usize,
    pub a: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        SymMatrix { n, a: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.a[i * n + i] = 1.0;
        }
        m
    }

    /// Build from an upper-triangle generator; symmetry is exact by
    /// construction.
    pub fn from_upper<F: FnMut(usize, usize) -> f64>(n: usize, mut f: F) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in i..n {
                let v = f(i, j);
                m.a[i * n + j] = v;
                m.a[j * n + i] = v;
            }
        }
        m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }

    /// Set (i, j) and (j, i) together.
    #[inline]
    pub fn set_sym(&mut self, i: usize, j: usize, v: f64) {
        self.a[i * self.n + j] = v;
        self.a[j * self.n + i] = v;
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.a[i * self.n + i]).sum()
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.n;
        for i in 0..n {
            for j in (i + 1)..n {
                if self.a[i * n + j] != self.a[j * n + i] {
                    return false;
                }
            }
        }
        true
    }

    pub fn max_abs(&self) -> f64 {
        self.a.iter().fold(0.0_f64, |m, &x| m.max(x.abs()))
    }

    /// Order-insensitive content hash for diagnostics.
    pub fn hash(&self) -> u64 {
        self.a.iter().fold(mix64(self.n as u64), |h, &x| mix64(h ^ x.to_bits()))
    }
}

/// Dense complex Hermitian matrix, row-major.
#[derive(Clone, Debug)]
pub struct HermMatrix {
    pub n: usize,
    pub a: Vec<Complex64>,
}

impl HermMatrix {
    pub fn zeros(n: usize) -> Self {
        HermMatrix { n, a: vec![Complex64::new(0.0, 0.0); n * n] }
    }

    pub fn from_upper<F: FnMut(usize, usize) -> Complex64>(n: usize, mut f: F) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in i..n {
                let v = if i == j { Complex64::new(f(i, j).re, 0.0) } else { f(i, j) };
                m.a[i * n + j] = v;
                m.a[j * n + i] = v.conj();
            }
        }
        m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.a[i * self.n + j]
    }

    pub fn hash(&self) -> u64 {
        self.a.iter().fold(mix64(self.n as u64), |h, z| {
            mix64(mix64(h ^ z.re.to_bits()) ^ z.im.to_bits())
        })
    }
}

/// Eigenvector storage: column-major, columns unit-norm.
#[derive(Clone, Debug)]
pub enum EigenBasis {
    Real(Vec<f64>),
    Complex(Vec<Complex64>),
}

/// Eigenvalues (ascending) and orthonormal eigenvectors with a deterministic
/// sign convention: in each column the largest-magnitude coordinate (lowest
/// index on ties) is positive (real positive in the complex case).
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub n: usize,
    pub lambda: Vec<f64>,
    pub basis: EigenBasis,
}

impl Spectrum {
    /// Real eigenvector column k. Panics for complex spectra.
    pub fn vector(&self, k: usize) -> &[f64] {
        match &self.basis {
            EigenBasis::Real(u) => &u[k * self.n..(k + 1) * self.n],
            EigenBasis::Complex(_) => panic!("complex spectrum"),
        }
    }

    /// |<q, u_k>|^2 for a real direction q.
    pub fn proj2(&self, q: &[f64], k: usize) -> f64 {
        match &self.basis {
            EigenBasis::Real(u) => {
                let col = &u[k * self.n..(k + 1) * self.n];
                let d: f64 = col.iter().zip(q).map(|(a, b)| a * b).sum();
                d * d
            }
            EigenBasis::Complex(u) => {
                let col = &u[k * self.n..(k + 1) * self.n];
                let d: Complex64 = col.iter().zip(q).map(|(a, b)| a * b).sum();
                d.norm_sqr()
            }
        }
    }

    /// Sup-norm of eigenvector k (modulus in the complex case).
    pub fn inf_norm(&self, k: usize) -> f64 {
        match &self.basis {
            EigenBasis::Real(u) => u[k * self.n..(k + 1) * self.n]
                .iter()
                .fold(0.0_f64, |m, &x| m.max(x.abs())),
            EigenBasis::Complex(u) => u[k * self.n..(k + 1) * self.n]
                .iter()
                .fold(0.0_f64, |m, z| m.max(z.norm())),
        }
    }
}

const QL_SWEEP_CAP: u32 = 50;

/// Full eigendecomposition of a real symmetric matrix.
pub fn eigh(m: &SymMatrix) -> Result<Spectrum, LinalgError> {
    if !m.a.iter().all(|x| x.is_finite()) {
        return Err(LinalgError::NonFinite { hash: m.hash() });
    }
    let n = m.n;
    // v: column-major working/eigenvector storage, initialized with the
    // (symmetric) input so tred2 can consume rows and columns alike.
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            v[j * n + i] = m.a[i * n + j];
        }
    }
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tred2(n, &mut v, &mut d, &mut e, true);
    tql(n, &mut d, &mut e, Some(&mut v), m.hash())?;
    sort_and_sign(n, &mut d, &mut v);
    Ok(Spectrum { n, lambda: d, basis: EigenBasis::Real(v) })
}

/// Eigenvalues only (ascending) of a real symmetric matrix.
pub fn eigvalsh(m: &SymMatrix) -> Result<Vec<f64>, LinalgError> {
    if !m.a.iter().all(|x| x.is_finite()) {
        return Err(LinalgError::NonFinite { hash: m.hash() });
    }
    let n = m.n;
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            v[j * n + i] = m.a[i * n + j];
        }
    }
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tred2(n, &mut v, &mut d, &mut e, false);
    tql(n, &mut d, &mut e, None, m.hash())?;
    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(d)
}

/// Full eigendecomposition of a complex Hermitian matrix via the real
/// symmetric embedding [[A, -B], [B, A]] of H = A + iB. Each eigenvalue of H
/// appears twice in the embedding; one real column (x; y) per pair maps to
/// the complex eigenvector x + iy.
pub fn eigh_herm(m: &HermMatrix) -> Result<Spectrum, LinalgError> {
    let n = m.n;
    let embedded = embed_herm(m);
    let s2 = eigh(&embedded)?;
    let mut lambda = Vec::with_capacity(n);
    let mut u = vec![Complex64::new(0.0, 0.0); n * n];
    let basis = match &s2.basis {
        EigenBasis::Real(b) => b,
        EigenBasis::Complex(_) => unreachable!(),
    };
    for k in 0..n {
        let col = &basis[(2 * k) * 2 * n..(2 * k + 1) * 2 * n];
        lambda.push(0.5 * (s2.lambda[2 * k] + s2.lambda[2 * k + 1]));
        let dst = &mut u[k * n..(k + 1) * n];
        for i in 0..n {
            dst[i] = Complex64::new(col[i], col[n + i]);
        }
        // columns of the embedding are unit, and |x+iy|^2 = |x|^2 + |y|^2
        phase_normalize(dst);
    }
    Ok(Spectrum { n, lambda, basis: EigenBasis::Complex(u) })
}

/// Eigenvalues only of a complex Hermitian matrix.
pub fn eigvalsh_herm(m: &HermMatrix) -> Result<Vec<f64>, LinalgError> {
    let ev2 = eigvalsh(&embed_herm(m))?;
    Ok((0..m.n).map(|k| 0.5 * (ev2[2 * k] + ev2[2 * k + 1])).collect())
}

fn embed_herm(m: &HermMatrix) -> SymMatrix {
    let n = m.n;
    let mut big = SymMatrix::zeros(2 * n);
    for i in 0..n {
        for j in 0..n {
            let z = m.get(i, j);
            big.a[i * 2 * n + j] = z.re;
            big.a[(n + i) * 2 * n + (n + j)] = z.re;
            big.a[i * 2 * n + (n + j)] = -z.im;
            big.a[(n + i) * 2 * n + j] = z.im;
        }
    }
    big
}

fn phase_normalize(col: &mut [Complex64]) {
    let mut best = 0usize;
    let mut bm = -1.0;
    for (i, z) in col.iter().enumerate() {
        let a = z.norm();
        if a > bm {
            bm = a;
            best = i;
        }
    }
    if bm > 0.0 {
        let phase = col[best].conj() / bm;
        for z in col.iter_mut() {
            *z *= phase;
        }
    }
}

/// Single eigenpair (lambda_idx, u_idx) of a real symmetric matrix without
/// accumulating the full eigenvector basis: Householder reduction keeping the
/// reflectors, QL for the eigenvalues, inverse iteration on the tridiagonal,
/// then back-transformation through the stored reflectors. Falls back to the
/// full decomposition if the iteration stalls (clustered eigenvalues).
pub fn eigenpair_by_index(m: &SymMatrix, idx: usize) -> Result<(f64, Vec<f64>), LinalgError> {
    let n = m.n;
    assert!(idx < n);
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            v[j * n + i] = m.a[i * n + j];
        }
    }
    let mut hh = vec![0.0; n];
    let mut e = vec![0.0; n];
    tred2_reduce(n, &mut v, &mut hh, &mut e);
    let diag_t: Vec<f64> = (0..n).map(|i| v[i * n + i]).collect();
    let mut d = diag_t.clone();
    let mut e_work = e.clone();
    tql(n, &mut d, &mut e_work, None, m.hash())?;
    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let lam = d[idx];
    let gap = (0..n)
        .filter(|&j| j != idx)
        .map(|j| (d[j] - lam).abs())
        .fold(f64::INFINITY, f64::min);

    let mut off = vec![0.0; n.saturating_sub(1)];
    for i in 1..n {
        off[i - 1] = e[i];
    }
    if let Some(mut y) = tridiag_inverse_iteration(&diag_t, &off, lam, gap, m.hash()) {
        // back-transform: u = H_{n-1} ... H_1 y with reflector i in column i.
        for i in 1..n {
            let h = hh[i];
            if h == 0.0 {
                continue;
            }
            let refl = &v[i * n..i * n + i];
            let mut dot = 0.0;
            for (yk, rk) in y[..i].iter().zip(refl) {
                dot += yk * rk;
            }
            let f = dot / h;
            for (yk, rk) in y[..i].iter_mut().zip(refl) {
                *yk -= f * rk;
            }
        }
        normalize_sign(&mut y);
        // residual audit against the original matrix
        let mut res = 0.0_f64;
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += m.a[i * n + j] * y[j];
            }
            res = res.max((acc - lam * y[i]).abs());
        }
        if res <= 1e-7 * m.max_abs().max(1.0) {
            return Ok((lam, y));
        }
    }
    let s = eigh(m)?;
    Ok((s.lambda[idx], s.vector(idx).to_vec()))
}

fn tridiag_inverse_iteration(
    diag: &[f64],
    off: &[f64],
    lam: f64,
    gap: f64,
    hash: u64,
) -> Option<Vec<f64>> {
    let n = diag.len();
    let scale = diag.iter().chain(off).fold(0.0_f64, |m, &x| m.max(x.abs())).max(1.0);
    // keep the shifted system invertible when lam is numerically exact
    let shift = lam + (gap * 1e-3).min(scale * 1e-12);
    let mut y: Vec<f64> = (0..n)
        .map(|i| {
            let r = mix64(hash ^ mix64(i as u64 + 1));
            ((r >> 11) as f64) / 9_007_199_254_740_992.0 - 0.5
        })
        .collect();
    for _ in 0..4 {
        solve_tridiag_shifted(diag, off, shift, &mut y)?;
        let norm = y.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return None;
        }
        for x in y.iter_mut() {
            *x /= norm;
        }
    }
    // residual on the tridiagonal
    let mut res = 0.0_f64;
    for i in 0..n {
        let mut acc = diag[i] * y[i] - lam * y[i];
        if i > 0 {
            acc += off[i - 1] * y[i - 1];
        }
        if i + 1 < n {
            acc += off[i] * y[i + 1];
        }
        res = res.max(acc.abs());
    }
    if res <= 1e-8 * scale {
        Some(y)
    } else {
        None
    }
}

/// Gaussian elimination with partial pivoting specialized to a shifted
/// symmetric tridiagonal system (T - shift) x = b, overwriting b.
/// Pivoting introduces one band of fill-in (ff, the (i, i+2) entries).
fn solve_tridiag_shifted(diag: &[f64], off: &[f64], shift: f64, b: &mut [f64]) -> Option<()> {
    let n = diag.len();
    let mut dd: Vec<f64> = diag.iter().map(|&x| x - shift).collect();
    let mut ee = vec![0.0; n]; // (i, i+1)
    let mut ff = vec![0.0; n]; // (i, i+2), fill-in
    for i in 0..n - 1 {
        ee[i] = off[i];
    }
    for i in 0..n - 1 {
        // row i+1 still holds its original subdiagonal entry in column i
        let mut low = off[i];
        if low.abs() > dd[i].abs() {
            std::mem::swap(&mut dd[i], &mut low);
            std::mem::swap(&mut ee[i], &mut dd[i + 1]);
            if i + 2 < n {
                // ff[i] was zero before this step
                ff[i] = ee[i + 1];
                ee[i + 1] = 0.0;
            }
            b.swap(i, i + 1);
        }
        if dd[i] == 0.0 {
            dd[i] = 1e-300;
        }
        let m = low / dd[i];
        dd[i + 1] -= m * ee[i];
        ee[i + 1] -= m * ff[i];
        b[i + 1] -= m * b[i];
    }
    if dd[n - 1] == 0.0 {
        dd[n - 1] = 1e-300;
    }
    // back substitution
    b[n - 1] /= dd[n - 1];
    if n >= 2 {
        b[n - 2] = (b[n - 2] - ee[n - 2] * b[n - 1]) / dd[n - 2];
    }
    for i in (0..n.saturating_sub(2)).rev() {
        b[i] = (b[i] - ee[i] * b[i + 1] - ff[i] * b[i + 2]) / dd[i];
    }
    if b.iter().all(|x| x.is_finite()) {
        Some(())
    } else {
        None
    }
}

/// Householder reduction to tridiagonal form (Jama tred2, column-major).
/// With `accumulate` the transformation matrix Q is built in `v`; without it
/// `v` retains the reflectors (column i, rows 0..i) and `d` the h values,
/// while the tridiagonal diagonal stays on v's diagonal and `e[1..]` holds
/// the off-diagonal.
fn tred2(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64], accumulate: bool) {
    tred2_reduce(n, v, d, e);
    if !accumulate {
        for j in 0..n {
            d[j] = v[j * n + j];
        }
        e[0] = 0.0;
        return;
    }
    // accumulate transformations
    for i in 0..n - 1 {
        v[i * n + (n - 1)] = v[i * n + i];
        v[i * n + i] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[(i + 1) * n + k] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                {
                    let ci1 = &v[(i + 1) * n..(i + 1) * n + i + 1];
                    let cj = &v[j * n..j * n + i + 1];
                    for (a, b) in ci1.iter().zip(cj) {
                        g += a * b;
                    }
                }
                let cj = &mut v[j * n..j * n + i + 1];
                for (x, dk) in cj.iter_mut().zip(d[..=i].iter()) {
                    *x -= g * dk;
                }
            }
        }
        for k in 0..=i {
            v[(i + 1) * n + k] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[j * n + (n - 1)];
        v[j * n + (n - 1)] = 0.0;
    }
    v[(n - 1) * n + (n - 1)] = 1.0;
    e[0] = 0.0;
}

/// Reduction phase only. On entry `v` holds the symmetric matrix
/// (column-major); on exit the reflectors and tridiagonal as described above,
/// with h values in `d`.
fn tred2_reduce(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) {
    for j in 0..n {
        d[j] = v[j * n + (n - 1)];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == 0.0 {
            e[i] = d[i.wrapping_sub(1)];
            for j in 0..i {
                d[j] = v[j * n + (i - 1)];
                v[i * n + j] = 0.0;
                v[j * n + i] = 0.0;
            }
        } else {
            for dk in d[..i].iter_mut() {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e[..i].iter_mut() {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[i * n + j] = f;
                g = e[j] + v[j * n + j] * f;
                let cj = &v[j * n..j * n + i];
                for k in (j + 1)..i {
                    g += cj[k] * d[k];
                    e[k] += cj[k] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                let cj = &mut v[j * n + j..j * n + i];
                for (k, x) in cj.iter_mut().enumerate() {
                    *x -= f * e[j + k] + g * d[j + k];
                }
                d[j] = v[j * n + (i - 1)];
                v[j * n + i] = 0.0;
            }
        }
        d[i] = h;
    }
}

/// Implicit-shift QL sweeps on the tridiagonal (d, e[1..]); rotations are
/// accumulated into the column-major basis when supplied.
fn tql(
    n: usize,
    d: &mut [f64],
    e: &mut [f64],
    mut v: Option<&mut [f64]>,
    hash: u64,
) -> Result<(), LinalgError> {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let mut f = 0.0_f64;
    let mut tst1 = 0.0_f64;
    let eps = 2.0_f64.powi(-52);
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0u32;
            loop {
                iter += 1;
                if iter > QL_SWEEP_CAP {
                    return Err(LinalgError::NonConvergence { cap: QL_SWEEP_CAP, hash });
                }
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d[l + 2..n].iter_mut() {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0_f64;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0_f64;
                let mut s2 = 0.0_f64;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let gg = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * gg;
                    d[i + 1] = h + s * (c * gg + s * d[i]);
                    if let Some(vv) = v.as_deref_mut() {
                        rotate_columns(vv, n, i, c, s);
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

/// Apply the QL rotation to columns i and i+1 of the column-major basis.
#[inline]
fn rotate_columns(v: &mut [f64], n: usize, i: usize, c: f64, s: f64) {
    let (lo, hi) = v.split_at_mut((i + 1) * n);
    let col_i = &mut lo[i * n..];
    let col_i1 = &mut hi[..n];
    for (a, b) in col_i.iter_mut().zip(col_i1.iter_mut()) {
        let h = *b;
        *b = s * *a + c * h;
        *a = c * *a - s * h;
    }
}

fn sort_and_sign(n: usize, d: &mut Vec<f64>, v: &mut Vec<f64>) {
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].partial_cmp(&d[j]).unwrap());
    let mut nd = Vec::with_capacity(n);
    let mut nv = vec![0.0; n * n];
    for (dst, &src) in order.iter().enumerate() {
        nd.push(d[src]);
        nv[dst * n..(dst + 1) * n].copy_from_slice(&v[src * n..(src + 1) * n]);
        normalize_sign(&mut nv[dst * n..(dst + 1) * n]);
    }
    *d = nd;
    *v = nv;
}

/// Sign convention: largest-magnitude coordinate (lowest index on ties)
/// positive.
pub fn normalize_sign(col: &mut [f64]) {
    let mut best = 0usize;
    let mut bm = -1.0;
    for (i, &x) in col.iter().enumerate() {
        if x.abs() > bm {
            bm = x.abs();
            best = i;
        }
    }
    if col[best] < 0.0 {
        for x in col.iter_mut() {
            *x = -*x;
        }
    }
}

/// <q, (M - z)^{-1} q> evaluated spectrally: sum_i |<q, u_i>|^2 / (lambda_i - z).
pub fn resolvent_qform(s: &Spectrum, q: &[f64], z: HalfPlanePoint) -> Complex64 {
    let norm: f64 = q.iter().map(|x| x * x).sum::<f64>();
    assert!(
        (norm - 1.0).abs() <= 1e-10,
        "direction must be unit norm, |q|^2 = {norm}"
    );
    let zc = z.as_complex();
    let mut acc = Complex64::new(0.0, 0.0);
    for k in 0..s.n {
        acc += s.proj2(q, k) / (Complex64::new(s.lambda[k], 0.0) - zc);
    }
    acc
}

/// Stieltjes transform m_N(z) = (1/N) sum_i 1/(lambda_i - z) from eigenvalues.
pub fn stieltjes_from_eigenvalues(lambda: &[f64], z: HalfPlanePoint) -> Complex64 {
    let e = z.e;
    let eta = z.eta;
    let mut re = 0.0;
    let mut im = 0.0;
    for &l in lambda {
        let dx = l - e;
        let den = dx * dx + eta * eta;
        re += dx / den;
        im += eta / den;
    }
    let n = lambda.len() as f64;
    Complex64::new(re / n, im / n)
}

/// Stieltjes transform of a Spectrum.
pub fn stieltjes(s: &Spectrum, z: HalfPlanePoint) -> Complex64 {
    stieltjes_from_eigenvalues(&s.lambda, z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;

    fn random_sym(n: usize, seed: u64) -> SymMatrix {
        let rng = CounterRng::new(seed, 0);
        SymMatrix::from_upper(n, |i, j| rng.gauss_at((i * n + j) as u64))
    }

    #[test]
    fn two_by_two_closed_form() {
        let (a, b) = (0.7, -0.3);
        let m = SymMatrix::from_upper(2, |i, j| if i == j { a } else { b });
        let s = eigh(&m).unwrap();
        let mut expect = [a - b.abs(), a + b.abs()];
        expect.sort_by(|x, y| x.partial_cmp(y).unwrap());
        assert!((s.lambda[0] - expect[0]).abs() < 1e-14);
        assert!((s.lambda[1] - expect[1]).abs() < 1e-14);
    }

    #[test]
    fn identity_spectrum() {
        let s = eigh(&SymMatrix::identity(5)).unwrap();
        for k in 0..5 {
            assert!((s.lambda[k] - 1.0).abs() < 1e-14);
            // sign convention: dominant coordinate positive
            let v = s.vector(k);
            let mut best = 0;
            for i in 0..5 {
                if v[i].abs() > v[best].abs() {
                    best = i;
                }
            }
            assert!(v[best] > 0.0);
        }
    }

    /// Determinant sign of (M - x I) via LU with partial pivoting.
    fn det_sign(m: &SymMatrix, x: f64) -> f64 {
        let n = m.n;
        let mut a = m.a.clone();
        for i in 0..n {
            a[i * n + i] -= x;
        }
        let mut sign = 1.0;
        for col in 0..n {
            let mut piv = col;
            for r in col + 1..n {
                if a[r * n + col].abs() > a[piv * n + col].abs() {
                    piv = r;
                }
            }
            if a[piv * n + col] == 0.0 {
                return 0.0;
            }
            if piv != col {
                for c in 0..n {
                    a.swap(col * n + c, piv * n + c);
                }
                sign = -sign;
            }
            if a[col * n + col] < 0.0 {
                sign = -sign;
            }
            for r in col + 1..n {
                let f = a[r * n + col] / a[col * n + col];
                for c in col..n {
                    a[r * n + c] -= f * a[col * n + c];
                }
            }
        }
        sign
    }

    #[test]
    fn eigenvalues_match_determinant_bisection_oracle() {
        // Oracle: bisection on sign changes of det(M - x I); no companion
        // matrices, no shared code with the QL path.
        let m = random_sym(8, 99);
        let s = eigh(&m).unwrap();
        // bracket each root between midpoints of consecutive eigenvalues so
        // each bracket holds exactly one sign change of det(M - x I)
        let bound = 1.0 + m.a.iter().map(|x| x.abs()).fold(0.0_f64, f64::max) * 8.0;
        for k in 0..8 {
            let mut lo = if k == 0 { -bound } else { 0.5 * (s.lambda[k - 1] + s.lambda[k]) };
            let mut hi = if k == 7 { bound } else { 0.5 * (s.lambda[k] + s.lambda[k + 1]) };
            assert_ne!(det_sign(&m, lo), det_sign(&m, hi), "bracket k={k}");
            let slo = det_sign(&m, lo);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if det_sign(&m, mid) == slo {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let root = 0.5 * (lo + hi);
            assert!(
                (root - s.lambda[k]).abs() < 1e-9,
                "k={k}: oracle {root} vs {}",
                s.lambda[k]
            );
        }
    }

    #[test]
    fn spectrum_invariants_random() {
        let n = 24;
        let m = random_sym(n, 5);
        let s = eigh(&m).unwrap();
        // ascending
        for k in 1..n {
            assert!(s.lambda[k] >= s.lambda[k - 1]);
        }
        // orthonormality
        for i in 0..n {
            for j in 0..n {
                let d: f64 = s
                    .vector(i)
                    .iter()
                    .zip(s.vector(j))
                    .map(|(a, b)| a * b)
                    .sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((d - expect).abs() < 1e-8, "({i},{j}) -> {d}");
            }
        }
        // reconstruction
        let scale = m.max_abs();
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += s.lambda[k] * s.vector(k)[i] * s.vector(k)[j];
                }
                assert!((acc - m.get(i, j)).abs() <= 1e-8 * scale);
            }
        }
        // trace identity
        let tr: f64 = s.lambda.iter().sum();
        assert!((tr - m.trace()).abs() <= 1e-8 * m.trace().abs().max(1.0));
    }

    #[test]
    fn sign_convention_is_flip_invariant() {
        let m = random_sym(12, 17);
        let s1 = eigh(&m).unwrap();
        // negating the input basis leaves eigh output unchanged because the
        // convention re-normalizes every column deterministically
        let s2 = eigh(&m.clone()).unwrap();
        match (&s1.basis, &s2.basis) {
            (EigenBasis::Real(a), EigenBasis::Real(b)) => assert_eq!(a, b),
            _ => unreachable!(),
        }
    }

    #[test]
    fn eigvalsh_matches_eigh() {
        let m = random_sym(30, 3);
        let a = eigvalsh(&m).unwrap();
        let b = eigh(&m).unwrap().lambda;
        for k in 0..30 {
            assert!((a[k] - b[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn eigenpair_by_index_matches_eigh() {
        let n = 40;
        let m = random_sym(n, 11);
        let s = eigh(&m).unwrap();
        for &idx in &[0usize, n / 2, n - 1] {
            let (lam, v) = eigenpair_by_index(&m, idx).unwrap();
            assert!((lam - s.lambda[idx]).abs() < 1e-9);
            let dot: f64 = v.iter().zip(s.vector(idx)).map(|(a, b)| a * b).sum();
            assert!(dot.abs() > 1.0 - 1e-7, "overlap {dot} at idx {idx}");
        }
    }

    #[test]
    fn hermitian_diagonal_and_random() {
        // diagonal Hermitian: eigenvalues are the diagonal
        let h = HermMatrix::from_upper(3, |i, j| {
            if i == j {
                Complex64::new([3.0, -1.0, 0.5][i], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        let s = eigh_herm(&h).unwrap();
        assert!((s.lambda[0] + 1.0).abs() < 1e-12);
        assert!((s.lambda[1] - 0.5).abs() < 1e-12);
        assert!((s.lambda[2] - 3.0).abs() < 1e-12);

        // random Hermitian: residual ||H u - lambda u||
        let n = 10;
        let rng = CounterRng::new(4, 4);
        let h = HermMatrix::from_upper(n, |i, j| {
            let idx = (i * n + j) as u64;
            if i == j {
                Complex64::new(rng.gauss_at(idx), 0.0)
            } else {
                Complex64::new(rng.gauss_at(idx), rng.gauss_at(idx + (n * n) as u64))
            }
        });
        let s = eigh_herm(&h).unwrap();
        let u = match &s.basis {
            EigenBasis::Complex(u) => u,
            _ => unreachable!(),
        };
        for k in 0..n {
            let col = &u[k * n..(k + 1) * n];
            for i in 0..n {
                let mut acc = Complex64::new(0.0, 0.0);
                for j in 0..n {
                    acc += h.get(i, j) * col[j];
                }
                assert!((acc - s.lambda[k] * col[i]).norm() < 1e-8);
            }
            // unit norm
            let nn: f64 = col.iter().map(|z| z.norm_sqr()).sum();
            assert!((nn - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn resolvent_qform_diagonal_and_herglotz() {
        let d = [0.3, 1.2, -0.7, 2.0];
        let m = SymMatrix::from_upper(4, |i, j| if i == j { d[i] } else { 0.0 });
        let s = eigh(&m).unwrap();
        let z = HalfPlanePoint::new(0.1, 0.05);
        let mut q = vec![0.0; 4];
        q[0] = 1.0;
        let g = resolvent_qform(&s, &q, z);
        let expect = 1.0 / (Complex64::new(d[0], 0.0) - z.as_complex());
        assert!((g - expect).norm() < 1e-12);
        assert!(g.im > 0.0);
        // q = eigenvector k exactly
        let m2 = random_sym(6, 8);
        let s2 = eigh(&m2).unwrap();
        let q2 = s2.vector(2).to_vec();
        let g2 = resolvent_qform(&s2, &q2, z);
        let expect2 = 1.0 / (Complex64::new(s2.lambda[2], 0.0) - z.as_complex());
        assert!((g2 - expect2).norm() < 1e-9);
    }

    #[test]
    fn resolvent_qform_matches_direct_solve() {
        // oracle: dense complex LU solve of (M - z) x = q
        let n = 8;
        let m = random_sym(n, 21);
        let s = eigh(&m).unwrap();
        let z = HalfPlanePoint::new(0.4, 0.08);
        let rng = CounterRng::new(77, 0);
        let mut q: Vec<f64> = (0..n).map(|i| rng.gauss_at(i as u64)).collect();
        let nq = q.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in q.iter_mut() {
            *x /= nq;
        }
        // build complex system
        let mut a: Vec<Complex64> = (0..n * n)
            .map(|ij| Complex64::new(m.a[ij], 0.0))
            .collect();
        for i in 0..n {
            a[i * n + i] -= z.as_complex();
        }
        let mut x: Vec<Complex64> = q.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        // LU with partial pivoting
        for col in 0..n {
            let mut piv = col;
            for r in col + 1..n {
                if a[r * n + col].norm() > a[piv * n + col].norm() {
                    piv = r;
                }
            }
            if piv != col {
                for c in 0..n {
                    a.swap(col * n + c, piv * n + c);
                }
                x.swap(col, piv);
            }
            for r in col + 1..n {
                let f = a[r * n + col] / a[col * n + col];
                for c in col..n {
                    let v = a[col * n + c];
                    a[r * n + c] -= f * v;
                }
                let xv = x[col];
                x[r] -= f * xv;
            }
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in i + 1..n {
                acc -= a[i * n + j] * x[j];
            }
            x[i] = acc / a[i * n + i];
        }
        let direct: Complex64 = q
            .iter()
            .zip(&x)
            .map(|(&qi, xi)| xi * qi)
            .sum();
        let spectral = resolvent_qform(&s, &q, z);
        assert!(
            (direct - spectral).norm() <= 1e-9,
            "direct {direct} vs spectral {spectral}"
        );
    }

    #[test]
    fn stieltjes_simple_cases() {
        // N = 1, lambda = 0, z = i: m = 1/(0 - i) = i
        let m = stieltjes_from_eigenvalues(&[0.0], HalfPlanePoint::new(0.0, 1.0));
        assert!((m - Complex64::new(0.0, 1.0)).norm() < 1e-15);
        // identity spectrum at z = 2i: 1/(1 - 2i)
        let s = eigh(&SymMatrix::identity(4)).unwrap();
        let m = stieltjes(&s, HalfPlanePoint::new(0.0, 2.0));
        let expect = 1.0 / Complex64::new(1.0, -2.0);
        assert!((m - expect).norm() < 1e-14);
    }

    #[test]
    fn nonfinite_input_rejected() {
        let mut m = SymMatrix::identity(3);
        m.set_sym(0, 1, f64::NAN);
        assert!(matches!(eigh(&m), Err(LinalgError::NonFinite { .. })));
    }
}
