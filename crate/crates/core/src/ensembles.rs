//! Samplers for GOE, GUE, Bernoulli, and generalized Wigner matrices with
//! variance profiles, matched-moment entry laws, and entry perturbations.
//!
//! Sampling is keyed by `(seed, stream, entry index)` through the
//! counter-based generator, so a matrix is a pure function of its spec and
//! stream: replicas are order-independent and bitwise reproducible.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{HermMatrix, SymMatrix};
use crate::rng::CounterRng;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("invalid variance profile: {0}")]
    InvalidProfile(String),
    #[error("matched moment law requires m4 >= 1 (Jensen), got {0}")]
    InfeasibleFourthMoment(f64),
    #[error("complex symmetry is only supported with the gaussian law")]
    ComplexNonGaussian,
    #[error("profile csv malformed: {0}")]
    ProfileCsv(String),
}

/// Symmetric nonnegative variance profile sigma^2_{ij}; columns sum to 1
/// for generalized Wigner matrices (GOE's (N+1)/N column sums are treated as
/// a flagged special case, not an error).
#[derive(Clone, Debug, PartialEq)]
pub struct VarianceProfile {
    pub n: usize,
    pub sigma2: Vec<f64>,
}

impl VarianceProfile {
    /// Flat profile: every entry variance 1/N (doubly stochastic).
    pub fn flat(n: usize) -> Self {
        VarianceProfile { n, sigma2: vec![1.0 / n as f64; n * n] }
    }

    /// GOE profile: off-diagonal 1/N, diagonal 2/N.
    pub fn goe(n: usize) -> Self {
        let mut p = Self::flat(n);
        for i in 0..n {
            p.sigma2[i * n + i] = 2.0 / n as f64;
        }
        p
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.sigma2[i * self.n + j]
    }

    pub fn is_goe(&self) -> bool {
        let n = self.n;
        let (off, diag) = (1.0 / n as f64, 2.0 / n as f64);
        (0..n).all(|i| {
            (0..n).all(|j| {
                let v = self.get(i, j);
                if i == j {
                    (v - diag).abs() < 1e-15
                } else {
                    (v - off).abs() < 1e-15
                }
            })
        })
    }

    pub fn column_sums(&self) -> Vec<f64> {
        (0..self.n)
            .map(|j| (0..self.n).map(|i| self.get(i, j)).sum())
            .collect()
    }
}

/// Standardized entry law: mean 0, variance 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum EntryLaw {
    Gaussian,
    Rademacher,
    /// Atoms +-sqrt(m4) with probability 1/(2 m4) each, 0 otherwise.
    ThreePoint { m4: f64 },
}

impl EntryLaw {
    /// Draw addressed by an absolute entry index.
    #[inline]
    pub fn draw_at(self, rng: &CounterRng, index: u64) -> f64 {
        match self {
            EntryLaw::Gaussian => rng.gauss_at(index),
            EntryLaw::Rademacher => {
                if rng.at(index) & 1 == 0 {
                    1.0
                } else {
                    -1.0
                }
            }
            EntryLaw::ThreePoint { m4 } => {
                let u = rng.uniform_at(index);
                let p = 1.0 / (2.0 * m4);
                if u < p {
                    m4.sqrt()
                } else if u < 2.0 * p {
                    -m4.sqrt()
                } else {
                    0.0
                }
            }
        }
    }

    /// Exact moments (mu1, mu2, mu3, mu4) of the standardized law.
    pub fn moments(self) -> (f64, f64, f64, f64) {
        match self {
            EntryLaw::Gaussian => (0.0, 1.0, 0.0, 3.0),
            EntryLaw::Rademacher => (0.0, 1.0, 0.0, 1.0),
            EntryLaw::ThreePoint { m4 } => (0.0, 1.0, 0.0, m4),
        }
    }
}

/// Entry law with prescribed moments mu1 = mu3 = 0, mu2 = 1, mu4 = m4.
pub fn matched_moment_law(m4: f64) -> Result<EntryLaw, EnsembleError> {
    if !(m4 >= 1.0) {
        return Err(EnsembleError::InfeasibleFourthMoment(m4));
    }
    if m4 == 1.0 {
        // the unique symmetric two-point solution
        Ok(EntryLaw::Rademacher)
    } else {
        Ok(EntryLaw::ThreePoint { m4 })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Symmetry {
    Real,
    Complex,
}

/// Fully determines a sampling distribution: symmetry class, variance
/// profile, entry law, and the base seed.
#[derive(Clone, Debug)]
pub struct EnsembleSpec {
    pub symmetry: Symmetry,
    pub profile: VarianceProfile,
    pub law: EntryLaw,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub enum SampledMatrix {
    Real(SymMatrix),
    Complex(HermMatrix),
}

impl EnsembleSpec {
    pub fn goe(n: usize, seed: u64) -> Self {
        EnsembleSpec {
            symmetry: Symmetry::Real,
            profile: VarianceProfile::goe(n),
            law: EntryLaw::Gaussian,
            seed,
        }
    }

    /// GUE per the convention with E|h_ij|^2 = 1/N for all entries.
    pub fn gue(n: usize, seed: u64) -> Self {
        EnsembleSpec {
            symmetry: Symmetry::Complex,
            profile: VarianceProfile::flat(n),
            law: EntryLaw::Gaussian,
            seed,
        }
    }

    /// Symmetric Bernoulli: entries +-1/sqrt(N).
    pub fn bernoulli(n: usize, seed: u64) -> Self {
        EnsembleSpec {
            symmetry: Symmetry::Real,
            profile: VarianceProfile::flat(n),
            law: EntryLaw::Rademacher,
            seed,
        }
    }

    pub fn n(&self) -> usize {
        self.profile.n
    }

    fn check(&self) -> Result<(), EnsembleError> {
        if self.symmetry == Symmetry::Complex && self.law != EntryLaw::Gaussian {
            return Err(EnsembleError::ComplexNonGaussian);
        }
        let report = validate_profile(&self.profile);
        if !report.pass() {
            return Err(EnsembleError::InvalidProfile(report.violation().unwrap()));
        }
        Ok(())
    }
}

/// Draw a matrix for `(spec, stream)`. Upper-triangle entries are
/// independent; entry (i, j) is sigma_{ij} times a standardized draw keyed by
/// the entry index, so the result does not depend on traversal order.
pub fn sample_ensemble(spec: &EnsembleSpec, stream: u64) -> Result<SampledMatrix, EnsembleError> {
    spec.check()?;
    Ok(match spec.symmetry {
        Symmetry::Real => SampledMatrix::Real(sample_real_unchecked(spec, stream)),
        Symmetry::Complex => SampledMatrix::Complex(sample_complex_unchecked(spec, stream)),
    })
}

/// Real-symmetric sampler; panics if the spec is complex.
pub fn sample_real(spec: &EnsembleSpec, stream: u64) -> Result<SymMatrix, EnsembleError> {
    match sample_ensemble(spec, stream)? {
        SampledMatrix::Real(m) => Ok(m),
        SampledMatrix::Complex(_) => panic!("spec has complex symmetry"),
    }
}

/// Complex-Hermitian sampler; panics if the spec is real.
pub fn sample_complex(spec: &EnsembleSpec, stream: u64) -> Result<HermMatrix, EnsembleError> {
    match sample_ensemble(spec, stream)? {
        SampledMatrix::Complex(m) => Ok(m),
        SampledMatrix::Real(_) => panic!("spec has real symmetry"),
    }
}

fn sample_real_unchecked(spec: &EnsembleSpec, stream: u64) -> SymMatrix {
    let n = spec.n();
    let rng = CounterRng::new(spec.seed, stream);
    SymMatrix::from_upper(n, |i, j| {
        let sigma = spec.profile.get(i, j).sqrt();
        sigma * spec.law.draw_at(&rng, (i * n + j) as u64)
    })
}

fn sample_complex_unchecked(spec: &EnsembleSpec, stream: u64) -> HermMatrix {
    let n = spec.n();
    let rng = CounterRng::new(spec.seed, stream);
    let nn = (n * n) as u64;
    HermMatrix::from_upper(n, |i, j| {
        let idx = (i * n + j) as u64;
        let sigma2 = spec.profile.get(i, j);
        if i == j {
            Complex64::new(sigma2.sqrt() * rng.gauss_at(idx), 0.0)
        } else {
            // real and imaginary parts each carry half the variance
            let s = (sigma2 / 2.0).sqrt();
            Complex64::new(s * rng.gauss_at(idx), s * rng.gauss_at(idx + nn))
        }
    })
}

/// Report-style validation of a variance profile.
#[derive(Clone, Debug, Serialize)]
pub struct ProfileReport {
    pub n: usize,
    pub symmetric: bool,
    pub nonnegative: bool,
    pub column_sums: Vec<f64>,
    pub stochastic: bool,
    pub min_n_sigma2: f64,
    pub max_n_sigma2: f64,
    /// GOE column sums are (N+1)/N; handled as a special case, not rejected.
    pub goe_special_case: bool,
}

impl ProfileReport {
    pub fn pass(&self) -> bool {
        self.symmetric && self.nonnegative && (self.stochastic || self.goe_special_case)
    }

    pub fn violation(&self) -> Option<String> {
        if !self.symmetric {
            Some("profile not symmetric".into())
        } else if !self.nonnegative {
            Some("profile has negative variances".into())
        } else if !(self.stochastic || self.goe_special_case) {
            Some(format!(
                "columns do not sum to 1 (max deviation {:.3e})",
                self.column_sums
                    .iter()
                    .map(|s| (s - 1.0).abs())
                    .fold(0.0_f64, f64::max)
            ))
        } else {
            None
        }
    }
}

pub fn validate_profile(p: &VarianceProfile) -> ProfileReport {
    let n = p.n;
    let symmetric = (0..n).all(|i| (0..n).all(|j| p.get(i, j) == p.get(j, i)));
    let nonnegative = p.sigma2.iter().all(|&v| v >= 0.0);
    let column_sums = p.column_sums();
    let stochastic = column_sums.iter().all(|s| (s - 1.0).abs() <= 1e-12);
    let nf = n as f64;
    let min_n_sigma2 = p.sigma2.iter().fold(f64::INFINITY, |m, &v| m.min(v)) * nf;
    let max_n_sigma2 = p.sigma2.iter().fold(0.0_f64, |m, &v| m.max(v)) * nf;
    ProfileReport {
        n,
        symmetric,
        nonnegative,
        column_sums,
        stochastic,
        min_n_sigma2,
        max_n_sigma2,
        goe_special_case: p.is_goe(),
    }
}

/// Theta^{(a,b)}_w: scale entries (a,b) and (b,a) by w, all others unchanged.
pub fn perturb_entry(m: &SymMatrix, a: usize, b: usize, w: f64) -> SymMatrix {
    let mut out = m.clone();
    out.set_sym(a, b, w * m.get(a, b));
    out
}

/// Profile export: first record is the order N, then N records of N
/// variances.
pub fn profile_to_csv<W: std::io::Write>(p: &VarianceProfile, w: W) -> Result<(), EnsembleError> {
    let mut wtr = csv::WriterBuilder::new().flexible(true).from_writer(w);
    wtr.write_record([p.n.to_string()])
        .map_err(|e| EnsembleError::ProfileCsv(e.to_string()))?;
    for i in 0..p.n {
        let row: Vec<String> = (0..p.n).map(|j| format!("{:.17e}", p.get(i, j))).collect();
        wtr.write_record(&row)
            .map_err(|e| EnsembleError::ProfileCsv(e.to_string()))?;
    }
    wtr.flush().map_err(|e| EnsembleError::ProfileCsv(e.to_string()))
}

pub fn profile_from_csv<R: std::io::Read>(r: R) -> Result<VarianceProfile, EnsembleError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(r);
    let mut records = rdr.records();
    let header = records
        .next()
        .ok_or_else(|| EnsembleError::ProfileCsv("empty file".into()))?
        .map_err(|e| EnsembleError::ProfileCsv(e.to_string()))?;
    let n: usize = header
        .get(0)
        .ok_or_else(|| EnsembleError::ProfileCsv("missing order".into()))?
        .trim()
        .parse()
        .map_err(|_| EnsembleError::ProfileCsv("order not an integer".into()))?;
    let mut sigma2 = Vec::with_capacity(n * n);
    for (i, rec) in records.enumerate() {
        let rec = rec.map_err(|e| EnsembleError::ProfileCsv(e.to_string()))?;
        if rec.len() != n {
            return Err(EnsembleError::ProfileCsv(format!(
                "row {i} has {} fields, expected {n}",
                rec.len()
            )));
        }
        for f in rec.iter() {
            sigma2.push(
                f.trim()
                    .parse()
                    .map_err(|_| EnsembleError::ProfileCsv(format!("bad value {f:?}")))?,
            );
        }
    }
    if sigma2.len() != n * n {
        return Err(EnsembleError::ProfileCsv(format!(
            "expected {n} rows, got {}",
            sigma2.len() / n.max(1)
        )));
    }
    Ok(VarianceProfile { n, sigma2 })
}
