//! Period-based transition matrices and their spectra: swap invariance,
//! convergence verdicts and asymptotic rates.

use std::cmp::Ordering;
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

use crate::graph::{CliqueCoverage, LineGraph};
use crate::protocol::TransitionMatrix;
use crate::scheduler::{Schedule, ScheduleError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectrumError {
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("transition {index} acts on dimension {got}, expected {expected}")]
    DimensionMismatch { index: usize, expected: usize, got: usize },
    #[error("no transitions given")]
    NoTransitions,
    #[error("matrix is {rows}x{cols}, not square")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("eigenvalue iteration did not converge")]
    NoConvergence,
    #[error("schedule must visit every coverage clique exactly once per period")]
    NotOnePass,
    #[error("rate undefined: {0}")]
    RateUndefined(RateIssue),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateIssue {
    /// Every eigenvalue has the maximal modulus.
    NoSecondModulus,
    /// `λ₂ = 0`: the period matrix annihilates everything off the fixed space.
    FiniteTime,
}

impl fmt::Display for RateIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RateIssue::NoSecondModulus => write!(f, "all eigenvalues share the spectral radius"),
            RateIssue::FiniteTime => write!(f, "second modulus is zero (finite-time or degenerate)"),
        }
    }
}

/// `F_d = M_{σ(d-1)} ··· M_{σ(0)}` for one period of a schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodMatrix {
    pub matrix: DMatrix<f64>,
    pub schedule: Schedule,
}

impl PeriodMatrix {
    pub fn period(&self) -> usize {
        self.schedule.period()
    }
}

/// Dense ordered product over one period; later entries multiply on the left.
pub fn period_matrix(
    sched: &Schedule,
    transitions: &[TransitionMatrix],
) -> Result<PeriodMatrix, SpectrumError> {
    let dim = transitions.first().ok_or(SpectrumError::NoTransitions)?.dim();
    sched.check_indices(transitions.len())?;
    for (index, t) in transitions.iter().enumerate() {
        if t.dim() != dim {
            return Err(SpectrumError::DimensionMismatch { index: index + 1, expected: dim, got: t.dim() });
        }
    }
    let mut f = DMatrix::<f64>::identity(dim, dim);
    for &e in sched.entries() {
        left_multiply(&transitions[e], &mut f);
    }
    Ok(PeriodMatrix { matrix: f, schedule: sched.clone() })
}

/// `f <- M f`, column by column through the lazy transition.
fn left_multiply(t: &TransitionMatrix, f: &mut DMatrix<f64>) {
    let mut col = vec![0.0; f.nrows()];
    for c in 0..f.ncols() {
        col.copy_from_slice(f.column(c).as_slice());
        t.apply_in_place(&mut col).expect("dimensions checked");
        f.column_mut(c).copy_from_slice(&col);
    }
}

fn cmp_reporting(a: &Complex64, b: &Complex64) -> Ordering {
    b.norm()
        .partial_cmp(&a.norm())
        .unwrap_or(Ordering::Equal)
        .then(a.arg().partial_cmp(&b.arg()).unwrap_or(Ordering::Equal))
}

/// All eigenvalues with multiplicity, by descending modulus then argument.
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex64>, SpectrumError> {
    if m.nrows() != m.ncols() {
        return Err(SpectrumError::NotSquare { rows: m.nrows(), cols: m.ncols() });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(SpectrumError::NonFinite);
    }
    let schur = |c: &DMatrix<f64>| {
        c.clone().try_schur(f64::EPSILON, MAX_ITER).map(|s| s.complex_eigenvalues().iter().copied().collect::<Vec<_>>())
    };
    let (zeros, core) = deflate_zero(m);
    let mut eig = match schur(&core) {
        Some(mut eig) => {
            eig.extend(std::iter::repeat(Complex64::new(0.0, 0.0)).take(zeros));
            eig
        }
        // the compressed block occasionally stalls the QR sweep; the raw matrix does not
        None => schur(m).ok_or(SpectrumError::NoConvergence)?,
    };
    eig.sort_by(cmp_reporting);
    Ok(eig)
}

/// Singular values at or below this fraction of `‖M‖₂` count as zero when
/// peeling off the zero eigenvalue.
pub const ZERO_SV_TOL: f64 = 1e-9;

const MAX_ITER: usize = 10_000;

/// Staircase reduction: repeatedly compress onto the orthogonal complement
/// of the numerical kernel, `C ← Rᵀ C R`. Returns the number of zero
/// eigenvalues removed and the remaining block. Nilpotent Jordan blocks
/// come out as exact zeros instead of an `eps^(1/k)` ring.
fn deflate_zero(m: &DMatrix<f64>) -> (usize, DMatrix<f64>) {
    let decompose = |c: &DMatrix<f64>| c.clone().try_svd(false, true, f64::EPSILON, MAX_ITER);
    let Some(scale) = decompose(m).map(|d| d.singular_values.max()) else {
        return (0, m.clone());
    };
    if scale == 0.0 {
        return (m.nrows(), DMatrix::zeros(0, 0));
    }
    let cut = ZERO_SV_TOL * scale;
    let mut core = m.clone();
    let mut zeros = 0;
    while core.nrows() > 0 {
        let Some(svd) = decompose(&core) else { break };
        let v_t = svd.v_t.expect("requested");
        let keep: Vec<usize> = (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] > cut).collect();
        if keep.len() == core.nrows() {
            break;
        }
        let r = v_t.select_rows(&keep).transpose();
        zeros += core.nrows() - keep.len();
        core = r.transpose() * &core * &r;
    }
    (zeros, core)
}

/// Default matching tolerance, relative to the spectral radius.
pub fn default_tol(rho: f64) -> f64 {
    1e-9 * rho.max(1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReport {
    pub eigenvalues: Vec<Complex64>,
    pub rho: f64,
    pub lambda2: Option<f64>,
}

impl SpectrumReport {
    /// Moduli within `default_tol(ρ)` of `ρ` count as `ρ`.
    pub fn new(mut eigenvalues: Vec<Complex64>) -> Self {
        eigenvalues.sort_by(cmp_reporting);
        let rho = eigenvalues.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let tol = default_tol(rho);
        let lambda2 = eigenvalues
            .iter()
            .map(|z| z.norm())
            .filter(|&r| r < rho - tol)
            .fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |a| a.max(r))));
        SpectrumReport { eigenvalues, rho, lambda2 }
    }

    pub fn of(m: &DMatrix<f64>) -> Result<Self, SpectrumError> {
        Ok(Self::new(eigenvalues(m)?))
    }
}

/// Largest modulus strictly below the spectral radius.
pub fn lambda2(rep: &SpectrumReport) -> Option<f64> {
    rep.lambda2
}

/// Greedy nearest-neighbour matching of two eigenvalue multisets.
pub fn spectra_equal(a: &[Complex64], b: &[Complex64], tol: f64) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let key = |z: &Complex64, w: &Complex64| {
        z.re.partial_cmp(&w.re).unwrap_or(Ordering::Equal).then(z.im.partial_cmp(&w.im).unwrap_or(Ordering::Equal))
    };
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(key);
    b.sort_by(key);
    let mut used = vec![false; b.len()];
    for z in &a {
        let best = b
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .map(|(j, w)| (j, (z - w).norm()))
            .min_by(|x, y| x.1.partial_cmp(&y.1).unwrap_or(Ordering::Equal));
        match best {
            Some((j, dist)) if dist <= tol => used[j] = true,
            _ => return false,
        }
    }
    true
}

/// Which sufficient condition for swap invariance applies at a position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwapCondition {
    NonAdjacent,
    AdjacentAcyclic,
    NotGuaranteed,
}

impl fmt::Display for SwapCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SwapCondition::NonAdjacent => "NON_ADJACENT",
            SwapCondition::AdjacentAcyclic => "ADJACENT_ACYCLIC",
            SwapCondition::NotGuaranteed => "NOT_GUARANTEED",
        })
    }
}

/// Classifies exchanging schedule positions `s` and `s + 1` (1-based).
/// The schedule must be a one-pass enumeration of the coverage.
pub fn swap_condition(
    cov: &CliqueCoverage,
    lg: &LineGraph,
    sched: &Schedule,
    s: usize,
) -> Result<SwapCondition, SpectrumError> {
    if !sched.is_one_pass_of(cov.len()) {
        return Err(SpectrumError::NotOnePass);
    }
    let d = sched.period();
    if s == 0 || s >= d {
        return Err(ScheduleError::SwapOutOfRange { s, max: d - 1 }.into());
    }
    let (a, b) = (sched.entries()[s - 1], sched.entries()[s]);
    Ok(if !lg.adjacent(a, b) {
        SwapCondition::NonAdjacent
    } else if !lg.in_cycle(a) && !lg.in_cycle(b) {
        SwapCondition::AdjacentAcyclic
    } else {
        SwapCondition::NotGuaranteed
    })
}

/// Asymptotic per-step rate `|λ₂(F_d)|^{1/d}`.
pub fn convergence_rate(f: &PeriodMatrix) -> Result<f64, SpectrumError> {
    let rep = SpectrumReport::of(&f.matrix)?;
    rate_from_report(&rep, f.period())
}

pub fn rate_from_report(rep: &SpectrumReport, period: usize) -> Result<f64, SpectrumError> {
    match rep.lambda2 {
        None => Err(SpectrumError::RateUndefined(RateIssue::NoSecondModulus)),
        Some(l2) if l2 <= default_tol(rep.rho) => Err(SpectrumError::RateUndefined(RateIssue::FiniteTime)),
        Some(l2) => Ok(l2.powf(1.0 / period as f64)),
    }
}

/// Eigenvalues within this distance of 1 form the unit cluster.
pub const UNIT_CLUSTER_TOL: f64 = 1e-6;

/// Per-condition outcome of the periodic convergence test.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceVerdict {
    pub rho: f64,
    /// (i) `ρ(F_d) ≤ 1`.
    pub radius_ok: bool,
    /// (ii) eigenvalue 1 is semisimple.
    pub unit_semisimple: bool,
    /// (iii) no other eigenvalue on the unit circle.
    pub no_other_unit_modulus: bool,
    /// (iv) every partial product fixes the fixed space of `F_d`.
    pub partials_fix_fixed_space: bool,
    pub unit_multiplicity: usize,
    /// Orthonormal basis of `{v : F_d v = v}`, one column per vector.
    pub fixed_space: DMatrix<f64>,
    pub failures: Vec<String>,
}

impl ConvergenceVerdict {
    pub fn convergent(&self) -> bool {
        self.radius_ok && self.unit_semisimple && self.no_other_unit_modulus && self.partials_fix_fixed_space
    }
}

/// Evaluates the four spectral conditions for convergence of a periodic
/// protocol, using `tol` for modulus comparisons.
pub fn check_convergence(
    f: &PeriodMatrix,
    transitions: &[TransitionMatrix],
    tol: f64,
) -> Result<ConvergenceVerdict, SpectrumError> {
    let eig = eigenvalues(&f.matrix)?;
    let dim = f.matrix.nrows();
    let rho = eig.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut failures = Vec::new();

    let radius_ok = rho <= 1.0 + tol;
    if !radius_ok {
        failures.push(format!("(i) spectral radius {rho} exceeds 1"));
    }

    let one = Complex64::new(1.0, 0.0);
    let unit_multiplicity = eig.iter().filter(|z| (*z - one).norm() <= UNIT_CLUSTER_TOL).count();
    let shifted = &f.matrix - DMatrix::<f64>::identity(dim, dim);
    let scale = f.matrix.norm().max(1.0);
    let threshold = 1e-9 * scale;
    let svd = shifted.try_svd(false, true, f64::EPSILON, MAX_ITER).ok_or(SpectrumError::NoConvergence)?;
    let rank = svd.singular_values.iter().filter(|&&s| s > threshold).count();
    let unit_semisimple = rank + unit_multiplicity == dim;
    if !unit_semisimple {
        failures.push(format!(
            "(ii) eigenvalue 1 has algebraic multiplicity {unit_multiplicity} but geometric multiplicity {}",
            dim - rank
        ));
    }

    let others: Vec<&Complex64> = eig
        .iter()
        .filter(|z| (z.norm() - 1.0).abs() <= UNIT_CLUSTER_TOL.max(tol) && (*z - one).norm() > UNIT_CLUSTER_TOL)
        .collect();
    let no_other_unit_modulus = others.is_empty();
    if !no_other_unit_modulus {
        failures.push(format!("(iii) {} eigenvalue(s) of modulus 1 other than 1, e.g. {}", others.len(), others[0]));
    }

    let v_t = svd.v_t.expect("requested V^T");
    let kernel_rows: Vec<usize> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s <= threshold)
        .map(|(k, _)| k)
        .collect();
    let mut fixed_space = DMatrix::<f64>::zeros(dim, kernel_rows.len());
    for (c, &k) in kernel_rows.iter().enumerate() {
        fixed_space.set_column(c, &v_t.row(k).transpose());
    }

    let mut partials_fix_fixed_space = true;
    let d = f.period();
    'basis: for c in 0..fixed_space.ncols() {
        let beta: Vec<f64> = fixed_space.column(c).iter().copied().collect();
        let mut x = beta.clone();
        for k in 0..d.saturating_sub(1) {
            let t = transitions
                .get(f.schedule.entries()[k])
                .ok_or(SpectrumError::NoTransitions)?;
            t.apply_in_place(&mut x).map_err(|_| SpectrumError::DimensionMismatch {
                index: f.schedule.entries()[k] + 1,
                expected: dim,
                got: t.dim(),
            })?;
            let err = x.iter().zip(&beta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if err > 1e-9 * scale {
                partials_fix_fixed_space = false;
                failures.push(format!(
                    "(iv) partial product through step {k} moves fixed-space vector {} by {err:e}",
                    c + 1
                ));
                break 'basis;
            }
        }
    }

    Ok(ConvergenceVerdict {
        rho,
        radius_ok,
        unit_semisimple,
        no_other_unit_modulus,
        partials_fix_fixed_space,
        unit_multiplicity,
        fixed_space,
        failures,
    })
}
