//! Trajectory simulation, error metrics, multi-clique classes and the
//! denominator audit for exact runs.

use std::collections::BTreeSet;
use std::io::{self, Write};

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use thiserror::Error;

use crate::graph::{Clique, CliqueCoverage, LineGraph};
use crate::protocol::{multi_transition, ProtocolError, TransitionMatrix};
use crate::scalar::{mean, Mode, Scalar};
use crate::scheduler::{Schedule, ScheduleError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("no transitions given")]
    NoTransitions,
    #[error("error metric needs scalar node states, got dimension {0}")]
    VectorStates(usize),
    #[error("brute force limited to {limit} line-graph vertices, got {d}")]
    TooLarge { d: usize, limit: usize },
    #[error("class {class} contains adjacent cliques {a} and {b}")]
    AdjacentInClass { class: usize, a: usize, b: usize },
    #[error("clique {0} is in no class or in several")]
    ClassCover(usize),
}

/// States `x(0..=T)` of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S> {
    pub states: Vec<Vec<S>>,
    /// Per-node state dimension.
    pub state_dim: usize,
}

impl<S: Scalar> Trajectory<S> {
    pub fn mode(&self) -> Mode {
        S::MODE
    }

    pub fn horizon(&self) -> usize {
        self.states.len() - 1
    }

    pub fn last(&self) -> &[S] {
        self.states.last().expect("trajectory holds x(0)")
    }
}

/// Simulates `T` steps of `x(t+1) = M_{σ(t)} x(t)` with `σ` periodic.
pub fn run<S: Scalar>(
    sched: &Schedule,
    transitions: &[TransitionMatrix],
    x0: Vec<S>,
    horizon: usize,
) -> Result<Trajectory<S>, SimError> {
    let first = transitions.first().ok_or(SimError::NoTransitions)?;
    sched.check_indices(transitions.len())?;
    let state_dim = first.state_dim();
    let mut states = Vec::with_capacity(horizon + 1);
    let mut x = x0;
    for t in 0..horizon {
        let next = transitions[sched.at(t)].apply(&x)?;
        states.push(std::mem::replace(&mut x, next));
    }
    states.push(x);
    Ok(Trajectory { states, state_dim })
}

/// Runs a synthesized sequence once, one transition per step.
pub fn run_sequence<S: Scalar>(transitions: &[TransitionMatrix], x0: Vec<S>) -> Result<Trajectory<S>, SimError> {
    if transitions.is_empty() {
        return Ok(Trajectory { states: vec![x0], state_dim: 1 });
    }
    let sched = Schedule::new((0..transitions.len()).collect())?;
    run(&sched, transitions, x0, transitions.len())
}

/// `e(t) = Σ_i (x_i(t) - x̄)²` with `x̄` the mean of `x(0)` over all nodes.
pub fn error_trajectory<S: Scalar>(traj: &Trajectory<S>) -> Result<Vec<S>, SimError> {
    if traj.state_dim != 1 {
        return Err(SimError::VectorStates(traj.state_dim));
    }
    let xbar = mean(&traj.states[0]);
    Ok(traj
        .states
        .iter()
        .map(|x| {
            x.iter().fold(S::zero(), |acc, v| {
                let dev = v.clone() - xbar.clone();
                acc + dev.clone() * dev
            })
        })
        .collect())
}

/// First recorded `t` at which all node states agree.
pub fn consensus_time<S: Scalar>(traj: &Trajectory<S>) -> Option<usize> {
    traj.states.iter().position(|x| S::is_consensus(x))
}

/// Euclidean distance of each state from the initial mean vector.
pub fn deviation_norms<S: Scalar>(traj: &Trajectory<S>) -> Result<Vec<f64>, SimError> {
    Ok(error_trajectory(traj)?.iter().map(|e| e.to_f64().max(0.0).sqrt()).collect())
}

/// Least-squares slope of `ln y` against `t`; points with `y <= 0` are skipped.
pub fn log_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points.iter().filter(|(_, y)| *y > 0.0).map(|&(t, y)| (t, y.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// `ln ‖x(kd) - x̄1‖` at period boundaries `k = 0..=periods`, for scalar
/// states under mean-preserving transitions. The deviation is re-centred and
/// rescaled every period, so the log norm stays accurate long after the raw
/// state has hit roundoff. An exactly vanished deviation yields `-inf` from
/// then on.
pub fn log_deviation_norms(
    sched: &Schedule,
    transitions: &[TransitionMatrix],
    x0: &[f64],
    periods: usize,
) -> Result<Vec<f64>, SimError> {
    let first = transitions.first().ok_or(SimError::NoTransitions)?;
    sched.check_indices(transitions.len())?;
    if first.state_dim() != 1 {
        return Err(SimError::VectorStates(first.state_dim()));
    }
    let centre = |y: &mut Vec<f64>| {
        let m = y.iter().sum::<f64>() / y.len() as f64;
        y.iter_mut().for_each(|v| *v -= m);
        y.iter().map(|v| v * v).sum::<f64>().sqrt()
    };
    let mut y = x0.to_vec();
    let mut norm = centre(&mut y);
    let mut scale = norm.ln();
    let mut out = Vec::with_capacity(periods + 1);
    out.push(scale);
    for _ in 0..periods {
        if norm == 0.0 {
            out.push(f64::NEG_INFINITY);
            continue;
        }
        y.iter_mut().for_each(|v| *v /= norm);
        for t in 0..sched.period() {
            transitions[sched.at(t)].apply_in_place(&mut y)?;
        }
        norm = centre(&mut y);
        scale += norm.ln();
        out.push(scale);
    }
    Ok(out)
}

/// CSV with header `t,x_1,...,x_n,e`.
pub fn write_trajectory_csv<S: Scalar, W: Write>(traj: &Trajectory<S>, mut w: W) -> io::Result<()> {
    let dim = traj.states[0].len();
    let errors = error_trajectory(traj).ok();
    let mut header = String::from("t");
    for i in 1..=dim {
        header.push_str(&format!(",x_{i}"));
    }
    header.push_str(",e");
    writeln!(w, "{header}")?;
    for (t, x) in traj.states.iter().enumerate() {
        let mut line = t.to_string();
        for v in x {
            line.push(',');
            line.push_str(&v.render());
        }
        line.push(',');
        if let Some(e) = &errors {
            line.push_str(&e[t].render());
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Prime factors of one reduced denominator: found primes plus whatever
/// cofactor survived trial division.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DenominatorPrimes {
    pub primes: BTreeSet<u64>,
    pub residual: Option<BigInt>,
}

const TRIAL_LIMIT: u64 = 10_000;

fn denominator_primes(den: &BigInt) -> DenominatorPrimes {
    let mut out = DenominatorPrimes::default();
    let mut rest = den.clone();
    let mut p = 2u64;
    while p <= TRIAL_LIMIT && !rest.is_one() {
        let bp = BigInt::from(p);
        if rest.is_multiple_of(&bp) {
            out.primes.insert(p);
            while rest.is_multiple_of(&bp) {
                rest /= &bp;
            }
        }
        p += if p == 2 { 1 } else { 2 };
    }
    if !rest.is_one() {
        match rest.to_u64() {
            // all factors of rest exceed TRIAL_LIMIT, so a small rest is prime
            Some(r) if r <= TRIAL_LIMIT * TRIAL_LIMIT => {
                out.primes.insert(r);
            }
            _ => out.residual = Some(rest),
        }
    }
    out
}

/// Union over nodes of the prime sets of each reduced state denominator,
/// one entry per recorded `t`.
pub fn rational_audit(traj: &Trajectory<BigRational>) -> Vec<DenominatorPrimes> {
    traj.states
        .iter()
        .map(|x| {
            let mut acc = DenominatorPrimes::default();
            for v in x {
                let d = denominator_primes(v.denom());
                acc.primes.extend(d.primes);
                if let Some(r) = d.residual {
                    acc.residual = Some(match acc.residual.take() {
                        Some(prev) => prev.lcm(&r),
                        None => r,
                    });
                }
            }
            acc
        })
        .collect()
}

/// Partition of coverage clique indices into classes of pairwise
/// non-adjacent cliques.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiCliqueCoverage {
    pub classes: Vec<Vec<usize>>,
}

impl MultiCliqueCoverage {
    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn validate(&self, lg: &LineGraph) -> Result<(), SimError> {
        let mut seen = vec![0usize; lg.vertex_count()];
        for (k, class) in self.classes.iter().enumerate() {
            for (i, &a) in class.iter().enumerate() {
                if a >= seen.len() {
                    return Err(SimError::ClassCover(a + 1));
                }
                seen[a] += 1;
                if let Some(&b) = class[i + 1..].iter().find(|&&b| lg.adjacent(a, b)) {
                    return Err(SimError::AdjacentInClass { class: k + 1, a: a + 1, b: b + 1 });
                }
            }
        }
        match seen.iter().position(|&c| c != 1) {
            Some(i) => Err(SimError::ClassCover(i + 1)),
            None => Ok(()),
        }
    }

    /// One simultaneous transition per class, in class order.
    pub fn transitions(&self, cov: &CliqueCoverage) -> Result<Vec<TransitionMatrix>, SimError> {
        self.classes
            .iter()
            .map(|class| {
                let cls: Vec<Clique> = class.iter().map(|&i| cov.cliques()[i].clone()).collect();
                Ok(multi_transition(&cls, cov.node_count())?)
            })
            .collect()
    }

    pub fn to_one_based(&self) -> Vec<Vec<usize>> {
        self.classes.iter().map(|c| c.iter().map(|i| i + 1).collect()).collect()
    }
}

/// First-fit colouring of the line graph in clique index order.
pub fn greedy_classes(lg: &LineGraph) -> MultiCliqueCoverage {
    let mut classes: Vec<Vec<usize>> = Vec::new();
    for v in 0..lg.vertex_count() {
        match classes.iter_mut().find(|c| c.iter().all(|&u| !lg.adjacent(u, v))) {
            Some(c) => c.push(v),
            None => classes.push(vec![v]),
        }
    }
    MultiCliqueCoverage { classes }
}

pub const BRUTE_FORCE_LIMIT: usize = 15;

fn check_size(lg: &LineGraph) -> Result<usize, SimError> {
    let d = lg.vertex_count();
    if d > BRUTE_FORCE_LIMIT {
        return Err(SimError::TooLarge { d, limit: BRUTE_FORCE_LIMIT });
    }
    Ok(d)
}

/// Exact chromatic number by backtracking over colourings.
pub fn chromatic_number(lg: &LineGraph) -> Result<usize, SimError> {
    let d = check_size(lg)?;
    if d == 0 {
        return Ok(0);
    }
    fn colorable(lg: &LineGraph, v: usize, k: usize, colors: &mut [usize], used: usize) -> bool {
        if v == colors.len() {
            return true;
        }
        // a fresh colour is interchangeable with any other fresh colour
        for c in 0..k.min(used + 1) {
            if lg.neighbors(v).iter().all(|&u| u >= v || colors[u] != c) {
                colors[v] = c;
                if colorable(lg, v + 1, k, colors, used.max(c + 1)) {
                    return true;
                }
            }
        }
        false
    }
    let mut colors = vec![0; d];
    Ok((1..=d).find(|&k| colorable(lg, 0, k, &mut colors, 0)).unwrap_or(d))
}

/// Exact independence number over all vertex subsets.
pub fn independence_number(lg: &LineGraph) -> Result<usize, SimError> {
    let d = check_size(lg)?;
    let adj: Vec<u32> = (0..d).map(|v| lg.neighbors(v).iter().fold(0u32, |m, &u| m | 1 << u)).collect();
    let mut best = 0;
    for set in 0u32..(1 << d) {
        let size = set.count_ones() as usize;
        if size > best && (0..d).all(|v| set & (1 << v) == 0 || adj[v] & set == 0) {
            best = size;
        }
    }
    Ok(best)
}

/// Bounds on the minimal number of clique classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassBounds {
    pub d: usize,
    pub max_degree: usize,
    /// Exact values, when the line graph is small enough.
    pub alpha: Option<usize>,
    pub chi: Option<usize>,
    /// Known value for the excluded shapes (complete: `d`, odd cycle: 3).
    pub special: Option<usize>,
}

impl ClassBounds {
    pub fn of(lg: &LineGraph) -> Self {
        let special = if lg.is_complete() {
            Some(lg.vertex_count())
        } else if lg.is_odd_cycle() {
            Some(3)
        } else {
            None
        };
        ClassBounds {
            d: lg.vertex_count(),
            max_degree: lg.max_degree(),
            alpha: independence_number(lg).ok(),
            chi: chromatic_number(lg).ok(),
            special,
        }
    }

    /// `d / α ≤ χ`, checked as `d ≤ χ·α`.
    pub fn lower_holds(&self) -> Option<bool> {
        Some(self.d <= self.chi? * self.alpha?)
    }

    /// `χ ≤ Δ`; not asserted for complete or odd-cycle line graphs.
    pub fn upper_holds(&self) -> Option<bool> {
        if self.special.is_some() {
            return None;
        }
        Some(self.chi? <= self.max_degree)
    }
}
