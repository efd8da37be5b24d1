//! Periodic schedules and finite-time schedule synthesis.
//!
//! Feasibility of equal-size (m-regular) finite-time averaging is a number
//! theoretic question: `m | n` and both share the same prime set. The
//! constructions here produce explicit node-set sequences that reach the
//! exact global mean.

use std::collections::HashSet;
use std::fmt;

use num_integer::Integer;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{validate_cliques, Clique, CliqueCoverage, CoverageError, Graph};
use crate::protocol::{averaging_transition, ProtocolError, TransitionMatrix};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScheduleError {
    #[error("schedule is empty")]
    Empty,
    #[error("swap position {s} outside 1..={max}")]
    SwapOutOfRange { s: usize, max: usize },
    #[error("schedule entry {entry} refers to clique {index}, but there are only {count}")]
    BadIndex { entry: usize, index: usize, count: usize },
    #[error("factorization needs n >= 2, got {0}")]
    TooSmall(u64),
    #[error("(n, m) = ({n}, {m}) infeasible: {reason}")]
    Infeasible { n: u64, m: u64, reason: Infeasibility },
    #[error("factors multiply to {product}, expected n = {n}")]
    ProductMismatch { n: usize, product: usize },
    #[error("every factor must be at least 2")]
    FactorTooSmall,
    #[error("node list contains duplicates")]
    DuplicateNodes,
    #[error("search space too large: {0}")]
    SearchTooLarge(String),
}

/// Why no m-regular finite-time averaging schedule exists.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Infeasibility {
    /// `m` does not divide `n` (includes `m > n`).
    NotDivisible,
    /// `n` has a prime factor that `m` lacks.
    ExtraPrime(u64),
    /// `m < 2`.
    CliqueTooSmall,
}

impl fmt::Display for Infeasibility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Infeasibility::NotDivisible => write!(f, "non-divisible (m does not divide n)"),
            Infeasibility::ExtraPrime(p) => {
                write!(f, "extra prime (n has prime factor {p} that m lacks)")
            }
            Infeasibility::CliqueTooSmall => write!(f, "clique size must be at least 2"),
        }
    }
}

/// Clique indices (0-based, into a coverage) visited periodically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    entries: Vec<usize>,
}

impl Schedule {
    pub fn new(entries: Vec<usize>) -> Result<Self, ScheduleError> {
        if entries.is_empty() {
            return Err(ScheduleError::Empty);
        }
        Ok(Schedule { entries })
    }

    /// From 1-based clique indices.
    pub fn from_one_based(entries: &[usize]) -> Result<Self, ScheduleError> {
        let mut out = Vec::with_capacity(entries.len());
        for (k, &e) in entries.iter().enumerate() {
            if e == 0 {
                return Err(ScheduleError::BadIndex { entry: k + 1, index: 0, count: 0 });
            }
            out.push(e - 1);
        }
        Self::new(out)
    }

    /// One pass over `0..d` in coverage order.
    pub fn one_pass(d: usize) -> Result<Self, ScheduleError> {
        Self::new((0..d).collect())
    }

    pub fn entries(&self) -> &[usize] {
        &self.entries
    }

    pub fn period(&self) -> usize {
        self.entries.len()
    }

    /// Clique index selected at time `t`.
    pub fn at(&self, t: usize) -> usize {
        self.entries[t % self.entries.len()]
    }

    /// Every entry indexes into a list of `count` cliques.
    pub fn check_indices(&self, count: usize) -> Result<(), ScheduleError> {
        match self.entries.iter().position(|&e| e >= count) {
            Some(k) => Err(ScheduleError::BadIndex {
                entry: k + 1,
                index: self.entries[k] + 1,
                count,
            }),
            None => Ok(()),
        }
    }

    /// Whether the period visits each of `0..d` exactly once.
    pub fn is_one_pass_of(&self, d: usize) -> bool {
        if self.entries.len() != d {
            return false;
        }
        let mut seen = vec![false; d];
        for &e in &self.entries {
            if e >= d || seen[e] {
                return false;
            }
            seen[e] = true;
        }
        true
    }

    pub fn to_one_based(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e + 1).collect()
    }
}

/// Exchanges entries `s` and `s + 1` (1-based positions).
pub fn apply_swap(sched: &Schedule, s: usize) -> Result<Schedule, ScheduleError> {
    let d = sched.period();
    if s == 0 || s >= d {
        return Err(ScheduleError::SwapOutOfRange { s, max: d.saturating_sub(1) });
    }
    let mut entries = sched.entries.clone();
    entries.swap(s - 1, s);
    Ok(Schedule { entries })
}

/// A synthesized schedule: explicit cliques, one per step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliqueSequence {
    n: usize,
    cliques: Vec<Clique>,
}

/// JSON form: 1-based node lists, one per step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleFile {
    pub cliques: Vec<Vec<usize>>,
}

impl CliqueSequence {
    pub fn new(n: usize, cliques: Vec<Clique>) -> Self {
        CliqueSequence { n, cliques }
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn cliques(&self) -> &[Clique] {
        &self.cliques
    }

    pub fn len(&self) -> usize {
        self.cliques.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cliques.is_empty()
    }

    pub fn to_file(&self) -> ScheduleFile {
        ScheduleFile { cliques: self.cliques.iter().map(Clique::to_one_based).collect() }
    }

    /// Averaging transition for every step.
    pub fn transitions(&self) -> Result<Vec<TransitionMatrix>, ProtocolError> {
        self.cliques.iter().map(|c| averaging_transition(c, self.n)).collect()
    }

    /// Coverage of the union-of-cliques graph, with distinct cliques in
    /// first-appearance order, plus the index schedule replaying this
    /// sequence over it.
    pub fn to_coverage(&self) -> Result<(CliqueCoverage, Schedule), CoverageError> {
        let mut distinct: Vec<Clique> = Vec::new();
        let mut entries = Vec::with_capacity(self.cliques.len());
        for c in &self.cliques {
            let idx = match distinct.iter().position(|d| d == c) {
                Some(i) => i,
                None => {
                    distinct.push(c.clone());
                    distinct.len() - 1
                }
            };
            entries.push(idx);
        }
        let graph = Graph::union_of_cliques(self.n, &distinct)
            .map_err(|source| CoverageError::Malformed { clique: 0, source })?;
        let cov = validate_cliques(&graph, distinct)?;
        let sched = Schedule::new(entries).map_err(|_| CoverageError::NoCliques)?;
        Ok((cov, sched))
    }
}

/// Prime factorization as `(p, exponent)` pairs, increasing `p`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Factorization(Vec<(u64, u32)>);

impl Factorization {
    pub fn factors(&self) -> &[(u64, u32)] {
        &self.0
    }

    pub fn primes(&self) -> Vec<u64> {
        self.0.iter().map(|&(p, _)| p).collect()
    }

    pub fn exponent_of(&self, p: u64) -> u32 {
        self.0.iter().find(|&&(q, _)| q == p).map_or(0, |&(_, e)| e)
    }

    pub fn value(&self) -> u64 {
        self.0.iter().map(|&(p, e)| p.pow(e)).product()
    }
}

/// Trial division up to `√n`.
pub fn factorize(n: u64) -> Result<Factorization, ScheduleError> {
    if n < 2 {
        return Err(ScheduleError::TooSmall(n));
    }
    let mut out = Vec::new();
    let mut rest = n;
    let mut p = 2u64;
    while p * p <= rest {
        if rest % p == 0 {
            let mut e = 0;
            while rest % p == 0 {
                rest /= p;
                e += 1;
            }
            out.push((p, e));
        }
        p += if p == 2 { 1 } else { 2 };
    }
    if rest > 1 {
        out.push((rest, 1));
    }
    Ok(Factorization(out))
}

/// Feasibility verdict with the reason for failure.
pub fn regular_feasibility(n: u64, m: u64) -> Result<(), Infeasibility> {
    if m < 2 {
        return Err(Infeasibility::CliqueTooSmall);
    }
    if n < m || n % m != 0 {
        return Err(Infeasibility::NotDivisible);
    }
    let fm = factorize(m).expect("m >= 2");
    let fnn = factorize(n).expect("n >= m >= 2");
    match fnn.primes().into_iter().find(|p| fm.exponent_of(*p) == 0) {
        Some(p) => Err(Infeasibility::ExtraPrime(p)),
        None => Ok(()),
    }
}

pub fn regular_feasible(n: u64, m: u64) -> bool {
    regular_feasibility(n, m).is_ok()
}

fn infeasible(n: u64, m: u64) -> Result<(), ScheduleError> {
    regular_feasibility(n, m).map_err(|reason| ScheduleError::Infeasible { n, m, reason })
}

/// `max_i ⌈s_i / r_i⌉` over the shared primes of `n = Π p_i^{s_i}` and
/// `m = Π p_i^{r_i}`.
pub fn delta(n: u64, m: u64) -> Result<u64, ScheduleError> {
    infeasible(n, m)?;
    let fm = factorize(m)?;
    let fnn = factorize(n)?;
    Ok(fm
        .factors()
        .iter()
        .map(|&(p, r)| u64::from(fnn.exponent_of(p)).div_ceil(u64::from(r)))
        .max()
        .unwrap_or(1))
}

/// Length of the fastest m-regular finite-time schedule: `δ(n,m)·n/m`.
pub fn min_steps(n: u64, m: u64) -> Result<u64, ScheduleError> {
    Ok(delta(n, m)? * n / m)
}

/// Recursive block/transversal construction of a fastest m-regular
/// finite-time schedule over the given ordered node list (0-based ids).
pub fn clique_select(nodes: &[usize], m: usize) -> Result<Vec<Clique>, ScheduleError> {
    let mut uniq: Vec<usize> = nodes.to_vec();
    uniq.sort_unstable();
    uniq.dedup();
    if uniq.len() != nodes.len() {
        return Err(ScheduleError::DuplicateNodes);
    }
    infeasible(nodes.len() as u64, m as u64)?;
    let mut out = Vec::new();
    clique_select_into(nodes, m, &mut out);
    Ok(out)
}

fn clique_select_into(nodes: &[usize], m: usize, out: &mut Vec<Clique>) {
    let n1 = nodes.len() / m;
    if n1 == 1 {
        out.push(Clique::from_zero_based(nodes.to_vec()).expect("distinct nodes"));
        return;
    }
    for block in nodes.chunks(m) {
        out.push(Clique::from_zero_based(block.to_vec()).expect("distinct nodes"));
    }
    // smallest b with m | n1·b
    let m1 = m / m.gcd(&n1);
    let n2 = m / m1;
    for j in 0..n2 {
        let transversal: Vec<usize> = (0..n1)
            .flat_map(|i| nodes[m * i + m1 * j..m * i + m1 * (j + 1)].iter().copied())
            .collect();
        clique_select_into(&transversal, m, out);
    }
}

/// `clique_select` on nodes `0..n`, wrapped as a sequence.
pub fn clique_select_sequence(n: usize, m: usize) -> Result<CliqueSequence, ScheduleError> {
    let nodes: Vec<usize> = (0..n).collect();
    Ok(CliqueSequence::new(n, clique_select(&nodes, m)?))
}

/// Two-phase lattice schedule for `n = r1·r2`: the `r2` consecutive blocks
/// of size `r1`, then the `r1` strided sets of size `r2`.
pub fn lattice_schedule(n: usize, r1: usize, r2: usize) -> Result<CliqueSequence, ScheduleError> {
    multi_factor_schedule(n, &[r1, r2])
}

/// Embeds node `v` in a lattice with radices `r_1..r_k` (coordinate 1
/// varies fastest). Phase `i` averages along coordinate `i`, blocks in
/// increasing order of their smallest node.
pub fn multi_factor_schedule(n: usize, factors: &[usize]) -> Result<CliqueSequence, ScheduleError> {
    if factors.is_empty() || factors.iter().any(|&r| r < 2) {
        return Err(ScheduleError::FactorTooSmall);
    }
    let product = factors.iter().try_fold(1usize, |acc, &r| acc.checked_mul(r));
    if product != Some(n) {
        return Err(ScheduleError::ProductMismatch { n, product: product.unwrap_or(usize::MAX) });
    }
    let mut cliques = Vec::new();
    let mut stride = 1;
    for &r in factors {
        for base in 0..n {
            if (base / stride) % r != 0 {
                continue;
            }
            let members: Vec<usize> = (0..r).map(|k| base + k * stride).collect();
            cliques.push(Clique::from_zero_based(members).expect("distinct lattice nodes"));
        }
        stride *= r;
    }
    Ok(CliqueSequence::new(n, cliques))
}

/// Expected length `Σ_i Π_{j≠i} r_j` of [`multi_factor_schedule`].
pub fn multi_factor_length(factors: &[usize]) -> usize {
    let total: usize = factors.iter().product();
    factors.iter().map(|r| total / r).sum()
}

/// What an exhaustive search tries to reach.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchTarget {
    /// Consensus from the single initial vector `e_1`.
    FromE1,
    /// Consensus from every initial vector: the product of the schedule's
    /// transitions equals `11ᵀ/n`.
    AllInitial,
}

/// Outcome of an exhaustive m-regular schedule search on the complete graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchReport {
    /// Shortest length reaching the target, if any within the limit.
    pub shortest: Option<usize>,
    /// A schedule of that length.
    pub witness: Option<Vec<Clique>>,
    /// New distinct states per depth (index 0 is the start).
    pub states_per_depth: Vec<usize>,
}

/// States as integer numerators over the common denominator `m^depth`,
/// row-major with one column (`FromE1`) or `n` columns (`AllInitial`).
struct Packed<'a> {
    cols: usize,
    cells: &'a [u16],
}

impl Packed<'_> {
    /// One averaging step, rescaled by `m`, then relabelled. Returns the
    /// relabelled cells and `perm` with new row `i` = old row `perm[i]`.
    fn step(&self, subset: &[usize], m: u16) -> (Box<[u16]>, Vec<u8>) {
        let cols = self.cols;
        let mut cells: Vec<u16> = self.cells.iter().map(|v| v * m).collect();
        for c in 0..cols {
            let sum: u16 = subset.iter().map(|&r| self.cells[r * cols + c]).sum();
            for &r in subset {
                cells[r * cols + c] = sum;
            }
        }
        relabel(cells, cols)
    }
}

fn is_consensus_cells(cells: &[u16], cols: usize) -> bool {
    let first = &cells[..cols];
    cells.chunks(cols).all(|r| r == first)
}

/// A relabelling of a state, used both as the deduplication key and as the
/// stored state. Rows and (for full matrices) columns may be permuted
/// independently: later steps only mix rows, and reaching consensus does
/// not depend on column order. Sorting alternates until stable; the result
/// need not be canonical.
fn relabel(cells: Vec<u16>, cols: usize) -> (Box<[u16]>, Vec<u8>) {
    let n = cells.len() / cols;
    let mut rows: Vec<(Vec<u16>, u8)> = cells.chunks(cols).enumerate().map(|(i, r)| (r.to_vec(), i as u8)).collect();
    rows.sort_unstable();
    if cols > 1 {
        for _ in 0..4 {
            let mut order: Vec<usize> = (0..cols).collect();
            order.sort_by(|&a, &b| rows.iter().map(|r| r.0[a]).cmp(rows.iter().map(|r| r.0[b])));
            let cols_sorted = order.iter().enumerate().all(|(i, &j)| i == j);
            for r in &mut rows {
                r.0 = order.iter().map(|&j| r.0[j]).collect();
            }
            let rows_sorted = rows.windows(2).all(|w| w[0].0 <= w[1].0);
            rows.sort_unstable();
            if cols_sorted && rows_sorted {
                break;
            }
        }
    }
    let perm = rows.iter().map(|r| r.1).collect();
    let mut flat = Vec::with_capacity(n * cols);
    for r in rows {
        flat.extend(r.0);
    }
    (flat.into_boxed_slice(), perm)
}

/// Exhaustively explores every sequence of m-subsets of `n` nodes up to
/// `max_len` steps, in exact integer arithmetic. On the complete graph any
/// relabelling of nodes maps schedules to schedules, so states are
/// deduplicated up to relabelling.
pub fn exhaustive_regular_search(
    n: usize,
    m: usize,
    max_len: usize,
    target: SearchTarget,
) -> Result<SearchReport, ScheduleError> {
    const STATE_LIMIT: usize = 3_000_000;
    const CHUNK: usize = 20_000;
    if m < 2 || m > n {
        return Err(ScheduleError::Infeasible {
            n: n as u64,
            m: m as u64,
            reason: if m < 2 { Infeasibility::CliqueTooSmall } else { Infeasibility::NotDivisible },
        });
    }
    let fits = (m as u64).checked_pow(max_len as u32).is_some_and(|s| s <= u64::from(u16::MAX));
    if !fits || n > usize::from(u8::MAX) {
        return Err(ScheduleError::SearchTooLarge(format!("{m}^{max_len} overflows the state encoding")));
    }
    let subsets = subsets_of_size(n, m);
    let cols = match target {
        SearchTarget::FromE1 => 1,
        SearchTarget::AllInitial => n,
    };
    let mut cells = vec![0u16; n * cols];
    for i in 0..cols {
        cells[i * cols + i] = 1;
    }
    let (start, _) = relabel(cells, cols);
    let mut seen: HashSet<Box<[u16]>> = HashSet::from([start.clone()]);
    let mut frontier: Vec<Box<[u16]>> = vec![start];
    // per depth and state: parent index in the previous layer, subset
    // index, and the relabelling applied after the step
    let mut layers: Vec<Vec<(u32, u32, Vec<u8>)>> = Vec::new();
    let mut states_per_depth = vec![1];
    let m16 = m as u16;
    for depth in 1..=max_len {
        let mut fresh: Vec<Box<[u16]>> = Vec::new();
        let mut links = Vec::new();
        for (chunk_no, chunk) in frontier.chunks(CHUNK).enumerate() {
            let expanded: Vec<(Box<[u16]>, Vec<u8>, u32, u32)> = chunk
                .par_iter()
                .enumerate()
                .flat_map_iter(|(i, state)| {
                    let parent = (chunk_no * CHUNK + i) as u32;
                    subsets.iter().enumerate().map(move |(k, s)| {
                        let (nx, perm) = Packed { cols, cells: state }.step(s, m16);
                        (nx, perm, parent, k as u32)
                    })
                })
                .collect();
            for (st, perm, parent, k) in expanded {
                if !seen.contains(&st) {
                    seen.insert(st.clone());
                    fresh.push(st);
                    links.push((parent, k, perm));
                }
            }
            if seen.len() > STATE_LIMIT {
                return Err(ScheduleError::SearchTooLarge(format!(
                    "more than {STATE_LIMIT} states by depth {depth}"
                )));
            }
        }
        states_per_depth.push(fresh.len());
        layers.push(links);
        if let Some(idx) = fresh.iter().position(|st| is_consensus_cells(st, cols)) {
            let witness = recover_path(&layers, idx, &subsets);
            return Ok(SearchReport { shortest: Some(depth), witness: Some(witness), states_per_depth });
        }
        frontier = fresh;
    }
    Ok(SearchReport { shortest: None, witness: None, states_per_depth })
}

/// Maps a chain of (subset, relabelling) steps back to original node labels.
fn recover_path(layers: &[Vec<(u32, u32, Vec<u8>)>], mut idx: usize, subsets: &[Vec<usize>]) -> Vec<Clique> {
    let mut chain = Vec::with_capacity(layers.len());
    for layer in layers.iter().rev() {
        let (parent, k, perm) = &layer[idx];
        chain.push((*k as usize, perm));
        idx = *parent as usize;
    }
    chain.reverse();
    let n = chain.first().map_or(0, |c| c.1.len());
    // phi[label in current representative] = original node
    let mut phi: Vec<usize> = (0..n).collect();
    let mut out = Vec::with_capacity(chain.len());
    for (k, perm) in chain {
        out.push(Clique::from_zero_based(subsets[k].iter().map(|&v| phi[v]).collect()).expect("distinct members"));
        phi = perm.iter().map(|&p| phi[p as usize]).collect();
    }
    out
}

fn subsets_of_size(n: usize, m: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, m: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == m {
            out.push(cur.clone());
            return;
        }
        for v in start..n {
            if n - v < m - cur.len() {
                break;
            }
            cur.push(v);
            rec(v + 1, n, m, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, m, &mut Vec::new(), &mut out);
    out
}
