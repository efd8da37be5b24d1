//! Per-clique state-transition operators.
//!
//! A transition acts on the stacked state `x = [x_1; ...; x_n]` with
//! `x_i ∈ R^b`. Nodes outside the active clique(s) keep their state, so
//! the operators are stored lazily and only materialized for spectral work.

use std::collections::BTreeMap;
use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use num_rational::BigRational;
use thiserror::Error;

use crate::graph::Clique;
use crate::scalar::{format_g17, Scalar};

/// Blocks `A_ij` keyed by 0-based `(i, j)` node pairs.
pub type BlockMap = BTreeMap<(usize, usize), DMatrix<f64>>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error("node {node} outside 1..={n}")]
    OutOfRange { node: usize, n: usize },
    #[error("missing block A_({i},{j})")]
    MissingBlock { i: usize, j: usize },
    #[error("block A_({i},{j}) is {rows}x{cols}, expected {b}x{b}")]
    BlockShape { i: usize, j: usize, rows: usize, cols: usize, b: usize },
    #[error("state has length {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("transition has real-valued coefficients; exact rational mode is not available")]
    IrrationalCoefficients,
    #[error("cliques {a} and {b} overlap")]
    OverlappingCliques { a: String, b: String },
    #[error("projection needs a nonzero vector")]
    ZeroVector,
    #[error("no cliques given")]
    NoCliques,
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    /// Product of averaging steps over pairwise-disjoint cliques.
    Averaging(Vec<Clique>),
    /// One clique with an explicit `k x k` grid of `b x b` blocks, row-major
    /// over the clique's sorted members.
    Blocks { clique: Clique, blocks: Vec<DMatrix<f64>> },
    Dense(DMatrix<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    n: usize,
    b: usize,
    kind: Kind,
}

fn check_clique(c: &Clique, n: usize) -> Result<(), ProtocolError> {
    match c.members().last() {
        Some(&v) if v >= n => Err(ProtocolError::OutOfRange { node: v + 1, n }),
        _ => Ok(()),
    }
}

/// Every member of `c` adopts the clique mean; scalar states.
pub fn averaging_transition(c: &Clique, n: usize) -> Result<TransitionMatrix, ProtocolError> {
    averaging_transition_dim(c, n, 1)
}

/// Clique averaging applied independently to each of `b` coordinates.
pub fn averaging_transition_dim(
    c: &Clique,
    n: usize,
    b: usize,
) -> Result<TransitionMatrix, ProtocolError> {
    check_clique(c, n)?;
    Ok(TransitionMatrix { n, b, kind: Kind::Averaging(vec![c.clone()]) })
}

/// Simultaneous averaging over pairwise-disjoint cliques.
pub fn multi_transition(cls: &[Clique], n: usize) -> Result<TransitionMatrix, ProtocolError> {
    if cls.is_empty() {
        return Err(ProtocolError::NoCliques);
    }
    for (k, a) in cls.iter().enumerate() {
        check_clique(a, n)?;
        if let Some(b) = cls[k + 1..].iter().find(|b| a.intersects(b)) {
            return Err(ProtocolError::OverlappingCliques { a: a.to_string(), b: b.to_string() });
        }
    }
    Ok(TransitionMatrix { n, b: 1, kind: Kind::Averaging(cls.to_vec()) })
}

/// General block transition from ordered blocks `A_ij`; every ordered pair
/// of members, diagonal included, must be present.
pub fn block_transition(
    c: &Clique,
    blocks: &BlockMap,
    n: usize,
    b: usize,
) -> Result<TransitionMatrix, ProtocolError> {
    check_clique(c, n)?;
    let mut grid = Vec::with_capacity(c.len() * c.len());
    for &i in c.members() {
        for &j in c.members() {
            let blk = blocks
                .get(&(i, j))
                .ok_or(ProtocolError::MissingBlock { i: i + 1, j: j + 1 })?;
            if blk.nrows() != b || blk.ncols() != b {
                return Err(ProtocolError::BlockShape {
                    i: i + 1,
                    j: j + 1,
                    rows: blk.nrows(),
                    cols: blk.ncols(),
                    b,
                });
            }
            grid.push(blk.clone());
        }
    }
    Ok(TransitionMatrix { n, b, kind: Kind::Blocks { clique: c.clone(), blocks: grid } })
}

/// Block transition where each unordered pair shares one block, placed at
/// both `(i, j)` and `(j, i)`. `pairs` is keyed with `i < j`.
pub fn symmetric_block_transition(
    c: &Clique,
    diagonal: &BTreeMap<usize, DMatrix<f64>>,
    pairs: &BlockMap,
    n: usize,
    b: usize,
) -> Result<TransitionMatrix, ProtocolError> {
    let mut full = BlockMap::new();
    for (&i, blk) in diagonal {
        full.insert((i, i), blk.clone());
    }
    for (&(i, j), blk) in pairs {
        full.insert((i, j), blk.clone());
        full.insert((j, i), blk.clone());
    }
    block_transition(c, &full, n, b)
}

/// Wraps an arbitrary dense `nb x nb` matrix.
pub fn dense_transition(m: DMatrix<f64>, n: usize, b: usize) -> Result<TransitionMatrix, ProtocolError> {
    if m.nrows() != n * b || m.ncols() != n * b {
        return Err(ProtocolError::DimensionMismatch { expected: n * b, got: m.nrows() });
    }
    Ok(TransitionMatrix { n, b, kind: Kind::Dense(m) })
}

/// Orthogonal projector onto the kernel of `hᵀ`: `I - h hᵀ / (hᵀ h)`.
pub fn projection_matrix(h: &DVector<f64>) -> Result<DMatrix<f64>, ProtocolError> {
    let norm2 = h.dot(h);
    if norm2 == 0.0 || !norm2.is_finite() {
        return Err(ProtocolError::ZeroVector);
    }
    let m = h.len();
    Ok(DMatrix::identity(m, m) - (h * h.transpose()) / norm2)
}

/// Blocks of the distributed linear-equation solver on clique `c`:
/// `A_ii = I - ((|C|-1)/|C|) P_i` and `A_ij = P_i / |C|`.
pub fn solver_blocks(
    c: &Clique,
    rows: &BTreeMap<usize, DVector<f64>>,
) -> Result<BlockMap, ProtocolError> {
    let size = c.len() as f64;
    let mut out = BlockMap::new();
    for &i in c.members() {
        let h = rows.get(&i).ok_or(ProtocolError::MissingBlock { i: i + 1, j: i + 1 })?;
        let p = projection_matrix(h)?;
        let m = h.len();
        for &j in c.members() {
            let blk = if i == j {
                DMatrix::identity(m, m) - &p * ((size - 1.0) / size)
            } else {
                &p / size
            };
            out.insert((i, j), blk);
        }
    }
    Ok(out)
}

impl TransitionMatrix {
    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn state_dim(&self) -> usize {
        self.b
    }

    pub fn dim(&self) -> usize {
        self.n * self.b
    }

    /// Whether every coefficient is rational by construction.
    pub fn is_rational(&self) -> bool {
        matches!(self.kind, Kind::Averaging(_))
    }

    /// Nodes touched by this transition, or `None` for dense transitions.
    pub fn support(&self) -> Option<Vec<usize>> {
        match &self.kind {
            Kind::Averaging(cls) => {
                let mut v: Vec<usize> = cls.iter().flat_map(|c| c.members().iter().copied()).collect();
                v.sort_unstable();
                Some(v)
            }
            Kind::Blocks { clique, .. } => Some(clique.members().to_vec()),
            Kind::Dense(_) => None,
        }
    }

    /// `M x` without materializing `M` for the lazy forms.
    pub fn apply<S: Scalar>(&self, x: &[S]) -> Result<Vec<S>, ProtocolError> {
        let mut out = x.to_vec();
        self.apply_in_place(&mut out)?;
        Ok(out)
    }

    pub fn apply_in_place<S: Scalar>(&self, x: &mut [S]) -> Result<(), ProtocolError> {
        let dim = self.dim();
        if x.len() != dim {
            return Err(ProtocolError::DimensionMismatch { expected: dim, got: x.len() });
        }
        let b = self.b;
        match &self.kind {
            Kind::Averaging(cls) => {
                for c in cls {
                    let size = S::ratio(c.len() as i64, 1);
                    for k in 0..b {
                        let sum = c
                            .members()
                            .iter()
                            .fold(S::zero(), |acc, &v| acc + x[v * b + k].clone());
                        let avg = sum / size.clone();
                        for &v in c.members() {
                            x[v * b + k] = avg.clone();
                        }
                    }
                }
            }
            Kind::Blocks { clique, blocks } => {
                let members = clique.members();
                let coeffs = blocks
                    .iter()
                    .map(|blk| {
                        blk.iter()
                            .map(|&v| S::from_coefficient(v))
                            .collect::<Option<Vec<S>>>()
                    })
                    .collect::<Option<Vec<_>>>()
                    .ok_or(ProtocolError::IrrationalCoefficients)?;
                let k = members.len();
                let mut fresh = Vec::with_capacity(k * b);
                for (a, _) in members.iter().enumerate() {
                    for r in 0..b {
                        let mut acc = S::zero();
                        for (c, &j) in members.iter().enumerate() {
                            // nalgebra storage is column-major
                            let blk = &coeffs[a * k + c];
                            for col in 0..b {
                                acc = acc + blk[col * b + r].clone() * x[j * b + col].clone();
                            }
                        }
                        fresh.push(acc);
                    }
                }
                for (a, &i) in members.iter().enumerate() {
                    for r in 0..b {
                        x[i * b + r] = fresh[a * b + r].clone();
                    }
                }
            }
            Kind::Dense(m) => {
                let coeffs: Vec<S> = m
                    .iter()
                    .map(|&v| S::from_coefficient(v))
                    .collect::<Option<_>>()
                    .ok_or(ProtocolError::IrrationalCoefficients)?;
                let fresh: Vec<S> = (0..dim)
                    .map(|r| {
                        (0..dim).fold(S::zero(), |acc, c| {
                            acc + coeffs[c * dim + r].clone() * x[c].clone()
                        })
                    })
                    .collect();
                x.clone_from_slice(&fresh);
            }
        }
        Ok(())
    }

    /// Dense `nb x nb` materialization.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let dim = self.dim();
        let b = self.b;
        match &self.kind {
            Kind::Dense(m) => m.clone(),
            Kind::Averaging(cls) => {
                let mut m = DMatrix::identity(dim, dim);
                for c in cls {
                    let w = 1.0 / c.len() as f64;
                    for &i in c.members() {
                        for k in 0..b {
                            m[(i * b + k, i * b + k)] = 0.0;
                        }
                    }
                    for &i in c.members() {
                        for &j in c.members() {
                            for k in 0..b {
                                m[(i * b + k, j * b + k)] = w;
                            }
                        }
                    }
                }
                m
            }
            Kind::Blocks { clique, blocks } => {
                let mut m = DMatrix::identity(dim, dim);
                let members = clique.members();
                let k = members.len();
                for (a, &i) in members.iter().enumerate() {
                    for (c, &j) in members.iter().enumerate() {
                        m.view_mut((i * b, j * b), (b, b)).copy_from(&blocks[a * k + c]);
                    }
                }
                m
            }
        }
    }

    /// Exact dense form for rational transitions.
    pub fn to_dense_exact(&self) -> Option<Vec<Vec<BigRational>>> {
        let Kind::Averaging(cls) = &self.kind else {
            return None;
        };
        let dim = self.dim();
        let b = self.b;
        let mut m: Vec<Vec<BigRational>> = (0..dim)
            .map(|r| (0..dim).map(|c| <BigRational as Scalar>::ratio((r == c) as i64, 1)).collect())
            .collect();
        for c in cls {
            let w = <BigRational as Scalar>::ratio(1, c.len() as i64);
            for &i in c.members() {
                for k in 0..b {
                    for col in 0..dim {
                        m[i * b + k][col] = <BigRational as Scalar>::ratio(0, 1);
                    }
                    for &j in c.members() {
                        m[i * b + k][j * b + k] = w.clone();
                    }
                }
            }
        }
        Some(m)
    }
}

/// Row-major CSV with 17 significant digits per entry.
pub fn write_dense_csv<W: Write>(m: &DMatrix<f64>, mut w: W) -> io::Result<()> {
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| format_g17(m[(r, c)])).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}
