//! Undirected interaction graphs, cliques, clique coverages and the
//! generalized line graph of a coverage.
//!
//! Node indices are 1-based wherever they cross the public boundary
//! (constructors taking raw indices, `Display`, JSON) and 0-based inside
//! every stored structure.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("graph must have at least one node")]
    Empty,
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("node index {index} out of range 1..={n}")]
    OutOfRange { index: usize, n: usize },
    #[error("clique must have at least one member")]
    EmptyClique,
    #[error("node {0} listed twice in one clique")]
    RepeatedMember(usize),
}

/// Reason a list of node sets fails to be a clique coverage.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CoverageError {
    #[error("coverage is empty")]
    NoCliques,
    #[error("clique C_{clique} is malformed: {source}")]
    Malformed {
        clique: usize,
        #[source]
        source: GraphError,
    },
    #[error("C_{clique} is not a clique: edge ({a},{b}) is missing")]
    NotAClique { clique: usize, a: usize, b: usize },
    #[error("node {0} is not covered by any clique")]
    Uncovered(usize),
    #[error("union of clique subgraphs is disconnected: node {0} unreachable from node 1")]
    Disconnected(usize),
}

/// Simple undirected graph on nodes `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
    adj: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a graph from 1-based node pairs. Duplicate edges (in either
    /// orientation) are merged.
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        let mut set = BTreeSet::new();
        for &(a, b) in edges {
            let a = to_internal(a, n)?;
            let b = to_internal(b, n)?;
            if a == b {
                return Err(GraphError::SelfLoop(a + 1));
            }
            set.insert((a.min(b), a.max(b)));
        }
        Ok(Self::from_internal(n, set))
    }

    /// Complete graph on `n` nodes.
    pub fn complete(n: usize) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        let mut set = BTreeSet::new();
        for a in 0..n {
            for b in a + 1..n {
                set.insert((a, b));
            }
        }
        Ok(Self::from_internal(n, set))
    }

    /// Union of the complete graphs induced by each clique.
    pub fn union_of_cliques(n: usize, cliques: &[Clique]) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        let mut set = BTreeSet::new();
        for c in cliques {
            if let Some(&last) = c.members().last() {
                if last >= n {
                    return Err(GraphError::OutOfRange { index: last + 1, n });
                }
            }
            for (k, &a) in c.members().iter().enumerate() {
                for &b in &c.members()[k + 1..] {
                    set.insert((a, b));
                }
            }
        }
        Ok(Self::from_internal(n, set))
    }

    fn from_internal(n: usize, edges: BTreeSet<(usize, usize)>) -> Self {
        let mut adj = vec![Vec::new(); n];
        for &(a, b) in &edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        Graph { n, edges, adj }
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges as 0-based `(a, b)` with `a < b`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    /// 0-based adjacency test.
    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.contains(&(a.min(b), a.max(b)))
    }

    /// Whether the 1-based node set `members` induces a complete subgraph.
    pub fn is_clique(&self, members: &[usize]) -> Result<bool, GraphError> {
        let internal = members
            .iter()
            .map(|&v| to_internal(v, self.n))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(self.missing_edge(&internal).is_none())
    }

    /// First absent pair among 0-based `members`, if any.
    fn missing_edge(&self, members: &[usize]) -> Option<(usize, usize)> {
        for (k, &a) in members.iter().enumerate() {
            for &b in &members[k + 1..] {
                if a != b && !self.has_edge(a, b) {
                    return Some((a, b));
                }
            }
        }
        None
    }

    pub fn is_connected(&self) -> bool {
        bfs_reach(self.n, |v| self.adj[v].iter().copied()).iter().all(|&r| r)
    }
}

fn to_internal(v: usize, n: usize) -> Result<usize, GraphError> {
    if v == 0 || v > n {
        Err(GraphError::OutOfRange { index: v, n })
    } else {
        Ok(v - 1)
    }
}

fn bfs_reach<F, I>(n: usize, neighbors: F) -> Vec<bool>
where
    F: Fn(usize) -> I,
    I: Iterator<Item = usize>,
{
    let mut seen = vec![false; n];
    if n == 0 {
        return seen;
    }
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    while let Some(v) = queue.pop_front() {
        for w in neighbors(v) {
            if !seen[w] {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    seen
}

/// Sorted, duplicate-free set of 0-based node indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Clique(Vec<usize>);

impl Clique {
    /// From 1-based node indices; order is irrelevant, repeats are rejected.
    pub fn from_one_based(members: &[usize], n: usize) -> Result<Self, GraphError> {
        let internal = members
            .iter()
            .map(|&v| to_internal(v, n))
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_zero_based(internal)
    }

    pub fn from_zero_based(mut members: Vec<usize>) -> Result<Self, GraphError> {
        if members.is_empty() {
            return Err(GraphError::EmptyClique);
        }
        members.sort_unstable();
        if let Some(w) = members.windows(2).find(|w| w[0] == w[1]) {
            return Err(GraphError::RepeatedMember(w[0] + 1));
        }
        Ok(Clique(members))
    }

    pub fn members(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, v: usize) -> bool {
        self.0.binary_search(&v).is_ok()
    }

    pub fn intersects(&self, other: &Clique) -> bool {
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() && j < other.0.len() {
            match self.0[i].cmp(&other.0[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => return true,
            }
        }
        false
    }

    pub fn to_one_based(&self) -> Vec<usize> {
        self.0.iter().map(|v| v + 1).collect()
    }
}

impl fmt::Display for Clique {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, v) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", v + 1)?;
        }
        write!(f, "}}")
    }
}

/// A validated clique coverage. Clique order is the caller's order and is
/// what schedule indices refer to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliqueCoverage {
    graph: Graph,
    cliques: Vec<Clique>,
}

impl CliqueCoverage {
    pub fn graph(&self) -> &Graph {
        &self.graph
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

    pub fn node_count(&self) -> usize {
        self.graph.node_count()
    }
}

/// Checks that every set is a clique of `g`, that the sets cover every
/// node, and that the union of their induced subgraphs is connected, in
/// that order. Sets are given as 1-based node lists.
pub fn validate_coverage(
    g: &Graph,
    cliques: &[Vec<usize>],
) -> Result<CliqueCoverage, CoverageError> {
    if cliques.is_empty() {
        return Err(CoverageError::NoCliques);
    }
    let n = g.node_count();
    let mut parsed = Vec::with_capacity(cliques.len());
    for (k, raw) in cliques.iter().enumerate() {
        let c = Clique::from_one_based(raw, n)
            .map_err(|source| CoverageError::Malformed { clique: k + 1, source })?;
        if let Some((a, b)) = g.missing_edge(c.members()) {
            return Err(CoverageError::NotAClique { clique: k + 1, a: a + 1, b: b + 1 });
        }
        parsed.push(c);
    }
    validate_parsed(g.clone(), parsed)
}

/// Same checks for already-built cliques.
pub fn validate_cliques(g: &Graph, cliques: Vec<Clique>) -> Result<CliqueCoverage, CoverageError> {
    let raw: Vec<Vec<usize>> = cliques.iter().map(Clique::to_one_based).collect();
    validate_coverage(g, &raw)
}

fn validate_parsed(graph: Graph, cliques: Vec<Clique>) -> Result<CliqueCoverage, CoverageError> {
    let n = graph.node_count();
    let mut covered = vec![false; n];
    for c in &cliques {
        for &v in c.members() {
            covered[v] = true;
        }
    }
    if let Some(v) = covered.iter().position(|&c| !c) {
        return Err(CoverageError::Uncovered(v + 1));
    }
    let union = Graph::union_of_cliques(n, &cliques)
        .expect("members already range-checked");
    let reach = bfs_reach(n, |v| union.adj[v].iter().copied());
    if let Some(v) = reach.iter().position(|&r| !r) {
        return Err(CoverageError::Disconnected(v + 1));
    }
    Ok(CliqueCoverage { graph, cliques })
}

/// Generalized line graph: one vertex per coverage clique, an edge between
/// every pair of distinct cliques that share a node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineGraph {
    adj: Vec<Vec<usize>>,
}

pub fn line_graph(cov: &CliqueCoverage) -> LineGraph {
    LineGraph::from_cliques(cov.cliques())
}

impl LineGraph {
    pub fn from_cliques(cliques: &[Clique]) -> Self {
        let d = cliques.len();
        let mut adj = vec![Vec::new(); d];
        for i in 0..d {
            for j in i + 1..d {
                if cliques[i].intersects(&cliques[j]) {
                    adj[i].push(j);
                    adj[j].push(i);
                }
            }
        }
        LineGraph { adj }
    }

    /// Builds a line graph directly from 0-based vertex pairs.
    pub fn from_edges(d: usize, edges: &[(usize, usize)]) -> Self {
        let mut sets = vec![BTreeSet::new(); d];
        for &(a, b) in edges {
            assert!(a < d && b < d && a != b, "bad line-graph edge ({a},{b})");
            sets[a].insert(b);
            sets[b].insert(a);
        }
        LineGraph { adj: sets.into_iter().map(|s| s.into_iter().collect()).collect() }
    }

    pub fn vertex_count(&self) -> usize {
        self.adj.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adj[i]
    }

    pub fn adjacent(&self, i: usize, j: usize) -> bool {
        self.adj[i].binary_search(&j).is_ok()
    }

    /// 0-based edges with `a < b`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (a, list) in self.adj.iter().enumerate() {
            out.extend(list.iter().filter(|&&b| b > a).map(|&b| (a, b)));
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adj[i].len()
    }

    pub fn max_degree(&self) -> usize {
        self.adj.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn is_connected(&self) -> bool {
        bfs_reach(self.adj.len(), |v| self.adj[v].iter().copied()).iter().all(|&r| r)
    }

    pub fn is_complete(&self) -> bool {
        let d = self.adj.len();
        self.adj.iter().all(|l| l.len() + 1 == d)
    }

    pub fn is_odd_cycle(&self) -> bool {
        let d = self.adj.len();
        d >= 3 && d % 2 == 1 && self.adj.iter().all(|l| l.len() == 2) && self.is_connected()
    }

    /// Whether the graph has no cycle at all.
    pub fn is_forest(&self) -> bool {
        let bridges = self.bridge_flags();
        self.edges().iter().all(|e| bridges.contains(e))
    }

    /// Whether vertex `i` lies on a simple cycle of length at least three,
    /// i.e. is incident to an edge that is not a bridge.
    pub fn in_cycle(&self, i: usize) -> bool {
        let bridges = self.bridge_flags();
        self.adj[i].iter().any(|&j| !bridges.contains(&(i.min(j), i.max(j))))
    }

    /// All vertices lying on some cycle.
    pub fn cycle_vertices(&self) -> Vec<bool> {
        let bridges = self.bridge_flags();
        (0..self.adj.len())
            .map(|i| self.adj[i].iter().any(|&j| !bridges.contains(&(i.min(j), i.max(j)))))
            .collect()
    }

    /// Bridges found by one lowlink DFS per component.
    fn bridge_flags(&self) -> BTreeSet<(usize, usize)> {
        let d = self.adj.len();
        let mut disc = vec![usize::MAX; d];
        let mut low = vec![0; d];
        let mut timer = 0;
        let mut bridges = BTreeSet::new();
        for root in 0..d {
            if disc[root] != usize::MAX {
                continue;
            }
            // (vertex, parent, next neighbor slot)
            let mut stack: Vec<(usize, usize, usize)> = vec![(root, usize::MAX, 0)];
            disc[root] = timer;
            low[root] = timer;
            timer += 1;
            while let Some(&mut (v, parent, ref mut slot)) = stack.last_mut() {
                if *slot < self.adj[v].len() {
                    let w = self.adj[v][*slot];
                    *slot += 1;
                    if w == parent {
                        continue;
                    }
                    if disc[w] == usize::MAX {
                        disc[w] = timer;
                        low[w] = timer;
                        timer += 1;
                        stack.push((w, v, 0));
                    } else {
                        low[v] = low[v].min(disc[w]);
                    }
                } else {
                    stack.pop();
                    if parent != usize::MAX {
                        low[parent] = low[parent].min(low[v]);
                        if low[v] > disc[parent] {
                            bridges.insert((parent.min(v), parent.max(v)));
                        }
                    }
                }
            }
        }
        bridges
    }
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    /// Brute force: does a simple cycle of length >= 3 pass through `i`?
    fn in_cycle_brute(lg: &LineGraph, i: usize) -> bool {
        fn dfs(lg: &LineGraph, start: usize, v: usize, depth: usize, used: &mut Vec<bool>) -> bool {
            for &w in lg.neighbors(v) {
                if w == start && depth >= 2 {
                    return true;
                }
                if !used[w] {
                    used[w] = true;
                    if dfs(lg, start, w, depth + 1, used) {
                        return true;
                    }
                    used[w] = false;
                }
            }
            false
        }
        let mut used = vec![false; lg.vertex_count()];
        used[i] = true;
        dfs(lg, i, i, 0, &mut used)
    }

    #[test]
    fn triangle_and_self_loop() {
        let g = Graph::new(3, &[(1, 2), (2, 3), (1, 3), (2, 1)]).unwrap();
        assert_eq!(g.edge_count(), 3);
        assert!(g.is_clique(&[1, 2, 3]).unwrap());
        assert_eq!(Graph::new(2, &[(1, 1)]), Err(GraphError::SelfLoop(1)));
        assert_eq!(
            Graph::new(2, &[(1, 3)]),
            Err(GraphError::OutOfRange { index: 3, n: 2 })
        );
        assert_eq!(Graph::new(0, &[]), Err(GraphError::Empty));
    }

    #[test]
    fn thirteen_node_cliques() {
        let g = thirteen_graph();
        assert_eq!(g.node_count(), 13);
        assert!(g.is_clique(&[4, 5, 6, 7]).unwrap());
        assert!(g.is_clique(&[5]).unwrap());
        assert!(!g.is_clique(&[1, 2, 4]).unwrap());
        assert!(g.is_clique(&[14]).is_err());
    }

    #[test]
    fn thirteen_node_coverage_and_wider_third_clique() {
        let cov = thirteen_coverage();
        assert_eq!(cov.len(), 7);
        let mut wider = thirteen_cliques();
        wider[2] = vec![4, 5, 6, 7];
        let alt = validate_coverage(&thirteen_graph(), &wider).unwrap();
        assert_eq!(line_graph(&alt), line_graph(&cov));
    }

    #[test]
    fn missing_last_clique_leaves_node_10_uncovered() {
        let mut cl = thirteen_cliques();
        cl.pop();
        assert_eq!(
            validate_coverage(&thirteen_graph(), &cl),
            Err(CoverageError::Uncovered(10))
        );
    }

    #[test]
    fn non_clique_and_disconnected_diagnostics() {
        let g = thirteen_graph();
        let mut cl = thirteen_cliques();
        cl[1] = vec![1, 2, 4];
        assert_eq!(
            validate_coverage(&g, &cl),
            Err(CoverageError::NotAClique { clique: 2, a: 1, b: 4 })
        );
        let g = Graph::new(4, &[(1, 2), (2, 3), (3, 4)]).unwrap();
        assert_eq!(
            validate_coverage(&g, &[vec![1, 2], vec![3, 4]]),
            Err(CoverageError::Disconnected(3))
        );
        assert!(matches!(
            validate_coverage(&g, &[vec![1, 1]]),
            Err(CoverageError::Malformed { clique: 1, .. })
        ));
    }

    #[test]
    fn all_edges_as_pairs_is_a_coverage() {
        let g = thirteen_graph();
        let pairs: Vec<Vec<usize>> = g.edges().map(|(a, b)| vec![a + 1, b + 1]).collect();
        assert!(validate_coverage(&g, &pairs).is_ok());
    }

    #[test]
    fn thirteen_node_line_graph() {
        let lg = line_graph(&thirteen_coverage());
        let expect = vec![(0, 1), (0, 4), (0, 5), (1, 2), (1, 3), (1, 5), (2, 3), (4, 6)];
        assert_eq!(lg.edges(), expect);
        assert!(lg.is_connected());
        assert!(!lg.in_cycle(4));
        assert!(!lg.in_cycle(6));
        assert!(lg.in_cycle(1));
        assert!(lg.in_cycle(0));
        for i in 0..7 {
            assert_eq!(lg.in_cycle(i), in_cycle_brute(&lg, i), "C_{}", i + 1);
        }
    }

    #[test]
    fn two_cliques_one_shared_node() {
        let g = Graph::new(3, &[(1, 2), (2, 3)]).unwrap();
        let cov = validate_coverage(&g, &[vec![1, 2], vec![2, 3]]).unwrap();
        assert_eq!(line_graph(&cov).edges(), vec![(0, 1)]);
    }

    #[test]
    fn path_line_graph_has_no_cycles() {
        let lg = LineGraph::from_edges(5, &[(0, 1), (1, 2), (2, 3), (3, 4)]);
        assert!((0..5).all(|i| !lg.in_cycle(i)));
        assert!(lg.is_forest());
    }

    #[test]
    fn odd_cycle_and_complete_detection() {
        let c5 = LineGraph::from_edges(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)]);
        assert!(c5.is_odd_cycle());
        assert!(!c5.is_complete());
        let k3 = LineGraph::from_edges(3, &[(0, 1), (1, 2), (0, 2)]);
        assert!(k3.is_complete() && k3.is_odd_cycle());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_line_graph() -> impl Strategy<Value = LineGraph> {
            (1usize..=10).prop_flat_map(|d| {
                proptest::collection::vec((0..d, 0..d), 0..20).prop_map(move |pairs| {
                    let e: Vec<_> = pairs.into_iter().filter(|(a, b)| a != b).collect();
                    LineGraph::from_edges(d, &e)
                })
            })
        }

        fn arb_graph_and_sets() -> impl Strategy<Value = (Graph, Vec<Vec<usize>>)> {
            (2usize..=8).prop_flat_map(|n| {
                (
                    proptest::collection::vec((1..=n, 1..=n), 0..16),
                    proptest::collection::vec(proptest::collection::btree_set(1..=n, 1..4), 1..6),
                )
                    .prop_map(move |(e, sets)| {
                        let e: Vec<_> = e.into_iter().filter(|(a, b)| a != b).collect();
                        let g = Graph::new(n, &e).unwrap();
                        (g, sets.into_iter().map(|s| s.into_iter().collect()).collect())
                    })
            })
        }

        proptest! {
            #[test]
            fn in_cycle_matches_enumeration(lg in arb_line_graph()) {
                for i in 0..lg.vertex_count() {
                    prop_assert_eq!(lg.in_cycle(i), in_cycle_brute(&lg, i));
                }
            }

            #[test]
            fn validation_matches_independent_recheck((g, sets) in arb_graph_and_sets()) {
                let n = g.node_count();
                let cliques_ok = sets.iter().all(|s| {
                    s.iter().all(|&a| s.iter().all(|&b| a == b || g.has_edge(a - 1, b - 1)))
                });
                let covered: BTreeSet<usize> = sets.iter().flatten().copied().collect();
                let mut comp: Vec<usize> = (0..n).collect();
                fn find(c: &mut Vec<usize>, x: usize) -> usize {
                    if c[x] != x { let r = find(c, c[x]); c[x] = r; }
                    c[x]
                }
                for s in &sets {
                    for w in s.windows(2) {
                        let (a, b) = (find(&mut comp, w[0] - 1), find(&mut comp, w[1] - 1));
                        comp[a] = b;
                    }
                }
                let root = find(&mut comp, 0);
                let connected = (0..n).all(|v| find(&mut comp, v) == root);
                let expect = cliques_ok && covered.len() == n && connected;
                let got = validate_coverage(&g, &sets);
                prop_assert_eq!(got.is_ok(), expect);
                if let Ok(cov) = got {
                    prop_assert!(line_graph(&cov).is_connected());
                }
            }

            #[test]
            fn pair_coverage_gives_conventional_line_graph((g, _) in arb_graph_and_sets()) {
                let pairs: Vec<(usize, usize)> = g.edges().collect();
                prop_assume!(!pairs.is_empty());
                let cliques: Vec<Clique> = pairs
                    .iter()
                    .map(|&(a, b)| Clique::from_zero_based(vec![a, b]).unwrap())
                    .collect();
                let lg = LineGraph::from_cliques(&cliques);
                for i in 0..pairs.len() {
                    for j in 0..pairs.len() {
                        let (a, b) = pairs[i];
                        let (c, d) = pairs[j];
                        let shared = i != j && (a == c || a == d || b == c || b == d);
                        prop_assert_eq!(lg.adjacent(i, j), shared);
                    }
                }
            }
        }
    }
}
