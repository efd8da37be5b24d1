//! Seeded generators for coverages and schedules used in property checks
//! and experiments.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::graph::{validate_cliques, Clique, CliqueCoverage, Graph};
use crate::scheduler::Schedule;

/// Random valid coverage on at most `max_nodes` nodes, cliques of size
/// 2..=`max_clique`. Cliques are grown as a tree (each new clique shares
/// one or two nodes with earlier ones) and a few extra cliques over
/// existing nodes add cycles to the line graph.
pub fn random_coverage<R: Rng>(rng: &mut R, max_nodes: usize, max_clique: usize) -> CliqueCoverage {
    assert!(max_nodes >= 2 && max_clique >= 2);
    let target = rng.gen_range(2..=max_nodes);
    let first = rng.gen_range(2..=max_clique.min(target));
    let mut n = first;
    let mut cliques: Vec<Vec<usize>> = vec![(0..first).collect()];
    while n < target {
        let shared = rng.gen_range(1..=2.min(n));
        let mut members: Vec<usize> = (0..n).collect::<Vec<_>>().choose_multiple(rng, shared).copied().collect();
        let room = (max_clique - shared).min(target - n).max(1);
        let fresh = rng.gen_range(1..=room);
        members.extend(n..n + fresh);
        n += fresh;
        cliques.push(members);
    }
    let extra = rng.gen_range(0..=n / 3);
    for _ in 0..extra {
        let size = rng.gen_range(2..=max_clique.min(n));
        let members: Vec<usize> = (0..n).collect::<Vec<_>>().choose_multiple(rng, size).copied().collect();
        cliques.push(members);
    }
    finish(n, cliques)
}

/// Random coverage whose line graph is a tree with exactly `d` vertices.
/// Each new clique attaches at a node that so far lies in a single clique.
pub fn random_tree_coverage<R: Rng>(rng: &mut R, d: usize, max_clique: usize) -> CliqueCoverage {
    assert!(d >= 1 && max_clique >= 2);
    let first = rng.gen_range(2..=max_clique);
    let mut n = first;
    let mut owners: Vec<usize> = vec![1; n];
    let mut cliques: Vec<Vec<usize>> = vec![(0..first).collect()];
    while cliques.len() < d {
        let private: Vec<usize> = (0..n).filter(|&v| owners[v] == 1).collect();
        let hub = *private.choose(rng).expect("each clique keeps a private node");
        owners[hub] += 1;
        let fresh = rng.gen_range(1..max_clique);
        let mut members = vec![hub];
        members.extend(n..n + fresh);
        owners.extend(std::iter::repeat(1).take(fresh));
        n += fresh;
        cliques.push(members);
    }
    finish(n, cliques)
}

fn finish(n: usize, cliques: Vec<Vec<usize>>) -> CliqueCoverage {
    let cliques: Vec<Clique> = cliques
        .into_iter()
        .map(|c| Clique::from_zero_based(c).expect("distinct members"))
        .collect();
    let graph = Graph::union_of_cliques(n, &cliques).expect("members in range");
    validate_cliques(&graph, cliques).expect("construction yields a coverage")
}

/// Uniformly random one-pass schedule over `d` cliques.
pub fn random_one_pass<R: Rng>(rng: &mut R, d: usize) -> Schedule {
    let mut entries: Vec<usize> = (0..d).collect();
    entries.shuffle(rng);
    Schedule::new(entries).expect("d >= 1")
}

/// `len` uniformly random `m`-subsets of `0..n`, as cliques.
pub fn random_regular_sequence<R: Rng>(rng: &mut R, n: usize, m: usize, len: usize) -> Vec<Clique> {
    let nodes: Vec<usize> = (0..n).collect();
    (0..len)
        .map(|_| Clique::from_zero_based(nodes.choose_multiple(rng, m).copied().collect()).expect("distinct"))
        .collect()
}
