//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clique_gossip::cli::load_coverage;
use clique_gossip::graph::{line_graph, CliqueCoverage};
use clique_gossip::protocol::{averaging_transition, block_transition, solver_blocks, TransitionMatrix};
use clique_gossip::random::{random_coverage, random_one_pass, random_regular_sequence, random_tree_coverage};
use clique_gossip::scheduler::{
    apply_swap, clique_select_sequence, exhaustive_regular_search, lattice_schedule, min_steps,
    multi_factor_schedule, CliqueSequence, Schedule, SearchTarget,
};
use clique_gossip::sim::{
    chromatic_number, consensus_time, log_deviation_norms, error_trajectory, greedy_classes, independence_number,
    log_slope, rational_audit, run, run_sequence, MultiCliqueCoverage,
};
use clique_gossip::spectrum::{
    check_convergence, eigenvalues, period_matrix, spectra_equal, SpectrumReport,
};
use nalgebra::{DMatrix, DVector};
use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SPECTRUM_TOL: f64 = 1e-3;
const INVARIANCE_TOL: f64 = 1e-9;
const RATE_REL_TOL: f64 = 0.05;
const LIMIT_TOL: f64 = 1e-10;
const SOLVER_TOL: f64 = 1e-8;

struct Gate {
    failed: Vec<String>,
}

impl Gate {
    fn check(&mut self, id: &str, what: &str, pass: bool, detail: impl AsRef<str>) {
        let tag = if pass { "PASS" } else { "FAIL" };
        println!("[{tag}] criterion {id}: {what} ({})", detail.as_ref());
        if !pass {
            self.failed.push(format!("{id}: {what}"));
        }
    }
}

fn fixture(name: &str) -> CliqueCoverage {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name);
    load_coverage(&path).unwrap_or_else(|e| panic!("{name}: {e:?}"))
}

fn averaging(cov: &CliqueCoverage) -> Vec<TransitionMatrix> {
    cov.cliques().iter().map(|c| averaging_transition(c, cov.node_count()).unwrap()).collect()
}

fn real(values: &[f64]) -> Vec<Complex64> {
    values.iter().map(|&v| Complex64::new(v, 0.0)).collect()
}

fn e1(n: usize) -> Vec<BigRational> {
    let mut x = vec![BigRational::zero(); n];
    x[0] = BigRational::one();
    x
}

fn spectrum_of(sched: &Schedule, t: &[TransitionMatrix]) -> SpectrumReport {
    SpectrumReport::of(&period_matrix(sched, t).unwrap().matrix).unwrap()
}

/// Product `M_1 M_4 M_5 M_7 M_2 M_3 M_6` written in time order.
fn seven_clique_order() -> Schedule {
    Schedule::from_one_based(&[6, 3, 2, 7, 5, 4, 1]).unwrap()
}

fn criterion_1(gate: &mut Gate) {
    let start = Instant::now();
    let cov = fixture("thirteen_nodes.json");
    let rep = spectrum_of(&seven_clique_order(), &averaging(&cov));
    let mut expected = vec![1.0, 0.8504, 0.6920, 0.3683, 0.1871, 0.1522];
    expected.resize(13, 0.0);
    let matches = spectra_equal(&rep.eigenvalues, &real(&expected), SPECTRUM_TOL);
    let elapsed = start.elapsed();
    let moduli: Vec<String> = rep.eigenvalues.iter().take(6).map(|z| format!("{:.4}", z.norm())).collect();
    gate.check(
        "1",
        "seven-clique period spectrum",
        matches && elapsed < Duration::from_secs(1),
        format!("leading moduli [{}], {elapsed:.2?}", moduli.join(", ")),
    );
}

fn permutations(d: usize) -> Vec<Vec<usize>> {
    fn rec(cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if cur.len() == used.len() {
            out.push(cur.clone());
            return;
        }
        for v in 0..used.len() {
            if !used[v] {
                used[v] = true;
                cur.push(v);
                rec(cur, used, out);
                cur.pop();
                used[v] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; d], &mut out);
    out
}

fn criterion_2(gate: &mut Gate) {
    let start = Instant::now();
    let cov = fixture("thirteen_nodes.json");
    let t = averaging(&cov);
    // swaps act on the written product order; the period is built from its reverse
    let base = Schedule::from_one_based(&[1, 4, 5, 7, 2, 3, 6]).unwrap();
    let reversed = |s: &Schedule| Schedule::new(s.entries().iter().rev().copied().collect()).unwrap();
    let spectra: Vec<SpectrumReport> = [base.clone(), apply_swap(&base, 6).unwrap(), apply_swap(&base, 3).unwrap()]
        .iter()
        .map(|s| spectrum_of(&reversed(s), &t))
        .collect();
    let mut fixed_ok = true;
    for a in 0..3 {
        for b in a + 1..3 {
            fixed_ok &= spectra_equal(&spectra[a].eigenvalues, &spectra[b].eigenvalues, INVARIANCE_TOL);
        }
    }
    gate.check("2", "two admissible swaps keep the spectrum", fixed_ok, format!("tol {INVARIANCE_TOL:e}"));

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let mut failures = 0;
    for k in 0..200 {
        let d = 1 + k % 6;
        let cov = random_tree_coverage(&mut rng, d, 4);
        let t = averaging(&cov);
        let reps: Vec<Vec<Complex64>> = permutations(d)
            .into_iter()
            .map(|p| spectrum_of(&Schedule::new(p).unwrap(), &t).eigenvalues)
            .collect();
        for a in 0..reps.len() {
            for b in a + 1..reps.len() {
                if !spectra_equal(&reps[a], &reps[b], INVARIANCE_TOL) {
                    failures += 1;
                    worst = worst.max(max_matching_gap(&reps[a], &reps[b]));
                }
            }
        }
    }
    let elapsed = start.elapsed();
    gate.check(
        "2",
        "all orders on 200 tree-shaped coverages share one spectrum",
        failures == 0 && elapsed < Duration::from_secs(30),
        format!("{failures} unequal pairs, worst gap {worst:.1e}, {elapsed:.2?}"),
    );
}

/// Least-squares slope of `y` on `t`, points with non-finite `y` dropped.
fn linear_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<&(f64, f64)> = points.iter().filter(|p| p.1.is_finite()).collect();
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

/// Largest distance in a greedy nearest matching, for diagnostics.
fn max_matching_gap(a: &[Complex64], b: &[Complex64]) -> f64 {
    let mut used = vec![false; b.len()];
    let mut worst = 0.0f64;
    for z in a {
        let (j, d) = b
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .map(|(j, w)| (j, (z - w).norm()))
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .unwrap();
        used[j] = true;
        worst = worst.max(d);
    }
    worst
}

fn criterion_3(gate: &mut Gate) {
    let cov = fixture("thirteen_nodes.json");
    let t = averaging(&cov);
    // M_5 M_7 M_1 M_6 M_2 M_3 M_4 in time order
    let clique_sched = Schedule::from_one_based(&[4, 3, 2, 6, 1, 7, 5]).unwrap();
    let clique_rep = spectrum_of(&clique_sched, &t);
    let l2c = clique_rep.lambda2.unwrap_or(f64::NAN);
    gate.check("3", "clique period second modulus", (l2c - 0.8504).abs() <= SPECTRUM_TOL, format!("{l2c:.4} vs 0.8504"));

    let edges = fixture("thirteen_nodes_edges.json");
    let edge_rep = spectrum_of(&Schedule::one_pass(edges.len()).unwrap(), &averaging(&edges));
    let l2g = edge_rep.lambda2.unwrap_or(f64::NAN);
    gate.check("3", "twenty-edge gossip period second modulus", (l2g - 0.8061).abs() <= SPECTRUM_TOL, format!("{l2g:.4} vs 0.8061"));

    let classes = MultiCliqueCoverage { classes: vec![vec![0, 3, 6], vec![2, 4, 5], vec![1]] };
    classes.validate(&line_graph(&cov)).unwrap();
    let multi_t = classes.transitions(&cov).unwrap();
    let multi_rep = spectrum_of(&Schedule::one_pass(3).unwrap(), &multi_t);
    let l2m = multi_rep.lambda2.unwrap_or(f64::NAN);
    let (rate_m, rate_c, rate_g) = (l2m.powf(1.0 / 3.0), l2c.powf(1.0 / 7.0), l2g.powf(1.0 / 20.0));
    let stated = 0.8504f64.powf(1.0 / 3.0) < 0.8504f64.powf(1.0 / 7.0) && 0.8504f64.powf(1.0 / 7.0) < 0.8061f64.powf(1.0 / 20.0);
    gate.check(
        "3",
        "per-step rates ordered multi < clique < edge",
        stated && rate_m < rate_c && rate_c < rate_g && (l2m - 0.8504).abs() <= SPECTRUM_TOL,
        format!("computed {rate_m:.4} < {rate_c:.4} < {rate_g:.4}"),
    );

    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let x0: Vec<f64> = (0..13).map(|_| rng.gen::<f64>()).collect();
    let traj = run(&clique_sched, &t, x0, 700).unwrap();
    let e = error_trajectory(&traj).unwrap();
    let pts: Vec<(f64, f64)> = (35..=700).map(|k| (k as f64, e[k])).collect();
    let slope = log_slope(&pts).unwrap();
    let want = 2.0 * 0.8504f64.powf(1.0 / 7.0).ln();
    let rel = (slope / want - 1.0).abs();
    gate.check("3", "squared error decay slope on the clique period", rel <= RATE_REL_TOL, format!("{slope:.5} vs {want:.5}, rel {rel:.3}"));
}

fn criterion_4(gate: &mut Gate) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    let mut tested = 0;
    let mut bad = 0;
    while tested < 50 {
        let cov = random_coverage(&mut rng, 12, 4);
        let t = averaging(&cov);
        let sched = random_one_pass(&mut rng, cov.len());
        let f = period_matrix(&sched, &t).unwrap();
        if !check_convergence(&f, &t, 1e-9).unwrap().convergent() {
            continue;
        }
        let rep = SpectrumReport::of(&f.matrix).unwrap();
        let Some(l2) = rep.lambda2.filter(|&l| l > 1e-6) else { continue };
        tested += 1;
        let d = sched.period();
        let nu = l2.powf(1.0 / d as f64);
        let x0: Vec<f64> = (0..cov.node_count()).map(|_| rng.gen::<f64>()).collect();
        let logs = log_deviation_norms(&sched, &t, &x0, 500).unwrap();
        let pts: Vec<(f64, f64)> = (50..=500).map(|k| ((k * d) as f64, logs[k])).collect();
        let rel = match linear_slope(&pts) {
            Some(s) => (s / nu.ln() - 1.0).abs(),
            None => f64::INFINITY,
        };
        worst = worst.max(rel);
        if rel > RATE_REL_TOL {
            bad += 1;
            let lead: Vec<String> = rep.eigenvalues.iter().take(5).map(|z| format!("{:.4}", z)).collect();
            println!("    miss: d={d}, n={}, rel {rel:.3}, leading [{}]", cov.node_count(), lead.join(", "));
        }
    }
    gate.check("4", "fitted decay matches |λ2|^(1/d) on 50 random schedules", bad == 0, format!("{bad} misses, worst rel {worst:.3}"));
}

fn exact_run(name: &str, seq: &CliqueSequence, expected_t: usize, gate: &mut Gate) {
    let start = Instant::now();
    let n = seq.node_count();
    let traj = run_sequence(&seq.transitions().unwrap(), e1(n)).unwrap();
    let target = BigRational::new(BigInt::one(), BigInt::from(n));
    let ct = consensus_time(&traj);
    let exact = traj.last().iter().all(|v| *v == target);
    let elapsed = start.elapsed();
    gate.check(
        "5",
        name,
        ct == Some(expected_t) && exact && elapsed < Duration::from_secs(1),
        format!("consensus at {ct:?}, value 1/{n} exact: {exact}, {elapsed:.2?}"),
    );
}

fn criterion_5(gate: &mut Gate) {
    exact_run("lattice n=12 as 6x2 reaches 1/12 at t=8", &lattice_schedule(12, 6, 2).unwrap(), 8, gate);
    exact_run("selection n=18 m=6 reaches 1/18 at t=6", &clique_select_sequence(18, 6).unwrap(), 6, gate);
    exact_run("selection n=4 m=2 reaches 1/4 at t=4", &clique_select_sequence(4, 2).unwrap(), 4, gate);
    exact_run("three-factor 2x2x2 reaches 1/8 at t=12", &multi_factor_schedule(8, &[2, 2, 2]).unwrap(), 12, gate);
}

fn criterion_6(gate: &mut Gate) {
    let start = Instant::now();
    let four = exhaustive_regular_search(4, 2, 3, SearchTarget::FromE1).unwrap();
    let witness = four
        .witness
        .as_ref()
        .map(|w| w.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" "))
        .unwrap_or_else(|| "none".into());
    gate.check(
        "6",
        "no pair schedule of length 3 on 4 nodes reaches consensus from e_1",
        four.shortest.is_none(),
        format!("shortest {:?}, witness {witness}", four.shortest),
    );
    let nine = exhaustive_regular_search(9, 3, 2, SearchTarget::FromE1).unwrap();
    gate.check(
        "6",
        "no triple schedule of length 2 on 9 nodes reaches consensus from e_1",
        nine.shortest.is_none(),
        format!("states per depth {:?}", nine.states_per_depth),
    );
    let lens = [(4usize, 2usize), (9, 3)].map(|(n, m)| {
        (clique_select_sequence(n, m).unwrap().len(), min_steps(n as u64, m as u64).unwrap() as usize)
    });
    gate.check(
        "6",
        "selection lengths equal the minimum step count",
        lens.iter().all(|(a, b)| a == b),
        format!("(selection, minimum) {lens:?}"),
    );
    let all4 = exhaustive_regular_search(4, 2, 3, SearchTarget::AllInitial).unwrap();
    let all9 = exhaustive_regular_search(9, 3, 5, SearchTarget::AllInitial).unwrap();
    let elapsed = start.elapsed();
    gate.check(
        "6",
        "no shorter regular schedule averages every start, within 60 s",
        all4.shortest.is_none() && all9.shortest.is_none() && elapsed < Duration::from_secs(60),
        format!("searched below 4 and 6 steps, {elapsed:.2?}"),
    );
}

fn criterion_7(gate: &mut Gate) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let two: BTreeSet<u64> = [2].into();
    for n in [3usize, 10] {
        let mut subset_ok = true;
        let mut never = true;
        for _ in 0..100 {
            let seq = CliqueSequence::new(n, random_regular_sequence(&mut rng, n, 2, 30));
            let traj = run_sequence(&seq.transitions().unwrap(), e1(n)).unwrap();
            subset_ok &= rational_audit(&traj).iter().all(|s| s.primes.is_subset(&two) && s.residual.is_none());
            never &= consensus_time(&traj).is_none();
        }
        gate.check(
            "7",
            &format!("pair gossip on {n} nodes keeps denominators powers of 2"),
            subset_ok && never,
            format!("prime sets within {{2}}: {subset_ok}, consensus never reached: {never}"),
        );
    }
}

fn criterion_8(gate: &mut Gate) {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut connected = 0;
    let mut convergent = 0;
    let mut at_mean = 0;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let cov = random_coverage(&mut rng, 12, 4);
        connected += usize::from(line_graph(&cov).is_connected());
        let t = averaging(&cov);
        let sched = Schedule::one_pass(cov.len()).unwrap();
        let f = period_matrix(&sched, &t).unwrap();
        convergent += usize::from(check_convergence(&f, &t, 1e-9).unwrap().convergent());
        let x0: Vec<f64> = (0..cov.node_count()).map(|_| rng.gen::<f64>()).collect();
        let mean = x0.iter().sum::<f64>() / x0.len() as f64;
        let traj = run(&sched, &t, x0, 200 * sched.period()).unwrap();
        let dev = traj.last().iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
        worst = worst.max(dev);
        at_mean += usize::from(dev <= LIMIT_TOL);
    }
    gate.check(
        "8",
        "random coverages: connected line graphs, convergent periods, limit at the mean",
        connected == 100 && convergent == 100 && at_mean == 100,
        format!("connected {connected}/100, convergent {convergent}/100, at mean {at_mean}/100, worst {worst:.1e}"),
    );
}

fn criterion_9(gate: &mut Gate) {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut tested = 0;
    let mut holds = 0;
    while tested < 100 {
        let cov = random_coverage(&mut rng, 12, 4);
        let lg = line_graph(&cov);
        if lg.vertex_count() > 12 || lg.is_complete() || lg.is_odd_cycle() {
            continue;
        }
        tested += 1;
        let chi = chromatic_number(&lg).unwrap();
        let alpha = independence_number(&lg).unwrap();
        let greedy = greedy_classes(&lg);
        let ok = lg.vertex_count() <= chi * alpha
            && chi <= lg.max_degree()
            && greedy.len() >= chi
            && greedy.validate(&lg).is_ok();
        holds += usize::from(ok);
    }
    gate.check("9", "class-count sandwich on 100 random coverages", holds == 100, format!("{holds}/100"));

    let cov = fixture("thirteen_nodes.json");
    let lg = line_graph(&cov);
    let chi = chromatic_number(&lg).unwrap();
    let listed = MultiCliqueCoverage { classes: vec![vec![0, 3, 6], vec![2, 4, 5], vec![1]] };
    let greedy = greedy_classes(&lg);
    gate.check(
        "9",
        "thirteen-node coverage needs exactly three classes",
        chi == 3 && listed.validate(&lg).is_ok() && greedy.len() == 3,
        format!("chromatic {chi}, greedy {}", greedy.len()),
    );
}

fn criterion_10(gate: &mut Gate) {
    let h = DMatrix::from_row_slice(4, 3, &[1.0, 2.0, 0.0, 0.0, 1.0, -1.0, 3.0, 0.0, 1.0, 1.0, 1.0, 1.0]);
    let truth = DVector::from_row_slice(&[0.5, -1.0, 2.0]);
    let z = &h * &truth;
    let cov = fixture("solver_four_nodes.json");
    let rows: BTreeMap<usize, DVector<f64>> = (0..4).map(|i| (i, h.row(i).transpose())).collect();
    let t: Vec<TransitionMatrix> = cov
        .cliques()
        .iter()
        .map(|c| {
            let member_rows = c.members().iter().map(|&i| (i, rows[&i].clone())).collect();
            block_transition(c, &solver_blocks(c, &member_rows).unwrap(), 4, 3).unwrap()
        })
        .collect();
    let mut x0 = Vec::with_capacity(12);
    for i in 0..4 {
        let hi = &rows[&i];
        x0.extend((hi * (z[i] / hi.norm_squared())).iter().copied());
    }
    let sched = Schedule::one_pass(cov.len()).unwrap();
    let traj = run(&sched, &t, x0, 10_000).unwrap();
    let reached = traj.states.iter().position(|x| {
        x.chunks(3).all(|xi| xi.iter().zip(truth.iter()).all(|(a, b)| (a - b).abs() <= SOLVER_TOL))
    });
    let spectrum_ok = eigenvalues(&period_matrix(&sched, &t).unwrap().matrix).is_ok();
    gate.check(
        "10",
        "distributed solver reaches the unique solution",
        reached.is_some() && spectrum_ok,
        format!("within {SOLVER_TOL:e} at step {reached:?}"),
    );
}

fn main() -> ExitCode {
    let mut gate = Gate { failed: Vec::new() };
    criterion_1(&mut gate);
    criterion_2(&mut gate);
    criterion_3(&mut gate);
    criterion_4(&mut gate);
    criterion_5(&mut gate);
    criterion_6(&mut gate);
    criterion_7(&mut gate);
    criterion_8(&mut gate);
    criterion_9(&mut gate);
    criterion_10(&mut gate);
    if gate.failed.is_empty() {
        println!("acceptance: all criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {} failing: {}", gate.failed.len(), gate.failed.join("; "));
        ExitCode::FAILURE
    }
}
