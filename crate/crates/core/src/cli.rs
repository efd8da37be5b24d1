//! Command-line front end.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use num_bigint::BigInt;
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::Deserialize;

use crate::graph::{line_graph, validate_coverage, Clique, CliqueCoverage, Graph};
use crate::protocol::{averaging_transition, TransitionMatrix};
use crate::scalar::{format_g17, mean, Scalar};
use crate::scheduler::{
    clique_select_sequence, lattice_schedule, min_steps, multi_factor_schedule, regular_feasibility,
    CliqueSequence, Schedule, ScheduleFile,
};
use crate::sim::{
    consensus_time, error_trajectory, greedy_classes, rational_audit, run, write_trajectory_csv, ClassBounds,
    Trajectory, BRUTE_FORCE_LIMIT,
};
use crate::spectrum::{
    check_convergence, default_tol, period_matrix, rate_from_report, spectra_equal, swap_condition, SpectrumReport,
};

#[derive(Debug, Parser)]
#[command(name = "clique-gossip", version, about = "Clique-gossip averaging: coverages, spectra, schedules, simulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Graph and coverage JSON: {"n": .., "edges": [[i,j],..], "cliques": [[..],..]}
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    /// Write the main output here instead of stdout.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = ModeArg::Float)]
    pub mode: ModeArg,
    /// Seed for random initial vectors.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    /// Tolerance for spectral comparisons (default: 1e-9 relative).
    #[arg(long, global = true)]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Float,
    Rational,
}

#[derive(Debug, clap::Args)]
pub struct ScheduleArgs {
    /// 1-based clique indices in time order, comma separated.
    #[arg(long, value_delimiter = ',', conflicts_with = "schedule_file")]
    pub schedule: Option<Vec<usize>>,
    /// Schedule JSON as written by the `schedule` subcommand.
    #[arg(long)]
    pub schedule_file: Option<PathBuf>,
    /// Use greedy clique classes, one simultaneous step per class.
    #[arg(long, conflicts_with_all = ["schedule", "schedule_file"])]
    pub classes: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a coverage and print its generalized line graph.
    Validate,
    /// Eigenvalues of the period matrix, rate and convergence verdict.
    Spectrum {
        #[command(flatten)]
        sched: ScheduleArgs,
        /// Also classify and test exchanging positions s and s+1.
        #[arg(long)]
        swap: Option<usize>,
    },
    /// Synthesize a finite-time averaging schedule.
    Schedule {
        /// Number of nodes.
        #[arg(long)]
        n: usize,
        /// Clique size for an equal-size schedule.
        #[arg(long, conflicts_with = "factors", required_unless_present = "factors")]
        m: Option<usize>,
        /// Lattice factors r_1,..,r_k with product n.
        #[arg(long, value_delimiter = ',')]
        factors: Option<Vec<usize>>,
        /// Check exact consensus from a seeded random rational vector.
        #[arg(long)]
        verify: bool,
    },
    /// Simulate and write the trajectory as CSV.
    Simulate {
        #[command(flatten)]
        sched: ScheduleArgs,
        /// Number of steps T.
        #[arg(long, default_value_t = 100)]
        steps: usize,
        /// `random`, `e<k>`, `const`, or a comma separated value list.
        #[arg(long, default_value = "random")]
        x0: String,
        /// Report denominator prime sets (rational mode).
        #[arg(long)]
        audit: bool,
    },
    /// Greedy clique classes, exact chromatic and independence numbers.
    Classes,
}

#[derive(Debug)]
pub enum CliError {
    /// Exit code 2.
    Io(String),
    /// Exit code 2.
    Parse(String),
    /// Exit code 1.
    Domain(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Domain(_) => 1,
            CliError::Io(_) | CliError::Parse(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Io(m) | CliError::Parse(m) | CliError::Domain(m) => m,
        }
    }
}

fn domain(e: impl std::fmt::Display) -> CliError {
    CliError::Domain(e.to_string())
}

/// Text printed by a subcommand: `main` goes to `--output` or stdout,
/// `summary` to stdout when `--output` is set and to stderr otherwise.
#[derive(Debug, Default)]
pub struct Report {
    pub main: String,
    pub summary: String,
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let report = dispatch(cli)?;
    match &cli.output {
        Some(path) => {
            fs::write(path, &report.main).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            print!("{}", report.summary);
        }
        None => {
            print!("{}", report.main);
            eprint!("{}", report.summary);
        }
    }
    io::stdout().flush().map_err(|e| CliError::Io(e.to_string()))
}

pub fn dispatch(cli: &Cli) -> Result<Report, CliError> {
    match &cli.command {
        Command::Validate => cmd_validate(cli),
        Command::Spectrum { sched, swap } => cmd_spectrum(cli, sched, *swap),
        Command::Schedule { n, m, factors, verify } => cmd_schedule(cli, *n, *m, factors.as_deref(), *verify),
        Command::Simulate { sched, steps, x0, audit } => cmd_simulate(cli, sched, *steps, x0, *audit),
        Command::Classes => cmd_classes(cli),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InputFile {
    n: usize,
    edges: Vec<[usize; 2]>,
    cliques: Vec<Vec<usize>>,
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Line (1-based) of the `occurrence`-th textual match of edge `{a,b}`.
fn edge_line(text: &str, a: usize, b: usize, occurrence: usize) -> Option<usize> {
    let re = Regex::new(&format!(r"\[\s*(?:{a}\s*,\s*{b}|{b}\s*,\s*{a})\s*\]")).ok()?;
    let from = text.find("\"edges\"").unwrap_or(0);
    let m = re.find_iter(&text[from..]).nth(occurrence)?;
    let m_start = from + m.start();
    Some(text[..m_start].matches('\n').count() + 1)
}

/// Parses an input file into a validated coverage.
pub fn load_coverage(path: &Path) -> Result<CliqueCoverage, CliError> {
    let text = read_text(path)?;
    let input: InputFile = serde_json::from_str(&text)
        .map_err(|e| CliError::Parse(format!("{}: line {}: {e}", path.display(), e.line())))?;
    let mut seen = std::collections::BTreeSet::new();
    for &[a, b] in &input.edges {
        if !seen.insert((a.min(b), a.max(b))) {
            let line = edge_line(&text, a, b, 1).map_or(String::new(), |l| format!("line {l}: "));
            return Err(CliError::Parse(format!("{}: {line}duplicate edge ({a},{b})", path.display())));
        }
    }
    let edges: Vec<(usize, usize)> = input.edges.iter().map(|e| (e[0], e[1])).collect();
    let graph = Graph::new(input.n, &edges).map_err(|e| CliError::Domain(format!("invalid graph: {e}")))?;
    validate_coverage(&graph, &input.cliques).map_err(|e| CliError::Domain(format!("invalid coverage: {e}")))
}

fn load_schedule_file(path: &Path) -> Result<ScheduleFile, CliError> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::Parse(format!("{}: line {}: {e}", path.display(), e.line())))
}

fn require_input(cli: &Cli) -> Result<CliqueCoverage, CliError> {
    let path = cli.input.as_deref().ok_or_else(|| CliError::Parse("--input is required".into()))?;
    load_coverage(path)
}

/// Coverage, transitions (one per schedule index) and schedule.
struct Setup {
    cov: CliqueCoverage,
    transitions: Vec<TransitionMatrix>,
    sched: Schedule,
    one_pass: bool,
}

fn averaging(cov: &CliqueCoverage) -> Result<Vec<TransitionMatrix>, CliError> {
    cov.cliques().iter().map(|c| averaging_transition(c, cov.node_count()).map_err(domain)).collect()
}

fn resolve_setup(cli: &Cli, args: &ScheduleArgs) -> Result<Setup, CliError> {
    if let Some(path) = &args.schedule_file {
        let file = load_schedule_file(path)?;
        let (cov, sched) = match &cli.input {
            Some(input) => {
                let cov = load_coverage(input)?;
                let sched = map_file_onto(&cov, &file)?;
                (cov, sched)
            }
            None => {
                let n = file.cliques.iter().flatten().copied().max().unwrap_or(0);
                let cliques = file
                    .cliques
                    .iter()
                    .map(|c| Clique::from_one_based(c, n).map_err(domain))
                    .collect::<Result<Vec<_>, _>>()?;
                CliqueSequence::new(n, cliques).to_coverage().map_err(domain)?
            }
        };
        let transitions = averaging(&cov)?;
        let one_pass = sched.is_one_pass_of(cov.len());
        return Ok(Setup { cov, transitions, sched, one_pass });
    }
    let cov = require_input(cli)?;
    if args.classes {
        let classes = greedy_classes(&line_graph(&cov));
        let transitions = classes.transitions(&cov).map_err(domain)?;
        let sched = Schedule::one_pass(transitions.len()).map_err(domain)?;
        return Ok(Setup { cov, transitions, sched, one_pass: false });
    }
    let sched = match &args.schedule {
        Some(list) => {
            let s = Schedule::from_one_based(list).map_err(domain)?;
            s.check_indices(cov.len()).map_err(domain)?;
            s
        }
        None => Schedule::one_pass(cov.len()).map_err(domain)?,
    };
    let transitions = averaging(&cov)?;
    let one_pass = sched.is_one_pass_of(cov.len());
    Ok(Setup { cov, transitions, sched, one_pass })
}

fn map_file_onto(cov: &CliqueCoverage, file: &ScheduleFile) -> Result<Schedule, CliError> {
    let mut entries = Vec::with_capacity(file.cliques.len());
    for (step, raw) in file.cliques.iter().enumerate() {
        let c = Clique::from_one_based(raw, cov.node_count()).map_err(domain)?;
        let idx = cov
            .cliques()
            .iter()
            .position(|k| *k == c)
            .ok_or_else(|| CliError::Domain(format!("schedule step {} uses {c}, which is not a coverage clique", step + 1)))?;
        entries.push(idx);
    }
    Schedule::new(entries).map_err(domain)
}

fn cmd_validate(cli: &Cli) -> Result<Report, CliError> {
    let cov = require_input(cli)?;
    let lg = line_graph(&cov);
    let mut out = String::new();
    let _ = writeln!(out, "valid: true");
    let _ = writeln!(out, "nodes: {}", cov.node_count());
    let _ = writeln!(out, "edges: {}", cov.graph().edge_count());
    for (k, c) in cov.cliques().iter().enumerate() {
        let _ = writeln!(out, "C{}: {c}", k + 1);
    }
    let edges: Vec<String> = lg.edges().iter().map(|(a, b)| format!("(C{},C{})", a + 1, b + 1)).collect();
    let _ = writeln!(out, "line graph edges: {}", edges.join(" "));
    let _ = writeln!(out, "line graph connected: {}", lg.is_connected());
    let cyc: Vec<String> = (0..lg.vertex_count()).filter(|&i| lg.in_cycle(i)).map(|i| format!("C{}", i + 1)).collect();
    let _ = writeln!(out, "cliques on cycles: {}", cyc.join(" "));
    Ok(Report { main: out, summary: String::new() })
}

fn cmd_spectrum(cli: &Cli, args: &ScheduleArgs, swap: Option<usize>) -> Result<Report, CliError> {
    let setup = resolve_setup(cli, args)?;
    let f = period_matrix(&setup.sched, &setup.transitions).map_err(domain)?;
    let rep = SpectrumReport::of(&f.matrix).map_err(domain)?;
    let tol = cli.tol.unwrap_or_else(|| default_tol(rep.rho));
    let mut out = String::from("re,im,modulus\n");
    for z in &rep.eigenvalues {
        let _ = writeln!(out, "{},{},{}", format_g17(z.re), format_g17(z.im), format_g17(z.norm()));
    }
    let _ = writeln!(out, "# period: {}", f.period());
    let _ = writeln!(out, "# rho: {}", format_g17(rep.rho));
    match rep.lambda2 {
        Some(l) => {
            let _ = writeln!(out, "# lambda2: {}", format_g17(l));
        }
        None => {
            let _ = writeln!(out, "# lambda2: absent");
        }
    }
    match rate_from_report(&rep, f.period()) {
        Ok(r) => {
            let _ = writeln!(out, "# rate: {}", format_g17(r));
        }
        Err(e) => {
            let _ = writeln!(out, "# rate: undefined ({e})");
        }
    }
    let verdict = check_convergence(&f, &setup.transitions, cli.tol.unwrap_or(1e-9)).map_err(domain)?;
    let _ = writeln!(out, "# convergent: {}", verdict.convergent());
    for failure in &verdict.failures {
        let _ = writeln!(out, "# failed {failure}");
    }
    let _ = writeln!(out, "# fixed space dimension: {}", verdict.fixed_space.ncols());
    if let Some(s) = swap {
        if !setup.one_pass {
            return Err(CliError::Domain("--swap needs a schedule visiting each coverage clique once".into()));
        }
        let lg = line_graph(&setup.cov);
        let cond = swap_condition(&setup.cov, &lg, &setup.sched, s).map_err(domain)?;
        let swapped = crate::scheduler::apply_swap(&setup.sched, s).map_err(domain)?;
        let g = period_matrix(&swapped, &setup.transitions).map_err(domain)?;
        let other = SpectrumReport::of(&g.matrix).map_err(domain)?;
        let equal = spectra_equal(&rep.eigenvalues, &other.eigenvalues, tol);
        let _ = writeln!(out, "# swap {s}: {cond}");
        let _ = writeln!(out, "# spectra equal: {equal}");
    }
    Ok(Report { main: out, summary: String::new() })
}

fn synthesize(n: usize, m: Option<usize>, factors: Option<&[usize]>) -> Result<CliqueSequence, CliError> {
    match (m, factors) {
        (Some(m), _) => {
            if let Err(reason) = regular_feasibility(n as u64, m as u64) {
                return Err(CliError::Domain(format!("(n, m) = ({n}, {m}) infeasible: {reason}")));
            }
            clique_select_sequence(n, m).map_err(domain)
        }
        (None, Some([r1, r2])) => lattice_schedule(n, *r1, *r2).map_err(domain),
        (None, Some(fs)) => multi_factor_schedule(n, fs).map_err(domain),
        (None, None) => Err(CliError::Parse("give --m or --factors".into())),
    }
}

fn cmd_schedule(cli: &Cli, n: usize, m: Option<usize>, factors: Option<&[usize]>, verify: bool) -> Result<Report, CliError> {
    let seq = synthesize(n, m, factors)?;
    let main = serde_json::to_string(&seq.to_file()).map_err(|e| CliError::Io(e.to_string()))? + "\n";
    let mut summary = format!("steps: {}\n", seq.len());
    if let Some(m) = m {
        let bound = min_steps(n as u64, m as u64).map_err(domain)?;
        let _ = writeln!(summary, "minimum steps: {bound}");
    }
    if verify {
        let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
        let x0: Vec<BigRational> = (0..n).map(|_| random_rational(&mut rng)).collect();
        let target = mean(&x0);
        let transitions = seq.transitions().map_err(domain)?;
        let traj = crate::sim::run_sequence(&transitions, x0).map_err(domain)?;
        let ok = traj.last().iter().all(|v| *v == target);
        let _ = writeln!(summary, "verify: {} (consensus value {})", if ok { "pass" } else { "fail" }, target.render());
        if !ok {
            return Err(CliError::Domain(format!("{summary}exact consensus not reached")));
        }
    }
    Ok(Report { main, summary })
}

fn random_rational<R: Rng>(rng: &mut R) -> BigRational {
    BigRational::new(BigInt::from(rng.gen_range(0..1000)), BigInt::from(1000))
}

fn parse_value<S: Scalar>(tok: &str) -> Option<S> {
    let tok = tok.trim();
    match tok.split_once('/') {
        Some((p, q)) => {
            let (p, q) = (p.trim().parse::<i64>().ok()?, q.trim().parse::<i64>().ok()?);
            (q != 0).then(|| S::ratio(p, q))
        }
        None => match tok.parse::<i64>() {
            Ok(v) => Some(S::ratio(v, 1)),
            Err(_) => S::from_coefficient(tok.parse::<f64>().ok()?),
        },
    }
}

/// Initial vector from its command-line description.
pub fn initial_vector<S: Scalar>(choice: &str, dim: usize, seed: u64) -> Result<Vec<S>, CliError> {
    let choice = choice.trim();
    if choice == "random" {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        return Ok((0..dim)
            .map(|_| match S::from_coefficient(0.0) {
                Some(_) => S::from_coefficient(rng.gen::<f64>()).expect("float mode"),
                None => S::ratio(rng.gen_range(0..1000), 1000),
            })
            .collect());
    }
    if choice == "const" {
        return Ok(vec![S::one(); dim]);
    }
    if let Some(k) = choice.strip_prefix('e').and_then(|k| k.parse::<usize>().ok()) {
        if k == 0 || k > dim {
            return Err(CliError::Domain(format!("e{k} needs 1 <= k <= {dim}")));
        }
        let mut x = vec![S::zero(); dim];
        x[k - 1] = S::one();
        return Ok(x);
    }
    let values = choice
        .split(',')
        .map(|t| parse_value::<S>(t).ok_or_else(|| CliError::Parse(format!("bad x0 entry {t:?}"))))
        .collect::<Result<Vec<_>, _>>()?;
    if values.len() != dim {
        return Err(CliError::Domain(format!("x0 has {} entries, expected {dim}", values.len())));
    }
    Ok(values)
}

fn cmd_simulate(cli: &Cli, args: &ScheduleArgs, steps: usize, x0: &str, audit: bool) -> Result<Report, CliError> {
    let setup = resolve_setup(cli, args)?;
    let n = setup.cov.node_count();
    match cli.mode {
        ModeArg::Float => {
            if audit {
                return Err(CliError::Domain("--audit needs --mode rational".into()));
            }
            let x0 = initial_vector::<f64>(x0, n, cli.seed)?;
            let traj = run(&setup.sched, &setup.transitions, x0, steps).map_err(domain)?;
            simulate_report(&traj, None)
        }
        ModeArg::Rational => {
            let x0 = initial_vector::<BigRational>(x0, n, cli.seed)?;
            let traj = run(&setup.sched, &setup.transitions, x0, steps).map_err(domain)?;
            let audit_text = audit.then(|| {
                let mut s = String::new();
                for (t, step) in rational_audit(&traj).iter().enumerate() {
                    let primes: Vec<String> = step.primes.iter().map(|p| p.to_string()).collect();
                    let _ = write!(s, "audit t={t}: {{{}}}", primes.join(","));
                    if let Some(r) = &step.residual {
                        let _ = write!(s, " unfactored {r}");
                    }
                    s.push('\n');
                }
                s
            });
            simulate_report(&traj, audit_text)
        }
    }
}

fn simulate_report<S: Scalar>(traj: &Trajectory<S>, audit: Option<String>) -> Result<Report, CliError> {
    let mut buf = Vec::new();
    write_trajectory_csv(traj, &mut buf).map_err(|e| CliError::Io(e.to_string()))?;
    let main = String::from_utf8(buf).expect("csv is utf-8");
    let mut summary = match consensus_time(traj) {
        Some(t) => format!("consensus: t={t}\n"),
        None => format!("consensus: none within T={}\n", traj.horizon()),
    };
    if let Ok(e) = error_trajectory(traj) {
        let last = e.last().expect("x(0) recorded");
        let _ = writeln!(summary, "final e: {}", format_g17(last.to_f64()));
    }
    if let Some(a) = audit {
        summary.push_str(&a);
    }
    Ok(Report { main, summary })
}

fn cmd_classes(cli: &Cli) -> Result<Report, CliError> {
    let cov = require_input(cli)?;
    let lg = line_graph(&cov);
    let classes = greedy_classes(&lg);
    let bounds = ClassBounds::of(&lg);
    let mut out = String::new();
    for (k, class) in classes.to_one_based().iter().enumerate() {
        let names: Vec<String> = class.iter().map(|i| format!("C{i}")).collect();
        let _ = writeln!(out, "class {}: {{{}}}", k + 1, names.join(","));
    }
    let _ = writeln!(out, "greedy classes: {}", classes.len());
    let _ = writeln!(out, "cliques: {}", bounds.d);
    let _ = writeln!(out, "max degree: {}", bounds.max_degree);
    match (bounds.chi, bounds.alpha) {
        (Some(chi), Some(alpha)) => {
            let _ = writeln!(out, "chromatic number: {chi}");
            let _ = writeln!(out, "independence number: {alpha}");
            let upper = match bounds.special {
                Some(v) => format!("{v} (exact for this shape)"),
                None => bounds.max_degree.to_string(),
            };
            let _ = writeln!(out, "bounds: {}/{} <= {chi} <= {upper}", bounds.d, alpha);
        }
        _ => {
            let _ = writeln!(
                out,
                "exact chromatic and independence numbers skipped: {} cliques exceeds {BRUTE_FORCE_LIMIT}",
                bounds.d
            );
            let upper = bounds.special.unwrap_or(bounds.max_degree);
            let _ = writeln!(out, "bounds: classes <= {}", upper.min(classes.len()));
        }
    }
    Ok(Report { main: out, summary: String::new() })
}
