//! `isored` command-line front end.
//!
//! Vertex ids on the command line and in every file are one-based.
//! Exit status: 0 success, 1 invariant or numerical failure, 2 invalid input.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;

use isored::bench::{self, ExperimentConfig, VerifyTolerances};
use isored::graph::io;
use isored::markov::{band_check, reduced_kernel, simulate_stopped_chain, MarkovChain};
use isored::reduction::{reduced_matrix, reduced_matrix_by_length};
use isored::spectral::lift_eigenvector;
use isored::structural::{compute_depths, find_structural_set};
use isored::update::{GraphDelta, StoredState, UpdateOptions};
use isored::{Error, StructuralSet, WeightedDigraph};

#[derive(Parser)]
#[command(
    name = "isored",
    version,
    about = "Isospectral graph reduction and incremental eigenvector updates"
)]
struct Cli {
    /// RNG seed for simulations, experiments and verification.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Tolerance for comparing loop weights with lambda.
    #[arg(long, global = true, env = "ISORED_TOL", default_value_t = 1e-12)]
    tol: f64,

    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,

    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Table,
}

#[derive(Subcommand)]
enum Command {
    /// Reduced matrix R_S(G, lambda) of a graph.
    Reduce(ReduceArgs),
    /// Lift an eigenvector of the reduced matrix to the whole graph.
    Lift(LiftArgs),
    /// Apply a delta to a stored state and report the update cost.
    Update(UpdateArgs),
    /// Simulate the chain stopped at the structural set.
    Simulate(SimulateArgs),
    /// Cost-savings experiment on random sparse stochastic graphs.
    Bench(BenchArgs),
    /// Run the verification suite.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct SetArgs {
    /// Graph file (edge list or JSON).
    graph: PathBuf,

    /// Structural set as one-based ids, e.g. `1,3`. Found greedily if omitted.
    #[arg(long, value_delimiter = ',')]
    set: Option<Vec<usize>>,

    /// Spectral parameter, `re` or `re,im`.
    #[arg(long, default_value = "1", allow_hyphen_values = true)]
    lambda: String,
}

#[derive(Args)]
struct ReduceArgs {
    #[command(flatten)]
    base: SetArgs,

    /// Only sum branches of this length.
    #[arg(long)]
    length: Option<usize>,
}

#[derive(Args)]
struct LiftArgs {
    #[command(flatten)]
    base: SetArgs,

    /// Reduced eigenvector entries in structural-set order; each entry is
    /// `re` or `re:im`.
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        required = true
    )]
    vector: Vec<String>,
}

#[derive(Args)]
struct UpdateArgs {
    /// Stored state directory.
    #[arg(long, conflicts_with = "graph", required_unless_present = "graph")]
    state: Option<PathBuf>,

    /// Build the state from this column-stochastic graph instead.
    #[arg(long)]
    graph: Option<PathBuf>,

    /// Structural set for `--graph`, one-based.
    #[arg(long, value_delimiter = ',', requires = "graph")]
    set: Option<Vec<usize>>,

    /// Delta file (JSON list of operations).
    #[arg(long)]
    delta: PathBuf,

    /// Save the updated state here.
    #[arg(long)]
    save: Option<PathBuf>,

    /// Iteration budget used by the cost model.
    #[arg(long, default_value_t = 10)]
    ell: usize,

    /// Read `a << b` as `a <= ratio * b`.
    #[arg(long, default_value_t = 0.1)]
    ratio: f64,
}

#[derive(Args)]
struct SimulateArgs {
    /// Graph file.
    graph: PathBuf,

    /// Set of observed states, one-based. Found greedily if omitted.
    #[arg(long, value_delimiter = ',')]
    set: Option<Vec<usize>>,

    #[arg(long, default_value_t = 1_000_000)]
    steps: usize,

    /// Initial state, one-based. Defaults to the first member of the set.
    #[arg(long)]
    start: Option<usize>,

    /// Treat the graph as row-stochastic (weights are p_ij) instead of
    /// column-stochastic.
    #[arg(long)]
    row_stochastic: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 60)]
    n: usize,

    #[arg(long, default_value_t = 2.5)]
    avg_degree: f64,

    /// Operations per delta.
    #[arg(long, default_value_t = 3)]
    p: usize,

    #[arg(long, default_value_t = 10)]
    ell: usize,

    #[arg(long, default_value_t = 50)]
    trials: usize,

    #[arg(long, default_value_t = 0.1)]
    ratio: f64,

    /// Compare every update with a recomputation from scratch.
    #[arg(long)]
    check_equivalence: bool,

    /// Start every delta with an edge that forces a structural-set promotion.
    #[arg(long)]
    force_promotion: bool,

    /// Per-trial CSV series.
    #[arg(long)]
    csv: Option<PathBuf>,

    /// Savings histogram CSV.
    #[arg(long)]
    histogram: Option<PathBuf>,

    #[arg(long, default_value_t = 10)]
    bins: usize,
}

#[derive(Args)]
struct VerifyArgs {
    /// Column-stochastic graph files to check. Without graphs, seeds or a
    /// state the built-in 3-cycle is used.
    graphs: Vec<PathBuf>,

    /// Number of random graphs, seeded `seed, seed+1, ...`.
    #[arg(long, default_value_t = 0)]
    sweep: u64,

    /// Vertex count of the random graphs.
    #[arg(long, default_value_t = 10)]
    n: usize,

    /// Check a stored state against its recomputation.
    #[arg(long)]
    state: Option<PathBuf>,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::IterationFailed { .. }
            | Error::DegenerateRestriction
            | Error::Ambiguous
            | Error::StuckSimulation(_)
            | Error::GenerationFailed(_) => 1,
            _ => 2,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn input(msg: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: msg.into(),
    }
}

/// A rendered report and whether it records a failed invariant.
struct Output {
    text: String,
    failed: Option<String>,
}

impl Output {
    fn ok(text: String) -> Self {
        Self { text, failed: None }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let started = Instant::now();
    let result = run(&cli);
    let elapsed = started.elapsed();
    match result {
        Ok(out) => {
            let mut text = out.text;
            if !text.ends_with('\n') {
                text.push('\n');
            }
            if let Some(path) = &cli.out {
                if let Err(e) = fs::write(path, &text) {
                    eprintln!("error: cannot write {}: {e}", path.display());
                    return ExitCode::from(2);
                }
            } else {
                print!("{text}");
            }
            eprintln!("elapsed: {:.3} s", elapsed.as_secs_f64());
            match out.failed {
                Some(name) => {
                    eprintln!("invariant failed: {name}");
                    ExitCode::from(1)
                }
                None => ExitCode::SUCCESS,
            }
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: &Cli) -> Result<Output, Failure> {
    match &cli.command {
        Command::Reduce(a) => reduce(cli, a),
        Command::Lift(a) => lift(cli, a),
        Command::Update(a) => update(cli, a),
        Command::Simulate(a) => simulate(cli, a),
        Command::Bench(a) => bench_cmd(cli, a),
        Command::Verify(a) => verify(cli, a),
    }
}

fn parse_complex(s: &str, sep: char) -> Result<Complex64, Failure> {
    let bad = || input(format!("cannot parse complex number {s:?}"));
    let mut parts = s.trim().splitn(2, sep);
    let re: f64 = parts.next().unwrap().trim().parse().map_err(|_| bad())?;
    let im: f64 = match parts.next() {
        Some(t) => t.trim().parse().map_err(|_| bad())?,
        None => 0.0,
    };
    Ok(Complex64::new(re, im))
}

fn zero_based(ids: &[usize]) -> Result<Vec<usize>, Failure> {
    ids.iter()
        .map(|&v| {
            v.checked_sub(1)
                .ok_or_else(|| input("vertex ids are one-based"))
        })
        .collect()
}

fn structural(
    graph: &WeightedDigraph,
    set: Option<&[usize]>,
    lambda: Complex64,
    tol: f64,
) -> Result<StructuralSet, Failure> {
    Ok(match set {
        Some(ids) => compute_depths(graph, &zero_based(ids)?, lambda, tol)?,
        None => find_structural_set(graph, lambda, tol)?,
    })
}

fn one_based(members: &[usize]) -> Vec<usize> {
    members.iter().map(|v| v + 1).collect()
}

fn pair(z: Complex64) -> [f64; 2] {
    [z.re, z.im]
}

fn fmt_complex(z: Complex64) -> String {
    if z.im == 0.0 {
        format!("{:.6}", z.re)
    } else {
        format!("{:.6}{:+.6}i", z.re, z.im)
    }
}

fn reduce(cli: &Cli, a: &ReduceArgs) -> Result<Output, Failure> {
    let graph = io::read_graph(&a.base.graph)?;
    let lambda = parse_complex(&a.base.lambda, ',')?;
    let s = structural(&graph, a.base.set.as_deref(), lambda, cli.tol)?;
    let entries = match a.length {
        Some(p) => reduced_matrix_by_length(&graph, &s, lambda, p, cli.tol)?,
        None => reduced_matrix(&graph, &s, lambda, cli.tol)?.entries,
    };
    let members = one_based(s.members());
    let text = match cli.format {
        Format::Json => {
            let rows: Vec<Vec<[f64; 2]>> = (0..entries.nrows())
                .map(|r| entries.row(r).iter().map(|&z| pair(z)).collect())
                .collect();
            serde_json::json!({
                "members": members,
                "lambda": pair(lambda),
                "length": a.length,
                "max_depth": s.max_depth(),
                "entries": rows,
            })
            .to_string()
        }
        Format::Table => {
            let mut t = format!("S = {members:?}  lambda = {}\n", fmt_complex(lambda));
            for r in 0..entries.nrows() {
                let row: Vec<String> = entries.row(r).iter().map(|&z| fmt_complex(z)).collect();
                t.push_str(&format!("{:>4} | {}\n", members[r], row.join("  ")));
            }
            t
        }
    };
    Ok(Output::ok(text))
}

fn lift(cli: &Cli, a: &LiftArgs) -> Result<Output, Failure> {
    let graph = io::read_graph(&a.base.graph)?;
    let lambda = parse_complex(&a.base.lambda, ',')?;
    let s = structural(&graph, a.base.set.as_deref(), lambda, cli.tol)?;
    let u_s: Vec<Complex64> = a
        .vector
        .iter()
        .map(|x| parse_complex(x, ':'))
        .collect::<Result<_, _>>()?;
    let pair = lift_eigenvector(&graph, &s, lambda, &u_s, cli.tol)?;
    let text = match cli.format {
        Format::Json => pair.to_json(),
        Format::Table => {
            let mut t = format!(
                "lambda = {}  residual = {:.3e}\n",
                fmt_complex(pair.lambda),
                pair.residual
            );
            for (v, z) in pair.support.iter().zip(&pair.vector) {
                let mark = if s.contains(*v) { "*" } else { " " };
                t.push_str(&format!("{:>4}{mark} {}\n", v + 1, fmt_complex(*z)));
            }
            t
        }
    };
    Ok(Output::ok(text))
}

fn update(cli: &Cli, a: &UpdateArgs) -> Result<Output, Failure> {
    let options = UpdateOptions {
        ell: a.ell,
        ratio: a.ratio,
        lambda_tol: cli.tol,
        ..Default::default()
    };
    let mut state = match (&a.state, &a.graph) {
        (Some(dir), _) => StoredState::load(dir, options)?,
        (None, Some(path)) => {
            let graph = io::read_graph(path)?;
            let set = a.set.as_deref().map(zero_based).transpose()?;
            StoredState::build(graph, set.as_deref(), options)?
        }
        (None, None) => return Err(input("either --state or --graph is required")),
    };
    let delta = GraphDelta::from_json(&read(&a.delta)?)?;
    let outcome = state.apply_delta(&delta)?;
    if let Some(dir) = &a.save {
        state.save(dir)?;
    }
    let text = match cli.format {
        Format::Json => {
            let report: serde_json::Value =
                serde_json::from_str(&outcome.report.to_json()).expect("report is valid JSON");
            serde_json::json!({
                "report": report,
                "promoted": one_based(&outcome.promoted),
                "dropped": one_based(&outcome.dropped),
                "new_vertices": one_based(&outcome.new_vertices),
                "structural_fallback": outcome.structural_fallback,
                "branches_added": outcome.changes.added.len(),
                "branches_deleted": outcome.changes.deleted.len(),
                "branches_reweighted": outcome.changes.reweighted.len(),
                "members": one_based(state.structural().members()),
                "eigenvector": state.eigen().support.iter().zip(state.eigen().real_vector())
                    .map(|(v, x)| (v + 1, x)).collect::<Vec<_>>(),
            })
            .to_string()
        }
        Format::Table => {
            let mut t = outcome.report.to_table();
            t.push_str(&format!(
                "promoted {:?}  dropped {:?}  new vertices {:?}\n",
                one_based(&outcome.promoted),
                one_based(&outcome.dropped),
                one_based(&outcome.new_vertices)
            ));
            t.push_str(&format!(
                "branches added {} deleted {} reweighted {}\n",
                outcome.changes.added.len(),
                outcome.changes.deleted.len(),
                outcome.changes.reweighted.len()
            ));
            t
        }
    };
    Ok(Output::ok(text))
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| input(format!("cannot read {}: {e}", path.display())))
}

fn simulate(cli: &Cli, a: &SimulateArgs) -> Result<Output, Failure> {
    let graph = io::read_graph(&a.graph)?;
    let chain = if a.row_stochastic {
        MarkovChain::from_graph(&graph)?
    } else {
        MarkovChain::from_column_stochastic(&graph)?
    };
    let one = Complex64::new(1.0, 0.0);
    let members = match &a.set {
        Some(ids) => zero_based(ids)?,
        None => find_structural_set(&chain.to_graph(), one, cli.tol)?
            .members()
            .to_vec(),
    };
    let start = match a.start {
        Some(v) => zero_based(&[v])?[0],
        None => *members.first().ok_or_else(|| input("empty set"))?,
    };
    let sample = simulate_stopped_chain(&chain, &members, a.steps, cli.seed, start)?;
    let kernel = reduced_kernel(&chain, &members)?;
    let band = band_check(&sample, &kernel);
    let text = match cli.format {
        Format::Json => {
            let mut doc: serde_json::Value =
                serde_json::from_str(&sample.to_json()).expect("sample is valid JSON");
            let rows: Vec<Vec<f64>> = (0..kernel.nrows())
                .map(|r| kernel.row(r).iter().copied().collect())
                .collect();
            doc["kernel"] = serde_json::json!(rows);
            doc["within_band"] = serde_json::json!(band.within);
            doc["band_entries"] = serde_json::json!(band.entries);
            doc["max_total_variation"] = serde_json::json!(band.max_total_variation);
            doc.to_string()
        }
        Format::Table => {
            let emp = sample.empirical();
            let mut t = format!(
                "states {:?}  steps {}  visits {}\n",
                one_based(&sample.states),
                sample.steps,
                sample.visits.len()
            );
            for r in 0..kernel.nrows() {
                for c in 0..kernel.ncols() {
                    t.push_str(&format!(
                        "{:>4} -> {:<4} kernel {:.6}  empirical {:.6}\n",
                        sample.states[r] + 1,
                        sample.states[c] + 1,
                        kernel[(r, c)],
                        emp[(r, c)]
                    ));
                }
            }
            t.push_str(&format!(
                "within 3-sigma band: {}/{} ({:.1}%)\n",
                band.within,
                band.entries,
                100.0 * band.fraction()
            ));
            t
        }
    };
    Ok(Output::ok(text))
}

fn bench_cmd(cli: &Cli, a: &BenchArgs) -> Result<Output, Failure> {
    let config = ExperimentConfig {
        n: a.n,
        avg_degree: a.avg_degree,
        p: a.p,
        ell: a.ell,
        trials: a.trials,
        seed: cli.seed,
        ratio: a.ratio,
        require_primitive: true,
        check_equivalence: a.check_equivalence,
        force_promotion: a.force_promotion,
    };
    let report = bench::run_experiment(&config)?;
    if let Some(path) = &a.csv {
        fs::write(path, report.to_csv()).map_err(|e| input(e.to_string()))?;
    }
    if let Some(path) = &a.histogram {
        fs::write(path, report.savings_histogram(a.bins)).map_err(|e| input(e.to_string()))?;
    }
    let text = match cli.format {
        Format::Json => report.to_json(),
        Format::Table => report.to_table(),
    };
    let failed =
        (report.summary.equivalence_failures > 0).then(|| "incremental-update".to_string());
    Ok(Output { text, failed })
}

fn verify(cli: &Cli, a: &VerifyArgs) -> Result<Output, Failure> {
    let tol = VerifyTolerances::default();
    let mut graphs = Vec::new();
    for path in &a.graphs {
        graphs.push((path.display().to_string(), io::read_graph(path)?));
    }
    if graphs.is_empty() && a.sweep == 0 && a.state.is_none() {
        graphs.push(("3-cycle".to_string(), bench::three_cycle()));
    }
    let seeds: Vec<u64> = (0..a.sweep).map(|k| cli.seed.wrapping_add(k)).collect();
    let mut report = bench::verify_suite(&graphs, &seeds, a.n, &tol);
    if let Some(dir) = &a.state {
        let options = UpdateOptions {
            lambda_tol: cli.tol,
            ..Default::default()
        };
        let state = StoredState::load(dir, options)?;
        report.checks.push(bench::equivalence_check(
            "stored-state",
            &dir.display().to_string(),
            &state,
            &tol,
        ));
    }
    let failed = report
        .failures()
        .map(|c| format!("{} ({})", c.name, c.subject))
        .collect::<Vec<_>>();
    let text = match cli.format {
        Format::Json => report.to_json(),
        Format::Table => report.to_table(),
    };
    Ok(Output {
        text,
        failed: (!failed.is_empty()).then(|| failed.join(", ")),
    })
}
