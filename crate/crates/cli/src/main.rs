use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use graphr::algorithms::{simulate, AlgoError, Fault, RunOutcome};
use graphr::config::RunConfig;
use graphr::costmodel::tally_costs;
use graphr::format::{has_magic, read_preprocessed, write_preprocessed};
use graphr::graph::{parse_edge_list, Edge, EdgeListGraph};
use graphr::oracle;
use graphr::preprocess::{pad_params, preprocess_edges, OrderedEdgeList};
use graphr::program::Program;
use graphr::report::{write_csv, write_trace_csv, GraphSummary, RunReport};
use graphr::synth;

/// Error carrying the process exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn usage(error: impl Into<anyhow::Error>) -> Self {
        Failure { code: 2, error: error.into() }
    }

    fn internal(error: impl Into<anyhow::Error>) -> Self {
        Failure { code: 3, error: error.into() }
    }
}

type CliResult<T> = Result<T, Failure>;

trait UsageContext<T> {
    fn usage(self, msg: impl FnOnce() -> String) -> CliResult<T>;
}

impl<T, E: Into<anyhow::Error>> UsageContext<T> for Result<T, E> {
    fn usage(self, msg: impl FnOnce() -> String) -> CliResult<T> {
        self.map_err(|e| Failure::usage(e.into().context(msg())))
    }
}

fn algo_failure(e: AlgoError) -> Failure {
    match e {
        AlgoError::Engine(_) => Failure::internal(e),
        _ => Failure::usage(e),
    }
}

#[derive(Parser)]
#[command(name = "graphr", version, about = "ReRAM-crossbar graph accelerator simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Order an edge list into subgraph tiles and write the binary format.
    Preprocess(PreprocessArgs),
    /// Simulate a vertex program and write a JSON report.
    Run(RunArgs),
    /// Simulate and compare against a reference implementation.
    Verify(VerifyArgs),
    /// Tabulate JSON reports as CSV.
    Report(ReportArgs),
    /// Write a uniform random edge list.
    Gen(GenArgs),
}

#[derive(Args)]
struct PreprocessArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long = "C", default_value_t = 8)]
    c: usize,
    #[arg(long = "N", default_value_t = 32)]
    n: usize,
    #[arg(long = "G", default_value_t = 64)]
    g: usize,
    /// Block size; defaults to the whole graph.
    #[arg(long = "B")]
    b: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(short, long)]
    program: Option<Program>,
    /// Edge list or preprocessed binary.
    #[arg(short, long)]
    input: PathBuf,
    /// key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// key = value file of cost constants.
    #[arg(long)]
    cost: Option<PathBuf>,
    #[arg(long = "C")]
    c: Option<usize>,
    #[arg(long = "N")]
    n: Option<usize>,
    #[arg(long = "G")]
    g: Option<usize>,
    #[arg(long = "B")]
    b: Option<usize>,
    /// PageRank damping factor.
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    max_iter: Option<u64>,
    #[arg(long)]
    src: Option<u32>,
    #[arg(long)]
    workers: Option<usize>,
    /// Skip empty subgraphs (on by default).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    skip_empty: Option<bool>,
    #[arg(long)]
    seed: Option<u64>,
    /// Quantize ADC outputs to this many bits.
    #[arg(long)]
    adc_bits: Option<u8>,
    /// SpMV: plain product instead of dividing by source out-degree.
    #[arg(long)]
    no_outdegree_scaling: bool,
    /// SpMV input vector, whitespace-separated; defaults to seeded values in [0, 0.1).
    #[arg(long)]
    x: Option<PathBuf>,
    /// Report path; stdout if absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Per-iteration CSV trace.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Allowed L∞ error for fractional programs (default 1e-3 for PageRank, 2^-12 for SpMV).
    #[arg(long)]
    tol: Option<f64>,
    /// Corrupt programmed cell values, to exercise failure reporting.
    #[arg(long, hide = true)]
    inject_fault: bool,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(short, long, num_args = 0..)]
    input: Vec<PathBuf>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    vertices: usize,
    #[arg(long)]
    density: f64,
    #[arg(long, default_value_t = 15)]
    max_weight: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    output: PathBuf,
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .usage(|| format!("cannot create {}", path.display()))
}

fn open_output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

/// A loaded dataset: the edge list, plus the tile order if the input was
/// already preprocessed.
struct Dataset {
    graph: EdgeListGraph,
    ordered: Option<OrderedEdgeList>,
}

fn load(path: &Path) -> CliResult<Dataset> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .usage(|| format!("cannot read {}", path.display()))?;
    if has_magic(&bytes) {
        let ol = read_preprocessed(bytes.as_slice()).usage(|| format!("reading {}", path.display()))?;
        let graph = EdgeListGraph::new(
            ol.implied_vertices(),
            ol.entries().iter().map(|e| Edge::new(e.src, e.dst, e.weight.raw() as f64)),
            true,
        )
        .map_err(Failure::internal)?;
        Ok(Dataset { graph, ordered: Some(ol) })
    } else {
        let graph = parse_edge_list(BufReader::new(bytes.as_slice()), true)
            .usage(|| format!("parsing {}", path.display()))?;
        Ok(Dataset { graph, ordered: None })
    }
}

fn preprocess(args: &PreprocessArgs) -> CliResult<()> {
    let data = load(&args.input)?;
    let v = data.graph.num_vertices();
    let params = pad_params(v, args.c, args.n, args.g, args.b.unwrap_or(v.max(1))).map_err(Failure::usage)?;
    let ol = preprocess_edges(&data.graph, &params).map_err(Failure::usage)?;
    let mut out = create(&args.output)?;
    write_preprocessed(&ol, &mut out).usage(|| format!("writing {}", args.output.display()))?;
    out.flush().usage(|| format!("writing {}", args.output.display()))?;
    log::info!("{} edges, {} clamped weights, tiling {:?}", ol.len(), ol.clamped_weights(), params);
    Ok(())
}

fn build_config(args: &RunArgs) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &args.config {
        cfg.apply_file(path).map_err(Failure::usage)?;
    }
    if let Some(path) = &args.cost {
        cfg.apply_file(path).map_err(Failure::usage)?;
    }
    if let Some(p) = args.program {
        cfg.program = p;
    }
    cfg.dataset = Some(args.input.clone());
    cfg.c = args.c.or(cfg.c);
    cfg.n = args.n.or(cfg.n);
    cfg.g = args.g.or(cfg.g);
    cfg.b = args.b.or(cfg.b);
    cfg.damping = args.r.unwrap_or(cfg.damping);
    cfg.epsilon = args.eps.unwrap_or(cfg.epsilon);
    cfg.max_iter = args.max_iter.or(cfg.max_iter);
    cfg.source = args.src.unwrap_or(cfg.source);
    cfg.workers = args.workers.unwrap_or(cfg.workers);
    cfg.skip_empty = args.skip_empty.unwrap_or(cfg.skip_empty);
    cfg.seed = args.seed.unwrap_or(cfg.seed);
    cfg.adc_bits = args.adc_bits.or(cfg.adc_bits);
    if args.no_outdegree_scaling {
        cfg.scale_by_outdegree = false;
    }
    cfg.validate().map_err(Failure::usage)?;
    Ok(cfg)
}

fn read_vector(path: &Path) -> CliResult<Vec<f64>> {
    let text = std::fs::read_to_string(path).usage(|| format!("cannot read {}", path.display()))?;
    text.split_whitespace()
        .map(|t| t.parse::<f64>())
        .collect::<Result<_, _>>()
        .usage(|| format!("parsing vector {}", path.display()))
}

struct Simulation {
    cfg: RunConfig,
    graph: EdgeListGraph,
    outcome: RunOutcome,
    x: Option<Vec<f64>>,
}

fn simulate_from(args: &RunArgs, fault: Option<Fault>) -> CliResult<Simulation> {
    let cfg = build_config(args)?;
    let data = load(&args.input)?;
    let v = data.graph.num_vertices();
    let fallback = data.ordered.as_ref().map(|ol| {
        let p = ol.params();
        (p.c, p.n, p.g, p.b)
    });
    let sim = cfg.sim_config(fallback);
    let params = sim.tiling(v).map_err(Failure::usage)?;
    let ol = match data.ordered {
        Some(ol) if *ol.params() == params => ol,
        Some(_) => {
            log::info!("input tiling differs from requested {params:?}; reordering");
            preprocess_edges(&data.graph, &params).map_err(Failure::usage)?
        }
        None => preprocess_edges(&data.graph, &params).map_err(Failure::usage)?,
    };

    let mut req = cfg.program_params();
    req.fault = fault;
    let x = match (cfg.program, &args.x) {
        (Program::Spmv, Some(path)) => Some(read_vector(path)?),
        (Program::Spmv, None) => Some(synth::uniform_vector(v, 0.1, cfg.seed)),
        _ => None,
    };
    req.x.clone_from(&x);
    let outcome = simulate(&ol, v, &req, sim.engine).map_err(algo_failure)?;
    log::info!(
        "{}: {} iterations, converged {}",
        cfg.program,
        outcome.iterations,
        outcome.converged
    );
    Ok(Simulation {
        cfg,
        graph: data.graph,
        outcome,
        x,
    })
}

fn make_report(s: &Simulation, keep_trace: bool) -> CliResult<RunReport> {
    let v = s.graph.num_vertices();
    let summary = GraphSummary {
        vertices: v,
        edges: s.graph.num_edges(),
        density: s.graph.density(),
    };
    let cost = tally_costs(&s.outcome.counters, &s.outcome.params, &s.cfg.cost).map_err(Failure::internal)?;
    Ok(RunReport::new(&s.cfg, summary, &s.outcome, cost, keep_trace))
}

fn run(args: &RunArgs) -> CliResult<()> {
    let sim = simulate_from(args, None)?;
    let report = make_report(&sim, args.trace.is_some())?;
    if let Some(path) = &args.trace {
        write_trace_csv(&sim.outcome.trace, create(path)?).usage(|| format!("writing {}", path.display()))?;
    }
    let mut out = open_output(args.output.as_deref())?;
    serde_json::to_writer_pretty(&mut out, &report).map_err(Failure::internal)?;
    writeln!(out).and_then(|_| out.flush()).usage(|| "writing report".into())?;
    Ok(())
}

/// Returns whether the simulation matched its reference.
fn verify(args: &VerifyArgs) -> CliResult<bool> {
    let fault = args.inject_fault.then_some(Fault::CorruptWeights);
    let sim = simulate_from(&args.run, fault)?;
    let g = &sim.graph;
    let program = sim.cfg.program;
    let got = sim.outcome.values();
    let mut offenders: Vec<(usize, String, f64)> = Vec::new();
    let passed = match program {
        Program::Bfs | Program::Sssp => {
            let want = if program == Program::Bfs {
                oracle::exact_bfs(g, sim.cfg.source)
            } else {
                oracle::exact_sssp(g, sim.cfg.source)
            };
            for (v, (d, w)) in sim.outcome.distances().into_iter().zip(&want).enumerate() {
                if d != *w {
                    let fmt = |x: Option<u64>| x.map_or("unreachable".into(), |x| x.to_string());
                    let gap = match (d, *w) {
                        (Some(a), Some(b)) => a.abs_diff(b) as f64,
                        _ => f64::INFINITY,
                    };
                    offenders.push((v, format!("simulated {} expected {}", fmt(d), fmt(*w)), gap));
                }
            }
            println!("{program}: {} mismatches over {} vertices", offenders.len(), got.len());
            offenders.is_empty()
        }
        Program::PageRank | Program::Spmv => {
            let (want, default_tol) = if program == Program::PageRank {
                let iters = sim.outcome.iterations as usize;
                (oracle::exact_pagerank(g, sim.cfg.damping, iters), 1e-3)
            } else {
                let x = sim.x.as_deref().unwrap_or(&[]);
                (oracle::dense_spmv(g, x, sim.cfg.scale_by_outdegree), 1.0 / 4096.0)
            };
            let tol = args.tol.unwrap_or(default_tol);
            let mut worst = 0.0f64;
            for (v, (a, b)) in got.iter().zip(&want).enumerate() {
                let err = (a - b).abs();
                worst = worst.max(err);
                if err > tol {
                    offenders.push((v, format!("simulated {a:.6} expected {b:.6}"), err));
                }
            }
            println!(
                "{program}: L-inf error {worst:.3e} over {} vertices (tolerance {tol:.3e})",
                got.len()
            );
            offenders.is_empty()
        }
    };
    if !passed {
        offenders.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
        println!("worst offenders:");
        for (v, msg, _) in offenders.iter().take(10) {
            println!("  vertex {v}: {msg}");
        }
    }
    Ok(passed)
}

fn report(args: &ReportArgs) -> CliResult<()> {
    let mut reports = Vec::with_capacity(args.input.len());
    for path in &args.input {
        let f = File::open(path).usage(|| format!("cannot read {}", path.display()))?;
        let r: RunReport =
            serde_json::from_reader(BufReader::new(f)).usage(|| format!("{} is not a run report", path.display()))?;
        reports.push(r);
    }
    let out = open_output(args.output.as_deref())?;
    write_csv(&reports, out).usage(|| "writing CSV".into())
}

fn gen(args: &GenArgs) -> CliResult<()> {
    if !(0.0..=1.0).contains(&args.density) {
        return Err(Failure::usage(anyhow!("density {} must lie in [0, 1]", args.density)));
    }
    let g = synth::uniform_graph(args.vertices, args.density, args.max_weight, args.seed).map_err(Failure::usage)?;
    let mut out = create(&args.output)?;
    let write = |out: &mut BufWriter<File>| -> io::Result<()> {
        writeln!(out, "# uniform random graph: {} vertices, {} edges, seed {}", g.num_vertices(), g.num_edges(), args.seed)?;
        for e in g.edges() {
            writeln!(out, "{} {} {}", e.src, e.dst, e.weight)?;
        }
        out.flush()
    };
    write(&mut out).context("writing edge list").map_err(Failure::usage)
}

fn dispatch(cli: Cli) -> CliResult<u8> {
    match cli.command {
        Command::Preprocess(a) => preprocess(&a).map(|_| 0),
        Command::Run(a) => run(&a).map(|_| 0),
        Command::Verify(a) => verify(&a).map(|ok| if ok { 0 } else { 1 }),
        Command::Report(a) => report(&a).map(|_| 0),
        Command::Gen(a) => gen(&a).map(|_| 0),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GRAPHR_LOG", "warn")).init();
    let cli = Cli::parse();
    match std::panic::catch_unwind(|| dispatch(cli)) {
        Ok(Ok(code)) => ExitCode::from(code),
        Ok(Err(f)) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
        Err(_) => ExitCode::from(3),
    }
}
