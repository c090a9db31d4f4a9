use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use rfc_core::audit::{worst_case_violation, AuditError, AuditReport, Clustering};
use rfc_core::instance::{load_csv, CsvSpec, Instance, Normalization, ProportionBounds};
use rfc_core::lp::{build_lp, DEFAULT_TOL};
use rfc_core::noise::{auto_bounds, derive, ErrorModel, ErrorModelSpec, NoiseParams};
use rfc_core::rounding::build_network;
use rfc_core::solver::{robust_solve, Selection, SolveError, SolveOptions};
use rfc_core::sweep::{parse_grid, run_sweep, write_csv, SweepConfig};
use rfc_core::{CenterPolicy, Execution};

const SCHEMA_VERSION: u32 = 1;

const EXIT_ERROR: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_USAGE: u8 = 64;
const EXIT_DATA: u8 = 65;

#[derive(Parser, Debug)]
#[command(name = "rfc", version, about = "Robust fair k-center clustering under label noise")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Cluster a CSV and write the result as JSON.
    Solve(SolveArgs),
    /// Audit an existing assignment for worst-case unfairness.
    Audit(AuditArgs),
    /// Sweep the noise level and write one CSV row per level and algorithm.
    Sweep(SweepArgs),
}

#[derive(Args, Debug)]
struct DataArgs {
    #[arg(long)]
    input: PathBuf,
    /// Comma-separated feature column names.
    #[arg(long, value_delimiter = ',', required = true)]
    features: Vec<String>,
    #[arg(long)]
    group: String,
    #[arg(long)]
    k: usize,
    #[arg(long, value_enum, default_value_t = NormalizeArg::Minmax)]
    normalize: NormalizeArg,
}

#[derive(Args, Debug)]
struct NoiseArgs {
    /// Error model; omit for noise-free labels.
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    #[arg(long)]
    m: Option<i64>,
    /// Pairwise error matrix as JSON, e.g. [[0,1],[2,0]].
    #[arg(long = "M")]
    pairwise: Option<String>,
    /// `auto` or `l1:u1,l2:u2,...` in group first-appearance order.
    #[arg(long, default_value = "auto")]
    bounds: String,
    #[arg(long, default_value_t = 0.0)]
    slack: f64,
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    noise: NoiseArgs,
    /// Visit points in a seeded random order when picking centers.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    linear_scan: bool,
    /// Return the solution at the smallest feasible radius rather than the
    /// cheapest one found during the search.
    #[arg(long)]
    smallest_radius: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Include wall-clock timings in the output.
    #[arg(long)]
    timings: bool,
    /// Write the final LP in CPLEX LP format.
    #[arg(long)]
    dump_lp: Option<PathBuf>,
    /// Write the rounding network in Graphviz format.
    #[arg(long)]
    dump_dot: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AuditArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    noise: NoiseArgs,
    /// JSON with `centers` and `assignment` (a solve result works as is).
    #[arg(long)]
    assignment: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    data: DataArgs,
    /// `auto` derives fixed bounds from the largest fraction.
    #[arg(long, default_value = "auto")]
    bounds: String,
    #[arg(long, default_value_t = 0.0)]
    slack: f64,
    /// Noise fractions as `start:stop:steps`.
    #[arg(long = "m-frac")]
    m_frac: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    linear_scan: bool,
    /// Return the solution at the smallest feasible radius rather than the
    /// cheapest one found during the search.
    #[arg(long)]
    smallest_radius: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModelArg {
    Bae,
    Bpe,
    Bape,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum NormalizeArg {
    Minmax,
    None,
}

/// Errors that map to a specific exit status.
#[derive(Debug)]
enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
    Infeasible(anyhow::Error),
    Other(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

#[derive(Serialize)]
struct Timings {
    load_ms: f64,
    solve_ms: f64,
    audit_ms: f64,
}

#[derive(Serialize, Deserialize)]
struct BoundsOut {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Serialize)]
struct SolveOutput {
    schema_version: u32,
    radius: f64,
    found_radius: f64,
    search_radius: f64,
    num_centers: usize,
    centers: Vec<usize>,
    assignment: Vec<usize>,
    lambda: f64,
    bound_2_over_m_out: Option<f64>,
    groups: Vec<String>,
    bounds: BoundsOut,
    inflow: Vec<usize>,
    outflow: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    timings: Option<Timings>,
}

#[derive(Serialize)]
struct AuditOutput<'a> {
    schema_version: u32,
    #[serde(flatten)]
    report: &'a AuditReport,
}

#[derive(Deserialize)]
struct AssignmentInput {
    #[serde(default)]
    centers: Option<Vec<usize>>,
    assignment: Vec<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Solve(a) => cmd_solve(&a),
        Command::Audit(a) => cmd_audit(&a),
        Command::Sweep(a) => cmd_sweep(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (code, e) = match f {
                Failure::Usage(e) => (EXIT_USAGE, e),
                Failure::Data(e) => (EXIT_DATA, e),
                Failure::Infeasible(e) => (EXIT_INFEASIBLE, e),
                Failure::Other(e) => (EXIT_ERROR, e),
            };
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}

fn tolerance() -> Result<f64, Failure> {
    match std::env::var("RFC_TOL") {
        Ok(v) => v
            .parse::<f64>()
            .ok()
            .filter(|t| t.is_finite() && *t > 0.0)
            .ok_or_else(|| Failure::Usage(anyhow!("RFC_TOL must be a positive number, got {v:?}"))),
        Err(_) => Ok(DEFAULT_TOL),
    }
}

fn load(data: &DataArgs) -> Result<Instance, Failure> {
    let cols: Vec<&str> = data.features.iter().map(String::as_str).collect();
    let mut spec = CsvSpec::new(&cols, &data.group, data.k);
    spec.normalization = match data.normalize {
        NormalizeArg::Minmax => Normalization::MinMax,
        NormalizeArg::None => Normalization::None,
    };
    load_csv(&data.input, &spec)
        .with_context(|| format!("loading {}", data.input.display()))
        .map_err(Failure::Data)
}

fn noise(inst: &Instance, args: &NoiseArgs) -> Result<NoiseParams, Failure> {
    let sizes = inst.groups().sizes();
    let Some(model) = args.model else {
        if args.m.is_some() || args.pairwise.is_some() {
            return Err(Failure::Usage(anyhow!("--m and --M need --model")));
        }
        return Ok(NoiseParams::zero(sizes));
    };
    let pairwise = args
        .pairwise
        .as_deref()
        .map(serde_json::from_str::<Vec<Vec<i64>>>)
        .transpose()
        .context("parsing --M")
        .map_err(Failure::Usage)?;
    let spec = ErrorModelSpec {
        variant: match model {
            ModelArg::Bae => ErrorModel::Bae,
            ModelArg::Bpe => ErrorModel::Bpe,
            ModelArg::Bape => ErrorModel::Bape,
        },
        m: args.m,
        pairwise,
    };
    derive(&spec, &sizes).map_err(|e| Failure::Usage(e.into()))
}

fn parse_bounds(text: &str, groups: usize) -> Result<Option<ProportionBounds>> {
    if text.trim() == "auto" {
        return Ok(None);
    }
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for part in text.split(',') {
        let (l, u) = part
            .split_once(':')
            .ok_or_else(|| anyhow!("bound {part:?} is not of the form l:u"))?;
        lower.push(l.trim().parse::<f64>().with_context(|| format!("lower bound {l:?}"))?);
        upper.push(u.trim().parse::<f64>().with_context(|| format!("upper bound {u:?}"))?);
    }
    if lower.len() != groups {
        bail!("{} bound pairs given for {groups} groups", lower.len());
    }
    Ok(Some(ProportionBounds::new(lower, upper)?))
}

fn bind_bounds(inst: &mut Instance, text: &str, slack: f64, np: &NoiseParams) -> Result<(), Failure> {
    if slack < 0.0 || !slack.is_finite() {
        return Err(Failure::Usage(anyhow!("--slack must be nonnegative")));
    }
    let bounds = match parse_bounds(text, inst.group_count()).map_err(Failure::Usage)? {
        Some(b) => b,
        None => auto_bounds(inst, np, slack).map_err(|e| Failure::Infeasible(e.into()))?,
    };
    inst.set_bounds(bounds).map_err(|e| Failure::Usage(e.into()))
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    let mut out = open_out(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn selection(smallest_radius: bool) -> Selection {
    if smallest_radius {
        Selection::SmallestRadius
    } else {
        Selection::LowestCost
    }
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

fn cmd_solve(args: &SolveArgs) -> Result<(), Failure> {
    let tol = tolerance()?;
    let t0 = Instant::now();
    let mut inst = load(&args.data)?;
    let np = noise(&inst, &args.noise)?;
    bind_bounds(&mut inst, &args.noise.bounds, args.noise.slack, &np)?;
    let load_ms = ms(t0);

    let opts = SolveOptions {
        policy: args.seed.map_or(CenterPolicy::LowestId, CenterPolicy::Random),
        selection: selection(args.smallest_radius),
        linear_scan: args.linear_scan,
        tol,
        retain_trace: (args.dump_lp.is_some() || args.dump_dot.is_some()).then_some(true),
    };
    let t1 = Instant::now();
    let sol = robust_solve(&inst, &np, &opts).map_err(|e| match e {
        SolveError::Infeasible => Failure::Infeasible(e.into()),
        SolveError::Inconsistent(_) => Failure::Usage(e.into()),
        other => Failure::Other(other.into()),
    })?;
    let solve_ms = ms(t1);

    if let Some(frac) = &sol.fractional_trace {
        if let Some(path) = &args.dump_lp {
            let model = build_lp(&inst, &np, &frac.centers, sol.found_radius).map_err(|e| anyhow!(e))?;
            let mut out = open_out(Some(path))?;
            model.write_lp(&mut out).context("writing LP dump")?;
            out.flush().context("writing LP dump")?;
        }
        if let Some(path) = &args.dump_dot {
            let net = build_network(frac, &inst).map_err(|e| anyhow!(e))?;
            let mut out = open_out(Some(path))?;
            net.write_dot(&mut out).context("writing DOT dump")?;
            out.flush().context("writing DOT dump")?;
        }
    }

    let t2 = Instant::now();
    let report = worst_case_violation(&Clustering::from(&sol), &inst, &np).map_err(|e| anyhow!(e))?;
    let audit_ms = ms(t2);
    let bounds = inst.require_bounds().map_err(|e| anyhow!(e))?;
    let output = SolveOutput {
        schema_version: SCHEMA_VERSION,
        radius: sol.cost,
        found_radius: sol.found_radius,
        search_radius: sol.search_radius,
        num_centers: sol.num_centers(),
        centers: sol.centers.clone(),
        assignment: sol.assignment.clone(),
        lambda: report.lambda,
        bound_2_over_m_out: np.violation_bound(),
        groups: inst.groups().names().to_vec(),
        bounds: BoundsOut {
            lower: bounds.lowers().to_vec(),
            upper: bounds.uppers().to_vec(),
        },
        inflow: np.inflow.clone(),
        outflow: np.outflow.clone(),
        timings: args.timings.then_some(Timings {
            load_ms,
            solve_ms,
            audit_ms,
        }),
    };
    write_json(args.out.as_deref(), &output)?;
    Ok(())
}

fn cmd_audit(args: &AuditArgs) -> Result<(), Failure> {
    let mut inst = load(&args.data)?;
    let np = noise(&inst, &args.noise)?;
    bind_bounds(&mut inst, &args.noise.bounds, args.noise.slack, &np)?;
    let text = std::fs::read_to_string(&args.assignment)
        .with_context(|| format!("reading {}", args.assignment.display()))
        .map_err(Failure::Usage)?;
    let input: AssignmentInput = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", args.assignment.display()))
        .map_err(Failure::Usage)?;
    let clustering = match input.centers {
        Some(centers) => Clustering {
            centers,
            assignment: input.assignment,
        },
        None => Clustering::from_assignment(input.assignment),
    };
    let report = worst_case_violation(&clustering, &inst, &np).map_err(|e| match e {
        AuditError::DanglingId { .. }
        | AuditError::UnknownCenter { .. }
        | AuditError::EmptyCluster { .. }
        | AuditError::Shape { .. } => Failure::Data(e.into()),
        other => Failure::Other(other.into()),
    })?;
    write_json(
        args.out.as_deref(),
        &AuditOutput {
            schema_version: SCHEMA_VERSION,
            report: &report,
        },
    )?;
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), Failure> {
    let tol = tolerance()?;
    let mut inst = load(&args.data)?;
    let fractions = parse_grid(&args.m_frac).map_err(|e| Failure::Usage(e.into()))?;
    if let Some(b) = parse_bounds(&args.bounds, inst.group_count()).map_err(Failure::Usage)? {
        inst.set_bounds(b).map_err(|e| Failure::Usage(e.into()))?;
    }
    if args.slack < 0.0 || !args.slack.is_finite() {
        return Err(Failure::Usage(anyhow!("--slack must be nonnegative")));
    }
    let cfg = SweepConfig {
        fractions,
        slack: args.slack,
        solve: SolveOptions {
            policy: args.seed.map_or(CenterPolicy::LowestId, CenterPolicy::Random),
            selection: selection(args.smallest_radius),
            linear_scan: args.linear_scan,
            tol,
            retain_trace: Some(false),
        },
        exec: Execution::available(),
    };
    let rows = run_sweep(&inst, &cfg).map_err(|e| Failure::Infeasible(e.into()))?;
    let out = open_out(args.out.as_deref())?;
    write_csv(&rows, out).map_err(|e| Failure::Other(e.into()))?;
    Ok(())
}
