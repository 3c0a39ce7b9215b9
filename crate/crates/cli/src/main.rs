//! `yann`: generate, validate, compile, evaluate, simulate and benchmark
//! piecewise-affine functions and the networks compiled from them.
//!
//! Exit codes: 0 ok, 1 input error, 2 compilation error, 3 validation failure.

use std::fmt::Display;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use yann::bench::{run_bench, BenchMethod, BenchOptions};
use yann::bigm::{
    compute_big_m_exact_with, compute_big_m_interval_with, resolve_domain, union_bounding_box, BigMBound, BigMMethod,
    MarginPolicy,
};
use yann::compiler::{assemble_checker, assemble_yann, assemble_yann_l, Network};
use yann::generate::{generate_continuous_vector_pwa, generate_max_affine, generate_vector_pwa};
use yann::inference::{forward_batch, forward_structured, BatchMode, Precision};
use yann::pwa::overlapping_pairs;
use yann::sim::{network_controller, simulate_with, LtiSystem, NaiveController, SimOptions, Termination};
use yann::{BoxDomain, Matrix, PwaFunction};

const INPUT: u8 = 1;
const COMPILE: u8 = 2;
const VALIDATION: u8 = 3;

/// An error paired with the exit code it maps to.
struct Failure {
    code: u8,
    err: anyhow::Error,
}

trait Code<T> {
    fn code(self, code: u8) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Code<T> for Result<T, E> {
    fn code(self, code: u8) -> Result<T, Failure> {
        self.map_err(|e| Failure { code, err: e.into() })
    }
}

type Outcome = Result<(), Failure>;

#[derive(Parser)]
#[command(name = "yann", version, about = "Exact networks compiled from piecewise-affine functions")]
struct Cli {
    /// Arithmetic used by network forward passes.
    #[arg(long, global = true, default_value_t = Precision::Fp64)]
    precision: Precision,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a random PWA function to a JSON file.
    Generate(GenerateArgs),
    /// Check a PWA file; `--strict` also looks for overlapping regions.
    Validate(ValidateArgs),
    /// Compile a PWA file into a network JSON file.
    Compile(CompileArgs),
    /// Run a compiled network on one point or a CSV of points.
    Eval(EvalArgs),
    /// Closed-loop simulation of an LTI plant under a PWA or network law.
    Simulate(SimulateArgs),
    /// Time naive evaluation against the compiled network.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum GenKind {
    /// Scalar maximum of affine pieces (continuous).
    MaxAffine,
    /// Independent random affine map per region (discontinuous).
    Vector,
    /// Vector map built on the max-affine function (continuous).
    Continuous,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    seed: u64,
    /// Input dimension.
    #[arg(short = 'n', long)]
    n: usize,
    /// Output dimension (ignored for max-affine).
    #[arg(short = 'm', long, default_value_t = 1)]
    m: usize,
    /// Requested number of pieces; pieces without a region are dropped.
    #[arg(short = 'p', long)]
    p: usize,
    #[arg(long, value_enum, default_value_t = GenKind::MaxAffine)]
    kind: GenKind,
    #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
    lo: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    hi: f64,
    /// Output PWA JSON.
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    pwa: PathBuf,
    /// Run the pairwise interior-overlap LPs (p² problems).
    #[arg(long)]
    strict: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KindArg {
    Yann,
    #[value(name = "yann_l", alias = "yann-l")]
    YannL,
    Checker,
}

#[derive(Clone, Copy, ValueEnum)]
enum BigMArg {
    /// Two LPs per output row per region over the domain.
    Exact,
    /// Interval arithmetic over the domain box.
    Interval,
}

#[derive(Args)]
struct CompileArgs {
    pwa: PathBuf,
    /// Output network JSON.
    #[arg(short, long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = KindArg::Yann)]
    kind: KindArg,
    #[arg(long, value_enum, default_value_t = BigMArg::Exact)]
    bigm: BigMArg,
    /// Multiplier applied to the tight bound.
    #[arg(long, default_value_t = MarginPolicy::default().multiplier)]
    margin: f64,
    /// Constant added after the multiplier.
    #[arg(long, default_value_t = MarginPolicy::default().pad)]
    pad: f64,
}

#[derive(Args)]
struct EvalArgs {
    net: PathBuf,
    /// Comma-separated input point.
    #[arg(short, long, value_delimiter = ',', allow_negative_numbers = true, conflicts_with = "input")]
    x: Option<Vec<f64>>,
    /// CSV of inputs with header x0..x{n-1}.
    #[arg(short, long, requires = "output")]
    input: Option<PathBuf>,
    /// CSV of outputs with header u0..u{m-1},region.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Plant JSON (A, B, C, D and optional boxes).
    system: PathBuf,
    /// Compiled network used as the control law.
    #[arg(long, conflicts_with = "pwa", required_unless_present = "pwa")]
    net: Option<PathBuf>,
    /// PWA law evaluated by the naive scan instead of a network.
    #[arg(long)]
    pwa: Option<PathBuf>,
    /// Comma-separated initial state.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
    x0: Vec<f64>,
    #[arg(long)]
    steps: usize,
    /// Stop with exit 3 at the first constraint violation.
    #[arg(long)]
    strict: bool,
    /// CSV of extra controller inputs, one row per step.
    #[arg(long)]
    extras: Option<PathBuf>,
    /// Trajectory CSV (k,x..,u..,y..,flags).
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    pwa: PathBuf,
    /// Network to time; compiled as YANN with exact M when absent.
    #[arg(long)]
    net: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    points: usize,
    /// Comma-separated subset of naive,dense,structured,batch.
    #[arg(long, value_delimiter = ',', default_values_t = BenchMethod::ALL.to_vec())]
    methods: Vec<BenchMethod>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Draw all queries from the last region.
    #[arg(long)]
    worst_case: bool,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    /// Write the JSON report here as well as printing the table.
    #[arg(long)]
    json: Option<PathBuf>,
}

fn main() -> ExitCode {
    // Usage errors are input errors; clap's own code 2 would collide with
    // compilation failures.
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(INPUT) } else { ExitCode::SUCCESS };
        }
    };
    let prec = cli.precision;
    let res = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Compile(a) => cmd_compile(a),
        Command::Eval(a) => cmd_eval(a, prec),
        Command::Simulate(a) => cmd_simulate(a, prec),
        Command::Bench(a) => cmd_bench(a, prec),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.err);
            ExitCode::from(f.code)
        }
    }
}

fn require_file(p: &Path) -> Outcome {
    if p.is_file() {
        Ok(())
    } else {
        Err(anyhow!("{}: no such file", p.display())).code(INPUT)
    }
}

fn require_writable(p: &Path) -> Outcome {
    match p.parent() {
        Some(d) if !d.as_os_str().is_empty() && !d.is_dir() => {
            Err(anyhow!("{}: directory does not exist", d.display())).code(INPUT)
        }
        _ => Ok(()),
    }
}

fn load_pwa(p: &Path) -> Result<PwaFunction, Failure> {
    PwaFunction::load(p).with_context(|| format!("reading {}", p.display())).code(INPUT)
}

fn load_net(p: &Path) -> Result<Network, Failure> {
    Network::load(p).with_context(|| format!("reading {}", p.display())).code(INPUT)
}

fn list<T: Display>(v: &[T]) -> String {
    let parts: Vec<String> = v.iter().map(ToString::to_string).collect();
    format!("[{}]", parts.join(", "))
}

fn region_label(r: Option<usize>) -> String {
    r.map_or_else(|| "none (out of domain)".to_string(), |k| k.to_string())
}

fn cmd_generate(a: GenerateArgs) -> Outcome {
    require_writable(&a.out)?;
    let dom = BoxDomain::cube(a.n, a.lo, a.hi).code(INPUT)?;
    let f = match a.kind {
        GenKind::MaxAffine => generate_max_affine(a.seed, a.n, a.p, &dom).map(|g| g.function),
        GenKind::Vector => generate_vector_pwa(a.seed, a.n, a.m, a.p, &dom),
        GenKind::Continuous => generate_continuous_vector_pwa(a.seed, a.n, a.m, a.p, &dom),
    }
    .code(INPUT)?;
    f.save(&a.out).code(INPUT)?;
    println!("n={} m={} p={} q={} -> {}", f.n(), f.m(), f.p(), f.q(), a.out.display());
    Ok(())
}

fn cmd_validate(a: ValidateArgs) -> Outcome {
    require_file(&a.pwa)?;
    let f = load_pwa(&a.pwa)?;
    println!("ok: n={} m={} p={} q={}", f.n(), f.m(), f.p(), f.q());
    if a.strict {
        let pairs = overlapping_pairs(&f).code(INPUT)?;
        if !pairs.is_empty() {
            for (i, j) in &pairs {
                println!("overlap: regions {i} and {j}");
            }
            return Err(anyhow!("{} overlapping region pair(s)", pairs.len())).code(VALIDATION);
        }
        println!("no interior overlaps among {} regions", f.p());
    }
    Ok(())
}

fn compile_big_m(f: &PwaFunction, method: BigMArg, policy: MarginPolicy) -> yann::Result<BigMBound> {
    match method {
        BigMArg::Exact => compute_big_m_exact_with(f, &resolve_domain(f, None)?, policy),
        BigMArg::Interval => {
            let dom = match f.domain_box() {
                Some(b) => b.clone(),
                None => union_bounding_box(f)?,
            };
            compute_big_m_interval_with(f, &dom, policy)
        }
    }
}

fn compile_failure(e: yann::Error) -> Failure {
    let err = match e {
        yann::Error::UnboundedDomain => anyhow!(
            "the union of regions is unbounded, so no finite big-M exists; \
             add a \"domain_box\" with \"lo\" and \"hi\" to the PWA file, or compile with --kind yann_l"
        ),
        other => anyhow!(other).context("compilation failed"),
    };
    Failure { code: COMPILE, err }
}

fn cmd_compile(a: CompileArgs) -> Outcome {
    require_file(&a.pwa)?;
    require_writable(&a.out)?;
    let f = load_pwa(&a.pwa)?;
    let policy = MarginPolicy {
        multiplier: a.margin,
        pad: a.pad,
    };
    let net = match a.kind {
        KindArg::Yann => compile_big_m(&f, a.bigm, policy).and_then(|m| assemble_yann(&f, &m)),
        KindArg::YannL => assemble_yann_l(&f),
        KindArg::Checker => assemble_checker(&f),
    }
    .map_err(compile_failure)?;
    net.save(&a.out).code(INPUT)?;

    let mut line = format!("q={} p={} m={}", net.q, net.p, net.m);
    if let Some(m) = &net.big_m {
        line.push_str(&format!(" M={}", m.value));
    }
    println!("{line}");
    println!("kind={} layers={}", net.kind, list(&net.layer_sizes()));
    if let Some(m) = &net.big_m {
        println!(
            "big-M: method={} tight={} margin={} pad={}",
            match m.method {
                BigMMethod::ExactLp => "exact",
                BigMMethod::IntervalBox => "interval",
            },
            m.tight_value,
            m.margin,
            m.pad
        );
    }
    println!("wrote {}", a.out.display());
    Ok(())
}

fn read_points(p: &Path, n: usize) -> anyhow::Result<Matrix> {
    let mut rdr = csv::Reader::from_path(p)?;
    let header = rdr.headers()?.clone();
    if header.len() != n {
        bail!("{}: expected {n} columns x0..x{}, found {}", p.display(), n - 1, header.len());
    }
    let mut data = Vec::new();
    let mut rows = 0;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        for field in rec.iter() {
            let v: f64 = field
                .trim()
                .parse()
                .with_context(|| format!("{}: row {}: bad number {field:?}", p.display(), i + 1))?;
            data.push(v);
        }
        rows += 1;
    }
    Ok(Matrix::from_vec(rows, n, data)?)
}

fn cmd_eval(a: EvalArgs, prec: Precision) -> Outcome {
    require_file(&a.net)?;
    if let Some(p) = &a.input {
        require_file(p)?;
    }
    if let Some(p) = &a.output {
        require_writable(p)?;
    }
    let net = load_net(&a.net)?;
    let mode = if net.structure.is_some() {
        BatchMode::Structured
    } else {
        BatchMode::Dense
    };
    match (&a.x, &a.input) {
        (Some(x), _) => {
            let r = match mode {
                BatchMode::Structured => forward_structured(&net, x, prec),
                BatchMode::Dense => yann::inference::forward_dense(&net, x, prec),
            }
            .code(INPUT)?;
            println!("u={} region={}", list(&r.output), region_label(r.region_index));
            Ok(())
        }
        (None, Some(input)) => {
            let out_path = a.output.as_ref().expect("clap enforces --output with --input");
            let xs = read_points(input, net.n).code(INPUT)?;
            let res = forward_batch(&net, &xs, prec, mode).code(INPUT)?;
            write_outputs(out_path, &res.outputs, &res.regions).code(INPUT)?;
            let hit = res.regions.iter().filter(|r| r.is_some()).count();
            println!("{} rows ({hit} in domain) -> {}", xs.rows(), out_path.display());
            Ok(())
        }
        (None, None) => Err(anyhow!("give a point with --x or a CSV with --input")).code(INPUT),
    }
}

fn write_outputs(path: &Path, outputs: &Matrix, regions: &[Option<usize>]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    let mut header: Vec<String> = (0..outputs.cols()).map(|j| format!("u{j}")).collect();
    header.push("region".into());
    w.write_record(&header)?;
    for (i, r) in regions.iter().enumerate() {
        let mut rec: Vec<String> = outputs.row(i).iter().map(ToString::to_string).collect();
        rec.push(r.map_or_else(String::new, |k| k.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn read_extras(p: &Path) -> anyhow::Result<Vec<Vec<f64>>> {
    let mut rdr = csv::Reader::from_path(p)?;
    rdr.records()
        .enumerate()
        .map(|(i, rec)| {
            rec?.iter()
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .with_context(|| format!("{}: row {}: bad number {v:?}", p.display(), i + 1))
                })
                .collect()
        })
        .collect()
}

fn cmd_simulate(a: SimulateArgs, prec: Precision) -> Outcome {
    require_file(&a.system)?;
    for p in a.net.iter().chain(&a.pwa).chain(&a.extras) {
        require_file(p)?;
    }
    if let Some(p) = &a.out {
        require_writable(p)?;
    }
    let sys = LtiSystem::load(&a.system)
        .with_context(|| format!("reading {}", a.system.display()))
        .code(INPUT)?;
    let extras = a.extras.as_deref().map(read_extras).transpose().code(INPUT)?;
    let opts = SimOptions {
        strict: a.strict,
        extras,
    };

    let net;
    let pwa;
    let mut ctrl: Box<dyn yann::sim::Controller> = if let Some(p) = &a.net {
        net = load_net(p)?;
        network_controller(&net, prec).code(INPUT)?
    } else {
        pwa = load_pwa(a.pwa.as_deref().expect("clap requires --net or --pwa"))?;
        Box::new(NaiveController(&pwa))
    };

    let traj = match simulate_with(&sys, ctrl.as_mut(), &a.x0, a.steps, &opts) {
        Ok(t) => t,
        Err(e @ yann::Error::StrictViolation { .. }) => return Err(e).code(VALIDATION),
        Err(e) => return Err(e).code(INPUT),
    };
    if let Some(p) = &a.out {
        traj.write_csv(File::create(p).code(INPUT)?).code(INPUT)?;
    }
    let status = match traj.termination {
        Termination::Completed => "completed".to_string(),
        Termination::Diverged(k) => format!("diverged at step {k}"),
    };
    let last = traj.states.last().map(|s| list(s)).unwrap_or_default();
    println!(
        "steps={} {status} violations={} final_x={last}",
        traj.steps(),
        traj.violations.len()
    );
    Ok(())
}

fn cmd_bench(a: BenchArgs, prec: Precision) -> Outcome {
    require_file(&a.pwa)?;
    if let Some(p) = &a.net {
        require_file(p)?;
    }
    if let Some(p) = &a.json {
        require_writable(p)?;
    }
    let f = load_pwa(&a.pwa)?;
    let net = match &a.net {
        Some(p) => load_net(p)?,
        None => compile_big_m(&f, BigMArg::Exact, MarginPolicy::default())
            .and_then(|m| assemble_yann(&f, &m))
            .map_err(compile_failure)?,
    };
    let opts = BenchOptions {
        n_points: a.points,
        methods: a.methods,
        precision: prec,
        seed: a.seed,
        worst_case: a.worst_case,
        repeats: a.repeats,
        ..BenchOptions::default()
    };
    let report = match run_bench(&f, &net, &opts) {
        Ok(r) => r,
        Err(e @ yann::Error::Mismatch(_)) => return Err(e).code(VALIDATION),
        Err(e) => return Err(e).code(INPUT),
    };
    let mut out = io::stdout().lock();
    write!(out, "{report}").code(INPUT)?;
    if let Some(p) = &a.json {
        std::fs::write(p, report.to_json()).code(INPUT)?;
        writeln!(out, "wrote {}", p.display()).code(INPUT)?;
    }
    Ok(())
}
