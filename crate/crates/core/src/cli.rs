//! `otclust` command line.
//!
//! Exit codes: 0 on success, 1 for bad input, 2 when a solver fails to converge. In
//! the last case the final solver state is still written to `state.json`.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::adaptation::{adapt, classify, evaluate, generate_synthetic, LabeledMeasure, SyntheticConfig};
use crate::clustering::{impm, kmeans_pp_seeding, vwc, ClusterConfig, ClusteringResult, Init, Termination};
use crate::error::{Error, Result};
use crate::io;
use crate::measure::{CentroidSet, EmpiricalMeasure};
use crate::vot::{solve_empirical, Mode, SolverConfig};

pub const DEFAULT_SEED: u64 = 7;
const THREADS_VAR: &str = "OTCLUST_THREADS";

#[derive(Debug, Parser)]
#[command(name = "otclust", version, about = "Optimal transport on power diagrams and Wasserstein clustering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Transport an empirical measure onto fixed centroids.
    SolveOt(SolveArgs),
    /// Capacity-constrained clustering (k-means++ seeding or given centroids).
    Cluster(ClusterArgs),
    /// Label a target set by transporting labeled source atoms into it.
    Adapt(AdaptArgs),
    /// Draw the power diagram of centroids and weights over a sample set.
    Render(RenderArgs),
    /// Write the two-class Gaussian source/target pair.
    GenSynthetic(GenArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Newton,
    Gd,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Newton => Mode::Newton,
            ModeArg::Gd => Mode::GradientDescent,
        }
    }
}

#[derive(Debug, Args)]
struct Output {
    /// Output directory (created if missing).
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Width and height of diagram.svg in pixels.
    #[arg(long, default_value_t = 800)]
    svg_size: u32,
    /// Also write the per-iteration trace as trace.csv.
    #[arg(long)]
    trace: bool,
}

#[derive(Debug, Args)]
struct SolverFlags {
    /// Tolerance on max_j |w_j - nu_j|.
    #[arg(long)]
    eps: Option<f64>,
    /// Iteration cap of the transport solver.
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long, value_enum, default_value_t = ModeArg::Gd)]
    mode: ModeArg,
    /// Coordinate count for CSV files without a header row.
    #[arg(long)]
    dim: Option<usize>,
}

impl SolverFlags {
    fn apply(&self, mut config: SolverConfig) -> SolverConfig {
        if let Some(e) = self.eps {
            config.epsilon = e;
        }
        if let Some(n) = self.max_iter {
            config.max_iter = n;
        }
        config
    }
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[arg(long)]
    target: PathBuf,
    #[arg(long)]
    centroids: PathBuf,
    /// `uniform` or a file with one capacity per centroid. Defaults to the
    /// centroid file's capacity column, or uniform.
    #[arg(long)]
    nu: Option<String>,
    #[command(flatten)]
    solver: SolverFlags,
    #[command(flatten)]
    output: Output,
}

#[derive(Debug, Args)]
struct ClusterArgs {
    #[arg(long)]
    target: PathBuf,
    /// Number of clusters for k-means++ seeding.
    #[arg(long, required_unless_present = "centroids", conflicts_with = "centroids")]
    k: Option<usize>,
    /// Initial centroids instead of seeding.
    #[arg(long)]
    centroids: Option<PathBuf>,
    #[arg(long)]
    nu: Option<String>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Cap on centroid updates.
    #[arg(long)]
    outer_max_iter: Option<usize>,
    #[command(flatten)]
    solver: SolverFlags,
    #[command(flatten)]
    output: Output,
}

#[derive(Debug, Args)]
struct AdaptArgs {
    /// Labeled source points (needs a label column).
    #[arg(long)]
    source: PathBuf,
    /// Target points; a label column, if present, is used for scoring.
    #[arg(long)]
    target: PathBuf,
    /// JSON clustering configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverFlags,
    #[command(flatten)]
    output: Output,
}

#[derive(Debug, Args)]
struct RenderArgs {
    #[arg(long)]
    target: PathBuf,
    #[arg(long)]
    centroids: PathBuf,
    /// JSON file with an `h` array (e.g. h.json or result.json); defaults to the
    /// plain Voronoi diagram.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    dim: Option<usize>,
    #[command(flatten)]
    output: Output,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// JSON generator parameters; `--seed` overrides its seed.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let pool = match thread_pool() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let out_dir = cli.command.out_dir().to_path_buf();
    match pool.install(|| dispatch(cli.command)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if let Some(state) = e.solver_state() {
                let path = out_dir.join("state.json");
                let dumped = fs::create_dir_all(&out_dir)
                    .map_err(Error::from)
                    .and_then(|_| io::write_file(&path, &io::to_json(state)?));
                match dumped {
                    Ok(()) => eprintln!("last solver state written to {}", path.display()),
                    Err(e) => eprintln!("error: could not write solver state: {e}"),
                }
            }
            if e.is_solver_failure() {
                2
            } else {
                1
            }
        }
    }
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let threads = match std::env::var(THREADS_VAR) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::InvalidParameter(format!("{THREADS_VAR} must be a thread count, got '{v}'")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot start thread pool: {e}")))
}

impl Command {
    fn out_dir(&self) -> &Path {
        match self {
            Command::SolveOt(a) => &a.output.out,
            Command::Cluster(a) => &a.output.out,
            Command::Adapt(a) => &a.output.out,
            Command::Render(a) => &a.output.out,
            Command::GenSynthetic(a) => &a.out,
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    fs::create_dir_all(command.out_dir())?;
    match command {
        Command::SolveOt(a) => solve_ot(a),
        Command::Cluster(a) => cluster(a),
        Command::Adapt(a) => adapt_cmd(a),
        Command::Render(a) => render(a),
        Command::GenSynthetic(a) => gen_synthetic(a),
    }
}

fn parse_nu(nu: Option<&str>, k: usize) -> Result<Option<Vec<f64>>> {
    match nu {
        None => Ok(None),
        Some("uniform") => Ok(Some(vec![1.0 / k as f64; k])),
        Some(path) => {
            let v = io::read_capacities(Path::new(path))?;
            if v.len() != k {
                return Err(Error::LengthMismatch { expected: k, found: v.len() });
            }
            Ok(Some(v))
        }
    }
}

fn load_centroids(path: &Path, dim: Option<usize>, nu: Option<&str>) -> Result<CentroidSet> {
    let base = io::read_centroids(path, dim, None)?;
    match parse_nu(nu, base.len())? {
        Some(nu) => CentroidSet::new(base.dim(), base.positions().to_vec(), nu),
        None => Ok(base),
    }
}

fn write_diagram(out: &Path, m: &EmpiricalMeasure, y: &CentroidSet, h: &[f64], options: &io::SvgOptions) -> Result<()> {
    if m.dim() != 2 {
        return Ok(());
    }
    let diagram = io::diagram_for(m, y, h)?;
    io::write_file(&out.join("diagram.svg"), &io::render_svg(&diagram, y, Some(m), options)?)
}

#[derive(Serialize)]
struct SolveSummary<'a> {
    mode: String,
    exact: bool,
    iterations: usize,
    energy: f64,
    max_deviation: f64,
    h: &'a [f64],
    w: &'a [f64],
}

fn solve_ot(a: SolveArgs) -> Result<()> {
    let m = io::read_points(&a.target, a.solver.dim)?.measure()?;
    let y = load_centroids(&a.centroids, a.solver.dim.or(Some(m.dim())), a.nu.as_deref())?;
    let config = a.solver.apply(SolverConfig::default());
    let sol = solve_empirical(&m, &y, a.solver.mode.into(), &config, None)?;
    let out = &a.output.out;
    let summary = SolveSummary {
        mode: sol.mode.to_string(),
        exact: sol.exact,
        iterations: sol.iterations,
        energy: sol.energy,
        max_deviation: sol.max_deviation(&y),
        h: &sol.h,
        w: &sol.w,
    };
    io::write_file(&out.join("h.json"), &io::to_json(&summary)?)?;
    if let Some(plan) = &sol.plan {
        io::write_file(&out.join("plan.csv"), &io::plan_csv(plan))?;
    }
    let svg = io::SvgOptions { size: a.output.svg_size, ..Default::default() };
    write_diagram(out, &m, &y, &sol.h, &svg)?;
    if a.output.trace {
        io::write_file(&out.join("trace.csv"), &io::trace_csv(&sol.trace))?;
    }
    println!(
        "solve-ot: {} iterations, max |w - nu| = {:e}, wrote {}",
        sol.iterations,
        summary.max_deviation,
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct ClusterSummary<'a> {
    mode: String,
    iterations: usize,
    termination: Termination,
    objective: f64,
    w2_estimate: f64,
    objective_trace: &'a [f64],
    h: &'a [f64],
    w: &'a [f64],
    capacities: &'a [f64],
}

fn write_cluster_outputs(out: &Path, output: &Output, m: &EmpiricalMeasure, r: &ClusteringResult, mode: Mode, labels: Option<&[usize]>) -> Result<()> {
    let summary = ClusterSummary {
        mode: mode.to_string(),
        iterations: r.iterations,
        termination: r.termination,
        objective: r.objective_trace.last().copied().unwrap_or(0.0),
        w2_estimate: r.w2_estimate,
        objective_trace: &r.objective_trace,
        h: &r.h,
        w: &r.w,
        capacities: r.centroids.capacities(),
    };
    io::write_file(&out.join("result.json"), &io::to_json(&summary)?)?;
    io::write_file(&out.join("centroids.csv"), &io::centroids_csv(&r.centroids, labels))?;
    io::write_file(&out.join("plan.csv"), &io::plan_csv(&r.plan))?;
    let svg = io::SvgOptions { size: output.svg_size, classes: labels.map(<[usize]>::to_vec), ..Default::default() };
    write_diagram(out, m, &r.centroids, &r.h, &svg)?;
    if output.trace {
        io::write_file(&out.join("trace.csv"), &io::objective_csv(&r.objective_trace))?;
    }
    Ok(())
}

fn cluster(a: ClusterArgs) -> Result<()> {
    let m = io::read_points(&a.target, a.solver.dim)?.measure()?;
    let mut config = ClusterConfig { mode: a.solver.mode.into(), ..Default::default() };
    config.solver = a.solver.apply(config.solver);
    if let Some(n) = a.outer_max_iter {
        config.outer_max_iter = n;
    }
    let result = match (&a.centroids, a.k) {
        (Some(path), _) => {
            let y = load_centroids(path, a.solver.dim.or(Some(m.dim())), a.nu.as_deref())?;
            vwc(&m, Init::Centroids(y), &config)?
        }
        (None, Some(k)) => match parse_nu(a.nu.as_deref(), k)? {
            None => vwc(&m, Init::Seeded { k, seed: a.seed }, &config)?,
            Some(nu) => {
                use rand::SeedableRng;
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(a.seed);
                let y0 = CentroidSet::new(m.dim(), kmeans_pp_seeding(&m, k, &mut rng)?, nu)?;
                impm(&m, &y0, &config)?
            }
        },
        (None, None) => return Err(Error::InvalidParameter("give --k or --centroids".into())),
    };
    write_cluster_outputs(&a.output.out, &a.output, &m, &result, config.mode, None)?;
    println!(
        "cluster: {} outer iterations ({:?}), objective {:e}, wrote {}",
        result.iterations,
        result.termination,
        result.objective_trace.last().copied().unwrap_or(0.0),
        a.output.out.display()
    );
    Ok(())
}

fn adapt_cmd(a: AdaptArgs) -> Result<()> {
    let src = io::read_points(&a.source, a.solver.dim)?;
    let source = LabeledMeasure::new(src.measure()?, src.labels()?.to_vec())?;
    let tgt = io::read_points(&a.target, a.solver.dim)?;
    let target = tgt.measure()?;
    let mut config: ClusterConfig = match &a.config {
        Some(path) => serde_json::from_str(&fs::read_to_string(path)?)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?,
        None => ClusterConfig::default(),
    };
    config.mode = a.solver.mode.into();
    config.solver = a.solver.apply(config.solver);
    let model = adapt(&source, &target, &config)?;
    let predicted = classify(&model, &target)?;
    let out = &a.output.out;
    write_cluster_outputs(out, &a.output, &target, &model.clustering, config.mode, Some(&model.labels))?;
    io::write_file(&out.join("predictions.csv"), &io::labels_csv(&predicted))?;
    match &tgt.labels {
        Some(truth) => {
            let report = evaluate(&predicted, truth)?.with_centroids(&model);
            io::write_file(&out.join("report.json"), &io::to_json(&report)?)?;
            let table = report.table("VWC");
            io::write_file(&out.join("report.txt"), &table)?;
            print!("{table}");
        }
        None => println!("adapt: target has no label column, skipped scoring"),
    }
    Ok(())
}

#[derive(serde::Deserialize)]
struct Weights {
    h: Vec<f64>,
}

fn render(a: RenderArgs) -> Result<()> {
    let m = io::read_points(&a.target, a.dim)?.measure()?;
    let y = io::read_centroids(&a.centroids, a.dim.or(Some(m.dim())), None)?;
    let h = match &a.weights {
        Some(path) => {
            let w: Weights = serde_json::from_str(&fs::read_to_string(path)?)
                .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
            w.h
        }
        None => y.voronoi_weights(),
    };
    let diagram = io::diagram_for(&m, &y, &h)?;
    let svg = io::SvgOptions { size: a.output.svg_size, ..Default::default() };
    let path = a.output.out.join("diagram.svg");
    io::write_file(&path, &io::render_svg(&diagram, &y, Some(&m), &svg)?)?;
    println!("render: wrote {}", path.display());
    Ok(())
}

fn gen_synthetic(a: GenArgs) -> Result<()> {
    let mut config: SyntheticConfig = match &a.config {
        Some(path) => serde_json::from_str(&fs::read_to_string(path)?)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?,
        None => SyntheticConfig::default(),
    };
    config.seed = a.seed;
    let (source, target) = generate_synthetic(&config)?;
    io::write_file(&a.out.join("source.csv"), &io::points_csv(&source.measure, Some(&source.labels))?)?;
    io::write_file(&a.out.join("target.csv"), &io::points_csv(&target.measure, Some(&target.labels))?)?;
    println!("gen-synthetic: wrote source.csv and target.csv to {}", a.out.display());
    Ok(())
}
